//! C ABI over the jopeq lattice codec.
//!
//! Objects are opaque heap handles created by `*_new` and released by
//! `*_free`. Every fallible call returns a [`JopeqStatus`]; on failure the
//! message is available from [`jopeq_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use jopeq::codec::{decode, encode, sub_vector_count, Dither, EncodedUpdate, HEADER_LEN};
use jopeq::dither::{stream, SharedRandomness, DOMAIN_PRIVATE};
use jopeq::lattice::{Lattice, LatticeFamily};
use jopeq::privacy::{build_ppn_sampler, Admission, MechanismSpec, PpnSampler, SamplerOptions};
use jopeq::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JopeqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    CorruptPayload = 4,
    BufferTooSmall = 5,
    Numeric = 6,
    Internal = 7,
}

/// Lattice families.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JopeqFamily {
    Scalar = 0,
    Square = 1,
    Hexagonal = 2,
}

/// Privacy noise added before quantization.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JopeqMechanism {
    /// Quantization only.
    None = 0,
    Laplace = 1,
    MultivariateT = 2,
}

/// How an imperfect noise design is treated.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JopeqAdmission {
    Strict = 0,
    AllowDegenerate = 1,
    BestEffort = 2,
}

/// Opaque lattice quantizer.
pub struct JopeqLattice {
    inner: Lattice,
}

/// Opaque encoder/decoder bound to one lattice and mechanism.
pub struct JopeqCodec {
    lattice: Lattice,
    sampler: Option<PpnSampler>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(err: &Error) -> JopeqStatus {
    match err {
        Error::Config(_) | Error::SingularGenerator | Error::EmptyCodebook | Error::DimensionMismatch { .. } => {
            JopeqStatus::InvalidArgument
        }
        Error::MechanismInfeasible(_) | Error::InfeasibleParameters(_) => JopeqStatus::Infeasible,
        Error::CorruptPayload(_) => JopeqStatus::CorruptPayload,
        Error::Numeric(_) | Error::Divergence { .. } => JopeqStatus::Numeric,
        Error::Io(_) => JopeqStatus::Internal,
    }
}

fn guard<F: FnOnce() -> Result<(), (JopeqStatus, String)>>(f: F) -> JopeqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            JopeqStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            JopeqStatus::Internal
        }
    }
}

fn lift(e: Error) -> (JopeqStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (JopeqStatus, String) {
    (JopeqStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread (empty after success).
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn jopeq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jopeq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a lattice with support radius `gamma` and `rate` bits per
/// coordinate.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn jopeq_lattice_new(
    family: JopeqFamily,
    gamma: f64,
    rate: u32,
    out: *mut *mut JopeqLattice,
) -> JopeqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let fam = match family {
            JopeqFamily::Scalar => LatticeFamily::Scalar,
            JopeqFamily::Square => LatticeFamily::Square,
            JopeqFamily::Hexagonal => LatticeFamily::Hexagonal,
        };
        let inner = Lattice::new(fam, gamma, rate).map_err(lift)?;
        *out = Box::into_raw(Box::new(JopeqLattice { inner }));
        Ok(())
    })
}

/// # Safety
/// `lat` must be null or a handle from [`jopeq_lattice_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jopeq_lattice_free(lat: *mut JopeqLattice) {
    if !lat.is_null() {
        drop(Box::from_raw(lat));
    }
}

/// Sub-vector dimension `L` (0 for a null handle).
///
/// # Safety
/// `lat` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jopeq_lattice_dimension(lat: *const JopeqLattice) -> usize {
    lat.as_ref().map_or(0, |l| l.inner.dimension())
}

/// Number of codewords (0 for a null handle).
///
/// # Safety
/// `lat` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jopeq_lattice_codebook_size(lat: *const JopeqLattice) -> usize {
    lat.as_ref().map_or(0, |l| l.inner.codebook_size())
}

/// Quantizes one `L`-vector to the codebook.
///
/// # Safety
/// `x` and `point` must reference `L` doubles; `index` and `overloaded` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn jopeq_lattice_quantize(
    lat: *const JopeqLattice,
    x: *const f64,
    point: *mut f64,
    index: *mut u32,
    overloaded: *mut u8,
) -> JopeqStatus {
    guard(|| {
        let lat = lat.as_ref().ok_or_else(|| null("lattice"))?;
        if x.is_null() || point.is_null() || index.is_null() || overloaded.is_null() {
            return Err(null("argument"));
        }
        let l = lat.inner.dimension();
        let q = lat.inner.quantize_clipped(slice::from_raw_parts(x, l)).map_err(lift)?;
        slice::from_raw_parts_mut(point, l).copy_from_slice(&q.point[..l]);
        *index = q.index;
        *overloaded = q.overloaded as u8;
        Ok(())
    })
}

/// Builds a codec over a copy of `lat`. With a mechanism other than `None`
/// the privacy noise is designed for the target `epsilon` (and `nu` for t).
///
/// # Safety
/// `lat` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jopeq_codec_new(
    lat: *const JopeqLattice,
    mechanism: JopeqMechanism,
    epsilon: f64,
    nu: f64,
    admission: JopeqAdmission,
    out: *mut *mut JopeqCodec,
) -> JopeqStatus {
    guard(|| {
        let lat = lat.as_ref().ok_or_else(|| null("lattice"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let l = lat.inner.dimension();
        let spec = match mechanism {
            JopeqMechanism::None => None,
            JopeqMechanism::Laplace => Some(MechanismSpec::laplace(epsilon, l).map_err(lift)?),
            JopeqMechanism::MultivariateT => Some(MechanismSpec::multivariate_t(epsilon, l, nu).map_err(lift)?),
        };
        let opts = SamplerOptions::with_admission(match admission {
            JopeqAdmission::Strict => Admission::Strict,
            JopeqAdmission::AllowDegenerate => Admission::AllowDegenerate,
            JopeqAdmission::BestEffort => Admission::BestEffort,
        });
        let sampler = match spec {
            Some(s) => Some(build_ppn_sampler(&s, &lat.inner, &opts).map_err(lift)?),
            None => None,
        };
        *out = Box::into_raw(Box::new(JopeqCodec { lattice: lat.inner.clone(), sampler }));
        Ok(())
    })
}

/// # Safety
/// `codec` must be null or a handle from [`jopeq_codec_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jopeq_codec_free(codec: *mut JopeqCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Exact payload size in bytes for a model of `dim` entries.
///
/// # Safety
/// `codec` must be a live handle and `size` writable.
#[no_mangle]
pub unsafe extern "C" fn jopeq_codec_payload_size(codec: *const JopeqCodec, dim: usize, size: *mut usize) -> JopeqStatus {
    guard(|| {
        let c = codec.as_ref().ok_or_else(|| null("codec"))?;
        if size.is_null() {
            return Err(null("size"));
        }
        let m = sub_vector_count(dim, c.lattice.dimension());
        *size = HEADER_LEN + (m * c.lattice.index_bits() as usize).div_ceil(8);
        Ok(())
    })
}

/// Encodes `h[0..dim]`. The dither is keyed by `(shared_seed, user, round)`
/// and must be reproduced by the decoder; `private_seed` keys the encoder's
/// own noise. When `capacity` is too small nothing is written, `written`
/// receives the required size and `BufferTooSmall` is returned.
///
/// # Safety
/// `h` must reference `dim` doubles, `buf` `capacity` bytes, `written` one
/// `usize`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn jopeq_codec_encode(
    codec: *const JopeqCodec,
    h: *const f64,
    dim: usize,
    shared_seed: u64,
    user: u64,
    round: u64,
    private_seed: u64,
    buf: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> JopeqStatus {
    guard(|| {
        let c = codec.as_ref().ok_or_else(|| null("codec"))?;
        if h.is_null() || written.is_null() || (buf.is_null() && capacity > 0) {
            return Err(null("argument"));
        }
        let h = slice::from_raw_parts(h, dim);
        let dither = Dither::Shared(SharedRandomness::new(shared_seed, user, round));
        let mut rng = stream(DOMAIN_PRIVATE, private_seed, user, round, 0);
        let enc = encode(h, &c.lattice, c.sampler.as_ref(), &dither, &mut rng).map_err(lift)?;
        let bytes = enc.to_bytes().map_err(lift)?;
        *written = bytes.len();
        if bytes.len() > capacity {
            return Err((JopeqStatus::BufferTooSmall, format!("{} bytes needed, {capacity} given", bytes.len())));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// Decodes a payload into `out[0..dim]`.
///
/// # Safety
/// `payload` must reference `len` bytes and `out` `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn jopeq_codec_decode(
    codec: *const JopeqCodec,
    payload: *const u8,
    len: usize,
    dim: usize,
    shared_seed: u64,
    user: u64,
    round: u64,
    out: *mut f64,
) -> JopeqStatus {
    guard(|| {
        let c = codec.as_ref().ok_or_else(|| null("codec"))?;
        if payload.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let enc = EncodedUpdate::from_bytes(slice::from_raw_parts(payload, len), &c.lattice, dim).map_err(lift)?;
        let dither = Dither::Shared(SharedRandomness::new(shared_seed, user, round));
        let h = decode(&enc, &c.lattice, &dither).map_err(lift)?;
        slice::from_raw_parts_mut(out, dim).copy_from_slice(&h);
        Ok(())
    })
}
