use std::ffi::CStr;
use std::ptr;

use jopeq_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(jopeq_last_error()) }.to_string_lossy().into_owned()
}

fn lattice(family: JopeqFamily, gamma: f64, rate: u32) -> *mut JopeqLattice {
    let mut lat = ptr::null_mut();
    let st = unsafe { jopeq_lattice_new(family, gamma, rate, &mut lat) };
    assert_eq!(st, JopeqStatus::Ok, "{}", last_error());
    assert!(!lat.is_null());
    lat
}

fn codec(lat: *const JopeqLattice, mech: JopeqMechanism, eps: f64, adm: JopeqAdmission) -> *mut JopeqCodec {
    let mut c = ptr::null_mut();
    let st = unsafe { jopeq_codec_new(lat, mech, eps, 3.0, adm, &mut c) };
    assert_eq!(st, JopeqStatus::Ok, "{}", last_error());
    c
}

fn encode(c: *const JopeqCodec, h: &[f64], shared: u64) -> Vec<u8> {
    let mut size = 0usize;
    assert_eq!(unsafe { jopeq_codec_payload_size(c, h.len(), &mut size) }, JopeqStatus::Ok);
    let mut buf = vec![0u8; size];
    let mut written = 0usize;
    let st = unsafe { jopeq_codec_encode(c, h.as_ptr(), h.len(), shared, 2, 5, 99, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(st, JopeqStatus::Ok, "{}", last_error());
    assert_eq!(written, size);
    buf
}

fn decode(c: *const JopeqCodec, payload: &[u8], dim: usize, shared: u64) -> Result<Vec<f64>, JopeqStatus> {
    let mut out = vec![0.0; dim];
    let st = unsafe { jopeq_codec_decode(c, payload.as_ptr(), payload.len(), dim, shared, 2, 5, out.as_mut_ptr()) };
    if st == JopeqStatus::Ok {
        Ok(out)
    } else {
        Err(st)
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(jopeq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn scalar_lattice_quantizes_with_clamp() {
    let lat = lattice(JopeqFamily::Scalar, 2.0, 2);
    unsafe {
        assert_eq!(jopeq_lattice_dimension(lat), 1);
        assert_eq!(jopeq_lattice_codebook_size(lat), 5);
        let (mut p, mut idx, mut ov) = (0.0f64, 0u32, 0u8);
        assert_eq!(jopeq_lattice_quantize(lat, &0.6, &mut p, &mut idx, &mut ov), JopeqStatus::Ok);
        assert_eq!((p, ov), (1.0, 0));
        assert_eq!(jopeq_lattice_quantize(lat, &2.5, &mut p, &mut idx, &mut ov), JopeqStatus::Ok);
        assert_eq!((p, ov), (2.0, 1));
        jopeq_lattice_free(lat);
    }
}

#[test]
fn hexagonal_codec_round_trip_without_noise_is_bounded_by_cell() {
    let lat = lattice(JopeqFamily::Hexagonal, 3.0, 4);
    let c = codec(lat, JopeqMechanism::None, 1.0, JopeqAdmission::Strict);
    let h: Vec<f64> = (0..101).map(|i| ((i as f64) * 0.37).sin()).collect();
    let payload = encode(c, &h, 7);
    let back = decode(c, &payload, h.len(), 7).unwrap();
    assert_eq!(back.len(), h.len());
    let err: f64 = h.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err < 0.5 * norm, "relative error {}", err / norm);
    // a different shared seed reconstructs something else
    let wrong = decode(c, &payload, h.len(), 8).unwrap();
    assert_ne!(wrong, back);
    unsafe {
        jopeq_codec_free(c);
        jopeq_lattice_free(lat);
    }
}

#[test]
fn laplace_codec_is_deterministic_in_all_seeds() {
    let lat = lattice(JopeqFamily::Scalar, 9.0, 4);
    let c = codec(lat, JopeqMechanism::Laplace, 1.0, JopeqAdmission::Strict);
    let h: Vec<f64> = (0..64).map(|i| (i as f64 - 31.5) / 10.0).collect();
    let a = encode(c, &h, 3);
    let b = encode(c, &h, 3);
    assert_eq!(a, b);
    assert_eq!(decode(c, &a, h.len(), 3).unwrap(), decode(c, &b, h.len(), 3).unwrap());
    unsafe {
        jopeq_codec_free(c);
        jopeq_lattice_free(lat);
    }
}

#[test]
fn t_mechanism_codec_builds_on_square_lattice() {
    let lat = lattice(JopeqFamily::Square, 209.58, 6);
    let c = codec(lat, JopeqMechanism::MultivariateT, 3.0, JopeqAdmission::BestEffort);
    let h = vec![0.25, -1.0, 0.5];
    let payload = encode(c, &h, 1);
    assert_eq!(decode(c, &payload, 3, 1).unwrap().len(), 3);
    unsafe {
        jopeq_codec_free(c);
        jopeq_lattice_free(lat);
    }
}

#[test]
fn small_buffer_reports_required_size_and_writes_nothing() {
    let lat = lattice(JopeqFamily::Scalar, 2.0, 2);
    let c = codec(lat, JopeqMechanism::None, 1.0, JopeqAdmission::Strict);
    let h = [0.1, 0.2, -0.3];
    let mut buf = [0xAAu8; 4];
    let mut written = 0usize;
    let st = unsafe { jopeq_codec_encode(c, h.as_ptr(), 3, 0, 0, 0, 0, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(st, JopeqStatus::BufferTooSmall);
    assert!(written > buf.len());
    assert_eq!(buf, [0xAA; 4]);
    assert!(last_error().contains("bytes needed"));
    // probing with a null buffer and zero capacity is allowed
    let st = unsafe { jopeq_codec_encode(c, h.as_ptr(), 3, 0, 0, 0, 0, ptr::null_mut(), 0, &mut written) };
    assert_eq!(st, JopeqStatus::BufferTooSmall);
    unsafe {
        jopeq_codec_free(c);
        jopeq_lattice_free(lat);
    }
}

#[test]
fn null_handles_are_rejected() {
    unsafe {
        assert_eq!(jopeq_lattice_new(JopeqFamily::Scalar, 1.0, 1, ptr::null_mut()), JopeqStatus::NullPointer);
        assert!(!last_error().is_empty());
        assert_eq!(jopeq_lattice_dimension(ptr::null()), 0);
        assert_eq!(jopeq_lattice_codebook_size(ptr::null()), 0);
        let mut c = ptr::null_mut();
        assert_eq!(
            jopeq_codec_new(ptr::null(), JopeqMechanism::None, 1.0, 3.0, JopeqAdmission::Strict, &mut c),
            JopeqStatus::NullPointer
        );
        let mut size = 0;
        assert_eq!(jopeq_codec_payload_size(ptr::null(), 4, &mut size), JopeqStatus::NullPointer);
        jopeq_lattice_free(ptr::null_mut());
        jopeq_codec_free(ptr::null_mut());
    }
}

#[test]
fn invalid_parameters_map_to_status_codes() {
    let mut lat = ptr::null_mut();
    unsafe {
        assert_eq!(jopeq_lattice_new(JopeqFamily::Scalar, -1.0, 2, &mut lat), JopeqStatus::InvalidArgument);
        assert!(lat.is_null());
        assert_eq!(jopeq_lattice_new(JopeqFamily::Scalar, 1.0, 0, &mut lat), JopeqStatus::InvalidArgument);
    }
    // quantization noise alone exceeds the Laplace target: 2b^2 < Δ²/12
    let lat = lattice(JopeqFamily::Scalar, 64.0, 1);
    let mut c = ptr::null_mut();
    let st = unsafe { jopeq_codec_new(lat, JopeqMechanism::Laplace, 4.0, 3.0, JopeqAdmission::Strict, &mut c) };
    assert_eq!(st, JopeqStatus::Infeasible, "{}", last_error());
    assert!(c.is_null());
    let st = unsafe { jopeq_codec_new(lat, JopeqMechanism::Laplace, 4.0, 3.0, JopeqAdmission::AllowDegenerate, &mut c) };
    assert_eq!(st, JopeqStatus::Ok, "{}", last_error());
    assert!(last_error().is_empty());
    unsafe {
        jopeq_codec_free(c);
        jopeq_lattice_free(lat);
    }
}

#[test]
fn corrupt_payloads_are_rejected() {
    let lat = lattice(JopeqFamily::Scalar, 2.0, 2);
    let c = codec(lat, JopeqMechanism::None, 1.0, JopeqAdmission::Strict);
    let h = [0.5, -0.25, 1.0, 0.0];
    let payload = encode(c, &h, 0);
    assert_eq!(decode(c, &payload[..payload.len() - 1], 4, 0), Err(JopeqStatus::CorruptPayload));
    assert_eq!(decode(c, &payload[..3], 4, 0), Err(JopeqStatus::CorruptPayload));
    // 3-bit indices; 0b111 is outside a 5-point codebook
    let mut bad = payload.clone();
    bad[16] = 0xFF;
    assert_eq!(decode(c, &bad, 4, 0), Err(JopeqStatus::CorruptPayload));
    unsafe {
        jopeq_codec_free(c);
        jopeq_lattice_free(lat);
    }
}
