//! Encode/decode of model updates: scaling, sub-vector split, privacy noise,
//! shared dither, lattice quantization and the reverse path.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dither::{dither_for, stream, SharedRandomness, DOMAIN_PRIVATE};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Vec2};
use crate::privacy::{build_ppn_sampler, MechanismSpec, PpnSampler, SamplerOptions};

/// Header: u16 M, u8 L, u8 R, f64 ζ, u32 overloads (big-endian).
pub const HEADER_LEN: usize = 16;

/// Model update `h = w_local - w_global` of one user in one round.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelUpdate {
    pub h: Vec<f64>,
    pub user: u64,
    pub round: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedUpdate {
    pub indices: Vec<u32>,
    pub zeta: f64,
    pub overloads: u32,
    /// Model dimension `d` (not transmitted; the decoder knows it).
    pub dim: usize,
    pub lattice_dim: u8,
    pub rate: u8,
    pub index_bits: u8,
}

/// Dither source for the codec.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dither {
    Shared(SharedRandomness),
    /// No dither; plain lattice quantization.
    Off,
}

impl Dither {
    fn get(&self, i: u64, lat: &Lattice) -> Vec2 {
        match self {
            Dither::Shared(sr) => dither_for(sr, i, lat),
            Dither::Off => [0.0; 2],
        }
    }
}

pub fn sub_vector_count(d: usize, l: usize) -> usize {
    d.div_ceil(l)
}

/// `ζ = sqrt(M) / (3 |h|)`; `None` for a zero update.
pub fn scale_coefficient(h: &[f64], m: usize) -> Option<f64> {
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| (m as f64).sqrt() / (3.0 * norm))
}

/// Quantizes `ζh` sub-vector by sub-vector after adding the shared dither and,
/// when given, encoder-private noise drawn from `rng`.
///
/// A zero update is sent as ζ=1 with every index pointing at the origin.
pub fn encode<R: Rng + ?Sized>(
    h: &[f64],
    lat: &Lattice,
    ppn: Option<&PpnSampler>,
    dither: &Dither,
    rng: &mut R,
) -> Result<EncodedUpdate> {
    let l = lat.dimension();
    if let Some(s) = ppn {
        if s.dimension() != l {
            return Err(Error::DimensionMismatch { expected: l, got: s.dimension() });
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("model update has non-finite entries".into()));
    }
    let m = sub_vector_count(h.len(), l);
    let mut enc = EncodedUpdate {
        indices: Vec::with_capacity(m),
        zeta: 1.0,
        overloads: 0,
        dim: h.len(),
        lattice_dim: l as u8,
        rate: lat.nominal_rate().min(255) as u8,
        index_bits: lat.index_bits() as u8,
    };
    let Some(zeta) = scale_coefficient(h, m) else {
        let zero = lat.index_of([0, 0]).ok_or(Error::EmptyCodebook)?;
        enc.indices.resize(m, zero);
        return Ok(enc);
    };
    enc.zeta = zeta;
    for i in 0..m {
        let mut x = [0.0; 2];
        for k in 0..l {
            x[k] = h.get(i * l + k).map_or(0.0, |v| zeta * v);
        }
        let d = dither.get(i as u64, lat);
        let n = ppn.map_or([0.0; 2], |s| s.sample(rng));
        let y = [x[0] + d[0] + n[0], x[1] + d[1] + n[1]];
        let q = lat.quantize_clipped(&y)?;
        enc.overloads += q.overloaded as u32;
        enc.indices.push(q.index);
    }
    Ok(enc)
}

/// `h̃_i = ζ⁻¹ (c[index_i] - d_i)`, padding stripped.
pub fn decode(enc: &EncodedUpdate, lat: &Lattice, dither: &Dither) -> Result<Vec<f64>> {
    let l = lat.dimension();
    if enc.lattice_dim as usize != l {
        return Err(Error::DimensionMismatch { expected: l, got: enc.lattice_dim as usize });
    }
    if enc.indices.len() != sub_vector_count(enc.dim, l) {
        return Err(Error::CorruptPayload(format!(
            "{} indices for model dimension {}",
            enc.indices.len(),
            enc.dim
        )));
    }
    let inv = 1.0 / enc.zeta;
    let mut out = Vec::with_capacity(enc.indices.len() * l);
    for (i, &idx) in enc.indices.iter().enumerate() {
        let c = lat
            .point(idx)
            .ok_or_else(|| Error::CorruptPayload(format!("index {idx} outside codebook of {}", lat.codebook_size())))?;
        let d = dither.get(i as u64, lat);
        for k in 0..l {
            out.push(inv * (c[k] - d[k]));
        }
    }
    out.truncate(enc.dim);
    Ok(out)
}

impl EncodedUpdate {
    /// Bits spent on indices.
    pub fn payload_bits(&self) -> usize {
        self.indices.len() * self.index_bits as usize
    }

    /// Header bits (ζ, sizes and the overload counter).
    pub fn overhead_bits(&self) -> usize {
        HEADER_LEN * 8
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let m = u16::try_from(self.indices.len())
            .map_err(|_| Error::Config(format!("{} sub-vectors exceed the u16 header field", self.indices.len())))?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload_bits().div_ceil(8));
        out.extend_from_slice(&m.to_be_bytes());
        out.push(self.lattice_dim);
        out.push(self.rate);
        out.extend_from_slice(&self.zeta.to_be_bytes());
        out.extend_from_slice(&self.overloads.to_be_bytes());
        let width = self.index_bits as u32;
        let mut acc: u64 = 0;
        let mut filled = 0u32;
        for &idx in &self.indices {
            acc = (acc << width) | idx as u64;
            filled += width;
            while filled >= 8 {
                filled -= 8;
                out.push((acc >> filled) as u8);
            }
            acc &= (1u64 << filled) - 1;
        }
        if filled > 0 {
            out.push((acc << (8 - filled)) as u8);
        }
        Ok(out)
    }

    /// Parses the byte layout. `dim` is the model dimension known to the
    /// receiver.
    pub fn from_bytes(bytes: &[u8], lat: &Lattice, dim: usize) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::CorruptPayload(format!("{} bytes is shorter than the header", bytes.len())));
        }
        let m = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
        let l = bytes[2];
        let r = bytes[3];
        let zeta = f64::from_be_bytes(bytes[4..12].try_into().expect("8 bytes"));
        let overloads = u32::from_be_bytes(bytes[12..16].try_into().expect("4 bytes"));
        if l as usize != lat.dimension() || r as u32 != lat.nominal_rate() {
            return Err(Error::CorruptPayload(format!(
                "header L={l} R={r} does not match lattice L={} R={}",
                lat.dimension(),
                lat.nominal_rate()
            )));
        }
        if m != sub_vector_count(dim, l as usize) {
            return Err(Error::CorruptPayload(format!("header M={m} does not match dimension {dim}")));
        }
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::CorruptPayload(format!("invalid scaling coefficient {zeta}")));
        }
        let width = lat.index_bits();
        let body = &bytes[HEADER_LEN..];
        let need = (m * width as usize).div_ceil(8);
        if body.len() != need {
            return Err(Error::CorruptPayload(format!("expected {need} payload bytes, found {}", body.len())));
        }
        let mut indices = Vec::with_capacity(m);
        let mut acc: u64 = 0;
        let mut have = 0u32;
        let mut it = body.iter();
        for _ in 0..m {
            while have < width {
                acc = (acc << 8) | *it.next().expect("length checked") as u64;
                have += 8;
            }
            have -= width;
            let idx = (acc >> have) as u32;
            acc &= (1u64 << have) - 1;
            if idx as usize >= lat.codebook_size() {
                return Err(Error::CorruptPayload(format!("index {idx} outside codebook of {}", lat.codebook_size())));
            }
            indices.push(idx);
        }
        Ok(EncodedUpdate {
            indices,
            zeta,
            overloads,
            dim,
            lattice_dim: l,
            rate: r,
            index_bits: width as u8,
        })
    }
}

fn variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, s) = v.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        return 0.0;
    }
    let mean = s / n as f64;
    v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64
}

/// Mean over users of `var(h)/var(h - h̃)` in dB; `+inf` when any user has
/// zero distortion.
pub fn snr_db(h: &[Vec<f64>], h_tilde: &[Vec<f64>]) -> f64 {
    assert_eq!(h.len(), h_tilde.len(), "snr: mismatched lists");
    if h.is_empty() {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for (a, b) in h.iter().zip(h_tilde) {
        assert_eq!(a.len(), b.len(), "snr: mismatched update lengths");
        let sig = variance(a.iter().copied());
        let dist = variance(a.iter().zip(b).map(|(x, y)| x - y));
        if dist == 0.0 {
            return f64::INFINITY;
        }
        acc += sig / dist;
    }
    10.0 * (acc / h.len() as f64).log10()
}

/// Uplink schemes compared in experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Exact updates.
    Plain,
    /// Subtractive dithered quantization without privacy noise.
    SdqOnly,
    /// Mechanism noise on the scaled update, no quantization.
    PpnOnly,
    /// Mechanism noise, then an independent rescale-and-quantize stage.
    Separate,
    /// Joint scheme: designed noise plus dithered quantization.
    Jopeq,
}

impl Baseline {
    pub const ALL: [Baseline; 5] =
        [Baseline::Plain, Baseline::SdqOnly, Baseline::PpnOnly, Baseline::Separate, Baseline::Jopeq];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Plain => "plain",
            Baseline::SdqOnly => "sdq-only",
            Baseline::PpnOnly => "ppn-only",
            Baseline::Separate => "separate",
            Baseline::Jopeq => "jopeq",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "plain" => Ok(Baseline::Plain),
            "sdq-only" | "sdq" => Ok(Baseline::SdqOnly),
            "ppn-only" | "ppn" => Ok(Baseline::PpnOnly),
            "separate" => Ok(Baseline::Separate),
            "jopeq" => Ok(Baseline::Jopeq),
            other => Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// Result of sending one update through a [`Transport`].
#[derive(Clone, Debug, PartialEq)]
pub struct Transmitted {
    pub h_tilde: Vec<f64>,
    pub overloads: u32,
    pub payload_bits: usize,
}

/// Uplink of one baseline: lattice, mechanism and (for the joint scheme) the
/// PPN sampler.
#[derive(Clone, Debug)]
pub struct Transport {
    pub baseline: Baseline,
    pub lattice: Lattice,
    pub mechanism: MechanismSpec,
    pub sampler: Option<PpnSampler>,
}

impl Transport {
    pub fn new(baseline: Baseline, lattice: Lattice, mechanism: MechanismSpec, opts: &SamplerOptions) -> Result<Self> {
        if mechanism.dim != lattice.dimension() {
            return Err(Error::DimensionMismatch { expected: lattice.dimension(), got: mechanism.dim });
        }
        let sampler = match baseline {
            Baseline::Jopeq => Some(build_ppn_sampler(&mechanism, &lattice, opts)?),
            _ => None,
        };
        Ok(Transport { baseline, lattice, mechanism, sampler })
    }

    /// Sends `h`; dither comes from `shared`, private noise from a stream
    /// keyed by `private_seed` and the shared coordinates.
    pub fn transmit(&self, h: &[f64], shared: SharedRandomness, private_seed: u64) -> Result<Transmitted> {
        let mut rng = stream(DOMAIN_PRIVATE, private_seed, shared.user, shared.round, 0);
        let lat = &self.lattice;
        let dither = Dither::Shared(shared);
        match self.baseline {
            Baseline::Plain => Ok(Transmitted { h_tilde: h.to_vec(), overloads: 0, payload_bits: 64 * h.len() }),
            Baseline::SdqOnly | Baseline::Jopeq => {
                let enc = encode(h, lat, self.sampler.as_ref(), &dither, &mut rng)?;
                let h_tilde = decode(&enc, lat, &dither)?;
                Ok(Transmitted { h_tilde, overloads: enc.overloads, payload_bits: enc.payload_bits() })
            }
            Baseline::PpnOnly => {
                let y = self.privatize(h, &mut rng);
                Ok(Transmitted { h_tilde: y, overloads: 0, payload_bits: 64 * h.len() })
            }
            Baseline::Separate => {
                let y = self.privatize(h, &mut rng);
                let enc = encode(&y, lat, None, &dither, &mut rng)?;
                let h_tilde = decode(&enc, lat, &dither)?;
                Ok(Transmitted { h_tilde, overloads: enc.overloads, payload_bits: enc.payload_bits() })
            }
        }
    }

    /// `h + ζ⁻¹ n` with `n` drawn directly from the mechanism.
    fn privatize<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R) -> Vec<f64> {
        let l = self.lattice.dimension();
        let m = sub_vector_count(h.len(), l);
        let zeta = scale_coefficient(h, m).unwrap_or(1.0);
        let mut out = h.to_vec();
        for i in 0..m {
            let n = self.mechanism.sample_direct(rng);
            for k in 0..l {
                if let Some(v) = out.get_mut(i * l + k) {
                    *v += n[k] / zeta;
                }
            }
        }
        out
    }
}
