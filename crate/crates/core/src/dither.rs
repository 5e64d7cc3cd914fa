//! Shared-seed dither and (subtractive) dithered quantization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::{Lattice, Vec2};

/// Domain tags keep independent streams apart even under equal seeds.
pub const DOMAIN_DITHER: u64 = 0x6469_7468_6572_0001;
pub const DOMAIN_PRIVATE: u64 = 0x7072_6976_6174_0002;
pub const DOMAIN_TRAINING: u64 = 0x7472_6169_6e00_0003;
pub const DOMAIN_DATA: u64 = 0x6461_7461_0000_0004;
pub const DOMAIN_TEST: u64 = 0x7465_7374_0000_0005;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: the key is derived from `(domain, seed, a, b)` and
/// `c` selects the ChaCha stream, so any coordinate can be regenerated without
/// replaying the others.
pub fn stream(domain: u64, seed: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(domain ^ splitmix64(seed));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b.rotate_left(17));
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        h = splitmix64(h.wrapping_add(i as u64));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(c);
    rng
}

/// Seed and stream coordinates shared between one user and the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedRandomness {
    pub seed: u64,
    pub user: u64,
    pub round: u64,
}

impl SharedRandomness {
    pub fn new(seed: u64, user: u64, round: u64) -> Self {
        SharedRandomness { seed, user, round }
    }

    /// Generator for sub-vector `i`.
    pub fn rng_for(&self, i: u64) -> ChaCha8Rng {
        stream(DOMAIN_DITHER, self.seed, self.user, self.round, i)
    }
}

/// Dither for sub-vector `i`: uniform over the basic cell, a pure function of
/// `(seed, user, round, i)`.
pub fn dither_for(sr: &SharedRandomness, i: u64, lat: &Lattice) -> Vec2 {
    lat.sample_cell_uniform(&mut sr.rng_for(i))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdqOutput {
    pub value: Vec2,
    pub index: u32,
    pub overloaded: bool,
}

/// Non-subtractive dithered quantization `Q(x + d)`.
pub fn dq(lat: &Lattice, x: &[f64], d: &Vec2) -> Result<SdqOutput> {
    let y = [x[0] + d[0], if lat.dimension() == 2 { x[1] + d[1] } else { 0.0 }];
    let q = lat.quantize_clipped(&y)?;
    Ok(SdqOutput { value: q.point, index: q.index, overloaded: q.overloaded })
}

/// Subtractive dithered quantization `Q(x + d) - d`.
pub fn sdq(lat: &Lattice, x: &[f64], d: &Vec2) -> Result<SdqOutput> {
    let mut out = dq(lat, x, d)?;
    out.value[0] -= d[0];
    if lat.dimension() == 2 {
        out.value[1] -= d[1];
    }
    Ok(out)
}
