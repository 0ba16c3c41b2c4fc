//! Counter-based random number generation.
//!
//! Every random draw in this crate is a pure function of `(seed, purpose
//! tag, stream, index)`. There is no mutable generator state, so any
//! component (ground-truth factors, observation masks, measurement
//! tensors, noise) can be regenerated independently and in any order,
//! which is what makes streaming measurement operators and parallel
//! sweeps reproducible.
//!
//! The word function is the SplitMix64 output mixer applied to a keyed
//! counter; keys are derived by chaining the mixer over the seed and
//! tags.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags keep independent draws from ever sharing a counter stream.
pub mod tag {
    pub const GT_FACTOR_U: u64 = 0x01;
    pub const GT_FACTOR_V: u64 = 0x02;
    pub const GT_FACTOR_W: u64 = 0x03;
    pub const GT_CORE: u64 = 0x04;
    pub const MASK: u64 = 0x05;
    pub const NOISE: u64 = 0x06;
    pub const MEASUREMENT: u64 = 0x07;
    pub const INIT_U: u64 = 0x08;
    pub const INIT_V: u64 = 0x09;
    pub const INIT_W: u64 = 0x0A;
    pub const INIT_CORE: u64 = 0x0B;
    pub const TRIP_TRIAL: u64 = 0x0C;
    pub const PERTURB: u64 = 0x0D;
    pub const TRIAL: u64 = 0x0E;
}

/// A keyed counter stream: draws are indexed, not sequential.
#[derive(Clone, Copy, Debug)]
pub struct Stream {
    key: u64,
}

impl Stream {
    /// Derive a stream from `(seed, purpose, stream id)`.
    pub fn new(seed: u64, purpose: u64, stream: u64) -> Self {
        let k = mix64(seed ^ GOLDEN);
        let k = mix64(k ^ purpose.wrapping_mul(GOLDEN));
        let k = mix64(k ^ stream.wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
        Stream { key: k }
    }

    #[inline]
    pub fn u64_at(&self, index: u64) -> u64 {
        mix64(self.key.wrapping_add(index.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform_at(&self, index: u64) -> f64 {
        (self.u64_at(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller on counter pairs.
    ///
    /// `normal_at(2q)` and `normal_at(2q+1)` share one uniform pair, so
    /// the value at any index is reproducible without generating its
    /// sibling.
    #[inline]
    pub fn normal_at(&self, index: u64) -> f64 {
        let (z0, z1) = self.normal_pair(index >> 1);
        if index & 1 == 0 {
            z0
        } else {
            z1
        }
    }

    /// Both Box-Muller outputs for pair counter `q`; cheaper when filling
    /// buffers sequentially.
    #[inline]
    pub fn normal_pair(&self, q: u64) -> (f64, f64) {
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.u64_at(2 * q) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.u64_at(2 * q + 1) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Fill `buf` with standard normals starting at counter `start`
    /// (counter advances one per element).
    pub fn fill_normal(&self, start: u64, buf: &mut [f64]) {
        let mut i = 0usize;
        let mut idx = start;
        // Align to a pair boundary first.
        if idx & 1 == 1 && i < buf.len() {
            buf[i] = self.normal_at(idx);
            i += 1;
            idx += 1;
        }
        while i + 1 < buf.len() {
            let (z0, z1) = self.normal_pair(idx >> 1);
            buf[i] = z0;
            buf[i + 1] = z1;
            i += 2;
            idx += 2;
        }
        if i < buf.len() {
            buf[i] = self.normal_at(idx);
        }
    }
}

/// Stable 64-bit hash of a byte string, used for config fingerprints.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h = GOLDEN;
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = mix64(h ^ u64::from_le_bytes(word).wrapping_add(GOLDEN));
    }
    mix64(h ^ bytes.len() as u64)
}
