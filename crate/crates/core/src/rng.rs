//! Counter-based random streams.
//!
//! A stream is a `(seed, counter)` pair; output `k` is a SplitMix64 finalizer
//! applied to `seed + k * GAMMA`. Streams for walkers, matrix rows and
//! resampling groups are derived from a master seed and a stable integer id,
//! so results never depend on thread scheduling.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a master seed with a sequence of ids into a fresh seed.
pub fn derive_seed(master: u64, ids: &[u64]) -> u64 {
    let mut s = mix64(master ^ 0x6A09_E667_F3BC_C909);
    for &id in ids {
        s = mix64(s ^ mix64(id.wrapping_mul(GAMMA).wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
    spare: Option<f64>,
}

/// Raw stream state, enough to resume bit-identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
    pub spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            counter: 0,
            spare: None,
        }
    }

    pub fn derive(master: u64, ids: &[u64]) -> Self {
        RngStream::new(derive_seed(master, ids))
    }

    /// Child stream seeded from this stream's next output.
    pub fn split(&mut self) -> Self {
        let s = self.next_u64();
        RngStream::new(mix64(s ^ 0xD1B5_4A32_D192_ED03))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal variate (Marsaglia polar method).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            counter: self.counter,
            spare: self.spare,
        }
    }

    pub fn from_state(state: RngState) -> Self {
        RngStream {
            seed: state.seed,
            counter: state.counter,
            spare: state.spare,
        }
    }
}
