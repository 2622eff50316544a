//! Counter-based splittable pseudorandomness.
//!
//! Everything random in this crate is a pure function of explicit integer
//! keys: the environment at a site is `f(env_seed, coords)`, the i-th draw of
//! a walk is `f(walk_key, i)`. No generator state is ever shared between
//! sites, trials, or threads, which is what makes experiment output
//! independent of the thread count and lets an infinite environment exist
//! without storage.

use crate::Scalar;

/// Weyl increment of splitmix64 (golden ratio in 0.64 fixed point).
pub const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer: bijective avalanche mix on 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds labeled parts into one derived key. Absorption is order-sensitive
/// and each round is bijective in the absorbed word, so distinct label
/// tuples map to distinct-looking keys.
pub fn derive_key(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h = mix64(h.wrapping_add(GOLDEN_GAMMA).wrapping_add(p));
    }
    h
}

/// Key for the environment draw at a lattice site. Hot path: fixed arity,
/// same recurrence as [`derive_key`].
#[inline]
pub fn site_key(env_seed: u64, coords: [i64; 3]) -> u64 {
    let mut h = env_seed ^ 0x243f_6a88_85a3_08d3;
    h = mix64(h.wrapping_add(GOLDEN_GAMMA).wrapping_add(coords[0] as u64));
    h = mix64(h.wrapping_add(GOLDEN_GAMMA).wrapping_add(coords[1] as u64));
    h = mix64(h.wrapping_add(GOLDEN_GAMMA).wrapping_add(coords[2] as u64));
    h
}

/// Stream roles under one experiment trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Env,
    Walk1,
    Walk2,
}

impl StreamRole {
    fn label(self) -> u64 {
        match self {
            StreamRole::Env => 0x45,
            StreamRole::Walk1 => 0x57_31,
            StreamRole::Walk2 => 0x57_32,
        }
    }
}

/// Derives the key for one (experiment, trial, role) stream from the master
/// seed. `kind_label` is a stable per-experiment constant.
pub fn trial_key(master_seed: u64, kind_label: u64, trial: u64, role: StreamRole) -> u64 {
    derive_key(master_seed, &[kind_label, trial, role.label()])
}

/// splitmix64 output stream; draw i is `mix64(key + (i+1)*GOLDEN_GAMMA)`,
/// a pure function of (key, i).
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Stream { state: key }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, 1) at the requested scalar width.
    #[inline]
    pub fn next_unit<T: Scalar>(&mut self) -> T {
        T::from_real(self.next_unit_f64())
    }

    /// Standard normal pair (Box-Muller). The rejection-free form keeps the
    /// draw count per call fixed, which makes downstream samplers easy to
    /// reason about when replaying streams.
    pub fn next_normal_pair(&mut self) -> (f64, f64) {
        // u1 in (0, 1]: guard the log.
        let u1 = 1.0 - self.next_unit_f64();
        let u2 = self.next_unit_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

/// Normal source that hands out one value at a time, buffering the spare
/// from each Box-Muller pair.
#[derive(Debug, Clone)]
pub struct NormalSource {
    stream: Stream,
    spare: Option<f64>,
}

impl NormalSource {
    pub fn new(key: u64) -> Self {
        NormalSource { stream: Stream::new(key), spare: None }
    }

    pub fn from_stream(stream: Stream) -> Self {
        NormalSource { stream, spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (a, b) = self.stream.next_normal_pair();
        self.spare = Some(b);
        a
    }

    pub fn next_unit_f64(&mut self) -> f64 {
        self.stream.next_unit_f64()
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang squeeze, with the standard
    /// shape-boost for shape < 1. Deterministic given the stream key.
    pub fn next_gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape < 1.0 {
            let g = self.next_gamma(shape + 1.0);
            let u = 1.0 - self.next_unit_f64();
            return g * u.powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.next_normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.next_unit_f64();
            if u < 1.0 - 0.0331 * x * x * x * x {
                return d * v;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }
}
