//! The walk on a periodized environment folded onto the L^d torus: its
//! transition matrix, stationary law, and the agreement between the
//! stationary density at the origin and the particle-view density f_n.

use crate::env::Environment;
use crate::lattice::{self, Coords};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Residual the power iteration drives toward.
pub const POWER_TOLERANCE: f64 = 1e-12;
/// Residual the converged chain must satisfy.
pub const RESIDUAL_BOUND: f64 = 1e-10;
pub const MAX_POWER_ITERATIONS: u64 = 1_000_000;
/// Largest state count whose dense matrix we are willing to hold.
pub const MAX_TORUS_STATES: usize = 1 << 12;

/// Finite-state chain of the walk on the torus of side L.
#[derive(Debug, Clone)]
pub struct TorusChain {
    pub l: usize,
    pub dim: usize,
    /// Row-major row-stochastic matrix over L^dim states; the state index
    /// of coords (x, y, z) in [0, L)^dim is x + L y + L^2 z.
    pub matrix: Vec<f64>,
    /// Stationary probability vector, strictly positive.
    pub stationary: Vec<f64>,
    /// Iterations the lazified power method took.
    pub iterations: u64,
    /// Final l1 residual of pi P - pi (for P itself, not the lazified map).
    pub residual: f64,
}

impl TorusChain {
    pub fn states(&self) -> usize {
        self.stationary.len()
    }

    pub fn state_of(&self, x: Coords) -> usize {
        let l = self.l as i64;
        let mut idx = 0usize;
        for axis in (0..self.dim).rev() {
            idx = idx * self.l + x[axis].rem_euclid(l) as usize;
        }
        idx
    }

    /// Stationary density g(x) = L^dim pi(x), normalized so the uniform
    /// chain has g identically 1.
    pub fn density(&self, x: Coords) -> f64 {
        self.states() as f64 * self.stationary[self.state_of(x)]
    }
}

fn state_coords(mut idx: usize, l: usize, dim: usize) -> Coords {
    let mut out = lattice::ORIGIN;
    for axis in 0..dim {
        out[axis] = (idx % l) as i64;
        idx /= l;
    }
    out
}

/// Builds the torus chain for the environment's law restricted to one
/// fundamental domain and computes its stationary vector by lazified
/// power iteration (the plain chain has period 2 on even L).
pub fn torus_stationary<T: Scalar>(env: &Environment<T>, l: usize) -> Result<TorusChain> {
    if l < 2 {
        return Err(Error::Parameter("torus side must be at least 2".into()));
    }
    let dim = env.dim();
    let states = l.checked_pow(dim as u32).filter(|&s| s <= MAX_TORUS_STATES).ok_or(
        Error::Guard {
            guard: "torus-memory",
            msg: format!("{l}^{dim} states exceed the {MAX_TORUS_STATES}-state budget"),
        },
    )?;
    let mut matrix = vec![0.0f64; states * states];
    for s in 0..states {
        let x = state_coords(s, l, dim);
        let dist = env.site_dist(x);
        for step in 0..lattice::step_count(dim) {
            let target = lattice::add(x, lattice::step_vector(step));
            let t = wrap_state(target, l, dim);
            matrix[s * states + t] += dist.prob(step).to_real();
        }
    }

    // pi <- pi (I + P)/2 from the uniform start; residual measured on P
    let mut pi = vec![1.0 / states as f64; states];
    let mut pip = vec![0.0f64; states];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < MAX_POWER_ITERATIONS {
        pip.fill(0.0);
        for s in 0..states {
            let w = pi[s];
            if w == 0.0 {
                continue;
            }
            let row = &matrix[s * states..(s + 1) * states];
            for (t, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    pip[t] += w * p;
                }
            }
        }
        residual = pi.iter().zip(&pip).map(|(a, b)| (a - b).abs()).sum();
        iterations += 1;
        if residual <= POWER_TOLERANCE {
            break;
        }
        for (a, b) in pi.iter_mut().zip(&pip) {
            *a = 0.5 * (*a + *b);
        }
    }
    if residual > RESIDUAL_BOUND {
        return Err(Error::Guard {
            guard: "torus-power-iteration",
            msg: format!("no convergence after {iterations} iterations, residual {residual:.3e}"),
        });
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    Ok(TorusChain { l, dim, matrix, stationary: pi, iterations, residual })
}

fn wrap_state(x: Coords, l: usize, dim: usize) -> usize {
    let li = l as i64;
    let mut idx = 0usize;
    for axis in (0..dim).rev() {
        idx = idx * l + x[axis].rem_euclid(li) as usize;
    }
    idx
}

/// Particle-view density on the torus after n steps, by backward DP over
/// the fundamental domain: h_0 = delta_0, h_{k+1}(z) = sum_e w(z,e)
/// h_k(z+e mod L), f_k = sum_z h_k(z).
pub fn torus_f_n<T: Scalar>(env: &Environment<T>, l: usize, n: u64) -> Result<Vec<f64>> {
    if l < 2 {
        return Err(Error::Parameter("torus side must be at least 2".into()));
    }
    let dim = env.dim();
    let states = l.checked_pow(dim as u32).filter(|&s| s <= MAX_TORUS_STATES).ok_or(
        Error::Guard {
            guard: "torus-memory",
            msg: format!("{l}^{dim} states exceed the {MAX_TORUS_STATES}-state budget"),
        },
    )?;
    let probs: Vec<Vec<(usize, f64)>> = (0..states)
        .map(|s| {
            let x = state_coords(s, l, dim);
            let dist = env.site_dist(x);
            (0..lattice::step_count(dim))
                .map(|step| {
                    let target = lattice::add(x, lattice::step_vector(step));
                    (wrap_state(target, l, dim), dist.prob(step).to_real())
                })
                .collect()
        })
        .collect();
    let mut h = vec![0.0f64; states];
    h[0] = 1.0;
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(1.0);
    let mut next = vec![0.0f64; states];
    for _ in 0..n {
        for (s, cell) in next.iter_mut().enumerate() {
            *cell = probs[s].iter().map(|&(t, p)| p * h[t]).sum();
        }
        std::mem::swap(&mut h, &mut next);
        out.push(crate::scalar::sum_compensated(h.iter().copied()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct TorusFnGap {
    pub n: u64,
    pub f_n: f64,
    pub f_n_next: f64,
    /// Stationary density at the origin.
    pub g0: f64,
    /// |(f_n + f_{n+1})/2 - g(0)|; the parity average removes the
    /// period-2 oscillation of the plain chain.
    pub gap: f64,
}

pub fn torus_fn_consistency<T: Scalar>(env: &Environment<T>, l: usize, n: u64) -> Result<TorusFnGap> {
    if n < 1 {
        return Err(Error::Parameter("consistency gap needs n >= 1".into()));
    }
    let chain = torus_stationary(env, l)?;
    let g0 = chain.density(lattice::ORIGIN);
    let f = torus_f_n(env, l, n + 1)?;
    let (f_n, f_n_next) = (f[n as usize], f[n as usize + 1]);
    Ok(TorusFnGap { n, f_n, f_n_next, g0, gap: (0.5 * (f_n + f_n_next) - g0).abs() })
}
