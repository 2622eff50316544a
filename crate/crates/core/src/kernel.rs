//! Exact heat-kernel dynamic programming on the free lattice: forward
//! kernels P_w^z(X_n = .), backward fields h_n(z) = P_w^z(X_n = 0), the
//! particle-view density f_n = sum_z h_n(z), and its tail over sampled
//! environments.
//!
//! All fields live on the l1 ball of radius n around their anchor and on
//! one parity class (x and n have the same step parity). The DP runs on a
//! dense box for speed and determinism; the public field is sparse.

use std::collections::BTreeMap;

use crate::env::{Environment, EnvironmentLaw};
use crate::lattice::{self, Coords, ORIGIN};
use crate::scalar::Scalar;
use crate::stats;
use crate::walk::annealed_env;
use crate::{Error, Result};

/// Largest dense-box cell count a kernel DP may allocate by default;
/// roughly one gigabyte of f64 cells in d=3 at n around 130.
pub const DEFAULT_SITE_BUDGET: usize = 1 << 25;

/// Entries below this are dropped from sparse fields; the dropped total is
/// kept so mass checks stay honest.
pub const PRUNE_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// P_w^anchor(X_n = x), keyed by x - anchor.
    Forward,
    /// h_n(z) = P_w^z(X_n = anchor), keyed by z - anchor.
    Backward,
}

/// A sparse nonnegative field over lattice offsets from an anchor site.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub time: u64,
    pub anchor: Coords,
    pub kind: KernelKind,
    /// Offset from anchor -> value; zero and sub-threshold entries absent.
    pub values: BTreeMap<Coords, f64>,
    /// Total mass removed by pruning.
    pub pruned_mass: f64,
}

impl KernelField {
    pub fn total_mass(&self) -> f64 {
        crate::scalar::sum_compensated(self.values.values().copied())
    }

    pub fn value_at(&self, offset: Coords) -> f64 {
        self.values.get(&offset).copied().unwrap_or(0.0)
    }

    /// Largest entry, 0 for an empty field.
    pub fn max_value(&self) -> f64 {
        self.values.values().fold(0.0f64, |a, &b| a.max(b))
    }

    /// Support lies in the l1 ball of radius `time` and on the parity
    /// class of `time`.
    pub fn support_is_admissible(&self) -> bool {
        self.values.keys().all(|&x| {
            lattice::l1_norm(x) <= self.time as i64
                && (lattice::l1_norm(x) % 2) as u64 == self.time % 2
        })
    }
}

/// Dense DP scratch: a (2n+1)^dim box of f64 indexed by offset+n per axis.
struct DenseBox {
    n: i64,
    dim: usize,
    side: usize,
    data: Vec<f64>,
}

impl DenseBox {
    fn new(n: u64, dim: usize, budget: usize) -> Result<Self> {
        let side = 2 * n as usize + 1;
        let cells = side.checked_pow(dim as u32).filter(|&c| c <= budget);
        let Some(cells) = cells else {
            return Err(Error::Guard {
                guard: "kernel-memory",
                msg: format!("dense box (2*{n}+1)^{dim} exceeds the {budget}-cell budget"),
            });
        };
        Ok(DenseBox { n: n as i64, dim, side, data: vec![0.0; cells] })
    }

    fn index(&self, offset: Coords) -> usize {
        let mut idx = 0usize;
        for axis in (0..self.dim).rev() {
            idx = idx * self.side + (offset[axis] + self.n) as usize;
        }
        idx
    }

    fn offset_of(&self, mut idx: usize) -> Coords {
        let mut out = ORIGIN;
        for axis in 0..self.dim {
            out[axis] = (idx % self.side) as i64 - self.n;
            idx /= self.side;
        }
        out
    }
}

/// Site probabilities for every box cell, fetched once; repeated
/// `site_dist` lookups would re-run the per-site sampler each DP step.
fn cached_probs<T: Scalar>(env: &Environment<T>, anchor: Coords, boxx: &DenseBox) -> Vec<[f64; 6]> {
    (0..boxx.data.len())
        .map(|idx| {
            let site = lattice::add(anchor, boxx.offset_of(idx));
            let dist = env.site_dist(site);
            let mut probs = [0.0f64; 6];
            for (slot, p) in probs.iter_mut().take(2 * boxx.dim).enumerate() {
                *p = dist.prob(slot).to_real();
            }
            probs
        })
        .collect()
}

fn sparse_from_box(boxx: &DenseBox, time: u64, anchor: Coords, kind: KernelKind) -> KernelField {
    let mut values = BTreeMap::new();
    let mut pruned = 0.0;
    for (idx, &v) in boxx.data.iter().enumerate() {
        if v > PRUNE_THRESHOLD {
            values.insert(boxx.offset_of(idx), v);
        } else {
            pruned += v;
        }
    }
    KernelField { time, anchor, kind, values, pruned_mass: pruned }
}

/// Exact forward kernel by dynamic programming: the distribution of X_n
/// for the walk started at z in the fixed environment.
pub fn heat_kernel_forward<T: Scalar>(env: &Environment<T>, z: Coords, n: u64) -> Result<KernelField> {
    heat_kernel_forward_with_budget(env, z, n, DEFAULT_SITE_BUDGET)
}

pub fn heat_kernel_forward_with_budget<T: Scalar>(
    env: &Environment<T>,
    z: Coords,
    n: u64,
    budget: usize,
) -> Result<KernelField> {
    let dim = env.law().dim();
    let mut cur = DenseBox::new(n, dim, budget)?;
    let probs = cached_probs(env, z, &cur);
    let center = cur.index(ORIGIN);
    cur.data[center] = 1.0;
    let mut next = DenseBox::new(n, dim, budget)?;
    let strides: Vec<isize> = (0..dim)
        .map(|axis| (cur.side as isize).pow(axis as u32))
        .collect();
    for step in 0..n {
        next.data.fill(0.0);
        // support after `step` steps fits in the l1 ball of that radius,
        // so every scatter target stays inside the box
        let _ = step;
        for idx in 0..cur.data.len() {
            let v = cur.data[idx];
            if v == 0.0 {
                continue;
            }
            let p = &probs[idx];
            for axis in 0..dim {
                let s = strides[axis];
                next.data[(idx as isize + s) as usize] += v * p[2 * axis];
                next.data[(idx as isize - s) as usize] += v * p[2 * axis + 1];
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(sparse_from_box(&cur, n, z, KernelKind::Forward))
}

/// Exact backward field h_n(z) = P_w^z(X_n = 0) for every start z at
/// once: h_0 = delta_0, h_{k+1}(z) = sum_e w(z, e) h_k(z + e).
pub fn heat_kernel_backward<T: Scalar>(env: &Environment<T>, n: u64) -> Result<KernelField> {
    heat_kernel_backward_with_budget(env, n, DEFAULT_SITE_BUDGET)
}

pub fn heat_kernel_backward_with_budget<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    budget: usize,
) -> Result<KernelField> {
    let dim = env.law().dim();
    let mut cur = DenseBox::new(n, dim, budget)?;
    let probs = cached_probs(env, ORIGIN, &cur);
    let center = cur.index(ORIGIN);
    cur.data[center] = 1.0;
    let mut next = DenseBox::new(n, dim, budget)?;
    let strides: Vec<isize> = (0..dim)
        .map(|axis| (cur.side as isize).pow(axis as u32))
        .collect();
    for _ in 0..n {
        next.data.fill(0.0);
        for idx in 0..next.data.len() {
            let p = &probs[idx];
            let mut acc = 0.0;
            let off = cur.offset_of(idx);
            for axis in 0..dim {
                let s = strides[axis];
                // gather from z + e; the box edge has no mass to gather
                if off[axis] < cur.n {
                    acc += p[2 * axis] * cur.data[(idx as isize + s) as usize];
                }
                if off[axis] > -cur.n {
                    acc += p[2 * axis + 1] * cur.data[(idx as isize - s) as usize];
                }
            }
            next.data[idx] = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(sparse_from_box(&cur, n, ORIGIN, KernelKind::Backward))
}

/// The particle-view density f_n = sum_z P_w^z(X_n = 0), computed by one
/// backward DP rather than a forward kernel per start site.
pub fn f_n_exact<T: Scalar>(env: &Environment<T>, n: u64) -> Result<f64> {
    Ok(heat_kernel_backward(env, n)?.total_mass())
}

#[derive(Debug, Clone, Copy)]
pub struct TailPoint {
    pub u: f64,
    /// Empirical P(f_n > u), strict.
    pub survival: f64,
    /// 95% Clopper-Pearson bounds.
    pub ci: (f64, f64),
    pub exceedances: u64,
}

#[derive(Debug, Clone)]
pub struct FnTail {
    pub n: u64,
    pub env_count: u64,
    pub points: Vec<TailPoint>,
    /// Sample mean of f_n; the identity E[f_n] = 1 is the check.
    pub mean: f64,
    pub se: f64,
    pub samples: Vec<f64>,
}

/// Survival curve of f_n over i.i.d. environments, each f_n exact.
pub fn f_n_tail<T: Scalar>(
    law: &EnvironmentLaw<T>,
    n: u64,
    env_count: u64,
    u_grid: &[f64],
    master_seed: u64,
    stream_label: u64,
) -> Result<FnTail> {
    if env_count == 0 {
        return Err(Error::Parameter("tail needs at least one environment".into()));
    }
    let mut samples = Vec::with_capacity(env_count as usize);
    for e in 0..env_count {
        let env = annealed_env(law, master_seed, stream_label, e);
        samples.push(f_n_exact(&env, n)?);
    }
    let points = u_grid
        .iter()
        .map(|&u| {
            let k = samples.iter().filter(|&&f| f > u).count() as u64;
            TailPoint {
                u,
                survival: k as f64 / env_count as f64,
                ci: stats::clopper_pearson(k, env_count, 0.95),
                exceedances: k,
            }
        })
        .collect();
    Ok(FnTail {
        n,
        env_count,
        points,
        mean: stats::mean(&samples),
        se: stats::standard_error(&samples),
        samples,
    })
}
