//! Multi-scale geometry: the slowly varying scale sequence, sheared
//! parallelograms aligned with the walk's direction, and exit-face
//! statistics over their right boundary.

use std::collections::BTreeMap;

use crate::env::{Environment, EnvironmentLaw};
use crate::lattice::{self, Coords};
use crate::rng::{trial_key, Stream, StreamRole};
use crate::walk::{self, StopCondition, StopKind, StopRule};
use crate::{Error, Result, Scalar};

/// Scale sequence R_j(N) = exp((log N)^{(j+2)/(j+3)}).
///
/// Slowly varying: asymptotically log N << R_j^kappa << R_{j+1} << N^eps,
/// though the crossovers sit far beyond any simulated N, so only the exact
/// formula and the finite-N monotonicities are promised here. R_j(1) = 1,
/// and R_j(e) = e for every j.
pub fn r_seq(j: u32, n: u64) -> f64 {
    assert!(n >= 1, "scale sequence needs N >= 1");
    if n == 1 {
        return 1.0;
    }
    let exponent = (j as f64 + 2.0) / (j as f64 + 3.0);
    ((n as f64).ln().powf(exponent)).exp()
}

/// Box of length N^2 along the (sheared) walk direction and transverse
/// width N * R_5(N), centered at a lattice site:
///
///   { x : |<x-z, e1>| < N^2,
///         || x - z - dir * <x-z, e1> / <dir, e1> ||_inf < N R_5(N) }.
///
/// The direction is the estimated asymptotic direction; it must have a
/// positive e1 component. For dir = e1 the shear is the identity on the
/// transverse coordinates and all membership tests are exact integer
/// comparisons against precomputed bounds.
#[derive(Debug, Clone)]
pub struct Parallelogram {
    pub center: Coords,
    pub n: u64,
    pub direction: [f64; 3],
    /// N * R_5(N), the transverse half-width.
    pub transverse_width: f64,
    dim: usize,
}

impl Parallelogram {
    pub fn new(dim: usize, center: Coords, n: u64, direction: [f64; 3]) -> Result<Self> {
        lattice::validate_dim(dim)?;
        if !lattice::in_dim(center, dim) {
            return Err(Error::Parameter("parallelogram center outside dimension".into()));
        }
        if n == 0 || n > 1 << 20 {
            return Err(Error::Parameter(format!("side parameter {n} out of range")));
        }
        let norm = direction.iter().take(dim).map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter("direction must be a unit vector".into()));
        }
        if direction.iter().skip(dim).any(|&x| x != 0.0) {
            return Err(Error::Parameter("direction has components beyond the dimension".into()));
        }
        if direction[0] <= 0.0 {
            return Err(Error::Parameter("direction needs a positive e1 component".into()));
        }
        let transverse_width = n as f64 * r_seq(5, n);
        Ok(Parallelogram { center, n, direction, transverse_width, dim })
    }

    /// Axis-aligned box: direction exactly e1.
    pub fn axis_aligned(dim: usize, center: Coords, n: u64) -> Result<Self> {
        Self::new(dim, center, n, [1.0, 0.0, 0.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// <x - center, e1>.
    pub fn longitudinal(&self, x: Coords) -> i64 {
        x[0] - self.center[0]
    }

    /// The right face sits at longitudinal coordinate N^2.
    pub fn right_level(&self) -> i64 {
        (self.n * self.n) as i64
    }

    /// || x - center - dir * t / dir_1 ||_inf with t = <x-center, e1>;
    /// the e1 component cancels by construction.
    pub fn transverse_norm(&self, x: Coords) -> f64 {
        let t = self.longitudinal(x) as f64 / self.direction[0];
        let mut worst = 0.0f64;
        for axis in 1..self.dim {
            let dev = (x[axis] - self.center[axis]) as f64 - self.direction[axis] * t;
            worst = worst.max(dev.abs());
        }
        worst
    }

    pub fn contains(&self, x: Coords) -> bool {
        self.longitudinal(x).abs() < self.right_level()
            && self.transverse_norm(x) < self.transverse_width
    }

    /// Middle third: both bounds shrunk by a factor 3.
    pub fn middle_third_contains(&self, x: Coords) -> bool {
        (self.longitudinal(x).abs() as f64) < self.right_level() as f64 / 3.0
            && self.transverse_norm(x) < self.transverse_width / 3.0
    }

    /// Right-face class for a position outside the box: longitudinal
    /// coordinate at or beyond N^2.
    pub fn on_right_face(&self, x: Coords) -> bool {
        self.longitudinal(x) >= self.right_level()
    }
}

/// First-exit classification of a recorded path starting inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// Exited with <x - z, e1> >= N^2.
    Right,
    /// Exited anywhere else on the boundary.
    OtherBoundary,
    /// Never left the box.
    StillInside,
}

pub fn classify_exit(p: &Parallelogram, traj: &walk::Trajectory) -> ExitClass {
    assert!(p.contains(traj.start()), "trajectory must start inside");
    for &x in traj.positions() {
        if !p.contains(x) {
            return if p.on_right_face(x) { ExitClass::Right } else { ExitClass::OtherBoundary };
        }
    }
    ExitClass::StillInside
}

/// Exit histogram over (right-face transverse cell, exit-time interval),
/// with the non-right and time-deviation tallies the multi-scale estimates
/// are about. Cells are cubes of side `cell_size` in the transverse
/// coordinates; time intervals have the same length.
#[derive(Debug, Clone)]
pub struct ExitHistogram {
    pub cell_size: u64,
    /// (transverse cell of the exit site, exit-time bin) -> count, over
    /// trials that exited through the right face.
    pub counts: BTreeMap<([i64; 2], u64), u64>,
    pub trials: u64,
    pub right_exits: u64,
    pub non_right_exits: u64,
    pub censored: u64,
    /// Right exits with |T - median T| > N * R_6(N).
    pub deviated: u64,
}

impl ExitHistogram {
    /// Fraction of non-censored trials that exited off the right face.
    /// `None` when no trial finished (the undefined case is flagged by
    /// absence, not by a sentinel value).
    pub fn non_right_fraction(&self) -> Option<f64> {
        let finished = self.right_exits + self.non_right_exits;
        (finished > 0).then(|| self.non_right_exits as f64 / finished as f64)
    }

    /// Fraction of right exits whose time deviates from the median by more
    /// than N * R_6(N).
    pub fn deviation_fraction(&self) -> Option<f64> {
        (self.right_exits > 0).then(|| self.deviated as f64 / self.right_exits as f64)
    }

    /// Cell frequency relative to all trials.
    pub fn frequency(&self, key: &([i64; 2], u64)) -> f64 {
        *self.counts.get(key).unwrap_or(&0) as f64 / self.trials.max(1) as f64
    }
}

/// Sup over cells of the frequency difference between two histograms with
/// matching cell sizes (the measured quenched-annealed gap).
pub fn histogram_discrepancy(a: &ExitHistogram, b: &ExitHistogram) -> f64 {
    assert_eq!(a.cell_size, b.cell_size, "histograms must share cell size");
    let mut worst = 0.0f64;
    for key in a.counts.keys().chain(b.counts.keys()) {
        worst = worst.max((a.frequency(key) - b.frequency(key)).abs());
    }
    worst
}

fn accumulate_exit<T: Scalar>(
    hist: &mut ExitHistogram,
    right_times: &mut Vec<u64>,
    p: &Parallelogram,
    env: &Environment<T>,
    start: Coords,
    horizon: u64,
    walk_seed: u64,
) {
    let rule = StopRule::new(StopCondition::ExitParallelogram(p.clone()), horizon);
    let mut stream = Stream::new(walk_seed);
    let report = walk::drive(env, start, &rule, &mut stream, |_, _| {});
    match report.kind {
        StopKind::BoundaryExit { right: true } => {
            hist.right_exits += 1;
            right_times.push(report.time);
            let w = hist.cell_size as i64;
            let mut cell = [0i64; 2];
            for axis in 1..p.dim() {
                cell[axis - 1] =
                    lattice::floor_div(report.position[axis] - p.center[axis], w);
            }
            *hist.counts.entry((cell, report.time / hist.cell_size)).or_insert(0) += 1;
        }
        StopKind::BoundaryExit { right: false } => hist.non_right_exits += 1,
        StopKind::HorizonCensored => hist.censored += 1,
        other => unreachable!("exit rule cannot report {other:?}"),
    }
}

fn finish_histogram(mut hist: ExitHistogram, p: &Parallelogram, right_times: Vec<u64>) -> ExitHistogram {
    if !right_times.is_empty() {
        let times: Vec<f64> = right_times.iter().map(|&t| t as f64).collect();
        let med = crate::stats::median(&times);
        let band = p.n as f64 * r_seq(6, p.n);
        hist.deviated = times.iter().filter(|&&t| (t - med).abs() > band).count() as u64;
    }
    hist
}

/// Quenched exit statistics: `trials` walks in one fixed environment from
/// a start in the middle third.
pub fn exit_statistics<T: Scalar>(
    env: &Environment<T>,
    p: &Parallelogram,
    start: Coords,
    trials: u64,
    cell_size: u64,
    horizon: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<ExitHistogram> {
    validate_exit_args(p, start, cell_size)?;
    let mut hist = empty_histogram(cell_size, trials);
    let mut right_times = Vec::new();
    for trial in 0..trials {
        let key = trial_key(master_seed, stream_label, trial, StreamRole::Walk1);
        accumulate_exit(&mut hist, &mut right_times, p, env, start, horizon, key);
    }
    Ok(finish_histogram(hist, p, right_times))
}

/// Annealed counterpart: fresh environment per trial, same cell layout, so
/// the two histograms are directly comparable via
/// [`histogram_discrepancy`].
pub fn exit_statistics_annealed<T: Scalar>(
    law: &EnvironmentLaw<T>,
    p: &Parallelogram,
    start: Coords,
    trials: u64,
    cell_size: u64,
    horizon: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<ExitHistogram> {
    validate_exit_args(p, start, cell_size)?;
    let mut hist = empty_histogram(cell_size, trials);
    let mut right_times = Vec::new();
    for trial in 0..trials {
        let env = walk::annealed_env(law, master_seed, stream_label, trial);
        let key = walk::annealed_walk_key(master_seed, stream_label, trial);
        accumulate_exit(&mut hist, &mut right_times, p, &env, start, horizon, key);
    }
    Ok(finish_histogram(hist, p, right_times))
}

fn validate_exit_args(p: &Parallelogram, start: Coords, cell_size: u64) -> Result<()> {
    if cell_size == 0 {
        return Err(Error::Parameter("cell size must be >= 1".into()));
    }
    if !p.middle_third_contains(start) {
        return Err(Error::Parameter(format!(
            "start {start:?} not in the middle third"
        )));
    }
    Ok(())
}

fn empty_histogram(cell_size: u64, trials: u64) -> ExitHistogram {
    ExitHistogram {
        cell_size,
        counts: BTreeMap::new(),
        trials,
        right_exits: 0,
        non_right_exits: 0,
        censored: 0,
        deviated: 0,
    }
}
