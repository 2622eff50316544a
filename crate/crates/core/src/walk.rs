//! Walk drivers: quenched and annealed simulation with composable
//! stopping rules, plus the rare-event backtrack estimator and the
//! velocity/direction estimator.
//!
//! Every step is drawn from the environment at the current position using
//! a dedicated per-walk stream, so a trajectory is a pure function of
//! (environment, start, rule, walk key). Stopping conditions are evaluated
//! at every visited position, the start included; the horizon is a hard
//! cap that reports censoring rather than erroring.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::env::{Environment, EnvironmentLaw};
use crate::geometry::Parallelogram;
use crate::lattice::{self, Coords, SignedAxis};
use crate::rng::{trial_key, Stream, StreamRole};
use crate::stats;
use crate::{Error, Result, Scalar};

/// A recorded path X_0..X_n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    positions: Vec<Coords>,
}

impl Trajectory {
    pub fn new(start: Coords) -> Self {
        Trajectory { positions: vec![start] }
    }

    pub fn from_positions(positions: Vec<Coords>) -> Self {
        assert!(!positions.is_empty(), "trajectory needs a start");
        Trajectory { positions }
    }

    pub fn push(&mut self, site: Coords) {
        self.positions.push(site);
    }

    /// Number of steps n (one less than the number of positions).
    pub fn steps(&self) -> u64 {
        (self.positions.len() - 1) as u64
    }

    pub fn positions(&self) -> &[Coords] {
        &self.positions
    }

    pub fn position(&self, k: u64) -> Coords {
        self.positions[k as usize]
    }

    pub fn start(&self) -> Coords {
        self.positions[0]
    }

    pub fn end(&self) -> Coords {
        *self.positions.last().expect("nonempty")
    }

    pub fn displacement(&self) -> Coords {
        lattice::sub(self.end(), self.start())
    }

    /// Heights <X_k, normal> along the path, exact integer arithmetic.
    pub fn heights(&self, normal: Coords) -> Vec<i64> {
        self.positions.iter().map(|&p| lattice::dot(p, normal)).collect()
    }
}

/// What to stop on. Halfspace levels are reals so callers can pass
/// depth * |normal|_2 without rounding concerns; the compared dot product
/// is an exact integer.
#[derive(Debug, Clone)]
pub enum StopCondition {
    /// Stop after exactly this many steps.
    FixedSteps(u64),
    /// Stop when <X, normal> >= level.
    Halfspace { normal: Coords, level: f64 },
    /// Stop when <X, normal> >= right or <X, normal> <= left.
    EitherHalfspace { normal: Coords, right: f64, left: f64 },
    /// Stop on first visit to any site of the set.
    HitSet(Arc<BTreeSet<Coords>>),
    /// Stop when ||X - center||_1 > radius (first position outside the
    /// closed l1 ball).
    ExitBallL1 { center: Coords, radius: u64 },
    /// Stop when ||X - center||_inf > radius.
    ExitBallLinf { center: Coords, radius: u64 },
    /// Stop at the first position outside the parallelogram.
    ExitParallelogram(Parallelogram),
}

#[derive(Debug, Clone)]
pub struct StopRule {
    pub condition: StopCondition,
    /// Maximum number of steps; reaching it censors the run.
    pub horizon: u64,
}

impl StopRule {
    pub fn new(condition: StopCondition, horizon: u64) -> Self {
        StopRule { condition, horizon }
    }

    pub fn fixed_steps(n: u64) -> Self {
        StopRule { condition: StopCondition::FixedSteps(n), horizon: n }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopKind {
    /// A fixed-step run completed its step budget.
    Completed,
    /// A halfspace threshold was reached; `upper` tells which side for
    /// two-sided rules (always true for one-sided ones).
    HalfspaceHit { upper: bool },
    /// A site of the target set was visited.
    SetHit,
    /// First position outside a ball or parallelogram; `right` is the
    /// parallelogram's right-face class (meaningless but false for balls).
    BoundaryExit { right: bool },
    /// The horizon cap fired; the position field merely records the last
    /// step taken, it carries no claim about the stopping condition.
    HorizonCensored,
}

impl StopKind {
    pub fn censored(self) -> bool {
        matches!(self, StopKind::HorizonCensored)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingReport {
    pub kind: StopKind,
    /// Step count at which the rule fired.
    pub time: u64,
    pub position: Coords,
}

fn check_condition(condition: &StopCondition, t: u64, x: Coords) -> Option<StopKind> {
    match condition {
        StopCondition::FixedSteps(n) => (t == *n).then_some(StopKind::Completed),
        StopCondition::Halfspace { normal, level } => {
            (lattice::dot(x, *normal) as f64 >= *level)
                .then_some(StopKind::HalfspaceHit { upper: true })
        }
        StopCondition::EitherHalfspace { normal, right, left } => {
            let h = lattice::dot(x, *normal) as f64;
            if h >= *right {
                Some(StopKind::HalfspaceHit { upper: true })
            } else if h <= *left {
                Some(StopKind::HalfspaceHit { upper: false })
            } else {
                None
            }
        }
        StopCondition::HitSet(set) => set.contains(&x).then_some(StopKind::SetHit),
        StopCondition::ExitBallL1 { center, radius } => {
            (lattice::l1_norm(lattice::sub(x, *center)) > *radius as i64)
                .then_some(StopKind::BoundaryExit { right: false })
        }
        StopCondition::ExitBallLinf { center, radius } => {
            (lattice::linf_norm(lattice::sub(x, *center)) > *radius as i64)
                .then_some(StopKind::BoundaryExit { right: false })
        }
        StopCondition::ExitParallelogram(p) => (!p.contains(x))
            .then_some(StopKind::BoundaryExit { right: p.on_right_face(x) }),
    }
}

/// Core driver. Calls `visit(t, X_t)` for every visited position, the
/// start included, then checks the stopping condition there; the horizon
/// is checked after the condition so a rule firing exactly at the horizon
/// still reports its own kind.
pub fn drive<T: Scalar>(
    env: &Environment<T>,
    start: Coords,
    rule: &StopRule,
    stream: &mut Stream,
    mut visit: impl FnMut(u64, Coords),
) -> StoppingReport {
    let mut x = start;
    let mut t = 0u64;
    loop {
        visit(t, x);
        if let Some(kind) = check_condition(&rule.condition, t, x) {
            return StoppingReport { kind, time: t, position: x };
        }
        if t >= rule.horizon {
            return StoppingReport { kind: StopKind::HorizonCensored, time: t, position: x };
        }
        let dist = env.site_dist(x);
        let step = dist.sample_step(stream.next_unit::<T>());
        x = lattice::apply_step(x, step);
        t += 1;
    }
}

/// One quenched run: fixed environment, dedicated walk stream.
pub fn run_quenched<T: Scalar>(
    env: &Environment<T>,
    start: Coords,
    rule: &StopRule,
    walk_key: u64,
) -> (Trajectory, StoppingReport) {
    let mut stream = Stream::new(walk_key);
    let mut traj = Trajectory::new(start);
    let report = drive(env, start, rule, &mut stream, |t, x| {
        if t > 0 {
            traj.push(x);
        }
    });
    (traj, report)
}

/// Annealed runs: a fresh environment per trial, with environment and
/// walk streams split from (master_seed, stream_label, trial).
pub fn run_annealed<T: Scalar>(
    law: &EnvironmentLaw<T>,
    start: Coords,
    rule: &StopRule,
    master_seed: u64,
    stream_label: u64,
    trials: u64,
) -> Vec<(Trajectory, StoppingReport)> {
    (0..trials)
        .map(|trial| {
            let env = annealed_env(law, master_seed, stream_label, trial);
            run_quenched(&env, start, rule, trial_key(master_seed, stream_label, trial, StreamRole::Walk1))
        })
        .collect()
}

/// The environment for one annealed trial.
pub fn annealed_env<T: Scalar>(
    law: &EnvironmentLaw<T>,
    master_seed: u64,
    stream_label: u64,
    trial: u64,
) -> Environment<T> {
    Environment::new(law.clone(), trial_key(master_seed, stream_label, trial, StreamRole::Env))
}

/// Walk stream key for one annealed trial.
pub fn annealed_walk_key(master_seed: u64, stream_label: u64, trial: u64) -> u64 {
    trial_key(master_seed, stream_label, trial, StreamRole::Walk1)
}

/// Estimator choice for backtrack probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BacktrackEstimator {
    /// Plain Monte Carlo fraction.
    Direct,
    /// Importance sampling under the axis-reflected environment: steps are
    /// drawn from the site distribution with the two probabilities on the
    /// backtrack axis swapped, and each trial carries the likelihood-ratio
    /// weight. Deep backtracks become typical under the proposal, so the
    /// estimator stays useful where the direct fraction is identically 0.
    Tilted,
}

#[derive(Debug, Clone)]
pub struct BacktrackEstimate {
    /// Censored trials counted as "did not backtrack".
    pub estimate: f64,
    /// Censored trials dropped from the denominator.
    pub estimate_dropped: f64,
    /// 95% interval on `estimate`: Clopper-Pearson for the direct
    /// estimator, normal-approximation for the tilted one.
    pub ci: (f64, f64),
    pub trials: u64,
    /// Weighted backtrack count (an integer for the direct estimator).
    pub backtracks: f64,
    pub right_exits: u64,
    pub censored: u64,
    /// Set when more than half the trials were censored; the horizon is
    /// too small for the estimate to mean much.
    pub horizon_flagged: bool,
    pub estimator: BacktrackEstimator,
}

/// Annealed probability that the walk reaches depth -L along `ell` before
/// depth +L, from the origin. The event of interest is the rare one for
/// ballistic laws; see [`BacktrackEstimator`] for the two estimates.
pub fn backtrack_probability<T: Scalar>(
    law: &EnvironmentLaw<T>,
    ell: SignedAxis,
    depth: u64,
    trials: u64,
    horizon: u64,
    master_seed: u64,
    stream_label: u64,
    estimator: BacktrackEstimator,
) -> Result<BacktrackEstimate> {
    if trials == 0 {
        return Err(Error::Parameter("backtrack estimate needs trials >= 1".into()));
    }
    if depth == 0 {
        return Err(Error::Parameter("backtrack depth must be >= 1".into()));
    }
    if ell.axis >= law.dim() {
        return Err(Error::Parameter("backtrack direction beyond dimension".into()));
    }
    let normal = ell.unit();
    let level = depth as f64;

    let mut backtracks = 0.0f64;
    let mut right_exits = 0u64;
    let mut censored = 0u64;
    let mut weights: Vec<f64> = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let env = annealed_env(law, master_seed, stream_label, trial);
        let mut stream = Stream::new(annealed_walk_key(master_seed, stream_label, trial));
        let mut x = lattice::ORIGIN;
        let mut log_weight = 0.0f64;
        let mut outcome = None;
        for _ in 0..horizon {
            let h = lattice::dot(x, normal);
            if h >= level as i64 {
                outcome = Some(false);
                break;
            }
            if h <= -(level as i64) {
                outcome = Some(true);
                break;
            }
            let dist = env.site_dist(x);
            let step = match estimator {
                BacktrackEstimator::Direct => dist.sample_step(stream.next_unit::<T>()),
                BacktrackEstimator::Tilted => {
                    let proposal = dist.reflected(ell.axis);
                    let step = proposal.sample_step(stream.next_unit::<T>());
                    // only axis steps carry a nontrivial likelihood ratio
                    log_weight += dist.prob(step).to_real().ln()
                        - proposal.prob(step).to_real().ln();
                    step
                }
            };
            x = lattice::apply_step(x, step);
        }
        // the final position may satisfy a barrier exactly at the horizon
        if outcome.is_none() {
            let h = lattice::dot(x, normal);
            if h >= level as i64 {
                outcome = Some(false);
            } else if h <= -(level as i64) {
                outcome = Some(true);
            }
        }
        match outcome {
            Some(true) => {
                let w = match estimator {
                    BacktrackEstimator::Direct => 1.0,
                    BacktrackEstimator::Tilted => log_weight.exp(),
                };
                backtracks += w;
                weights.push(w);
            }
            Some(false) => {
                right_exits += 1;
                weights.push(0.0);
            }
            None => {
                censored += 1;
                weights.push(0.0);
            }
        }
    }

    let n = trials as f64;
    let estimate = backtracks / n;
    let effective = trials - censored;
    let estimate_dropped = if effective > 0 { backtracks / effective as f64 } else { f64::NAN };
    let ci = match estimator {
        BacktrackEstimator::Direct => {
            stats::clopper_pearson(backtracks.round() as u64, trials, 0.95)
        }
        BacktrackEstimator::Tilted => {
            let se = stats::standard_error(&weights);
            let z = stats::z_for_confidence(0.95);
            ((estimate - z * se).max(0.0), (estimate + z * se).min(1.0))
        }
    };
    Ok(BacktrackEstimate {
        estimate,
        estimate_dropped,
        ci,
        trials,
        backtracks,
        right_exits,
        censored,
        horizon_flagged: censored * 2 > trials,
        estimator,
    })
}

#[derive(Debug, Clone)]
pub struct VelocityEstimate {
    /// Sample mean of X_n / n per coordinate.
    pub mean: [f64; 3],
    /// Standard error per coordinate.
    pub se: [f64; 3],
    /// Mean of X_n/|X_n| over trials with X_n != 0, renormalized to unit
    /// length; the plug-in estimate of the asymptotic direction.
    pub direction: [f64; 3],
    pub n: u64,
    pub trials: u64,
}

/// Annealed velocity estimate from fixed-step runs.
pub fn velocity_estimate<T: Scalar>(
    law: &EnvironmentLaw<T>,
    n: u64,
    trials: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<VelocityEstimate> {
    if n == 0 || trials == 0 {
        return Err(Error::Parameter("velocity estimate needs n >= 1 and trials >= 1".into()));
    }
    let rule = StopRule::fixed_steps(n);
    let mut per_coord: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut dir_sum = [0.0f64; 3];
    let mut dir_count = 0u64;
    for trial in 0..trials {
        let env = annealed_env(law, master_seed, stream_label, trial);
        let mut stream = Stream::new(annealed_walk_key(master_seed, stream_label, trial));
        let report = drive(&env, lattice::ORIGIN, &rule, &mut stream, |_, _| {});
        debug_assert_eq!(report.kind, StopKind::Completed);
        let x = report.position;
        let norm = lattice::l2_norm(x);
        for axis in 0..law.dim() {
            per_coord[axis].push(x[axis] as f64 / n as f64);
            if norm > 0.0 {
                dir_sum[axis] += x[axis] as f64 / norm;
            }
        }
        if norm > 0.0 {
            dir_count += 1;
        }
    }
    let mut mean = [0.0; 3];
    let mut se = [0.0; 3];
    for axis in 0..law.dim() {
        mean[axis] = stats::mean(&per_coord[axis]);
        se[axis] = stats::standard_error(&per_coord[axis]);
    }
    let mut direction = [0.0; 3];
    if dir_count > 0 {
        let norm = dir_sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for axis in 0..3 {
                direction[axis] = dir_sum[axis] / norm;
            }
        }
    }
    Ok(VelocityEstimate { mean, se, direction, n, trials })
}
