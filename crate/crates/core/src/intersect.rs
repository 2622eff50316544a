//! Intersections of two independent walks in one shared environment:
//! the count over a ball, its quenched expectation, and how that
//! expectation scales with the ball radius.

use std::collections::HashSet;
use std::hash::BuildHasherDefault;

use crate::env::{Environment, EnvironmentLaw};
use crate::geometry::r_seq;
use crate::lattice::{self, Coords, ORIGIN};
use crate::rng::{derive_key, trial_key, Stream, StreamRole};
use crate::scalar::Scalar;
use crate::stats;
use crate::walk::{drive, velocity_estimate, StopCondition, StopRule};
use crate::{Error, Result};

type FixedState = BuildHasherDefault<std::collections::hash_map::DefaultHasher>;
type SiteSet = HashSet<Coords, FixedState>;

/// Walks run until they leave the ball of radius n + slack for the
/// observed horizon; the extra shell absorbs short excursions so a return
/// into the counting ball after "exit" is unlikely.
pub fn intersection_slack(n: u64) -> u64 {
    (2.0 * r_seq(5, n.max(1))).ceil() as u64
}

/// Step budget for ball radius n: 20 n / v along e1 for a ballistic law,
/// falling back to a diffusive budget 20 n^2 when the drift is too small
/// to trust.
pub fn default_horizon(n: u64, directional_speed: f64) -> u64 {
    if directional_speed > 0.05 {
        (20.0 * n as f64 / directional_speed).ceil() as u64
    } else {
        20 * n * n.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntersectionSample {
    /// Counting ball radius (l1).
    pub n: u64,
    /// |visited_1 and visited_2 and ball(n)|.
    pub count: u64,
    /// Per-walk step budgets.
    pub horizons: (u64, u64),
    /// Some walk hit its budget before leaving the padded ball.
    pub censored: bool,
}

/// Runs both walks in the same environment with independent step streams
/// and counts the common visited sites inside the ball of radius n.
pub fn count_intersections<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    walk_key_1: u64,
    walk_key_2: u64,
    horizon: u64,
) -> IntersectionSample {
    assert_ne!(walk_key_1, walk_key_2, "the two walks need distinct streams");
    let rule = StopRule {
        condition: StopCondition::ExitBallL1 { center: ORIGIN, radius: n + intersection_slack(n) },
        horizon,
    };
    let mut censored = false;
    let mut run = |key: u64| -> SiteSet {
        let mut visited = SiteSet::default();
        let mut stream = Stream::new(key);
        let report = drive(env, ORIGIN, &rule, &mut stream, |_, x| {
            if lattice::l1_norm(x) <= n as i64 {
                visited.insert(x);
            }
        });
        censored |= report.kind.censored();
        visited
    };
    let a = run(walk_key_1);
    let b = run(walk_key_2);
    let (small, large) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    let count = small.iter().filter(|z| large.contains(*z)).count() as u64;
    IntersectionSample { n, count, horizons: (horizon, horizon), censored }
}

#[derive(Debug, Clone)]
pub struct QuenchedIntersections {
    pub n: u64,
    /// Mean count over independent walk pairs in the fixed environment.
    pub mean: f64,
    /// Normal-approximation 95% interval for the truncated expectation.
    pub ci: (f64, f64),
    pub pairs: u64,
    pub censored: u64,
    /// More than half the pairs were censored; the truncation bias is
    /// then untrustworthy.
    pub censor_flagged: bool,
}

pub fn quenched_expected_intersections<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    pairs: u64,
    horizon: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<QuenchedIntersections> {
    if pairs == 0 {
        return Err(Error::Parameter("need at least one walk pair".into()));
    }
    let mut counts = Vec::with_capacity(pairs as usize);
    let mut censored = 0u64;
    for pair in 0..pairs {
        let k1 = trial_key(master_seed, stream_label, pair, StreamRole::Walk1);
        let k2 = trial_key(master_seed, stream_label, pair, StreamRole::Walk2);
        let sample = count_intersections(env, n, k1, k2, horizon);
        counts.push(sample.count as f64);
        censored += sample.censored as u64;
    }
    let mean = stats::mean(&counts);
    let half = stats::z_for_confidence(0.95) * stats::standard_error(&counts);
    Ok(QuenchedIntersections {
        n,
        mean,
        ci: (mean - half, mean + half),
        pairs,
        censored,
        censor_flagged: censored * 2 > pairs,
    })
}

#[derive(Debug, Clone)]
pub struct ScalingPoint {
    pub n: u64,
    pub horizon: u64,
    /// One quenched estimate per sampled environment.
    pub estimates: Vec<f64>,
    pub median: f64,
    pub q90: f64,
    pub censored_pairs: u64,
}

#[derive(Debug, Clone)]
pub struct IntersectionScaling {
    pub points: Vec<ScalingPoint>,
    /// log-log regression of the median estimate against n.
    pub slope: f64,
    pub r_squared: f64,
    /// e1-speed used to size the horizons.
    pub directional_speed: f64,
}

/// Quenched intersection estimates over sampled environments on a
/// geometric radius grid, with the growth exponent of the median.
pub fn intersection_scaling<T: Scalar>(
    law: &EnvironmentLaw<T>,
    n_grid: &[u64],
    env_count: u64,
    pairs: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<IntersectionScaling> {
    if n_grid.len() < 4 {
        return Err(Error::Parameter("radius grid needs at least 4 points".into()));
    }
    if n_grid.windows(2).any(|w| w[0] == 0 || w[1] <= w[0]) {
        return Err(Error::Parameter("radius grid must be positive and strictly increasing".into()));
    }
    let base_ratio = n_grid[1] as f64 / n_grid[0] as f64;
    for w in n_grid.windows(2) {
        let ratio = w[1] as f64 / w[0] as f64;
        if (ratio.ln() - base_ratio.ln()).abs() > 0.15 {
            return Err(Error::Parameter("radius grid must be geometric".into()));
        }
    }
    if env_count == 0 || pairs == 0 {
        return Err(Error::Parameter("need env_count >= 1 and pairs >= 1".into()));
    }

    // size step budgets off a pilot speed estimate for the law
    let pilot = velocity_estimate(law, 400, 100, master_seed, derive_key(stream_label, &[0xF1]))?;
    let directional_speed = pilot.mean[0].max(0.0);

    let mut points = Vec::with_capacity(n_grid.len());
    for (ni, &n) in n_grid.iter().enumerate() {
        let horizon = default_horizon(n, directional_speed);
        let mut estimates = Vec::with_capacity(env_count as usize);
        let mut censored_pairs = 0;
        for e in 0..env_count {
            let env_key = trial_key(master_seed, stream_label, e, StreamRole::Env);
            let env = Environment::new(law.clone(), env_key);
            let pair_master = derive_key(master_seed, &[stream_label, e, ni as u64]);
            let q = quenched_expected_intersections(&env, n, pairs, horizon, pair_master, stream_label)?;
            estimates.push(q.mean);
            censored_pairs += q.censored;
        }
        let median = stats::median(&estimates);
        let q90 = stats::quantile(&estimates, 0.9);
        points.push(ScalingPoint { n, horizon, estimates, median, q90, censored_pairs });
    }

    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median.max(1e-300).ln()).collect();
    let fit = stats::linear_fit(&xs, &ys)
        .ok_or_else(|| Error::Parameter("scaling regression needs two grid points".into()))?;
    Ok(IntersectionScaling {
        points,
        slope: fit.slope,
        r_squared: fit.r_squared,
        directional_speed,
    })
}
