//! Regeneration times along a direction: detection on finite paths,
//! renewal-structure diagnostics, and increment-tail estimation.
//!
//! A time n >= 1 is a regeneration for direction ell when every earlier
//! height <X_j, ell> is strictly below <X_n, ell> and every later observed
//! height is at least <X_n, ell>. On a finite path the unseen future can
//! falsify a candidate, so candidates are certified only when the path
//! ends at least `guard` above the candidate's height; under a transient
//! law the chance a certified time is false decays exponentially in the
//! guard. The final position is never a candidate: it has no observed
//! future at all.

use std::collections::BTreeSet;

use crate::lattice::{self, Coords};
use crate::stats;
use crate::walk::Trajectory;
use crate::{Error, Result};

pub const DEFAULT_GUARD: i64 = 20;

/// Detected regenerations of one trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenerationRecord {
    /// Certified regeneration times, increasing.
    pub times: Vec<u64>,
    /// (dt, dX) between consecutive certified times; entry k is
    /// (tau_{k+2} - tau_{k+1}, X_{tau_{k+2}} - X_{tau_{k+1}}), i.e. the
    /// renewal ensemble that excludes the first regeneration.
    pub increments: Vec<(u64, Coords)>,
    /// All candidate times (definition satisfied on the observed path),
    /// certified or not.
    pub candidates: Vec<u64>,
    /// (tau_1, X_{tau_1}) for the first certified regeneration, kept apart
    /// from the pooled increments.
    pub first: Option<(u64, Coords)>,
    /// Certification margin used.
    pub guard: i64,
}

/// Two-pass detector: prefix strict-maximum and suffix minimum over the
/// heights, then one sweep classifying each interior time.
pub fn find_regenerations(traj: &Trajectory, ell: Coords, guard: i64) -> RegenerationRecord {
    assert!(guard >= 0, "guard must be nonnegative");
    let h = traj.heights(ell);
    let n = h.len();
    let mut candidates = Vec::new();
    let mut times = Vec::new();
    if n >= 2 {
        // suffix_min[j] = min h[j..]; one extra cell keeps the loop branchless
        let mut suffix_min = vec![i64::MAX; n + 1];
        for j in (0..n).rev() {
            suffix_min[j] = h[j].min(suffix_min[j + 1]);
        }
        let final_height = h[n - 1];
        let mut prefix_max = h[0];
        for j in 1..n - 1 {
            let height = h[j];
            if prefix_max < height && height <= suffix_min[j + 1] {
                candidates.push(j as u64);
                if final_height - height >= guard {
                    times.push(j as u64);
                }
            }
            prefix_max = prefix_max.max(height);
        }
    }
    let first = times.first().map(|&t| (t, traj.position(t)));
    let increments = times
        .windows(2)
        .map(|w| (w[1] - w[0], lattice::sub(traj.position(w[1]), traj.position(w[0]))))
        .collect();
    RegenerationRecord { times, increments, candidates, first, guard }
}

/// Renewal-structure diagnostics over pooled increments from many walks.
/// Only the k >= 1 increments enter (each record's `increments` list);
/// the first regeneration has a different law and stays out.
#[derive(Debug, Clone)]
pub struct IidDiagnostics {
    pub n_records: usize,
    pub n_increments: usize,
    pub mean_dt: f64,
    pub var_dt: f64,
    pub mean_dx: [f64; 3],
    pub var_dx: [f64; 3],
    /// Pooled lag-1 autocorrelation of dt; pairs adjacent within a record
    /// only. Absent without any within-record pair.
    pub autocorrelation: Option<f64>,
    /// KS statistic between the first and second half of the pooled dt
    /// sample (split in pooling order). Absent with fewer than 2 per half.
    pub ks_half_split: Option<f64>,
    /// No record contributed an adjacent increment pair.
    pub insufficient: bool,
}

pub fn iid_diagnostics(records: &[RegenerationRecord]) -> IidDiagnostics {
    let chunks: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.increments.iter().map(|(dt, _)| *dt as f64).collect())
        .collect();
    let pooled: Vec<f64> = chunks.iter().flatten().copied().collect();
    let n = pooled.len();

    let mut mean_dx = [0.0; 3];
    let mut var_dx = [0.0; 3];
    for axis in 0..3 {
        let xs: Vec<f64> = records
            .iter()
            .flat_map(|r| r.increments.iter().map(move |(_, dx)| dx[axis] as f64))
            .collect();
        if !xs.is_empty() {
            mean_dx[axis] = stats::mean(&xs);
            var_dx[axis] = stats::variance(&xs);
        }
    }

    let autocorrelation =
        stats::pooled_lag1_autocorrelation(chunks.iter().map(|c| c.as_slice()));
    let ks_half_split = if n >= 4 {
        let (a, b) = pooled.split_at(n / 2);
        Some(stats::ks_two_sample(a, b))
    } else {
        None
    };
    IidDiagnostics {
        n_records: records.len(),
        n_increments: n,
        mean_dt: if n > 0 { stats::mean(&pooled) } else { 0.0 },
        var_dt: if n > 0 { stats::variance(&pooled) } else { 0.0 },
        mean_dx,
        var_dx,
        autocorrelation,
        ks_half_split,
        insufficient: autocorrelation.is_none(),
    }
}

/// One point of the empirical survival function.
#[derive(Debug, Clone, Copy)]
pub struct TailPoint {
    pub u: f64,
    /// Fraction with dt > u, strict.
    pub survival: f64,
    /// 95% Clopper-Pearson bounds; at survival 0 the lower bound is
    /// exactly 0 and only the upper bound is informative.
    pub ci: (f64, f64),
    pub exceedances: u64,
}

#[derive(Debug, Clone)]
pub struct TailEstimate {
    pub points: Vec<TailPoint>,
    pub n: usize,
    /// Fit of log(-log S) against log log u over points with
    /// 0 < S < 1 and u > 1; the slope is the stretch exponent alpha-hat.
    pub fit: Option<stats::LinearFit<f64>>,
    /// Always attached to the fit: the asymptotic regime the exponent
    /// speaks about is unreachable at simulation scale, so the slope is a
    /// finite-size diagnostic, not an estimate of the true alpha.
    pub caveat: &'static str,
}

pub fn tail_estimate(samples: &[u64], u_grid: &[f64]) -> Result<TailEstimate> {
    if samples.is_empty() {
        return Err(Error::Parameter("tail estimate needs samples".into()));
    }
    if u_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("u grid must be strictly increasing".into()));
    }
    let n = samples.len();
    let points: Vec<TailPoint> = u_grid
        .iter()
        .map(|&u| {
            let k = samples.iter().filter(|&&s| s as f64 > u).count() as u64;
            TailPoint {
                u,
                survival: k as f64 / n as f64,
                ci: stats::clopper_pearson(k, n as u64, 0.95),
                exceedances: k,
            }
        })
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in &points {
        if p.survival > 0.0 && p.survival < 1.0 && p.u > 1.0 {
            xs.push(p.u.ln().ln());
            ys.push((-p.survival.ln()).ln());
        }
    }
    let fit = stats::linear_fit(&xs, &ys);
    Ok(TailEstimate {
        points,
        n,
        fit,
        caveat: "stretched-exponent fit is a finite-size diagnostic; the asymptotic regime is far beyond simulated scales",
    })
}

/// The definition applied literally in O(N^2); the reference the detector
/// is measured against.
pub fn find_regenerations_oracle(traj: &Trajectory, ell: Coords) -> Vec<u64> {
    let h = traj.heights(ell);
    let n = h.len();
    let mut out = Vec::new();
    for cand in 1..n.saturating_sub(1) {
        let before_ok = (0..cand).all(|j| h[j] < h[cand]);
        let after_ok = (cand + 1..n).all(|j| h[j] >= h[cand]);
        if before_ok && after_ok {
            out.push(cand as u64);
        }
    }
    out
}

/// Exact set equality of candidates against the oracle, and certified
/// containment; used by tests and the acceptance suite.
pub fn detector_matches_oracle(traj: &Trajectory, ell: Coords, guard: i64) -> bool {
    let record = find_regenerations(traj, ell, guard);
    let oracle = find_regenerations_oracle(traj, ell);
    let certified: BTreeSet<u64> = record.times.iter().copied().collect();
    let oracle_set: BTreeSet<u64> = oracle.iter().copied().collect();
    record.candidates == oracle && certified.is_subset(&oracle_set)
}
