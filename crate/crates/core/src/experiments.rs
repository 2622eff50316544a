//! Experiment dispatch: a parsed config in, one result table out.
//!
//! Every run is a pure function of the config (master seed included).
//! The thread count only changes the schedule, never the bytes: each
//! work unit derives its own streams from (master seed, kind label, unit
//! index), and the reduction re-sorts by unit index before any rows are
//! emitted or any running sum is formed.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use crate::clt;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::geometry::{self, Parallelogram};
use crate::intersect;
use crate::kernel;
use crate::lattice::{self, SignedAxis, ORIGIN};
use crate::regen;
use crate::rng::{derive_key, trial_key, Stream, StreamRole};
use crate::stats;
use crate::table::ResultTable;
use crate::torus;
use crate::traps::{self, TrapSpec};
use crate::walk::{self, BacktrackEstimator, StopRule, Trajectory};
use crate::{Error, Real, Result};

/// Execution knobs that must not influence the output bytes.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads for the local pool; 0 takes the library default.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { threads: 0 }
    }
}

/// Pilot scales used to size auto horizons when `run.horizon = 0`.
const PILOT_N: u64 = 400;
const PILOT_TRIALS: u64 = 64;

/// A drift below this is treated as zero when horizons are sized.
const BALLISTIC_SPEED_FLOOR: f64 = 0.05;

// Sub-stream tags under a kind label; grid point i gets its own label so
// per-point trial indices never collide across points.
const SUB_GRID: u64 = 1;
const SUB_PILOT: u64 = 2;
const SUB_QUENCHED: u64 = 3;
const SUB_ANNEALED: u64 = 4;

/// Third seed component: fixed per kind so different experiments never
/// share a stream even under one master seed.
fn kind_label(kind: ExperimentKind) -> u64 {
    match kind {
        ExperimentKind::CondT => 1,
        ExperimentKind::Velocity => 2,
        ExperimentKind::Regen => 3,
        ExperimentKind::Intersect => 4,
        ExperimentKind::FnTail => 5,
        ExperimentKind::Torus => 6,
        ExperimentKind::Trap => 7,
        ExperimentKind::Clt => 8,
        ExperimentKind::ExitStats => 9,
    }
}

fn sub_label(kind: ExperimentKind, tag: u64, index: u64) -> u64 {
    derive_key(kind_label(kind), &[tag, index])
}

/// Runs the experiment the config describes on a private thread pool and
/// stamps the wall time on the returned table (never in its bytes).
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultTable> {
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let mut table = pool.install(|| dispatch(cfg))?;
    table.wall_time_seconds = Some(started.elapsed().as_secs_f64());
    Ok(table)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<ResultTable> {
    match cfg.kind {
        ExperimentKind::CondT => run_condt(cfg),
        ExperimentKind::Velocity => run_velocity(cfg),
        ExperimentKind::Regen => run_regen(cfg),
        ExperimentKind::Intersect => run_intersect(cfg),
        ExperimentKind::FnTail => run_fn_tail(cfg),
        ExperimentKind::Torus => run_torus(cfg),
        ExperimentKind::Trap => run_trap(cfg),
        ExperimentKind::Clt => run_clt(cfg),
        ExperimentKind::ExitStats => run_exit_stats(cfg),
    }
}

/// Runs `count` independent units on the current pool and returns their
/// results in unit order; the sort pins the reduction order no matter how
/// work stealing interleaved the units.
fn par_try<R: Send>(count: usize, f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    let mut items: Vec<(usize, Result<R>)> =
        (0..count).into_par_iter().map(|i| (i, f(i))).collect();
    items.sort_by_key(|item| item.0);
    items.into_iter().map(|(_, r)| r).collect()
}

/// e1-drift from a short pilot run, for horizon sizing.
fn pilot_speed(
    law: &crate::env::EnvironmentLaw<Real>,
    cfg: &ExperimentConfig,
) -> Result<walk::VelocityEstimate> {
    walk::velocity_estimate(law, PILOT_N, PILOT_TRIALS, cfg.master_seed, sub_label(cfg.kind, SUB_PILOT, 0))
}

// --- condt -----------------------------------------------------------

fn run_condt(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    if cfg.grid.is_empty() {
        return Err(Error::Parameter("depth grid must not be empty".into()));
    }
    let speed = if cfg.horizon == 0 { pilot_speed(&law, cfg)?.mean[0] } else { 0.0 };
    // A ballistic walk reaches depth l in about l / speed steps; without
    // measurable drift the diffusive scale l^2 takes over.
    let horizon_for = |l: u64| -> u64 {
        if cfg.horizon > 0 {
            cfg.horizon
        } else if speed > BALLISTIC_SPEED_FLOOR {
            (50.0 * l as f64 / speed).ceil() as u64
        } else {
            50 * l * l
        }
    };
    let units = par_try(cfg.grid.len(), |i| {
        let l = cfg.grid[i];
        let horizon = horizon_for(l);
        let est = walk::backtrack_probability(
            &law,
            SignedAxis::PLUS_E1,
            l,
            cfg.trials,
            horizon,
            cfg.master_seed,
            sub_label(cfg.kind, SUB_GRID, i as u64),
            BacktrackEstimator::Tilted,
        )?;
        Ok((l, horizon, est))
    })?;
    let mut table = ResultTable::for_config(
        &[
            "l",
            "horizon",
            "trials",
            "backtracks",
            "right_exits",
            "censored",
            "p_fail",
            "p_drop",
            "ci_lo",
            "ci_hi",
        ],
        cfg,
    )?;
    for (l, horizon, est) in &units {
        table.push_row(&[
            *l as f64,
            *horizon as f64,
            est.trials as f64,
            est.backtracks,
            est.right_exits as f64,
            est.censored as f64,
            est.estimate,
            est.estimate_dropped,
            est.ci.0,
            est.ci.1,
        ]);
    }
    table.set_meta("estimator", "tilted");
    table.set_meta("pilot_speed", speed);
    table.set_meta("summary_fit", "log(p_fail) ~ l");
    Ok(table)
}

// --- velocity --------------------------------------------------------

fn run_velocity(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    if cfg.n == 0 || cfg.trials == 0 {
        return Err(Error::Parameter("velocity experiment needs n >= 1 and trials >= 1".into()));
    }
    let label = kind_label(cfg.kind);
    let n = cfg.n;
    let rule = StopRule::fixed_steps(n);
    struct Unit {
        row: Vec<f64>,
        dir: [f64; 3],
        moved: bool,
    }
    let units = par_try(cfg.trials as usize, |i| {
        let trial = i as u64;
        let env = walk::annealed_env(&law, cfg.master_seed, label, trial);
        let mut stream = Stream::new(walk::annealed_walk_key(cfg.master_seed, label, trial));
        let report = walk::drive(&env, ORIGIN, &rule, &mut stream, |_, _| {});
        let x = report.position;
        let norm = lattice::l2_norm(x);
        let mut row = vec![trial as f64];
        let mut dir = [0.0f64; 3];
        for axis in 0..cfg.dim {
            row.push(x[axis] as f64 / n as f64);
            if norm > 0.0 {
                dir[axis] = x[axis] as f64 / norm;
            }
        }
        Ok(Unit { row, dir, moved: norm > 0.0 })
    })?;
    let mut columns = vec!["trial".to_string()];
    for axis in 0..cfg.dim {
        columns.push(format!("x{}_over_n", axis + 1));
    }
    let refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let mut table = ResultTable::for_config(&refs, cfg)?;
    // Accumulate in trial order so the stamped moments are the ones a
    // sequential pass over the same streams produces.
    let mut per_coord: Vec<Vec<f64>> = vec![Vec::new(); cfg.dim];
    let mut dir_sum = [0.0f64; 3];
    let mut dir_count = 0u64;
    for unit in &units {
        table.push_row(&unit.row);
        for axis in 0..cfg.dim {
            per_coord[axis].push(unit.row[axis + 1]);
            dir_sum[axis] += unit.dir[axis];
        }
        if unit.moved {
            dir_count += 1;
        }
    }
    let mut direction = [0.0f64; 3];
    if dir_count > 0 {
        let norm = dir_sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for axis in 0..3 {
                direction[axis] = dir_sum[axis] / norm;
            }
        }
    }
    table.set_meta("n", n);
    table.set_meta("trials", cfg.trials);
    for axis in 0..cfg.dim {
        table.set_meta(&format!("mean_{}", axis + 1), stats::mean(&per_coord[axis]));
        table.set_meta(&format!("se_{}", axis + 1), stats::standard_error(&per_coord[axis]));
        table.set_meta(&format!("direction_{}", axis + 1), direction[axis]);
    }
    Ok(table)
}

// --- regen -----------------------------------------------------------

fn run_regen(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    if cfg.n == 0 || cfg.trials == 0 {
        return Err(Error::Parameter("regeneration experiment needs n >= 1 and trials >= 1".into()));
    }
    let label = kind_label(cfg.kind);
    let ell = SignedAxis::PLUS_E1.unit();
    let rule = StopRule::fixed_steps(cfg.n);
    let records = par_try(cfg.trials as usize, |i| {
        let trial = i as u64;
        let env = walk::annealed_env(&law, cfg.master_seed, label, trial);
        let mut stream = Stream::new(walk::annealed_walk_key(cfg.master_seed, label, trial));
        let mut positions = Vec::with_capacity(cfg.n as usize + 1);
        walk::drive(&env, ORIGIN, &rule, &mut stream, |_, x| positions.push(x));
        Ok(regen::find_regenerations(&Trajectory::from_positions(positions), ell, cfg.guard))
    })?;
    let mut columns = vec!["trial".to_string(), "k".to_string(), "dt".to_string()];
    for axis in 0..cfg.dim {
        columns.push(format!("dx{}", axis + 1));
    }
    let refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let mut table = ResultTable::for_config(&refs, cfg)?;
    for (trial, record) in records.iter().enumerate() {
        for (k, (dt, dx)) in record.increments.iter().enumerate() {
            let mut row = vec![trial as f64, k as f64, *dt as f64];
            for axis in 0..cfg.dim {
                row.push(dx[axis] as f64);
            }
            table.push_row(&row);
        }
    }
    let diag = regen::iid_diagnostics(&records);
    table.set_meta("guard", cfg.guard);
    table.set_meta("records", diag.n_records);
    table.set_meta("increments", diag.n_increments);
    table.set_meta("mean_dt", diag.mean_dt);
    table.set_meta("var_dt", diag.var_dt);
    for axis in 0..cfg.dim {
        table.set_meta(&format!("mean_dx{}", axis + 1), diag.mean_dx[axis]);
        table.set_meta(&format!("var_dx{}", axis + 1), diag.var_dx[axis]);
    }
    if let Some(rho) = diag.autocorrelation {
        table.set_meta("dt_autocorrelation", rho);
    }
    if let Some(ks) = diag.ks_half_split {
        table.set_meta("dt_ks_half_split", ks);
    }
    if diag.insufficient {
        table.set_meta("diagnostics_note", "too few increments for dependence checks");
    }
    let dts: Vec<u64> = records
        .iter()
        .flat_map(|r| r.increments.iter().map(|(dt, _)| *dt))
        .collect();
    if dts.is_empty() {
        table.set_meta("tail_note", "no certified increments; tail unavailable");
    } else {
        let tail = regen::tail_estimate(&dts, &cfg.u_grid)?;
        for (i, p) in tail.points.iter().enumerate() {
            table.set_meta(
                &format!("tail_{i}"),
                format!("u {} survival {} lo {} hi {}", p.u, p.survival, p.ci.0, p.ci.1),
            );
        }
        if let Some(fit) = &tail.fit {
            table.set_meta("tail_slope", fit.slope);
            table.set_meta("tail_r2", fit.r_squared);
        }
        table.set_meta("tail_note", tail.caveat);
    }
    Ok(table)
}

// --- intersect -------------------------------------------------------

fn run_intersect(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    let scaling = intersect::intersection_scaling(
        &law,
        &cfg.grid,
        cfg.envs,
        cfg.pairs,
        cfg.master_seed,
        kind_label(cfg.kind),
    )?;
    let mut table = ResultTable::for_config(
        &["n", "horizon", "median", "q90", "censored_pairs"],
        cfg,
    )?;
    for point in &scaling.points {
        table.push_row(&[
            point.n as f64,
            point.horizon as f64,
            point.median,
            point.q90,
            point.censored_pairs as f64,
        ]);
    }
    table.set_meta("envs", cfg.envs);
    table.set_meta("pairs", cfg.pairs);
    table.set_meta("slope", scaling.slope);
    table.set_meta("r_squared", scaling.r_squared);
    table.set_meta("directional_speed", scaling.directional_speed);
    table.set_meta("summary_fit", "log(median) ~ log(n)");
    Ok(table)
}

// --- fn_tail ---------------------------------------------------------

fn run_fn_tail(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    let tail = kernel::f_n_tail(
        &law,
        cfg.n,
        cfg.envs,
        &cfg.u_grid,
        cfg.master_seed,
        kind_label(cfg.kind),
    )?;
    let mut table = ResultTable::for_config(
        &["u", "survival", "ci_lo", "ci_hi", "exceedances"],
        cfg,
    )?;
    for point in &tail.points {
        table.push_row(&[
            point.u,
            point.survival,
            point.ci.0,
            point.ci.1,
            point.exceedances as f64,
        ]);
    }
    table.set_meta("n", tail.n);
    table.set_meta("envs", tail.env_count);
    table.set_meta("mean_f_n", tail.mean);
    table.set_meta("se_f_n", tail.se);
    Ok(table)
}

// --- torus -----------------------------------------------------------

fn run_torus(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    let env = walk::annealed_env(&law, cfg.master_seed, kind_label(cfg.kind), 0);
    let l = cfg.l as usize;
    let chain = torus::torus_stationary(&env, l)?;
    let f = torus::torus_f_n(&env, l, cfg.n + 1)?;
    let n = cfg.n as usize;
    let g0 = chain.density(ORIGIN);
    // Parity average: the plain chain oscillates with period 2, the
    // two-step mean converges to the stationary density at the origin.
    let gap = (0.5 * (f[n] + f[n + 1]) - g0).abs();
    let min_pi = chain.stationary.iter().copied().fold(f64::INFINITY, f64::min);
    let mut table = ResultTable::for_config(&["k", "f_k"], cfg)?;
    for (k, value) in f.iter().take(n + 1).enumerate() {
        table.push_row(&[k as f64, *value]);
    }
    table.set_meta("l", cfg.l);
    table.set_meta("states", chain.states());
    table.set_meta("iterations", chain.iterations);
    table.set_meta("residual", chain.residual);
    table.set_meta("min_pi", min_pi);
    table.set_meta("g0", g0);
    table.set_meta("f_n_next", f[n + 1]);
    table.set_meta("gap", gap);
    Ok(table)
}

// --- trap ------------------------------------------------------------

/// Escape times grow like rho^l with rho = (1 + 2 c1) / (1 - 2 c1); the
/// horizon tracks that growth with head room, clamped to a sane range.
fn trap_auto_horizon(l: u64, c1: f64) -> u64 {
    let rho = (1.0 + 2.0 * c1) / (1.0 - 2.0 * c1);
    (500.0 * rho.powi(l as i32)).clamp(1e4, 1e7) as u64
}

fn run_trap(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    if cfg.grid.is_empty() {
        return Err(Error::Parameter("radius grid must not be empty".into()));
    }
    let units = par_try(cfg.grid.len(), |i| {
        let l = cfg.grid[i];
        let sub = sub_label(cfg.kind, SUB_GRID, i as u64);
        let spec = TrapSpec::new(l, cfg.c1, law.clone())?;
        let env = traps::build_naive_trap(&spec, trial_key(cfg.master_seed, sub, 0, StreamRole::Env))?;
        let horizon = if cfg.horizon > 0 { cfg.horizon } else { trap_auto_horizon(l, cfg.c1) };
        let escape = traps::trap_escape_time(&env, &spec, cfg.trials, horizon, cfg.master_seed, sub)?;
        let prob = traps::trap_probability_relaxed(&law, &spec, cfg.c1)?;
        Ok((l, horizon, escape, prob))
    })?;
    let mut table = ResultTable::for_config(
        &[
            "l",
            "interior_sites",
            "horizon",
            "trials",
            "censored",
            "mean_floor",
            "log_p_relaxed",
        ],
        cfg,
    )?;
    for (l, horizon, escape, prob) in &units {
        table.push_row(&[
            *l as f64,
            prob.interior_sites as f64,
            *horizon as f64,
            escape.trials as f64,
            escape.censored as f64,
            escape.mean_floor,
            prob.log_p,
        ]);
    }
    table.set_meta("c1", cfg.c1);
    if cfg.c1 > 0.0 {
        // Drift-calibrated Lyapunov pair for the largest planted trap.
        let (c2, c3) = (8.0 / cfg.c1, cfg.c1 / 4.0);
        let last = cfg.grid.len() - 1;
        let spec = TrapSpec::new(cfg.grid[last], cfg.c1, law.clone())?;
        let seed = trial_key(cfg.master_seed, sub_label(cfg.kind, SUB_GRID, last as u64), 0, StreamRole::Env);
        let env = traps::build_naive_trap(&spec, seed)?;
        let report = traps::supermartingale_check(&env, &spec, c2, c3);
        table.set_meta("c2", c2);
        table.set_meta("c3", c3);
        table.set_meta("lyapunov_sites", report.sites_checked);
        table.set_meta("lyapunov_violations", report.violations.len());
    }
    table.set_meta("summary_fit", "log(mean_floor) ~ l; log_p_relaxed ~ interior_sites");
    Ok(table)
}

// --- clt -------------------------------------------------------------

fn run_clt(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    if cfg.grid.is_empty() {
        return Err(Error::Parameter("time grid must not be empty".into()));
    }
    let units = par_try(cfg.grid.len(), |i| {
        let n = cfg.grid[i];
        let field = clt::annealed_kernel(&law, n, cfg.envs, cfg.master_seed, sub_label(cfg.kind, SUB_GRID, i as u64))?;
        let report = clt::kernel_clt_report(&field, cfg.dim, cfg.envs)?;
        Ok((n, field.max_value(), report))
    })?;
    let mut columns = vec!["n".to_string(), "max_value".to_string(), "tv_gap".to_string()];
    for axis in 0..cfg.dim {
        columns.push(format!("mean_{}", axis + 1));
    }
    for j in 0..cfg.dim {
        for k in j..cfg.dim {
            columns.push(format!("cov_{}{}", j + 1, k + 1));
        }
    }
    let refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let mut table = ResultTable::for_config(&refs, cfg)?;
    for (n, max_value, report) in &units {
        let mut row = vec![*n as f64, *max_value, report.tv_gap];
        for axis in 0..cfg.dim {
            row.push(report.mean[axis]);
        }
        for j in 0..cfg.dim {
            for k in j..cfg.dim {
                row.push(report.covariance[j][k]);
            }
        }
        table.push_row(&row);
    }
    let xs: Vec<f64> = units.iter().map(|(n, _, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = units.iter().map(|(_, m, _)| m.ln()).collect();
    if let Some(fit) = stats::linear_fit(&xs, &ys) {
        table.set_meta("decay_slope", fit.slope);
        table.set_meta("decay_r2", fit.r_squared);
    }
    table.set_meta("envs", cfg.envs);
    table.set_meta("summary_fit", "log(max_value) ~ log(n)");
    Ok(table)
}

// --- exit_stats ------------------------------------------------------

fn run_exit_stats(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let law = cfg.build_law::<Real>()?;
    let n = cfg.n;
    let pilot = pilot_speed(&law, cfg)?;
    let speed = pilot.mean[0];
    let ballistic = speed.abs() > BALLISTIC_SPEED_FLOOR && pilot.direction[0] > 0.0;
    let region = if ballistic {
        Parallelogram::new(cfg.dim, ORIGIN, n, pilot.direction)?
    } else {
        Parallelogram::axis_aligned(cfg.dim, ORIGIN, n)?
    };
    let horizon = if cfg.horizon > 0 {
        cfg.horizon
    } else if speed.abs() > BALLISTIC_SPEED_FLOOR {
        (50.0 * (n * n) as f64 / speed.abs()).ceil() as u64
    } else {
        (20.0 * (n as f64).powi(4)).ceil() as u64
    };
    let env = walk::annealed_env(&law, cfg.master_seed, sub_label(cfg.kind, SUB_QUENCHED, 0), 0);
    let quenched = geometry::exit_statistics(
        &env,
        &region,
        ORIGIN,
        cfg.trials,
        cfg.cell_size,
        horizon,
        cfg.master_seed,
        sub_label(cfg.kind, SUB_QUENCHED, 1),
    )?;
    let annealed = geometry::exit_statistics_annealed(
        &law,
        &region,
        ORIGIN,
        cfg.trials,
        cfg.cell_size,
        horizon,
        cfg.master_seed,
        sub_label(cfg.kind, SUB_ANNEALED, 0),
    )?;
    let keys: BTreeSet<([i64; 2], u64)> =
        quenched.counts.keys().chain(annealed.counts.keys()).cloned().collect();
    let mut table = ResultTable::for_config(
        &["cell_1", "cell_2", "time_bin", "quenched_freq", "annealed_freq"],
        cfg,
    )?;
    for key in &keys {
        table.push_row(&[
            key.0[0] as f64,
            key.0[1] as f64,
            key.1 as f64,
            quenched.frequency(key),
            annealed.frequency(key),
        ]);
    }
    table.set_meta("side", n);
    table.set_meta("horizon", horizon);
    table.set_meta("pilot_speed", speed);
    for axis in 0..cfg.dim {
        table.set_meta(&format!("direction_{}", axis + 1), region.direction[axis]);
    }
    for (name, hist) in [("quenched", &quenched), ("annealed", &annealed)] {
        table.set_meta(&format!("{name}_right_exits"), hist.right_exits);
        table.set_meta(&format!("{name}_non_right"), hist.non_right_exits);
        table.set_meta(&format!("{name}_censored"), hist.censored);
        table.set_meta(&format!("{name}_deviated"), hist.deviated);
    }
    table.set_meta("discrepancy", geometry::histogram_discrepancy(&quenched, &annealed));
    Ok(table)
}
