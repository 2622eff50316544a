//! Acceptance gate: one test per release-blocking behavior, each ending
//! in a single PASS line with its headline numbers and wall time.
//!
//! Scales and tolerances here are the contract; nothing below reads
//! environment variables or adapts to the machine. Expensive experiment
//! runs are shared through a process-wide cache keyed by (canonical
//! config text, thread count), so a config is computed once per thread
//! count no matter how many tests consume it.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rwre_core::config::{ExperimentConfig, ExperimentKind, LawSpec};
use rwre_core::env::EnvironmentLaw;
use rwre_core::lattice::ORIGIN;
use rwre_core::experiments::{run_experiment, RunOptions};
use rwre_core::kernel::f_n_exact;
use rwre_core::lattice::SignedAxis;
use rwre_core::regen::{detector_matches_oracle, DEFAULT_GUARD};
use rwre_core::rng::Stream;
use rwre_core::table::{summarize, ResultTable};
use rwre_core::traps::{build_naive_trap, supermartingale_check, TrapSpec};
use rwre_core::env::Environment;
use rwre_core::walk::{self, StopRule, Trajectory};

fn meta_f64(table: &ResultTable, key: &str) -> f64 {
    table
        .meta_value(key)
        .unwrap_or_else(|| panic!("missing meta key {key}"))
        .parse()
        .unwrap()
}

fn cached_run(cfg: &ExperimentConfig, threads: usize) -> ResultTable {
    static CACHE: OnceLock<Mutex<HashMap<(String, usize), ResultTable>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (cfg.to_text(), threads);
    let mut map = cache.lock().unwrap();
    if let Some(table) = map.get(&key) {
        return table.clone();
    }
    let table = run_experiment(cfg, &RunOptions { threads }).unwrap();
    map.insert(key, table.clone());
    table
}

// The standard laws the gate exercises.

fn ballistic_point_law() -> EnvironmentLaw<f64> {
    EnvironmentLaw::drift_perturbed(2, 0.15, SignedAxis::PLUS_E1, 0.1).unwrap()
}

fn drift2() -> LawSpec {
    LawSpec::DriftPerturbed { delta: 0.2, kappa: 0.05 }
}

fn dirichlet2() -> LawSpec {
    LawSpec::Dirichlet { alpha: 1.0, kappa: 0.05 }
}

// The experiment configs the gate runs; thread-count invariance below
// reruns exactly this list.

fn fn_tail_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::FnTail);
    cfg.master_seed = 1001;
    cfg.law = dirichlet2();
    cfg
}

fn torus_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Torus);
    cfg.master_seed = 1002;
    cfg.law = dirichlet2();
    cfg
}

fn regen_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Regen);
    cfg.master_seed = 1003;
    cfg.law = drift2();
    cfg.trials = 1000;
    cfg.n = 2000;
    cfg
}

fn velocity_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Velocity);
    cfg.master_seed = 1004;
    cfg.law = drift2();
    cfg
}

fn condt_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::CondT);
    cfg.master_seed = 1005;
    cfg.law = drift2();
    cfg
}

fn clt_decay_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Clt);
    cfg.master_seed = 1006;
    cfg.law = dirichlet2();
    cfg
}

fn clt_gap_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Clt);
    cfg.master_seed = 1007;
    cfg.law = LawSpec::DriftPerturbed { delta: 0.15, kappa: 0.1 };
    cfg.envs = 1;
    cfg.grid = vec![50, 100, 200, 400];
    cfg
}

fn intersect_d3_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Intersect);
    cfg.master_seed = 1008;
    cfg.dim = 3;
    cfg.law = LawSpec::DriftPerturbed { delta: 0.15, kappa: 0.01 };
    cfg
}

fn intersect_d1_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Intersect);
    cfg.master_seed = 1009;
    cfg.dim = 1;
    cfg.law = LawSpec::Uniform;
    cfg.envs = 20;
    cfg.pairs = 20;
    cfg.grid = vec![8, 16, 32, 64];
    cfg
}

fn trap_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Trap);
    cfg.master_seed = 1010;
    cfg
}

#[test]
fn flat_environment_keeps_density_at_one() {
    let started = Instant::now();
    let env = Environment::new(ballistic_point_law(), 5);
    assert_eq!(f_n_exact(&env, 0).unwrap(), 1.0, "f_0 must be exactly 1");
    let mut worst = 0.0f64;
    for n in 1..=64 {
        let f = f_n_exact(&env, n).unwrap();
        worst = worst.max((f - 1.0).abs());
    }
    assert!(worst <= 1e-12, "constant-environment density drifted by {worst:e}");
    println!(
        "PASS flat environment: f_0 = 1 exactly, max |f_n - 1| = {:.2e} for n <= 64 ({:.2?})",
        worst,
        started.elapsed()
    );
}

#[test]
fn random_environment_density_has_unit_mean() {
    let started = Instant::now();
    let table = cached_run(&fn_tail_cfg(), 1);
    let mean = meta_f64(&table, "mean_f_n");
    let se = meta_f64(&table, "se_f_n");
    assert!(se > 0.0, "degenerate spread over sampled environments");
    assert!(
        (mean - 1.0).abs() <= 4.0 * se,
        "mean f_n = {mean} strays from 1 by more than 4 se = {}",
        4.0 * se
    );
    println!(
        "PASS unit mean density: mean f_32 = {:.6} within 4 se = {:.6} of 1 over 200 environments ({:.2?})",
        mean,
        4.0 * se,
        started.elapsed()
    );
}

#[test]
fn torus_stationary_law_matches_the_density_sequence() {
    let started = Instant::now();
    let table = cached_run(&torus_cfg(), 1);
    let residual = meta_f64(&table, "residual");
    let min_pi = meta_f64(&table, "min_pi");
    let gap = meta_f64(&table, "gap");
    assert!(residual <= 1e-10, "stationarity residual {residual:e} too large");
    assert!(min_pi > 0.0, "stationary vector touches zero");
    assert!(gap <= 1e-6, "density gap {gap:e} exceeds 1e-6 at n = 500");
    println!(
        "PASS torus consistency: residual {:.2e}, min pi {:.3e}, parity-averaged gap {:.2e} ({:.2?})",
        residual,
        min_pi,
        gap,
        started.elapsed()
    );
}

#[test]
fn regeneration_detector_matches_the_quadratic_oracle() {
    let started = Instant::now();
    let laws: [EnvironmentLaw<f64>; 4] = [
        EnvironmentLaw::drift_perturbed(2, 0.2, SignedAxis::PLUS_E1, 0.05).unwrap(),
        EnvironmentLaw::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap(),
        EnvironmentLaw::uniform(2).unwrap(),
        EnvironmentLaw::drift_perturbed(3, 0.1, SignedAxis::PLUS_E1, 0.02).unwrap(),
    ];
    let ell = SignedAxis::PLUS_E1.unit();
    let steps = 2000u64;
    let rule = StopRule::fixed_steps(steps);
    for trial in 0..1000u64 {
        let law = &laws[(trial % 4) as usize];
        let env = walk::annealed_env(law, 424242, 0xACC4, trial);
        let mut stream = Stream::new(walk::annealed_walk_key(424242, 0xACC4, trial));
        let mut positions = Vec::with_capacity(steps as usize + 1);
        walk::drive(&env, ORIGIN, &rule, &mut stream, |_, x| positions.push(x));
        let traj = Trajectory::from_positions(positions);
        assert!(
            detector_matches_oracle(&traj, ell, DEFAULT_GUARD),
            "detector disagrees with oracle on trial {trial}"
        );
    }
    println!(
        "PASS regeneration detector: candidate sets equal the quadratic oracle on 1000 mixed-law walks of length 2000 ({:.2?})",
        started.elapsed()
    );
}

#[test]
fn perturbed_law_is_ballistic_with_high_confidence() {
    let started = Instant::now();
    let table = cached_run(&velocity_cfg(), 1);
    let mean = meta_f64(&table, "mean_1");
    let se = meta_f64(&table, "se_1");
    let lower = mean - 2.576 * se;
    assert!(lower > 0.0, "99% interval [{lower}, ..] for the e1-speed reaches 0");
    println!(
        "PASS ballisticity: e1-speed {:.4} with 99% lower bound {:.4} > 0 over 200 walks of 10^4 steps ({:.2?})",
        mean,
        lower,
        started.elapsed()
    );
}

#[test]
fn backtrack_probability_decays_geometrically_in_depth() {
    let started = Instant::now();
    let table = cached_run(&condt_cfg(), 1);
    let fits = summarize(&table).unwrap();
    let fit = &fits[0].fit;
    assert!(fit.slope < 0.0, "ln backtrack probability must fall with depth, got slope {}", fit.slope);
    assert!(fit.r_squared >= 0.9, "depth fit r^2 = {} below 0.9", fit.r_squared);
    println!(
        "PASS backtrack decay: ln p vs depth slope {:.3} (r^2 = {:.4}) over depths 5..25, 10^4 trials each ({:.2?})",
        fit.slope,
        fit.r_squared,
        started.elapsed()
    );
}

#[test]
fn annealed_kernel_peak_decays_diffusively() {
    let started = Instant::now();
    let table = cached_run(&clt_decay_cfg(), 1);
    let slope = meta_f64(&table, "decay_slope");
    let r2 = meta_f64(&table, "decay_r2");
    assert!(
        (-1.3..=-0.7).contains(&slope),
        "log-log peak decay slope {slope} outside [-1.3, -0.7]"
    );
    println!(
        "PASS kernel decay: peak slope {:.3} in [-1.3, -0.7] (r^2 = {:.4}) over 50 environments, n = 16..128 ({:.2?})",
        slope,
        r2,
        started.elapsed()
    );
}

#[test]
fn kernel_shape_approaches_its_gaussian_limit() {
    let started = Instant::now();
    let table = cached_run(&clt_gap_cfg(), 1);
    let tv = table.column_values("tv_gap").unwrap();
    let (early, late) = (tv[0], tv[tv.len() - 1]);
    assert!(late < early, "tv gap failed to shrink: {late} at n = 400 vs {early} at n = 50");
    assert!(late < 0.15, "tv gap {late} at n = 400 not below 0.15");
    println!(
        "PASS local limit shape: tv gap {:.4} at n = 50 down to {:.4} at n = 400 ({:.2?})",
        early,
        late,
        started.elapsed()
    );
}

#[test]
fn strong_drift_starves_two_walk_intersections() {
    let started = Instant::now();
    let ballistic = cached_run(&intersect_d3_cfg(), 1);
    let slope3 = meta_f64(&ballistic, "slope");
    assert!(slope3 <= 0.5, "d = 3 intersection growth exponent {slope3} above 0.5");
    let control = cached_run(&intersect_d1_cfg(), 1);
    let slope1 = meta_f64(&control, "slope");
    assert!(slope1 >= 0.8, "d = 1 control exponent {slope1} below 0.8");
    println!(
        "PASS intersections: growth exponent {:.3} <= 0.5 under d = 3 drift, control {:.3} >= 0.8 for d = 1 ({:.2?})",
        slope3,
        slope1,
        started.elapsed()
    );
}

#[test]
fn planted_traps_hold_walks_exponentially_long() {
    let started = Instant::now();
    let table = cached_run(&trap_cfg(), 1);
    let fits = summarize(&table).unwrap();
    let escape = &fits[0].fit;
    assert!(escape.slope > 0.0, "escape times must grow with trap size, slope {}", escape.slope);
    assert!(escape.r_squared >= 0.9, "escape fit r^2 = {} below 0.9", escape.r_squared);
    let prob = &fits[1].fit;
    assert!(prob.slope < 0.0, "trap probability must fall with region size, slope {}", prob.slope);
    assert!(prob.r_squared >= 0.95, "probability fit r^2 = {} below 0.95", prob.r_squared);
    println!(
        "PASS traps: log escape-time slope {:.3} (r^2 = {:.4}), log-probability per site {:.4} (r^2 = {:.4}) ({:.2?})",
        escape.slope,
        escape.r_squared,
        prob.slope,
        prob.r_squared,
        started.elapsed()
    );
}

#[test]
fn planted_trap_admits_an_exponential_supermartingale() {
    let started = Instant::now();
    let c1 = 0.2;
    let law = EnvironmentLaw::<f64>::nestling(2, 0.3).unwrap();
    let spec = TrapSpec::new(36, c1, law).unwrap();
    let env = build_naive_trap(&spec, 77).unwrap();
    let (c2, c3) = (8.0 / c1, c1 / 4.0);
    let report = supermartingale_check(&env, &spec, c2, c3);
    assert!(report.sites_checked > 100, "only {} sites beyond radius c2 = {c2}", report.sites_checked);
    assert!(
        report.passed(),
        "exponential moment grew at {} sites, first {:?}",
        report.violations.len(),
        report.violations.first()
    );
    println!(
        "PASS supermartingale certificate: exact one-step check at {} sites with c2 = {}, c3 = {}, no violations ({:.2?})",
        report.sites_checked,
        c2,
        c3,
        started.elapsed()
    );
}

#[test]
fn thread_count_never_changes_output_bytes() {
    let started = Instant::now();
    let configs = [
        fn_tail_cfg(),
        torus_cfg(),
        regen_cfg(),
        velocity_cfg(),
        condt_cfg(),
        clt_decay_cfg(),
        clt_gap_cfg(),
        intersect_d3_cfg(),
        intersect_d1_cfg(),
        trap_cfg(),
    ];
    for cfg in &configs {
        let single = cached_run(cfg, 1).to_csv_string();
        let pooled = cached_run(cfg, 8).to_csv_string();
        assert_eq!(
            single, pooled,
            "{} output depends on the thread count",
            cfg.kind.as_str()
        );
    }
    println!(
        "PASS determinism: {} experiment configs byte-identical at 1 and 8 threads ({:.2?})",
        configs.len(),
        started.elapsed()
    );
}
