//! Experiment configuration: a flat `key = value` text format with dotted
//! namespaces, chosen over nested formats so configs diff line by line.
//!
//! Parsing is strict and line-precise: unknown keys, duplicate keys, keys
//! that the chosen experiment or law does not use, and malformed values
//! all fail with the 1-based line number. Serialization is canonical
//! (fixed key order, shortest round-trip numerals), so
//! `parse(to_text(c)) == c` for every config and `to_text` is a fixed
//! point on its own output.

use std::collections::BTreeMap;

use crate::env::EnvironmentLaw;
use crate::lattice::{self, SignedAxis};
use crate::{Error, Result, Scalar};

/// Which experiment the harness runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Backtrack probability against depth (directional transience probe).
    CondT,
    /// Per-trial endpoint velocities X_n / n.
    Velocity,
    /// Regeneration records and renewal diagnostics.
    Regen,
    /// Two-walk common-range scaling in shared environments.
    Intersect,
    /// Particle-view density f_n samples and tail survival.
    FnTail,
    /// Periodized stationary density against the density sequence.
    Torus,
    /// Planted-trap escape times and trap probabilities.
    Trap,
    /// Annealed kernel moments, Gaussian gap, and decay.
    Clt,
    /// Parallelogram exit histograms, quenched versus annealed.
    ExitStats,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::CondT,
        ExperimentKind::Velocity,
        ExperimentKind::Regen,
        ExperimentKind::Intersect,
        ExperimentKind::FnTail,
        ExperimentKind::Torus,
        ExperimentKind::Trap,
        ExperimentKind::Clt,
        ExperimentKind::ExitStats,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::CondT => "condt",
            ExperimentKind::Velocity => "velocity",
            ExperimentKind::Regen => "regen",
            ExperimentKind::Intersect => "intersect",
            ExperimentKind::FnTail => "fn_tail",
            ExperimentKind::Torus => "torus",
            ExperimentKind::Trap => "trap",
            ExperimentKind::Clt => "clt",
            ExperimentKind::ExitStats => "exit_stats",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Law description as it appears in config files. Dimension lives outside
/// (the top-level `dim` key), so one spec builds laws in any dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LawSpec {
    /// Every site uniform: the simple random walk.
    Uniform,
    /// Deterministic tilt +delta along e1 with floor kappa.
    DriftPerturbed { delta: f64, kappa: f64 },
    /// Symmetric truncated Dirichlet: alpha repeated 2d times, floor kappa.
    Dirichlet { alpha: f64, kappa: f64 },
    /// Built-in nestling mixture with per-axis drift magnitude delta.
    Nestling { delta: f64 },
}

impl LawSpec {
    pub fn kind_str(self) -> &'static str {
        match self {
            LawSpec::Uniform => "uniform",
            LawSpec::DriftPerturbed { .. } => "drift_perturbed",
            LawSpec::Dirichlet { .. } => "dirichlet",
            LawSpec::Nestling { .. } => "nestling",
        }
    }

    /// Keys this law kind reads, beyond `law.kind` itself.
    fn param_keys(self) -> &'static [&'static str] {
        match self {
            LawSpec::Uniform => &[],
            LawSpec::DriftPerturbed { .. } => &["law.delta", "law.kappa"],
            LawSpec::Dirichlet { .. } => &["law.alpha", "law.kappa"],
            LawSpec::Nestling { .. } => &["law.delta"],
        }
    }

    pub fn build<T: Scalar>(&self, dim: usize) -> Result<EnvironmentLaw<T>> {
        match *self {
            LawSpec::Uniform => EnvironmentLaw::uniform(dim),
            LawSpec::DriftPerturbed { delta, kappa } => {
                EnvironmentLaw::drift_perturbed(dim, delta, SignedAxis::PLUS_E1, kappa)
            }
            LawSpec::Dirichlet { alpha, kappa } => EnvironmentLaw::truncated_dirichlet(
                dim,
                vec![alpha; lattice::step_count(dim)],
                kappa,
            ),
            LawSpec::Nestling { delta } => EnvironmentLaw::nestling(dim, delta),
        }
    }
}

const ALL_KEYS: [&str; 19] = [
    "experiment",
    "dim",
    "seed",
    "law.kind",
    "law.delta",
    "law.kappa",
    "law.alpha",
    "run.trials",
    "run.n",
    "run.envs",
    "run.pairs",
    "run.grid",
    "run.u_grid",
    "run.l",
    "run.c1",
    "run.guard",
    "run.cell_size",
    "run.horizon",
    "out.path",
];

/// `run.*` keys each experiment kind reads; anything else is rejected so a
/// config cannot silently carry a knob the run ignores.
fn run_keys(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::CondT => &["run.trials", "run.grid", "run.horizon"],
        ExperimentKind::Velocity => &["run.trials", "run.n"],
        ExperimentKind::Regen => &["run.trials", "run.n", "run.guard", "run.u_grid"],
        ExperimentKind::Intersect => &["run.envs", "run.pairs", "run.grid"],
        ExperimentKind::FnTail => &["run.n", "run.envs", "run.u_grid"],
        ExperimentKind::Torus => &["run.l", "run.n"],
        ExperimentKind::Trap => &["run.trials", "run.grid", "run.c1", "run.horizon"],
        ExperimentKind::Clt => &["run.envs", "run.grid"],
        ExperimentKind::ExitStats => &["run.trials", "run.n", "run.cell_size", "run.horizon"],
    }
}

/// One experiment run, fully specified. Fields an experiment kind does not
/// read keep their defaults and are neither serialized nor accepted as
/// input keys for that kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Lattice dimension, 1 to 3.
    pub dim: usize,
    /// Master seed every trial stream is derived from.
    pub master_seed: u64,
    pub law: LawSpec,
    /// Walk or escape trials (condt, velocity, regen, trap, exit_stats).
    pub trials: u64,
    /// Step count, kernel time, torus time, or box side, by kind.
    pub n: u64,
    /// Environment count for quenched-averaged experiments.
    pub envs: u64,
    /// Walk pairs per environment (intersect).
    pub pairs: u64,
    /// Integer grid: depths L (condt, trap) or times n (intersect, clt).
    pub grid: Vec<u64>,
    /// Tail thresholds (regen, fn_tail).
    pub u_grid: Vec<f64>,
    /// Torus side length.
    pub l: u64,
    /// Planted inward drift strength (trap).
    pub c1: f64,
    /// Regeneration certification guard.
    pub guard: i64,
    /// Exit histogram cell side (exit_stats).
    pub cell_size: u64,
    /// Step budget per walk; 0 picks a kind-specific automatic horizon.
    pub horizon: u64,
    /// Output path; None leaves the choice to the caller.
    pub out: Option<String>,
}

impl ExperimentConfig {
    /// The canonical run for each kind: the scales the standard probes
    /// use. Fields outside the kind's key set stay at neutral values.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            kind,
            dim: 2,
            master_seed: 0,
            law: LawSpec::Uniform,
            trials: 0,
            n: 0,
            envs: 0,
            pairs: 0,
            grid: Vec::new(),
            u_grid: Vec::new(),
            l: 0,
            c1: 0.0,
            guard: 0,
            cell_size: 0,
            horizon: 0,
            out: None,
        };
        match kind {
            ExperimentKind::CondT => {
                cfg.trials = 10_000;
                cfg.grid = vec![5, 10, 15, 20, 25];
            }
            ExperimentKind::Velocity => {
                cfg.trials = 200;
                cfg.n = 10_000;
            }
            ExperimentKind::Regen => {
                cfg.trials = 200;
                cfg.n = 2_000;
                cfg.guard = 20;
                cfg.u_grid = vec![2.0, 4.0, 8.0, 16.0, 32.0];
            }
            ExperimentKind::Intersect => {
                cfg.envs = 50;
                cfg.pairs = 50;
                cfg.grid = vec![16, 32, 64, 128, 256, 512, 1024];
            }
            ExperimentKind::FnTail => {
                cfg.n = 32;
                cfg.envs = 200;
                cfg.u_grid = vec![1.25, 1.5, 2.0, 3.0, 5.0];
            }
            ExperimentKind::Torus => {
                cfg.l = 5;
                cfg.n = 500;
            }
            ExperimentKind::Trap => {
                // Uniform background leaves no ellipticity room below 1/(2d);
                // the default law must, so the trap construction is legal.
                cfg.law = LawSpec::Nestling { delta: 0.3 };
                cfg.trials = 200;
                cfg.grid = vec![4, 6, 8, 12, 16];
                cfg.c1 = 0.2;
            }
            ExperimentKind::Clt => {
                cfg.envs = 50;
                cfg.grid = vec![16, 32, 64, 128];
            }
            ExperimentKind::ExitStats => {
                cfg.trials = 500;
                cfg.n = 4;
                cfg.cell_size = 4;
            }
        }
        cfg
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(cfg_err(line_no, format!("expected `key = value`, got `{line}`")));
            };
            let key = k.trim();
            let value = v.trim();
            let Some(&canon) = ALL_KEYS.iter().find(|&&c| c == key) else {
                return Err(cfg_err(line_no, format!("unknown key `{key}`")));
            };
            if let Some(&(first, _)) = seen.get(canon) {
                return Err(cfg_err(
                    line_no,
                    format!("duplicate key `{key}` (first set on line {first})"),
                ));
            }
            seen.insert(canon, (line_no, value));
        }

        let Some(&(kind_line, kind_str)) = seen.get("experiment") else {
            return Err(cfg_err(0, "missing required key `experiment`".into()));
        };
        let kind = ExperimentKind::parse(kind_str).ok_or_else(|| {
            let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
            cfg_err(kind_line, format!("unknown experiment `{kind_str}` (one of: {})", names.join(", ")))
        })?;
        let mut cfg = Self::default_for(kind);

        if let Some(&(line, v)) = seen.get("dim") {
            cfg.dim = parse_num::<usize>("dim", v, line)?;
            if !(1..=3).contains(&cfg.dim) {
                return Err(cfg_err(line, format!("dim must be 1, 2, or 3, got {}", cfg.dim)));
            }
        }
        if let Some(&(line, v)) = seen.get("seed") {
            cfg.master_seed = parse_num::<u64>("seed", v, line)?;
        }

        cfg.law = parse_law(&seen)?;
        let law_line = seen.get("law.kind").map_or(0, |&(line, _)| line);
        cfg.law.build::<f64>(cfg.dim).map_err(|e| cfg_err(law_line, e.to_string()))?;

        let allowed = run_keys(kind);
        for &key in ALL_KEYS.iter().filter(|k| k.starts_with("run.")) {
            let Some(&(line, v)) = seen.get(key) else { continue };
            if !allowed.contains(&key) {
                return Err(cfg_err(
                    line,
                    format!("key `{key}` does not apply to experiment `{}`", kind.as_str()),
                ));
            }
            match key {
                "run.trials" => cfg.trials = parse_num("run.trials", v, line)?,
                "run.n" => cfg.n = parse_num("run.n", v, line)?,
                "run.envs" => cfg.envs = parse_num("run.envs", v, line)?,
                "run.pairs" => cfg.pairs = parse_num("run.pairs", v, line)?,
                "run.grid" => {
                    cfg.grid = parse_u64_list("run.grid", v, line)?;
                    if cfg.grid.windows(2).any(|w| w[1] <= w[0]) || cfg.grid.contains(&0) {
                        return Err(cfg_err(
                            line,
                            "run.grid must be strictly increasing and positive".into(),
                        ));
                    }
                }
                "run.u_grid" => {
                    cfg.u_grid = parse_f64_list("run.u_grid", v, line)?;
                    if cfg.u_grid.windows(2).any(|w| w[1] <= w[0])
                        || cfg.u_grid.iter().any(|&u| u < 0.0)
                    {
                        return Err(cfg_err(
                            line,
                            "run.u_grid must be strictly increasing and nonnegative".into(),
                        ));
                    }
                }
                "run.l" => {
                    cfg.l = parse_num("run.l", v, line)?;
                    if cfg.l == 0 {
                        return Err(cfg_err(line, "run.l must be >= 1".into()));
                    }
                }
                "run.c1" => {
                    cfg.c1 = parse_num("run.c1", v, line)?;
                    if !(0.0..=1.0).contains(&cfg.c1) {
                        return Err(cfg_err(line, "run.c1 must lie in [0, 1]".into()));
                    }
                }
                "run.guard" => {
                    cfg.guard = parse_num("run.guard", v, line)?;
                    if cfg.guard < 0 {
                        return Err(cfg_err(line, "run.guard must be >= 0".into()));
                    }
                }
                "run.cell_size" => {
                    cfg.cell_size = parse_num("run.cell_size", v, line)?;
                    if cfg.cell_size == 0 {
                        return Err(cfg_err(line, "run.cell_size must be >= 1".into()));
                    }
                }
                "run.horizon" => cfg.horizon = parse_num("run.horizon", v, line)?,
                _ => unreachable!("run key list is exhaustive"),
            }
        }
        if allowed.contains(&"run.grid") && cfg.grid.is_empty() {
            let line = seen.get("run.grid").map_or(0, |&(line, _)| line);
            return Err(cfg_err(
                line,
                format!("experiment `{}` needs a nonempty run.grid", kind.as_str()),
            ));
        }

        if let Some(&(_, v)) = seen.get("out.path") {
            cfg.out = Some(v.to_string());
        }
        Ok(cfg)
    }

    /// Canonical text form; `parse` inverts it exactly.
    pub fn to_text(&self) -> String {
        let mut lines = self.echo_lines();
        if let Some(out) = &self.out {
            lines.push(format!("out.path = {out}"));
        }
        lines.join("\n") + "\n"
    }

    /// The semantic config lines: everything that determines results.
    /// `out.path` is delivery plumbing and deliberately excluded, so two
    /// runs writing to different files still hash and echo identically.
    pub fn echo_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("experiment = {}", self.kind.as_str()),
            format!("dim = {}", self.dim),
            format!("seed = {}", self.master_seed),
            format!("law.kind = {}", self.law.kind_str()),
        ];
        match self.law {
            LawSpec::Uniform => {}
            LawSpec::DriftPerturbed { delta, kappa } => {
                lines.push(format!("law.delta = {delta}"));
                lines.push(format!("law.kappa = {kappa}"));
            }
            LawSpec::Dirichlet { alpha, kappa } => {
                lines.push(format!("law.alpha = {alpha}"));
                lines.push(format!("law.kappa = {kappa}"));
            }
            LawSpec::Nestling { delta } => lines.push(format!("law.delta = {delta}")),
        }
        for &key in run_keys(self.kind) {
            let value = match key {
                "run.trials" => self.trials.to_string(),
                "run.n" => self.n.to_string(),
                "run.envs" => self.envs.to_string(),
                "run.pairs" => self.pairs.to_string(),
                "run.grid" => join_list(self.grid.iter()),
                "run.u_grid" => join_list(self.u_grid.iter()),
                "run.l" => self.l.to_string(),
                "run.c1" => self.c1.to_string(),
                "run.guard" => self.guard.to_string(),
                "run.cell_size" => self.cell_size.to_string(),
                "run.horizon" => self.horizon.to_string(),
                _ => unreachable!("run key list is exhaustive"),
            };
            if value.is_empty() {
                lines.push(format!("{key} ="));
            } else {
                lines.push(format!("{key} = {value}"));
            }
        }
        lines
    }

    /// The law this config describes.
    pub fn build_law<T: Scalar>(&self) -> Result<EnvironmentLaw<T>> {
        self.law.build(self.dim)
    }
}

fn cfg_err(line: usize, msg: String) -> Error {
    Error::Config { line, msg }
}

fn parse_law(seen: &BTreeMap<&str, (usize, &str)>) -> Result<LawSpec> {
    let (kind_line, kind_str) = seen.get("law.kind").copied().unwrap_or((0, "uniform"));
    let get_f64 = |key: &str, default: f64| -> Result<f64> {
        match seen.get(key) {
            Some(&(line, v)) => parse_num::<f64>(key, v, line),
            None => Ok(default),
        }
    };
    let law = match kind_str {
        "uniform" => LawSpec::Uniform,
        "drift_perturbed" => LawSpec::DriftPerturbed {
            delta: get_f64("law.delta", 0.2)?,
            kappa: get_f64("law.kappa", 0.05)?,
        },
        "dirichlet" => LawSpec::Dirichlet {
            alpha: get_f64("law.alpha", 1.0)?,
            kappa: get_f64("law.kappa", 0.05)?,
        },
        "nestling" => LawSpec::Nestling { delta: get_f64("law.delta", 0.3)? },
        other => {
            return Err(cfg_err(
                kind_line,
                format!("unknown law `{other}` (one of: uniform, drift_perturbed, dirichlet, nestling)"),
            ))
        }
    };
    for key in ["law.delta", "law.kappa", "law.alpha"] {
        if let Some(&(line, _)) = seen.get(key) {
            if !law.param_keys().contains(&key) {
                return Err(cfg_err(
                    line,
                    format!("key `{key}` does not apply to law `{}`", law.kind_str()),
                ));
            }
        }
    }
    Ok(law)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    let parsed = v
        .parse::<T>()
        .map_err(|_| cfg_err(line, format!("invalid value `{v}` for `{key}`")))?;
    Ok(parsed)
}

fn parse_u64_list(key: &str, v: &str, line: usize) -> Result<Vec<u64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|part| parse_num(key, part.trim(), line)).collect()
}

fn parse_f64_list(key: &str, v: &str, line: usize) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|part| {
            let x: f64 = parse_num(key, part.trim(), line)?;
            if !x.is_finite() {
                return Err(cfg_err(line, format!("`{key}` entries must be finite")));
            }
            Ok(x)
        })
        .collect()
}

fn join_list<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
