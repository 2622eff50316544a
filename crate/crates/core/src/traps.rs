//! Naive traps: a region whose every interior site drifts straight back
//! toward the origin, the walk's escape time from it, and the probability
//! that an i.i.d. environment produces such a region on its own.

use crate::env::{Environment, EnvironmentLaw, SiteDistribution};
use crate::lattice::{self, Coords, ORIGIN};
use crate::rng::{trial_key, Stream, StreamRole};
use crate::scalar::Scalar;
use crate::stats;
use crate::{Error, Result};

/// Planted-trap geometry and strength over a background law.
#[derive(Debug, Clone)]
pub struct TrapSpec<T: Scalar> {
    /// Region size: the slab/box half-width.
    pub l: u64,
    /// Inward radial drift at every interior site.
    pub c1: f64,
    /// Slab direction; the region is direction-agnostic in spirit and
    /// defaults to e1.
    pub direction: [f64; 3],
    pub background: EnvironmentLaw<T>,
}

impl<T: Scalar> TrapSpec<T> {
    pub fn new(l: u64, c1: f64, background: EnvironmentLaw<T>) -> Result<Self> {
        if l == 0 {
            return Err(Error::Parameter("trap size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&c1) {
            return Err(Error::Parameter("drift strength must lie in [0, 1]".into()));
        }
        let dim = background.dim();
        let kappa = background.declared_kappa().to_real();
        let max_c1 = 2.0 * (1.0 / lattice::step_count(dim) as f64 - kappa);
        if c1 > max_c1 + 4.0 * f64::EPSILON {
            return Err(Error::Parameter(format!(
                "drift strength {c1} breaks ellipticity: at most {max_c1} for kappa {kappa}"
            )));
        }
        let mut direction = [0.0; 3];
        direction[0] = 1.0;
        Ok(TrapSpec { l, c1, direction, background })
    }

    pub fn dim(&self) -> usize {
        self.background.dim()
    }

    /// Interior test: |<x, e1>| < L and sheared transverse deviation
    /// below L in l-infinity.
    pub fn contains(&self, x: Coords) -> bool {
        let t = x[0] as f64;
        if t.abs() >= self.l as f64 {
            return false;
        }
        let scale = t / self.direction[0];
        (1..self.dim()).all(|a| (x[a] as f64 - self.direction[a] * scale).abs() < self.l as f64)
    }

    /// Every site of the region except the origin, in lexicographic order.
    pub fn interior_sites(&self) -> Vec<Coords> {
        let r = self.l as i64 + self.transverse_reach();
        let mut out = Vec::new();
        let zr = if self.dim() == 3 { r } else { 0 };
        let yr = if self.dim() >= 2 { r } else { 0 };
        for x in -r..=r {
            for y in -yr..=yr {
                for z in -zr..=zr {
                    let site = [x, y, z];
                    if site != ORIGIN && self.contains(site) {
                        out.push(site);
                    }
                }
            }
        }
        out
    }

    fn transverse_reach(&self) -> i64 {
        let slope = (1..self.dim())
            .map(|a| (self.direction[a] / self.direction[0]).abs())
            .fold(0.0f64, f64::max);
        (slope * self.l as f64).ceil() as i64 + 1
    }

    /// The overriding distribution at an interior site: uniform plus a
    /// radial tilt, so the local drift is exactly -c1 x/|x|.
    pub fn trap_dist(&self, x: Coords) -> SiteDistribution<T> {
        let dim = self.dim();
        let norm = lattice::l2_norm(x);
        let base = 1.0 / lattice::step_count(dim) as f64;
        let mut w = [T::zero(); 6];
        for axis in 0..dim {
            let u = x[axis] as f64 / norm;
            w[2 * axis] = T::from_real(base - 0.5 * self.c1 * u);
            w[2 * axis + 1] = T::from_real(base + 0.5 * self.c1 * u);
        }
        SiteDistribution::from_weights(dim, &w[..2 * dim]).expect("tilt keeps weights positive")
    }
}

/// Background environment with the radial-drift override planted on the
/// whole region interior.
pub fn build_naive_trap<T: Scalar>(spec: &TrapSpec<T>, seed: u64) -> Result<Environment<T>> {
    let mut env = Environment::new(spec.background.clone(), seed);
    for site in spec.interior_sites() {
        env.insert_override(site, spec.trap_dist(site))?;
    }
    Ok(env)
}

/// Exact membership test: the radial drift equals -c1 at every interior
/// site (to float roundoff).
pub fn is_naive_trap<T: Scalar>(env: &Environment<T>, spec: &TrapSpec<T>) -> bool {
    spec.interior_sites().iter().all(|&site| {
        let d = env.site_dist(site).local_drift();
        let norm = lattice::l2_norm(site);
        let radial: f64 = (0..spec.dim())
            .map(|a| d[a].to_real() * site[a] as f64 / norm)
            .sum();
        (radial + spec.c1).abs() <= 1e-12
    })
}

#[derive(Debug, Clone)]
pub struct EscapeReport {
    /// Exit times of the walks that left the region.
    pub samples: Vec<u64>,
    pub trials: u64,
    pub censored: u64,
    /// More than half the trials never escaped within the horizon.
    pub censor_flagged: bool,
    /// Mean exit time with censored trials counted at the horizon, a
    /// conservative lower bound on the true mean.
    pub mean_floor: f64,
}

/// Exit time of the region for walks started at the origin.
pub fn trap_escape_time<T: Scalar>(
    env: &Environment<T>,
    spec: &TrapSpec<T>,
    trials: u64,
    horizon: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<EscapeReport> {
    if trials == 0 {
        return Err(Error::Parameter("escape experiment needs trials >= 1".into()));
    }
    let mut samples = Vec::new();
    let mut censored = 0u64;
    let mut total = 0.0;
    for trial in 0..trials {
        let mut stream = Stream::new(trial_key(master_seed, stream_label, trial, StreamRole::Walk1));
        let mut x = ORIGIN;
        let mut t = 0u64;
        loop {
            if !spec.contains(x) {
                samples.push(t);
                total += t as f64;
                break;
            }
            if t >= horizon {
                censored += 1;
                total += horizon as f64;
                break;
            }
            let step = env.site_dist(x).sample_step(stream.next_unit::<T>());
            x = lattice::apply_step(x, step);
            t += 1;
        }
    }
    Ok(EscapeReport {
        samples,
        trials,
        censored,
        censor_flagged: censored * 2 > trials,
        mean_floor: total / trials as f64,
    })
}

#[derive(Debug, Clone)]
pub struct SupermartingaleReport {
    pub c2: f64,
    pub c3: f64,
    pub sites_checked: usize,
    pub violations: Vec<Coords>,
}

impl SupermartingaleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// One-step check that exp(c3 |X|) shrinks in expectation at every
/// interior site with |y| >= c2; each site is an exact 2d-term sum.
pub fn supermartingale_check<T: Scalar>(
    env: &Environment<T>,
    spec: &TrapSpec<T>,
    c2: f64,
    c3: f64,
) -> SupermartingaleReport {
    let mut sites_checked = 0;
    let mut violations = Vec::new();
    for site in spec.interior_sites() {
        let norm = lattice::l2_norm(site);
        if norm < c2 {
            continue;
        }
        sites_checked += 1;
        let dist = env.site_dist(site);
        let mut expect = 0.0f64;
        for step in 0..lattice::step_count(spec.dim()) {
            let y = lattice::apply_step(site, step);
            expect += dist.prob(step).to_real() * (c3 * lattice::l2_norm(y)).exp();
        }
        if expect > (c3 * norm).exp() * (1.0 + 1e-12) {
            violations.push(site);
        }
    }
    SupermartingaleReport { c2, c3, sites_checked, violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityBranch {
    /// Per-site atom-mass products with the exact inward condition.
    Exact,
    /// Same product with the threshold relaxed to c1_relaxed < c1.
    Relaxed,
    /// Environment sampling of the relaxed membership event.
    MonteCarlo,
}

#[derive(Debug, Clone)]
pub struct TrapProbability {
    pub p: f64,
    /// ln p; negative infinity when p = 0.
    pub log_p: f64,
    pub interior_sites: usize,
    pub branch: ProbabilityBranch,
    /// Why the exact branch is hopeless, when it is.
    pub explanation: Option<String>,
    /// Clopper-Pearson bounds for the Monte Carlo branch.
    pub ci: Option<(f64, f64)>,
}

fn finite_support_product<T: Scalar>(
    law: &EnvironmentLaw<T>,
    spec: &TrapSpec<T>,
    threshold: f64,
    branch: ProbabilityBranch,
) -> Result<TrapProbability> {
    let Some(atoms) = law.support_with_weights() else {
        return Err(Error::Parameter(
            "analytic trap probability needs a finite-support law".into(),
        ));
    };
    let sites = spec.interior_sites();
    let mut log_p = 0.0f64;
    let mut dead_site = None;
    for &site in &sites {
        let norm = lattice::l2_norm(site);
        let p_site: f64 = atoms
            .iter()
            .filter(|(_, atom)| {
                let d = atom.local_drift();
                let radial: f64 = (0..spec.dim())
                    .map(|a| d[a].to_real() * site[a] as f64 / norm)
                    .sum();
                radial <= -threshold + 1e-12
            })
            .map(|(w, _)| w.to_real())
            .sum();
        if p_site == 0.0 {
            dead_site = Some(site);
            log_p = f64::NEG_INFINITY;
            break;
        }
        log_p += p_site.ln();
    }
    Ok(TrapProbability {
        p: log_p.exp(),
        log_p,
        interior_sites: sites.len(),
        branch,
        explanation: dead_site.map(|s| {
            format!("no support atom drifts inward enough at site {s:?}; the event is impossible")
        }),
        ci: None,
    })
}

/// Probability that an i.i.d. environment satisfies the inward-drift
/// condition at every interior site: site-wise product, exact for
/// finite-support laws.
pub fn trap_probability<T: Scalar>(law: &EnvironmentLaw<T>, spec: &TrapSpec<T>) -> Result<TrapProbability> {
    finite_support_product(law, spec, spec.c1, ProbabilityBranch::Exact)
}

/// The same product with the threshold relaxed to c1_relaxed, the event a
/// sampled law can actually realize.
pub fn trap_probability_relaxed<T: Scalar>(
    law: &EnvironmentLaw<T>,
    spec: &TrapSpec<T>,
    c1_relaxed: f64,
) -> Result<TrapProbability> {
    if c1_relaxed > spec.c1 {
        return Err(Error::Parameter("relaxed threshold must not exceed c1".into()));
    }
    finite_support_product(law, spec, c1_relaxed, ProbabilityBranch::Relaxed)
}

/// Monte Carlo estimate of the relaxed membership probability by direct
/// environment sampling; works for any law.
pub fn trap_probability_mc<T: Scalar>(
    law: &EnvironmentLaw<T>,
    spec: &TrapSpec<T>,
    c1_relaxed: f64,
    env_count: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<TrapProbability> {
    if env_count == 0 {
        return Err(Error::Parameter("Monte Carlo trap probability needs env_count >= 1".into()));
    }
    let sites = spec.interior_sites();
    let mut hits = 0u64;
    for e in 0..env_count {
        let env = Environment::new(
            law.clone(),
            trial_key(master_seed, stream_label, e, StreamRole::Env),
        );
        let ok = sites.iter().all(|&site| {
            let d = env.site_dist(site).local_drift();
            let norm = lattice::l2_norm(site);
            let radial: f64 = (0..spec.dim())
                .map(|a| d[a].to_real() * site[a] as f64 / norm)
                .sum();
            radial <= -c1_relaxed + 1e-12
        });
        hits += ok as u64;
    }
    let p = hits as f64 / env_count as f64;
    Ok(TrapProbability {
        p,
        log_p: p.ln(),
        interior_sites: sites.len(),
        branch: ProbabilityBranch::MonteCarlo,
        explanation: None,
        ci: Some(stats::clopper_pearson(hits, env_count, 0.95)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SignedAxis;

    #[test]
    fn strength_is_capped_by_ellipticity() {
        // uniform background in d=2 has kappa 1/4, so no tilt is allowed
        assert!(TrapSpec::new(2, 0.1, EnvironmentLaw::<f64>::uniform(2).unwrap()).is_err());
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        assert!(TrapSpec::new(2, 0.4, law.clone()).is_ok());
        assert!(TrapSpec::new(2, 0.41, law.clone()).is_err());
        assert!(TrapSpec::new(0, 0.1, law).is_err());
    }

    #[test]
    fn region_is_the_centered_box_for_axis_direction() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let spec = TrapSpec::new(2, 0.2, law).unwrap();
        let sites = spec.interior_sites();
        assert_eq!(sites.len(), 3 * 3 - 1, "(2L-1)^2 - 1");
        assert!(spec.contains(ORIGIN));
        assert!(!sites.contains(&ORIGIN));
        assert!(spec.contains([1, -1, 0]));
        assert!(!spec.contains([2, 0, 0]));
        assert!(!spec.contains([0, 2, 0]));
    }

    #[test]
    fn hand_site_gets_the_stated_tilt() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let spec = TrapSpec::new(4, 0.2, law).unwrap();
        let dist = spec.trap_dist([3, 0, 0]);
        assert!((dist.prob(0) - 0.15).abs() < 1e-15);
        assert!((dist.prob(1) - 0.35).abs() < 1e-15);
        assert!((dist.prob(2) - 0.25).abs() < 1e-15);
        assert!((dist.prob(3) - 0.25).abs() < 1e-15);
        let d = dist.local_drift();
        assert!((d[0] + 0.2).abs() < 1e-15 && d[1].abs() < 1e-15);
    }

    #[test]
    fn built_trap_passes_the_membership_test() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        for c1 in [0.0, 0.15, 0.4] {
            let spec = TrapSpec::new(3, c1, law.clone()).unwrap();
            let env = build_naive_trap(&spec, 5).unwrap();
            assert!(is_naive_trap(&env, &spec));
            if c1 == 0.0 {
                // zero strength: every override is plain uniform
                for site in spec.interior_sites() {
                    let d = env.site_dist(site).local_drift();
                    assert!(d[0].abs() < 1e-15 && d[1].abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn trapped_walks_escape_slower_than_free_ones() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let strong = TrapSpec::new(2, 0.4, law.clone()).unwrap();
        let control = TrapSpec::new(2, 0.0, law).unwrap();
        let env_strong = build_naive_trap(&strong, 9).unwrap();
        let env_control = build_naive_trap(&control, 9).unwrap();
        let a = trap_escape_time(&env_strong, &strong, 200, 50_000, 31, 0x31).unwrap();
        let b = trap_escape_time(&env_control, &control, 200, 50_000, 31, 0x31).unwrap();
        assert!(
            a.mean_floor > 2.0 * b.mean_floor,
            "trapped {} vs control {}",
            a.mean_floor,
            b.mean_floor
        );
        assert!(!a.censor_flagged && !b.censor_flagged);
    }

    #[test]
    fn escape_mean_grows_with_the_drift_strength() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let mut last = 0.0;
        for c1 in [0.0, 0.2, 0.4] {
            let spec = TrapSpec::new(3, c1, law.clone()).unwrap();
            let env = build_naive_trap(&spec, 11).unwrap();
            let r = trap_escape_time(&env, &spec, 150, 100_000, 33, 0x33).unwrap();
            assert!(
                r.mean_floor >= last,
                "mean should be monotone in the drift, {last} then {}",
                r.mean_floor
            );
            last = r.mean_floor;
        }
    }

    #[test]
    fn zero_horizon_censors_everything() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let spec = TrapSpec::new(2, 0.2, law).unwrap();
        let env = build_naive_trap(&spec, 13).unwrap();
        let r = trap_escape_time(&env, &spec, 20, 0, 35, 0x35).unwrap();
        assert_eq!(r.censored, 20);
        assert!(r.censor_flagged);
        assert!(r.samples.is_empty());
    }

    #[test]
    fn exponential_moment_shrinks_far_from_the_origin() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let c1 = 0.4;
        let spec = TrapSpec::new(20, c1, law).unwrap();
        let env = build_naive_trap(&spec, 15).unwrap();
        let r = supermartingale_check(&env, &spec, 8.0 / c1, c1 / 4.0);
        assert!(r.sites_checked > 50, "checked {}", r.sites_checked);
        assert!(r.passed(), "violations at {:?}", r.violations);
    }

    #[test]
    fn confinement_time_grows_exponentially_in_size() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let ls = [4u64, 8, 12, 16];
        let mut logs = Vec::new();
        for (i, &l) in ls.iter().enumerate() {
            let spec = TrapSpec::new(l, 0.1, law.clone()).unwrap();
            let env = build_naive_trap(&spec, 17).unwrap();
            let r = trap_escape_time(&env, &spec, 60, 200_000, 37 + i as u64, 0x37).unwrap();
            assert_eq!(r.censored, 0, "L = {l} should escape within the horizon");
            logs.push(r.mean_floor.ln());
        }
        let xs: Vec<f64> = ls.iter().map(|&l| l as f64).collect();
        let fit = stats::linear_fit(&xs, &logs).unwrap();
        assert!(fit.slope > 0.0, "slope {}", fit.slope);
        assert!(fit.r_squared >= 0.9, "r2 {}", fit.r_squared);
    }

    /// One inward atom per axis direction plus a neutral rest, all at
    /// weight 0.2; used by the probability branches below.
    fn four_way_law() -> EnvironmentLaw<f64> {
        EnvironmentLaw::nestling(2, 0.3).unwrap()
    }

    #[test]
    fn exact_event_is_impossible_for_a_sparse_support() {
        let law = four_way_law();
        let spec = TrapSpec::new(2, 0.25, law.clone()).unwrap();
        let exact = trap_probability(&law, &spec).unwrap();
        // diagonal sites need radial drift -0.25 but the best any atom
        // manages there is -0.3/sqrt(2)
        assert_eq!(exact.p, 0.0);
        assert!(exact.log_p.is_infinite());
        assert!(exact.explanation.is_some());
    }

    #[test]
    fn sampling_agrees_with_the_relaxed_product() {
        let law = four_way_law();
        let spec = TrapSpec::new(2, 0.25, law.clone()).unwrap();
        let relaxed = trap_probability_relaxed(&law, &spec, 0.2).unwrap();
        // axis sites take exactly their one inward atom (0.2); diagonal
        // sites accept two atoms at -0.3/sqrt(2) = -0.212 (0.4)
        let expect = 0.2f64.powi(4) * 0.4f64.powi(4);
        assert!((relaxed.p - expect).abs() < 1e-15, "product {}", relaxed.p);
        let mc = trap_probability_mc(&law, &spec, 0.2, 200_000, 41, 0x41).unwrap();
        let (lo, hi) = mc.ci.unwrap();
        assert!(lo <= expect && expect <= hi, "exact {expect} outside [{lo}, {hi}]");
        assert!(trap_probability_relaxed(&law, &spec, 0.3).is_err());
    }

    #[test]
    fn log_probability_tracks_the_interior_volume() {
        // product over i.i.d. sites: log p is, up to the direction mix,
        // proportional to the site count; the fit slope is the weighted
        // mean of the per-direction logs
        let law = four_way_law();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for l in [2u64, 3, 4, 5] {
            let spec = TrapSpec::new(l, 0.25, law.clone()).unwrap();
            let r = trap_probability_relaxed(&law, &spec, 0.2).unwrap();
            xs.push(r.interior_sites as f64);
            ys.push(r.log_p);
        }
        let fit = stats::linear_fit(&xs, &ys).unwrap();
        assert!(fit.r_squared > 0.99, "r2 {}", fit.r_squared);
        assert!(fit.slope < 0.0);
        // slope sits between the extreme per-site logs
        assert!(fit.slope > 0.2f64.ln() && fit.slope < 0.4f64.ln());
    }

    #[test]
    fn dirichlet_law_has_no_analytic_branch() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let spec = TrapSpec::new(2, 0.3, law.clone()).unwrap();
        assert!(trap_probability(&law, &spec).is_err());
        // sampling still works; the tiny threshold keeps p visible
        let mc = trap_probability_mc(&law, &spec, 0.01, 5_000, 43, 0x43).unwrap();
        assert!(mc.p > 0.0);
        assert!(mc.ci.is_some());
    }

    #[test]
    fn three_dimensional_region_counts() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(3, vec![0.9; 6], 0.02).unwrap();
        let spec = TrapSpec::new(2, 0.2, law).unwrap();
        assert_eq!(spec.interior_sites().len(), 3usize.pow(3) - 1);
        let env = build_naive_trap(&spec, 19).unwrap();
        assert!(is_naive_trap(&env, &spec));
    }

    #[test]
    fn one_dimensional_trap_is_an_interval() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(1, vec![1.0; 2], 0.1).unwrap();
        let spec = TrapSpec::new(3, 0.3, law).unwrap();
        assert_eq!(spec.interior_sites().len(), 4, "x in {{-2,-1,1,2}}");
        let env = build_naive_trap(&spec, 21).unwrap();
        assert!(is_naive_trap(&env, &spec));
        let d = env.site_dist([2, 0, 0]).local_drift();
        assert!((d[0] + 0.3).abs() < 1e-15);
        // escape from a 1d well still happens with kappa 0.1 at the walls
        let r = trap_escape_time(&env, &spec, 100, 100_000, 23, 0x23).unwrap();
        assert_eq!(r.censored, 0);
        assert!(r.mean_floor > 3.0);
    }

    #[test]
    fn drift_perturbed_background_keeps_its_kappa_room() {
        // background with drift of its own: the planted region still
        // passes membership; outside sites keep the background drift
        let law = EnvironmentLaw::<f64>::drift_perturbed(2, 0.1, SignedAxis::PLUS_E1, 0.05).unwrap();
        let spec = TrapSpec::new(2, 0.2, law).unwrap();
        let env = build_naive_trap(&spec, 25).unwrap();
        assert!(is_naive_trap(&env, &spec));
        let outside = env.site_dist([10, 10, 0]).local_drift();
        assert!((outside[0] - 0.2).abs() < 1e-12);
    }
}
