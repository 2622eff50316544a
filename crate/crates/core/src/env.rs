//! Site distributions, environment laws, and lazily realized environments.
//!
//! An environment assigns every lattice site a probability vector over the
//! 2d nearest-neighbour steps. The assignment is a pure function of
//! (law, seed, site, overrides, periodization): querying never allocates
//! global state, so one `Environment` value serves any number of threads
//! and an infinite lattice.

use std::collections::{BTreeMap, HashMap};
use std::hash::BuildHasherDefault;

use crate::hull::DriftHull;
use crate::lattice::{self, Coords, SignedAxis};
use crate::rng::{site_key, NormalSource, Stream};
use crate::{Error, Real, Result, Scalar};

/// Hasher with fixed keys so map behaviour is identical across runs.
/// Iteration-sensitive code uses the ordered override map instead.
type FixedState = BuildHasherDefault<std::collections::hash_map::DefaultHasher>;

/// Probability vector over the 2d unit steps at one site, indexed
/// (+e1, -e1, +e2, -e2, +e3, -e3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteDistribution<T = Real> {
    probs: [T; 6],
    dim: u8,
}

impl<T: Scalar> SiteDistribution<T> {
    /// Normalizes nonnegative weights into a distribution. This is the
    /// only constructor that accepts raw user input; ellipticity is a
    /// separate, law-level concern (see [`SiteDistribution::check_elliptic`]).
    pub fn from_weights(dim: usize, weights: &[T]) -> Result<Self> {
        lattice::validate_dim(dim)?;
        if weights.len() != lattice::step_count(dim) {
            return Err(Error::Distribution(format!(
                "expected {} weights for d={dim}, got {}",
                lattice::step_count(dim),
                weights.len()
            )));
        }
        if weights.iter().any(|w| *w < T::zero() || !w.is_finite()) {
            return Err(Error::Distribution("negative or non-finite weight".into()));
        }
        let total: T = weights.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::Distribution("weights sum to zero".into()));
        }
        let mut probs = [T::zero(); 6];
        for (p, w) in probs.iter_mut().zip(weights) {
            *p = *w / total;
        }
        Ok(SiteDistribution { probs, dim: dim as u8 })
    }

    pub fn uniform(dim: usize) -> Self {
        let share = T::one() / T::from_real(lattice::step_count(dim) as f64);
        let mut probs = [T::zero(); 6];
        for p in probs.iter_mut().take(lattice::step_count(dim)) {
            *p = share;
        }
        SiteDistribution { probs, dim: dim as u8 }
    }

    /// Uniform distribution tilted to have local drift exactly
    /// `strength * direction`: omega(e) = 1/(2d) + (strength/2) <e, direction>.
    /// `direction` must be a unit vector; entries must stay nonnegative,
    /// i.e. strength/2 * max|direction_i| <= 1/(2d).
    pub fn drifted(dim: usize, strength: f64, direction: [f64; 3]) -> Result<Self> {
        lattice::validate_dim(dim)?;
        let norm = direction.iter().take(dim).map(|x| x * x).sum::<f64>().sqrt();
        if !(norm - 1.0).abs().is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Distribution(format!("direction not unit length (|u| = {norm})")));
        }
        if direction.iter().skip(dim).any(|&x| x != 0.0) {
            return Err(Error::Distribution("direction has components beyond the dimension".into()));
        }
        let base = 1.0 / lattice::step_count(dim) as f64;
        let mut probs = [T::zero(); 6];
        for i in 0..lattice::step_count(dim) {
            let step = lattice::step_vector(i);
            let along = (0..dim).map(|a| step[a] as f64 * direction[a]).sum::<f64>();
            let p = base + 0.5 * strength * along;
            if p < 0.0 {
                return Err(Error::Distribution(format!(
                    "drift strength {strength} makes step {i} negative"
                )));
            }
            probs[i] = T::from_real(p);
        }
        Ok(SiteDistribution { probs, dim: dim as u8 })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn step_count(&self) -> usize {
        lattice::step_count(self.dim())
    }

    #[inline]
    pub fn prob(&self, step: usize) -> T {
        self.probs[step]
    }

    pub fn probs(&self) -> &[T] {
        &self.probs[..self.step_count()]
    }

    pub fn min_prob(&self) -> T {
        self.probs()
            .iter()
            .copied()
            .fold(T::infinity(), T::min)
    }

    /// Sum-to-one defect; bounded by a few machine epsilons for every
    /// constructor in this module.
    pub fn normalization_defect(&self) -> T {
        (self.probs().iter().copied().sum::<T>() - T::one()).abs()
    }

    /// Uniform-ellipticity check against a declared kappa.
    pub fn check_elliptic(&self, kappa: T) -> Result<()> {
        if kappa <= T::zero() {
            return Err(Error::Distribution("kappa must be positive".into()));
        }
        let min = self.min_prob();
        if min < kappa {
            return Err(Error::Ellipticity { min: min.to_real(), kappa: kappa.to_real() });
        }
        Ok(())
    }

    /// Same distribution with the two probabilities on one axis swapped.
    /// Used as an importance-sampling proposal for rare backtracks; the
    /// step weight omega(e)/omega_reflected(e) telescopes along the axis.
    pub fn reflected(&self, axis: usize) -> Self {
        let mut out = *self;
        out.probs.swap(2 * axis, 2 * axis + 1);
        out
    }

    /// Local drift d(x, omega) = sum_e omega(x,e) e.
    pub fn local_drift(&self) -> [T; 3] {
        let mut d = [T::zero(); 3];
        for axis in 0..self.dim() {
            d[axis] = self.probs[2 * axis] - self.probs[2 * axis + 1];
        }
        d
    }

    /// Inverse-CDF step draw from a uniform variate in [0, 1).
    #[inline]
    pub fn sample_step(&self, u: T) -> usize {
        let n = self.step_count();
        let mut acc = T::zero();
        for i in 0..n - 1 {
            acc += self.probs[i];
            if u < acc {
                return i;
            }
        }
        n - 1
    }
}

/// Distribution of the i.i.d. site-distribution field.
///
/// In full generality this is an abstract measure nu on the simplex; the
/// concrete kinds here are this laboratory's choices. All kinds are
/// uniformly elliptic with an explicitly known kappa.
#[derive(Debug, Clone)]
pub enum EnvironmentLaw<T = Real> {
    /// Point mass on the uniform distribution (simple random walk).
    Uniform { dim: usize },
    /// Finite mixture: each site independently receives atom i with
    /// probability weights[i]. Two-point mixtures are the n=2 case; the
    /// nestling examples need four atoms.
    Mixture { weights: Vec<T>, atoms: Vec<SiteDistribution<T>> },
    /// Point mass on the uniform distribution tilted by +/- delta along a
    /// coordinate direction; local drift 2*delta in that direction.
    DriftPerturbed { delta: T, direction: SignedAxis, kappa: T, dist: SiteDistribution<T> },
    /// Dirichlet(alpha) on the 2d-simplex conditioned on all components
    /// >= kappa, realized by rejection. This is the conditioned law, not a
    /// renormalized density.
    TruncatedDirichlet { dim: usize, alpha: Vec<f64>, kappa: f64 },
}

impl<T: Scalar> EnvironmentLaw<T> {
    pub fn uniform(dim: usize) -> Result<Self> {
        lattice::validate_dim(dim)?;
        Ok(EnvironmentLaw::Uniform { dim })
    }

    /// Mixture from positive weights (normalized here) and atoms of equal
    /// dimension.
    pub fn mixture(weights: &[T], atoms: Vec<SiteDistribution<T>>) -> Result<Self> {
        if atoms.is_empty() || weights.len() != atoms.len() {
            return Err(Error::Distribution(
                "mixture needs matching, nonempty weights and atoms".into(),
            ));
        }
        let dim = atoms[0].dim();
        if atoms.iter().any(|a| a.dim() != dim) {
            return Err(Error::Distribution("mixture atoms disagree on dimension".into()));
        }
        if weights.iter().any(|w| *w < T::zero() || !w.is_finite()) {
            return Err(Error::Distribution("negative mixture weight".into()));
        }
        let total: T = weights.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::Distribution("mixture weights sum to zero".into()));
        }
        let weights = weights.iter().map(|w| *w / total).collect();
        Ok(EnvironmentLaw::Mixture { weights, atoms })
    }

    /// Convenience two-point mixture: atom_a with probability p.
    pub fn two_point(p: T, atom_a: SiteDistribution<T>, atom_b: SiteDistribution<T>) -> Result<Self> {
        if p < T::zero() || p > T::one() {
            return Err(Error::Distribution("mixture probability outside [0,1]".into()));
        }
        Self::mixture(&[p, T::one() - p], vec![atom_a, atom_b])
    }

    /// Built-in nestling mixture: one atom drifting at `delta` along each
    /// signed coordinate direction plus a neutral uniform atom, all equally
    /// weighted. The drift support spans +/- delta e_a for every axis, so 0
    /// is interior to its convex hull and trap patches have positive
    /// probability.
    pub fn nestling(dim: usize, delta: f64) -> Result<Self> {
        lattice::validate_dim(dim)?;
        let mut atoms = Vec::with_capacity(2 * dim + 1);
        for axis in 0..dim {
            for sign in [1.0f64, -1.0] {
                let mut u = [0.0; 3];
                u[axis] = sign;
                atoms.push(SiteDistribution::drifted(dim, delta, u)?);
            }
        }
        atoms.push(SiteDistribution::uniform(dim));
        let weights = vec![T::one(); atoms.len()];
        Self::mixture(&weights, atoms)
    }

    /// Drift perturbation delta along a signed axis: the two probabilities
    /// on that axis become 1/(2d) +/- delta, so delta may not exceed
    /// 1/(2d) - kappa.
    pub fn drift_perturbed(dim: usize, delta: f64, direction: SignedAxis, kappa: f64) -> Result<Self> {
        lattice::validate_dim(dim)?;
        if direction.axis >= dim {
            return Err(Error::Distribution("drift direction beyond dimension".into()));
        }
        let base = 1.0 / lattice::step_count(dim) as f64;
        // one-ulp slack: 1/(2d) - delta need not round to an exact decimal
        let slack = 4.0 * f64::EPSILON;
        if !(0.0..=base).contains(&delta) || kappa <= 0.0 || base - delta < kappa - slack {
            return Err(Error::Distribution(format!(
                "delta {delta} incompatible with kappa {kappa} at d={dim} (need delta <= 1/(2d) - kappa)"
            )));
        }
        let mut u = [0.0; 3];
        u[direction.axis] = if direction.negative { -1.0 } else { 1.0 };
        let dist = SiteDistribution::drifted(dim, 2.0 * delta, u)?;
        Ok(EnvironmentLaw::DriftPerturbed {
            delta: T::from_real(delta),
            direction,
            kappa: T::from_real(kappa),
            dist,
        })
    }

    /// Truncated Dirichlet; alpha length 2d, kappa below 1/(2d) strictly.
    /// A deterministic pilot probe rejects parameterizations whose
    /// acceptance region is effectively unreachable.
    pub fn truncated_dirichlet(dim: usize, alpha: Vec<f64>, kappa: f64) -> Result<Self> {
        lattice::validate_dim(dim)?;
        if alpha.len() != lattice::step_count(dim) {
            return Err(Error::Distribution(format!(
                "alpha length {} != {}",
                alpha.len(),
                lattice::step_count(dim)
            )));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::Distribution("alpha entries must be positive".into()));
        }
        let base = 1.0 / lattice::step_count(dim) as f64;
        if !(0.0..base).contains(&kappa) {
            return Err(Error::Distribution(format!(
                "kappa {kappa} must lie in [0, 1/(2d) = {base})"
            )));
        }
        // Pilot probe: fixed keys, so construction is as deterministic as
        // sampling. Catches truncation regions the sampler would spin on.
        let mut accepted = false;
        for probe in 0..64u64 {
            let key = crate::rng::derive_key(DIRICHLET_PROBE_SEED, &[probe]);
            if try_dirichlet_once(key, &alpha, kappa).is_some() {
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Distribution(
                "truncated Dirichlet acceptance region unreachable in 64 pilot draws".into(),
            ));
        }
        Ok(EnvironmentLaw::TruncatedDirichlet { dim, alpha, kappa })
    }

    pub fn dim(&self) -> usize {
        match self {
            EnvironmentLaw::Uniform { dim } => *dim,
            EnvironmentLaw::Mixture { atoms, .. } => atoms[0].dim(),
            EnvironmentLaw::DriftPerturbed { dist, .. } => dist.dim(),
            EnvironmentLaw::TruncatedDirichlet { dim, .. } => *dim,
        }
    }

    /// The kappa every sample provably satisfies: exact minima for finite
    /// kinds, the truncation threshold for the Dirichlet kind.
    pub fn declared_kappa(&self) -> T {
        match self {
            EnvironmentLaw::Uniform { dim } => {
                T::one() / T::from_real(lattice::step_count(*dim) as f64)
            }
            EnvironmentLaw::Mixture { atoms, .. } => atoms
                .iter()
                .map(SiteDistribution::min_prob)
                .fold(T::infinity(), T::min),
            EnvironmentLaw::DriftPerturbed { dist, .. } => dist.min_prob(),
            EnvironmentLaw::TruncatedDirichlet { kappa, .. } => T::from_real(*kappa),
        }
    }

    /// Finite support, when the kind has one.
    pub fn support(&self) -> Option<Vec<SiteDistribution<T>>> {
        match self {
            EnvironmentLaw::Uniform { dim } => Some(vec![SiteDistribution::uniform(*dim)]),
            EnvironmentLaw::Mixture { atoms, .. } => Some(atoms.clone()),
            EnvironmentLaw::DriftPerturbed { dist, .. } => Some(vec![*dist]),
            EnvironmentLaw::TruncatedDirichlet { .. } => None,
        }
    }

    /// Finite support together with atom masses, when the kind has one.
    pub fn support_with_weights(&self) -> Option<Vec<(T, SiteDistribution<T>)>> {
        match self {
            EnvironmentLaw::Uniform { dim } => {
                Some(vec![(T::one(), SiteDistribution::uniform(*dim))])
            }
            EnvironmentLaw::Mixture { weights, atoms } => {
                Some(weights.iter().copied().zip(atoms.iter().cloned()).collect())
            }
            EnvironmentLaw::DriftPerturbed { dist, .. } => Some(vec![(T::one(), *dist)]),
            EnvironmentLaw::TruncatedDirichlet { .. } => None,
        }
    }

    /// Mean of omega(x, step) across sites, where a closed form exists.
    /// The truncated Dirichlet with kappa > 0 has none (conditioning).
    pub fn mean_step_probability(&self, step: usize) -> Option<T> {
        match self {
            EnvironmentLaw::Uniform { dim } => {
                Some(T::one() / T::from_real(lattice::step_count(*dim) as f64))
            }
            EnvironmentLaw::Mixture { weights, atoms } => Some(
                weights
                    .iter()
                    .zip(atoms)
                    .map(|(w, a)| *w * a.prob(step))
                    .sum(),
            ),
            EnvironmentLaw::DriftPerturbed { dist, .. } => Some(dist.prob(step)),
            EnvironmentLaw::TruncatedDirichlet { alpha, kappa, .. } => {
                if *kappa == 0.0 {
                    let total: f64 = alpha.iter().sum();
                    Some(T::from_real(alpha[step] / total))
                } else {
                    None
                }
            }
        }
    }

    /// Draws the site distribution for one key. Pure function of
    /// (law, key).
    pub fn sample(&self, key: u64) -> SiteDistribution<T> {
        match self {
            EnvironmentLaw::Uniform { dim } => SiteDistribution::uniform(*dim),
            EnvironmentLaw::DriftPerturbed { dist, .. } => *dist,
            EnvironmentLaw::Mixture { weights, atoms } => {
                let u: T = Stream::new(key).next_unit();
                let mut acc = T::zero();
                for (w, a) in weights.iter().zip(atoms) {
                    acc += *w;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("mixture atoms nonempty")
            }
            EnvironmentLaw::TruncatedDirichlet { dim, alpha, kappa } => {
                let mut src = NormalSource::new(key);
                // Rejection cap: the constructor's pilot probe makes this
                // practically unreachable; a hit means the law object was
                // forged around validation.
                for _ in 0..1_000_000 {
                    if let Some(p) = dirichlet_attempt(&mut src, alpha, *kappa) {
                        let mut probs = [T::zero(); 6];
                        for i in 0..lattice::step_count(*dim) {
                            probs[i] = T::from_real(p[i]);
                        }
                        let dist = SiteDistribution { probs, dim: *dim as u8 };
                        // Re-check after narrowing (relevant below f64).
                        if dist.min_prob() >= T::from_real(*kappa) {
                            return dist;
                        }
                    }
                }
                panic!("truncated Dirichlet rejection cap exceeded");
            }
        }
    }

    /// Exact nestling test: is 0 interior to the convex hull of the
    /// support's local drifts? Errors for infinite-support kinds.
    pub fn is_nestling(&self) -> Result<bool> {
        let support = self.support().ok_or_else(|| {
            Error::Parameter("nestling test unsupported for infinite-support laws".into())
        })?;
        Ok(DriftHull::from_support(self.dim(), &support).contains_zero_interior)
    }
}

/// Stable probe seed for Dirichlet pilot draws, kept out of user seed space.
const DIRICHLET_PROBE_SEED: u64 = 0xD1E1_C4E7_0000_0001;

fn try_dirichlet_once(key: u64, alpha: &[f64], kappa: f64) -> Option<Vec<f64>> {
    dirichlet_attempt(&mut NormalSource::new(key), alpha, kappa)
}

fn dirichlet_attempt(src: &mut NormalSource, alpha: &[f64], kappa: f64) -> Option<Vec<f64>> {
    let mut g = Vec::with_capacity(alpha.len());
    let mut total = 0.0;
    for &a in alpha {
        let x = src.next_gamma(a);
        total += x;
        g.push(x);
    }
    if total <= 0.0 {
        return None;
    }
    for x in g.iter_mut() {
        *x /= total;
    }
    if g.iter().all(|&p| p >= kappa) {
        Some(g)
    } else {
        None
    }
}

/// One realized random environment: law + seed, optional overrides and
/// torus periodization.
#[derive(Debug, Clone)]
pub struct Environment<T = Real> {
    law: EnvironmentLaw<T>,
    seed: u64,
    overrides: BTreeMap<Coords, SiteDistribution<T>>,
    override_lookup: HashMap<Coords, SiteDistribution<T>, FixedState>,
    period: Option<i64>,
}

impl<T: Scalar> Environment<T> {
    pub fn new(law: EnvironmentLaw<T>, seed: u64) -> Self {
        Environment {
            law,
            seed,
            overrides: BTreeMap::new(),
            override_lookup: HashMap::default(),
            period: None,
        }
    }

    /// Periodizes the environment: queries are reduced mod L per
    /// coordinate first, so sites congruent mod L share distributions.
    pub fn with_period(mut self, l: i64) -> Result<Self> {
        if l < 2 {
            return Err(Error::Parameter(format!("torus side {l} must be >= 2")));
        }
        self.period = Some(l);
        Ok(self)
    }

    pub fn insert_override(&mut self, site: Coords, dist: SiteDistribution<T>) -> Result<()> {
        if dist.dim() != self.dim() {
            return Err(Error::Distribution("override dimension mismatch".into()));
        }
        if !lattice::in_dim(site, self.dim()) {
            return Err(Error::Parameter(format!("site {site:?} outside d={}", self.dim())));
        }
        self.overrides.insert(site, dist);
        self.override_lookup.insert(site, dist);
        Ok(())
    }

    pub fn law(&self) -> &EnvironmentLaw<T> {
        &self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn period(&self) -> Option<i64> {
        self.period
    }

    /// Ordered view of the overrides (deterministic iteration).
    pub fn overrides(&self) -> impl Iterator<Item = (&Coords, &SiteDistribution<T>)> {
        self.overrides.iter()
    }

    /// Minimum step probability guaranteed across all sites.
    pub fn declared_kappa(&self) -> T {
        self.overrides
            .values()
            .map(SiteDistribution::min_prob)
            .fold(self.law.declared_kappa(), T::min)
    }

    /// The distribution at a site: periodization, then overrides, then the
    /// law's counter-based draw.
    #[inline]
    pub fn site_dist(&self, site: Coords) -> SiteDistribution<T> {
        let site = match self.period {
            Some(l) => lattice::wrap(site, self.dim(), l),
            None => site,
        };
        if !self.override_lookup.is_empty() {
            if let Some(d) = self.override_lookup.get(&site) {
                return *d;
            }
        }
        self.law.sample(site_key(self.seed, site))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ORIGIN;

    fn drift_atom(dim: usize, strength: f64, axis: usize, negative: bool) -> SiteDistribution {
        let mut u = [0.0; 3];
        u[axis] = if negative { -1.0 } else { 1.0 };
        SiteDistribution::drifted(dim, strength, u).unwrap()
    }

    #[test]
    fn weights_normalize() {
        let d = SiteDistribution::<f64>::from_weights(2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.probs(), &[0.25; 4]);
        let d = SiteDistribution::<f64>::from_weights(2, &[2.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.probs(), &[0.4, 0.2, 0.2, 0.2]);
        assert!(d.normalization_defect() < f64::normalization_tolerance(4));
        assert_eq!(d.min_prob(), 0.2);
    }

    #[test]
    fn bad_weights_rejected() {
        assert!(SiteDistribution::<f64>::from_weights(2, &[0.0; 4]).is_err());
        assert!(SiteDistribution::<f64>::from_weights(2, &[1.0, -0.5, 1.0, 1.0]).is_err());
        assert!(SiteDistribution::<f64>::from_weights(2, &[1.0, 1.0]).is_err());
        // zero entry constructs, but fails any elliptic check
        let d = SiteDistribution::<f64>::from_weights(2, &[1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(d.check_elliptic(1e-9).is_err());
    }

    #[test]
    fn drift_hand_values() {
        let d = SiteDistribution::<f64>::from_weights(2, &[0.5, 0.1, 0.2, 0.2]).unwrap();
        let drift = d.local_drift();
        assert!((drift[0] - 0.4).abs() < 1e-15 && drift[1].abs() < 1e-15);
        let d = SiteDistribution::<f64>::from_weights(2, &[0.25, 0.25, 0.4, 0.1]).unwrap();
        let drift = d.local_drift();
        assert!(drift[0].abs() < 1e-15 && (drift[1] - 0.3).abs() < 1e-15);
        let z = SiteDistribution::<f64>::uniform(3).local_drift();
        assert_eq!(z, [0.0; 3]);
    }

    #[test]
    fn drifted_matches_formula() {
        let d = SiteDistribution::<f64>::drifted(2, 0.4, [1.0, 0.0, 0.0]).unwrap();
        for (got, want) in d.probs().iter().zip([0.45, 0.05, 0.25, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
        let drift = d.local_drift();
        assert!((drift[0] - 0.4).abs() < 1e-15);
        assert!(SiteDistribution::<f64>::drifted(2, 0.6, [1.0, 0.0, 0.0]).is_err());
        assert!(SiteDistribution::<f64>::drifted(2, 0.1, [1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn sample_step_inverts_cdf() {
        let d = SiteDistribution::<f64>::from_weights(2, &[0.4, 0.2, 0.2, 0.2]).unwrap();
        assert_eq!(d.sample_step(0.0), 0);
        assert_eq!(d.sample_step(0.39), 0);
        assert_eq!(d.sample_step(0.41), 1);
        assert_eq!(d.sample_step(0.99), 3);
    }

    #[test]
    fn law_validation() {
        assert!(EnvironmentLaw::<f64>::drift_perturbed(2, 0.2, SignedAxis::PLUS_E1, 0.05).is_ok());
        // delta beyond 1/(2d) - kappa
        assert!(EnvironmentLaw::<f64>::drift_perturbed(2, 0.21, SignedAxis::PLUS_E1, 0.05).is_err());
        assert!(EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.3).is_err());
        assert!(EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 3], 0.05).is_err());
        assert!(EnvironmentLaw::<f64>::mixture(&[], vec![]).is_err());
    }

    #[test]
    fn nestling_law_surrounds_the_origin() {
        let law = EnvironmentLaw::<f64>::nestling(2, 0.3).unwrap();
        let support = law.support_with_weights().unwrap();
        assert_eq!(support.len(), 5);
        for (w, _) in &support {
            assert!((w - 0.2).abs() < 1e-15);
        }
        let hull = crate::hull::DriftHull::from_support(2, &law.support().unwrap());
        assert!(hull.contains_zero_interior);
        // one-sided drift support for contrast: not nestling
        let ballistic =
            EnvironmentLaw::<f64>::drift_perturbed(2, 0.1, SignedAxis::PLUS_E1, 0.05).unwrap();
        let hull = crate::hull::DriftHull::from_support(2, &ballistic.support().unwrap());
        assert!(!hull.contains_zero_interior);
        // the tilt must keep every step probability nonnegative
        assert!(EnvironmentLaw::<f64>::nestling(3, 0.3).is_ok());
        assert!(EnvironmentLaw::<f64>::nestling(3, 0.4).is_err());
        assert!(EnvironmentLaw::<f64>::nestling(2, 0.6).is_err());
    }

    #[test]
    fn sampling_is_pure_and_respects_overrides() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let mut env = Environment::new(law, 99);
        let a = env.site_dist([3, -1, 0]);
        let b = env.site_dist([3, -1, 0]);
        assert_eq!(a, b);
        let over = SiteDistribution::from_weights(2, &[5.0, 1.0, 1.0, 1.0]).unwrap();
        env.insert_override(ORIGIN, over).unwrap();
        assert_eq!(env.site_dist(ORIGIN), over);
        assert_eq!(env.site_dist([3, -1, 0]), a);
    }

    #[test]
    fn shuffled_query_order_replays() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![0.8, 1.2, 1.0, 1.0], 0.02).unwrap();
        let env = Environment::new(law, 7);
        let sites: Vec<Coords> = (-10..10)
            .flat_map(|x| (-10..10).map(move |y| [x, y, 0]))
            .collect();
        let forward: Vec<_> = sites.iter().map(|&s| env.site_dist(s)).collect();
        let backward: Vec<_> = sites.iter().rev().map(|&s| env.site_dist(s)).collect();
        for (f, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(f, b);
        }
    }

    #[test]
    fn periodization_wraps_queries() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let env = Environment::new(law, 5).with_period(5).unwrap();
        assert_eq!(env.site_dist([0, 0, 0]), env.site_dist([5, -5, 0]));
        assert_eq!(env.site_dist([2, 3, 0]), env.site_dist([-3, 8, 0]));
    }

    #[test]
    fn ellipticity_holds_across_sites() {
        let laws: Vec<EnvironmentLaw<f64>> = vec![
            EnvironmentLaw::uniform(2).unwrap(),
            EnvironmentLaw::drift_perturbed(2, 0.2, SignedAxis::PLUS_E1, 0.05).unwrap(),
            EnvironmentLaw::two_point(
                0.5,
                drift_atom(2, 0.3, 0, false),
                drift_atom(2, 0.3, 0, true),
            )
            .unwrap(),
            EnvironmentLaw::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap(),
            EnvironmentLaw::truncated_dirichlet(3, vec![0.7; 6], 0.02).unwrap(),
        ];
        for (i, law) in laws.into_iter().enumerate() {
            let kappa = law.declared_kappa();
            let env = Environment::new(law, 1000 + i as u64);
            for x in -50i64..50 {
                for y in -50i64..50 {
                    let d = env.site_dist([x, y, 0]);
                    assert!(d.min_prob() >= kappa, "law {i} at ({x},{y})");
                    assert!(d.normalization_defect() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn site_means_match_law_across_sites() {
        // 10^4 distinct sites; empirical mean of omega(x, +e1) within 4 SE.
        let laws: Vec<(EnvironmentLaw<f64>, &str)> = vec![
            (
                EnvironmentLaw::two_point(
                    0.3,
                    drift_atom(2, 0.3, 0, false),
                    drift_atom(2, 0.3, 0, true),
                )
                .unwrap(),
                "two-point",
            ),
            (
                EnvironmentLaw::truncated_dirichlet(2, vec![2.0, 1.0, 1.0, 1.0], 0.0).unwrap(),
                "dirichlet kappa=0",
            ),
        ];
        for (law, name) in laws {
            let mean = law.mean_step_probability(0).unwrap();
            let env = Environment::new(law, 31);
            let n = 10_000;
            let samples: Vec<f64> = (0..n)
                .map(|i| env.site_dist([i % 100, i / 100, 0]).prob(0))
                .collect();
            let m = crate::stats::mean(&samples);
            let se = crate::stats::standard_error(&samples);
            assert!(
                (m - mean).abs() <= 4.0 * se.max(1e-12),
                "{name}: mean {m} vs analytic {mean} (se {se})"
            );
        }
    }

    #[test]
    fn mixture_pick_frequencies_match_weights() {
        let law = EnvironmentLaw::<f64>::mixture(
            &[0.2, 0.3, 0.5],
            vec![drift_atom(2, 0.2, 0, false), drift_atom(2, 0.2, 0, true), drift_atom(2, 0.2, 1, false)],
        )
        .unwrap();
        let env = Environment::new(law, 8);
        let n = 10_000usize;
        let mut counts = [0usize; 3];
        for i in 0..n {
            let d = env.site_dist([i as i64, -(i as i64) * 3 + 1, 0]);
            let drift = d.local_drift();
            if drift[0] > 0.1 {
                counts[0] += 1;
            } else if drift[0] < -0.1 {
                counts[1] += 1;
            } else {
                counts[2] += 1;
            }
        }
        for (c, w) in counts.iter().zip([0.2, 0.3, 0.5]) {
            let phat = *c as f64 / n as f64;
            let se = (w * (1.0 - w) / n as f64).sqrt();
            assert!((phat - w).abs() < 4.0 * se, "freq {phat} vs weight {w}");
        }
    }

    #[test]
    fn dirichlet_untruncated_means() {
        let alpha = [2.0, 1.0, 1.0, 1.0];
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, alpha.to_vec(), 0.0).unwrap();
        let env = Environment::new(law, 77);
        let n = 10_000;
        for step in 0..4 {
            let samples: Vec<f64> = (0..n)
                .map(|i| env.site_dist([i % 128, i / 128, 0]).prob(step))
                .collect();
            let want = alpha[step] / 5.0;
            let m = crate::stats::mean(&samples);
            let se = crate::stats::standard_error(&samples);
            assert!((m - want).abs() < 4.0 * se, "step {step}: {m} vs {want}");
        }
    }

    #[test]
    fn nestling_examples() {
        // opposite drifts along e1 in d=2: hull is a segment, no interior
        let seg = EnvironmentLaw::<f64>::two_point(
            0.5,
            drift_atom(2, 0.3, 0, false),
            drift_atom(2, 0.3, 0, true),
        )
        .unwrap();
        assert!(!seg.is_nestling().unwrap());
        // the same two atoms in d=1 DO surround 0
        let seg1 = EnvironmentLaw::<f64>::two_point(
            0.5,
            drift_atom(1, 0.3, 0, false),
            drift_atom(1, 0.3, 0, true),
        )
        .unwrap();
        assert!(seg1.is_nestling().unwrap());
        // four-point cross contains 0 in the interior
        let cross = EnvironmentLaw::<f64>::mixture(
            &[0.25; 4],
            vec![
                drift_atom(2, 0.2, 0, false),
                drift_atom(2, 0.2, 0, true),
                drift_atom(2, 0.2, 1, false),
                drift_atom(2, 0.2, 1, true),
            ],
        )
        .unwrap();
        assert!(cross.is_nestling().unwrap());
        // all drifts with <d, e1> >= 0.1: separating hyperplane
        let sep = EnvironmentLaw::<f64>::two_point(
            0.5,
            drift_atom(2, 0.3, 0, false),
            drift_atom(2, 0.1, 0, false),
        )
        .unwrap();
        assert!(!sep.is_nestling().unwrap());
        // uniform: hull = {0}, interior empty
        assert!(!EnvironmentLaw::<f64>::uniform(2).unwrap().is_nestling().unwrap());
        // infinite support unsupported
        let dir = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        assert!(dir.is_nestling().is_err());
    }

    #[test]
    fn generic_at_f32() {
        let law = EnvironmentLaw::<f32>::drift_perturbed(2, 0.2, SignedAxis::PLUS_E1, 0.05).unwrap();
        let env = Environment::new(law, 1);
        let d = env.site_dist([4, 4, 0]);
        assert!((d.probs().iter().sum::<f32>() - 1.0).abs() < f32::normalization_tolerance(4));
    }
}
