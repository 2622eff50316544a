//! Local central limit theorem probes against exact annealed kernels:
//! total-variation distance to the fitted lattice Gaussian on one parity
//! class, and the polynomial decay rate of the kernel maximum.

use std::collections::BTreeMap;

use crate::env::EnvironmentLaw;
use crate::kernel::{heat_kernel_forward, KernelField, KernelKind};
use crate::lattice::{Coords, ORIGIN};
use crate::scalar::{sum_compensated, Scalar};
use crate::stats;
use crate::walk::annealed_env;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LocalCltReport {
    pub n: u64,
    pub env_count: u64,
    /// Fitted mean of the annealed kernel.
    pub mean: [f64; 3],
    /// Fitted covariance, dim x dim in the top-left block, symmetric
    /// positive definite.
    pub covariance: [[f64; 3]; 3],
    /// (1/2) sum over the parity class of |kernel - doubled Gaussian|.
    pub tv_gap: f64,
}

/// Environment-average of exact forward kernels from the origin; no walk
/// noise enters, only the environment sampling.
pub fn annealed_kernel<T: Scalar>(
    law: &EnvironmentLaw<T>,
    n: u64,
    env_count: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<KernelField> {
    if env_count == 0 {
        return Err(Error::Parameter("annealed kernel needs env_count >= 1".into()));
    }
    let mut sums: BTreeMap<Coords, f64> = BTreeMap::new();
    let mut pruned = 0.0;
    for e in 0..env_count {
        let env = annealed_env(law, master_seed, stream_label, e);
        let k = heat_kernel_forward(&env, ORIGIN, n)?;
        pruned += k.pruned_mass;
        for (x, v) in k.values {
            *sums.entry(x).or_insert(0.0) += v;
        }
    }
    let scale = env_count as f64;
    let values = sums.into_iter().map(|(x, v)| (x, v / scale)).collect();
    Ok(KernelField {
        time: n,
        anchor: ORIGIN,
        kind: KernelKind::Forward,
        values,
        pruned_mass: pruned / scale,
    })
}

fn fitted_moments(field: &KernelField, dim: usize) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut mean = [0.0f64; 3];
    for (&x, &p) in &field.values {
        for a in 0..dim {
            mean[a] += p * x[a] as f64;
        }
    }
    let mut cov = [[0.0f64; 3]; 3];
    for (&x, &p) in &field.values {
        for a in 0..dim {
            for b in 0..dim {
                cov[a][b] += p * (x[a] as f64 - mean[a]) * (x[b] as f64 - mean[b]);
            }
        }
    }
    (mean, cov)
}

/// Inverse and determinant of the top-left dim x dim block; None when any
/// leading principal minor fails to be strictly positive.
fn inverse_and_det(cov: &[[f64; 3]; 3], dim: usize) -> Option<([[f64; 3]; 3], f64)> {
    let mut inv = [[0.0f64; 3]; 3];
    match dim {
        1 => {
            let det = cov[0][0];
            if det <= 0.0 {
                return None;
            }
            inv[0][0] = 1.0 / det;
            Some((inv, det))
        }
        2 => {
            let (a, b, c) = (cov[0][0], cov[0][1], cov[1][1]);
            let det = a * c - b * b;
            if a <= 0.0 || det <= 0.0 {
                return None;
            }
            inv[0][0] = c / det;
            inv[1][1] = a / det;
            inv[0][1] = -b / det;
            inv[1][0] = -b / det;
            Some((inv, det))
        }
        3 => {
            let m = cov;
            let minor2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            if m[0][0] <= 0.0 || minor2 <= 0.0 || det <= 0.0 {
                return None;
            }
            let adj = |r1: usize, c1: usize, r2: usize, c2: usize| {
                m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]
            };
            inv[0][0] = adj(1, 1, 2, 2) / det;
            inv[0][1] = -adj(0, 1, 2, 2) / det;
            inv[0][2] = adj(0, 1, 1, 2) / det;
            inv[1][0] = -adj(1, 0, 2, 2) / det;
            inv[1][1] = adj(0, 0, 2, 2) / det;
            inv[1][2] = -adj(0, 0, 1, 2) / det;
            inv[2][0] = adj(1, 0, 2, 1) / det;
            inv[2][1] = -adj(0, 0, 2, 1) / det;
            inv[2][2] = adj(0, 0, 1, 1) / det;
            Some((inv, det))
        }
        _ => None,
    }
}

fn gaussian_density(x: Coords, mean: &[f64; 3], inv: &[[f64; 3]; 3], det: f64, dim: usize) -> f64 {
    let mut q = 0.0;
    let d = [
        x[0] as f64 - mean[0],
        x[1] as f64 - mean[1],
        x[2] as f64 - mean[2],
    ];
    for a in 0..dim {
        for b in 0..dim {
            q += d[a] * inv[a][b] * d[b];
        }
    }
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(dim as i32) * det).sqrt()
}

/// Walks every lattice point of the step-parity class inside the l1 ball
/// of radius n.
fn for_each_parity_site(n: u64, dim: usize, mut f: impl FnMut(Coords)) {
    let r = n as i64;
    let parity = (n % 2) as i64;
    match dim {
        1 => {
            for x in -r..=r {
                if (x.abs() % 2) == parity {
                    f([x, 0, 0]);
                }
            }
        }
        2 => {
            for x in -r..=r {
                for y in -(r - x.abs())..=(r - x.abs()) {
                    if ((x.abs() + y.abs()) % 2) == parity {
                        f([x, y, 0]);
                    }
                }
            }
        }
        _ => {
            for x in -r..=r {
                for y in -(r - x.abs())..=(r - x.abs()) {
                    let rem = r - x.abs() - y.abs();
                    for z in -rem..=rem {
                        if ((x.abs() + y.abs() + z.abs()) % 2) == parity {
                            f([x, y, z]);
                        }
                    }
                }
            }
        }
    }
}

/// Moments and Gaussian total-variation gap of an already computed kernel
/// field. The Gaussian gets the field's own mean and covariance and is
/// doubled on the step-parity class the walk lives on.
pub fn kernel_clt_report(field: &KernelField, dim: usize, env_count: u64) -> Result<LocalCltReport> {
    let n = field.time;
    let (mean, covariance) = fitted_moments(field, dim);
    let Some((inv, det)) = inverse_and_det(&covariance, dim) else {
        return Err(Error::Guard {
            guard: "singular-covariance",
            msg: format!("fitted covariance at n = {n} is not positive definite"),
        });
    };
    let mut diffs = Vec::new();
    for_each_parity_site(n, dim, |x| {
        let p = field.value_at(x);
        let g = 2.0 * gaussian_density(x, &mean, &inv, det, dim);
        diffs.push((p - g).abs());
    });
    let tv_gap = (0.5 * sum_compensated(diffs.into_iter())).min(1.0);
    Ok(LocalCltReport { n, env_count, mean, covariance, tv_gap })
}

/// Total-variation distance between the annealed kernel at time n and the
/// fitted lattice Gaussian; see [`kernel_clt_report`].
pub fn local_clt_gap<T: Scalar>(
    law: &EnvironmentLaw<T>,
    n: u64,
    env_count: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<LocalCltReport> {
    let field = annealed_kernel(law, n, env_count, master_seed, stream_label)?;
    kernel_clt_report(&field, law.dim(), env_count)
}

#[derive(Debug, Clone)]
pub struct KernelDecay {
    /// (n, max_x annealed P(X_n = x)) per grid point.
    pub points: Vec<(u64, f64)>,
    /// Slope of log max against log n; -d/2 for a diffusive walk.
    pub slope: f64,
    pub r_squared: f64,
}

pub fn annealed_kernel_decay<T: Scalar>(
    law: &EnvironmentLaw<T>,
    n_grid: &[u64],
    env_count: u64,
    master_seed: u64,
    stream_label: u64,
) -> Result<KernelDecay> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] == 0 || w[1] <= w[0]) {
        return Err(Error::Parameter(
            "decay grid needs at least 2 increasing positive times".into(),
        ));
    }
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let field = annealed_kernel(law, n, env_count, master_seed, stream_label)?;
        points.push((n, field.max_value()));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, m)| m.max(1e-300).ln()).collect();
    let fit = stats::linear_fit(&xs, &ys).expect("grid length checked");
    Ok(KernelDecay { points, slope: fit.slope, r_squared: fit.r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SiteDistribution;
    use crate::lattice::SignedAxis;

    #[test]
    fn simple_walk_kernel_is_near_gaussian() {
        let law = EnvironmentLaw::<f64>::uniform(2).unwrap();
        let r = local_clt_gap(&law, 100, 1, 1, 0x11).unwrap();
        assert!(r.tv_gap < 0.1, "tv {}", r.tv_gap);
        assert!(r.mean[0].abs() < 1e-12 && r.mean[1].abs() < 1e-12);
        // SRW in d=2: per-axis variance n/2, no cross terms
        assert!((r.covariance[0][0] - 50.0).abs() < 1e-9);
        assert!((r.covariance[1][1] - 50.0).abs() < 1e-9);
        assert!(r.covariance[0][1].abs() < 1e-9);
    }

    #[test]
    fn covariance_is_symmetric_and_gap_bounded() {
        let law = EnvironmentLaw::<f64>::truncated_dirichlet(2, vec![1.0; 4], 0.05).unwrap();
        let r = local_clt_gap(&law, 24, 12, 2, 0x12).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((r.covariance[a][b] - r.covariance[b][a]).abs() < 1e-12);
            }
        }
        assert!((0.0..=1.0).contains(&r.tv_gap));
    }

    #[test]
    fn uniform_law_decays_at_minus_half_d() {
        let law2 = EnvironmentLaw::<f64>::uniform(2).unwrap();
        let d2 = annealed_kernel_decay(&law2, &[8, 16, 32, 64], 1, 3, 0x13).unwrap();
        assert!((d2.slope + 1.0).abs() < 0.2, "d=2 slope {}", d2.slope);
        assert!(d2.r_squared > 0.99);

        let law1 = EnvironmentLaw::<f64>::uniform(1).unwrap();
        let d1 = annealed_kernel_decay(&law1, &[16, 32, 64, 128], 1, 4, 0x14).unwrap();
        assert!((d1.slope + 0.5).abs() < 0.2, "d=1 slope {}", d1.slope);
    }

    #[test]
    fn gaussian_gap_shrinks_for_the_ballistic_law() {
        let law = EnvironmentLaw::<f64>::drift_perturbed(1, 0.15, SignedAxis::PLUS_E1, 0.1).unwrap();
        let early = local_clt_gap(&law, 50, 1, 5, 0x15).unwrap();
        let late = local_clt_gap(&law, 400, 1, 5, 0x15).unwrap();
        assert!(
            late.tv_gap < early.tv_gap,
            "tv(400) = {} vs tv(50) = {}",
            late.tv_gap,
            early.tv_gap
        );
        // drifted mean moves at speed 2 delta
        assert!((late.mean[0] - 400.0 * 0.3).abs() < 1e-9);
    }

    #[test]
    fn degenerate_kernel_is_flagged_singular() {
        let atom = SiteDistribution::from_weights(2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let law = EnvironmentLaw::mixture(&[1.0], vec![atom]).unwrap();
        let err = local_clt_gap(&law, 10, 1, 6, 0x16).unwrap_err();
        assert!(matches!(err, Error::Guard { guard: "singular-covariance", .. }));
    }

    #[test]
    fn grids_and_counts_are_validated() {
        let law = EnvironmentLaw::<f64>::uniform(2).unwrap();
        assert!(annealed_kernel_decay(&law, &[8], 1, 0, 0).is_err());
        assert!(annealed_kernel_decay(&law, &[8, 8], 1, 0, 0).is_err());
        assert!(annealed_kernel(&law, 4, 0, 0, 0).is_err());
    }
}
