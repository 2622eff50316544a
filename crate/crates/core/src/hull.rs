//! Exact convex-hull interior test for drift supports.
//!
//! The nestling property asks whether 0 lies in the interior of the convex
//! hull of finitely many drift vectors. Floating-point hulls misclassify
//! boundary cases (a segment through 0, a drift set just touching 0), so
//! the test runs in exact rational arithmetic: f64 inputs convert
//! losslessly to rationals, and every orientation is decided exactly.
//!
//! Method: enumerate hyperplanes through d support points. A hyperplane
//! with all points (weakly) on one side supports the hull; 0 is interior
//! iff it lies strictly inside every supporting hyperplane and at least
//! one valid hyperplane exists (degenerate, lower-dimensional hulls have
//! empty interior and fail one of the two).

use num_traits::Zero;

use crate::env::SiteDistribution;
use crate::{Rational, Scalar};

/// Drift support of a finitely supported law, with the exact interior
/// verdict precomputed.
#[derive(Debug, Clone)]
pub struct DriftHull {
    pub dim: usize,
    pub drifts: Vec<[Rational; 3]>,
    pub contains_zero_interior: bool,
}

impl DriftHull {
    /// Exact drifts of the support atoms. Probabilities convert to
    /// rationals losslessly (every finite f64 is rational), so the drift
    /// components are exact differences of the stored probabilities.
    pub fn from_support<T: Scalar>(dim: usize, support: &[SiteDistribution<T>]) -> Self {
        let drifts = support
            .iter()
            .map(|atom| {
                let mut d = [Rational::zero(), Rational::zero(), Rational::zero()];
                for axis in 0..dim {
                    let plus = rational_from(atom.prob(2 * axis).to_real());
                    let minus = rational_from(atom.prob(2 * axis + 1).to_real());
                    d[axis] = plus - minus;
                }
                d
            })
            .collect();
        Self::from_points(dim, drifts)
    }

    pub fn from_points(dim: usize, drifts: Vec<[Rational; 3]>) -> Self {
        let contains_zero_interior = zero_in_interior(dim, &drifts);
        DriftHull { dim, drifts, contains_zero_interior }
    }
}

fn rational_from(x: f64) -> Rational {
    Rational::from_float(x).expect("finite probability")
}

fn dot(a: &[Rational; 3], b: &[Rational; 3], dim: usize) -> Rational {
    let mut acc = Rational::zero();
    for i in 0..dim {
        acc += &a[i] * &b[i];
    }
    acc
}

fn sub(a: &[Rational; 3], b: &[Rational; 3]) -> [Rational; 3] {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

/// Checks one candidate supporting hyperplane {x : <n, x> = c}.
/// Returns false (verdict: not interior) when the hyperplane supports the
/// point set but 0 fails to be strictly on the inner side.
fn hyperplane_excludes_zero(normal: &[Rational; 3], c: &Rational, points: &[[Rational; 3]], dim: usize) -> bool {
    let mut all_le = true;
    let mut all_ge = true;
    for p in points {
        let v = dot(normal, p, dim);
        if v > *c {
            all_le = false;
        }
        if v < *c {
            all_ge = false;
        }
        if !all_le && !all_ge {
            return false;
        }
    }
    let zero = Rational::zero();
    // hull on one side: 0 must be strictly inside that side
    (all_le && zero >= *c) || (all_ge && zero <= *c)
}

fn zero_in_interior(dim: usize, points: &[[Rational; 3]]) -> bool {
    match dim {
        1 => {
            let zero = Rational::zero();
            points.iter().any(|p| p[0] < zero) && points.iter().any(|p| p[0] > zero)
        }
        2 => {
            let mut saw_hyperplane = false;
            for i in 0..points.len() {
                for j in (i + 1)..points.len() {
                    let d = sub(&points[j], &points[i]);
                    // rotate the edge direction by 90 degrees
                    let normal = [-d[1].clone(), d[0].clone(), Rational::zero()];
                    if normal[0].is_zero() && normal[1].is_zero() {
                        continue;
                    }
                    saw_hyperplane = true;
                    let c = dot(&normal, &points[i], dim);
                    if hyperplane_excludes_zero(&normal, &c, points, dim) {
                        return false;
                    }
                }
            }
            saw_hyperplane
        }
        3 => {
            let mut saw_hyperplane = false;
            for i in 0..points.len() {
                for j in (i + 1)..points.len() {
                    for k in (j + 1)..points.len() {
                        let u = sub(&points[j], &points[i]);
                        let v = sub(&points[k], &points[i]);
                        let normal = [
                            &u[1] * &v[2] - &u[2] * &v[1],
                            &u[2] * &v[0] - &u[0] * &v[2],
                            &u[0] * &v[1] - &u[1] * &v[0],
                        ];
                        if normal.iter().all(Rational::is_zero) {
                            continue;
                        }
                        saw_hyperplane = true;
                        let c = dot(&normal, &points[i], dim);
                        if hyperplane_excludes_zero(&normal, &c, points, dim) {
                            return false;
                        }
                    }
                }
            }
            saw_hyperplane
        }
        _ => false,
    }
}

/// Float cross-check used by tests: 0 is interior iff the support function
/// max_p <p, u> is strictly positive in every direction of a dense net.
/// Approximate by construction; exact logic lives in `zero_in_interior`.
pub fn ray_probe_interior(dim: usize, points: &[[f64; 3]], tol: f64) -> bool {
    let mut directions: Vec<[f64; 3]> = Vec::new();
    for axis in 0..dim {
        for sign in [1.0, -1.0] {
            let mut u = [0.0; 3];
            u[axis] = sign;
            directions.push(u);
        }
    }
    // diagonal net
    let vals = [-1.0, 0.0, 1.0];
    for &a in &vals {
        for &b in &vals {
            for &c in &vals {
                let u = [a, b, c];
                let n2: f64 = u.iter().take(dim).map(|x| x * x).sum();
                if n2 == 0.0 || u.iter().skip(dim).any(|&x| x != 0.0) {
                    continue;
                }
                let n = n2.sqrt();
                directions.push([u[0] / n, u[1] / n, u[2] / n]);
            }
        }
    }
    directions.iter().all(|u| {
        points
            .iter()
            .map(|p| (0..dim).map(|i| p[i] * u[i]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
            > tol
    })
}
