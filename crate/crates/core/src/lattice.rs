//! Integer-lattice primitives shared by every module.
//!
//! Sites are plain `[i64; 3]` with trailing coordinates fixed at zero below
//! dimension 3; the ambient dimension (1, 2, or 3) travels with the
//! environment, not with every point.

use crate::{Error, Result};

pub type Coords = [i64; 3];

pub const ORIGIN: Coords = [0, 0, 0];
pub const MAX_DIM: usize = 3;

/// Nearest-neighbour steps in dimension `dim`, indexed `2*axis + sign`
/// with sign 0 = positive, 1 = negative.
#[inline]
pub fn step_count(dim: usize) -> usize {
    2 * dim
}

#[inline]
pub fn step_vector(index: usize) -> Coords {
    let axis = index / 2;
    let mut v = ORIGIN;
    v[axis] = if index % 2 == 0 { 1 } else { -1 };
    v
}

#[inline]
pub fn add(a: Coords, b: Coords) -> Coords {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Coords, b: Coords) -> Coords {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn apply_step(c: Coords, index: usize) -> Coords {
    let mut out = c;
    let axis = index / 2;
    out[axis] += if index % 2 == 0 { 1 } else { -1 };
    out
}

#[inline]
pub fn l1_norm(c: Coords) -> i64 {
    c[0].abs() + c[1].abs() + c[2].abs()
}

#[inline]
pub fn linf_norm(c: Coords) -> i64 {
    c[0].abs().max(c[1].abs()).max(c[2].abs())
}

#[inline]
pub fn l2_norm(c: Coords) -> f64 {
    ((c[0] * c[0] + c[1] * c[1] + c[2] * c[2]) as f64).sqrt()
}

/// Exact integer inner product; hyperplane tests against integer directions
/// never touch floating point.
#[inline]
pub fn dot(a: Coords, b: Coords) -> i64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Lattice parity of a site (admissible endpoints of an n-step walk have
/// parity equal to n mod 2).
#[inline]
pub fn parity(c: Coords) -> u8 {
    ((c[0] + c[1] + c[2]).rem_euclid(2)) as u8
}

/// Floor division (toward negative infinity), for histogram cell indexing.
#[inline]
pub fn floor_div(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    a.div_euclid(b)
}

/// Euclidean remainder into [0, m), for torus periodization.
#[inline]
pub fn wrap(c: Coords, dim: usize, m: i64) -> Coords {
    let mut out = c;
    for x in out.iter_mut().take(dim) {
        *x = x.rem_euclid(m);
    }
    out
}

pub fn validate_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("dimension {dim} unsupported (1..=3)")))
    }
}

/// Checks a site lives in the first `dim` coordinates.
pub fn in_dim(c: Coords, dim: usize) -> bool {
    c.iter().skip(dim).all(|&x| x == 0)
}

/// Signed coordinate direction, e.g. +e1 or -e3. Used by drifted laws and
/// trap specifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedAxis {
    pub axis: usize,
    pub negative: bool,
}

impl SignedAxis {
    pub const PLUS_E1: SignedAxis = SignedAxis { axis: 0, negative: false };

    pub fn unit(self) -> Coords {
        let mut v = ORIGIN;
        v[self.axis] = if self.negative { -1 } else { 1 };
        v
    }

    /// Step index of the unit step in this direction.
    pub fn step_index(self) -> usize {
        2 * self.axis + usize::from(self.negative)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let (negative, rest) = match t.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let axis = match rest {
            "e1" => 0,
            "e2" => 1,
            "e3" => 2,
            _ => {
                return Err(Error::Parameter(format!(
                    "direction '{text}' not of the form [+|-]e1|e2|e3"
                )))
            }
        };
        Ok(SignedAxis { axis, negative })
    }
}

impl std::fmt::Display for SignedAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}e{}", if self.negative { "-" } else { "+" }, self.axis + 1)
    }
}
