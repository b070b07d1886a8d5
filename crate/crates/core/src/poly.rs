//! Dense bivariate polynomials in `(s, f)` on a fixed 7×6 coefficient grid
//! (`s⁰..s⁶`, `f⁰..f⁵`).
//!
//! This is exactly the monomial set of the 42-column coefficient matrix, so
//! every quantity the solver builds fits without reallocation. Flattening is
//! f-fastest: `1, f, …, f⁵, s, sf, …, s⁶f⁵`.

use std::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};

pub const S_CAP: usize = 7;
pub const F_CAP: usize = 6;
pub const N_MONOMIALS: usize = S_CAP * F_CAP;

/// Column of monomial `s^a f^b` in the flattened ordering.
pub const fn monomial_index(deg_s: usize, deg_f: usize) -> usize {
    deg_s * F_CAP + deg_f
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BivariatePoly {
    coeffs: [[f64; F_CAP]; S_CAP],
}

impl BivariatePoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(0, 0, c)
    }

    /// `c · s^deg_s · f^deg_f`. Panics if the monomial is outside the grid.
    pub fn monomial(deg_s: usize, deg_f: usize, c: f64) -> Self {
        let mut p = Self::zero();
        p.coeffs[deg_s][deg_f] = c;
        p
    }

    pub fn s() -> Self {
        Self::monomial(1, 0, 1.0)
    }

    pub fn f() -> Self {
        Self::monomial(0, 1, 1.0)
    }

    pub fn from_fn(mut coeff: impl FnMut(usize, usize) -> f64) -> Self {
        let mut p = Self::zero();
        for a in 0..S_CAP {
            for b in 0..F_CAP {
                p.coeffs[a][b] = coeff(a, b);
            }
        }
        p
    }

    pub fn coeff(&self, deg_s: usize, deg_f: usize) -> f64 {
        self.coeffs[deg_s][deg_f]
    }

    pub fn set_coeff(&mut self, deg_s: usize, deg_f: usize, c: f64) {
        self.coeffs[deg_s][deg_f] = c;
    }

    pub fn coeffs(&self) -> &[[f64; F_CAP]; S_CAP] {
        &self.coeffs
    }

    /// Monomials with nonzero coefficient, as `(deg_s, deg_f, coeff)`.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..S_CAP).flat_map(move |a| {
            (0..F_CAP).filter_map(move |b| {
                let c = self.coeffs[a][b];
                (c != 0.0).then_some((a, b, c))
            })
        })
    }

    pub fn is_zero(&self) -> bool {
        self.terms().next().is_none()
    }

    /// Highest power of `s` and of `f` with a coefficient above
    /// `rel_tol · max_abs`, or `None` for the zero polynomial.
    pub fn degree(&self, rel_tol: f64) -> Option<(usize, usize)> {
        let cutoff = rel_tol * self.max_abs();
        let mut deg: Option<(usize, usize)> = None;
        for (a, b, c) in self.terms() {
            if c.abs() > cutoff {
                let (ds, df) = deg.unwrap_or((0, 0));
                deg = Some((ds.max(a), df.max(b)));
            }
        }
        deg
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_fn(|a, b| k * self.coeffs[a][b])
    }

    /// Scaled to unit max-abs coefficient; the zero polynomial is returned as is.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs();
        if m > 0.0 {
            self.scale(1.0 / m)
        } else {
            *self
        }
    }

    /// Grid convolution. Fails if a nonzero product term lands outside the grid.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zero();
        for (a1, b1, c1) in self.terms() {
            for (a2, b2, c2) in other.terms() {
                let (a, b) = (a1 + a2, b1 + b2);
                if a >= S_CAP || b >= F_CAP {
                    return Err(Error::PolyCapacity { deg_s: a, deg_f: b });
                }
                out.coeffs[a][b] += c1 * c2;
            }
        }
        Ok(out)
    }

    /// Multiplies by `f^k`, shifting the grid along the `f` axis.
    pub fn shift_f(&self, k: usize) -> Result<Self> {
        self.mul(&Self::monomial(0, k, 1.0))
    }

    /// Horner evaluation.
    pub fn eval(&self, s: f64, f: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, row| {
            acc * s + row.iter().rev().fold(0.0, |r, c| r * f + c)
        })
    }

    /// Value and partial derivatives `(p, ∂p/∂s, ∂p/∂f)`.
    pub fn eval_grad(&self, s: f64, f: f64) -> (f64, f64, f64) {
        let (mut v, mut ds, mut df) = (0.0, 0.0, 0.0);
        for (a, b, c) in self.terms() {
            let sa = s.powi(a as i32);
            let fb = f.powi(b as i32);
            v += c * sa * fb;
            if a > 0 {
                ds += c * a as f64 * s.powi(a as i32 - 1) * fb;
            }
            if b > 0 {
                df += c * b as f64 * sa * f.powi(b as i32 - 1);
            }
        }
        (v, ds, df)
    }

    /// Coefficients in the f-fastest monomial ordering.
    pub fn flatten(&self) -> [f64; N_MONOMIALS] {
        let mut out = [0.0; N_MONOMIALS];
        for (a, row) in self.coeffs.iter().enumerate() {
            out[a * F_CAP..(a + 1) * F_CAP].copy_from_slice(row);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|c| c.is_finite())
    }
}

impl Add for BivariatePoly {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|a, b| self.coeffs[a][b] + rhs.coeffs[a][b])
    }
}

impl Sub for BivariatePoly {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|a, b| self.coeffs[a][b] - rhs.coeffs[a][b])
    }
}

impl Neg for BivariatePoly {
    type Output = Self;

    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

/// Determinant of a 3×3 matrix of polynomials by cofactor expansion along the
/// first row.
pub fn det3(m: &[[BivariatePoly; 3]; 3]) -> Result<BivariatePoly> {
    let minor = |r1: usize, r2: usize, c1: usize, c2: usize| -> Result<BivariatePoly> {
        Ok(m[r1][c1].mul(&m[r2][c2])? - m[r1][c2].mul(&m[r2][c1])?)
    };
    let t0 = m[0][0].mul(&minor(1, 2, 1, 2)?)?;
    let t1 = m[0][1].mul(&minor(1, 2, 0, 2)?)?;
    let t2 = m[0][2].mul(&minor(1, 2, 0, 1)?)?;
    Ok(t0 - t1 + t2)
}
