//! Uniform quadratic B-splines on the knots `y_ν = ν/n`, together with the
//! knot polynomials `φ_i(y) = (y - y_{i+1})(y - y_{i+2})` and their clipped
//! versions `ψ_i`.
//!
//! The basis `N_{-2}, …, N_n` reproduces `(y - x)^2` exactly on `[0, 1]`
//! (Marsden's identity). Replacing `φ_i` by `ψ_i`, which vanishes on
//! `[y_{i+1}, y_{i+2}]`, makes every coefficient nonnegative at the cost of an
//! overshoot of at most `1/(4n^2)`.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};

/// Spline order (degree + 1).
pub const ORDER: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SplineSystem {
    n: usize,
    /// `y_ν` for `ν = -3 ..= n + 4`.
    knots: Vec<f64>,
}

const FIRST_KNOT: i64 = -3;

impl SplineSystem {
    pub const MIN_N: usize = 4;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_N {
            return Err(Error::domain(format!(
                "spline order parameter n must satisfy n >= {}, got {n}",
                Self::MIN_N
            )));
        }
        let knots = (FIRST_KNOT..=n as i64 + 4)
            .map(|nu| nu as f64 / n as f64)
            .collect();
        Ok(Self { n, knots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Knot `y_ν = ν/n`. Panics if `ν` lies outside `-3 ..= n + 4`.
    pub fn knot(&self, nu: i64) -> f64 {
        self.knots[(nu - FIRST_KNOT) as usize]
    }

    /// `(ν, y_ν)` pairs for every stored knot.
    pub fn knots(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.knots
            .iter()
            .enumerate()
            .map(|(k, &y)| (k as i64 + FIRST_KNOT, y))
    }

    /// Basis indices `-2 ..= n`.
    pub fn index_range(&self) -> RangeInclusive<i64> {
        -2..=self.n as i64
    }

    pub fn basis_count(&self) -> usize {
        self.n + 3
    }

    fn check_index(&self, i: i64) -> Result<()> {
        if self.index_range().contains(&i) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "basis index {i} outside -2..={}",
                self.n
            )))
        }
    }

    /// Knot span `s` with `y_s <= x < y_{s+1}`, or `None` when `x` lies
    /// outside the union of the basis supports.
    fn span(&self, x: f64) -> Option<i64> {
        let lo = self.knot(-2);
        let hi = self.knot(self.n as i64 + 3);
        if !(lo..hi).contains(&x) {
            return None;
        }
        let mut s = (x * self.n as f64).floor() as i64;
        s = s.clamp(-2, self.n as i64 + 2);
        // x * n can round across a knot; settle against the stored knots.
        while s > -2 && self.knot(s) > x {
            s -= 1;
        }
        while s < self.n as i64 + 2 && self.knot(s + 1) <= x {
            s += 1;
        }
        Some(s)
    }

    /// The three basis functions that can be nonzero at `x`:
    /// `(s - 2, [N_{s-2}(x), N_{s-1}(x), N_s(x)])` for the knot span `s`
    /// containing `x`. Computed with the triangular Cox–de Boor recursion.
    pub fn nonzero_basis(&self, x: f64) -> Option<(i64, [f64; ORDER])> {
        let s = self.span(x)?;
        let mut values = [0.0; ORDER];
        let mut left = [0.0; ORDER];
        let mut right = [0.0; ORDER];
        values[0] = 1.0;
        for j in 1..ORDER {
            left[j] = x - self.knot(s + 1 - j as i64);
            right[j] = self.knot(s + j as i64) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Some((s - 2, values))
    }

    /// `N_i(x)`, supported on `[y_i, y_{i+3})`.
    pub fn basis(&self, i: i64, x: f64) -> Result<f64> {
        self.check_index(i)?;
        Ok(match self.nonzero_basis(x) {
            Some((first, values)) if (first..first + ORDER as i64).contains(&i) => {
                values[(i - first) as usize]
            }
            _ => 0.0,
        })
    }

    /// `φ_{i,3}(y) = (y - y_{i+1})(y - y_{i+2})`.
    pub fn phi(&self, i: i64, y: f64) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.phi_unchecked(i, y))
    }

    fn phi_unchecked(&self, i: i64, y: f64) -> f64 {
        (y - self.knot(i + 1)) * (y - self.knot(i + 2))
    }

    /// `ψ_i(y)`: zero on the closed interval `[y_{i+1}, y_{i+2}]`, `φ_{i,3}`
    /// elsewhere. Defined for `0 <= y <= 1`, where it lies in `[0, 2]`.
    pub fn psi(&self, i: i64, y: f64) -> Result<f64> {
        self.check_index(i)?;
        check_unit("y", y)?;
        Ok(self.psi_unchecked(i, y))
    }

    pub(crate) fn psi_unchecked(&self, i: i64, y: f64) -> f64 {
        if (self.knot(i + 1)..=self.knot(i + 2)).contains(&y) {
            0.0
        } else {
            self.phi_unchecked(i, y)
        }
    }

    /// `S(x, y) = Σ_i ψ_i(y) N_i(x)`, which satisfies
    /// `0 <= S(x, y) - (y - x)^2 <= 1/(4n^2)` on the unit square.
    pub fn approx_sq_diff(&self, x: f64, y: f64) -> Result<f64> {
        check_unit("x", x)?;
        check_unit("y", y)?;
        let (first, values) = self
            .nonzero_basis(x)
            .expect("every x in [0, 1] lies in a knot span");
        Ok(values
            .iter()
            .zip(first..)
            .map(|(n_i, i)| self.psi_unchecked(i, y) * n_i)
            .sum())
    }

    /// Upper bound `1/(4n^2)` on `S(x, y) - (y - x)^2`.
    pub fn residual_bound(&self) -> f64 {
        1.0 / (4.0 * (self.n * self.n) as f64)
    }
}

fn check_unit(name: &str, t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {t} outside [0, 1]")))
    }
}
