//! The first layer: detector functions, the setting-dependent measure on the
//! diagonal unit cells, exact integrals over it, and the `w`-extension.
//!
//! Coordinates are split into unit cells: cell `i` is `[i - 1, i)`. The
//! negative cells `i = -2, -1, 0` carry the strips `[-k, -k + 1)`,
//! `k = 3, 2, 1`, where the detectors read off the signs of the setting
//! components. Every nonnegative cell carries a spline factor, and on those
//! cells the detectors alternate on half cells so they integrate to zero.
//!
//! With the spline variant the positive block holds one cell per basis
//! function `N_j`, `j = -2 ..= n`, and per component: cells `1..=3n` follow
//! the base layout (`N_k(|a_1|)` on cell `k`, then `a_2`, then `a_3`), and
//! cells `3n+1 ..= 3n+9` carry `j = -2, -1, 0` for `k = 1, 2, 3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setting::{sign, Spin, UnitVector3};
use crate::spline::SplineSystem;

/// Which positive-block construction a measure uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureVariant {
    /// Spline-factored cells; total mass `1 + θ/n²`.
    #[default]
    Spline,
    /// Three cells of mass `½(|a_k| - |b_k|)²` on `[0, 3)`; total mass 1.
    Genuine,
}

/// The square grid of unit cells `i = -2 ..= len - 3` covering
/// `[-3, len - 3)` in each coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    len: usize,
}

impl Grid {
    pub const FIRST_CELL: i64 = -2;

    pub fn for_variant(variant: MeasureVariant, n: usize) -> Self {
        match variant {
            MeasureVariant::Spline => Grid { len: 3 * n + 12 },
            MeasureVariant::Genuine => Grid { len: 6 },
        }
    }

    pub(crate) fn with_len(len: usize) -> Self {
        Grid { len }
    }

    /// Cells per side.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lower(&self) -> f64 {
        -3.0
    }

    pub fn upper(&self) -> f64 {
        self.len as f64 - 3.0
    }

    pub fn last_cell(&self) -> i64 {
        self.len as i64 - 3
    }

    /// Zero-based offset of the cell containing `t`, if inside the grid.
    pub fn offset_of(&self, t: f64) -> Option<usize> {
        if !(self.lower()..self.upper()).contains(&t) {
            return None;
        }
        let off = (t.floor() + 3.0) as usize;
        Some(off.min(self.len - 1))
    }

    pub fn cell_of_offset(&self, offset: usize) -> i64 {
        offset as i64 + Self::FIRST_CELL
    }

    /// Left end `i - 1` of cell `i` given by offset.
    pub fn cell_start(&self, offset: usize) -> f64 {
        (self.cell_of_offset(offset) - 1) as f64
    }

    /// Diagonal indicator: 1 iff `(u, v)` lies in some `[i-1, i)²`.
    pub fn kappa(&self, u: f64, v: f64) -> f64 {
        match (self.offset_of(u), self.offset_of(v)) {
            (Some(p), Some(r)) if p == r => 1.0,
            _ => 0.0,
        }
    }
}

/// Diagonal indicator for the spline grid of order parameter `n`.
pub fn eval_kappa(u: f64, v: f64, n: usize) -> f64 {
    Grid::for_variant(MeasureVariant::Spline, n).kappa(u, v)
}

/// Station-1 detector `A_a(u)`.
pub fn detector_a(a: &UnitVector3, u: f64) -> Spin {
    if (-3.0..0.0).contains(&u) {
        let k = (-u.floor()) as usize;
        Spin::from_sign(sign(a.component(k)))
    } else if u >= 0.0 {
        if u - u.floor() < 0.5 {
            Spin::Down
        } else {
            Spin::Up
        }
    } else {
        Spin::Up
    }
}

/// Station-2 detector `B_b(v)`.
pub fn detector_b(b: &UnitVector3, v: f64) -> Spin {
    if (-3.0..0.0).contains(&v) {
        let k = (-v.floor()) as usize;
        Spin::from_sign(-sign(b.component(k)))
    } else if v >= 0.0 {
        if v - v.floor() < 0.5 {
            Spin::Up
        } else {
            Spin::Down
        }
    } else {
        Spin::Down
    }
}

/// Average of a half-cell-constant spin function over `[start, start + 1)`.
pub(crate) fn cell_average(start: f64, f: impl Fn(f64) -> Spin) -> f64 {
    (f(start + 0.25).as_f64() + f(start + 0.75).as_f64()) / 2.0
}

/// What a diagonal cell of the base layer carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellRole {
    /// Negative strip `[-k, -k + 1)` for component `k`.
    Strip { k: usize },
    /// Spline cell for component `k` and basis index `j`.
    Spline { k: usize, j: i64 },
    /// Genuine-variant cell for component `k`.
    Genuine { k: usize },
}

impl CellRole {
    pub fn of(cell: i64, variant: MeasureVariant, n: usize) -> Option<CellRole> {
        let n = n as i64;
        if (-2..=0).contains(&cell) {
            return Some(CellRole::Strip {
                k: (1 - cell) as usize,
            });
        }
        match variant {
            MeasureVariant::Genuine => (1..=3)
                .contains(&cell)
                .then_some(CellRole::Genuine { k: cell as usize }),
            MeasureVariant::Spline => {
                if (1..=3 * n).contains(&cell) {
                    let k = ((cell - 1) / n) as usize + 1;
                    Some(CellRole::Spline {
                        k,
                        j: cell - (k as i64 - 1) * n,
                    })
                } else if (3 * n + 1..=3 * n + 9).contains(&cell) {
                    let e = cell - 3 * n - 1;
                    Some(CellRole::Spline {
                        k: (e / 3) as usize + 1,
                        j: e % 3 - 2,
                    })
                } else {
                    None
                }
            }
        }
    }
}

/// The setting-dependent first-layer measure `μ_ab`, stored as per-cell
/// factors of its density (constant on each diagonal cell).
#[derive(Clone, Debug)]
pub struct FirstLayerMeasure {
    a: UnitVector3,
    b: UnitVector3,
    variant: MeasureVariant,
    spline: SplineSystem,
    grid: Grid,
    sigma: Vec<f64>,
    tau: Vec<f64>,
    mass: Vec<f64>,
}

impl FirstLayerMeasure {
    pub fn new(n: usize, a: UnitVector3, b: UnitVector3) -> Result<Self> {
        Self::with_variant(n, a, b, MeasureVariant::Spline)
    }

    pub fn with_variant(
        n: usize,
        a: UnitVector3,
        b: UnitVector3,
        variant: MeasureVariant,
    ) -> Result<Self> {
        let spline = SplineSystem::new(n)?;
        let grid = Grid::for_variant(variant, n);
        let mut sigma = Vec::with_capacity(grid.len());
        let mut tau = Vec::with_capacity(grid.len());
        for offset in 0..grid.len() {
            let cell = grid.cell_of_offset(offset);
            let role = CellRole::of(cell, variant, n).expect("every grid cell has a role");
            let (s, t) = match role {
                CellRole::Strip { k } => (a.component(k).abs(), b.component(k).abs()),
                CellRole::Spline { k, j } => (
                    spline.basis(j, a.component(k).abs())?,
                    0.5 * spline.psi(j, b.component(k).abs())?,
                ),
                CellRole::Genuine { k } => {
                    let d = a.component(k).abs() - b.component(k).abs();
                    (1.0, 0.5 * d * d)
                }
            };
            sigma.push(s);
            tau.push(t);
        }
        let mass = sigma.iter().zip(&tau).map(|(s, t)| s * t).collect();
        Ok(Self {
            a,
            b,
            variant,
            spline,
            grid,
            sigma,
            tau,
            mass,
        })
    }

    pub fn a(&self) -> &UnitVector3 {
        &self.a
    }

    pub fn b(&self) -> &UnitVector3 {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.spline.n()
    }

    pub fn variant(&self) -> MeasureVariant {
        self.variant
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn spline(&self) -> &SplineSystem {
        &self.spline
    }

    /// `σ_a` on the cell with the given offset.
    pub fn sigma_at(&self, offset: usize) -> f64 {
        self.sigma[offset]
    }

    /// `τ_b` on the cell with the given offset.
    pub fn tau_at(&self, offset: usize) -> f64 {
        self.tau[offset]
    }

    /// Mass of the diagonal cell with the given offset.
    pub fn cell_mass_at(&self, offset: usize) -> f64 {
        self.mass[offset]
    }

    /// `(cell index, mass)` for every diagonal cell.
    pub fn cell_masses(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .map(|(off, &m)| (self.grid.cell_of_offset(off), m))
    }

    pub fn eval_sigma(&self, u: f64) -> f64 {
        self.grid.offset_of(u).map_or(0.0, |p| self.sigma[p])
    }

    pub fn eval_tau(&self, v: f64) -> f64 {
        self.grid.offset_of(v).map_or(0.0, |r| self.tau[r])
    }

    pub fn eval_kappa(&self, u: f64, v: f64) -> f64 {
        self.grid.kappa(u, v)
    }

    /// `ρ(u, v) = σ_a(u) τ_b(v) κ(u, v)`.
    pub fn density(&self, u: f64, v: f64) -> f64 {
        self.eval_sigma(u) * self.eval_tau(v) * self.eval_kappa(u, v)
    }

    /// Mass on the negative square `[-3, 0)²`: `Σ_k |a_k||b_k|`.
    pub fn m1(&self) -> f64 {
        self.mass[..3].iter().sum()
    }

    /// Mass on the positive cells.
    pub fn m2(&self) -> f64 {
        self.mass[3..].iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `θ̂ = (μ(Ω) - 1) n²`.
    pub fn theta_hat(&self) -> f64 {
        let n = self.n() as f64;
        (self.total_mass() - 1.0) * n * n
    }

    /// `∫ A_a(u) B_b(v) dμ` over one diagonal cell.
    pub fn cell_pair_integral(&self, offset: usize) -> f64 {
        let start = self.grid.cell_start(offset);
        let avg_a = cell_average(start, |u| detector_a(&self.a, u));
        let avg_b = cell_average(start, |v| detector_b(&self.b, v));
        self.mass[offset] * avg_a * avg_b
    }

    /// `∫ A_a(u) B_b(v) ρ(u, v) du dv`, summed exactly cell by cell.
    pub fn pair_integral(&self) -> f64 {
        (0..self.grid.len())
            .map(|off| self.cell_pair_integral(off))
            .sum()
    }
}

/// Mass bookkeeping for the exactly normalized variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenuineMass {
    /// `Σ_k |a_k||b_k|`.
    pub m1: f64,
    /// `Σ_k (|a_k| - |b_k|)²` as literally written.
    pub m2_literal: f64,
    /// `½ Σ_k (|a_k| - |b_k|)²`, the mass actually placed.
    pub m2: f64,
    /// `m1 + m2`, equal to 1 for unit settings.
    pub total: f64,
    /// `m1 + m2_literal`.
    pub literal_total: f64,
    /// Whether the literal reading fails to normalize.
    pub literal_differs: bool,
}

pub fn genuine_variant_mass(a: &UnitVector3, b: &UnitVector3) -> GenuineMass {
    let mut m1 = 0.0;
    let mut sq = 0.0;
    for k in 1..=3 {
        let (x, y) = (a.component(k).abs(), b.component(k).abs());
        m1 += x * y;
        sq += (x - y) * (x - y);
    }
    let literal_total = m1 + sq;
    GenuineMass {
        m1,
        m2_literal: sq,
        m2: 0.5 * sq,
        total: m1 + 0.5 * sq,
        literal_total,
        literal_differs: (literal_total - 1.0).abs() > 1e-12,
    }
}

/// Weights `p_1, …, p_L` of the `w`-extension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::domain("weight vector needs L >= 1 entries"));
        }
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::domain("weights must be finite and nonnegative"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::domain(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::domain("weight vector needs L >= 1 entries"));
        }
        Ok(Self(vec![1.0 / len as f64; len]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `p_ℓ` for `ℓ = 1..=L`.
    pub fn get(&self, l: usize) -> f64 {
        self.0[l - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        WeightVector::new(p)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Interval index `ℓ` with `(ℓ-1)/L <= w < ℓ/L`.
pub fn weight_interval(w: f64, len: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::domain(format!("w = {w} outside [0, 1)")));
    }
    if len == 0 {
        return Err(Error::domain("L must be at least 1"));
    }
    let l_f = len as f64;
    let mut l = ((w * l_f).floor() as usize + 1).min(len);
    while l > 1 && w < (l - 1) as f64 / l_f {
        l -= 1;
    }
    while l < len && w >= l as f64 / l_f {
        l += 1;
    }
    Ok(l)
}

/// `s(w) = (-1)^ℓ` on `[(ℓ-1)/L, ℓ/L)`.
pub fn eval_s(w: f64, len: usize) -> Result<Spin> {
    let l = weight_interval(w, len)?;
    Ok(if l % 2 == 0 { Spin::Up } else { Spin::Down })
}

/// `q(w) = p_ℓ` on `[(ℓ-1)/L, ℓ/L)`.
pub fn eval_q(w: f64, weights: &WeightVector) -> Result<f64> {
    Ok(weights.get(weight_interval(w, weights.len())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> UnitVector3 {
        UnitVector3::new(x, y, z).unwrap()
    }

    #[test]
    fn detector_a_examples() {
        let a = UnitVector3::X;
        assert_eq!(detector_a(&a, -0.5), Spin::Up);
        assert_eq!(detector_a(&a, 0.25), Spin::Down);
        assert_eq!(detector_a(&a, 0.75), Spin::Up);
        assert_eq!(detector_a(&UnitVector3::Z, -2.5), Spin::Up);
        assert_eq!(detector_a(&v(-1.0, 0.0, 0.0), -0.5), Spin::Down);
        assert_eq!(detector_a(&a, -7.0), Spin::Up);
        assert_eq!(detector_a(&a, 40.6), Spin::Up);
        // strip boundaries are half-open
        assert_eq!(detector_a(&v(1.0, 0.0, 0.0), -1.0), Spin::Up);
        assert_eq!(detector_a(&v(0.0, -1.0, 0.0), -1.0), Spin::Up);
        assert_eq!(detector_a(&v(0.0, -1.0, 0.0), -1.5), Spin::Down);
    }

    #[test]
    fn detector_b_examples() {
        assert_eq!(detector_b(&UnitVector3::X, -0.5), Spin::Down);
        assert_eq!(detector_b(&UnitVector3::Y, 0.1), Spin::Up);
        assert_eq!(detector_b(&UnitVector3::Y, 0.6), Spin::Down);
        assert_eq!(detector_b(&UnitVector3::Y, -10.0), Spin::Down);
    }

    #[test]
    fn cell_roles_follow_layout() {
        let n = 4;
        assert_eq!(
            CellRole::of(0, MeasureVariant::Spline, n),
            Some(CellRole::Strip { k: 1 })
        );
        assert_eq!(
            CellRole::of(-2, MeasureVariant::Spline, n),
            Some(CellRole::Strip { k: 3 })
        );
        assert_eq!(
            CellRole::of(3, MeasureVariant::Spline, n),
            Some(CellRole::Spline { k: 1, j: 3 })
        );
        assert_eq!(
            CellRole::of(5, MeasureVariant::Spline, n),
            Some(CellRole::Spline { k: 2, j: 1 })
        );
        assert_eq!(
            CellRole::of(12, MeasureVariant::Spline, n),
            Some(CellRole::Spline { k: 3, j: 4 })
        );
        assert_eq!(
            CellRole::of(13, MeasureVariant::Spline, n),
            Some(CellRole::Spline { k: 1, j: -2 })
        );
        assert_eq!(
            CellRole::of(21, MeasureVariant::Spline, n),
            Some(CellRole::Spline { k: 3, j: 0 })
        );
        assert_eq!(CellRole::of(22, MeasureVariant::Spline, n), None);
        assert_eq!(
            CellRole::of(3, MeasureVariant::Genuine, n),
            Some(CellRole::Genuine { k: 3 })
        );
        assert_eq!(CellRole::of(4, MeasureVariant::Genuine, n), None);
        // every (k, j) appears exactly once
        let mut seen = std::collections::BTreeSet::new();
        for cell in 1..=3 * n as i64 + 9 {
            if let Some(CellRole::Spline { k, j }) = CellRole::of(cell, MeasureVariant::Spline, n) {
                assert!(seen.insert((k, j)));
            }
        }
        assert_eq!(seen.len(), 3 * (n + 3));
    }

    #[test]
    fn sigma_tau_examples() {
        let mu = FirstLayerMeasure::new(4, UnitVector3::X, UnitVector3::Y).unwrap();
        assert_eq!(mu.eval_sigma(-0.5), 1.0);
        assert_eq!(mu.eval_sigma(-1.5), 0.0);
        assert_eq!(mu.eval_tau(-1.5), 1.0);
        assert_eq!(mu.eval_tau(-2.5), 0.0);
        assert_eq!(mu.eval_sigma(-3.5), 0.0);
        assert_eq!(mu.eval_sigma(21.5), 0.0);

        let a = v(0.6, 0.8, 0.0);
        let b = v(0.8, 0.6, 0.0);
        let mu = FirstLayerMeasure::new(4, a, b).unwrap();
        let sys = SplineSystem::new(4).unwrap();
        assert_eq!(mu.eval_sigma(2.5), sys.basis(3, 0.6).unwrap());
        assert_eq!(mu.eval_tau(2.5), 0.5 * sys.psi(3, 0.8).unwrap());
        // j = -2 for component 2 sits on cell 3n + 4
        assert_eq!(mu.eval_sigma(15.5), sys.basis(-2, 0.8).unwrap());
        assert_eq!(
            mu.density(2.5, 2.5),
            sys.basis(3, 0.6).unwrap() * 0.5 * sys.psi(3, 0.6).unwrap()
        );
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(eval_kappa(0.5, 0.5, 4), 1.0);
        assert_eq!(eval_kappa(0.5, 1.5, 4), 0.0);
        assert_eq!(eval_kappa(-2.5, -2.5, 4), 1.0);
        assert_eq!(eval_kappa(-3.5, -3.5, 4), 0.0);
    }

    #[test]
    fn density_examples() {
        let mu = FirstLayerMeasure::new(4, UnitVector3::X, UnitVector3::X).unwrap();
        assert_eq!(mu.density(-0.5, -0.5), 1.0);
        assert_eq!(mu.density(-0.5, 0.5), 0.0);
    }

    #[test]
    fn mass_examples() {
        let mu = FirstLayerMeasure::new(4, UnitVector3::X, UnitVector3::Y).unwrap();
        assert_eq!(mu.m1(), 0.0);
        let mass = mu.total_mass();
        assert!((1.0..1.015625).contains(&mass), "{mass}");

        for n in [4, 8, 13] {
            let mu = FirstLayerMeasure::new(n, UnitVector3::Z, UnitVector3::Z).unwrap();
            assert_eq!(mu.m1(), 1.0);
            assert!(mu.m2() >= 0.0 && mu.m2() < 1.0 / (4.0 * (n * n) as f64));
        }
    }

    #[test]
    fn theta_can_exceed_one_quarter() {
        // Residuals |φ_j| N_j reach (1/(4n²))·(3/4) per component, so θ is
        // bounded by 9/32, not 1/4.
        let a = UnitVector3::normalize(-0.36741268, 0.36603508, 0.85500073).unwrap();
        let mu = FirstLayerMeasure::new(4, a, a).unwrap();
        let theta = mu.theta_hat();
        assert!(theta > 0.25 && theta <= 9.0 / 32.0, "{theta}");
        assert!(mu.total_mass() < 1.0 + 1.0 / 16.0);
    }

    #[test]
    fn pair_integral_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let cases = [
            (UnitVector3::X, UnitVector3::X, -1.0),
            (UnitVector3::X, UnitVector3::Y, 0.0),
            (UnitVector3::X, v(s, s, 0.0), -s),
            (v(0.6, -0.8, 0.0), v(-0.8, 0.0, 0.6), 0.48),
        ];
        for (a, b, expected) in cases {
            let mu = FirstLayerMeasure::new(4, a, b).unwrap();
            assert!((mu.pair_integral() - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn positive_cells_integrate_to_zero() {
        let mu = FirstLayerMeasure::new(5, v(0.6, 0.8, 0.0), v(0.0, 0.6, -0.8)).unwrap();
        for off in 3..mu.grid().len() {
            assert_eq!(mu.cell_pair_integral(off), 0.0);
        }
    }

    #[test]
    fn genuine_mass_examples() {
        let g = genuine_variant_mass(&UnitVector3::X, &UnitVector3::X);
        assert_eq!((g.total, g.m2), (1.0, 0.0));
        let g = genuine_variant_mass(&UnitVector3::X, &UnitVector3::Y);
        assert_eq!(g.m1, 0.0);
        assert_eq!(g.m2_literal, 2.0);
        assert_eq!(g.total, 1.0);
        assert_eq!(g.literal_total, 2.0);
        assert!(g.literal_differs);
        let a = v(0.6, 0.8, 0.0);
        let g = genuine_variant_mass(&a, &a);
        assert_eq!((g.m1, g.m2, g.total), (1.0, 0.0, 1.0));
        assert!(!g.literal_differs);
    }

    #[test]
    fn genuine_measure_is_normalized_and_correlated() {
        let a = v(0.6, 0.8, 0.0);
        let b = v(0.0, 0.6, -0.8);
        let mu = FirstLayerMeasure::with_variant(4, a, b, MeasureVariant::Genuine).unwrap();
        assert_eq!(mu.grid().len(), 6);
        assert!((mu.total_mass() - 1.0).abs() < 1e-15);
        assert!((mu.pair_integral() + a.dot(&b)).abs() < 1e-15);
        assert_eq!(mu.density(2.5, 2.5), 0.5 * 0.8 * 0.8);
        assert_eq!(mu.density(3.5, 3.5), 0.0);
    }

    #[test]
    fn s_and_q_examples() {
        assert_eq!(eval_s(0.25, 2).unwrap(), Spin::Down);
        assert_eq!(eval_s(0.75, 2).unwrap(), Spin::Up);
        for w in [0.0, 0.3, 0.999] {
            assert_eq!(eval_s(w, 1).unwrap(), Spin::Down);
            assert_eq!(eval_q(w, &WeightVector::uniform(1).unwrap()).unwrap(), 1.0);
        }
        let p = WeightVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(eval_q(0.6, &p).unwrap(), 0.3);
        assert_eq!(eval_q(0.5, &p).unwrap(), 0.3);
        assert!(eval_s(1.0, 2).is_err());
        assert!(eval_q(-0.1, &p).is_err());
    }

    #[test]
    fn weight_interval_boundaries() {
        for len in 1..12 {
            for l in 1..=len {
                let lo = (l - 1) as f64 / len as f64;
                assert_eq!(weight_interval(lo, len).unwrap(), l);
                let below = f64::from_bits((l as f64 / len as f64).to_bits() - 1);
                assert_eq!(weight_interval(below, len).unwrap(), l);
            }
        }
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        assert!(WeightVector::new(vec![0.25; 4]).is_ok());
    }
}
