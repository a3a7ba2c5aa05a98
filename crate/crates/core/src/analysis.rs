//! Exact expectations and dependence diagnostics over a layer universe.
//!
//! Given settings, the law of `(Λ*, Λ**, Λ, R)` is piecewise constant on
//! (column cell, row cell, weight interval, label), so every quantity here is
//! a finite sum. Detector values are constant on half cells, which is the
//! finest resolution conditional means need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::LayerUniverse;
use crate::measure::FirstLayerMeasure;
use crate::setting::UnitVector3;

/// Which station's outcome a conditional mean refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Station {
    A,
    B,
}

/// `E{A_a B_b}` under the mixture, each layer contributing its exact
/// integral with weight `1/2M`.
pub fn pair_expectation(universe: &LayerUniverse, a: UnitVector3, b: UnitVector3) -> Result<f64> {
    let mu = universe.measure(a, b)?;
    let total: f64 = universe.layers().iter().map(|l| l.pair_integral(&mu)).sum();
    Ok(total / universe.label_count() as f64)
}

fn w_mid(l: usize, len: usize) -> f64 {
    (l as f64 - 0.5) / len as f64
}

/// Largest `|E{A_a | Λ, Λ*}|` (or the `B` analogue) over all bins of
/// positive probability. Bins are (cell of `Λ*`, half cell, weight interval).
///
/// Contributions are accumulated label by label, so an original layer and its
/// companion cancel exactly.
pub fn conditional_expectation_zero(
    universe: &LayerUniverse,
    a: UnitVector3,
    b: UnitVector3,
    station: Station,
) -> Result<f64> {
    let mu = universe.measure(a, b)?;
    let grid = mu.grid();
    let g = grid.len();
    let len = universe.weight_count();
    let total = mu.total_mass();
    let p_label = 1.0 / universe.label_count() as f64;
    let idx = |cell: usize, half: usize, l: usize| (cell * 2 + half) * len + (l - 1);
    let mut num = vec![0.0; g * 2 * len];
    let mut den = vec![0.0; g * 2 * len];
    for layer in universe.layers() {
        for (base, col, row) in layer.placements() {
            let mass = mu.cell_mass_at(base) / total * p_label;
            if mass == 0.0 {
                continue;
            }
            let cell = match station {
                Station::A => col,
                Station::B => row,
            };
            for half in 0..2 {
                let t = grid.cell_start(cell) + 0.25 + 0.5 * half as f64;
                for l in 1..=len {
                    let w = w_mid(l, len);
                    let spin = match station {
                        Station::A => layer.eval_a(mu.a(), t, w),
                        Station::B => layer.eval_b(mu.b(), t, w),
                    };
                    let p = 0.5 * mass * layer.weights().get(l);
                    num[idx(cell, half, l)] += p * spin.as_f64();
                    den[idx(cell, half, l)] += p;
                }
            }
        }
    }
    Ok(num
        .iter()
        .zip(&den)
        .filter(|(_, &d)| d > 0.0)
        .map(|(n, d)| (n / d).abs())
        .fold(0.0, f64::max))
}

/// Exact stochastic-dependence diagnostics for one setting triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    /// TV distance between the law of `(Λ*, Λ**)` and the product of its
    /// marginals.
    pub tv_joint_vs_product: f64,
    /// Mean over labels of the TV distance between the law of
    /// `((Λ*, Λ**), Λ)` given `R` and the product of its conditional marginals.
    pub tv_cond_indep: f64,
    /// Max over labels of the TV distance between the law of `Λ*` given `R`
    /// under settings `(a, b)` and under `(a, c)`.
    pub setting_shift: f64,
    /// Largest TV distance of the `Λ*` or `Λ**` marginal from uniform on the
    /// grid cells.
    pub marginal_uniformity: f64,
    /// TV distance between the law of `(R, Λ)` and the product of its
    /// marginals.
    pub r_lambda_dependence: f64,
    /// Mean over labels of the TV distance between the law of `(Λ*, Λ**)`
    /// given `R` and the product of its conditional marginals.
    pub cond_pair_dependence: f64,
    /// `max |P(Λ* cell, Λ** cell, Λ interval) - P(cells) P(interval)|`.
    pub lambda_factorization_defect: f64,
    /// TV distance between the unconditional `Λ*` marginals under `(a, b)`
    /// and `(a, c)`.
    pub marginal_setting_shift: f64,
    /// Mass defect `θ` of the `(a, b)` measure.
    pub theta_hat: f64,
    /// `θ n⁻² / G²`, the size of the per-cell deviation the mass defect can
    /// cause in the mixture density.
    pub uniformity_defect_bound: f64,
}

/// Per-label conditional laws over (column, row, interval) for one setting pair.
struct LawTable {
    g: usize,
    len: usize,
    /// Joint `P(col, row, l)` over all labels.
    joint: Vec<f64>,
    /// `P(col | m)` per label.
    column_given_label: Vec<Vec<f64>>,
}

impl LawTable {
    fn build(universe: &LayerUniverse, mu: &FirstLayerMeasure) -> Self {
        let g = mu.grid().len();
        let len = universe.weight_count();
        let total = mu.total_mass();
        let p_label = 1.0 / universe.label_count() as f64;
        let mut joint = vec![0.0; g * g * len];
        let mut column_given_label = Vec::with_capacity(universe.label_count());
        for layer in universe.layers() {
            let mut cols = vec![0.0; g];
            for (base, col, row) in layer.placements() {
                let mass = mu.cell_mass_at(base) / total;
                cols[col] += mass;
                for l in 1..=len {
                    joint[(col * g + row) * len + l - 1] += p_label * mass * layer.weights().get(l);
                }
            }
            column_given_label.push(cols);
        }
        Self {
            g,
            len,
            joint,
            column_given_label,
        }
    }

    fn pair(&self) -> Vec<f64> {
        self.joint
            .chunks(self.len)
            .map(|c| c.iter().sum())
            .collect()
    }

    fn interval(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for chunk in self.joint.chunks(self.len) {
            for (o, x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
        out
    }
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn marginals(pair: &[f64], g: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cols = vec![0.0; g];
    let mut rows = vec![0.0; g];
    for c in 0..g {
        for r in 0..g {
            cols[c] += pair[c * g + r];
            rows[r] += pair[c * g + r];
        }
    }
    (cols, rows)
}

fn product(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter()
        .flat_map(|x| q.iter().map(move |y| x * y))
        .collect()
}

/// Conditional laws given one label: `(col, row, l)` and their marginals.
fn label_dependence(
    universe: &LayerUniverse,
    mu: &FirstLayerMeasure,
    m: usize,
) -> Result<(f64, f64)> {
    let layer = universe.layer(m)?;
    let g = mu.grid().len();
    let len = universe.weight_count();
    let total = mu.total_mass();
    let mut joint = vec![0.0; g * g * len];
    for (base, col, row) in layer.placements() {
        let mass = mu.cell_mass_at(base) / total;
        for l in 1..=len {
            joint[(col * g + row) * len + l - 1] = mass * layer.weights().get(l);
        }
    }
    let pair: Vec<f64> = joint.chunks(len).map(|c| c.iter().sum()).collect();
    let mut interval = vec![0.0; len];
    for chunk in joint.chunks(len) {
        for (o, x) in interval.iter_mut().zip(chunk) {
            *o += x;
        }
    }
    let cond_indep = tv(&joint, &product(&pair, &interval));
    let (cols, rows) = marginals(&pair, g);
    let pair_dep = tv(&pair, &product(&cols, &rows));
    Ok((cond_indep, pair_dep))
}

/// All dependence diagnostics for settings `a`, `b` with `c` as the
/// alternative station-2 setting.
pub fn dependence_report(
    universe: &LayerUniverse,
    a: UnitVector3,
    b: UnitVector3,
    c: UnitVector3,
) -> Result<DependenceReport> {
    if c == b {
        return Err(Error::domain("alternative setting c must differ from b"));
    }
    let mu = universe.measure(a, b)?;
    let mu_c = universe.measure(a, c)?;
    let table = LawTable::build(universe, &mu);
    let table_c = LawTable::build(universe, &mu_c);
    let g = table.g;

    let pair = table.pair();
    let (cols, rows) = marginals(&pair, g);
    let tv_joint_vs_product = tv(&pair, &product(&cols, &rows));

    let uniform = vec![1.0 / g as f64; g];
    let marginal_uniformity = tv(&cols, &uniform).max(tv(&rows, &uniform));

    let (cols_c, _) = marginals(&table_c.pair(), g);
    let marginal_setting_shift = tv(&cols, &cols_c);

    let setting_shift = table
        .column_given_label
        .iter()
        .zip(&table_c.column_given_label)
        .map(|(p, q)| tv(p, q))
        .fold(0.0, f64::max);

    let labels = universe.label_count();
    let p_label = 1.0 / labels as f64;
    let mut tv_cond_indep = 0.0;
    let mut cond_pair_dependence = 0.0;
    for m in 1..=labels {
        let (ci, pd) = label_dependence(universe, &mu, m)?;
        tv_cond_indep += p_label * ci;
        cond_pair_dependence += p_label * pd;
    }

    let len = universe.weight_count();
    let mut mean_weights = vec![0.0; len];
    for layer in universe.layers() {
        for (l, o) in mean_weights.iter_mut().enumerate() {
            *o += p_label * layer.weights().get(l + 1);
        }
    }
    let r_lambda_dependence = 0.5
        * universe
            .layers()
            .iter()
            .map(|layer| {
                (1..=len)
                    .map(|l| p_label * (layer.weights().get(l) - mean_weights[l - 1]).abs())
                    .sum::<f64>()
            })
            .sum::<f64>();

    let interval = table.interval();
    let lambda_factorization_defect = table
        .joint
        .iter()
        .enumerate()
        .map(|(i, x)| (x - pair[i / len] * interval[i % len]).abs())
        .fold(0.0, f64::max);

    let theta_hat = mu.theta_hat();
    let n = mu.n() as f64;
    Ok(DependenceReport {
        tv_joint_vs_product,
        tv_cond_indep,
        setting_shift,
        marginal_uniformity,
        r_lambda_dependence,
        cond_pair_dependence,
        lambda_factorization_defect,
        marginal_setting_shift,
        theta_hat,
        uniformity_defect_bound: theta_hat / (n * n) / (g * g) as f64,
    })
}
