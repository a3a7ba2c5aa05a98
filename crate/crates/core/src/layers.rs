//! Permuted layers of the first-layer measure and their sign-flipped
//! companions.
//!
//! A layer moves every diagonal unit ensemble of the base measure to a new
//! cell, carrying its column strip (where `A` and `σ` live) and its row strip
//! (where `B` and `τ` live) along. It is stored as two permutations of the
//! grid offsets: `columns[i]` and `rows[i]` are the column and row that base
//! ensemble `i` lands on. Every row and column of a layer therefore holds
//! exactly one ensemble, so each layer density keeps the factored form
//! `σ(u; m) τ(v; m) κ(u, v; m) q(w; m)`.
//!
//! The full family of layers is astronomically large (see [`count_layers`]);
//! a [`LayerUniverse`] holds a uniform sample of layer pairs. Every identity
//! that pairs a layer with its companion holds exactly for any such sample.

use std::fs;
use std::path::Path;

use num_bigint::BigUint;
use num_traits::One;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{
    cell_average, detector_a, detector_b, eval_s, weight_interval, FirstLayerMeasure, Grid,
    MeasureVariant, WeightVector,
};
use crate::setting::{Spin, UnitVector3};
use crate::spline::SplineSystem;

pub const UNIVERSE_FORMAT: &str = "eprsim-layer-universe";
pub const UNIVERSE_SCHEMA_VERSION: u32 = 1;

fn binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 1..=k {
        acc *= n - k + i;
        acc /= i;
    }
    acc
}

/// Number of distinct layers, `36 C(3n+3, 3)² C(9n², 3n) (3n)!`, i.e. half
/// the number of labels of the full construction.
pub fn count_layers(n: usize) -> Result<BigUint> {
    if n < SplineSystem::MIN_N {
        return Err(Error::domain(format!("n must be >= 4, got {n}")));
    }
    let n = n as u64;
    let strips = binomial(3 * n + 3, 3);
    let mut count = BigUint::from(36u32) * &strips * &strips * binomial(9 * n * n, 3 * n);
    for i in 2..=3 * n {
        count *= i;
    }
    Ok(count)
}

fn is_permutation(p: &[u32]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&x| {
        let x = x as usize;
        x < seen.len() && !std::mem::replace(&mut seen[x], true)
    })
}

fn invert(p: &[u32]) -> Vec<u32> {
    let mut inv = vec![0; p.len()];
    for (i, &x) in p.iter().enumerate() {
        inv[x as usize] = i as u32;
    }
    inv
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    columns: Vec<u32>,
    rows: Vec<u32>,
    weights: WeightVector,
    sign: Spin,
}

/// One layer: a relocation of the base ensembles, its `w`-weights and the
/// sign it applies to both detectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayer", into = "RawLayer")]
pub struct LayerDescriptor {
    columns: Vec<u32>,
    rows: Vec<u32>,
    base_at_column: Vec<u32>,
    base_at_row: Vec<u32>,
    weights: WeightVector,
    sign: Spin,
}

impl TryFrom<RawLayer> for LayerDescriptor {
    type Error = Error;

    fn try_from(raw: RawLayer) -> Result<Self> {
        LayerDescriptor::new(raw.columns, raw.rows, raw.weights, raw.sign)
    }
}

impl From<LayerDescriptor> for RawLayer {
    fn from(l: LayerDescriptor) -> Self {
        RawLayer {
            columns: l.columns,
            rows: l.rows,
            weights: l.weights,
            sign: l.sign,
        }
    }
}

impl LayerDescriptor {
    pub fn new(
        columns: Vec<u32>,
        rows: Vec<u32>,
        weights: WeightVector,
        sign: Spin,
    ) -> Result<Self> {
        if columns.len() != rows.len() || columns.len() < 4 {
            return Err(Error::InvalidUniverse(format!(
                "column and row tables must have the grid length (got {} and {})",
                columns.len(),
                rows.len()
            )));
        }
        if !is_permutation(&columns) || !is_permutation(&rows) {
            return Err(Error::InvalidUniverse(
                "column and row tables must be permutations".into(),
            ));
        }
        let base_at_column = invert(&columns);
        let base_at_row = invert(&rows);
        Ok(Self {
            columns,
            rows,
            base_at_column,
            base_at_row,
            weights,
            sign,
        })
    }

    /// The unpermuted first layer.
    pub fn identity(grid: Grid, weights: WeightVector) -> Self {
        let id: Vec<u32> = (0..grid.len() as u32).collect();
        Self::new(id.clone(), id, weights, Spin::Up).expect("identity is a permutation")
    }

    /// Same relocation and weights with both detectors negated.
    pub fn companion(&self) -> Self {
        Self {
            sign: -self.sign,
            ..self.clone()
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::with_len(self.columns.len())
    }

    pub fn sign(&self) -> Spin {
        self.sign
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    /// Column offset holding base ensemble `base`.
    pub fn column_of(&self, base: usize) -> usize {
        self.columns[base] as usize
    }

    /// Row offset holding base ensemble `base`.
    pub fn row_of(&self, base: usize) -> usize {
        self.rows[base] as usize
    }

    pub fn base_at_column(&self, column: usize) -> usize {
        self.base_at_column[column] as usize
    }

    pub fn base_at_row(&self, row: usize) -> usize {
        self.base_at_row[row] as usize
    }

    /// Column cells receiving the strips `k = 3, 2, 1` (base cells -2, -1, 0).
    pub fn negative_columns(&self) -> [i64; 3] {
        let g = self.grid();
        [0, 1, 2].map(|i| g.cell_of_offset(self.column_of(i)))
    }

    /// Row cells receiving the strips `k = 3, 2, 1`.
    pub fn negative_rows(&self) -> [i64; 3] {
        let g = self.grid();
        [0, 1, 2].map(|i| g.cell_of_offset(self.row_of(i)))
    }

    /// `(base offset, column offset, row offset)` for every ensemble.
    pub fn placements(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.columns.len()).map(|i| (i, self.column_of(i), self.row_of(i)))
    }

    fn base_coordinate(&self, t: f64, table: &[u32]) -> f64 {
        let g = self.grid();
        match g.offset_of(t) {
            Some(p) => {
                let base = table[p] as usize;
                g.cell_start(base) + (t - g.cell_start(p))
            }
            None => t,
        }
    }

    /// Pre-image in the first layer of a station-1 coordinate.
    pub fn base_u(&self, u: f64) -> f64 {
        self.base_coordinate(u, &self.base_at_column)
    }

    /// Pre-image in the first layer of a station-2 coordinate.
    pub fn base_v(&self, v: f64) -> f64 {
        self.base_coordinate(v, &self.base_at_row)
    }

    fn s(&self, w: f64) -> Spin {
        // w lives on the unit circle
        let w = w - w.floor();
        eval_s(
            w.min(f64::from_bits(1f64.to_bits() - 1)),
            self.weights.len(),
        )
        .expect("w reduced into [0, 1)")
    }

    /// `A_a(u, w; m)`.
    pub fn eval_a(&self, a: &UnitVector3, u: f64, w: f64) -> Spin {
        self.sign * detector_a(a, self.base_u(u)) * self.s(w)
    }

    /// `B_b(v, w; m)`.
    pub fn eval_b(&self, b: &UnitVector3, v: f64, w: f64) -> Spin {
        self.sign * detector_b(b, self.base_v(v)) * self.s(w)
    }

    pub fn eval_sigma(&self, mu: &FirstLayerMeasure, u: f64) -> f64 {
        self.grid()
            .offset_of(u)
            .map_or(0.0, |p| mu.sigma_at(self.base_at_column(p)))
    }

    pub fn eval_tau(&self, mu: &FirstLayerMeasure, v: f64) -> f64 {
        self.grid()
            .offset_of(v)
            .map_or(0.0, |r| mu.tau_at(self.base_at_row(r)))
    }

    pub fn eval_kappa(&self, u: f64, v: f64) -> f64 {
        let g = self.grid();
        match (g.offset_of(u), g.offset_of(v)) {
            (Some(p), Some(r)) if self.base_at_column(p) == self.base_at_row(r) => 1.0,
            _ => 0.0,
        }
    }

    pub fn eval_q(&self, w: f64) -> f64 {
        weight_interval(w, self.weights.len()).map_or(0.0, |l| self.weights.get(l))
    }

    /// `ρ(u, v, w; m) = σ(u; m) τ(v; m) κ(u, v; m) q(w; m)`; zero off the support.
    pub fn density(&self, mu: &FirstLayerMeasure, u: f64, v: f64, w: f64) -> f64 {
        self.eval_sigma(mu, u) * self.eval_tau(mu, v) * self.eval_kappa(u, v) * self.eval_q(w)
    }

    /// Integral of [`Self::density`] over `(u, v, w)`: the plane mass times
    /// `∫ q(w) dw = 1/L`.
    pub fn density_integral(&self, mu: &FirstLayerMeasure) -> f64 {
        self.total_mass(mu) / self.weights.len() as f64
    }

    /// Mass of `σ τ κ` over the plane, summed in base order.
    pub fn total_mass(&self, mu: &FirstLayerMeasure) -> f64 {
        self.placements()
            .map(|(_, p, r)| mu.sigma_at(self.base_at_column(p)) * mu.tau_at(self.base_at_row(r)))
            .sum()
    }

    /// `∫ A_a(u, w; m) B_b(v, w; m) σ τ κ du dv` with weight interval `ℓ`
    /// carrying probability `p_ℓ`, summed exactly over the occupied cells
    /// using the layer's own detector functions.
    pub fn pair_integral(&self, mu: &FirstLayerMeasure) -> f64 {
        let g = self.grid();
        let len = self.weights.len();
        let w_mid = |l: usize| (l as f64 - 0.5) / len as f64;
        let mut total = 0.0;
        for (_, p, r) in self.placements() {
            let mass = mu.sigma_at(self.base_at_column(p)) * mu.tau_at(self.base_at_row(r));
            if mass == 0.0 {
                continue;
            }
            for l in 1..=len {
                let w = w_mid(l);
                let avg_a = cell_average(g.cell_start(p), |u| self.eval_a(mu.a(), u, w));
                let avg_b = cell_average(g.cell_start(r), |v| self.eval_b(mu.b(), v, w));
                total += mass * self.weights.get(l) * avg_a * avg_b;
            }
        }
        total
    }
}

/// A layer and its companion, labelled `2m - 1` and `2m`.
pub type LayerPair = (LayerDescriptor, LayerDescriptor);

/// Uniformly samples a relocation and returns it with its companion.
pub fn sample_layer_pair<R: Rng + ?Sized>(
    grid: Grid,
    weights: WeightVector,
    rng: &mut R,
) -> LayerPair {
    let mut columns: Vec<u32> = (0..grid.len() as u32).collect();
    let mut rows = columns.clone();
    columns.shuffle(rng);
    rows.shuffle(rng);
    let layer =
        LayerDescriptor::new(columns, rows, weights, Spin::Up).expect("shuffles are permutations");
    let companion = layer.companion();
    (layer, companion)
}

/// Prior for the per-layer weights `p_{mℓ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPrior {
    /// Symmetric Dirichlet with the given concentration.
    Dirichlet { alpha: f64 },
    /// The same fixed vector for every layer.
    Fixed(WeightVector),
}

impl Default for WeightPrior {
    fn default() -> Self {
        WeightPrior::Dirichlet { alpha: 1.0 }
    }
}

impl WeightPrior {
    pub fn draw<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Result<WeightVector> {
        match self {
            WeightPrior::Fixed(w) => {
                if w.len() != len {
                    return Err(Error::domain(format!(
                        "fixed weights have {} entries, expected L = {len}",
                        w.len()
                    )));
                }
                Ok(w.clone())
            }
            WeightPrior::Dirichlet { alpha } => {
                let gamma = Gamma::new(*alpha, 1.0)
                    .map_err(|e| Error::domain(format!("Dirichlet concentration {alpha}: {e}")))?;
                loop {
                    let draws: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
                    let sum: f64 = draws.iter().sum();
                    if sum > 0.0 {
                        let mut p: Vec<f64> = draws.iter().map(|x| x / sum).collect();
                        // push the rounding residue into the largest entry
                        let resid = 1.0 - p.iter().sum::<f64>();
                        let max = (0..len)
                            .max_by(|&i, &j| p[i].total_cmp(&p[j]))
                            .expect("len >= 1");
                        p[max] = (p[max] + resid).max(0.0);
                        return WeightVector::new(p);
                    }
                }
            }
        }
    }
}

/// How a universe is sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniverseParams {
    pub n: usize,
    pub variant: MeasureVariant,
    /// Number of layer pairs `M`.
    pub pairs: usize,
    /// Number of `w` intervals `L`.
    pub weight_count: usize,
    pub prior: WeightPrior,
    /// Use one weight vector for every layer (`p_{mℓ} = p_ℓ`).
    pub tie_weights: bool,
    /// Sample in blocks of grid-length cyclic shifts so that every base
    /// ensemble visits every column and row equally often within a block.
    pub balanced: bool,
}

impl UniverseParams {
    pub fn new(n: usize, pairs: usize) -> Self {
        Self {
            n,
            variant: MeasureVariant::Spline,
            pairs,
            weight_count: 2,
            prior: WeightPrior::default(),
            tie_weights: false,
            balanced: false,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct UniverseDocument {
    format: String,
    schema_version: u32,
    n: usize,
    variant: MeasureVariant,
    weight_count: usize,
    tie_weights: bool,
    companion_sign_flip: bool,
    layers: Vec<LayerDescriptor>,
}

/// A finite family of layer pairs with the labelling variable `R` uniform on
/// `1..=2M`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerUniverse {
    n: usize,
    variant: MeasureVariant,
    weight_count: usize,
    tie_weights: bool,
    companion_sign_flip: bool,
    /// Label order: original `2m - 1`, companion `2m`.
    layers: Vec<LayerDescriptor>,
}

impl LayerUniverse {
    pub fn sample<R: Rng + ?Sized>(params: &UniverseParams, rng: &mut R) -> Result<Self> {
        SplineSystem::new(params.n)?;
        if params.pairs == 0 {
            return Err(Error::domain("a universe needs at least one layer pair"));
        }
        if params.weight_count == 0 {
            return Err(Error::domain("L must be at least 1"));
        }
        let grid = Grid::for_variant(params.variant, params.n);
        let g = grid.len() as u32;
        let shared = if params.tie_weights {
            Some(params.prior.draw(params.weight_count, rng)?)
        } else {
            None
        };
        let mut layers = Vec::with_capacity(2 * params.pairs);
        let mut block: Option<(Vec<u32>, Vec<u32>)> = None;
        for m in 0..params.pairs {
            let weights = match &shared {
                Some(w) => w.clone(),
                None => params.prior.draw(params.weight_count, rng)?,
            };
            let (layer, companion) = if params.balanced {
                let shift = (m % grid.len()) as u32;
                if shift == 0 {
                    let (l, _) = sample_layer_pair(grid, weights.clone(), rng);
                    block = Some((l.columns, l.rows));
                }
                let (cols, rows) = block.as_ref().expect("block drawn at shift 0");
                let layer = LayerDescriptor::new(
                    cols.iter().map(|c| (c + shift) % g).collect(),
                    rows.iter().map(|r| (r + shift) % g).collect(),
                    weights,
                    Spin::Up,
                )?;
                let companion = layer.companion();
                (layer, companion)
            } else {
                sample_layer_pair(grid, weights, rng)
            };
            layers.push(layer);
            layers.push(companion);
        }
        Ok(Self {
            n: params.n,
            variant: params.variant,
            weight_count: params.weight_count,
            tie_weights: params.tie_weights,
            companion_sign_flip: true,
            layers,
        })
    }

    /// Builds a universe from explicit layer pairs.
    pub fn from_pairs(n: usize, variant: MeasureVariant, pairs: Vec<LayerPair>) -> Result<Self> {
        let weight_count = pairs
            .first()
            .map(|(l, _)| l.weights().len())
            .ok_or_else(|| Error::domain("a universe needs at least one layer pair"))?;
        let tie_weights = pairs
            .iter()
            .all(|(l, _)| l.weights() == pairs[0].0.weights());
        let layers = pairs.into_iter().flat_map(|(l, c)| [l, c]).collect();
        let universe = Self {
            n,
            variant,
            weight_count,
            tie_weights,
            companion_sign_flip: true,
            layers,
        };
        universe.validate()?;
        Ok(universe)
    }

    fn validate(&self) -> Result<()> {
        SplineSystem::new(self.n).map_err(|e| Error::InvalidUniverse(e.to_string()))?;
        let grid = self.grid();
        if self.layers.is_empty() || self.layers.len() % 2 != 0 {
            return Err(Error::InvalidUniverse(format!(
                "expected a nonzero even number of layers, got {}",
                self.layers.len()
            )));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.grid() != grid {
                return Err(Error::InvalidUniverse(format!(
                    "layer {} has grid length {}, expected {}",
                    idx + 1,
                    layer.grid().len(),
                    grid.len()
                )));
            }
            if layer.weights().len() != self.weight_count {
                return Err(Error::InvalidUniverse(format!(
                    "layer {} has {} weights, expected {}",
                    idx + 1,
                    layer.weights().len(),
                    self.weight_count
                )));
            }
        }
        for (m, pair) in self.layers.chunks(2).enumerate() {
            let (orig, comp) = (&pair[0], &pair[1]);
            let expected_sign = if self.companion_sign_flip {
                -orig.sign
            } else {
                orig.sign
            };
            if orig.columns != comp.columns
                || orig.rows != comp.rows
                || orig.weights != comp.weights
                || comp.sign != expected_sign
            {
                return Err(Error::InvalidUniverse(format!(
                    "labels {} and {} are not companions",
                    2 * m + 1,
                    2 * m + 2
                )));
            }
        }
        Ok(())
    }

    /// Copy whose companions carry the same detectors as their originals;
    /// used to show that the sign flip is what cancels conditional means.
    pub fn without_sign_flips(&self) -> Self {
        let layers = self
            .layers
            .chunks(2)
            .flat_map(|p| {
                let mut comp = p[1].clone();
                comp.sign = p[0].sign;
                [p[0].clone(), comp]
            })
            .collect();
        Self {
            companion_sign_flip: false,
            layers,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn variant(&self) -> MeasureVariant {
        self.variant
    }

    pub fn grid(&self) -> Grid {
        Grid::for_variant(self.variant, self.n)
    }

    pub fn weight_count(&self) -> usize {
        self.weight_count
    }

    pub fn tie_weights(&self) -> bool {
        self.tie_weights
    }

    pub fn companion_sign_flip(&self) -> bool {
        self.companion_sign_flip
    }

    pub fn pair_count(&self) -> usize {
        self.layers.len() / 2
    }

    /// Number of labels `2M`.
    pub fn label_count(&self) -> usize {
        self.layers.len()
    }

    /// Layer with label `m` in `1..=2M`.
    pub fn layer(&self, m: usize) -> Result<&LayerDescriptor> {
        if m == 0 || m > self.layers.len() {
            return Err(Error::domain(format!(
                "label {m} outside 1..={}",
                self.layers.len()
            )));
        }
        Ok(&self.layers[m - 1])
    }

    /// Layers in label order.
    pub fn layers(&self) -> &[LayerDescriptor] {
        &self.layers
    }

    pub fn measure(&self, a: UnitVector3, b: UnitVector3) -> Result<FirstLayerMeasure> {
        FirstLayerMeasure::with_variant(self.n, a, b, self.variant)
    }

    /// Density of `(Λ*, Λ**, Λ)` given `R = m`: the layer density divided by
    /// its integral, so weight interval `ℓ` has probability `p_ℓ`.
    pub fn conditional_density(
        &self,
        mu: &FirstLayerMeasure,
        u: f64,
        v: f64,
        w: f64,
        m: usize,
    ) -> Result<f64> {
        let layer = self.layer(m)?;
        Ok(layer.density(mu, u, v, w) / layer.density_integral(mu))
    }

    /// Joint density of `(Λ*, Λ**, Λ, R)` at label `m`.
    pub fn joint_density(
        &self,
        mu: &FirstLayerMeasure,
        u: f64,
        v: f64,
        w: f64,
        m: usize,
    ) -> Result<f64> {
        Ok(self.conditional_density(mu, u, v, w, m)? / self.label_count() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = UniverseDocument {
            format: UNIVERSE_FORMAT.to_string(),
            schema_version: UNIVERSE_SCHEMA_VERSION,
            n: self.n,
            variant: self.variant,
            weight_count: self.weight_count,
            tie_weights: self.tie_weights,
            companion_sign_flip: self.companion_sign_flip,
            layers: self.layers.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            schema_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format != UNIVERSE_FORMAT {
            return Err(Error::InvalidUniverse(format!(
                "format `{}` is not `{UNIVERSE_FORMAT}`",
                header.format
            )));
        }
        if header.schema_version != UNIVERSE_SCHEMA_VERSION {
            return Err(Error::UniverseVersion {
                found: header.schema_version,
                expected: UNIVERSE_SCHEMA_VERSION,
            });
        }
        let doc: UniverseDocument = serde_json::from_str(text)?;
        let universe = Self {
            n: doc.n,
            variant: doc.variant,
            weight_count: doc.weight_count,
            tie_weights: doc.tie_weights,
            companion_sign_flip: doc.companion_sign_flip,
            layers: doc.layers,
        };
        universe.validate()?;
        Ok(universe)
    }
}

pub fn save_universe(universe: &LayerUniverse, path: &Path) -> Result<()> {
    let mut text = universe.to_json()?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_universe(path: &Path) -> Result<LayerUniverse> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    LayerUniverse::from_json(&text)
}
