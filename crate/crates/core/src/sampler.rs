//! Monte Carlo draws from the joint law of `(R, Λ*, Λ**, Λ)`.
//!
//! Every component is drawn by inverse transform: label, base ensemble by its
//! share of the layer mass, uniform offsets inside the relocated cell, then
//! the weight interval and a uniform `w` inside it. Trials run in fixed-size
//! batches on separate random streams and are merged in batch order, so
//! results do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emission::{exponential_wait, label_from_time};
use crate::error::{Error, Result};
use crate::layers::{LayerDescriptor, LayerUniverse};
use crate::measure::{weight_interval, FirstLayerMeasure, Grid};
use crate::rng::{stream, Purpose};
use crate::setting::{Spin, UnitVector3};

/// Trials per random stream.
pub const BATCH_SIZE: u64 = 1 << 16;

/// One realisation of the hidden parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenSample {
    pub m: usize,
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

/// A hidden sample with the two spin values it produces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub sample: HiddenSample,
    pub a: Spin,
    pub b: Spin,
}

/// How the label `R` is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Uniform on `1..=2M`.
    #[default]
    Uniform,
    /// Emission times of a Poisson process wrapped onto the unit circle.
    Emission { theta: f64 },
}

/// Label generator state; emission labels depend on the running time.
#[derive(Clone, Debug)]
pub struct LabelStream {
    source: LabelSource,
    labels: usize,
    time: f64,
}

impl LabelStream {
    pub fn new(source: LabelSource, labels: usize) -> Result<Self> {
        if let LabelSource::Emission { theta } = source {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(Error::domain(format!(
                    "theta must be positive, got {theta}"
                )));
            }
        }
        if labels == 0 {
            return Err(Error::domain("label count must be at least 1"));
        }
        Ok(Self {
            source,
            labels,
            time: 0.0,
        })
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        match self.source {
            LabelSource::Uniform => rng.random_range(1..=self.labels),
            LabelSource::Emission { theta } => {
                self.time += exponential_wait(theta, rng);
                label_from_time(self.time, self.labels).expect("labels >= 1")
            }
        }
    }
}

/// Sampling tables for one universe and one setting pair.
#[derive(Clone, Debug)]
pub struct Experiment<'a> {
    universe: &'a LayerUniverse,
    measure: FirstLayerMeasure,
    /// Base offsets with positive mass and their cumulative normalized mass.
    bases: Vec<usize>,
    base_cdf: Vec<f64>,
    /// Cumulative weights per label.
    weight_cdfs: Vec<Vec<f64>>,
}

fn cdf(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    let total = *out.last().expect("nonempty");
    for x in &mut out {
        *x /= total;
    }
    *out.last_mut().expect("nonempty") = 1.0;
    out
}

fn pick(cdf: &[f64], x: f64) -> usize {
    cdf.partition_point(|&c| c <= x).min(cdf.len() - 1)
}

/// `start + U` for `U` uniform in `[0, 1)`, redrawn if rounding pushes it
/// out of the cell.
fn uniform_in_cell<R: Rng + ?Sized>(grid: Grid, offset: usize, rng: &mut R) -> f64 {
    let start = grid.cell_start(offset);
    loop {
        let t = start + rng.random::<f64>();
        if grid.offset_of(t) == Some(offset) {
            return t;
        }
    }
}

impl<'a> Experiment<'a> {
    pub fn new(universe: &'a LayerUniverse, a: UnitVector3, b: UnitVector3) -> Result<Self> {
        let measure = universe.measure(a, b)?;
        let (bases, masses): (Vec<usize>, Vec<f64>) = (0..measure.grid().len())
            .map(|i| (i, measure.cell_mass_at(i)))
            .filter(|&(_, m)| m > 0.0)
            .unzip();
        let base_cdf = cdf(masses.into_iter());
        let weight_cdfs = universe
            .layers()
            .iter()
            .map(|l| cdf(l.weights().as_slice().iter().copied()))
            .collect();
        Ok(Self {
            universe,
            measure,
            bases,
            base_cdf,
            weight_cdfs,
        })
    }

    pub fn measure(&self) -> &FirstLayerMeasure {
        &self.measure
    }

    pub fn universe(&self) -> &LayerUniverse {
        self.universe
    }

    /// `E{A_a B_b}` of the sampled law: `-a·b / T` with `T` the layer mass.
    pub fn normalized_target(&self) -> f64 {
        -self.measure.a().dot(self.measure.b()) / self.measure.total_mass()
    }

    fn layer(&self, m: usize) -> &LayerDescriptor {
        &self.universe.layers()[m - 1]
    }

    /// Hidden parameters given the label `m`.
    pub fn draw_given_label<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> HiddenSample {
        let layer = self.layer(m);
        let grid = self.measure.grid();
        let base = self.bases[pick(&self.base_cdf, rng.random())];
        let u = uniform_in_cell(grid, layer.column_of(base), rng);
        let v = uniform_in_cell(grid, layer.row_of(base), rng);
        let len = layer.weights().len();
        let l = pick(&self.weight_cdfs[m - 1], rng.random()) + 1;
        let w = loop {
            let w = (l as f64 - 1.0 + rng.random::<f64>()) / len as f64;
            if weight_interval(w, len).ok() == Some(l) {
                break w;
            }
        };
        HiddenSample { m, u, v, w }
    }

    pub fn outcome(&self, sample: HiddenSample) -> Outcome {
        let layer = self.layer(sample.m);
        Outcome {
            sample,
            a: layer.eval_a(self.measure.a(), sample.u, sample.w),
            b: layer.eval_b(self.measure.b(), sample.v, sample.w),
        }
    }

    /// One draw with a uniform label.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        let m = rng.random_range(1..=self.universe.label_count());
        self.outcome(self.draw_given_label(m, rng))
    }

    /// One draw with the label taken from `labels`.
    pub fn draw_with_labels<R: Rng + ?Sized>(
        &self,
        labels: &mut LabelStream,
        rng: &mut R,
    ) -> Outcome {
        let m = labels.next(rng);
        self.outcome(self.draw_given_label(m, rng))
    }
}

/// Count, mean and sum of squared deviations, mergeable in any fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        RunningStats {
            count,
            mean: self.mean + d * nb / count as f64,
            m2: self.m2 + other.m2 + d * d * na * nb / count as f64,
        }
    }

    /// Sample variance; zero for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Monte Carlo estimate of `E{A_a B_b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    /// `-a·b`.
    pub exact_target: f64,
    /// Expectation of the sampled law, `-a·b / T`.
    pub normalized_target: f64,
    pub batch_means: Vec<f64>,
}

fn run_batches(
    experiment: &Experiment<'_>,
    trials: u64,
    seed: u64,
    first_stream: u64,
    labels: LabelSource,
) -> Result<Vec<RunningStats>> {
    let label_count = experiment.universe.label_count();
    LabelStream::new(labels, label_count)?;
    let batches = trials.div_ceil(BATCH_SIZE);
    Ok((0..batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = stream(seed, Purpose::Trials, first_stream + batch);
            let mut label_stream = LabelStream::new(labels, label_count).expect("validated");
            let size = BATCH_SIZE.min(trials - batch * BATCH_SIZE);
            let mut stats = RunningStats::default();
            for _ in 0..size {
                let o = experiment.draw_with_labels(&mut label_stream, &mut rng);
                stats.push((o.a * o.b).as_f64());
            }
            stats
        })
        .collect())
}

/// Estimates `E{A_a B_b}` from `trials` independent draws.
pub fn run_experiment(
    universe: &LayerUniverse,
    a: UnitVector3,
    b: UnitVector3,
    trials: u64,
    seed: u64,
) -> Result<CorrelationEstimate> {
    run_experiment_with(universe, a, b, trials, seed, 0, LabelSource::Uniform)
}

/// [`run_experiment`] with an explicit first stream index and label source.
pub fn run_experiment_with(
    universe: &LayerUniverse,
    a: UnitVector3,
    b: UnitVector3,
    trials: u64,
    seed: u64,
    first_stream: u64,
    labels: LabelSource,
) -> Result<CorrelationEstimate> {
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    let experiment = Experiment::new(universe, a, b)?;
    let batches = run_batches(&experiment, trials, seed, first_stream, labels)?;
    let stats = batches
        .iter()
        .fold(RunningStats::default(), |acc, s| acc.merge(s));
    Ok(CorrelationEstimate {
        mean: stats.mean,
        stderr: stats.stderr(),
        trials: stats.count,
        exact_target: -a.dot(&b),
        normalized_target: experiment.normalized_target(),
        batch_means: batches.iter().map(|s| s.mean).collect(),
    })
}

/// CHSH combination of four correlation estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    /// `|E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|`.
    pub s: f64,
    /// `sqrt` of the summed squared standard errors.
    pub sigma: f64,
    /// The same combination of the exact correlations `-x·y`.
    pub exact_s: f64,
    /// Estimates for `(a,b)`, `(a,b')`, `(a',b)`, `(a',b')`.
    pub estimates: Vec<CorrelationEstimate>,
}

fn chsh_combination(e: [f64; 4]) -> f64 {
    (e[0] - e[1]).abs() + (e[2] + e[3]).abs()
}

/// Runs the four setting pairs on disjoint streams of `seed`.
pub fn chsh(
    universe: &LayerUniverse,
    settings: [UnitVector3; 4],
    trials: u64,
    seed: u64,
) -> Result<ChshResult> {
    let [a, a2, b, b2] = settings;
    let pairs = [(a, b), (a, b2), (a2, b), (a2, b2)];
    let stride = trials.div_ceil(BATCH_SIZE).max(1);
    let estimates = pairs
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            run_experiment_with(
                universe,
                x,
                y,
                trials,
                seed,
                i as u64 * stride,
                LabelSource::Uniform,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let means = [0, 1, 2, 3].map(|i| estimates[i].mean);
    let exact = [0, 1, 2, 3].map(|i| estimates[i].exact_target);
    Ok(ChshResult {
        s: chsh_combination(means),
        sigma: estimates
            .iter()
            .map(|e| e.stderr * e.stderr)
            .sum::<f64>()
            .sqrt(),
        exact_s: chsh_combination(exact),
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::UniverseParams;

    fn universe(pairs: usize) -> LayerUniverse {
        LayerUniverse::sample(
            &UniverseParams::new(4, pairs),
            &mut stream(1, Purpose::Layers, 0),
        )
        .unwrap()
    }

    #[test]
    fn samples_land_on_positive_density() {
        let u = universe(10);
        let a = UnitVector3::normalize(0.3, -0.5, 0.8).unwrap();
        let b = UnitVector3::normalize(-0.7, 0.1, 0.2).unwrap();
        let e = Experiment::new(&u, a, b).unwrap();
        let mut rng = stream(2, Purpose::Test, 0);
        for _ in 0..20_000 {
            let o = e.draw(&mut rng);
            let s = o.sample;
            assert!(u.joint_density(e.measure(), s.u, s.v, s.w, s.m).unwrap() > 0.0);
            assert!((0.0..1.0).contains(&s.w));
        }
    }

    #[test]
    fn label_frequencies_are_uniform() {
        let u = universe(50);
        let e = Experiment::new(&u, UnitVector3::X, UnitVector3::Y).unwrap();
        let mut rng = stream(3, Purpose::Test, 0);
        let mut counts = vec![0u64; 100];
        for _ in 0..1_000_000 {
            counts[e.draw(&mut rng).sample.m - 1] += 1;
        }
        // 99.9% quantile of chi-square with 99 degrees of freedom
        assert!(crate::emission::chi_square_uniform(&counts) < 148.2304);
    }

    #[test]
    fn cell_occupancy_matches_masses() {
        let u = universe(3);
        let a = UnitVector3::normalize(0.3, -0.5, 0.8).unwrap();
        let b = UnitVector3::normalize(-0.7, 0.1, 0.2).unwrap();
        let e = Experiment::new(&u, a, b).unwrap();
        let mu = e.measure();
        let g = mu.grid();
        let mut rng = stream(4, Purpose::Test, 0);
        let trials = 1_000_000;
        let mut counts = vec![0u64; g.len()];
        for _ in 0..trials {
            let s = e.draw(&mut rng).sample;
            let layer = u.layer(s.m).unwrap();
            counts[layer.base_at_column(g.offset_of(s.u).unwrap())] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = mu.cell_mass_at(i) / mu.total_mass();
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (c as f64 / trials as f64 - p).abs() <= 4.0 * se + 1e-12,
                "cell {i}"
            );
        }
    }

    #[test]
    fn equal_settings_anticorrelate() {
        let u = universe(20);
        let a = UnitVector3::from_degrees(30.0);
        let est = run_experiment(&u, a, a, 100_000, 5).unwrap();
        assert!((est.mean - est.normalized_target).abs() <= 3.29 * est.stderr);
        assert!(est.exact_target == -1.0 || (est.exact_target + 1.0).abs() < 1e-15);
    }

    #[test]
    fn replay_is_bit_identical() {
        let u = universe(5);
        let a = UnitVector3::from_degrees(10.0);
        let b = UnitVector3::from_degrees(80.0);
        let e1 = run_experiment(&u, a, b, 200_000, 11).unwrap();
        let e2 = run_experiment(&u, a, b, 200_000, 11).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.trials, 200_000);
        assert_eq!(e1.batch_means.len(), 4);
        assert!(run_experiment(&u, a, b, 0, 11).is_err());
    }

    #[test]
    fn stats_merge_matches_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut all = RunningStats::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut left = RunningStats::default();
        let mut right = RunningStats::default();
        xs[..300].iter().for_each(|&x| left.push(x));
        xs[300..].iter().for_each(|&x| right.push(x));
        let merged = left.merge(&right);
        assert_eq!(merged.count, all.count);
        assert!((merged.mean - all.mean).abs() < 1e-12);
        assert!((merged.m2 - all.m2).abs() < 1e-9);
        let mut flat = RunningStats::default();
        (0..10).for_each(|_| flat.push(-1.0));
        assert_eq!(flat.stderr(), 0.0);
    }

    #[test]
    fn degenerate_chsh() {
        let u = universe(20);
        let a = UnitVector3::from_degrees(0.0);
        let r = chsh(&u, [a, a, a, a], 50_000, 3).unwrap();
        assert!((r.exact_s - 2.0).abs() < 1e-12);
        assert!((r.s - 2.0).abs() <= 3.29 * r.sigma + 1e-12);
    }

    #[test]
    fn emission_labels_drive_the_sampler() {
        let u = universe(10);
        let a = UnitVector3::from_degrees(0.0);
        let b = UnitVector3::from_degrees(60.0);
        let est = run_experiment_with(
            &u,
            a,
            b,
            200_000,
            9,
            0,
            LabelSource::Emission { theta: 0.7 },
        )
        .unwrap();
        assert!((est.mean - est.normalized_target).abs() <= 3.29 * est.stderr);
    }
}
