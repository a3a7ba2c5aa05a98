use eprsim_core::layers::{LayerUniverse, UniverseParams};
use eprsim_core::measure::FirstLayerMeasure;
use eprsim_core::rng::{stream, Purpose};
use eprsim_core::sampler::{run_experiment, Experiment};
use eprsim_core::setting::UnitVector3;
use rand::seq::SliceRandom;

fn universe(pairs: usize, seed: u64) -> LayerUniverse {
    LayerUniverse::sample(
        &UniverseParams::new(4, pairs),
        &mut stream(seed, Purpose::Layers, 0),
    )
    .unwrap()
}

#[test]
fn estimates_are_unbiased_across_seeds() {
    let u = universe(50, 1);
    let a = UnitVector3::normalize(0.3, -0.5, 0.8).unwrap();
    let b = UnitVector3::normalize(-0.7, 0.1, 0.2).unwrap();
    let runs: Vec<_> = (0..100)
        .map(|s| run_experiment(&u, a, b, 10_000, s).unwrap())
        .collect();
    let mean = runs.iter().map(|r| r.mean).sum::<f64>() / 100.0;
    let pooled = (runs.iter().map(|r| r.stderr * r.stderr).sum::<f64>()).sqrt() / 100.0;
    let target = runs[0].normalized_target;
    assert!(
        (mean - target).abs() <= 3.29 * pooled,
        "{mean} vs {target} (+/- {pooled})"
    );
    // the sampled law differs from -a.b only through the mass defect
    let mu = u.measure(a, b).unwrap();
    assert!((target * mu.total_mass() + a.dot(&b)).abs() <= 1e-12);
}

#[test]
fn joint_histogram_matches_exact_masses() {
    let u = universe(5, 2);
    let a = UnitVector3::normalize(0.3, -0.5, 0.8).unwrap();
    let b = UnitVector3::normalize(-0.7, 0.1, 0.2).unwrap();
    let e = Experiment::new(&u, a, b).unwrap();
    let mu = e.measure();
    let g = mu.grid();
    let len = u.weight_count();
    let labels = u.label_count();
    let mut counts = vec![0u64; g.len() * len * labels];
    let trials = 1_000_000u64;
    let mut rng = stream(3, Purpose::Test, 0);
    for _ in 0..trials {
        let s = e.draw(&mut rng).sample;
        let p = g.offset_of(s.u).unwrap();
        let l = (s.w * len as f64) as usize;
        counts[((s.m - 1) * g.len() + p) * len + l] += 1;
    }
    let mut worst: f64 = 0.0;
    for m in 1..=labels {
        let layer = u.layer(m).unwrap();
        for p in 0..g.len() {
            let base = layer.base_at_column(p);
            for l in 0..len {
                let prob = mu.cell_mass_at(base) / mu.total_mass() * layer.weights().get(l + 1)
                    / labels as f64;
                let se = (prob * (1.0 - prob) / trials as f64).sqrt();
                let freq = counts[((m - 1) * g.len() + p) * len + l] as f64 / trials as f64;
                if se > 0.0 {
                    worst = worst.max((freq - prob).abs() / se);
                } else {
                    assert_eq!(freq, 0.0);
                }
            }
        }
    }
    assert!(worst <= 5.0, "max deviation {worst} standard errors");
}

/// Max over cells of `|P(Λ* in p, Λ** in r) - 1/G²|` for a mixture where each
/// base ensemble lands on an independent uniform permutation pair per layer.
fn mixture_deviation(columns: &[Vec<usize>], rows: &[Vec<usize>], masses: &[f64]) -> f64 {
    let g = masses.len();
    let total: f64 = masses.iter().sum();
    let mut cells = vec![0.0; g * g];
    for (cols, rows) in columns.iter().zip(rows) {
        for i in 0..g {
            cells[cols[i] * g + rows[i]] += masses[i] / total / columns.len() as f64;
        }
    }
    let target = 1.0 / (g * g) as f64;
    cells.iter().map(|c| (c - target).abs()).fold(0.0, f64::max)
}

#[test]
fn mixture_marginal_is_close_to_uniform() {
    let pairs = 2000;
    let u = universe(pairs, 4);
    let a = UnitVector3::normalize(0.3, -0.5, 0.8).unwrap();
    let b = UnitVector3::normalize(-0.7, 0.1, 0.2).unwrap();
    let mu = FirstLayerMeasure::new(4, a, b).unwrap();
    let g = mu.grid().len();
    let masses: Vec<f64> = (0..g).map(|i| mu.cell_mass_at(i)).collect();
    let layers: Vec<_> = u.layers().iter().step_by(2).collect();
    let got = mixture_deviation(
        &layers
            .iter()
            .map(|l| (0..g).map(|i| l.column_of(i)).collect())
            .collect::<Vec<_>>(),
        &layers
            .iter()
            .map(|l| (0..g).map(|i| l.row_of(i)).collect())
            .collect::<Vec<_>>(),
        &masses,
    );
    // resampling oracle: independent shuffles, same masses
    let mut rng = stream(5, Purpose::Test, 0);
    let mut replicates: Vec<f64> = (0..200)
        .map(|_| {
            let mut draw = || {
                let mut p: Vec<usize> = (0..g).collect();
                p.shuffle(&mut rng);
                p
            };
            let cols: Vec<Vec<usize>> = (0..pairs).map(|_| draw()).collect();
            let rows: Vec<Vec<usize>> = (0..pairs).map(|_| draw()).collect();
            mixture_deviation(&cols, &rows, &masses)
        })
        .collect();
    replicates.sort_by(f64::total_cmp);
    let p99 = replicates[197];
    assert!(got <= p99, "{got} above the 99th percentile {p99}");
}
