//! Poisson emission times wrapped around the unit circle, their
//! discrepancy, and the labels they induce.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest point count for which [`extreme_discrepancy`] runs the exact
/// quadratic sweep.
pub const EXACT_EXTREME_LIMIT: usize = 10_000;

/// One realisation of the emission process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionTrace {
    pub theta: f64,
    pub waits: Vec<f64>,
    pub cums: Vec<f64>,
    pub fracs: Vec<f64>,
}

/// `x - floor(x)`.
pub fn fractional_part(x: f64) -> f64 {
    let f = x - x.floor();
    // x - floor(x) rounds to 1 for tiny negative x
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// One exponential waiting time with mean `theta`, always positive.
pub fn exponential_wait<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    loop {
        let t = -theta * (1.0 - rng.random::<f64>()).ln();
        if t > 0.0 {
            return t;
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::domain(format!(
            "theta must be positive, got {theta}"
        )));
    }
    Ok(())
}

/// `k` emissions of a Poisson process with intensity `1/theta`.
pub fn generate_trace<R: Rng + ?Sized>(theta: f64, k: usize, rng: &mut R) -> Result<EmissionTrace> {
    check_theta(theta)?;
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let waits: Vec<f64> = (0..k).map(|_| exponential_wait(theta, rng)).collect();
    let cums: Vec<f64> = waits
        .iter()
        .scan(0.0, |x, t| {
            *x += t;
            Some(*x)
        })
        .collect();
    let fracs = cums.iter().map(|&x| fractional_part(x)).collect();
    Ok(EmissionTrace {
        theta,
        waits,
        cums,
        fracs,
    })
}

fn sorted_points(points: &[f64]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::domain("discrepancy of an empty point set"));
    }
    if let Some(x) = points.iter().find(|x| !(0.0..1.0).contains(*x)) {
        return Err(Error::domain(format!("point {x} outside [0, 1)")));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

fn star_of_sorted(sorted: &[f64]) -> f64 {
    let k = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64 + 1.0;
            (i / k - x).max(x - (i - 1.0) / k)
        })
        .fold(0.0, f64::max)
}

/// Star discrepancy `D*_k = sup_β |A_k(0, β)/k - β|`.
pub fn star_discrepancy(points: &[f64]) -> Result<f64> {
    Ok(star_of_sorted(&sorted_points(points)?))
}

/// Extreme discrepancy: the exact value, or a certified bracket for large
/// point sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeDiscrepancy {
    Exact(f64),
    Bracket { lower: f64, upper: f64 },
}

impl ExtremeDiscrepancy {
    pub fn lower(&self) -> f64 {
        match *self {
            ExtremeDiscrepancy::Exact(d) => d,
            ExtremeDiscrepancy::Bracket { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            ExtremeDiscrepancy::Exact(d) => d,
            ExtremeDiscrepancy::Bracket { upper, .. } => upper,
        }
    }
}

/// Exact `sup_{α<β} |A_k(α, β)/k - (β - α)|` over half-open intervals of a
/// sorted point set, by sweeping all pairs of critical endpoints.
///
/// Over-counts are attained by `[z_i, z_j + ε)` for data values `z_i <= z_j`.
/// Under-counts are attained by intervals avoiding points at both ends: they
/// start at 0 or just above a data value and end at a data value or at 1.
fn extreme_of_sorted(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    let mut values: Vec<f64> = Vec::with_capacity(k);
    // below[j]: points strictly below values[j]
    let mut below: Vec<usize> = Vec::with_capacity(k + 1);
    for (idx, &x) in sorted.iter().enumerate() {
        if values.last() != Some(&x) {
            values.push(x);
            below.push(idx);
        }
    }
    below.push(k);
    let r = values.len();
    let kf = k as f64;
    let mut best: f64 = 0.0;
    for i in 0..r {
        for j in i..r {
            let inside = (below[j + 1] - below[i]) as f64;
            best = best.max(inside / kf - (values[j] - values[i]));
        }
    }
    // (position, points at or below the start) and (position, points below the end)
    let starts: Vec<(f64, usize)> = std::iter::once((0.0, 0))
        .chain((0..r).map(|i| (values[i], below[i + 1])))
        .collect();
    let ends: Vec<(f64, usize)> = (0..r)
        .map(|j| (values[j], below[j]))
        .chain(std::iter::once((1.0, k)))
        .collect();
    for &(za, ca) in &starts {
        for &(zb, cb) in &ends {
            if zb > za && cb >= ca {
                best = best.max((zb - za) - (cb - ca) as f64 / kf);
            }
        }
    }
    best.min(1.0)
}

fn extreme_with_star(sorted: &[f64], star: f64) -> ExtremeDiscrepancy {
    if sorted.len() <= EXACT_EXTREME_LIMIT {
        ExtremeDiscrepancy::Exact(extreme_of_sorted(sorted))
    } else {
        ExtremeDiscrepancy::Bracket {
            lower: star,
            upper: (2.0 * star).min(1.0),
        }
    }
}

/// Extreme discrepancy, exact up to [`EXACT_EXTREME_LIMIT`] points and a
/// bracket `[D*, 2 D*]` beyond.
pub fn extreme_discrepancy(points: &[f64]) -> Result<ExtremeDiscrepancy> {
    let sorted = sorted_points(points)?;
    let star = star_of_sorted(&sorted);
    Ok(extreme_with_star(&sorted, star))
}

/// Discrepancy summary of a point set, keeping the sorted points for
/// interval counts.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscrepancyStats {
    pub star: f64,
    pub extreme: ExtremeDiscrepancy,
    sorted: Vec<f64>,
}

impl DiscrepancyStats {
    pub fn new(points: &[f64]) -> Result<Self> {
        let sorted = sorted_points(points)?;
        let star = star_of_sorted(&sorted);
        let extreme = extreme_with_star(&sorted, star);
        Ok(Self {
            star,
            extreme,
            sorted,
        })
    }

    pub fn k(&self) -> usize {
        self.sorted.len()
    }

    /// `A_k(α, β)`: number of points in `[α, β)`.
    pub fn count(&self, alpha: f64, beta: f64) -> usize {
        if beta <= alpha {
            return 0;
        }
        let lo = self.sorted.partition_point(|&x| x < alpha);
        let hi = self.sorted.partition_point(|&x| x < beta);
        hi - lo
    }
}

/// Label `m = floor({x} N) + 1` of an emission at time `x`.
pub fn label_from_time(x: f64, labels: usize) -> Result<usize> {
    if labels == 0 {
        return Err(Error::domain("label count must be at least 1"));
    }
    let m = (fractional_part(x) * labels as f64).floor() as usize + 1;
    Ok(m.min(labels))
}

/// Pearson statistic of label counts against the uniform law; labels are
/// `1..=counts.len()` and `counts[m - 1]` is the count of label `m`.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Label counts of a trace.
pub fn label_counts(trace: &EmissionTrace, labels: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; labels];
    for &x in &trace.cums {
        counts[label_from_time(x, labels)? - 1] += 1;
    }
    Ok(counts)
}

/// Log-log fit of `D*_k` against `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub ks: Vec<usize>,
    /// Mean of `D*_k` over the replicate traces.
    pub star: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, Vec<f64>) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    (slope, intercept, residuals)
}

/// Measures how fast `D*_k` of Poisson fractional parts decays: for every
/// `k`, averages `D*_k` of the first `k` points over `replicates`
/// independent traces, then fits the log-log slope.
pub fn robbins_rate_check<R: Rng + ?Sized>(
    theta: f64,
    ks: &[usize],
    replicates: usize,
    rng: &mut R,
) -> Result<RateFit> {
    check_theta(theta)?;
    if ks.len() < 2 || ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] < 1000 {
        return Err(Error::domain(
            "ks must be increasing, at least two sizes, each >= 1000",
        ));
    }
    if replicates == 0 {
        return Err(Error::domain("replicates must be at least 1"));
    }
    let kmax = *ks.last().expect("nonempty");
    let mut star = vec![0.0; ks.len()];
    for _ in 0..replicates {
        let trace = generate_trace(theta, kmax, rng)?;
        for (s, &k) in star.iter_mut().zip(ks) {
            *s += star_discrepancy(&trace.fracs[..k])? / replicates as f64;
        }
    }
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let (slope, intercept, residuals) = log_log_fit(&xs, &star);
    Ok(RateFit {
        ks: ks.to_vec(),
        star,
        slope,
        intercept,
        residuals,
    })
}

/// Label frequencies with and without readiness gating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub emissions: usize,
    /// Emissions with both detectors ready.
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub ungated_counts: Vec<u64>,
    pub gated_counts: Vec<u64>,
    /// TV distance between the gated and ungated empirical label laws.
    pub tv_gated_vs_ungated: f64,
}

fn check_probability(p: f64, name: &str) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("{name} must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Emits `k` particles, draws independent readiness indicators `D_1`, `D_2`
/// for each and tallies labels of the emissions both stations register.
pub fn detector_gate<R: Rng + ?Sized>(
    p1: f64,
    p2: f64,
    labels: usize,
    k: usize,
    theta: f64,
    rng: &mut R,
) -> Result<GateResult> {
    check_probability(p1, "p1")?;
    check_probability(p2, "p2")?;
    check_theta(theta)?;
    if labels == 0 || k == 0 {
        return Err(Error::domain("labels and k must be at least 1"));
    }
    let mut ungated = vec![0u64; labels];
    let mut gated = vec![0u64; labels];
    let mut x = 0.0;
    for _ in 0..k {
        x += exponential_wait(theta, rng);
        let m = label_from_time(x, labels)?;
        let d1 = rng.random::<f64>() < p1;
        let d2 = rng.random::<f64>() < p2;
        ungated[m - 1] += 1;
        if d1 && d2 {
            gated[m - 1] += 1;
        }
    }
    let accepted: u64 = gated.iter().sum();
    let tv = if accepted == 0 {
        1.0
    } else {
        0.5 * ungated
            .iter()
            .zip(&gated)
            .map(|(&u, &g)| (u as f64 / k as f64 - g as f64 / accepted as f64).abs())
            .sum::<f64>()
    };
    Ok(GateResult {
        emissions: k,
        accepted: accepted as usize,
        acceptance_rate: accepted as f64 / k as f64,
        ungated_counts: ungated,
        gated_counts: gated,
        tv_gated_vs_ungated: tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    /// Brute force over a fine candidate set of interval endpoints.
    fn extreme_oracle(points: &[f64]) -> f64 {
        let k = points.len() as f64;
        let eps = 1e-9;
        let mut cands = vec![0.0, 1.0];
        for &x in points {
            cands.extend([x, x + eps, (x - eps).max(0.0)]);
        }
        cands.retain(|c| (0.0..=1.0).contains(c));
        let mut best: f64 = 0.0;
        for &a in &cands {
            for &b in &cands {
                if b > a {
                    let inside = points.iter().filter(|&&x| x >= a && x < b).count() as f64;
                    best = best.max((inside / k - (b - a)).abs());
                }
            }
        }
        best
    }

    #[test]
    fn star_examples() {
        assert_eq!(star_discrepancy(&[0.5]).unwrap(), 0.5);
        let grid: Vec<f64> = (1..=10).map(|i| (2 * i - 1) as f64 / 20.0).collect();
        assert!((star_discrepancy(&grid).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(star_discrepancy(&[0.25, 0.75]).unwrap(), 0.25);
        assert!(star_discrepancy(&[]).is_err());
        assert!(star_discrepancy(&[1.0]).is_err());
    }

    #[test]
    fn extreme_examples() {
        // [0.5, 0.5 + ε) holds the single point
        assert_eq!(
            extreme_discrepancy(&[0.5]).unwrap(),
            ExtremeDiscrepancy::Exact(1.0)
        );
        let eq: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let d = extreme_discrepancy(&eq).unwrap().upper();
        assert!((d - extreme_oracle(&eq)).abs() < 1e-8);
        let star = star_discrepancy(&eq).unwrap();
        assert!(star <= d && d <= 2.0 * star);
    }

    #[test]
    fn extreme_matches_oracle_on_random_sets() {
        let mut rng = stream(1, Purpose::Test, 0);
        for size in [1, 2, 3, 7, 20, 60] {
            for _ in 0..20 {
                let mut pts: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
                if size > 3 {
                    pts[1] = pts[0];
                    pts[2] = 0.0;
                }
                let exact = extreme_discrepancy(&pts).unwrap().upper();
                assert!((exact - extreme_oracle(&pts)).abs() < 1e-8, "{pts:?}");
                let star = star_discrepancy(&pts).unwrap();
                assert!(star <= exact + 1e-15 && exact <= 2.0 * star + 1e-15);
            }
        }
    }

    #[test]
    fn large_sets_get_a_bracket() {
        let mut rng = stream(2, Purpose::Test, 0);
        let pts: Vec<f64> = (0..EXACT_EXTREME_LIMIT + 1).map(|_| rng.random()).collect();
        match extreme_discrepancy(&pts).unwrap() {
            ExtremeDiscrepancy::Bracket { lower, upper } => {
                assert_eq!(lower, star_discrepancy(&pts).unwrap());
                assert_eq!(upper, 2.0 * lower);
            }
            other => panic!("expected bracket, got {other:?}"),
        }
    }

    #[test]
    fn interval_counts() {
        let s = DiscrepancyStats::new(&[0.1, 0.2, 0.2, 0.9]).unwrap();
        assert_eq!(s.k(), 4);
        assert_eq!(s.count(0.2, 0.9), 2);
        assert_eq!(s.count(0.0, 1.0), 4);
        assert_eq!(s.count(0.5, 0.5), 0);
    }

    #[test]
    fn labels_from_times() {
        assert_eq!(label_from_time(3.15, 10).unwrap(), 2);
        assert_eq!(label_from_time(7.0, 10).unwrap(), 1);
        assert_eq!(label_from_time(0.999_999_999_999, 10).unwrap(), 10);
        assert_eq!(label_from_time(-1e-20, 10).unwrap(), 1);
        assert!(label_from_time(0.5, 0).is_err());
    }

    #[test]
    fn trace_invariants_and_replay() {
        let t = generate_trace(1.5, 1000, &mut stream(3, Purpose::Emission, 0)).unwrap();
        assert!(t.waits.iter().all(|&w| w > 0.0));
        assert!(t.cums.windows(2).all(|w| w[1] > w[0]));
        assert!(t.fracs.iter().all(|f| (0.0..1.0).contains(f)));
        let again = generate_trace(1.5, 1000, &mut stream(3, Purpose::Emission, 0)).unwrap();
        assert_eq!(t, again);
        assert!(generate_trace(0.0, 10, &mut stream(3, Purpose::Emission, 0)).is_err());
        assert!(generate_trace(1.0, 0, &mut stream(3, Purpose::Emission, 0)).is_err());
    }

    #[test]
    fn wait_mean() {
        let k = 1_000_000;
        let t = generate_trace(2.0, k, &mut stream(4, Purpose::Emission, 0)).unwrap();
        let mean = t.waits.iter().sum::<f64>() / k as f64;
        assert!((mean - 2.0).abs() <= 3.29 * 2.0 / (k as f64).sqrt());
    }

    #[test]
    fn slope_controls() {
        let ks = [1000, 10_000, 100_000];
        let mut rng = stream(5, Purpose::Test, 0);
        // independent uniforms
        let mut star = vec![0.0; ks.len()];
        for _ in 0..8 {
            let pts: Vec<f64> = (0..ks[2]).map(|_| rng.random()).collect();
            for (s, &k) in star.iter_mut().zip(&ks) {
                *s += star_discrepancy(&pts[..k]).unwrap() / 8.0;
            }
        }
        let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        let (slope, _, _) = log_log_fit(&xs, &star);
        assert!((slope + 0.5).abs() < 0.1, "{slope}");
        // constant points
        let star: Vec<f64> = ks
            .iter()
            .map(|&k| star_discrepancy(&vec![0.3; k]).unwrap())
            .collect();
        let (slope, _, _) = log_log_fit(&xs, &star);
        assert!(slope.abs() < 1e-3);
    }

    #[test]
    fn robbins_validates_input() {
        let mut rng = stream(6, Purpose::Test, 0);
        assert!(robbins_rate_check(1.0, &[1000], 1, &mut rng).is_err());
        assert!(robbins_rate_check(1.0, &[10_000, 1000], 1, &mut rng).is_err());
        assert!(robbins_rate_check(1.0, &[100, 1000], 1, &mut rng).is_err());
        let fit = robbins_rate_check(1.0, &[1000, 10_000, 100_000], 4, &mut rng).unwrap();
        assert_eq!(fit.residuals.len(), 3);
        assert!(fit.slope < -0.3);
    }

    #[test]
    fn ungated_when_always_ready() {
        let mut r1 = stream(7, Purpose::Gate, 0);
        let g = detector_gate(1.0, 1.0, 20, 5000, 1.0, &mut r1).unwrap();
        assert_eq!(g.gated_counts, g.ungated_counts);
        assert_eq!(g.tv_gated_vs_ungated, 0.0);
        assert!(detector_gate(0.0, 1.0, 20, 10, 1.0, &mut r1).is_err());
    }

    #[test]
    fn acceptance_rate_is_product() {
        let k = 200_000;
        let g = detector_gate(0.9, 0.1, 10, k, 1.0, &mut stream(8, Purpose::Gate, 0)).unwrap();
        let p = 0.09;
        let se = (p * (1.0 - p) / k as f64).sqrt();
        assert!((g.acceptance_rate - p).abs() <= 3.29 * se);
    }

    #[test]
    fn chi_square_of_flat_counts_is_zero() {
        assert_eq!(chi_square_uniform(&[5, 5, 5]), 0.0);
        assert!((chi_square_uniform(&[4, 6]) - 0.4).abs() < 1e-15);
    }
}
