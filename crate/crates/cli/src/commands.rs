use std::path::{Path, PathBuf};

use eprsim_core::analysis::{
    conditional_expectation_zero, dependence_report, pair_expectation, Station,
};
use eprsim_core::emission::{
    chi_square_uniform, detector_gate, extreme_discrepancy, generate_trace, label_counts,
    log_log_fit, star_discrepancy, ExtremeDiscrepancy, GateResult,
};
use eprsim_core::layers::{load_universe, LayerUniverse, UniverseParams};
use eprsim_core::measure::{genuine_variant_mass, FirstLayerMeasure, GenuineMass, MeasureVariant};
use eprsim_core::rng::{stream, Purpose};
use eprsim_core::sampler::{
    chsh, run_experiment_with, ChshResult, CorrelationEstimate, LabelSource,
};
use eprsim_core::setting::{parse_triple, UnitVector3};
use eprsim_core::spline::SplineSystem;
use eprsim_core::{load_config, DependenceReport, ExperimentConfig};
use serde::Serialize;

use crate::report::{emit, emit_json, invalid, write_csv, CliError, Report};
use crate::{Cli, Command, Convention, ModelArgs, SettingArgs};

const DEFAULT_N: usize = 4;

/// Model parameters after merging flags, config file and defaults.
#[derive(Clone, Debug, Serialize)]
struct ModelConfig {
    n: usize,
    weight_count: usize,
    pairs: usize,
    tie_weights: bool,
    balanced: bool,
    variant: MeasureVariant,
    universe_file: Option<PathBuf>,
}

struct Context {
    config: Option<ExperimentConfig>,
    out: Option<PathBuf>,
}

impl Context {
    fn model(&self, args: &ModelArgs) -> Result<(ModelConfig, Option<u64>), CliError> {
        let cfg = self.config.as_ref();
        let n = args.n.or(cfg.map(|c| c.n)).unwrap_or(DEFAULT_N);
        SplineSystem::new(n)?;
        let weight_count = args
            .weight_count
            .or(cfg.map(|c| c.weight_count))
            .unwrap_or(ExperimentConfig::DEFAULT_WEIGHT_COUNT);
        if weight_count == 0 {
            return Err(invalid("L must be at least 1"));
        }
        let pairs = args
            .pairs
            .or(cfg.map(|c| c.pairs))
            .unwrap_or(ExperimentConfig::DEFAULT_PAIRS);
        if pairs == 0 {
            return Err(invalid("layers (M) must be at least 1"));
        }
        let genuine = args.genuine || cfg.is_some_and(|c| c.genuine_variant);
        let model = ModelConfig {
            n,
            weight_count,
            pairs,
            tie_weights: args.tie_weights || cfg.is_some_and(|c| c.tie_weights),
            balanced: args.balanced || cfg.is_some_and(|c| c.balanced),
            variant: if genuine {
                MeasureVariant::Genuine
            } else {
                MeasureVariant::Spline
            },
            universe_file: args.universe.clone(),
        };
        Ok((model, args.seed.or(cfg.and_then(|c| c.seed))))
    }

    fn normalize(&self, args: &ModelArgs) -> bool {
        args.normalize || self.config.as_ref().is_some_and(|c| c.normalize)
    }

    fn configured_setting(&self, index: usize) -> Option<UnitVector3> {
        self.config
            .as_ref()
            .and_then(|c| c.settings.get(index).copied())
    }

    fn pair(
        &self,
        s: &SettingArgs,
        normalize: bool,
    ) -> Result<(UnitVector3, UnitVector3), CliError> {
        if let Some(t) = s.angle {
            return Ok((UnitVector3::X, UnitVector3::from_degrees(t)));
        }
        let a = self.setting(s.a.as_deref(), 0, "a", normalize)?;
        let b = self.setting(s.b.as_deref(), 1, "b", normalize)?;
        Ok((a, b))
    }

    fn setting(
        &self,
        flag: Option<&str>,
        index: usize,
        name: &str,
        normalize: bool,
    ) -> Result<UnitVector3, CliError> {
        match flag {
            Some(text) => parse_setting(text, normalize),
            None => self.configured_setting(index).ok_or_else(|| {
                invalid(format!(
                    "setting `{name}` is required (--{name} x,y,z or entry {} of `settings`)",
                    index + 1
                ))
            }),
        }
    }

    fn trials(&self, flag: Option<u64>) -> Result<u64, CliError> {
        let trials = flag
            .or(self.config.as_ref().map(|c| c.trials))
            .unwrap_or(ExperimentConfig::DEFAULT_TRIALS);
        if trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        Ok(trials)
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}

fn parse_setting(text: &str, normalize: bool) -> Result<UnitVector3, CliError> {
    let c = parse_triple(text)?;
    let v = if normalize {
        UnitVector3::normalize(c[0], c[1], c[2])
    } else {
        UnitVector3::new(c[0], c[1], c[2])
    };
    Ok(v?)
}

fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| invalid("a seed is required (--seed or `seed` in the config)"))
}

fn universe(model: &mut ModelConfig, seed: Option<u64>) -> Result<LayerUniverse, CliError> {
    if let Some(path) = &model.universe_file {
        let u = load_universe(path)?;
        model.n = u.n();
        model.weight_count = u.weight_count();
        model.pairs = u.pair_count();
        model.tie_weights = u.tie_weights();
        model.variant = u.variant();
        return Ok(u);
    }
    let seed = require_seed(seed)?;
    let mut params = UniverseParams::new(model.n, model.pairs);
    params.variant = model.variant;
    params.weight_count = model.weight_count;
    params.tie_weights = model.tie_weights;
    params.balanced = model.balanced;
    Ok(LayerUniverse::sample(
        &params,
        &mut stream(seed, Purpose::Layers, 0),
    )?)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref().map(load_config).transpose()?;
    let ctx = Context {
        config,
        out: cli.out,
    };
    match cli.command {
        Command::Verify { model, settings } => verify(&ctx, &model, &settings),
        Command::Layers { model } => layers(&ctx, &model),
        Command::Analyze {
            model,
            settings,
            c,
            witness,
        } => analyze(&ctx, &model, &settings, c.as_deref(), witness),
        Command::Simulate {
            model,
            settings,
            trials,
            emission_theta,
            csv,
        } => simulate(
            &ctx,
            &model,
            &settings,
            trials,
            emission_theta,
            csv.as_deref(),
        ),
        Command::Chsh {
            model,
            angles,
            convention,
            trials,
            csv,
        } => run_chsh(&ctx, &model, &angles, convention, trials, csv.as_deref()),
        Command::Poisson {
            theta,
            k,
            labels,
            seed,
            p1,
            p2,
            csv,
        } => poisson(
            &ctx,
            PoissonArgs {
                theta,
                k,
                labels,
                seed,
                p1,
                p2,
            },
            csv.as_deref(),
        ),
        Command::Splines { n, grid, csv } => splines(&ctx, n, grid, csv.as_deref()),
    }
}

#[derive(Serialize)]
struct Window {
    lower: f64,
    upper: f64,
    within: bool,
}

#[derive(Serialize)]
struct ResidualSummary {
    grid: usize,
    min: f64,
    max: f64,
    bound: f64,
    within: bool,
}

fn residual_summary(n: usize, grid: usize) -> Result<(ResidualSummary, Vec<[f64; 4]>), CliError> {
    if grid < 2 {
        return Err(invalid("grid must have at least 2 points per axis"));
    }
    let sys = SplineSystem::new(n)?;
    let step = 1.0 / (grid - 1) as f64;
    let mut rows = Vec::with_capacity(grid * grid);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..grid {
        let x = i as f64 * step;
        for j in 0..grid {
            let y = j as f64 * step;
            let s = sys.approx_sq_diff(x, y)?;
            let r = s - (y - x) * (y - x);
            min = min.min(r);
            max = max.max(r);
            rows.push([x, y, s, r]);
        }
    }
    let bound = sys.residual_bound();
    Ok((
        ResidualSummary {
            grid,
            min,
            max,
            bound,
            within: min >= -1e-12 && max <= bound + 1e-12,
        },
        rows,
    ))
}

#[derive(Serialize)]
struct VerifyResult {
    a: UnitVector3,
    b: UnitVector3,
    pair_integral: f64,
    target: f64,
    abs_error: f64,
    total_mass: f64,
    m1: f64,
    m2: f64,
    theta_hat: f64,
    mass_window: Window,
    spline_residual: ResidualSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    genuine_mass: Option<GenuineMass>,
    passed: bool,
}

fn verify(ctx: &Context, args: &ModelArgs, settings: &SettingArgs) -> Result<(), CliError> {
    let (model, seed) = ctx.model(args)?;
    let (a, b) = ctx.pair(settings, ctx.normalize(args))?;
    let mu = FirstLayerMeasure::with_variant(model.n, a, b, model.variant)?;
    let n2 = (model.n * model.n) as f64;
    let total = mu.total_mass();
    let pair_integral = mu.pair_integral();
    let target = 0.0 - a.dot(&b);
    let abs_error = (pair_integral - target).abs();
    let (spline_residual, _) = residual_summary(model.n, 101)?;
    let passed = abs_error <= 1e-12 && spline_residual.within;
    let result = VerifyResult {
        a,
        b,
        pair_integral,
        target,
        abs_error,
        total_mass: total,
        m1: mu.m1(),
        m2: mu.m2(),
        theta_hat: mu.theta_hat(),
        mass_window: Window {
            lower: 1.0,
            upper: 1.0 + 1.0 / (4.0 * n2),
            within: total >= 1.0 - 1e-12 && total < 1.0 + 1.0 / (4.0 * n2),
        },
        spline_residual,
        genuine_mass: (model.variant == MeasureVariant::Genuine)
            .then(|| genuine_variant_mass(&a, &b)),
        passed,
    };
    emit_json(&Report::new("verify", seed, &model, &result), ctx.out())?;
    if passed {
        Ok(())
    } else {
        Err(invalid(format!(
            "identity check failed (abs_error {abs_error:e})"
        )))
    }
}

fn layers(ctx: &Context, args: &ModelArgs) -> Result<(), CliError> {
    let (mut model, seed) = ctx.model(args)?;
    let u = universe(&mut model, seed)?;
    emit(&u.to_json()?, ctx.out())
}

#[derive(Serialize)]
struct WitnessResult {
    conditional_mean_a: f64,
    conditional_mean_b: f64,
}

#[derive(Serialize)]
struct AnalyzeResult {
    a: UnitVector3,
    b: UnitVector3,
    c: UnitVector3,
    label_count: usize,
    pair_expectation: f64,
    exact_target: f64,
    conditional_mean_a: f64,
    conditional_mean_b: f64,
    dependence: DependenceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<WitnessResult>,
}

fn analyze(
    ctx: &Context,
    args: &ModelArgs,
    settings: &SettingArgs,
    c: Option<&str>,
    witness: bool,
) -> Result<(), CliError> {
    let (mut model, seed) = ctx.model(args)?;
    let normalize = ctx.normalize(args);
    let (a, b) = ctx.pair(settings, normalize)?;
    let c = ctx.setting(c, 2, "c", normalize)?;
    let u = universe(&mut model, seed)?;
    let witness = witness || ctx.config.as_ref().is_some_and(|c| c.witness);
    let witness = if witness {
        let broken = u.without_sign_flips();
        Some(WitnessResult {
            conditional_mean_a: conditional_expectation_zero(&broken, a, b, Station::A)?,
            conditional_mean_b: conditional_expectation_zero(&broken, a, b, Station::B)?,
        })
    } else {
        None
    };
    let result = AnalyzeResult {
        a,
        b,
        c,
        label_count: u.label_count(),
        pair_expectation: pair_expectation(&u, a, b)?,
        exact_target: 0.0 - a.dot(&b),
        conditional_mean_a: conditional_expectation_zero(&u, a, b, Station::A)?,
        conditional_mean_b: conditional_expectation_zero(&u, a, b, Station::B)?,
        dependence: dependence_report(&u, a, b, c)?,
        witness,
    };
    emit_json(&Report::new("analyze", seed, &model, &result), ctx.out())
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    #[serde(flatten)]
    model: &'a ModelConfig,
    trials: u64,
    labels: LabelSource,
}

#[derive(Serialize)]
struct SimulateResult {
    a: UnitVector3,
    b: UnitVector3,
    estimate: CorrelationEstimate,
    z_score: f64,
}

fn simulate(
    ctx: &Context,
    args: &ModelArgs,
    settings: &SettingArgs,
    trials: Option<u64>,
    emission_theta: Option<f64>,
    csv: Option<&Path>,
) -> Result<(), CliError> {
    let (mut model, seed) = ctx.model(args)?;
    let (a, b) = ctx.pair(settings, ctx.normalize(args))?;
    let trials = ctx.trials(trials)?;
    let seed = require_seed(seed)?;
    let u = universe(&mut model, Some(seed))?;
    let labels = match emission_theta {
        Some(theta) => LabelSource::Emission { theta },
        None => LabelSource::Uniform,
    };
    let estimate = run_experiment_with(&u, a, b, trials, seed, 0, labels)?;
    if let Some(path) = csv {
        write_csv(
            path,
            "batch,mean",
            estimate
                .batch_means
                .iter()
                .enumerate()
                .map(|(i, m)| format!("{i},{m}")),
        )?;
    }
    let z_score = if estimate.stderr > 0.0 {
        (estimate.mean - estimate.normalized_target) / estimate.stderr
    } else {
        0.0
    };
    let config = SimulateConfig {
        model: &model,
        trials,
        labels,
    };
    let result = SimulateResult {
        a,
        b,
        estimate,
        z_score,
    };
    emit_json(
        &Report::new("simulate", Some(seed), &config, &result),
        ctx.out(),
    )
}

#[derive(Serialize)]
struct ChshConfig<'a> {
    #[serde(flatten)]
    model: &'a ModelConfig,
    trials: u64,
    angles: [f64; 4],
    convention: &'static str,
}

#[derive(Serialize)]
struct ChshReport {
    settings: [UnitVector3; 4],
    chsh: ChshResult,
    quantum_bound: f64,
}

fn run_chsh(
    ctx: &Context,
    args: &ModelArgs,
    angles: &str,
    convention: Convention,
    trials: Option<u64>,
    csv: Option<&Path>,
) -> Result<(), CliError> {
    let (mut model, seed) = ctx.model(args)?;
    let parsed: Vec<f64> = angles
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| invalid(format!("angles must be four numbers, got `{angles}`")))?;
    let angles: [f64; 4] = parsed
        .try_into()
        .map_err(|_| invalid(format!("angles must be four numbers, got `{angles}`")))?;
    let factor = match convention {
        Convention::Polarizer => 2.0,
        Convention::Spin => 1.0,
    };
    let settings = angles.map(|t| UnitVector3::from_degrees(factor * t));
    let trials = ctx.trials(trials)?;
    let seed = require_seed(seed)?;
    let u = universe(&mut model, Some(seed))?;
    let result = chsh(&u, settings, trials, seed)?;
    if let Some(path) = csv {
        let names = ["a,b", "a,b'", "a',b", "a',b'"];
        write_csv(
            path,
            "pair,mean,stderr,exact",
            result
                .estimates
                .iter()
                .zip(names)
                .map(|(e, name)| format!("\"{name}\",{},{},{}", e.mean, e.stderr, e.exact_target)),
        )?;
    }
    let config = ChshConfig {
        model: &model,
        trials,
        angles,
        convention: match convention {
            Convention::Polarizer => "polarizer",
            Convention::Spin => "spin",
        },
    };
    let report = ChshReport {
        settings,
        chsh: result,
        quantum_bound: 2.0 * 2f64.sqrt(),
    };
    emit_json(
        &Report::new("chsh", Some(seed), &config, &report),
        ctx.out(),
    )
}

#[derive(Clone, Copy, Debug, Serialize)]
struct PoissonArgs {
    theta: f64,
    k: usize,
    labels: usize,
    seed: Option<u64>,
    p1: Option<f64>,
    p2: Option<f64>,
}

#[derive(Serialize)]
struct DecayPoint {
    k: usize,
    star: f64,
}

#[derive(Serialize)]
struct PoissonResult {
    wait_mean: f64,
    star_discrepancy: f64,
    extreme_discrepancy: ExtremeDiscrepancy,
    decay: Vec<DecayPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    label_chi_square: f64,
    label_dof: usize,
    label_counts: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gate: Option<GateResult>,
}

fn poisson(ctx: &Context, mut args: PoissonArgs, csv: Option<&Path>) -> Result<(), CliError> {
    args.seed = args.seed.or(ctx.config.as_ref().and_then(|c| c.seed));
    let seed = require_seed(args.seed)?;
    if args.labels == 0 {
        return Err(invalid("labels must be at least 1"));
    }
    let trace = generate_trace(args.theta, args.k, &mut stream(seed, Purpose::Emission, 0))?;
    let mut ks: Vec<usize> = std::iter::successors(Some(1000usize), |k| k.checked_mul(10))
        .take_while(|&k| k <= args.k)
        .collect();
    if ks.last() != Some(&args.k) && args.k >= 1000 {
        ks.push(args.k);
    }
    let decay = ks
        .iter()
        .map(|&k| {
            Ok(DecayPoint {
                k,
                star: star_discrepancy(&trace.fracs[..k])?,
            })
        })
        .collect::<Result<Vec<_>, eprsim_core::Error>>()?;
    let slope = (decay.len() >= 2).then(|| {
        let xs: Vec<f64> = decay.iter().map(|p| p.k as f64).collect();
        let ys: Vec<f64> = decay.iter().map(|p| p.star).collect();
        log_log_fit(&xs, &ys).0
    });
    if let Some(path) = csv {
        write_csv(
            path,
            "k,star_discrepancy",
            decay.iter().map(|p| format!("{},{}", p.k, p.star)),
        )?;
    }
    let counts = label_counts(&trace, args.labels)?;
    let gate = if args.p1.is_some() || args.p2.is_some() {
        Some(detector_gate(
            args.p1.unwrap_or(1.0),
            args.p2.unwrap_or(1.0),
            args.labels,
            args.k,
            args.theta,
            &mut stream(seed, Purpose::Gate, 0),
        )?)
    } else {
        None
    };
    let result = PoissonResult {
        wait_mean: trace.waits.iter().sum::<f64>() / args.k as f64,
        star_discrepancy: star_discrepancy(&trace.fracs)?,
        extreme_discrepancy: extreme_discrepancy(&trace.fracs)?,
        decay,
        slope,
        label_chi_square: chi_square_uniform(&counts),
        label_dof: args.labels - 1,
        label_counts: counts,
        gate,
    };
    emit_json(
        &Report::new("poisson", Some(seed), &args, &result),
        ctx.out(),
    )
}

#[derive(Serialize)]
struct SplinesConfig {
    n: usize,
    grid: usize,
}

fn splines(
    ctx: &Context,
    n: Option<usize>,
    grid: usize,
    csv: Option<&Path>,
) -> Result<(), CliError> {
    let n = n.or(ctx.config.as_ref().map(|c| c.n)).unwrap_or(DEFAULT_N);
    SplineSystem::new(n)?;
    let (summary, rows) = residual_summary(n, grid)?;
    if let Some(path) = csv {
        write_csv(
            path,
            "x,y,s,residual",
            rows.iter()
                .map(|r| format!("{},{},{},{}", r[0], r[1], r[2], r[3])),
        )?;
    }
    emit_json(
        &Report::new("splines", None, &SplinesConfig { n, grid }, &summary),
        ctx.out(),
    )
}
