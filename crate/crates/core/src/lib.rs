//! A local hidden-parameter model reproducing the singlet correlation
//! `E{A_a B_b} = -a·b`.
//!
//! The crate builds the spline-based first-layer measure, the permuted layer
//! universe with sign-flipped companions, exact analysis of its stochastic
//! dependence structure, a Monte Carlo sampler for correlation and CHSH
//! experiments, and the Poisson emission-time labelling mechanism.

pub mod analysis;
pub mod config;
pub mod emission;
pub mod error;
pub mod layers;
pub mod measure;
pub mod rng;
pub mod sampler;
pub mod setting;
pub mod spline;

pub use analysis::{
    conditional_expectation_zero, dependence_report, pair_expectation, DependenceReport, Station,
};
pub use config::{load_config, parse_config, ExperimentConfig};
pub use emission::{
    chi_square_uniform, detector_gate, extreme_discrepancy, generate_trace, label_from_time,
    robbins_rate_check, star_discrepancy, DiscrepancyStats, EmissionTrace, ExtremeDiscrepancy,
    GateResult, RateFit,
};
pub use error::{Error, Result};
pub use layers::{
    count_layers, load_universe, sample_layer_pair, save_universe, LayerDescriptor, LayerPair,
    LayerUniverse, UniverseParams, WeightPrior,
};
pub use measure::{
    detector_a, detector_b, eval_q, eval_s, genuine_variant_mass, FirstLayerMeasure, GenuineMass,
    Grid, MeasureVariant, WeightVector,
};
pub use sampler::{
    chsh, run_experiment, ChshResult, CorrelationEstimate, Experiment, HiddenSample, LabelSource,
    Outcome, RunningStats,
};
pub use setting::{sign, Spin, UnitVector3};
pub use spline::SplineSystem;
