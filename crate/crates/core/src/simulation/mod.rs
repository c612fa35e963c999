//! Baselines, synthetic scenarios and experiment pipelines.

pub mod baselines;
pub mod experiments;
pub mod synthetic;

pub use baselines::{gsp_fixed_slots, integrated_heuristic, myerson_fixed_slots};
pub use experiments::{
    compare_baseline, run_experiment4, sweep_alpha, sweep_threshold, ComparePoint, CurvePoint, ExperimentConfig,
};
pub use synthetic::{correlated_sample, ScaledBeta, SmallInstance, SyntheticFamily};
