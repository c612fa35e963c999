//! Monte-Carlo experiment pipelines: the alpha sweep, the volume-floor
//! sweep, the comparison against fixed-slot Myerson and its correlated
//! value/weight variant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual_solver::{evaluate, outcome_draws, solve_on_samples, volume_draws, DualConfig, DualResult, SampleSet};
use crate::error::{Error, Result};
use crate::mechanisms::{MechanismSpec, Tradeoff};
use crate::model::{BidProfile, LayoutConstraints, Scenario};
use crate::rng::{mean_se, stream_rng};
use crate::simulation::baselines::myerson_fixed_slots;
use crate::simulation::synthetic::{correlated_sample, ScaledBeta, SyntheticFamily};

/// Parameters shared by the experiment commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alphas: Vec<f64>,
    /// Number of evenly spaced volume floors from 0 to the maximum volume.
    pub v0_points: usize,
    pub ms: Vec<usize>,
    pub rs: Vec<f64>,
    pub reps: usize,
    pub mc_samples: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub layout: LayoutConstraints,
    pub family: SyntheticFamily,
    pub weights: ScaledBeta,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alphas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            v0_points: 11,
            ms: (1..=8).collect(),
            rs: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            reps: 5000,
            mc_samples: 500,
            epsilon: 1e-3,
            seed: 0,
            layout: LayoutConstraints::None,
            family: SyntheticFamily::default(),
            weights: ScaledBeta::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.alphas.is_empty() || self.ms.is_empty() || self.rs.is_empty() || self.v0_points == 0 {
            return bad("experiment grids must be non-empty");
        }
        if self.reps < 1 || self.mc_samples < 1 {
            return bad("repetitions and Monte-Carlo samples must be at least 1");
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("alpha grid values must lie in [0, 1]");
        }
        if self.rs.iter().any(|r| !(-1.0..=1.0).contains(r)) {
            return bad("correlations must lie in [-1, 1]");
        }
        Ok(())
    }

    pub fn dual(&self) -> DualConfig {
        DualConfig {
            epsilon: self.epsilon,
            mc_samples: self.mc_samples,
            seed: self.seed,
            ..DualConfig::default()
        }
    }
}

/// Means and standard errors of revenue and volume at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub abscissa: f64,
    pub mean_revenue: f64,
    pub se_revenue: f64,
    pub mean_gmv: f64,
    pub se_gmv: f64,
}

impl CurvePoint {
    pub const HEADER: [&'static str; 5] = ["abscissa", "mean_revenue", "se_revenue", "mean_gmv", "se_gmv"];

    pub fn fields(&self) -> Vec<String> {
        [self.abscissa, self.mean_revenue, self.se_revenue, self.mean_gmv, self.se_gmv]
            .iter()
            .map(|x| x.to_string())
            .collect()
    }
}

/// One alpha of the sweep, with the virtual-surplus revenue proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub curve: CurvePoint,
    pub mean_virtual_surplus: f64,
    pub se_virtual_surplus: f64,
}

/// Runs the alpha-mechanism at every grid value on one shared sample set.
pub fn sweep_alpha(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    alphas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let samples = SampleSet::draw(scenario, reps, seed);
    alphas
        .iter()
        .map(|&alpha| {
            let est = evaluate(scenario, &samples, &MechanismSpec::new(*layout, Tradeoff::Alpha(alpha))?)?;
            Ok(SweepPoint {
                curve: CurvePoint {
                    abscissa: alpha,
                    mean_revenue: est.revenue,
                    se_revenue: est.revenue_se,
                    mean_gmv: est.volume,
                    se_gmv: est.volume_se,
                },
                mean_virtual_surplus: est.virtual_surplus,
                se_virtual_surplus: est.virtual_surplus_se,
            })
        })
        .collect()
}

/// Dual solution for one volume floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdPoint {
    pub curve: CurvePoint,
    pub lambda: f64,
    pub alpha: f64,
    pub feasible: bool,
    pub step_gap: f64,
}

impl ThresholdPoint {
    pub fn from_result(r: &DualResult) -> Self {
        Self {
            curve: CurvePoint {
                abscissa: r.v0,
                mean_revenue: r.revenue,
                se_revenue: r.revenue_se,
                mean_gmv: r.volume,
                se_gmv: r.volume_se,
            },
            lambda: r.lambda,
            alpha: r.alpha,
            feasible: r.feasible,
            step_gap: r.step_gap,
        }
    }

    /// An unreachable floor; `mean_gmv` carries the maximum volume.
    pub fn infeasible(v0: f64, max_volume: f64) -> Self {
        let nan = f64::NAN;
        Self {
            curve: CurvePoint {
                abscissa: v0,
                mean_revenue: nan,
                se_revenue: nan,
                mean_gmv: max_volume,
                se_gmv: nan,
            },
            lambda: nan,
            alpha: nan,
            feasible: false,
            step_gap: nan,
        }
    }

    pub const EXTRA_HEADER: [&'static str; 4] = ["lambda", "alpha", "feasible", "step_gap"];

    pub fn fields(&self) -> Vec<String> {
        let mut f = self.curve.fields();
        f.extend([
            self.lambda.to_string(),
            self.alpha.to_string(),
            self.feasible.to_string(),
            self.step_gap.to_string(),
        ]);
        f
    }
}

/// `points` evenly spaced floors from 0 to the maximum mean volume on the
/// sample set of `config`.
pub fn v0_grid(scenario: &Scenario, layout: &LayoutConstraints, points: usize, config: &DualConfig) -> Result<Vec<f64>> {
    let samples = SampleSet::draw(scenario, config.mc_samples, config.seed);
    let spec = MechanismSpec::new(*layout, Tradeoff::Alpha(0.0))?;
    let top = mean_se(&volume_draws(scenario, &samples, &spec)?).0;
    if points == 1 {
        return Ok(vec![top]);
    }
    Ok((0..points).map(|i| top * i as f64 / (points - 1) as f64).collect())
}

/// Solves the floor-constrained problem for every `v0` on one sample set.
/// Unreachable floors are kept with `feasible = false`.
pub fn sweep_threshold(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    v0s: &[f64],
    config: &DualConfig,
) -> Result<Vec<ThresholdPoint>> {
    let samples = SampleSet::draw(scenario, config.mc_samples, config.seed);
    v0s.iter()
        .map(|&v0| match solve_on_samples(scenario, layout, v0, &samples, config) {
            Ok(r) => Ok(ThresholdPoint::from_result(&r)),
            Err(Error::InfeasibleThreshold { max_volume, .. }) => Ok(ThresholdPoint::infeasible(v0, max_volume)),
            Err(e) => Err(e),
        })
        .collect()
}

/// Paired comparison at one fixed-slot count `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparePoint {
    /// Constrained mechanism; `abscissa` is `m`.
    pub ias: CurvePoint,
    pub base_revenue: f64,
    pub se_base_revenue: f64,
    pub base_gmv: f64,
    pub se_base_gmv: f64,
    /// Mean and standard error of the per-profile revenue difference.
    pub gap: f64,
    pub se_gap: f64,
    pub v0: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub step_gap: f64,
}

impl ComparePoint {
    pub const EXTRA_HEADER: [&'static str; 10] = [
        "base_revenue",
        "se_base_revenue",
        "base_gmv",
        "se_base_gmv",
        "gap",
        "se_gap",
        "v0",
        "lambda",
        "alpha",
        "step_gap",
    ];

    pub fn fields(&self) -> Vec<String> {
        let mut f = self.ias.fields();
        f.extend(
            [
                self.base_revenue,
                self.se_base_revenue,
                self.base_gmv,
                self.se_base_gmv,
                self.gap,
                self.se_gap,
                self.v0,
                self.lambda,
                self.alpha,
                self.step_gap,
            ]
            .iter()
            .map(|x| x.to_string()),
        );
        f
    }
}

/// For each `m`: run fixed-slot Myerson on the shared draws, take its mean
/// volume as the floor, solve for the constrained mechanism on the same
/// draws and compare revenues profile by profile.
pub fn compare_on_samples(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    ms: &[usize],
    samples: &SampleSet,
    config: &DualConfig,
) -> Result<Vec<ComparePoint>> {
    ms.iter()
        .map(|&m| {
            let base: Vec<(f64, f64)> = (0..samples.len())
                .into_par_iter()
                .map(|j| {
                    let s = samples.scenario(scenario, j);
                    let out = myerson_fixed_slots(s, &samples.profiles()[j], m)?;
                    Ok((out.revenue, out.gmv))
                })
                .collect::<Result<_>>()?;
            let base_rev: Vec<f64> = base.iter().map(|b| b.0).collect();
            let base_gmv: Vec<f64> = base.iter().map(|b| b.1).collect();
            let (base_revenue, se_base_revenue) = mean_se(&base_rev);
            let (v0, se_base_gmv) = mean_se(&base_gmv);
            let r = solve_on_samples(scenario, layout, v0, samples, config)?;
            let spec = MechanismSpec::new(*layout, Tradeoff::Lambda(r.lambda))?;
            let ias = outcome_draws(scenario, samples, &spec)?;
            let diffs: Vec<f64> = ias.iter().zip(&base_rev).map(|(a, b)| a.0 - b).collect();
            let (gap, se_gap) = mean_se(&diffs);
            let (mean_revenue, se_revenue) = mean_se(&ias.iter().map(|d| d.0).collect::<Vec<_>>());
            let (mean_gmv, se_gmv) = mean_se(&ias.iter().map(|d| d.1).collect::<Vec<_>>());
            Ok(ComparePoint {
                ias: CurvePoint {
                    abscissa: m as f64,
                    mean_revenue,
                    se_revenue,
                    mean_gmv,
                    se_gmv,
                },
                base_revenue,
                se_base_revenue,
                base_gmv: v0,
                se_base_gmv,
                gap,
                se_gap,
                v0,
                lambda: r.lambda,
                alpha: r.alpha,
                step_gap: r.step_gap,
            })
        })
        .collect()
}

/// `compare_on_samples` on `reps` fresh draws from `seed`.
pub fn compare_baseline(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    ms: &[usize],
    reps: usize,
    config: &DualConfig,
) -> Result<Vec<ComparePoint>> {
    let samples = SampleSet::draw(scenario, reps, config.seed);
    compare_on_samples(scenario, layout, ms, &samples, config)
}

/// Draws where every ad's value and weight are coupled with correlation
/// `r`; organics keep their weights. Draw `j` uses stream `j` of `seed`
/// for every `r`, so curves for different `r` share normal scores.
pub fn correlated_draws(
    scenario: &Scenario,
    weights: &ScaledBeta,
    r: f64,
    reps: usize,
    seed: u64,
) -> Result<SampleSet> {
    let draws: Vec<(Scenario, BidProfile)> = (0..reps as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, j);
            let mut w: Vec<f64> = scenario.items().iter().map(|it| it.weight).collect();
            let mut bids = vec![0.0; w.len()];
            for i in scenario.ad_indices() {
                let (v, wi) = correlated_sample(&scenario.items()[i].dist, weights, r, &mut rng)?;
                bids[i] = v;
                w[i] = wi;
            }
            let s = scenario.with_weights(&w)?;
            let p = BidProfile::new(&s, bids)?;
            Ok((s, p))
        })
        .collect::<Result<_>>()?;
    let (scenarios, profiles) = draws.into_iter().unzip();
    SampleSet::with_scenarios(profiles, scenarios)
}

/// The comparison repeated for each correlation coefficient.
pub fn run_experiment4(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    weights: &ScaledBeta,
    rs: &[f64],
    ms: &[usize],
    reps: usize,
    config: &DualConfig,
) -> Result<Vec<(f64, ComparePoint)>> {
    let mut out = Vec::new();
    for &r in rs {
        let samples = correlated_draws(scenario, weights, r, reps, config.seed)?;
        for point in compare_on_samples(scenario, layout, ms, &samples, config)? {
            out.push((r, point));
        }
    }
    Ok(out)
}

/// Writes `rows` as CSV after a `# config: <json>` comment line.
pub fn write_csv<W: std::io::Write>(
    mut out: W,
    config: &serde_json::Value,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    writeln!(out, "# config: {config}").map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}
