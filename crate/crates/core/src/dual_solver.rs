//! Revenue maximization under a volume floor `V(x) >= V0`, solved through
//! the Lagrange multiplier `lambda` on the floor: the lambda-mechanism is the
//! score mechanism with `alpha = 1 / (1 + lambda)`, and the expected volume
//! of its allocation is non-decreasing in `lambda`, so bisection finds the
//! smallest multiplier meeting the floor.
//!
//! All estimates inside one solve share one set of sampled bid profiles.
//! Per profile the greedy volume is monotone in `lambda`, so the estimated
//! volume is exactly monotone and the bisection is sound.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::{allocate, run, virtual_surplus, MechanismSpec, Tradeoff};
pub use crate::mechanisms::lambda_to_alpha;
use crate::model::{realized_gmv, BidProfile, LayoutConstraints, Scenario};
use crate::rng::{mean_se, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualConfig {
    /// Bisection stops once the bracket on `lambda` is at most this wide.
    pub epsilon: f64,
    /// First upper bracket tried; doubled until the floor is met.
    pub lambda_seed: f64,
    /// Doubling stops here; beyond it the solve returns `lambda = inf`.
    pub lambda_cap: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            lambda_seed: 1.0,
            lambda_cap: 1e6,
            mc_samples: 500,
            seed: 0,
        }
    }
}

impl DualConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.mc_samples < 1 {
            return Err(Error::InvalidParameter("at least one Monte-Carlo sample is required".into()));
        }
        if !(self.lambda_seed > 0.0 && self.lambda_cap >= self.lambda_seed) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < lambda seed <= lambda cap, got {} and {}",
                self.lambda_seed, self.lambda_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualResult {
    pub v0: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub volume: f64,
    pub volume_se: f64,
    pub revenue: f64,
    pub revenue_se: f64,
    pub feasible: bool,
    /// Width of the final bracket (0 when `lambda = 0` or `inf`).
    pub bracket_width: f64,
    /// Volume difference across the final bracket.
    pub step_gap: f64,
    /// Number of volume estimates evaluated.
    pub iterations: usize,
}

/// Bid profiles drawn once and reused for every parameter value. Draws may
/// carry their own copy of the scenario (e.g. with per-draw weights).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    profiles: Vec<BidProfile>,
    scenarios: Option<Vec<Scenario>>,
}

impl SampleSet {
    /// Profile `j` is drawn from stream `j` of `seed`.
    pub fn draw(scenario: &Scenario, n: usize, seed: u64) -> Self {
        let profiles = (0..n as u64)
            .into_par_iter()
            .map(|j| BidProfile::sample(scenario, &mut stream_rng(seed, j)))
            .collect();
        Self { profiles, scenarios: None }
    }

    pub fn from_profiles(profiles: Vec<BidProfile>) -> Self {
        Self { profiles, scenarios: None }
    }

    /// Draw `j` is `profiles[j]` bid into `scenarios[j]`.
    pub fn with_scenarios(profiles: Vec<BidProfile>, scenarios: Vec<Scenario>) -> Result<Self> {
        if profiles.len() != scenarios.len() {
            return Err(Error::InvalidParameter(format!(
                "{} profiles for {} scenarios",
                profiles.len(),
                scenarios.len()
            )));
        }
        Ok(Self { profiles, scenarios: Some(scenarios) })
    }

    /// The scenario of draw `j`: its own copy if present, else `base`.
    pub fn scenario<'a>(&'a self, base: &'a Scenario, j: usize) -> &'a Scenario {
        self.scenarios.as_ref().map_or(base, |s| &s[j])
    }

    pub fn profiles(&self) -> &[BidProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

/// Sample means and standard errors over a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub volume: f64,
    pub volume_se: f64,
    pub revenue: f64,
    pub revenue_se: f64,
    pub virtual_surplus: f64,
    pub virtual_surplus_se: f64,
}

/// Per-profile volumes of the mechanism's allocations.
pub fn volume_draws(scenario: &Scenario, samples: &SampleSet, spec: &MechanismSpec) -> Result<Vec<f64>> {
    (0..samples.len())
        .into_par_iter()
        .map(|j| {
            let s = samples.scenario(scenario, j);
            realized_gmv(s, &allocate(s, &samples.profiles[j], spec)?)
        })
        .collect()
}

/// Per-profile `(revenue, volume, virtual surplus)` with payments.
pub fn outcome_draws(scenario: &Scenario, samples: &SampleSet, spec: &MechanismSpec) -> Result<Vec<(f64, f64, f64)>> {
    (0..samples.len())
        .into_par_iter()
        .map(|j| {
            let s = samples.scenario(scenario, j);
            let p = &samples.profiles[j];
            let out = run(s, p, spec)?;
            Ok((out.revenue, out.gmv, virtual_surplus(s, p, &out.allocation)))
        })
        .collect()
}

pub fn evaluate(scenario: &Scenario, samples: &SampleSet, spec: &MechanismSpec) -> Result<Estimate> {
    let draws = outcome_draws(scenario, samples, spec)?;
    let column = |f: fn(&(f64, f64, f64)) -> f64| mean_se(&draws.iter().map(f).collect::<Vec<_>>());
    let (revenue, revenue_se) = column(|d| d.0);
    let (volume, volume_se) = column(|d| d.1);
    let (virtual_surplus, virtual_surplus_se) = column(|d| d.2);
    Ok(Estimate {
        volume,
        volume_se,
        revenue,
        revenue_se,
        virtual_surplus,
        virtual_surplus_se,
    })
}

fn mean_volume(scenario: &Scenario, samples: &SampleSet, layout: &LayoutConstraints, lambda: f64) -> Result<f64> {
    let spec = MechanismSpec::new(*layout, Tradeoff::Lambda(lambda))?;
    Ok(mean_se(&volume_draws(scenario, samples, &spec)?).0)
}

/// Mean volume of the lambda-mechanism over `n` profiles drawn from `seed`.
pub fn estimate_volume(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    lambda: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParameter("at least one Monte-Carlo sample is required".into()));
    }
    mean_volume(scenario, &SampleSet::draw(scenario, n, seed), layout, lambda)
}

/// True iff the volume-ranking mechanism (`alpha = 0`) reaches `v0`.
pub fn feasibility_check(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    v0: f64,
    n: usize,
    seed: u64,
) -> Result<bool> {
    Ok(estimate_volume(scenario, layout, f64::INFINITY, n, seed)? >= v0)
}

/// Solves with a fresh sample set drawn from `config.seed`.
pub fn solve_constrained(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    v0: f64,
    config: &DualConfig,
) -> Result<DualResult> {
    config.validate()?;
    let samples = SampleSet::draw(scenario, config.mc_samples, config.seed);
    solve_on_samples(scenario, layout, v0, &samples, config)
}

/// Smallest multiplier (to within `epsilon`) whose mechanism meets the
/// volume floor on `samples`.
pub fn solve_on_samples(
    scenario: &Scenario,
    layout: &LayoutConstraints,
    v0: f64,
    samples: &SampleSet,
    config: &DualConfig,
) -> Result<DualResult> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let mut iterations = 0usize;
    let mut volume = |lambda: f64| {
        iterations += 1;
        mean_volume(scenario, samples, layout, lambda)
    };

    let max_volume = volume(f64::INFINITY)?;
    if max_volume < v0 {
        return Err(Error::InfeasibleThreshold { v0, max_volume });
    }
    let at_zero = volume(0.0)?;
    let (lambda, bracket_width, step_gap) = if at_zero >= v0 {
        (0.0, 0.0, 0.0)
    } else {
        // invariant: V(lo) < v0
        let (mut lo, mut v_lo) = (0.0, at_zero);
        let mut hi = config.lambda_seed;
        let mut v_hi = volume(hi)?;
        let mut capped = false;
        while v_hi < v0 {
            lo = hi;
            v_lo = v_hi;
            hi *= 2.0;
            if hi > config.lambda_cap {
                capped = true;
                break;
            }
            v_hi = volume(hi)?;
        }
        if capped {
            (f64::INFINITY, f64::INFINITY, max_volume - v_lo)
        } else {
            while hi - lo > config.epsilon {
                let mid = 0.5 * (lo + hi);
                let v_mid = volume(mid)?;
                if v_mid >= v0 {
                    hi = mid;
                    v_hi = v_mid;
                } else {
                    lo = mid;
                    v_lo = v_mid;
                }
            }
            (hi, hi - lo, v_hi - v_lo)
        }
    };
    let spec = MechanismSpec::new(*layout, Tradeoff::Lambda(lambda))?;
    let est = evaluate(scenario, samples, &spec)?;
    Ok(DualResult {
        v0,
        lambda,
        alpha: lambda_to_alpha(lambda),
        volume: est.volume,
        volume_se: est.volume_se,
        revenue: est.revenue,
        revenue_se: est.revenue_se,
        feasible: est.volume >= v0,
        bracket_width,
        step_gap,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ValueDistribution;
    use crate::flow_oracle::{brute_force_optimal, objective};
    use crate::model::Item;

    fn uniform(u: f64) -> ValueDistribution {
        ValueDistribution::uniform(u).unwrap()
    }

    fn organic_only() -> Scenario {
        let items = vec![
            Item::organic(1, 1.0, 4.0),
            Item::organic(2, 1.0, 9.0),
            Item::organic(3, 2.0, 3.0),
        ];
        Scenario::new(items, vec![1.0, 0.5]).unwrap()
    }

    /// Two ads and two organics; ad volumes are low so the floor binds.
    fn two_by_two() -> Scenario {
        let items = vec![
            Item::ad(1, 1.0, 1.0, uniform(10.0)),
            Item::ad(2, 1.0, 2.0, uniform(8.0)),
            Item::organic(3, 1.0, 6.0),
            Item::organic(4, 1.0, 4.0),
        ];
        Scenario::new(items, vec![1.0, 0.6, 0.3]).unwrap()
    }

    #[test]
    fn lambda_to_alpha_examples() {
        assert_eq!(lambda_to_alpha(0.0), 1.0);
        assert_eq!(lambda_to_alpha(1.0), 0.5);
        assert_eq!(lambda_to_alpha(3.0), 0.25);
        assert_eq!(lambda_to_alpha(f64::INFINITY), 0.0);
    }

    #[test]
    fn organic_volume_ignores_lambda() {
        let s = organic_only();
        // top two by g*w: 9 then 6
        let exact = 9.0 * 1.0 + 6.0 * 0.5;
        for lambda in [0.0, 0.7, 5.0, f64::INFINITY] {
            assert_eq!(estimate_volume(&s, &LayoutConstraints::None, lambda, 10, 1).unwrap(), exact);
        }
        let r = solve_constrained(&s, &LayoutConstraints::None, exact, &DualConfig::default()).unwrap();
        assert_eq!(r.lambda, 0.0);
    }

    #[test]
    fn large_lambda_approaches_volume_ranking() {
        let s = two_by_two();
        let top = estimate_volume(&s, &LayoutConstraints::None, f64::INFINITY, 400, 3).unwrap();
        let big = estimate_volume(&s, &LayoutConstraints::None, 1e9, 400, 3).unwrap();
        assert!((top - big).abs() < 1e-9);
    }

    #[test]
    fn volume_is_monotone_in_lambda() {
        let s = two_by_two();
        for layout in [LayoutConstraints::None, LayoutConstraints::Budget { c: 1 }, LayoutConstraints::RowSparse { c: 1, l: 2 }] {
            let samples = SampleSet::draw(&s, 300, 8);
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=40 {
                let v = mean_volume(&s, &samples, &layout, j as f64 * 0.25).unwrap();
                assert!(v >= prev, "{layout:?} at step {j}");
                prev = v;
            }
        }
    }

    #[test]
    fn feasibility_examples() {
        let s = two_by_two();
        let layout = LayoutConstraints::None;
        assert!(feasibility_check(&s, &layout, 0.0, 200, 4).unwrap());
        let bound = 6.0 * 1.0 + 4.0 * 0.6 + 2.0 * 0.3;
        assert!(!feasibility_check(&s, &layout, bound + 1e-6, 200, 4).unwrap());
        let top = estimate_volume(&s, &layout, f64::INFINITY, 200, 4).unwrap();
        assert!(feasibility_check(&s, &layout, 0.99 * top, 200, 4).unwrap());
    }

    #[test]
    fn zero_floor_is_slack() {
        let r = solve_constrained(&two_by_two(), &LayoutConstraints::None, 0.0, &DualConfig::default()).unwrap();
        assert_eq!((r.lambda, r.alpha), (0.0, 1.0));
        assert!(r.feasible);
    }

    #[test]
    fn infeasible_floor_names_the_maximum() {
        let s = two_by_two();
        let err = solve_constrained(&s, &LayoutConstraints::None, 100.0, &DualConfig::default()).unwrap_err();
        match err {
            Error::InfeasibleThreshold { v0, max_volume } => {
                assert_eq!(v0, 100.0);
                assert!(max_volume > 0.0 && max_volume < 100.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Dual objective `sum_profiles max_x [phi-surplus + lambda (V - v0)]`,
    /// with the inner maximum taken by exhaustive search.
    fn dual_objective(s: &Scenario, samples: &SampleSet, lambda: f64, v0: f64) -> f64 {
        let total: f64 = samples
            .profiles()
            .iter()
            .map(|p| {
                let best = brute_force_optimal(s, p, lambda, &LayoutConstraints::None).unwrap();
                objective(s, p, lambda, &best).unwrap()
            })
            .sum();
        total / samples.len() as f64 - lambda * v0
    }

    #[test]
    fn solver_matches_dual_grid_scan() {
        let s = two_by_two();
        let config = DualConfig { mc_samples: 60, seed: 21, ..DualConfig::default() };
        let samples = SampleSet::draw(&s, config.mc_samples, config.seed);
        let lo = mean_volume(&s, &samples, &LayoutConstraints::None, 0.0).unwrap();
        let hi = mean_volume(&s, &samples, &LayoutConstraints::None, f64::INFINITY).unwrap();
        let v0 = lo + 0.6 * (hi - lo);
        let r = solve_on_samples(&s, &LayoutConstraints::None, v0, &samples, &config).unwrap();
        assert!(r.volume >= v0 && r.lambda > 0.0);

        let argmin = |grid: &[f64]| {
            let values: Vec<f64> = grid.iter().map(|&l| dual_objective(&s, &samples, l, v0)).collect();
            let best = values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc });
            (grid[best.0], values)
        };
        // coarse scan over a wide range, then a dense scan at epsilon / 10
        let coarse: Vec<f64> = (0..=((2.0 * r.lambda + 1.0) / 0.01) as usize).map(|j| j as f64 * 0.01).collect();
        let (coarse_min, values) = argmin(&coarse);
        assert!((coarse_min - r.lambda).abs() <= 0.01 + config.epsilon);
        for w in values.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9 * w[1].abs().max(1.0), "dual objective not convex");
        }
        let step = config.epsilon / 10.0;
        let start = (r.lambda - 20.0 * config.epsilon).max(0.0);
        let dense: Vec<f64> = (0..=400).map(|j| start + j as f64 * step).collect();
        let (dense_min, _) = argmin(&dense);
        assert!((dense_min - r.lambda).abs() <= config.epsilon + step, "{dense_min} vs {}", r.lambda);
    }

    #[test]
    fn threshold_solution_is_monotone() {
        let s = two_by_two();
        let config = DualConfig { mc_samples: 200, seed: 2, ..DualConfig::default() };
        let samples = SampleSet::draw(&s, config.mc_samples, config.seed);
        let top = mean_volume(&s, &samples, &LayoutConstraints::None, f64::INFINITY).unwrap();
        let mut prev_alpha = f64::INFINITY;
        for j in 0..=10 {
            let v0 = top * j as f64 / 10.0;
            let r = solve_on_samples(&s, &LayoutConstraints::None, v0, &samples, &config).unwrap();
            assert!(r.alpha <= prev_alpha);
            assert!(r.lambda == 0.0 || r.volume - v0 <= r.step_gap + 1e-12);
            prev_alpha = r.alpha;
        }
    }
}
