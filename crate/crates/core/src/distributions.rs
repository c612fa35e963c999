//! Private-value distributions for ad items.
//!
//! Every distribution lives on a bounded support `[0, upper]`. The lognormal
//! kind is truncated at `upper` and renormalized so that `cdf(upper) == 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Grid size used when a scenario checks regularity of its ad distributions.
pub const REGULARITY_GRID: usize = 10_000;

const REGULARITY_SLACK: f64 = 1e-12;
const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Lognormal law truncated to `[0, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedLogNormal {
    mu: f64,
    sigma: f64,
    upper: f64,
    // Untruncated probability of `[0, upper]`.
    mass: f64,
}

impl TruncatedLogNormal {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn z(&self, v: f64) -> f64 {
        (v.ln() - self.mu) / self.sigma
    }

    fn is_point_mass(&self) -> bool {
        self.sigma == 0.0
    }
}

/// Piecewise-linear CDF given by sorted `(value, cdf)` breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTable {
    points: Vec<(f64, f64)>,
}

impl PiecewiseTable {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    // Index of the segment `[points[i], points[i + 1]]` holding `v`.
    fn segment(&self, v: f64) -> usize {
        let last = self.points.len() - 2;
        match self.points.iter().position(|&(x, _)| x > v) {
            Some(0) => 0,
            Some(i) => (i - 1).min(last),
            None => last,
        }
    }

    fn slope(&self, i: usize) -> f64 {
        let (x0, f0) = self.points[i];
        let (x1, f1) = self.points[i + 1];
        (f1 - f0) / (x1 - x0)
    }
}

/// Result of inverting the virtual value function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    pub clamp: Clamp,
}

/// Whether an inversion target fell outside the attainable virtual-value range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    None,
    /// Target below `phi(0)`; the value was clamped to 0.
    Low,
    /// Target above `phi(upper)`; the value was clamped to `upper`.
    High,
}

/// A value distribution on `[0, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionDescriptor", into = "DistributionDescriptor")]
pub enum ValueDistribution {
    Uniform { upper: f64 },
    LogNormal(TruncatedLogNormal),
    /// All mass at zero. Organic items carry this distribution.
    DegenerateZero,
    /// Only used to build counterexamples (e.g. non-regular laws).
    Table(PiecewiseTable),
}

impl ValueDistribution {
    pub fn uniform(upper: f64) -> Result<Self> {
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "uniform upper bound must be positive and finite, got {upper}"
            )));
        }
        Ok(Self::Uniform { upper })
    }

    /// Lognormal(`mu`, `sigma`) truncated at `upper`, defaulting to the
    /// 99.9th percentile of the untruncated law.
    pub fn lognormal(mu: f64, sigma: f64, upper: Option<f64>) -> Result<Self> {
        if !mu.is_finite() || !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lognormal needs finite mu and sigma >= 0, got mu={mu}, sigma={sigma}"
            )));
        }
        let upper = upper.unwrap_or_else(|| (mu + sigma * std_normal_quantile(0.999)).exp());
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lognormal truncation must be positive and finite, got {upper}"
            )));
        }
        let mass = if sigma == 0.0 {
            if mu.exp() > upper {
                return Err(Error::InvalidParameter(format!(
                    "point mass at {} lies above the truncation {upper}",
                    mu.exp()
                )));
            }
            1.0
        } else {
            std_normal_cdf((upper.ln() - mu) / sigma)
        };
        if mass <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "truncation {upper} leaves no probability mass"
            )));
        }
        Ok(Self::LogNormal(TruncatedLogNormal {
            mu,
            sigma,
            upper,
            mass,
        }))
    }

    /// Piecewise-linear CDF through `points`, which must start at `(0, 0)`,
    /// end at `(upper, 1)` and be sorted with non-decreasing CDF values.
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("piecewise table: {msg}")));
        if points.len() < 2 {
            return bad("needs at least two breakpoints");
        }
        if points[0] != (0.0, 0.0) {
            return bad("must start at (0, 0)");
        }
        let (upper, last) = points[points.len() - 1];
        if last != 1.0 || !(upper.is_finite() && upper > 0.0) {
            return bad("must end at (upper, 1) with a positive finite upper");
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 || !w[1].1.is_finite() {
                return bad("breakpoints must be strictly increasing with a non-decreasing CDF");
            }
        }
        Ok(Self::Table(PiecewiseTable { points }))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Uniform { .. } => "uniform",
            Self::LogNormal(_) => "lognormal",
            Self::DegenerateZero => "degenerate-zero",
            Self::Table(_) => "piecewise-table",
        }
    }

    /// Upper end of the support.
    pub fn upper(&self) -> f64 {
        match self {
            Self::Uniform { upper } => *upper,
            Self::LogNormal(d) => d.upper,
            Self::DegenerateZero => 0.0,
            Self::Table(t) => t.points[t.points.len() - 1].0,
        }
    }

    fn check_support(&self, v: f64) -> Result<()> {
        let upper = self.upper();
        if v.is_nan() || v < 0.0 || v > upper {
            return Err(Error::Domain { value: v, upper });
        }
        Ok(())
    }

    pub fn cdf(&self, v: f64) -> Result<f64> {
        self.check_support(v)?;
        Ok(self.cdf_unchecked(v))
    }

    fn cdf_unchecked(&self, v: f64) -> f64 {
        match self {
            Self::Uniform { upper } => (v / upper).clamp(0.0, 1.0),
            Self::LogNormal(d) => {
                if v <= 0.0 {
                    0.0
                } else if v >= d.upper {
                    1.0
                } else if d.is_point_mass() {
                    if v >= d.mu.exp() {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (std_normal_cdf(d.z(v)) / d.mass).min(1.0)
                }
            }
            Self::DegenerateZero => 1.0,
            Self::Table(t) => {
                let i = t.segment(v);
                let (x0, f0) = t.points[i];
                (f0 + t.slope(i) * (v - x0)).clamp(0.0, 1.0)
            }
        }
    }

    // 1 - cdf(v), computed without cancellation for the lognormal upper tail.
    fn survival_unchecked(&self, v: f64) -> f64 {
        match self {
            Self::LogNormal(d) if !d.is_point_mass() && v > 0.0 && v < d.upper => {
                let tail = std_normal_sf(d.z(v)) - std_normal_sf(d.z(d.upper));
                (tail / d.mass).clamp(0.0, 1.0)
            }
            _ => 1.0 - self.cdf_unchecked(v),
        }
    }

    pub fn pdf(&self, v: f64) -> Result<f64> {
        self.check_support(v)?;
        match self {
            Self::DegenerateZero => Err(Error::Unsupported {
                op: "pdf",
                kind: "degenerate-zero",
            }),
            Self::LogNormal(d) if d.is_point_mass() => Err(Error::Unsupported {
                op: "pdf",
                kind: "zero-variance lognormal",
            }),
            _ => Ok(self.pdf_unchecked(v)),
        }
    }

    fn pdf_unchecked(&self, v: f64) -> f64 {
        match self {
            Self::Uniform { upper } => 1.0 / upper,
            Self::LogNormal(d) => {
                if v <= 0.0 || d.is_point_mass() {
                    0.0
                } else {
                    std_normal_pdf(d.z(v)) / (v * d.sigma * d.mass)
                }
            }
            Self::DegenerateZero => 0.0,
            Self::Table(t) => t.slope(t.segment(v)),
        }
    }

    /// Myerson virtual value `v - (1 - F(v)) / f(v)`.
    pub fn virtual_value(&self, v: f64) -> Result<f64> {
        let density = self.pdf(v)?;
        if density <= 0.0 {
            return Err(Error::Singular { value: v });
        }
        Ok(v - self.survival_unchecked(v) / density)
    }

    /// Virtual value with vanishing density mapped to `-inf`. Callers must
    /// keep `v` inside the support.
    pub(crate) fn virtual_value_or_neg_inf(&self, v: f64) -> f64 {
        let density = self.pdf_unchecked(v);
        if density > 0.0 {
            v - self.survival_unchecked(v) / density
        } else if self.survival_unchecked(v) <= 0.0 {
            v
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Smallest value whose virtual value reaches `target`, by monotone
    /// bisection on `[0, upper]`. Targets outside `[phi(0), phi(upper)]` are
    /// clamped to the nearest endpoint and flagged.
    pub fn inverse_virtual_value(&self, target: f64) -> Result<Inversion> {
        let upper = self.upper();
        match self {
            Self::DegenerateZero => {
                return Err(Error::Unsupported {
                    op: "inverse_virtual_value",
                    kind: "degenerate-zero",
                })
            }
            Self::LogNormal(d) if d.is_point_mass() => {
                return Err(Error::Unsupported {
                    op: "inverse_virtual_value",
                    kind: "zero-variance lognormal",
                })
            }
            _ => {}
        }
        if target.is_nan() {
            return Err(Error::InvalidParameter("inversion target is NaN".into()));
        }
        if let Self::Uniform { upper } = self {
            // phi(v) = 2v - upper
            let v = 0.5 * (target + upper);
            return Ok(if v < 0.0 {
                Inversion { value: 0.0, clamp: Clamp::Low }
            } else if v > *upper {
                Inversion { value: *upper, clamp: Clamp::High }
            } else {
                Inversion { value: v, clamp: Clamp::None }
            });
        }

        let phi_low = self.virtual_value_or_neg_inf(0.0);
        if target <= phi_low {
            let clamp = if target < phi_low { Clamp::Low } else { Clamp::None };
            return Ok(Inversion { value: 0.0, clamp });
        }
        if target > self.virtual_value_or_neg_inf(upper) {
            return Ok(Inversion {
                value: upper,
                clamp: Clamp::High,
            });
        }
        // Invariant: phi(lo) < target <= phi(hi).
        let (mut lo, mut hi) = (0.0_f64, upper);
        let tol = 1e-13 * upper;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.virtual_value_or_neg_inf(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Inversion {
            value: hi,
            clamp: Clamp::None,
        })
    }

    /// True iff the virtual value is non-decreasing on a `grid_n`-point grid
    /// over the support. The degenerate law is regular by convention.
    pub fn check_regularity(&self, grid_n: usize) -> bool {
        let grid_n = grid_n.max(2);
        match self {
            Self::DegenerateZero => return true,
            Self::LogNormal(d) if d.is_point_mass() => return false,
            _ => {}
        }
        let upper = self.upper();
        let mut prev = f64::NEG_INFINITY;
        for j in 0..grid_n {
            let v = upper * j as f64 / (grid_n - 1) as f64;
            let phi = self.virtual_value_or_neg_inf(v);
            if phi.is_nan() {
                return false;
            }
            if prev.is_finite() && phi < prev - REGULARITY_SLACK * prev.abs().max(1.0) {
                return false;
            }
            if prev.is_finite() && phi == f64::NEG_INFINITY {
                return false;
            }
            prev = phi;
        }
        true
    }

    /// Inverse CDF. `p` is clamped to `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            Self::Uniform { upper } => p * upper,
            Self::LogNormal(d) => {
                if d.is_point_mass() {
                    return d.mu.exp();
                }
                if p <= 0.0 {
                    return 0.0;
                }
                let z = std_normal_quantile((p * d.mass).min(d.mass));
                (d.mu + d.sigma * z).exp().min(d.upper)
            }
            Self::DegenerateZero => 0.0,
            Self::Table(t) => {
                let i = t
                    .points
                    .windows(2)
                    .position(|w| p <= w[1].1 && w[1].1 > w[0].1)
                    .unwrap_or(t.points.len() - 2);
                let (x0, f0) = t.points[i];
                let (x1, f1) = t.points[i + 1];
                if f1 > f0 {
                    x0 + (p - f0) / (f1 - f0) * (x1 - x0)
                } else {
                    x0
                }
            }
        }
    }

    /// Draws a value by inverse-transform sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::DegenerateZero => 0.0,
            _ => {
                let u: f64 = rng.random();
                self.quantile(u).clamp(0.0, self.upper())
            }
        }
    }
}

/// Moment-matching lognormal fit on log-samples. The truncation is placed at
/// 1.5 times the largest sample.
pub fn fit_lognormal(samples: &[f64]) -> Result<ValueDistribution> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(
            "lognormal fit needs at least two samples".into(),
        ));
    }
    if let Some(&bad) = samples.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::Domain {
            value: bad,
            upper: f64::INFINITY,
        });
    }
    let n = samples.len() as f64;
    let logs: Vec<f64> = samples.iter().map(|s| s.ln()).collect();
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / (n - 1.0);
    let max = samples.iter().cloned().fold(f64::MIN, f64::max);
    ValueDistribution::lognormal(mu, var.sqrt(), Some(1.5 * max))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum DistributionDescriptor {
    Uniform {
        upper: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
    },
    DegenerateZero,
    PiecewiseTable {
        points: Vec<(f64, f64)>,
    },
}

impl TryFrom<DistributionDescriptor> for ValueDistribution {
    type Error = Error;

    fn try_from(d: DistributionDescriptor) -> Result<Self> {
        match d {
            DistributionDescriptor::Uniform { upper } => Self::uniform(upper),
            DistributionDescriptor::Lognormal { mu, sigma, upper } => {
                Self::lognormal(mu, sigma, upper)
            }
            DistributionDescriptor::DegenerateZero => Ok(Self::DegenerateZero),
            DistributionDescriptor::PiecewiseTable { points } => Self::table(points),
        }
    }
}

impl From<ValueDistribution> for DistributionDescriptor {
    fn from(d: ValueDistribution) -> Self {
        match d {
            ValueDistribution::Uniform { upper } => Self::Uniform { upper },
            ValueDistribution::LogNormal(l) => Self::Lognormal {
                mu: l.mu,
                sigma: l.sigma,
                upper: Some(l.upper),
            },
            ValueDistribution::DegenerateZero => Self::DegenerateZero,
            ValueDistribution::Table(t) => Self::PiecewiseTable { points: t.points },
        }
    }
}
