//! Synthetic scenario generators.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::distributions::{std_normal_cdf, ValueDistribution};
use crate::error::{Error, Result};
use crate::model::{BidProfile, Item, Scenario};
use crate::rng::stream_rng;

/// Parameters of the default synthetic page: `k` slots with exposure
/// `1 / (1 + decay * (k - 1))`, lognormal per-click volumes and lognormal
/// ad values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticFamily {
    pub slots: usize,
    pub ads: usize,
    pub organics: usize,
    pub exposure_decay: f64,
    pub volume_mu: f64,
    pub volume_sigma: f64,
    pub value_mu: f64,
    pub value_sigma: f64,
}

impl Default for SyntheticFamily {
    fn default() -> Self {
        Self {
            slots: 20,
            ads: 12,
            organics: 30,
            exposure_decay: 0.25,
            volume_mu: 3.5,
            volume_sigma: 0.6,
            value_mu: 0.3,
            value_sigma: 0.8,
        }
    }
}

impl SyntheticFamily {
    pub fn exposures(&self) -> Vec<f64> {
        (0..self.slots)
            .map(|k| 1.0 / (1.0 + self.exposure_decay * k as f64))
            .collect()
    }

    pub fn value_distribution(&self) -> Result<ValueDistribution> {
        ValueDistribution::lognormal(self.value_mu, self.value_sigma, None)
    }

    /// One page with unit weights; volumes drawn from stream 0 of `seed`.
    pub fn generate(&self, seed: u64) -> Result<Scenario> {
        let volume = LogNormal::new(self.volume_mu, self.volume_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let dist = self.value_distribution()?;
        let mut rng = stream_rng(seed, 0);
        let mut items = Vec::with_capacity(self.ads + self.organics);
        for i in 0..self.ads {
            items.push(Item::ad(i as u64, 1.0, volume.sample(&mut rng), dist.clone()));
        }
        for j in 0..self.organics {
            items.push(Item::organic((self.ads + j) as u64, 1.0, volume.sample(&mut rng)));
        }
        Scenario::new(items, self.exposures())
    }
}

/// Ranges for the small random instances used by oracle checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallInstance {
    pub max_ads: usize,
    pub max_organics: usize,
    pub max_slots: usize,
    /// Draw at least as many organics as slots, so every constrained greedy
    /// can always complete the page.
    pub organics_fill_page: bool,
}

impl Default for SmallInstance {
    fn default() -> Self {
        Self {
            max_ads: 4,
            max_organics: 4,
            max_slots: 4,
            organics_fill_page: true,
        }
    }
}

impl SmallInstance {
    /// Uniform ad values, random weights, volumes and exposures, plus one
    /// sampled bid profile.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Scenario, BidProfile)> {
        let n1 = rng.random_range(1..=self.max_ads);
        let (k, n2) = if self.organics_fill_page {
            let k = rng.random_range(1..=self.max_slots.min(self.max_organics));
            (k, rng.random_range(k..=self.max_organics))
        } else {
            let n2 = rng.random_range(0..=self.max_organics);
            (rng.random_range(1..=self.max_slots.min(n1 + n2)), n2)
        };
        let mut items = Vec::with_capacity(n1 + n2);
        for i in 0..n1 {
            let dist = ValueDistribution::uniform(rng.random_range(1.0..20.0))?;
            items.push(Item::ad(i as u64, rng.random_range(0.5..2.0), rng.random_range(0.0..10.0), dist));
        }
        for j in 0..n2 {
            items.push(Item::organic((n1 + j) as u64, rng.random_range(0.5..2.0), rng.random_range(0.0..10.0)));
        }
        let mut exposures: Vec<f64> = Vec::with_capacity(k);
        while exposures.len() < k {
            let b: f64 = rng.random_range(0.05..1.0);
            if !exposures.contains(&b) {
                exposures.push(b);
            }
        }
        exposures.sort_by(|a, b| b.total_cmp(a));
        let scenario = Scenario::new(items, exposures)?;
        let profile = BidProfile::sample(&scenario, rng);
        Ok((scenario, profile))
    }
}

/// Quality factor law `scale * Beta(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledBeta {
    pub a: f64,
    pub b: f64,
    pub scale: f64,
}

impl Default for ScaledBeta {
    /// Beta(2, 5) has mean 2/7; the scale 3.5 gives unit mean weights.
    fn default() -> Self {
        Self { a: 2.0, b: 5.0, scale: 3.5 }
    }
}

impl ScaledBeta {
    pub fn quantile(&self, p: f64) -> Result<f64> {
        let beta = Beta::new(self.a, self.b).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(self.scale * beta.inverse_cdf(p.clamp(0.0, 1.0)))
    }
}

/// Draws `(value, weight)` through a Gaussian copula with normal-score
/// correlation `r`. At `r = 1` and `r = -1` the weight is an exact
/// increasing or decreasing function of the value.
pub fn correlated_sample<R: Rng + ?Sized>(
    value_dist: &ValueDistribution,
    weight_dist: &ScaledBeta,
    r: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!("correlation must lie in [-1, 1], got {r}")));
    }
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let zw = if r == 1.0 {
        z1
    } else if r == -1.0 {
        -z1
    } else {
        r * z1 + (1.0 - r * r).sqrt() * z2
    };
    let value = value_dist.quantile(std_normal_cdf(z1));
    let weight = weight_dist.quantile(std_normal_cdf(zw))?;
    Ok((value, weight))
}
