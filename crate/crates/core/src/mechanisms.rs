//! Score-based truthful mechanisms for mixed ad/organic pages.
//!
//! Every item gets the revised score `(alpha * phi(b) + (1 - alpha) * g) * w`
//! (organics have `phi = 0`). Slots are filled top to bottom; each slot takes
//! the best remaining item, with ads eligible only while the layout leaves
//! ad capacity at that slot. For the budget layout this is "keep the top `c`
//! ads, then rank"; for row sparsity it is the budget rule run block by block;
//! for column sparsity the residual budget is `c` minus the ads among the
//! previous `l - 1` slots.
//!
//! Payments integrate the ad's own-bid exposure curve exactly. The curve is a
//! step function whose steps sit at the scores chosen in each ad-eligible
//! slot by the run without that ad: the page is identical up to the slot
//! where the ad enters, so the ad lands in the first eligible slot whose
//! occupant it outranks.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::Clamp;
use crate::error::{Error, Result};
use crate::model::{Allocation, BidProfile, Item, ItemKind, LayoutConstraints, Outcome, Scenario};
use crate::rng::{mean_se, stream_rng};

/// Which parameterization of the revenue/volume trade-off was given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tradeoff {
    Alpha(f64),
    /// Lagrange multiplier on the volume constraint; `+inf` is allowed and
    /// means pure volume ranking.
    Lambda(f64),
}

impl Tradeoff {
    pub fn alpha(self) -> f64 {
        match self {
            Self::Alpha(a) => a,
            Self::Lambda(l) => lambda_to_alpha(l),
        }
    }

    pub fn lambda(self) -> f64 {
        match self {
            Self::Alpha(a) if a == 0.0 => f64::INFINITY,
            Self::Alpha(a) => (1.0 - a) / a,
            Self::Lambda(l) => l,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Self::Alpha(a) if !(0.0..=1.0).contains(&a) => {
                Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {a}")))
            }
            Self::Lambda(l) if !(l >= 0.0) => {
                Err(Error::InvalidParameter(format!("lambda must be non-negative, got {l}")))
            }
            _ => Ok(()),
        }
    }
}

/// `1 / (1 + lambda)`, with `lambda = inf` mapping to 0.
pub fn lambda_to_alpha(lambda: f64) -> f64 {
    if lambda.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + lambda)
    }
}

/// A mechanism family (given by its layout) and trade-off parameter. Ties in
/// score go to the larger `g * w`, then to the lower item index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub layout: LayoutConstraints,
    pub tradeoff: Tradeoff,
}

impl MechanismSpec {
    pub fn new(layout: LayoutConstraints, tradeoff: Tradeoff) -> Result<Self> {
        tradeoff.validate()?;
        Ok(Self { layout, tradeoff })
    }

    pub fn unconstrained(alpha: f64) -> Result<Self> {
        Self::new(LayoutConstraints::None, Tradeoff::Alpha(alpha))
    }

    pub fn alpha(&self) -> f64 {
        self.tradeoff.alpha()
    }

    fn check(&self, scenario: &Scenario) -> Result<()> {
        self.tradeoff.validate()?;
        self.layout.validate(scenario.num_slots())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredItem {
    pub index: usize,
    pub score: f64,
    pub kind: ItemKind,
}

// Shared by every scoring path so the alpha and lambda forms agree bit for bit.
fn score_with_phi(item: &Item, phi: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return item.volume * item.weight;
    }
    (alpha * phi + (1.0 - alpha) * item.volume) * item.weight
}

fn item_score(item: &Item, bid: f64, alpha: f64) -> f64 {
    let phi = match item.kind {
        ItemKind::Organic => 0.0,
        ItemKind::Ad if alpha == 0.0 => 0.0,
        ItemKind::Ad => item.dist.virtual_value_or_neg_inf(bid),
    };
    score_with_phi(item, phi, alpha)
}

/// Revised virtual value `(alpha * phi(bid) + (1 - alpha) * g) * w`.
pub fn revised_score(item: &Item, bid: f64, alpha: f64) -> Result<f64> {
    Tradeoff::Alpha(alpha).validate()?;
    let phi = match item.kind {
        ItemKind::Organic => 0.0,
        ItemKind::Ad => {
            let upper = item.dist.upper();
            if !(bid >= 0.0 && bid <= upper) {
                return Err(Error::Domain { value: bid, upper });
            }
            if alpha == 0.0 {
                0.0
            } else {
                item.dist.virtual_value(bid)?
            }
        }
    };
    Ok(score_with_phi(item, phi, alpha))
}

/// `(phi(bid) + lambda * g) * w / (1 + lambda)`, computed through the
/// equivalent `alpha = 1 / (1 + lambda)`.
pub fn revised_score_lambda(item: &Item, bid: f64, lambda: f64) -> Result<f64> {
    Tradeoff::Lambda(lambda).validate()?;
    revised_score(item, bid, lambda_to_alpha(lambda))
}

/// Scores of every item under the profile.
pub fn score_profile(scenario: &Scenario, profile: &BidProfile, alpha: f64) -> Vec<ScoredItem> {
    scenario
        .items()
        .iter()
        .enumerate()
        .map(|(i, item)| ScoredItem {
            index: i,
            score: item_score(item, profile.bid(i), alpha),
            kind: item.kind,
        })
        .collect()
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Ranking order: higher score, then higher `g * w`, then lower index.
/// `Less` means `a` ranks ahead of `b`.
pub fn rank_order(scores: &[f64], gw: &[f64], a: usize, b: usize) -> Ordering {
    cmp_f64(scores[b], scores[a])
        .then(cmp_f64(gw[b], gw[a]))
        .then(a.cmp(&b))
}

/// Items pre-sorted by rank, split by kind.
struct Ranking<'a> {
    scores: &'a [f64],
    gw: Vec<f64>,
    ads: Vec<usize>,
    organics: Vec<usize>,
}

/// One greedy pass: the item chosen per slot and whether ads could enter it.
/// `chosen` stops at the first slot with no eligible candidate.
struct Fill {
    chosen: Vec<usize>,
    ad_open: Vec<bool>,
}

impl<'a> Ranking<'a> {
    fn new(scenario: &Scenario, scores: &'a [f64]) -> Self {
        let gw: Vec<f64> = scenario.items().iter().map(Item::weighted_volume).collect();
        let mut ads: Vec<usize> = scenario.ad_indices().collect();
        let mut organics: Vec<usize> = scenario.organic_indices().collect();
        ads.sort_by(|&a, &b| rank_order(scores, &gw, a, b));
        organics.sort_by(|&a, &b| rank_order(scores, &gw, a, b));
        Self {
            scores,
            gw,
            ads,
            organics,
        }
    }

    fn precedes(&self, a: usize, b: usize) -> bool {
        rank_order(self.scores, &self.gw, a, b) == Ordering::Less
    }

    fn fill(&self, num_slots: usize, layout: &LayoutConstraints, skip: Option<usize>) -> Fill {
        let ads: Vec<usize> = self.ads.iter().copied().filter(|&i| Some(i) != skip).collect();
        let (mut ai, mut oi) = (0, 0);
        let mut ad_prefix = Vec::with_capacity(num_slots + 1);
        ad_prefix.push(0usize);
        let mut chosen = Vec::with_capacity(num_slots);
        let mut ad_open = Vec::with_capacity(num_slots);
        for k in 0..num_slots {
            let open = layout.residual_ads(k, &ad_prefix).is_none_or(|r| r > 0);
            ad_open.push(open);
            let ad = if open { ads.get(ai).copied() } else { None };
            let organic = self.organics.get(oi).copied();
            let pick_ad = match (ad, organic) {
                (Some(a), Some(o)) => self.precedes(a, o),
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            let placed = if pick_ad {
                ai += 1;
                ad.unwrap()
            } else {
                oi += 1;
                organic.unwrap()
            };
            chosen.push(placed);
            ad_prefix.push(ad_prefix[k] + usize::from(pick_ad));
        }
        Fill { chosen, ad_open }
    }

    fn allocate(&self, num_slots: usize, layout: &LayoutConstraints) -> Result<Allocation> {
        let fill = self.fill(num_slots, layout, None);
        if fill.chosen.len() < num_slots {
            return Err(Error::Infeasible(format!(
                "no item can legally fill slot {} under the {} layout",
                fill.chosen.len() + 1,
                layout.family_name()
            )));
        }
        Ok(Allocation::new(fill.chosen))
    }

    /// Own-score thresholds for `ad`: for each ad-eligible slot of the run
    /// without `ad`, in page order, the score it must beat there and the
    /// slot's exposure. A `-inf` threshold ends the list.
    fn thresholds(&self, scenario: &Scenario, layout: &LayoutConstraints, ad: usize) -> Vec<(f64, f64)> {
        let k = scenario.num_slots();
        let fill = self.fill(k, layout, Some(ad));
        let mut out = Vec::new();
        for slot in 0..k {
            match fill.chosen.get(slot) {
                Some(&rival) if fill.ad_open[slot] => {
                    out.push((self.scores[rival], scenario.exposure(slot)))
                }
                Some(_) => {}
                None => {
                    // Nothing else can fill this slot. If ads may enter it the
                    // ad lands here at any bid; otherwise lower bids leave the
                    // page unfillable and the ad is treated as unplaced.
                    if fill.ad_open.get(slot).copied().unwrap_or(false) {
                        out.push((f64::NEG_INFINITY, scenario.exposure(slot)));
                    }
                    break;
                }
            }
        }
        out
    }
}

fn scores_of(scenario: &Scenario, profile: &BidProfile, alpha: f64) -> Vec<f64> {
    scenario
        .items()
        .iter()
        .enumerate()
        .map(|(i, item)| item_score(item, profile.bid(i), alpha))
        .collect()
}

fn check_profile(scenario: &Scenario, profile: &BidProfile) -> Result<()> {
    if profile.bids().len() != scenario.items().len() {
        return Err(Error::InvalidParameter(format!(
            "bid profile has {} entries for {} items",
            profile.bids().len(),
            scenario.items().len()
        )));
    }
    Ok(())
}

/// Allocation of the mechanism described by `spec`.
pub fn allocate(scenario: &Scenario, profile: &BidProfile, spec: &MechanismSpec) -> Result<Allocation> {
    spec.check(scenario)?;
    check_profile(scenario, profile)?;
    let scores = scores_of(scenario, profile, spec.alpha());
    Ranking::new(scenario, &scores).allocate(scenario.num_slots(), &spec.layout)
}

/// Greedy allocation under caller-supplied rank scores, one per item. Used by
/// baselines whose ranking key is not a revised virtual value.
pub fn allocate_by_scores(
    scenario: &Scenario,
    scores: &[f64],
    layout: &LayoutConstraints,
) -> Result<Allocation> {
    if scores.len() != scenario.items().len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} scores, got {}",
            scenario.items().len(),
            scores.len()
        )));
    }
    layout.validate(scenario.num_slots())?;
    Ranking::new(scenario, scores).allocate(scenario.num_slots(), layout)
}

/// Smallest own bid whose score reaches `threshold`, clipped to `[0, cap]`.
fn bid_threshold(item: &Item, alpha: f64, threshold: f64, cap: f64) -> Result<f64> {
    if threshold == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let target = (threshold / item.weight - (1.0 - alpha) * item.volume) / alpha;
    let inv = item.dist.inverse_virtual_value(target)?;
    Ok(match inv.clamp {
        Clamp::Low => 0.0,
        Clamp::High => f64::INFINITY,
        Clamp::None => inv.value,
    }
    .min(cap))
}

fn ad_payment(
    scenario: &Scenario,
    profile: &BidProfile,
    spec: &MechanismSpec,
    ranking: &Ranking,
    alloc: &Allocation,
    ad: usize,
) -> Result<f64> {
    let item = scenario.item(ad)?;
    let alpha = spec.alpha();
    let exposure = alloc.exposure_of(scenario, ad);
    if !item.is_ad() || exposure == 0.0 || alpha == 0.0 {
        return Ok(0.0);
    }
    let v = profile.bid(ad);
    let own = ranking.scores[ad];
    // integral of x(s) over [0, v] as a sum of step heights times lengths
    let steps = ranking.thresholds(scenario, &spec.layout, ad);
    let mut integral = 0.0;
    for (j, &(t, beta)) in steps.iter().enumerate() {
        let next_beta = steps.get(j + 1).map_or(0.0, |s| s.1);
        let b = if t >= own { v } else { bid_threshold(item, alpha, t, v)? };
        integral += (beta - next_beta) * (v - b).max(0.0);
    }
    Ok((v - integral / exposure).clamp(0.0, v))
}

/// Per-click payment of `ad`: `v - (integral of x(s) over [0, v]) / x(v)`,
/// or 0 when the ad is not shown. Organics pay 0.
pub fn payment(scenario: &Scenario, profile: &BidProfile, spec: &MechanismSpec, ad: usize) -> Result<f64> {
    spec.check(scenario)?;
    check_profile(scenario, profile)?;
    scenario.item(ad)?;
    let scores = scores_of(scenario, profile, spec.alpha());
    let ranking = Ranking::new(scenario, &scores);
    let alloc = ranking.allocate(scenario.num_slots(), &spec.layout)?;
    ad_payment(scenario, profile, spec, &ranking, &alloc, ad)
}

/// Own-bid values in `(0, upper)` where the ad's exposure changes, ascending.
pub fn critical_thresholds(
    scenario: &Scenario,
    profile: &BidProfile,
    spec: &MechanismSpec,
    ad: usize,
) -> Result<Vec<f64>> {
    spec.check(scenario)?;
    check_profile(scenario, profile)?;
    let item = scenario.item(ad)?;
    let alpha = spec.alpha();
    if !item.is_ad() || alpha == 0.0 {
        return Ok(Vec::new());
    }
    let scores = scores_of(scenario, profile, alpha);
    let ranking = Ranking::new(scenario, &scores);
    let upper = item.dist.upper();
    let mut out = Vec::new();
    for (t, _) in ranking.thresholds(scenario, &spec.layout, ad) {
        let b = bid_threshold(item, alpha, t, f64::INFINITY)?;
        if b > 0.0 && b < upper {
            out.push(b);
        }
    }
    out.sort_by(|a, b| cmp_f64(*a, *b));
    out.dedup();
    Ok(out)
}

/// Allocation plus payments for every item.
pub fn run(scenario: &Scenario, profile: &BidProfile, spec: &MechanismSpec) -> Result<Outcome> {
    spec.check(scenario)?;
    check_profile(scenario, profile)?;
    let scores = scores_of(scenario, profile, spec.alpha());
    let ranking = Ranking::new(scenario, &scores);
    let alloc = ranking.allocate(scenario.num_slots(), &spec.layout)?;
    let mut payments = vec![0.0; scenario.items().len()];
    for &i in alloc.slots() {
        if scenario.items()[i].is_ad() {
            payments[i] = ad_payment(scenario, profile, spec, &ranking, &alloc, i)?;
        }
    }
    Outcome::new(scenario, alloc, payments)
}

/// `sum_i phi_i(b_i) w_i x_i` over placed ads.
pub fn virtual_surplus(scenario: &Scenario, profile: &BidProfile, alloc: &Allocation) -> f64 {
    alloc
        .slots()
        .iter()
        .enumerate()
        .filter(|(_, &i)| scenario.items()[i].is_ad())
        .map(|(k, &i)| {
            let item = &scenario.items()[i];
            item.dist.virtual_value_or_neg_inf(profile.bid(i)) * item.weight * scenario.exposure(k)
        })
        .sum()
}

/// `sum_i (phi_i + lambda g_i) w_i beta_k(i)`: the per-profile objective the
/// lambda-mechanism maximizes. `lambda = inf` scores by volume alone.
pub fn allocation_objective(scenario: &Scenario, profile: &BidProfile, lambda: f64, alloc: &Allocation) -> f64 {
    alloc
        .slots()
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let item = &scenario.items()[i];
            let phi = if item.is_ad() {
                item.dist.virtual_value_or_neg_inf(profile.bid(i))
            } else {
                0.0
            };
            let per_click = if lambda.is_infinite() {
                item.volume
            } else {
                phi + lambda * item.volume
            };
            per_click * item.weight * scenario.exposure(k)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Per-draw utilities `(true_value - p) * w * x` of `ad` reporting
/// `reported`, with opponents drawn from their distributions. Draw `j` uses
/// stream `j` of `seed`, so calls with the same seed share opponent draws.
pub fn utility_draws(
    scenario: &Scenario,
    spec: &MechanismSpec,
    ad: usize,
    true_value: f64,
    reported: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    spec.check(scenario)?;
    let item = scenario.item(ad)?;
    if !item.is_ad() {
        return Err(Error::InvalidParameter(format!("item {ad} is not an ad")));
    }
    let upper = item.dist.upper();
    for v in [true_value, reported] {
        if !(v >= 0.0 && v <= upper) {
            return Err(Error::Domain { value: v, upper });
        }
    }
    (0..mc_samples as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, j);
            let profile = BidProfile::sample(scenario, &mut rng).with_bid(ad, reported);
            let scores = scores_of(scenario, &profile, spec.alpha());
            let ranking = Ranking::new(scenario, &scores);
            let alloc = ranking.allocate(scenario.num_slots(), &spec.layout)?;
            let x = alloc.exposure_of(scenario, ad);
            if x == 0.0 {
                return Ok(0.0);
            }
            let p = ad_payment(scenario, &profile, spec, &ranking, &alloc, ad)?;
            Ok((true_value - p) * item.weight * x)
        })
        .collect()
}

/// Monte-Carlo expected utility with its standard error.
pub fn expected_utility(
    scenario: &Scenario,
    spec: &MechanismSpec,
    ad: usize,
    true_value: f64,
    reported: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<UtilityEstimate> {
    let draws = utility_draws(scenario, spec, ad, true_value, reported, mc_samples, seed)?;
    let (mean, std_err) = mean_se(&draws);
    Ok(UtilityEstimate {
        mean,
        std_err,
        samples: draws.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ValueDistribution;
    use crate::model::validate_allocation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(u: f64) -> ValueDistribution {
        ValueDistribution::uniform(u).unwrap()
    }

    fn second_price_case() -> (Scenario, BidProfile) {
        let items = vec![
            Item::ad(1, 1.0, 0.0, uniform(1.0)),
            Item::ad(2, 1.0, 0.0, uniform(1.0)),
            Item::organic(3, 1.0, 0.0),
        ];
        let s = Scenario::new(items, vec![1.0]).unwrap();
        let p = BidProfile::from_ad_bids(&s, &[0.8, 0.6]).unwrap();
        (s, p)
    }

    fn layouts(k: usize) -> Vec<LayoutConstraints> {
        let l = (k / 2).max(1);
        vec![
            LayoutConstraints::None,
            LayoutConstraints::Budget { c: 1 },
            LayoutConstraints::RowSparse { c: 1, l },
            LayoutConstraints::ColumnSparse { c: 1, l },
        ]
    }

    /// Random instance with enough organics to fill any page.
    fn random_instance(rng: &mut ChaCha8Rng) -> (Scenario, BidProfile) {
        let n1 = rng.random_range(1..=5);
        let k = rng.random_range(1..=5);
        let n2 = rng.random_range(k..=6);
        let mut items = Vec::new();
        for i in 0..n1 {
            let u = rng.random_range(1.0..20.0);
            items.push(Item::ad(i as u64, rng.random_range(0.5..2.0), rng.random_range(0.0..15.0), uniform(u)));
        }
        for j in 0..n2 {
            items.push(Item::organic((10 + j) as u64, rng.random_range(0.5..2.0), rng.random_range(0.0..15.0)));
        }
        let mut exposures: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        exposures.sort_by(|a, b| b.partial_cmp(a).unwrap());
        exposures.dedup();
        let s = Scenario::new(items, exposures).unwrap();
        let p = BidProfile::sample(&s, rng);
        (s, p)
    }

    /// Payment by re-running the allocation between every candidate
    /// threshold: each competitor's score inverted to an own bid.
    fn payment_by_rerun(s: &Scenario, p: &BidProfile, spec: &MechanismSpec, ad: usize) -> f64 {
        let alpha = spec.alpha();
        let item = &s.items()[ad];
        let v = p.bid(ad);
        let x_at = |b: f64| {
            let a = allocate(s, &p.with_bid(ad, b), spec).unwrap();
            a.exposure_of(s, ad)
        };
        let xv = x_at(v);
        if xv == 0.0 || alpha == 0.0 {
            return 0.0;
        }
        let scores = scores_of(s, p, alpha);
        let mut cuts = vec![0.0, v];
        for (j, &t) in scores.iter().enumerate() {
            if j == ad {
                continue;
            }
            let target = (t / item.weight - (1.0 - alpha) * item.volume) / alpha;
            let b = item.dist.inverse_virtual_value(target).unwrap().value;
            if b > 0.0 && b < v {
                cuts.push(b);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let integral: f64 = cuts.windows(2).map(|w| (w[1] - w[0]) * x_at(0.5 * (w[0] + w[1]))).sum();
        v - integral / xv
    }

    #[test]
    fn revised_score_examples() {
        let organic = Item::organic(1, 1.0, 100.0);
        assert_eq!(revised_score(&organic, 0.0, 0.5).unwrap(), 50.0);
        let ad = Item::ad(2, 1.0, 90.0, uniform(100.0));
        assert_eq!(revised_score(&ad, 11.0, 0.5).unwrap(), 6.0);
        assert_eq!(revised_score(&ad, 37.0, 0.0).unwrap(), 90.0);
        assert!(revised_score(&ad, 101.0, 0.5).is_err());
        let ln = Item::ad(3, 1.0, 1.0, ValueDistribution::lognormal(0.0, 1.0, None).unwrap());
        assert!(matches!(revised_score(&ln, 0.0, 1.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn lambda_scores_match_alpha_scores() {
        let ad = Item::ad(2, 1.5, 90.0, uniform(100.0));
        for &bid in &[0.0, 11.0, 64.2, 100.0] {
            assert_eq!(revised_score_lambda(&ad, bid, 1.0).unwrap(), revised_score(&ad, bid, 0.5).unwrap());
            assert_eq!(revised_score_lambda(&ad, bid, 0.0).unwrap(), revised_score(&ad, bid, 1.0).unwrap());
            let raw = (ad.dist.virtual_value(bid).unwrap() + 3.0 * 90.0) * 1.5 / 4.0;
            assert!((revised_score_lambda(&ad, bid, 3.0).unwrap() - raw).abs() < 1e-12);
        }
        assert_eq!(revised_score_lambda(&ad, 5.0, f64::INFINITY).unwrap(), 135.0);
        assert!(revised_score_lambda(&ad, 5.0, -1.0).is_err());
    }

    #[test]
    fn organic_pages_sort_by_volume() {
        let items = vec![
            Item::organic(1, 1.0, 3.0),
            Item::organic(2, 2.0, 4.0),
            Item::organic(3, 1.0, 9.0),
            Item::organic(4, 1.0, 5.0),
        ];
        let s = Scenario::new(items, vec![1.0, 0.5, 0.25]).unwrap();
        let p = BidProfile::new(&s, vec![0.0; 4]).unwrap();
        for alpha in [0.0, 0.3, 1.0] {
            let a = allocate(&s, &p, &MechanismSpec::unconstrained(alpha).unwrap()).unwrap();
            assert_eq!(a.slots(), &[2, 1, 3]);
        }
    }

    #[test]
    fn negative_score_ads_fill_otherwise_empty_slots() {
        let items = vec![Item::ad(1, 1.0, 0.0, uniform(1.0)), Item::organic(2, 1.0, 5.0)];
        let s = Scenario::new(items, vec![1.0, 0.5]).unwrap();
        let p = BidProfile::from_ad_bids(&s, &[0.1]).unwrap();
        let out = run(&s, &p, &MechanismSpec::unconstrained(1.0).unwrap()).unwrap();
        assert_eq!(out.allocation.slots(), &[1, 0]);
        // the ad takes slot 2 at any bid
        assert_eq!(out.payments[0], 0.0);
    }

    #[test]
    fn greedy_stuck_without_organics_is_an_error() {
        let items = vec![
            Item::ad(1, 1.0, 0.0, uniform(1.0)),
            Item::ad(2, 1.0, 0.0, uniform(1.0)),
        ];
        let s = Scenario::new(items, vec![1.0, 0.5]).unwrap();
        let p = BidProfile::from_ad_bids(&s, &[0.5, 0.5]).unwrap();
        let spec = MechanismSpec::new(LayoutConstraints::Budget { c: 1 }, Tradeoff::Alpha(1.0)).unwrap();
        assert!(matches!(allocate(&s, &p, &spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn second_price_payment_and_thresholds() {
        let (s, p) = second_price_case();
        let spec = MechanismSpec::unconstrained(1.0).unwrap();
        assert!((payment(&s, &p, &spec, 0).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(payment(&s, &p, &spec, 1).unwrap(), 0.0);
        assert_eq!(payment(&s, &p, &spec, 2).unwrap(), 0.0);
        let t = critical_thresholds(&s, &p, &spec, 0).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_payments_vanish() {
        let (s, p) = second_price_case();
        let spec = MechanismSpec::unconstrained(0.0).unwrap();
        let out = run(&s, &p, &spec).unwrap();
        assert!(out.payments.iter().all(|&x| x == 0.0));
        assert!(critical_thresholds(&s, &p, &spec, 0).unwrap().is_empty());
    }

    #[test]
    fn dominant_single_ad_has_no_thresholds() {
        let items = vec![
            Item::ad(1, 1.0, 50.0, uniform(1.0)),
            Item::organic(2, 1.0, 1.0),
            Item::organic(3, 1.0, 2.0),
        ];
        let s = Scenario::new(items, vec![1.0, 0.5]).unwrap();
        let p = BidProfile::from_ad_bids(&s, &[0.7]).unwrap();
        let spec = MechanismSpec::unconstrained(0.5).unwrap();
        assert!(critical_thresholds(&s, &p, &spec, 0).unwrap().is_empty());
        assert_eq!(payment(&s, &p, &spec, 0).unwrap(), 0.0);
    }

    #[test]
    fn zero_report_at_alpha_one_earns_nothing() {
        let (s, _) = second_price_case();
        let items = vec![
            s.items()[0].clone(),
            s.items()[1].clone(),
            Item::organic(3, 1.0, 0.0),
            Item::organic(4, 1.0, 0.0),
        ];
        let s = Scenario::new(items, vec![1.0]).unwrap();
        let spec = MechanismSpec::unconstrained(1.0).unwrap();
        let u = expected_utility(&s, &spec, 0, 0.7, 0.0, 2000, 5).unwrap();
        assert_eq!(u.mean, 0.0);
    }

    #[test]
    fn utility_estimates_ignore_thread_count() {
        let (s, _) = second_price_case();
        let spec = MechanismSpec::unconstrained(1.0).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| expected_utility(&s, &spec, 0, 0.7, 0.7, 3000, 11).unwrap());
        let b = three.install(|| expected_utility(&s, &spec, 0, 0.7, 0.7, 3000, 11).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn unconstrained_threshold_count_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (s, p) = random_instance(&mut rng);
            let spec = MechanismSpec::unconstrained(rng.random_range(0.0..=1.0)).unwrap();
            for ad in s.ad_indices() {
                let t = critical_thresholds(&s, &p, &spec, ad).unwrap();
                assert!(t.len() < s.items().len());
                assert!(t.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    fn instance_strategy() -> impl Strategy<Value = (u64, usize, f64)> {
        (any::<u64>(), 0usize..4, 0.0f64..=1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn allocations_are_feasible_and_keep_organic_order((seed, fam, alpha) in instance_strategy()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, p) = random_instance(&mut rng);
            let spec = MechanismSpec::new(layouts(s.num_slots())[fam], Tradeoff::Alpha(alpha)).unwrap();
            let a = allocate(&s, &p, &spec).unwrap();
            prop_assert!(validate_allocation(&s, &a, &spec.layout).is_valid());
            let organics: Vec<usize> = a.slots().iter().copied().filter(|&i| !s.items()[i].is_ad()).collect();
            for w in organics.windows(2) {
                let (x, y) = (&s.items()[w[0]], &s.items()[w[1]]);
                prop_assert!(x.weighted_volume() > y.weighted_volume()
                    || (x.weighted_volume() == y.weighted_volume() && w[0] < w[1]));
            }
        }

        #[test]
        fn payments_match_rerun_integration((seed, fam, alpha) in instance_strategy()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, p) = random_instance(&mut rng);
            let spec = MechanismSpec::new(layouts(s.num_slots())[fam], Tradeoff::Alpha(alpha)).unwrap();
            let out = run(&s, &p, &spec).unwrap();
            for ad in s.ad_indices() {
                let pay = out.payments[ad];
                prop_assert!(pay >= 0.0 && pay <= p.bid(ad));
                let oracle = payment_by_rerun(&s, &p, &spec, ad);
                prop_assert!((pay - oracle).abs() <= 1e-9 * p.bid(ad).max(1.0), "ad {}: {} vs {}", ad, pay, oracle);
            }
        }

        #[test]
        fn exposure_is_monotone_in_own_bid((seed, fam, alpha) in instance_strategy(), b1 in 0.0f64..1.0, b2 in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, p) = random_instance(&mut rng);
            let spec = MechanismSpec::new(layouts(s.num_slots())[fam], Tradeoff::Alpha(alpha)).unwrap();
            let ad = s.ad_indices().next().unwrap();
            let u = s.items()[ad].dist.upper();
            let (lo, hi) = if b1 <= b2 { (b1 * u, b2 * u) } else { (b2 * u, b1 * u) };
            let x_lo = allocate(&s, &p.with_bid(ad, lo), &spec).unwrap().exposure_of(&s, ad);
            let x_hi = allocate(&s, &p.with_bid(ad, hi), &spec).unwrap().exposure_of(&s, ad);
            prop_assert!(x_lo <= x_hi);
        }

        #[test]
        fn lambda_and_alpha_allocate_identically(seed in any::<u64>(), fam in 0usize..4, lambda in 0.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, p) = random_instance(&mut rng);
            let layout = layouts(s.num_slots())[fam];
            let by_lambda = allocate(&s, &p, &MechanismSpec::new(layout, Tradeoff::Lambda(lambda)).unwrap()).unwrap();
            let by_alpha = allocate(&s, &p, &MechanismSpec::new(layout, Tradeoff::Alpha(1.0 / (1.0 + lambda))).unwrap()).unwrap();
            prop_assert_eq!(by_lambda, by_alpha);
        }
    }
}
