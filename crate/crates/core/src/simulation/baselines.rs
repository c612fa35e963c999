//! Reference mechanisms the integrated page is compared against.

use crate::distributions::Clamp;
use crate::error::{Error, Result};
use crate::mechanisms::{allocate_by_scores, rank_order};
use crate::model::{Allocation, BidProfile, Item, LayoutConstraints, Outcome, Scenario};

fn organics_by_volume(scenario: &Scenario) -> Vec<usize> {
    let gw: Vec<f64> = scenario.items().iter().map(Item::weighted_volume).collect();
    let mut organics: Vec<usize> = scenario.organic_indices().collect();
    organics.sort_by(|&a, &b| rank_order(&gw, &gw, a, b));
    organics
}

/// Ads in the top slots, then organics by `g * w` until the page is full.
fn page_with_organic_fill(scenario: &Scenario, ads: &[usize]) -> Result<Allocation> {
    let k = scenario.num_slots();
    let organics = organics_by_volume(scenario);
    if ads.len() + organics.len() < k {
        return Err(Error::Infeasible(format!(
            "{} ads and {} organics cannot fill {k} slots",
            ads.len(),
            organics.len()
        )));
    }
    let slots = ads.iter().copied().chain(organics).take(k).collect();
    Ok(Allocation::new(slots))
}

/// Generalized second price over `m` slots reserved for ads. Ads are ranked
/// by bid; the ad in position j pays the next-highest ad bid (0 if none).
pub fn gsp_fixed_slots(scenario: &Scenario, profile: &BidProfile, m: usize) -> Result<Outcome> {
    let n1 = scenario.num_ads();
    if m > n1 || m > scenario.num_slots() {
        return Err(Error::InvalidParameter(format!(
            "{m} ad slots requested with {n1} ads and {} slots",
            scenario.num_slots()
        )));
    }
    let bids = profile.bids();
    let gw: Vec<f64> = scenario.items().iter().map(Item::weighted_volume).collect();
    let mut ads: Vec<usize> = scenario.ad_indices().collect();
    ads.sort_by(|&a, &b| rank_order(bids, &gw, a, b));
    let alloc = page_with_organic_fill(scenario, &ads[..m])?;
    let mut payments = vec![0.0; scenario.items().len()];
    for j in 0..m {
        payments[ads[j]] = ads.get(j + 1).map_or(0.0, |&next| bids[next]);
    }
    Outcome::new(scenario, alloc, payments)
}

fn heuristic_scores(scenario: &Scenario, profile: &BidProfile) -> Vec<f64> {
    scenario
        .items()
        .iter()
        .enumerate()
        .map(|(i, it)| 0.5 * profile.bid(i) + 0.5 * it.volume)
        .collect()
}

/// Every item in the heuristic's rank order, shown or not.
pub fn heuristic_order(scenario: &Scenario, profile: &BidProfile) -> Vec<usize> {
    let scores = heuristic_scores(scenario, profile);
    let gw: Vec<f64> = scenario.items().iter().map(Item::weighted_volume).collect();
    let mut order: Vec<usize> = (0..scenario.items().len()).collect();
    order.sort_by(|&a, &b| rank_order(&scores, &gw, a, b));
    order
}

/// Ranks every item by `0.5 * bid + 0.5 * g`; each shown ad pays the
/// smallest bid that keeps it ahead of the next-ranked item.
pub fn integrated_heuristic(scenario: &Scenario, profile: &BidProfile) -> Result<Outcome> {
    let scores = heuristic_scores(scenario, profile);
    let alloc = allocate_by_scores(scenario, &scores, &LayoutConstraints::None)?;
    let order = heuristic_order(scenario, profile);
    let mut payments = vec![0.0; scenario.items().len()];
    for (pos, &i) in order.iter().enumerate().take(scenario.num_slots()) {
        let item = &scenario.items()[i];
        if !item.is_ad() {
            continue;
        }
        let next = order.get(pos + 1).map_or(0.0, |&j| scores[j]);
        payments[i] = (2.0 * next - item.volume).clamp(0.0, profile.bid(i));
    }
    Outcome::new(scenario, alloc, payments)
}

/// Myerson auction over the top `m` slots: ads with non-negative virtual
/// value, ranked by `w * phi`, each paying its threshold bid integrated over
/// positions. Ad slots left empty fall through to organics.
pub fn myerson_fixed_slots(scenario: &Scenario, profile: &BidProfile, m: usize) -> Result<Outcome> {
    let k = scenario.num_slots();
    if m > k {
        return Err(Error::InvalidParameter(format!("{m} ad slots requested with {k} slots")));
    }
    let items = scenario.items();
    let scores: Vec<f64> = items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            if it.is_ad() {
                it.weight * it.dist.virtual_value_or_neg_inf(profile.bid(i))
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let gw: Vec<f64> = items.iter().map(Item::weighted_volume).collect();
    let mut eligible: Vec<usize> = scenario.ad_indices().filter(|&i| scores[i] >= 0.0).collect();
    eligible.sort_by(|&a, &b| rank_order(&scores, &gw, a, b));
    let winners = &eligible[..m.min(eligible.len())];
    let alloc = page_with_organic_fill(scenario, winners)?;

    let mut payments = vec![0.0; items.len()];
    for (pos, &i) in winners.iter().enumerate() {
        let item = &items[i];
        let v = profile.bid(i);
        // position p (0-based) needs a score above the p-th best rival and 0
        let rivals: Vec<f64> = eligible.iter().filter(|&&j| j != i).map(|&j| scores[j]).collect();
        let mut integral = 0.0;
        for p in 0..m {
            let beta = scenario.exposure(p);
            let next_beta = if p + 1 < m { scenario.exposure(p + 1) } else { 0.0 };
            let threshold = rivals.get(p).copied().unwrap_or(f64::NEG_INFINITY).max(0.0);
            let inv = item.dist.inverse_virtual_value(threshold / item.weight)?;
            let bid = match inv.clamp {
                Clamp::Low => 0.0,
                Clamp::High => f64::INFINITY,
                Clamp::None => inv.value,
            };
            integral += (beta - next_beta) * (v - bid).max(0.0);
        }
        let x = scenario.exposure(pos);
        payments[i] = (v - integral / x).clamp(0.0, v);
    }
    Outcome::new(scenario, alloc, payments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ValueDistribution;
    use crate::model::ScenarioDocument;

    fn example1() -> (Scenario, BidProfile) {
        let doc = ScenarioDocument::from_json(include_str!("../../fixtures/example1.json")).unwrap();
        let s = doc.scenario().unwrap();
        let p = doc.bid_profile(&s).unwrap().unwrap();
        (s, p)
    }

    fn two_ads(bids: [f64; 2]) -> (Scenario, BidProfile) {
        let u = ValueDistribution::uniform(1.0).unwrap();
        let items = vec![
            Item::ad(1, 1.0, 0.0, u.clone()),
            Item::ad(2, 1.0, 0.0, u),
            Item::organic(3, 1.0, 1.0),
        ];
        let s = Scenario::new(items, vec![1.0]).unwrap();
        let p = BidProfile::from_ad_bids(&s, &bids).unwrap();
        (s, p)
    }

    #[test]
    fn gsp_reproduces_fixed_slot_table() {
        let (s, p) = example1();
        let out = gsp_fixed_slots(&s, &p, 3).unwrap();
        assert_eq!(out.allocation.slots(), &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(&out.payments[..3], &[12.0, 11.0, 0.0]);
        assert!((out.gmv - 451.3).abs() < 1e-9);
        assert!((out.revenue - 21.9).abs() < 1e-9);
        assert!((out.actual_payment(&s, 1) - 9.9).abs() < 1e-12);
    }

    #[test]
    fn gsp_edge_cases() {
        let (s, p) = example1();
        // seven organics cannot fill ten slots on their own
        assert!(matches!(gsp_fixed_slots(&s, &p, 0), Err(Error::Infeasible(_))));
        assert!(gsp_fixed_slots(&s, &p, 4).is_err());
        let short = Scenario::new(s.items().to_vec(), s.exposures()[..7].to_vec()).unwrap();
        let out = gsp_fixed_slots(&short, &p, 0).unwrap();
        assert_eq!(out.revenue, 0.0);
        assert_eq!(out.allocation.num_ads(&short), 0);
        let (s, p) = two_ads([0.8, 0.6]);
        let one = Scenario::new(vec![s.items()[0].clone(), s.items()[2].clone()], vec![1.0]).unwrap();
        let p1 = BidProfile::from_ad_bids(&one, &[p.bid(0)]).unwrap();
        assert_eq!(gsp_fixed_slots(&one, &p1, 1).unwrap().payments[0], 0.0);
    }

    #[test]
    fn heuristic_reproduces_integrated_table() {
        let (s, p) = example1();
        let out = integrated_heuristic(&s, &p).unwrap();
        assert_eq!(out.allocation.slots(), &[2, 3, 4, 1, 5, 0, 6, 7, 8, 9]);
        assert_eq!(&out.payments[..3], &[10.0, 10.0, 10.0]);
        assert!((out.gmv - 465.8).abs() < 1e-9);
        assert!((out.revenue - 22.0).abs() < 1e-9);
    }

    #[test]
    fn heuristic_payment_never_exceeds_bid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let mut items = Vec::new();
            for i in 0..3 {
                items.push(Item::ad(i, 1.0, rng.random_range(0.0..50.0), ValueDistribution::uniform(40.0).unwrap()));
            }
            for j in 0..4 {
                items.push(Item::organic(10 + j, 1.0, rng.random_range(0.0..50.0)));
            }
            let s = Scenario::new(items, vec![1.0, 0.7, 0.5, 0.2]).unwrap();
            let p = BidProfile::sample(&s, &mut rng);
            let out = integrated_heuristic(&s, &p).unwrap();
            let order = heuristic_order(&s, &p);
            for i in s.ad_indices() {
                assert!(out.payments[i] >= 0.0 && out.payments[i] <= p.bid(i));
                if let Some(pos) = out.allocation.slot_of(i) {
                    // bidding the payment still keeps the ad ahead of its successor
                    let next = order.get(pos + 1).map(|&j| 0.5 * p.bid(j) + 0.5 * s.items()[j].volume);
                    let own = 0.5 * out.payments[i] + 0.5 * s.items()[i].volume;
                    assert!(next.is_none_or(|n| own >= n - 1e-12));
                }
            }
        }
    }

    #[test]
    fn all_organic_heuristic_ranks_by_volume() {
        let items = vec![Item::organic(1, 1.0, 3.0), Item::organic(2, 1.0, 8.0), Item::organic(3, 1.0, 5.0)];
        let s = Scenario::new(items, vec![1.0, 0.5]).unwrap();
        let p = BidProfile::new(&s, vec![0.0; 3]).unwrap();
        assert_eq!(integrated_heuristic(&s, &p).unwrap().allocation.slots(), &[1, 2]);
    }

    #[test]
    fn myerson_reserve_examples() {
        let (s, p) = two_ads([0.8, 0.6]);
        let out = myerson_fixed_slots(&s, &p, 1).unwrap();
        assert_eq!(out.allocation.slots(), &[0]);
        assert!((out.payments[0] - 0.6).abs() < 1e-12);
        let (s, p) = two_ads([0.8, 0.3]);
        let out = myerson_fixed_slots(&s, &p, 1).unwrap();
        assert!((out.payments[0] - 0.5).abs() < 1e-12);
        let (s, p) = two_ads([0.4, 0.3]);
        let out = myerson_fixed_slots(&s, &p, 1).unwrap();
        assert_eq!(out.allocation.slots(), &[2]);
        assert_eq!(out.revenue, 0.0);
    }
}
