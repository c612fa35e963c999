//! Auction instance data model: items, slots, bid profiles, allocations and
//! realized outcomes.
//!
//! Items are addressed by their position in [`Scenario::items`]; that dense
//! index is the item id used for tie-breaking. The `label` of an item is the
//! external id carried by scenario files.

use std::collections::HashSet;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{ValueDistribution, REGULARITY_GRID};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Ad,
    Organic,
}

/// A page slot. `index` is 1-based; `exposure` is the slot's click factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slot {
    pub index: usize,
    pub exposure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub label: u64,
    pub kind: ItemKind,
    /// Quality factor; the click-through rate in slot k is `weight * exposure_k`.
    pub weight: f64,
    /// Expected merchandise volume per click.
    pub volume: f64,
    pub dist: ValueDistribution,
}

impl Item {
    pub fn ad(label: u64, weight: f64, volume: f64, dist: ValueDistribution) -> Self {
        Self {
            label,
            kind: ItemKind::Ad,
            weight,
            volume,
            dist,
        }
    }

    pub fn organic(label: u64, weight: f64, volume: f64) -> Self {
        Self {
            label,
            kind: ItemKind::Organic,
            weight,
            volume,
            dist: ValueDistribution::DegenerateZero,
        }
    }

    pub fn is_ad(&self) -> bool {
        self.kind == ItemKind::Ad
    }

    /// `volume * weight`, the secondary ranking key.
    pub fn weighted_volume(&self) -> f64 {
        self.volume * self.weight
    }
}

/// Separable click-through rate `w_i * beta_k`.
pub fn ctr(item: &Item, slot: &Slot) -> f64 {
    item.weight * slot.exposure
}

/// An auction instance: ad and organic items competing for `K` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    items: Vec<Item>,
    slots: Vec<Slot>,
}

impl Scenario {
    /// Validates and builds a scenario. Exposures must be strictly decreasing
    /// and positive, and there must be at least as many items as slots. Ad
    /// distributions must be regular.
    pub fn new(items: Vec<Item>, exposures: Vec<f64>) -> Result<Self> {
        let scenario = Self::new_unchecked_regularity(items, exposures)?;
        for (i, item) in scenario.items.iter().enumerate() {
            if item.is_ad() && !item.dist.check_regularity(REGULARITY_GRID) {
                return Err(Error::Scenario(format!(
                    "item {} (label {}) has a non-regular value distribution",
                    i, item.label
                )));
            }
        }
        Ok(scenario)
    }

    // Everything except the regularity scan, which dominates construction
    // cost for lognormal ads.
    pub(crate) fn new_unchecked_regularity(items: Vec<Item>, exposures: Vec<f64>) -> Result<Self> {
        if exposures.is_empty() {
            return Err(Error::Scenario("at least one slot is required".into()));
        }
        for (k, pair) in exposures.windows(2).enumerate() {
            if !(pair[1] < pair[0]) {
                return Err(Error::Scenario(format!(
                    "slot exposures must be strictly decreasing (slot {} = {}, slot {} = {})",
                    k + 1,
                    pair[0],
                    k + 2,
                    pair[1]
                )));
            }
        }
        let last = exposures[exposures.len() - 1];
        if !(last > 0.0) || !exposures[0].is_finite() {
            return Err(Error::Scenario("slot exposures must be positive and finite".into()));
        }
        if items.len() < exposures.len() {
            return Err(Error::Scenario(format!(
                "{} items cannot fill {} slots",
                items.len(),
                exposures.len()
            )));
        }
        let mut labels = HashSet::new();
        for item in &items {
            if !labels.insert(item.label) {
                return Err(Error::Scenario(format!("duplicate item id {}", item.label)));
            }
            if !(item.weight.is_finite() && item.weight > 0.0) {
                return Err(Error::Scenario(format!(
                    "item {} needs a positive finite weight, got {}",
                    item.label, item.weight
                )));
            }
            if !(item.volume.is_finite() && item.volume >= 0.0) {
                return Err(Error::Scenario(format!(
                    "item {} needs a non-negative finite volume, got {}",
                    item.label, item.volume
                )));
            }
            match item.kind {
                ItemKind::Organic if item.dist != ValueDistribution::DegenerateZero => {
                    return Err(Error::Scenario(format!(
                        "organic item {} must have a degenerate-zero value distribution",
                        item.label
                    )))
                }
                ItemKind::Ad if item.dist == ValueDistribution::DegenerateZero => {
                    return Err(Error::Scenario(format!(
                        "ad item {} needs a non-degenerate value distribution",
                        item.label
                    )))
                }
                _ => {}
            }
        }
        let slots = exposures
            .into_iter()
            .enumerate()
            .map(|(k, exposure)| Slot {
                index: k + 1,
                exposure,
            })
            .collect();
        Ok(Self { items, slots })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, index: usize) -> Result<&Item> {
        self.items.get(index).ok_or(Error::UnknownItem(index))
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn exposure(&self, slot: usize) -> f64 {
        self.slots[slot].exposure
    }

    pub fn exposures(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.exposure).collect()
    }

    pub fn ad_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().enumerate().filter(|(_, it)| it.is_ad()).map(|(i, _)| i)
    }

    pub fn organic_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().enumerate().filter(|(_, it)| !it.is_ad()).map(|(i, _)| i)
    }

    pub fn num_ads(&self) -> usize {
        self.ad_indices().count()
    }

    pub fn num_organics(&self) -> usize {
        self.items.len() - self.num_ads()
    }

    pub fn index_of_label(&self, label: u64) -> Option<usize> {
        self.items.iter().position(|it| it.label == label)
    }

    /// Copy with every slot exposure multiplied by `factor`.
    pub fn scale_exposures(&self, factor: f64) -> Result<Self> {
        Self::new_unchecked_regularity(
            self.items.clone(),
            self.slots.iter().map(|s| s.exposure * factor).collect(),
        )
    }

    /// Copy with item weights replaced. Distributions are reused unchanged.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.items.len() {
            return Err(Error::Scenario(format!(
                "expected {} weights, got {}",
                self.items.len(),
                weights.len()
            )));
        }
        let items = self
            .items
            .iter()
            .zip(weights)
            .map(|(it, &w)| Item { weight: w, ..it.clone() })
            .collect();
        Self::new_unchecked_regularity(items, self.exposures())
    }
}

/// Reported per-click values, one entry per item (organics report 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidProfile {
    bids: Vec<f64>,
}

impl BidProfile {
    pub fn new(scenario: &Scenario, bids: Vec<f64>) -> Result<Self> {
        if bids.len() != scenario.items().len() {
            return Err(Error::InvalidParameter(format!(
                "bid profile has {} entries for {} items",
                bids.len(),
                scenario.items().len()
            )));
        }
        for (item, &b) in scenario.items().iter().zip(&bids) {
            match item.kind {
                ItemKind::Organic if b != 0.0 => {
                    return Err(Error::InvalidParameter(format!(
                        "organic item {} must bid 0, got {b}",
                        item.label
                    )))
                }
                ItemKind::Ad if !(b >= 0.0 && b <= item.dist.upper()) => {
                    return Err(Error::Domain {
                        value: b,
                        upper: item.dist.upper(),
                    })
                }
                _ => {}
            }
        }
        Ok(Self { bids })
    }

    /// Builds a profile from ad bids listed in scenario order.
    pub fn from_ad_bids(scenario: &Scenario, ad_bids: &[f64]) -> Result<Self> {
        if ad_bids.len() != scenario.num_ads() {
            return Err(Error::InvalidParameter(format!(
                "expected {} ad bids, got {}",
                scenario.num_ads(),
                ad_bids.len()
            )));
        }
        let mut bids = vec![0.0; scenario.items().len()];
        for (i, &b) in scenario.ad_indices().zip(ad_bids) {
            bids[i] = b;
        }
        Self::new(scenario, bids)
    }

    /// Draws every ad value independently from its distribution.
    pub fn sample<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Self {
        let bids = scenario
            .items()
            .iter()
            .map(|it| match it.kind {
                ItemKind::Ad => it.dist.sample(rng),
                ItemKind::Organic => 0.0,
            })
            .collect();
        Self { bids }
    }

    pub fn bids(&self) -> &[f64] {
        &self.bids
    }

    pub fn bid(&self, item: usize) -> f64 {
        self.bids[item]
    }

    /// Copy with one item's bid replaced; the value is not range-checked.
    pub fn with_bid(&self, item: usize, bid: f64) -> Self {
        let mut bids = self.bids.clone();
        bids[item] = bid;
        Self { bids }
    }
}

/// A total assignment of slots to distinct items: `slots[k]` is the item
/// shown in slot `k` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    slots: Vec<usize>,
}

impl Allocation {
    pub fn new(slots: Vec<usize>) -> Self {
        Self { slots }
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn item_at(&self, slot: usize) -> usize {
        self.slots[slot]
    }

    /// 0-based slot holding `item`, if any.
    pub fn slot_of(&self, item: usize) -> Option<usize> {
        self.slots.iter().position(|&i| i == item)
    }

    /// Indicator `x_ik`.
    pub fn indicator(&self, item: usize, slot: usize) -> bool {
        self.slots.get(slot) == Some(&item)
    }

    /// Exposure `x_i = sum_k x_ik beta_k`.
    pub fn exposure_of(&self, scenario: &Scenario, item: usize) -> f64 {
        self.slot_of(item).map_or(0.0, |k| scenario.exposure(k))
    }

    pub fn num_ads(&self, scenario: &Scenario) -> usize {
        self.slots.iter().filter(|&&i| scenario.items()[i].is_ad()).count()
    }

    fn check_structure(&self, scenario: &Scenario) -> Result<()> {
        let report = validate_allocation(scenario, self, &LayoutConstraints::None);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::Infeasible(report.to_string()))
        }
    }
}

/// Realized allocation with per-click payments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub allocation: Allocation,
    /// Per-click payment for every item; organics always pay 0.
    pub payments: Vec<f64>,
    pub revenue: f64,
    pub gmv: f64,
}

impl Outcome {
    pub fn new(scenario: &Scenario, allocation: Allocation, payments: Vec<f64>) -> Result<Self> {
        if payments.len() != scenario.items().len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} payments, got {}",
                scenario.items().len(),
                payments.len()
            )));
        }
        if let Some(i) = scenario
            .organic_indices()
            .find(|&i| payments[i] != 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "organic item {i} has a non-zero payment"
            )));
        }
        let gmv = realized_gmv(scenario, &allocation)?;
        let mut outcome = Self {
            allocation,
            payments,
            revenue: 0.0,
            gmv,
        };
        outcome.revenue = realized_revenue(scenario, &outcome);
        Ok(outcome)
    }

    /// Expected charge `p_i * w_i * x_i` for one item.
    pub fn actual_payment(&self, scenario: &Scenario, item: usize) -> f64 {
        self.payments[item] * scenario.items()[item].weight * self.allocation.exposure_of(scenario, item)
    }
}

/// `sum_i g_i w_i beta_{k(i)}` over placed items.
pub fn realized_gmv(scenario: &Scenario, alloc: &Allocation) -> Result<f64> {
    alloc.check_structure(scenario)?;
    Ok(alloc
        .slots()
        .iter()
        .enumerate()
        .map(|(k, &i)| scenario.items()[i].weighted_volume() * scenario.exposure(k))
        .sum())
}

/// `sum_{i in A} p_i w_i beta_{k(i)}` over placed ads.
pub fn realized_revenue(scenario: &Scenario, outcome: &Outcome) -> f64 {
    outcome
        .allocation
        .slots()
        .iter()
        .enumerate()
        .filter(|(_, &i)| scenario.items()[i].is_ad())
        .map(|(k, &i)| outcome.payments[i] * scenario.items()[i].weight * scenario.exposure(k))
        .sum()
}

/// Page-layout restriction on where ads may appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
#[derive(Default)]
pub enum LayoutConstraints {
    #[default]
    None,
    /// At most `c` ads on the page.
    Budget { c: usize },
    /// At most `c` ads in each aligned block of `l` slots.
    RowSparse { c: usize, l: usize },
    /// At most `c` ads in every window of `l` consecutive slots.
    ColumnSparse { c: usize, l: usize },
}


impl LayoutConstraints {
    pub fn family_name(&self) -> &'static str {
        match self {
            Self::None => "unconstrained",
            Self::Budget { .. } => "budget",
            Self::RowSparse { .. } => "row-sparse",
            Self::ColumnSparse { .. } => "column-sparse",
        }
    }

    pub fn validate(&self, num_slots: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            Self::None => Ok(()),
            Self::Budget { c } if c < 1 => bad(format!("ad budget must be at least 1, got {c}")),
            Self::Budget { .. } => Ok(()),
            Self::RowSparse { c, l } | Self::ColumnSparse { c, l } => {
                if c < 1 {
                    bad(format!("sparsity budget must be at least 1, got {c}"))
                } else if l < 1 || l > num_slots {
                    bad(format!("sparsity span must lie in [1, {num_slots}], got {l}"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Remaining ad capacity for `slot` (0-based) given which earlier slots
    /// hold ads. `None` means unlimited.
    pub fn residual_ads(&self, slot: usize, ad_prefix: &[usize]) -> Option<usize> {
        // ad_prefix[j] = number of ads among slots 0..j
        let ads_in = |r: Range<usize>| ad_prefix[r.end] - ad_prefix[r.start];
        match *self {
            Self::None => None,
            Self::Budget { c } => Some(c.saturating_sub(ads_in(0..slot))),
            Self::RowSparse { c, l } => {
                let start = (slot / l) * l;
                Some(c.saturating_sub(ads_in(start..slot)))
            }
            Self::ColumnSparse { c, l } => {
                let start = (slot + 1).saturating_sub(l);
                Some(c.saturating_sub(ads_in(start..slot)))
            }
        }
    }

    /// Slot groups whose ad count is capped: the page (budget), aligned
    /// blocks (row) or sliding windows (column). Empty when unconstrained.
    pub fn groups(&self, num_slots: usize) -> Vec<Range<usize>> {
        match *self {
            Self::None => Vec::new(),
            Self::Budget { .. } => vec![0..num_slots],
            Self::RowSparse { l, .. } => row_blocks(num_slots, l),
            Self::ColumnSparse { l, .. } => windows(num_slots, l),
        }
    }

    pub fn cap(&self) -> Option<usize> {
        match *self {
            Self::None => None,
            Self::Budget { c } | Self::RowSparse { c, .. } | Self::ColumnSparse { c, .. } => Some(c),
        }
    }
}

/// Aligned blocks `[0, l), [l, 2l), ...`; the last may be shorter.
pub fn row_blocks(num_slots: usize, l: usize) -> Vec<Range<usize>> {
    (0..num_slots)
        .step_by(l.max(1))
        .map(|s| s..(s + l).min(num_slots))
        .collect()
}

/// Every run of `l` consecutive slots; a single window when `l >= K`.
pub fn windows(num_slots: usize, l: usize) -> Vec<Range<usize>> {
    let l = l.max(1);
    if l >= num_slots {
        return vec![0..num_slots];
    }
    (0..=num_slots - l).map(|s| s..s + l).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    SlotCount { expected: usize, found: usize },
    UnknownItem { slot: usize, item: usize },
    DuplicateItem { item: usize, slots: Vec<usize> },
    AdBudget { ads: usize, c: usize },
    RowBlock { start: usize, end: usize, ads: usize, c: usize },
    Window { start: usize, end: usize, ads: usize, c: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Slot numbers are reported 1-based.
        match self {
            Self::SlotCount { expected, found } => {
                write!(f, "{found} slots assigned, expected {expected}")
            }
            Self::UnknownItem { slot, item } => write!(f, "slot {} holds unknown item {item}", slot + 1),
            Self::DuplicateItem { item, slots } => {
                write!(f, "item {item} appears in {} slots", slots.len())
            }
            Self::AdBudget { ads, c } => write!(f, "{ads} ads exceed the page budget {c}"),
            Self::RowBlock { start, end, ads, c } => {
                write!(f, "{ads} ads in block {}..={} exceed {c}", start + 1, end)
            }
            Self::Window { start, end, ads, c } => {
                write!(f, "{ads} ads in window {}..={} exceed {c}", start + 1, end)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Lists every constraint the allocation breaks.
pub fn validate_allocation(
    scenario: &Scenario,
    alloc: &Allocation,
    constraints: &LayoutConstraints,
) -> ValidationReport {
    let mut violations = Vec::new();
    let k = scenario.num_slots();
    let n = scenario.items().len();
    if alloc.slots().len() != k {
        violations.push(Violation::SlotCount {
            expected: k,
            found: alloc.slots().len(),
        });
    }
    let mut seen: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (slot, &item) in alloc.slots().iter().enumerate() {
        if item >= n {
            violations.push(Violation::UnknownItem { slot, item });
        } else {
            seen[item].push(slot);
        }
    }
    for (item, slots) in seen.into_iter().enumerate() {
        if slots.len() > 1 {
            violations.push(Violation::DuplicateItem { item, slots });
        }
    }
    let is_ad: Vec<bool> = alloc
        .slots()
        .iter()
        .map(|&i| i < n && scenario.items()[i].is_ad())
        .collect();
    let count = |r: &Range<usize>| {
        is_ad[r.start.min(is_ad.len())..r.end.min(is_ad.len())]
            .iter()
            .filter(|&&a| a)
            .count()
    };
    match *constraints {
        LayoutConstraints::None => {}
        LayoutConstraints::Budget { c } => {
            let ads = count(&(0..is_ad.len()));
            if ads > c {
                violations.push(Violation::AdBudget { ads, c });
            }
        }
        LayoutConstraints::RowSparse { c, l } => {
            for r in row_blocks(is_ad.len(), l) {
                let ads = count(&r);
                if ads > c {
                    violations.push(Violation::RowBlock {
                        start: r.start,
                        end: r.end,
                        ads,
                        c,
                    });
                }
            }
        }
        LayoutConstraints::ColumnSparse { c, l } => {
            for r in windows(is_ad.len(), l) {
                let ads = count(&r);
                if ads > c {
                    violations.push(Violation::Window {
                        start: r.start,
                        end: r.end,
                        ads,
                        c,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// One item as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: u64,
    pub kind: ItemKind,
    pub w: f64,
    pub g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<ValueDistribution>,
    /// Optional reported value, used when a file pins a bid profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid: Option<f64>,
}

/// Scenario file: slot exposures, items, optional layout constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub slots: Vec<f64>,
    pub items: Vec<ItemRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<LayoutConstraints>,
}

impl ScenarioDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let items = self
            .items
            .iter()
            .map(|r| match r.kind {
                ItemKind::Ad => {
                    let dist = r.dist.clone().ok_or_else(|| {
                        Error::Scenario(format!("ad item {} has no value distribution", r.id))
                    })?;
                    Ok(Item::ad(r.id, r.w, r.g, dist))
                }
                ItemKind::Organic => {
                    let mut item = Item::organic(r.id, r.w, r.g);
                    if let Some(d) = &r.dist {
                        item.dist = d.clone();
                    }
                    Ok(item)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let scenario = Scenario::new(items, self.slots.clone())?;
        if let Some(c) = &self.constraints {
            c.validate(scenario.num_slots())?;
        }
        Ok(scenario)
    }

    /// The pinned bid profile, if every ad carries a `bid`.
    pub fn bid_profile(&self, scenario: &Scenario) -> Result<Option<BidProfile>> {
        let ad_bids: Option<Vec<f64>> = self
            .items
            .iter()
            .filter(|r| r.kind == ItemKind::Ad)
            .map(|r| r.bid)
            .collect();
        ad_bids
            .map(|b| BidProfile::from_ad_bids(scenario, &b))
            .transpose()
    }

    pub fn from_scenario(scenario: &Scenario, constraints: Option<LayoutConstraints>) -> Self {
        Self {
            slots: scenario.exposures(),
            items: scenario
                .items()
                .iter()
                .map(|it| ItemRecord {
                    id: it.label,
                    kind: it.kind,
                    w: it.weight,
                    g: it.volume,
                    dist: it.is_ad().then(|| it.dist.clone()),
                    bid: None,
                })
                .collect(),
            constraints,
        }
    }
}
