//! Exact per-profile optimizers used to certify the greedy mechanisms:
//! min-cost flow networks for the layout families and exhaustive search.
//!
//! Three network shapes are built:
//! - the budget network (gates for ads and organics feeding an item/slot
//!   bipartite graph), exact for the page budget;
//! - the split gadget for row and column sparsity, where each ad sends one
//!   unit into its slot plus one unit into every group containing the slot.
//!   Nothing forces an ad's units to travel together, so the gadget is a
//!   relaxation: its objective bounds the true optimum from above and can
//!   be strictly larger (see the tests for a one-slot instance);
//! - the layout network, a layered graph over page prefixes
//!   `(slot, ads used, recent-ad state)` that places the next best ad or the
//!   next best organic. Placing each kind in score order is optimal for any
//!   ad/organic pattern, so its single-unit min-cost flow is the exact
//!   optimum for every layout family.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mechanisms::{lambda_to_alpha, rank_order, score_profile};
use crate::model::{validate_allocation, Allocation, BidProfile, Item, LayoutConstraints, Scenario};

/// Reduced costs above `-COST_TOL` are treated as non-negative.
pub const COST_TOL: f64 = 1e-12;
/// Exhaustive search refuses instances with more candidate assignments.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkKind {
    Budget,
    RowSparseGadget,
    ColumnSparseGadget,
    Layout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowArc {
    pub tail: usize,
    pub head: usize,
    pub cap: i64,
    pub cost: f64,
}

/// An arc whose flow places `item` in `slot`. When `via` is set, that arc
/// must carry flow too (the gadget's split node toward the slot).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub arc: usize,
    pub item: usize,
    pub slot: usize,
    pub via: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub kind: NetworkKind,
    pub nodes: Vec<String>,
    pub arcs: Vec<FlowArc>,
    pub source: usize,
    pub sink: usize,
    pub placements: Vec<Placement>,
    /// Arcs that must be saturated (slot-to-sink arcs of the gadgets).
    pub mandatory: Vec<usize>,
    pub num_slots: usize,
}

impl FlowNetwork {
    pub fn new(kind: NetworkKind, num_slots: usize) -> Self {
        let mut net = Self {
            kind,
            nodes: Vec::new(),
            arcs: Vec::new(),
            source: 0,
            sink: 1,
            placements: Vec::new(),
            mandatory: Vec::new(),
            num_slots,
        };
        net.add_node("S");
        net.add_node("T");
        net
    }

    pub fn add_node(&mut self, label: impl Into<String>) -> usize {
        self.nodes.push(label.into());
        self.nodes.len() - 1
    }

    pub fn add_arc(&mut self, tail: usize, head: usize, cap: i64, cost: f64) -> usize {
        assert!(cap >= 0, "negative capacity");
        self.arcs.push(FlowArc { tail, head, cap, cost });
        self.arcs.len() - 1
    }

    /// Line format: `node <id> <label>` then `arc <tail> <head> <cap> <cost>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, label) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "node {i} {label}");
        }
        for a in &self.arcs {
            let _ = writeln!(out, "arc {} {} {} {}", a.tail, a.head, a.cap, a.cost);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralFlow {
    pub flows: Vec<i64>,
    pub value: i64,
    pub cost: f64,
}

/// Per-click objective weight `phi + lambda * g` (or `g` when `lambda` is
/// infinite); organics have `phi = 0`.
fn per_click(item: &Item, bid: f64, lambda: f64) -> Result<f64> {
    if lambda.is_infinite() {
        return Ok(item.volume);
    }
    let phi = if item.is_ad() {
        item.dist.virtual_value(bid)?
    } else {
        0.0
    };
    Ok(phi + lambda * item.volume)
}

fn unit_scores(scenario: &Scenario, profile: &BidProfile, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be non-negative, got {lambda}")));
    }
    scenario
        .items()
        .iter()
        .enumerate()
        .map(|(i, item)| Ok(per_click(item, profile.bid(i), lambda)? * item.weight))
        .collect()
}

/// Budget network: `S -> A` (cap `c`), `S -> O` (cap `K`), gates to items
/// (cap 1), item to slot (cap 1, cost `-score * beta`), slot to `T` (cap 1).
pub fn build_budget_network(scenario: &Scenario, profile: &BidProfile, lambda: f64, c: usize) -> Result<FlowNetwork> {
    let scores = unit_scores(scenario, profile, lambda)?;
    let k = scenario.num_slots();
    let mut net = FlowNetwork::new(NetworkKind::Budget, k);
    let gate_a = net.add_node("A");
    let gate_o = net.add_node("O");
    net.add_arc(net.source, gate_a, c as i64, 0.0);
    net.add_arc(net.source, gate_o, k as i64, 0.0);
    let slots: Vec<usize> = (0..k).map(|s| net.add_node(format!("p{}", s + 1))).collect();
    for (i, item) in scenario.items().iter().enumerate() {
        let (gate, name) = if item.is_ad() { (gate_a, "a") } else { (gate_o, "o") };
        let node = net.add_node(format!("{name}{i}"));
        net.add_arc(gate, node, 1, 0.0);
        for (s, &slot) in slots.iter().enumerate() {
            let arc = net.add_arc(node, slot, 1, -scores[i] * scenario.exposure(s));
            net.placements.push(Placement { arc, item: i, slot: s, via: None });
        }
    }
    for &slot in &slots {
        net.add_arc(slot, net.sink, 1, 0.0);
    }
    Ok(net)
}

// Split gadget shared by the row and column builders. `groups[g]` lists the
// slots of group g; an ad entering slot j sends `1 + d_j` units, each at
// `1 / (1 + d_j)` of its score, where `d_j` counts the groups holding j.
fn build_gadget(
    scenario: &Scenario,
    profile: &BidProfile,
    lambda: f64,
    c: usize,
    groups: &[std::ops::Range<usize>],
    kind: NetworkKind,
) -> Result<FlowNetwork> {
    let scores = unit_scores(scenario, profile, lambda)?;
    let k = scenario.num_slots();
    let mut net = FlowNetwork::new(kind, k);
    let mut depth = vec![0usize; k];
    for g in groups {
        for j in g.clone() {
            depth[j] += 1;
        }
    }
    let max_split = 1 + depth.iter().copied().max().unwrap_or(0);
    let slot_nodes: Vec<usize> = (0..k).map(|j| net.add_node(format!("s{}", j + 1))).collect();
    let organic_side: Vec<usize> = (0..k).map(|j| net.add_node(format!("s'{}", j + 1))).collect();
    let ad_side: Vec<usize> = (0..k).map(|j| net.add_node(format!("s''{}", j + 1))).collect();
    let group_nodes: Vec<usize> = (0..groups.len()).map(|g| net.add_node(format!("k{}", g + 1))).collect();
    let mut to_slot = vec![0usize; k];
    for j in 0..k {
        net.add_arc(organic_side[j], slot_nodes[j], 1, 0.0);
        to_slot[j] = net.add_arc(ad_side[j], slot_nodes[j], 1, 0.0);
        let arc = net.add_arc(slot_nodes[j], net.sink, 1, 0.0);
        net.mandatory.push(arc);
    }
    for (g, range) in groups.iter().enumerate() {
        for j in range.clone() {
            net.add_arc(ad_side[j], group_nodes[g], 1, 0.0);
        }
        net.add_arc(group_nodes[g], net.sink, c as i64, 0.0);
    }
    for (i, item) in scenario.items().iter().enumerate() {
        if item.is_ad() {
            let node = net.add_node(format!("a{i}"));
            net.add_arc(net.source, node, max_split as i64, 0.0);
            for j in 0..k {
                let split = (1 + depth[j]) as f64;
                let arc = net.add_arc(
                    node,
                    ad_side[j],
                    1 + depth[j] as i64,
                    -scores[i] * scenario.exposure(j) / split,
                );
                net.placements.push(Placement { arc, item: i, slot: j, via: Some(to_slot[j]) });
            }
        } else {
            let node = net.add_node(format!("o{i}"));
            net.add_arc(net.source, node, 1, 0.0);
            for j in 0..k {
                let arc = net.add_arc(node, organic_side[j], 1, -scores[i] * scenario.exposure(j));
                net.placements.push(Placement { arc, item: i, slot: j, via: None });
            }
        }
    }
    Ok(net)
}

/// Split gadget for row sparsity: aligned blocks of `l` slots, each capped
/// at `c` ads. A relaxation; see the module notes.
pub fn build_row_sparse_network(
    scenario: &Scenario,
    profile: &BidProfile,
    lambda: f64,
    c: usize,
    l: usize,
) -> Result<FlowNetwork> {
    LayoutConstraints::RowSparse { c, l }.validate(scenario.num_slots())?;
    let groups = crate::model::row_blocks(scenario.num_slots(), l);
    build_gadget(scenario, profile, lambda, c, &groups, NetworkKind::RowSparseGadget)
}

/// Split gadget for column sparsity: one group node per window of `l`
/// consecutive slots. A relaxation; see the module notes.
pub fn build_col_sparse_network(
    scenario: &Scenario,
    profile: &BidProfile,
    lambda: f64,
    c: usize,
    l: usize,
) -> Result<FlowNetwork> {
    LayoutConstraints::ColumnSparse { c, l }.validate(scenario.num_slots())?;
    let groups = crate::model::windows(scenario.num_slots(), l);
    build_gadget(scenario, profile, lambda, c, &groups, NetworkKind::ColumnSparseGadget)
}

/// Largest window memory the layout network will track, in slots.
const MAX_WINDOW_BITS: usize = 20;

/// Layered prefix network for any layout family; exact.
pub fn build_layout_network(
    scenario: &Scenario,
    profile: &BidProfile,
    lambda: f64,
    layout: &LayoutConstraints,
) -> Result<FlowNetwork> {
    let k = scenario.num_slots();
    layout.validate(k)?;
    let unit = unit_scores(scenario, profile, lambda)?;
    let rank = score_profile(scenario, profile, lambda_to_alpha(lambda))
        .into_iter()
        .map(|s| s.score)
        .collect::<Vec<_>>();
    let gw: Vec<f64> = scenario.items().iter().map(Item::weighted_volume).collect();
    let by_rank = |mut v: Vec<usize>| {
        v.sort_by(|&a, &b| rank_order(&rank, &gw, a, b));
        v
    };
    let ads = by_rank(scenario.ad_indices().collect());
    let organics = by_rank(scenario.organic_indices().collect());
    if let LayoutConstraints::ColumnSparse { l, .. } = *layout {
        if l > MAX_WINDOW_BITS {
            return Err(Error::TooLarge {
                count: 1u128 << (l - 1).min(127),
                limit: 1u128 << (MAX_WINDOW_BITS - 1),
            });
        }
    }

    // tag: ads in current block (row) or recent-ad bitmask (column)
    let ad_allowed = |a: usize, tag: u64| match *layout {
        LayoutConstraints::None => true,
        LayoutConstraints::Budget { c } => a < c,
        LayoutConstraints::RowSparse { c, .. } => (tag as usize) < c,
        LayoutConstraints::ColumnSparse { c, .. } => (tag.count_ones() as usize) < c,
    };
    let next_tag = |slot: usize, tag: u64, is_ad: bool| match *layout {
        LayoutConstraints::RowSparse { l, .. } => {
            if (slot + 1).is_multiple_of(l) {
                0
            } else {
                tag + u64::from(is_ad)
            }
        }
        LayoutConstraints::ColumnSparse { l, .. } => {
            let mask = (1u64 << (l - 1)) - 1;
            ((tag << 1) | u64::from(is_ad)) & mask
        }
        _ => 0,
    };

    let mut net = FlowNetwork::new(NetworkKind::Layout, k);
    let mut ids: HashMap<(usize, usize, u64), usize> = HashMap::new();
    let start = net.add_node("q1_0_0");
    ids.insert((0, 0, 0), start);
    net.add_arc(net.source, start, 1, 0.0);
    let mut frontier = vec![(0usize, 0u64)];
    for slot in 0..k {
        let mut next = Vec::new();
        for &(a, tag) in &frontier {
            let from = ids[&(slot, a, tag)];
            let mut moves = Vec::with_capacity(2);
            if a < ads.len() && ad_allowed(a, tag) {
                moves.push((ads[a], a + 1, next_tag(slot, tag, true)));
            }
            let used_organics = slot - a;
            if used_organics < organics.len() {
                moves.push((organics[used_organics], a, next_tag(slot, tag, false)));
            }
            for (item, a2, tag2) in moves {
                let key = (slot + 1, a2, tag2);
                let to = match ids.get(&key) {
                    Some(&id) => id,
                    None => {
                        let id = net.add_node(format!("q{}_{}_{}", slot + 2, a2, tag2));
                        ids.insert(key, id);
                        next.push((a2, tag2));
                        id
                    }
                };
                let arc = net.add_arc(from, to, 1, -unit[item] * scenario.exposure(slot));
                net.placements.push(Placement { arc, item, slot, via: None });
            }
        }
        frontier = next;
    }
    for &(a, tag) in &frontier {
        let from = ids[&(k, a, tag)];
        net.add_arc(from, net.sink, 1, 0.0);
    }
    Ok(net)
}

/// Paired residual edges: edge `2e` is arc `e`, edge `2e + 1` its reverse.
struct Residual {
    head: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn new(net: &FlowNetwork, costs: &[f64]) -> Self {
        let n = net.nodes.len();
        let mut r = Self {
            head: Vec::with_capacity(2 * net.arcs.len()),
            cap: Vec::with_capacity(2 * net.arcs.len()),
            cost: Vec::with_capacity(2 * net.arcs.len()),
            adj: vec![Vec::new(); n],
        };
        for (a, &c) in net.arcs.iter().zip(costs) {
            r.adj[a.tail].push(r.head.len());
            r.head.push(a.head);
            r.cap.push(a.cap);
            r.cost.push(c);
            r.adj[a.head].push(r.head.len());
            r.head.push(a.tail);
            r.cap.push(0);
            r.cost.push(-c);
        }
        r
    }

    fn tail(&self, e: usize) -> usize {
        self.head[e ^ 1]
    }

    /// Label-correcting distances from `from`; errors on a negative cycle.
    fn bellman_ford(&self, from: usize) -> Result<Vec<f64>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[from] = 0.0;
        for round in 0..=n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &self.adj[u] {
                    if self.cap[e] > 0 {
                        let d = dist[u] + self.cost[e];
                        if d < dist[self.head[e]] - COST_TOL {
                            dist[self.head[e]] = d;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return Ok(dist);
            }
            if round == n {
                break;
            }
        }
        Err(Error::Flow("network contains a negative-cost cycle".into()))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stop {
    /// Augment until the sink is unreachable.
    MaxFlow,
    /// Augment only along negative-cost paths.
    NegativePaths,
}

fn successive_shortest_paths(net: &FlowNetwork, costs: &[f64], stop: Stop) -> Result<Vec<i64>> {
    let n = net.nodes.len();
    let mut r = Residual::new(net, costs);
    let mut pot = r.bellman_ford(net.source)?;
    for p in pot.iter_mut() {
        if p.is_infinite() {
            *p = 0.0;
        }
    }
    loop {
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[net.source] = 0.0;
        heap.push(HeapEntry(0.0, net.source));
        while let Some(HeapEntry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &r.adj[u] {
                if r.cap[e] <= 0 {
                    continue;
                }
                let v = r.head[e];
                let mut reduced = r.cost[e] + pot[u] - pot[v];
                if reduced < 0.0 {
                    // rounding only; potentials keep reduced costs non-negative
                    reduced = 0.0;
                }
                let nd = d + reduced;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = e;
                    heap.push(HeapEntry(nd, v));
                }
            }
        }
        if dist[net.sink].is_infinite() {
            break;
        }
        for v in 0..n {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }
        let mut path_cost = 0.0;
        let mut push = i64::MAX;
        let mut v = net.sink;
        while v != net.source {
            let e = prev[v];
            path_cost += r.cost[e];
            push = push.min(r.cap[e]);
            v = r.tail(e);
        }
        if stop == Stop::NegativePaths && path_cost >= -COST_TOL {
            break;
        }
        let mut v = net.sink;
        while v != net.source {
            let e = prev[v];
            r.cap[e] -= push;
            r.cap[e ^ 1] += push;
            v = r.tail(e);
        }
    }
    Ok((0..net.arcs.len()).map(|a| r.cap[2 * a + 1]).collect())
}

fn finish(net: &FlowNetwork, flows: Vec<i64>) -> IntegralFlow {
    let value = net
        .arcs
        .iter()
        .zip(&flows)
        .filter(|(a, _)| a.tail == net.source)
        .map(|(_, &f)| f)
        .sum();
    let cost = net.arcs.iter().zip(&flows).map(|(a, &f)| a.cost * f as f64).sum();
    IntegralFlow { flows, value, cost }
}

/// Integral minimum-cost maximum flow by successive shortest paths with
/// node potentials seeded by one label-correcting pass.
pub fn min_cost_max_flow(net: &FlowNetwork) -> Result<IntegralFlow> {
    let costs: Vec<f64> = net.arcs.iter().map(|a| a.cost).collect();
    let flows = successive_shortest_paths(net, &costs, Stop::MaxFlow)?;
    let flow = finish(net, flows);
    if flow.value == 0 {
        return Err(Error::Flow("sink is unreachable from the source".into()));
    }
    Ok(flow)
}

/// Integral minimum-cost flow of any value.
pub fn min_cost_flow(net: &FlowNetwork) -> Result<IntegralFlow> {
    let costs: Vec<f64> = net.arcs.iter().map(|a| a.cost).collect();
    let flows = successive_shortest_paths(net, &costs, Stop::NegativePaths)?;
    Ok(finish(net, flows))
}

/// Solves a network built by this module: plain min-cost max-flow, or for
/// gadgets a min-cost flow in which every mandatory arc is saturated
/// (enforced by a bonus larger than any achievable cost).
pub fn solve_network(net: &FlowNetwork) -> Result<IntegralFlow> {
    if net.mandatory.is_empty() {
        return min_cost_max_flow(net);
    }
    let bonus = 1.0 + net.arcs.iter().map(|a| a.cost.abs() * a.cap as f64).sum::<f64>();
    let mut costs: Vec<f64> = net.arcs.iter().map(|a| a.cost).collect();
    for &a in &net.mandatory {
        costs[a] -= bonus;
    }
    let flows = successive_shortest_paths(net, &costs, Stop::NegativePaths)?;
    if let Some(&a) = net.mandatory.iter().find(|&&a| flows[a] < net.arcs[a].cap) {
        return Err(Error::Infeasible(format!(
            "arc {} -> {} cannot be saturated",
            net.nodes[net.arcs[a].tail], net.nodes[net.arcs[a].head]
        )));
    }
    Ok(finish(net, flows))
}

/// True if the residual graph of `flow` has a negative-cost cycle, i.e.
/// the flow is not cost-optimal for its value.
pub fn has_negative_residual_cycle(net: &FlowNetwork, flow: &IntegralFlow) -> bool {
    let n = net.nodes.len();
    let mut dist = vec![0.0f64; n];
    let mut edges = Vec::new();
    for (a, &f) in net.arcs.iter().zip(&flow.flows) {
        if f < a.cap {
            edges.push((a.tail, a.head, a.cost));
        }
        if f > 0 {
            edges.push((a.head, a.tail, -a.cost));
        }
    }
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, c) in &edges {
            if dist[u] + c < dist[v] - 1e-9 {
                dist[v] = dist[u] + c;
                changed = true;
            }
        }
        if !changed {
            return false;
        }
    }
    true
}

/// Reads the slot assignment off the placement arcs carrying flow.
pub fn flow_to_allocation(net: &FlowNetwork, flow: &IntegralFlow) -> Result<Allocation> {
    if flow.flows.len() != net.arcs.len() {
        return Err(Error::Flow("flow does not match the network".into()));
    }
    let mut claims: Vec<Vec<usize>> = vec![Vec::new(); net.num_slots];
    for p in &net.placements {
        if flow.flows[p.arc] >= 1 && p.via.is_none_or(|v| flow.flows[v] >= 1) && !claims[p.slot].contains(&p.item) {
            claims[p.slot].push(p.item);
        }
    }
    let mut slots: Vec<Option<usize>> = vec![None; net.num_slots];
    for (k, items) in claims.into_iter().enumerate() {
        match items.as_slice() {
            [] => {}
            [item] => slots[k] = Some(*item),
            // a gadget slot fed by several partially routed ads
            _ => {
                return Err(Error::Flow(format!(
                    "slot {} is claimed by items {items:?}",
                    k + 1
                )))
            }
        }
    }
    let assigned = slots
        .into_iter()
        .enumerate()
        .map(|(k, s)| s.ok_or_else(|| Error::Flow(format!("slot {} receives no item", k + 1))))
        .collect::<Result<Vec<_>>>()?;
    let alloc = Allocation::new(assigned);
    if let Some(i) = (0..alloc.slots().len()).find(|&k| alloc.slots()[..k].contains(&alloc.slots()[k])) {
        return Err(Error::Flow(format!("item {} occupies several slots", alloc.slots()[i])));
    }
    Ok(alloc)
}

/// The network's optimum value: the negated cost of its solution.
pub fn network_optimum(net: &FlowNetwork) -> Result<(f64, IntegralFlow)> {
    let flow = solve_network(net)?;
    Ok((-flow.cost, flow))
}

/// Objective comparison tolerance, relative to the larger magnitude.
pub fn objectives_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn permutation_count(n: usize, k: usize) -> u128 {
    ((n - k + 1)..=n).map(|x| x as u128).product()
}

/// Exhaustive maximization of `sum (phi + lambda g) w beta` over every
/// assignment satisfying `constraints`. Among optimal assignments the one
/// whose slots rank earliest (slot by slot, mechanism tie order) wins.
pub fn brute_force_optimal(
    scenario: &Scenario,
    profile: &BidProfile,
    lambda: f64,
    constraints: &LayoutConstraints,
) -> Result<Allocation> {
    let n = scenario.items().len();
    let k = scenario.num_slots();
    constraints.validate(k)?;
    let count = permutation_count(n, k);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let unit = unit_scores(scenario, profile, lambda)?;
    let rank: Vec<f64> = score_profile(scenario, profile, lambda_to_alpha(lambda))
        .into_iter()
        .map(|s| s.score)
        .collect();
    let gw: Vec<f64> = scenario.items().iter().map(Item::weighted_volume).collect();

    struct Search<'a> {
        scenario: &'a Scenario,
        constraints: &'a LayoutConstraints,
        unit: &'a [f64],
        rank: &'a [f64],
        gw: &'a [f64],
        used: Vec<bool>,
        current: Vec<usize>,
        ad_prefix: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn better(&self, value: f64) -> bool {
            match &self.best {
                None => true,
                Some((b, slots)) => {
                    if objectives_equal(value, *b) {
                        self.current
                            .iter()
                            .zip(slots)
                            .map(|(&x, &y)| rank_order(self.rank, self.gw, x, y))
                            .find(|o| *o != Ordering::Equal)
                            == Some(Ordering::Less)
                    } else {
                        value > *b
                    }
                }
            }
        }

        fn go(&mut self, slot: usize, value: f64) {
            let k = self.scenario.num_slots();
            if slot == k {
                if self.better(value) {
                    self.best = Some((value, self.current.clone()));
                }
                return;
            }
            let ad_ok = self
                .constraints
                .residual_ads(slot, &self.ad_prefix)
                .is_none_or(|r| r > 0);
            for i in 0..self.used.len() {
                let is_ad = self.scenario.items()[i].is_ad();
                if self.used[i] || (is_ad && !ad_ok) {
                    continue;
                }
                self.used[i] = true;
                self.current.push(i);
                self.ad_prefix.push(self.ad_prefix[slot] + usize::from(is_ad));
                let gain = self.unit[i] * self.scenario.exposure(slot);
                self.go(slot + 1, value + gain);
                self.ad_prefix.pop();
                self.current.pop();
                self.used[i] = false;
            }
        }
    }

    let mut search = Search {
        scenario,
        constraints,
        unit: &unit,
        rank: &rank,
        gw: &gw,
        used: vec![false; n],
        current: Vec::with_capacity(k),
        ad_prefix: vec![0],
        best: None,
    };
    search.go(0, 0.0);
    let (_, slots) = search
        .best
        .ok_or_else(|| Error::Infeasible("no assignment satisfies the layout".into()))?;
    let alloc = Allocation::new(slots);
    debug_assert!(validate_allocation(scenario, &alloc, constraints).is_valid());
    Ok(alloc)
}

/// Per-profile objective of an allocation, matching the network costs.
pub fn objective(scenario: &Scenario, profile: &BidProfile, lambda: f64, alloc: &Allocation) -> Result<f64> {
    let unit = unit_scores(scenario, profile, lambda)?;
    Ok(alloc
        .slots()
        .iter()
        .enumerate()
        .map(|(k, &i)| unit[i] * scenario.exposure(k))
        .sum())
}
