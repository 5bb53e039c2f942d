//! The FairMatch pipeline: edge and terminal weights, iterative max-flow
//! candidate extraction, and final list reconstruction.
//!
//! Each iteration weighs every remaining recommendation edge by a convex
//! combination of the item's (normalized) degree and its rank, distributes
//! the total edge capacity evenly over the terminals, and solves a maximum
//! flow. Items that cannot absorb their source allotment are forced to climb
//! above the source label to return the excess; those items are recorded as
//! candidates together with their users, removed from the graph, and the
//! loop continues until an iteration selects nothing. Candidates then
//! replace the most over-exposed entries of each user's top-`n` list.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use num_integer::Integer;

use crate::error::{Error, Result};
use crate::flow_network::{
    assemble_network, build_network, FlowNetwork, ItemId, NodeKind, PairEntry, RecsView, UserId,
};
use crate::ingest::RecommendationTable;
use crate::maxflow::{run_push_relabel, MaxFlowResult};

/// Knobs for one FairMatch run.
#[derive(Debug, Clone)]
pub struct FairMatchConfig {
    /// Trade-off coefficient in `[0, 1]`: weight on item degree (visibility)
    /// versus rank (relevance).
    pub alpha: f64,
    /// Length of the incoming per-user lists.
    pub t: usize,
    /// Length of the final lists; must be smaller than `t`.
    pub n: usize,
    /// Fixed-point scale applied to fractional edge weights before rounding
    /// to integer capacities.
    pub weight_scale: u64,
    /// Iteration safety cap; `None` means one iteration per item, which the
    /// loop can never exceed anyway.
    pub max_iterations: Option<usize>,
}

impl FairMatchConfig {
    pub fn new(alpha: f64, t: usize, n: usize) -> Self {
        FairMatchConfig {
            alpha,
            t,
            n,
            weight_scale: 100,
            max_iterations: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.n == 0 || self.n >= self.t {
            return Err(Error::InvalidInput(format!(
                "need 0 < n < t, got n={} t={}",
                self.n, self.t
            )));
        }
        if self.weight_scale == 0 {
            return Err(Error::InvalidInput("weight_scale must be >= 1".into()));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidInput("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Integer capacities for one iteration's network: scaled per-edge weights
/// plus the uniform terminal capacities derived from them.
#[derive(Debug, Clone, Default)]
pub struct WeightAssignment {
    pub edge_weight: HashMap<(ItemId, UserId), u64>,
    /// Sum of all edge weights.
    pub total_capacity: u64,
    /// Total capacity distributed evenly over items (ceiling).
    pub eq_item: u64,
    /// Total capacity distributed evenly over users (ceiling).
    pub eq_user: u64,
    /// Uniform source-to-item capacity.
    pub item_terminal: u64,
    /// Uniform user-to-sink capacity.
    pub user_terminal: u64,
}

/// Pairs captured in one iteration: every `(item, user, weight)` whose item
/// finished at or above the selection label threshold.
#[derive(Debug, Clone)]
pub struct SubgraphRecord {
    pub iteration: usize,
    /// `|I| + |U| + 2` of the network this iteration solved.
    pub label_threshold: u32,
    pub pairs: Vec<SelectedPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectedPair {
    pub item: ItemId,
    pub user: UserId,
    pub weight: u64,
}

/// Candidate items per user, ordered by ascending edge weight (ties by item
/// id, then by the iteration that captured them).
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub per_user: BTreeMap<String, Vec<String>>,
}

/// Everything produced by [`fairmatch_iterate`].
#[derive(Debug, Clone)]
pub struct FairMatchRun {
    pub candidates: CandidateSet,
    pub records: Vec<SubgraphRecord>,
    pub item_names: Vec<String>,
    pub user_names: Vec<String>,
    /// Number of max-flow solves performed.
    pub iterations: usize,
    /// True when the iteration cap stopped the loop early; the candidate set
    /// is still usable, just possibly incomplete.
    pub hit_iteration_cap: bool,
}

/// Final lists plus the run diagnostics.
#[derive(Debug, Clone)]
pub struct FairMatchReranked {
    pub lists: Vec<(String, Vec<String>)>,
    pub run: FairMatchRun,
}

/// Min-max normalizes raw item degrees onto `[1, t]`, the same range ranks
/// live in. When all degrees are equal every item maps to 1.
pub fn normalize_degrees(degrees: &BTreeMap<ItemId, usize>, t: usize) -> BTreeMap<ItemId, f64> {
    let (Some(&min), Some(&max)) = (degrees.values().min(), degrees.values().max()) else {
        return BTreeMap::new();
    };
    degrees
        .iter()
        .map(|(&item, &d)| {
            let normalized = if max == min {
                1.0
            } else {
                1.0 + (d - min) as f64 * (t as f64 - 1.0) / (max - min) as f64
            };
            (item, normalized)
        })
        .collect()
}

/// Computes the scaled integer edge weights
/// `alpha * degree + (1 - alpha) * rank` for every pair; terminal fields are
/// left at zero for [`compute_terminal_weights`].
pub fn compute_edge_weights(
    pairs: &[PairEntry],
    cfg: &FairMatchConfig,
    degrees: &BTreeMap<ItemId, f64>,
) -> Result<WeightAssignment> {
    let mut wa = WeightAssignment::default();
    for pair in pairs {
        if pair.rank == 0 || pair.rank as usize > cfg.t {
            return Err(Error::InvalidInput(format!(
                "rank {} outside 1..={} for {}",
                pair.rank, cfg.t, pair.item
            )));
        }
        let degree = degrees.get(&pair.item).copied().ok_or_else(|| {
            Error::InvalidInput(format!("no degree for {}", pair.item))
        })?;
        let raw = cfg.alpha * degree + (1.0 - cfg.alpha) * pair.rank as f64;
        let scaled = ((raw * cfg.weight_scale as f64).round() as u64).max(1);
        wa.edge_weight.insert((pair.item, pair.user), scaled);
        wa.total_capacity = wa
            .total_capacity
            .checked_add(scaled)
            .ok_or_else(|| Error::Internal("total capacity overflow".into()))?;
    }
    Ok(wa)
}

/// Distributes the total edge capacity evenly over the two sides and derives
/// the uniform terminal capacities from the gcd-reduced pair.
pub fn compute_terminal_weights(
    mut wa: WeightAssignment,
    num_items: usize,
    num_users: usize,
) -> Result<WeightAssignment> {
    if num_items == 0 || num_users == 0 {
        return Err(Error::InvalidInput(
            "terminal weights need at least one item and one user".into(),
        ));
    }
    if wa.total_capacity == 0 {
        return Err(Error::InvalidInput(
            "terminal weights need positive total capacity".into(),
        ));
    }
    wa.eq_item = wa.total_capacity.div_ceil(num_items as u64);
    wa.eq_user = wa.total_capacity.div_ceil(num_users as u64);
    let g = wa.eq_item.gcd(&wa.eq_user);
    wa.item_terminal = (wa.eq_item / g).min(wa.eq_user / g);
    wa.user_terminal = wa.eq_item / g;
    Ok(wa)
}

fn weights_for_iteration(
    pairs: &[PairEntry],
    degrees: &BTreeMap<ItemId, usize>,
    cfg: &FairMatchConfig,
    num_items: usize,
    num_users: usize,
) -> Result<WeightAssignment> {
    let normalized = normalize_degrees(degrees, cfg.t);
    let wa = compute_edge_weights(pairs, cfg, &normalized)?;
    compute_terminal_weights(wa, num_items, num_users)
}

/// Collects every `(item, user, weight)` of the items whose final label
/// reached `|I| + |U| + 2` for the solved network (current counts, not the
/// original ones). Empty when no item crossed the threshold.
pub fn select_candidates(result: &MaxFlowResult, net: &FlowNetwork) -> SubgraphRecord {
    let threshold = (net.num_items() + net.num_users() + 2) as u32;
    let mut pairs = Vec::new();
    for item_node in net.items() {
        if result.labels[item_node.index()] < threshold {
            continue;
        }
        let NodeKind::Item(item) = net.kind(item_node) else {
            continue;
        };
        for arc_id in net.out_arcs(item_node) {
            let arc = net.arc(arc_id);
            if let NodeKind::User(user) = net.kind(arc.to) {
                pairs.push(SelectedPair {
                    item,
                    user,
                    weight: arc.capacity,
                });
            }
        }
    }
    SubgraphRecord {
        iteration: 0,
        label_threshold: threshold,
        pairs,
    }
}

/// Current pair set and degrees of a (possibly shrunken) network, with ranks
/// looked up from the original view.
fn pairs_and_degrees(net: &FlowNetwork, view: &RecsView) -> (Vec<PairEntry>, BTreeMap<ItemId, usize>) {
    let mut pairs = Vec::new();
    let mut degrees: BTreeMap<ItemId, usize> = BTreeMap::new();
    for item_node in net.items() {
        if let NodeKind::Item(item) = net.kind(item_node) {
            degrees.insert(item, 0);
        }
    }
    for (_, arc) in net.arcs() {
        if let (NodeKind::Item(item), NodeKind::User(user)) = (net.kind(arc.from), net.kind(arc.to))
        {
            let rank = view
                .rank(item, user)
                .expect("network arc must come from a recommendation pair");
            pairs.push(PairEntry { item, user, rank });
            *degrees.get_mut(&item).expect("live item") += 1;
        }
    }
    (pairs, degrees)
}

/// Rebuilds a network with the same live structure but fresh capacities.
fn rebuild_with_capacities(net: &FlowNetwork, wa: &WeightAssignment) -> Result<FlowNetwork> {
    let mut items = Vec::new();
    for item_node in net.items() {
        if let NodeKind::Item(id) = net.kind(item_node) {
            items.push(id);
        }
    }
    let mut users = Vec::new();
    for user_node in net.users() {
        if let NodeKind::User(id) = net.kind(user_node) {
            users.push(id);
        }
    }
    let mut edges = Vec::new();
    for (_, arc) in net.arcs() {
        if let (NodeKind::Item(item), NodeKind::User(user)) = (net.kind(arc.from), net.kind(arc.to))
        {
            let capacity = wa.edge_weight.get(&(item, user)).copied().ok_or_else(|| {
                Error::Structure(format!("missing weight for pair ({item}, {user})"))
            })?;
            edges.push((item, user, capacity));
        }
    }
    assemble_network(&items, &users, &edges, wa.item_terminal, wa.user_terminal)
}

/// Runs the full iterative loop: weigh, solve, select, remove, repeat until
/// an iteration selects nothing (or the cap is reached, which flags the run
/// and returns the partial result).
pub fn fairmatch_iterate(recs: &RecommendationTable, cfg: &FairMatchConfig) -> Result<FairMatchRun> {
    cfg.validate()?;
    if recs.t() != cfg.t {
        return Err(Error::InvalidInput(format!(
            "config t={} does not match table t={}",
            cfg.t,
            recs.t()
        )));
    }
    let view = RecsView::new(recs)?;
    let cap = cfg.max_iterations.unwrap_or(view.num_items());

    let wa = weights_for_iteration(
        view.pairs(),
        &view.degrees(),
        cfg,
        view.num_items(),
        view.num_users(),
    )?;
    let mut net = build_network(&view, &wa)?;

    let mut records: Vec<SubgraphRecord> = Vec::new();
    let mut iterations = 0;
    let mut hit_iteration_cap = false;
    loop {
        let result = run_push_relabel(&net);
        let mut record = select_candidates(&result, &net);
        record.iteration = iterations;
        iterations += 1;
        if record.pairs.is_empty() {
            break;
        }

        let selected: BTreeSet<ItemId> = record.pairs.iter().map(|p| p.item).collect();
        let nodes: Vec<_> = selected
            .iter()
            .map(|&id| {
                net.item_node(id)
                    .ok_or_else(|| Error::Internal(format!("selected {id} not in network")))
            })
            .collect::<Result<_>>()?;
        records.push(record);
        net = net.remove_items(&nodes)?;

        if net.num_items() == 0 {
            break;
        }
        if iterations >= cap {
            hit_iteration_cap = true;
            break;
        }

        let (pairs, degrees) = pairs_and_degrees(&net, &view);
        if pairs.is_empty() {
            // remaining items have no users left to reach; nothing further
            // can be selected
            break;
        }
        let wa = weights_for_iteration(&pairs, &degrees, cfg, net.num_items(), net.num_users())?;
        net = rebuild_with_capacities(&net, &wa)?;
    }

    let candidates = collect_candidates(&records, &view);
    Ok(FairMatchRun {
        candidates,
        records,
        item_names: view.item_names().to_vec(),
        user_names: view.user_names().to_vec(),
        iterations,
        hit_iteration_cap,
    })
}

fn collect_candidates(records: &[SubgraphRecord], view: &RecsView) -> CandidateSet {
    let mut acc: BTreeMap<UserId, Vec<(u64, &str, usize)>> = BTreeMap::new();
    for record in records {
        for pair in &record.pairs {
            acc.entry(pair.user).or_default().push((
                pair.weight,
                view.item_name(pair.item),
                record.iteration,
            ));
        }
    }
    let mut per_user = BTreeMap::new();
    for (user, mut entries) in acc {
        entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
        per_user.insert(
            view.user_name(user).to_string(),
            entries.into_iter().map(|(_, item, _)| item.to_string()).collect(),
        );
    }
    CandidateSet { per_user }
}

/// Counts, for every item, how many of the given lists contain it.
pub fn visibility_counts(lists: &[(String, Vec<String>)]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for (_, items) in lists {
        for item in items {
            *counts.entry(item.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Rebuilds one user's final list: the top-`n` entries are sorted by
/// visibility (ascending, ties by original rank), the `k` most visible are
/// dropped, and `k` candidates are appended in candidate order, where `k` is
/// `min(n, candidates not already in the list)`. With no usable candidates
/// the list is returned unchanged.
pub fn reconstruct_list(
    top_n: &[String],
    candidates: &[String],
    visibility: &HashMap<String, usize>,
    n: usize,
) -> Vec<String> {
    debug_assert_eq!(top_n.len(), n, "reconstruct_list expects a full top-n list");
    let in_top: HashSet<&str> = top_n.iter().map(String::as_str).collect();
    let usable: Vec<&String> = candidates
        .iter()
        .filter(|c| !in_top.contains(c.as_str()))
        .collect();
    let k = usable.len().min(n);
    if k == 0 {
        return top_n.to_vec();
    }

    let mut by_visibility: Vec<&String> = top_n.iter().collect();
    // stable sort: ties keep the original (rank) order
    by_visibility.sort_by_key(|item| visibility.get(item.as_str()).copied().unwrap_or(0));

    let mut result: Vec<String> = by_visibility[..n - k].iter().map(|s| (*s).clone()).collect();
    result.extend(usable[..k].iter().map(|s| (*s).clone()));
    result
}

/// Full re-ranking pipeline: iterate, then rebuild every user's top-`n` list
/// from the shared visibility counts and that user's candidates.
pub fn rerank_fairmatch(
    recs: &RecommendationTable,
    cfg: &FairMatchConfig,
) -> Result<FairMatchReranked> {
    let run = fairmatch_iterate(recs, cfg)?;
    let top_n: Vec<(String, Vec<String>)> = recs
        .users()
        .iter()
        .map(|user| {
            (
                user.user.clone(),
                user.entries[..cfg.n].iter().map(|e| e.item.clone()).collect(),
            )
        })
        .collect();
    let visibility = visibility_counts(&top_n);
    let empty = Vec::new();
    let lists = top_n
        .iter()
        .map(|(user, items)| {
            let candidates = run.candidates.per_user.get(user).unwrap_or(&empty);
            (
                user.clone(),
                reconstruct_list(items, candidates, &visibility, cfg.n),
            )
        })
        .collect();
    Ok(FairMatchReranked { lists, run })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{RecEntry, UserRecs};
    use crate::maxflow::{check_feasibility, max_flow_reference};

    fn ids(degrees: &[(u32, usize)]) -> BTreeMap<ItemId, usize> {
        degrees.iter().map(|&(i, d)| (ItemId(i), d)).collect()
    }

    #[test]
    fn normalize_endpoints() {
        let normalized = normalize_degrees(&ids(&[(0, 2), (1, 6)]), 10);
        assert_eq!(normalized[&ItemId(0)], 1.0);
        assert_eq!(normalized[&ItemId(1)], 10.0);
    }

    #[test]
    fn normalize_all_equal_maps_to_one() {
        let normalized = normalize_degrees(&ids(&[(0, 4), (1, 4), (2, 4)]), 10);
        assert!(normalized.values().all(|&v| v == 1.0));
    }

    #[test]
    fn normalize_midpoint() {
        let normalized = normalize_degrees(&ids(&[(0, 2), (1, 4), (2, 6)]), 10);
        assert_eq!(normalized[&ItemId(0)], 1.0);
        assert_eq!(normalized[&ItemId(1)], 5.5);
        assert_eq!(normalized[&ItemId(2)], 10.0);
    }

    fn pair(item: u32, user: u32, rank: u32) -> PairEntry {
        PairEntry {
            item: ItemId(item),
            user: UserId(user),
            rank,
        }
    }

    fn cfg_scale1(alpha: f64, t: usize) -> FairMatchConfig {
        let mut cfg = FairMatchConfig::new(alpha, t, 1.max(t / 2));
        cfg.weight_scale = 1;
        cfg
    }

    #[test]
    fn edge_weight_direct_arithmetic() {
        let degrees: BTreeMap<ItemId, f64> = [(ItemId(0), 5.0)].into();
        let wa = compute_edge_weights(&[pair(0, 0, 3)], &cfg_scale1(0.5, 10), &degrees).unwrap();
        assert_eq!(wa.edge_weight[&(ItemId(0), UserId(0))], 4);
        assert_eq!(wa.total_capacity, 4);
    }

    #[test]
    fn edge_weight_alpha_zero_is_rank_only() {
        let degrees: BTreeMap<ItemId, f64> = [(ItemId(0), 7.0)].into();
        for rank in 1..=10u32 {
            let wa =
                compute_edge_weights(&[pair(0, 0, rank)], &cfg_scale1(0.0, 10), &degrees).unwrap();
            assert_eq!(wa.edge_weight[&(ItemId(0), UserId(0))], rank as u64);
        }
    }

    #[test]
    fn edge_weight_alpha_one_is_degree_only() {
        let degrees: BTreeMap<ItemId, f64> = [(ItemId(0), 5.0)].into();
        let wa = compute_edge_weights(&[pair(0, 0, 9)], &cfg_scale1(1.0, 10), &degrees).unwrap();
        assert_eq!(wa.edge_weight[&(ItemId(0), UserId(0))], 5);
    }

    #[test]
    fn edge_weight_rank_out_of_range_errors() {
        let degrees: BTreeMap<ItemId, f64> = [(ItemId(0), 1.0)].into();
        assert!(compute_edge_weights(&[pair(0, 0, 11)], &cfg_scale1(0.5, 10), &degrees).is_err());
        assert!(compute_edge_weights(&[pair(0, 0, 0)], &cfg_scale1(0.5, 10), &degrees).is_err());
    }

    #[test]
    fn edge_weight_floors_at_one() {
        // raw weight rounds to 0 only if raw * scale < 0.5, which cannot
        // happen for raw >= 1; still, the floor is enforced
        let degrees: BTreeMap<ItemId, f64> = [(ItemId(0), 1.0)].into();
        let wa = compute_edge_weights(&[pair(0, 0, 1)], &cfg_scale1(1.0, 10), &degrees).unwrap();
        assert_eq!(wa.edge_weight[&(ItemId(0), UserId(0))], 1);
    }

    fn terminals(total: u64, items: usize, users: usize) -> WeightAssignment {
        let wa = WeightAssignment {
            total_capacity: total,
            ..Default::default()
        };
        compute_terminal_weights(wa, items, users).unwrap()
    }

    #[test]
    fn terminal_weights_worked_example() {
        let wa = terminals(100, 8, 10);
        assert_eq!(wa.eq_item, 13);
        assert_eq!(wa.eq_user, 10);
        assert_eq!(wa.item_terminal, 10);
        assert_eq!(wa.user_terminal, 13);
    }

    #[test]
    fn terminal_weights_symmetric_case() {
        // equal per-side capacities collapse to 1/1
        let wa = terminals(60, 6, 6);
        assert_eq!(wa.eq_item, wa.eq_user);
        assert_eq!(wa.item_terminal, 1);
        assert_eq!(wa.user_terminal, 1);
    }

    #[test]
    fn terminal_weights_gcd_reduction() {
        let wa = terminals(12, 3, 6);
        assert_eq!(wa.eq_item, 4);
        assert_eq!(wa.eq_user, 2);
        assert_eq!(wa.item_terminal, 1);
        assert_eq!(wa.user_terminal, 2);
    }

    #[test]
    fn terminal_weights_reject_empty_sides() {
        let wa = WeightAssignment {
            total_capacity: 10,
            ..Default::default()
        };
        assert!(compute_terminal_weights(wa.clone(), 0, 5).is_err());
        assert!(compute_terminal_weights(wa, 5, 0).is_err());
    }

    fn recs_from_lists(lists: &[(&str, &[&str])], t: usize) -> RecommendationTable {
        let users = lists
            .iter()
            .map(|(user, items)| UserRecs {
                user: user.to_string(),
                entries: items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| RecEntry {
                        item: item.to_string(),
                        rank: (i + 1) as u32,
                        score: (items.len() - i) as f64,
                    })
                    .collect(),
            })
            .collect();
        RecommendationTable::new(users, t).unwrap()
    }

    #[test]
    fn select_candidates_empty_when_everything_drains() {
        // generous user-side capacity: every item discharges fully
        let recs = recs_from_lists(&[("u1", &["a", "b"]), ("u2", &["a", "b"])], 2);
        let view = RecsView::new(&recs).unwrap();
        let mut wa = WeightAssignment::default();
        for p in view.pairs() {
            wa.edge_weight.insert((p.item, p.user), 10);
        }
        wa.item_terminal = 5;
        wa.user_terminal = 50;
        let net = build_network(&view, &wa).unwrap();
        let result = run_push_relabel(&net);
        let record = select_candidates(&result, &net);
        assert!(record.pairs.is_empty());
    }

    #[test]
    fn select_candidates_includes_capacity_deficit_item() {
        // one item gets 15 from the source but can forward only 8 + 4
        let recs = recs_from_lists(&[("u1", &["a"]), ("u2", &["a"])], 1);
        let view = RecsView::new(&recs).unwrap();
        let mut wa = WeightAssignment::default();
        wa.edge_weight.insert((ItemId(0), UserId(0)), 8);
        wa.edge_weight.insert((ItemId(0), UserId(1)), 4);
        wa.item_terminal = 15;
        wa.user_terminal = 20;
        let net = build_network(&view, &wa).unwrap();
        let result = run_push_relabel(&net);
        check_feasibility(&net, &result).unwrap();
        assert_eq!(result.value, 12);
        let record = select_candidates(&result, &net);
        assert_eq!(record.label_threshold, 1 + 2 + 2);
        let mut pairs = record.pairs.clone();
        pairs.sort_by_key(|p| p.user);
        assert_eq!(
            pairs,
            vec![
                SelectedPair { item: ItemId(0), user: UserId(0), weight: 8 },
                SelectedPair { item: ItemId(0), user: UserId(1), weight: 4 },
            ]
        );
    }

    /// Two disjoint user groups with equal item degrees: with alpha = 1 all
    /// edge weights collapse to the same scaled constant, so selection is
    /// driven purely by the capacity deficit on each side.
    #[test]
    fn iterate_equal_degrees_alpha_one_selects_by_deficit() {
        let recs = recs_from_lists(&[("u1", &["a", "b"]), ("u2", &["c", "d"])], 2);
        let mut cfg = FairMatchConfig::new(1.0, 2, 1);
        cfg.weight_scale = 100;
        let run = fairmatch_iterate(&recs, &cfg).unwrap();

        // every item has degree 1 and weight 100; C_T = 400 gives
        // eq_item = 100, eq_user = 200, gcd = 100, so both terminals
        // collapse to 1: each user absorbs one of its two supply units and
        // the other is forced back, dragging both of the user's items over
        // the label threshold. Everything is selected in one pass.
        assert_eq!(run.iterations, 1);
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.candidates.per_user["u1"], strings(&["a", "b"]));
        assert_eq!(run.candidates.per_user["u2"], strings(&["c", "d"]));
    }

    #[test]
    fn iterate_empty_selection_returns_no_candidates() {
        // full bipartite 2x2: supply (two units) matches user capacity
        // exactly, every item drains completely, nothing is selected
        let recs = recs_from_lists(&[("u1", &["a", "b"]), ("u2", &["a", "b"])], 2);
        let cfg = FairMatchConfig::new(1.0, 2, 1);
        let run = fairmatch_iterate(&recs, &cfg).unwrap();
        assert!(run.records.is_empty());
        assert!(run.candidates.per_user.is_empty());
        assert_eq!(run.iterations, 1);
        assert!(!run.hit_iteration_cap);
    }

    #[test]
    fn iterate_terminates_within_item_count_and_selections_are_disjoint() {
        let recs = crate::ingest::generate_synthetic(40, 25, 8, 1.2, 99).unwrap();
        let cfg = FairMatchConfig::new(0.5, 8, 4);
        let run = fairmatch_iterate(&recs, &cfg).unwrap();
        let view = RecsView::new(&recs).unwrap();
        assert!(run.iterations <= view.num_items());

        let mut seen_items = HashSet::new();
        let mut seen_pairs = HashSet::new();
        for record in &run.records {
            let items: BTreeSet<ItemId> = record.pairs.iter().map(|p| p.item).collect();
            for item in items {
                assert!(seen_items.insert(item), "item selected twice across iterations");
            }
            for p in &record.pairs {
                assert!(
                    seen_pairs.insert((p.item, p.user)),
                    "pair recorded twice across iterations"
                );
            }
        }
    }

    #[test]
    fn iterate_threshold_tracks_current_counts() {
        // trace a 5-item / 4-user instance across iterations: whenever items
        // have been removed, the threshold must use the shrunken counts
        let lists: &[(&str, &[&str])] = &[
            ("u1", &["a", "b", "c"]),
            ("u2", &["a", "b", "d"]),
            ("u3", &["a", "c", "e"]),
            ("u4", &["a", "d", "e"]),
        ];
        let recs = recs_from_lists(lists, 3);
        let cfg = FairMatchConfig::new(0.5, 3, 1);
        let run = fairmatch_iterate(&recs, &cfg).unwrap();
        let mut items_alive = 5usize;
        for record in &run.records {
            assert_eq!(
                record.label_threshold,
                (items_alive + 4 + 2) as u32,
                "iteration {}",
                record.iteration
            );
            let removed: BTreeSet<ItemId> = record.pairs.iter().map(|p| p.item).collect();
            items_alive -= removed.len();
        }
    }

    #[test]
    fn iterate_respects_iteration_cap() {
        let recs = crate::ingest::generate_synthetic(40, 25, 8, 1.2, 99).unwrap();
        let mut cfg = FairMatchConfig::new(0.5, 8, 4);
        let unlimited = fairmatch_iterate(&recs, &cfg).unwrap();
        if unlimited.records.len() >= 2 {
            cfg.max_iterations = Some(1);
            let capped = fairmatch_iterate(&recs, &cfg).unwrap();
            assert!(capped.hit_iteration_cap);
            assert_eq!(capped.records.len(), 1);
            assert_eq!(capped.records[0].pairs, unlimited.records[0].pairs);
        }
    }

    #[test]
    fn iterate_is_deterministic() {
        let recs = crate::ingest::generate_synthetic(30, 20, 6, 1.0, 5).unwrap();
        let cfg = FairMatchConfig::new(0.25, 6, 3);
        let a = fairmatch_iterate(&recs, &cfg).unwrap();
        let b = fairmatch_iterate(&recs, &cfg).unwrap();
        assert_eq!(a.candidates.per_user, b.candidates.per_user);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn weight_monotonicity_in_degree_and_rank() {
        let cfg = FairMatchConfig::new(0.5, 10, 5);
        for degree in 1..=9 {
            let lower: BTreeMap<ItemId, f64> = [(ItemId(0), degree as f64)].into();
            let higher: BTreeMap<ItemId, f64> = [(ItemId(0), degree as f64 + 1.0)].into();
            for rank in 1..=9u32 {
                let w_low = compute_edge_weights(&[pair(0, 0, rank)], &cfg, &lower).unwrap();
                let w_high = compute_edge_weights(&[pair(0, 0, rank)], &cfg, &higher).unwrap();
                assert!(
                    w_high.edge_weight[&(ItemId(0), UserId(0))]
                        >= w_low.edge_weight[&(ItemId(0), UserId(0))]
                );
                // rank monotonicity at fixed degree
                let w_next_rank =
                    compute_edge_weights(&[pair(0, 0, rank + 1)], &cfg, &lower).unwrap();
                assert!(
                    w_next_rank.edge_weight[&(ItemId(0), UserId(0))]
                        >= w_low.edge_weight[&(ItemId(0), UserId(0))]
                );
            }
        }
    }

    #[test]
    fn visibility_counts_examples() {
        let lists = vec![
            ("u1".to_string(), vec!["a".to_string(), "b".to_string()]),
            ("u2".to_string(), vec!["a".to_string(), "c".to_string()]),
            ("u3".to_string(), vec!["a".to_string(), "b".to_string()]),
        ];
        let counts = visibility_counts(&lists);
        assert_eq!(counts["a"], 3);
        assert_eq!(counts["b"], 2);
        assert_eq!(counts["c"], 1);
        assert_eq!(counts.get("d"), None);
    }

    fn strings(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reconstruct_drops_most_visible_and_appends_candidate() {
        let vis: HashMap<String, usize> =
            [("a".to_string(), 5), ("b".to_string(), 1), ("c".to_string(), 3)].into();
        let result = reconstruct_list(&strings(&["a", "b", "c"]), &strings(&["x"]), &vis, 3);
        assert_eq!(result, strings(&["b", "c", "x"]));
    }

    #[test]
    fn reconstruct_without_candidates_is_identity() {
        let vis: HashMap<String, usize> =
            [("a".to_string(), 5), ("b".to_string(), 1), ("c".to_string(), 3)].into();
        let result = reconstruct_list(&strings(&["a", "b", "c"]), &[], &vis, 3);
        assert_eq!(result, strings(&["a", "b", "c"]));
    }

    #[test]
    fn reconstruct_with_enough_candidates_replaces_everything() {
        let vis: HashMap<String, usize> =
            [("a".to_string(), 2), ("b".to_string(), 2), ("c".to_string(), 2)].into();
        let result = reconstruct_list(
            &strings(&["a", "b", "c"]),
            &strings(&["x", "y", "z", "w"]),
            &vis,
            3,
        );
        assert_eq!(result, strings(&["x", "y", "z"]));
    }

    #[test]
    fn reconstruct_skips_candidates_already_in_the_list() {
        let vis: HashMap<String, usize> =
            [("a".to_string(), 5), ("b".to_string(), 1), ("c".to_string(), 3)].into();
        // "c" is already present: it is skipped and does not consume a slot
        let result = reconstruct_list(&strings(&["a", "b", "c"]), &strings(&["c", "x"]), &vis, 3);
        assert_eq!(result, strings(&["b", "c", "x"]));
    }

    #[test]
    fn reconstruct_ties_keep_rank_order() {
        let vis: HashMap<String, usize> =
            [("a".to_string(), 2), ("b".to_string(), 2), ("c".to_string(), 2)].into();
        let result = reconstruct_list(&strings(&["a", "b", "c"]), &strings(&["x"]), &vis, 3);
        // all equally visible: the last-ranked item is dropped
        assert_eq!(result, strings(&["a", "b", "x"]));
    }

    #[test]
    fn rerank_output_contract() {
        let recs = crate::ingest::generate_synthetic(25, 30, 10, 1.2, 3).unwrap();
        let cfg = FairMatchConfig::new(0.5, 10, 5);
        let reranked = rerank_fairmatch(&recs, &cfg).unwrap();
        assert_eq!(reranked.lists.len(), 25);
        for (user, items) in &reranked.lists {
            assert_eq!(items.len(), 5);
            let unique: HashSet<&String> = items.iter().collect();
            assert_eq!(unique.len(), 5, "duplicates in list of {user}");
            // every item comes from the user's original t-list
            let original: HashSet<&str> = recs
                .get(user)
                .unwrap()
                .items()
                .collect();
            for item in items {
                assert!(original.contains(item.as_str()));
            }
        }
    }

    #[test]
    fn rerank_with_no_candidates_returns_top_n() {
        let recs = recs_from_lists(&[("u1", &["a", "b"]), ("u2", &["a", "b"])], 2);
        let cfg = FairMatchConfig::new(1.0, 2, 1);
        let reranked = rerank_fairmatch(&recs, &cfg).unwrap();
        assert!(reranked.run.candidates.per_user.is_empty());
        assert_eq!(reranked.lists[0].1, strings(&["a"]));
        assert_eq!(reranked.lists[1].1, strings(&["a"]));
    }

    #[test]
    fn candidate_ordering_is_by_weight_then_item() {
        let records = vec![
            SubgraphRecord {
                iteration: 0,
                label_threshold: 9,
                pairs: vec![
                    SelectedPair { item: ItemId(1), user: UserId(0), weight: 300 },
                    SelectedPair { item: ItemId(2), user: UserId(0), weight: 100 },
                ],
            },
            SubgraphRecord {
                iteration: 1,
                label_threshold: 8,
                pairs: vec![SelectedPair { item: ItemId(0), user: UserId(0), weight: 100 }],
            },
        ];
        let recs = recs_from_lists(&[("u1", &["apple", "pear", "plum"])], 3);
        let view = RecsView::new(&recs).unwrap();
        let set = collect_candidates(&records, &view);
        // the two weight-100 entries tie; "apple" sorts before "plum"
        assert_eq!(set.per_user["u1"], strings(&["apple", "plum", "pear"]));
    }

    #[test]
    fn config_validation() {
        assert!(FairMatchConfig::new(0.5, 10, 5).validate().is_ok());
        assert!(FairMatchConfig::new(-0.1, 10, 5).validate().is_err());
        assert!(FairMatchConfig::new(1.1, 10, 5).validate().is_err());
        assert!(FairMatchConfig::new(0.5, 10, 10).validate().is_err());
        assert!(FairMatchConfig::new(0.5, 10, 0).validate().is_err());
        let mut cfg = FairMatchConfig::new(0.5, 10, 5);
        cfg.weight_scale = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn iterate_network_values_match_reference_oracle() {
        // on a small instance, cross-check the first iteration's solve
        let recs = recs_from_lists(
            &[
                ("u1", &["a", "b", "c"]),
                ("u2", &["a", "b", "d"]),
                ("u3", &["a", "c", "d"]),
            ],
            3,
        );
        let cfg = FairMatchConfig::new(0.5, 3, 1);
        let view = RecsView::new(&recs).unwrap();
        let wa = weights_for_iteration(
            view.pairs(),
            &view.degrees(),
            &cfg,
            view.num_items(),
            view.num_users(),
        )
        .unwrap();
        let net = build_network(&view, &wa).unwrap();
        let result = run_push_relabel(&net);
        assert_eq!(result.value, max_flow_reference(&net));
        check_feasibility(&net, &result).unwrap();
    }
}
