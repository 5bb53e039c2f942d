//! Capacitated directed graph over the recommendation bipartite structure.
//!
//! Left nodes are items, right nodes are users; a source feeds every item
//! and every user drains into a sink. Networks are immutable once built,
//! except for [`FlowNetwork::remove_items`], which returns a logically new
//! network with the given item nodes and their incident arcs deleted while
//! keeping node handles stable. User nodes are never removed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::fairmatch::WeightAssignment;
use crate::ingest::RecommendationTable;

/// Dense handle for a catalog item within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

/// Dense handle for a user within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "item#{}", self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "user#{}", self.0)
    }
}

/// Stable handle of a node inside one network lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef(pub(crate) u32);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Source,
    Sink,
    Item(ItemId),
    User(UserId),
}

/// Directed arc with a non-negative integer capacity (flow units).
#[derive(Debug, Clone)]
pub struct Arc {
    pub from: NodeRef,
    pub to: NodeRef,
    pub capacity: u64,
}

/// Incremental construction of a [`FlowNetwork`]. The source and sink exist
/// from the start (handles 0 and 1). The builder does not enforce the
/// bipartite shape; [`FlowNetwork::validate`] does.
pub struct NetworkBuilder {
    kinds: Vec<NodeKind>,
    arcs: Vec<Arc>,
    arc_set: HashSet<(NodeRef, NodeRef)>,
    item_index: HashMap<ItemId, NodeRef>,
    user_index: HashMap<UserId, NodeRef>,
}

impl Default for NetworkBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl NetworkBuilder {
    pub fn new() -> Self {
        NetworkBuilder {
            kinds: vec![NodeKind::Source, NodeKind::Sink],
            arcs: Vec::new(),
            arc_set: HashSet::new(),
            item_index: HashMap::new(),
            user_index: HashMap::new(),
        }
    }

    pub fn source(&self) -> NodeRef {
        NodeRef(0)
    }

    pub fn sink(&self) -> NodeRef {
        NodeRef(1)
    }

    pub fn add_item(&mut self, id: ItemId) -> Result<NodeRef> {
        if self.item_index.contains_key(&id) {
            return Err(Error::Structure(format!("{id} added twice")));
        }
        let node = NodeRef(self.kinds.len() as u32);
        self.kinds.push(NodeKind::Item(id));
        self.item_index.insert(id, node);
        Ok(node)
    }

    pub fn add_user(&mut self, id: UserId) -> Result<NodeRef> {
        if self.user_index.contains_key(&id) {
            return Err(Error::Structure(format!("{id} added twice")));
        }
        let node = NodeRef(self.kinds.len() as u32);
        self.kinds.push(NodeKind::User(id));
        self.user_index.insert(id, node);
        Ok(node)
    }

    /// Adds a directed arc. Parallel arcs are forbidden.
    pub fn add_arc(&mut self, from: NodeRef, to: NodeRef, capacity: u64) -> Result<()> {
        if from.index() >= self.kinds.len() || to.index() >= self.kinds.len() {
            return Err(Error::Structure("arc endpoint is not a node".into()));
        }
        if from == to {
            return Err(Error::Structure("self-loop arc".into()));
        }
        if !self.arc_set.insert((from, to)) {
            return Err(Error::Structure(format!(
                "parallel arc {from:?} -> {to:?}"
            )));
        }
        self.arcs.push(Arc { from, to, capacity });
        Ok(())
    }

    pub fn build(self) -> FlowNetwork {
        let node_count = self.kinds.len();
        let mut out_arcs = vec![Vec::new(); node_count];
        let mut in_arcs = vec![Vec::new(); node_count];
        for (id, arc) in self.arcs.iter().enumerate() {
            out_arcs[arc.from.index()].push(id as u32);
            in_arcs[arc.to.index()].push(id as u32);
        }
        let num_items = self.item_index.len();
        let num_users = self.user_index.len();
        let arc_count = self.arcs.len();
        FlowNetwork {
            kinds: self.kinds,
            node_alive: vec![true; node_count],
            arcs: self.arcs,
            arc_alive: vec![true; arc_count],
            out_arcs,
            in_arcs,
            item_index: self.item_index,
            user_index: self.user_index,
            num_items,
            num_users,
        }
    }
}

/// Capacitated directed graph with source, sink, item and user nodes.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    kinds: Vec<NodeKind>,
    node_alive: Vec<bool>,
    arcs: Vec<Arc>,
    arc_alive: Vec<bool>,
    out_arcs: Vec<Vec<u32>>,
    in_arcs: Vec<Vec<u32>>,
    item_index: HashMap<ItemId, NodeRef>,
    user_index: HashMap<UserId, NodeRef>,
    num_items: usize,
    num_users: usize,
}

impl FlowNetwork {
    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::new()
    }

    pub fn source(&self) -> NodeRef {
        NodeRef(0)
    }

    pub fn sink(&self) -> NodeRef {
        NodeRef(1)
    }

    /// Total node slots ever created, including removed items. Handles are
    /// indices into this range.
    pub fn node_slots(&self) -> usize {
        self.kinds.len()
    }

    /// Live node count (terminals included).
    pub fn num_nodes(&self) -> usize {
        self.num_items + self.num_users + 2
    }

    /// Live item count.
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn is_alive(&self, node: NodeRef) -> bool {
        self.node_alive.get(node.index()).copied().unwrap_or(false)
    }

    pub fn kind(&self, node: NodeRef) -> NodeKind {
        self.kinds[node.index()]
    }

    /// Live item nodes in ascending handle order.
    pub fn items(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.kinds.iter().enumerate().filter_map(|(i, kind)| {
            match kind {
                NodeKind::Item(_) if self.node_alive[i] => Some(NodeRef(i as u32)),
                _ => None,
            }
        })
    }

    /// User nodes in ascending handle order (users are never removed).
    pub fn users(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.kinds.iter().enumerate().filter_map(|(i, kind)| {
            match kind {
                NodeKind::User(_) if self.node_alive[i] => Some(NodeRef(i as u32)),
                _ => None,
            }
        })
    }

    pub fn item_node(&self, id: ItemId) -> Option<NodeRef> {
        self.item_index
            .get(&id)
            .copied()
            .filter(|n| self.is_alive(*n))
    }

    pub fn user_node(&self, id: UserId) -> Option<NodeRef> {
        self.user_index.get(&id).copied()
    }

    pub fn arc(&self, id: u32) -> &Arc {
        &self.arcs[id as usize]
    }

    pub fn arc_slots(&self) -> usize {
        self.arcs.len()
    }

    pub fn arc_is_alive(&self, id: u32) -> bool {
        self.arc_alive[id as usize]
    }

    /// Live arcs as `(arc id, arc)` in insertion order.
    pub fn arcs(&self) -> impl Iterator<Item = (u32, &Arc)> + '_ {
        self.arcs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.arc_alive[*i])
            .map(|(i, a)| (i as u32, a))
    }

    pub fn num_arcs(&self) -> usize {
        self.arc_alive.iter().filter(|&&a| a).count()
    }

    /// Live outgoing arc ids of `node`, in insertion order.
    pub fn out_arcs(&self, node: NodeRef) -> impl Iterator<Item = u32> + '_ {
        self.out_arcs[node.index()]
            .iter()
            .copied()
            .filter(|&id| self.arc_alive[id as usize])
    }

    /// Live incoming arc ids of `node`, in insertion order.
    pub fn in_arcs(&self, node: NodeRef) -> impl Iterator<Item = u32> + '_ {
        self.in_arcs[node.index()]
            .iter()
            .copied()
            .filter(|&id| self.arc_alive[id as usize])
    }

    /// Number of live item-to-user arcs out of an item node (the source arc
    /// is not counted).
    pub fn item_degree(&self, node: NodeRef) -> Result<usize> {
        if !self.is_alive(node) {
            return Err(Error::InvalidInput(format!(
                "item_degree on unknown or removed node {node:?}"
            )));
        }
        if !matches!(self.kind(node), NodeKind::Item(_)) {
            return Err(Error::InvalidInput(format!(
                "item_degree on non-item node {node:?}"
            )));
        }
        Ok(self
            .out_arcs(node)
            .filter(|&id| matches!(self.kind(self.arcs[id as usize].to), NodeKind::User(_)))
            .count())
    }

    /// Returns a new network with the given item nodes, their source arcs,
    /// and all their item-to-user arcs deleted. Handles of surviving nodes
    /// are unchanged; user nodes are always retained.
    pub fn remove_items(&self, items: &[NodeRef]) -> Result<FlowNetwork> {
        let mut net = self.clone();
        for &node in items {
            if !net.is_alive(node) {
                return Err(Error::Structure(format!(
                    "remove_items: unknown or already removed node {node:?}"
                )));
            }
            if !matches!(net.kind(node), NodeKind::Item(_)) {
                return Err(Error::Structure(format!(
                    "remove_items: {node:?} is not an item node"
                )));
            }
            net.node_alive[node.index()] = false;
            net.num_items -= 1;
            for &arc_id in net.out_arcs[node.index()]
                .iter()
                .chain(net.in_arcs[node.index()].iter())
            {
                net.arc_alive[arc_id as usize] = false;
            }
        }
        Ok(net)
    }

    /// Checks the bipartite invariants: arc kinds are source-to-item,
    /// item-to-user, or user-to-sink; every live item has exactly one source
    /// arc; every user has exactly one sink arc.
    pub fn validate(&self) -> Result<()> {
        let mut source_arcs: HashMap<NodeRef, usize> = HashMap::new();
        let mut sink_arcs: HashMap<NodeRef, usize> = HashMap::new();
        for (_, arc) in self.arcs() {
            if !self.is_alive(arc.from) || !self.is_alive(arc.to) {
                return Err(Error::Structure(
                    "live arc touches a removed node".into(),
                ));
            }
            match (self.kind(arc.from), self.kind(arc.to)) {
                (NodeKind::Source, NodeKind::Item(_)) => {
                    *source_arcs.entry(arc.to).or_insert(0) += 1;
                }
                (NodeKind::Item(_), NodeKind::User(_)) => {}
                (NodeKind::User(_), NodeKind::Sink) => {
                    *sink_arcs.entry(arc.from).or_insert(0) += 1;
                }
                (from, to) => {
                    return Err(Error::Structure(format!(
                        "arc violates bipartite shape: {from:?} -> {to:?}"
                    )));
                }
            }
        }
        for item in self.items() {
            if source_arcs.get(&item).copied().unwrap_or(0) != 1 {
                return Err(Error::Structure(format!(
                    "item {item:?} does not have exactly one source arc"
                )));
            }
        }
        for user in self.users() {
            if sink_arcs.get(&user).copied().unwrap_or(0) != 1 {
                return Err(Error::Structure(format!(
                    "user {user:?} does not have exactly one sink arc"
                )));
            }
        }
        Ok(())
    }
}

/// Interned, de-duplicated view of a recommendation table: dense item/user
/// handles plus the `(item, user, rank)` pairs that define the bipartite
/// graph. Duplicate `(item, user)` pairs collapse to the best (lowest) rank.
#[derive(Debug, Clone)]
pub struct RecsView {
    item_names: Vec<String>,
    user_names: Vec<String>,
    item_ids: HashMap<String, ItemId>,
    pairs: Vec<PairEntry>,
    rank_by_pair: HashMap<(ItemId, UserId), u32>,
    t: usize,
    duplicate_pairs: usize,
}

/// One de-duplicated recommendation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairEntry {
    pub item: ItemId,
    pub user: UserId,
    pub rank: u32,
}

impl RecsView {
    pub fn new(recs: &RecommendationTable) -> Result<Self> {
        if recs.is_empty() {
            return Err(Error::InvalidInput("recommendation table is empty".into()));
        }
        let mut item_names = Vec::new();
        let mut item_ids: HashMap<String, ItemId> = HashMap::new();
        let mut user_names = Vec::new();
        let mut pairs = Vec::new();
        let mut rank_by_pair: HashMap<(ItemId, UserId), u32> = HashMap::new();
        let mut duplicate_pairs = 0;

        for (user_idx, user) in recs.users().iter().enumerate() {
            let user_id = UserId(user_idx as u32);
            user_names.push(user.user.clone());
            // entries are rank-sorted, so the first occurrence of an item
            // carries its best rank
            for entry in &user.entries {
                let item_id = match item_ids.get(&entry.item) {
                    Some(&id) => id,
                    None => {
                        let id = ItemId(item_names.len() as u32);
                        item_names.push(entry.item.clone());
                        item_ids.insert(entry.item.clone(), id);
                        id
                    }
                };
                if rank_by_pair.contains_key(&(item_id, user_id)) {
                    duplicate_pairs += 1;
                    continue;
                }
                rank_by_pair.insert((item_id, user_id), entry.rank);
                pairs.push(PairEntry {
                    item: item_id,
                    user: user_id,
                    rank: entry.rank,
                });
            }
        }
        Ok(RecsView {
            item_names,
            user_names,
            item_ids,
            pairs,
            rank_by_pair,
            t: recs.t(),
            duplicate_pairs,
        })
    }

    pub fn num_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_names.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// De-duplicated pairs in user-major, rank-ascending order.
    pub fn pairs(&self) -> &[PairEntry] {
        &self.pairs
    }

    /// Pairs that were collapsed because an item occurred twice in one list.
    pub fn duplicate_pairs(&self) -> usize {
        self.duplicate_pairs
    }

    pub fn rank(&self, item: ItemId, user: UserId) -> Option<u32> {
        self.rank_by_pair.get(&(item, user)).copied()
    }

    pub fn item_name(&self, id: ItemId) -> &str {
        &self.item_names[id.0 as usize]
    }

    pub fn user_name(&self, id: UserId) -> &str {
        &self.user_names[id.0 as usize]
    }

    pub fn item_id(&self, name: &str) -> Option<ItemId> {
        self.item_ids.get(name).copied()
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn user_names(&self) -> &[String] {
        &self.user_names
    }

    /// Item degrees (number of users each item is recommended to).
    pub fn degrees(&self) -> BTreeMap<ItemId, usize> {
        let mut degrees: BTreeMap<ItemId, usize> = BTreeMap::new();
        for item_idx in 0..self.item_names.len() {
            degrees.insert(ItemId(item_idx as u32), 0);
        }
        for pair in &self.pairs {
            *degrees.get_mut(&pair.item).expect("interned item") += 1;
        }
        degrees
    }
}

/// Assembles a network from explicit parts: items and users to create, the
/// item-to-user arcs with capacities, and uniform terminal capacities.
pub(crate) fn assemble_network(
    items: &[ItemId],
    users: &[UserId],
    edges: &[(ItemId, UserId, u64)],
    item_terminal: u64,
    user_terminal: u64,
) -> Result<FlowNetwork> {
    let mut builder = NetworkBuilder::new();
    let source = builder.source();
    let sink = builder.sink();
    let mut item_nodes = HashMap::new();
    for &id in items {
        let node = builder.add_item(id)?;
        builder.add_arc(source, node, item_terminal)?;
        item_nodes.insert(id, node);
    }
    let mut user_nodes = HashMap::new();
    for &id in users {
        let node = builder.add_user(id)?;
        user_nodes.insert(id, node);
    }
    for &(item, user, capacity) in edges {
        let &item_node = item_nodes
            .get(&item)
            .ok_or_else(|| Error::Structure(format!("edge references unknown {item}")))?;
        let &user_node = user_nodes
            .get(&user)
            .ok_or_else(|| Error::Structure(format!("edge references unknown {user}")))?;
        builder.add_arc(item_node, user_node, capacity)?;
    }
    for &id in users {
        builder.add_arc(user_nodes[&id], sink, user_terminal)?;
    }
    Ok(builder.build())
}

/// Builds the FairMatch flow network for a recommendation view: one arc per
/// de-duplicated `(item, user)` pair with its weight as capacity, plus the
/// uniform source and sink arcs from the weight assignment.
pub fn build_network(view: &RecsView, weights: &WeightAssignment) -> Result<FlowNetwork> {
    let items: Vec<ItemId> = (0..view.num_items() as u32).map(ItemId).collect();
    let users: Vec<UserId> = (0..view.num_users() as u32).map(UserId).collect();
    let mut edges = Vec::with_capacity(view.pairs().len());
    for pair in view.pairs() {
        let capacity = weights
            .edge_weight
            .get(&(pair.item, pair.user))
            .copied()
            .ok_or_else(|| {
                Error::Structure(format!(
                    "missing weight for recommendation pair ({}, {})",
                    view.item_name(pair.item),
                    view.user_name(pair.user)
                ))
            })?;
        edges.push((pair.item, pair.user, capacity));
    }
    let net = assemble_network(
        &items,
        &users,
        &edges,
        weights.item_terminal,
        weights.user_terminal,
    )?;
    net.validate()?;
    Ok(net)
}
