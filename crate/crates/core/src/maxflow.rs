//! Push-relabel maximum flow with a bipartite preflow labeling.
//!
//! Nodes carry a label and an excess. The preflow assigns
//! `label(source) = |I| + |U| + 2`, `label(item) = 2`, `label(user) = 1`,
//! `label(sink) = 0` and saturates every source arc; active nodes are then
//! discharged in FIFO order, pushing flow only to neighbors exactly one
//! label below and relabeling to one above the smallest residual neighbor
//! when stuck. An item that cannot forward its whole excess must climb above
//! the source label to send the remainder back, which is what the candidate
//! selection downstream keys on.
//!
//! [`max_flow_reference`] is an independent breadth-first augmenting-path
//! solver (no shared flow-update code) used to cross-check flow values on
//! small networks.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::flow_network::{FlowNetwork, NodeKind, NodeRef};

/// Incidence direction of an arc relative to the node scanning it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Forward,
    Backward,
}

/// Solver working state: per-node labels and excess, per-arc flow, and the
/// FIFO queue of active nodes.
#[derive(Debug, Clone)]
pub struct PushRelabelState {
    labels: Vec<u32>,
    excess: Vec<u64>,
    flow: Vec<u64>,
    queue: VecDeque<NodeRef>,
    in_queue: Vec<bool>,
    current: Vec<usize>,
    incident: Vec<Vec<(u32, Dir)>>,
}

/// Final flow values of one solve.
#[derive(Debug, Clone)]
pub struct MaxFlowResult {
    /// Total flow arriving at the sink.
    pub value: u64,
    /// Final per-node labels, indexed by node handle.
    pub labels: Vec<u32>,
    /// Final per-arc flow, indexed by arc id.
    pub flows: Vec<u64>,
}

/// One solver step, recorded by [`run_push_relabel_traced`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowEvent {
    Push {
        from: NodeRef,
        to: NodeRef,
        amount: u64,
    },
    Relabel {
        node: NodeRef,
        old_label: u32,
        new_label: u32,
    },
}

impl PushRelabelState {
    pub fn label(&self, node: NodeRef) -> u32 {
        self.labels[node.index()]
    }

    pub fn excess(&self, node: NodeRef) -> u64 {
        self.excess[node.index()]
    }

    pub fn flow(&self, arc: u32) -> u64 {
        self.flow[arc as usize]
    }

    pub fn active_queue(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.queue.iter().copied()
    }

    fn residual(&self, net: &FlowNetwork, arc: u32, dir: Dir) -> u64 {
        match dir {
            Dir::Forward => net.arc(arc).capacity - self.flow[arc as usize],
            Dir::Backward => self.flow[arc as usize],
        }
    }

    fn head(&self, net: &FlowNetwork, arc: u32, dir: Dir) -> NodeRef {
        match dir {
            Dir::Forward => net.arc(arc).to,
            Dir::Backward => net.arc(arc).from,
        }
    }

    fn enqueue_if_active(&mut self, net: &FlowNetwork, node: NodeRef) {
        let idx = node.index();
        if self.excess[idx] == 0 || self.in_queue[idx] {
            return;
        }
        if matches!(net.kind(node), NodeKind::Source | NodeKind::Sink) {
            return;
        }
        self.in_queue[idx] = true;
        self.queue.push_back(node);
    }

    fn apply_push(
        &mut self,
        net: &FlowNetwork,
        from: NodeRef,
        arc: u32,
        dir: Dir,
        trace: &mut Option<&mut Vec<FlowEvent>>,
    ) {
        let to = self.head(net, arc, dir);
        debug_assert!(self.excess[from.index()] > 0, "push from inactive node");
        debug_assert!(self.residual(net, arc, dir) > 0, "push along saturated arc");
        debug_assert_eq!(
            self.labels[from.index()],
            self.labels[to.index()] + 1,
            "push along non-admissible arc"
        );
        let delta = self.excess[from.index()].min(self.residual(net, arc, dir));
        match dir {
            Dir::Forward => self.flow[arc as usize] += delta,
            Dir::Backward => self.flow[arc as usize] -= delta,
        }
        self.excess[from.index()] -= delta;
        self.excess[to.index()] = self.excess[to.index()]
            .checked_add(delta)
            .expect("excess overflow");
        if let Some(events) = trace.as_deref_mut() {
            events.push(FlowEvent::Push {
                from,
                to,
                amount: delta,
            });
        }
        self.enqueue_if_active(net, to);
    }

    fn apply_relabel(
        &mut self,
        net: &FlowNetwork,
        node: NodeRef,
        watchdog: u32,
        trace: &mut Option<&mut Vec<FlowEvent>>,
    ) {
        debug_assert!(self.excess[node.index()] > 0, "relabel of inactive node");
        let min_neighbor = self.incident[node.index()]
            .iter()
            .filter(|&&(arc, dir)| net.arc_is_alive(arc) && self.residual(net, arc, dir) > 0)
            .map(|&(arc, dir)| self.labels[self.head(net, arc, dir).index()])
            .min()
            .unwrap_or_else(|| {
                panic!(
                    "push-relabel invariant violated: active node {node:?} has no residual neighbor"
                )
            });
        let old_label = self.labels[node.index()];
        let new_label = min_neighbor + 1;
        assert!(
            new_label > old_label,
            "relabel must strictly increase the label of {node:?} ({old_label} -> {new_label})"
        );
        assert!(
            new_label <= watchdog,
            "label watchdog exceeded at {node:?}: {new_label} > {watchdog}"
        );
        self.labels[node.index()] = new_label;
        if let Some(events) = trace.as_deref_mut() {
            events.push(FlowEvent::Relabel {
                node,
                old_label,
                new_label,
            });
        }
    }

    /// Pushes along the residual arc from `from` to `to`. Exposed for tests;
    /// the solver itself walks arc ids directly.
    pub fn push(&mut self, net: &FlowNetwork, from: NodeRef, to: NodeRef) {
        let entry = self.incident[from.index()]
            .iter()
            .copied()
            .find(|&(arc, dir)| {
                net.arc_is_alive(arc)
                    && self.head(net, arc, dir) == to
                    && self.residual(net, arc, dir) > 0
            });
        let (arc, dir) = entry.unwrap_or_else(|| {
            panic!("push precondition violated: no residual arc {from:?} -> {to:?}")
        });
        self.apply_push(net, from, arc, dir, &mut None);
    }

    /// Relabels `from` to one above its smallest residual neighbor. Exposed
    /// for tests.
    pub fn relabel(&mut self, net: &FlowNetwork, node: NodeRef) {
        let watchdog = 2 * net.num_nodes() as u32;
        self.apply_relabel(net, node, watchdog, &mut None);
    }

    fn discharge(
        &mut self,
        net: &FlowNetwork,
        node: NodeRef,
        watchdog: u32,
        trace: &mut Option<&mut Vec<FlowEvent>>,
    ) {
        let idx = node.index();
        while self.excess[idx] > 0 {
            match self.incident[idx].get(self.current[idx]).copied() {
                Some((arc, dir)) => {
                    let admissible = net.arc_is_alive(arc)
                        && self.residual(net, arc, dir) > 0
                        && self.labels[idx] == self.labels[self.head(net, arc, dir).index()] + 1;
                    if admissible {
                        self.apply_push(net, node, arc, dir, trace);
                    } else {
                        self.current[idx] += 1;
                    }
                }
                None => {
                    self.apply_relabel(net, node, watchdog, trace);
                    self.current[idx] = 0;
                }
            }
        }
    }
}

/// Initializes the preflow: kind-based labels, every source arc saturated,
/// and all non-terminal nodes with positive excess queued in ascending
/// handle order.
pub fn preflow_init(net: &FlowNetwork) -> PushRelabelState {
    let slots = net.node_slots();
    let source_label = (net.num_items() + net.num_users() + 2) as u32;
    let mut labels = vec![0u32; slots];
    for i in 0..slots {
        let node = NodeRef(i as u32);
        if !net.is_alive(node) {
            continue;
        }
        labels[i] = match net.kind(node) {
            NodeKind::Source => source_label,
            NodeKind::Item(_) => 2,
            NodeKind::User(_) => 1,
            NodeKind::Sink => 0,
        };
    }

    let mut incident = vec![Vec::new(); slots];
    for (arc_id, arc) in net.arcs() {
        incident[arc.from.index()].push((arc_id, Dir::Forward));
        incident[arc.to.index()].push((arc_id, Dir::Backward));
    }

    let mut state = PushRelabelState {
        labels,
        excess: vec![0u64; slots],
        flow: vec![0u64; net.arc_slots()],
        queue: VecDeque::new(),
        in_queue: vec![false; slots],
        current: vec![0usize; slots],
        incident,
    };

    // The kind-based labels are valid distance labels only while no arc
    // skips more than one level downward (e.g. no item-to-sink arcs).
    for (arc_id, arc) in net.arcs() {
        if !matches!(net.kind(arc.from), NodeKind::Source) {
            assert!(
                state.labels[arc.from.index()] <= state.labels[arc.to.index()] + 1,
                "arc {arc_id} makes the preflow labeling invalid: \
                 {:?} -> {:?}",
                net.kind(arc.from),
                net.kind(arc.to),
            );
        }
    }

    for arc_id in net.out_arcs(net.source()) {
        let arc = net.arc(arc_id);
        state.flow[arc_id as usize] = arc.capacity;
        state.excess[arc.to.index()] = state.excess[arc.to.index()]
            .checked_add(arc.capacity)
            .expect("excess overflow");
    }
    for i in 0..slots {
        let node = NodeRef(i as u32);
        if net.is_alive(node) {
            state.enqueue_if_active(net, node);
        }
    }
    state
}

fn run_inner(net: &FlowNetwork, mut trace: Option<&mut Vec<FlowEvent>>) -> MaxFlowResult {
    let mut state = preflow_init(net);
    let watchdog = 2 * net.num_nodes() as u32;
    while let Some(node) = state.queue.pop_front() {
        state.in_queue[node.index()] = false;
        state.discharge(net, node, watchdog, &mut trace);
    }

    let value = state.excess[net.sink().index()];
    debug_assert_eq!(
        value,
        net.in_arcs(net.sink())
            .map(|arc| state.flow[arc as usize])
            .sum::<u64>(),
        "sink excess must equal the flow on its incoming arcs"
    );
    MaxFlowResult {
        value,
        labels: state.labels,
        flows: state.flow,
    }
}

/// Runs FIFO push-relabel to completion and returns the maximum flow value
/// together with final labels and per-arc flows.
pub fn run_push_relabel(net: &FlowNetwork) -> MaxFlowResult {
    run_inner(net, None)
}

/// Like [`run_push_relabel`], additionally recording every push and relabel.
pub fn run_push_relabel_traced(net: &FlowNetwork, trace: &mut Vec<FlowEvent>) -> MaxFlowResult {
    run_inner(net, Some(trace))
}

/// Independent maximum-flow oracle: breadth-first augmenting paths over a
/// dense residual matrix. Quadratic memory; intended for small networks in
/// tests and cross-checks.
pub fn max_flow_reference(net: &FlowNetwork) -> u64 {
    let n = net.node_slots();
    let mut residual = vec![vec![0u64; n]; n];
    for (_, arc) in net.arcs() {
        residual[arc.from.index()][arc.to.index()] += arc.capacity;
    }
    let source = net.source().index();
    let sink = net.sink().index();

    let mut total: u64 = 0;
    loop {
        // shortest augmenting path by arc count
        let mut parent = vec![usize::MAX; n];
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            for v in 0..n {
                if parent[v] == usize::MAX && residual[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        let mut bottleneck = u64::MAX;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            bottleneck = bottleneck.min(residual[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            residual[u][v] -= bottleneck;
            residual[v][u] += bottleneck;
            v = u;
        }
        total = total.checked_add(bottleneck).expect("flow value overflow");
    }
    total
}

/// Checks capacity feasibility and conservation of a finished solve:
/// `0 <= flow <= capacity` on every arc, zero excess at every non-terminal
/// node, and the flow value consistent on both terminal cuts.
pub fn check_feasibility(net: &FlowNetwork, result: &MaxFlowResult) -> Result<()> {
    let mut balance = vec![0i128; net.node_slots()];
    for (arc_id, arc) in net.arcs() {
        let flow = result.flows[arc_id as usize];
        if flow > arc.capacity {
            return Err(Error::Internal(format!(
                "arc {arc_id}: flow {flow} exceeds capacity {}",
                arc.capacity
            )));
        }
        balance[arc.from.index()] -= flow as i128;
        balance[arc.to.index()] += flow as i128;
    }
    for i in 0..net.node_slots() {
        let node = NodeRef(i as u32);
        if !net.is_alive(node) {
            continue;
        }
        match net.kind(node) {
            NodeKind::Source | NodeKind::Sink => {}
            kind => {
                if balance[i] != 0 {
                    return Err(Error::Internal(format!(
                        "conservation violated at {kind:?}: net inflow {}",
                        balance[i]
                    )));
                }
            }
        }
    }
    let into_sink = balance[net.sink().index()];
    let out_of_source = -balance[net.source().index()];
    if into_sink != result.value as i128 || out_of_source != result.value as i128 {
        return Err(Error::Internal(format!(
            "flow value {} inconsistent with terminals (sink {into_sink}, source {out_of_source})",
            result.value
        )));
    }
    Ok(())
}
