//! Adversarial graph schedules that slow down information flow between the
//! type-1 and type-2 vertices while changing few edges per round.
//!
//! The schedule keeps the position tree of the generator fixed and moves
//! vertices between positions: swapping two vertices exchanges their
//! neighborhoods. Each round
//!
//! 1. collects the frontier `U` (good vertices adjacent to a bad one) in the
//!    current graph; these become bad after communicating over it,
//! 2. relocates every frontier vertex to the candidate position chosen by the
//!    scheme, so the bad positions keep their shape,
//! 3. emits the resulting graph for the next round.
//!
//! Once a type-2 vertex turns bad the phase ends: the source and target sets
//! trade places, every child order is reversed and the bad set is reset to the
//! new source. Candidates never come from the current target set, so target
//! vertices never move and two phases restore the position-level state.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphcore::{edge_diff, Graph};
use crate::topologies::{
    bethe_tree, binary_tree, nested_path_tree, partition_roles, Family, OrderedTree, RolePartition,
};
use crate::worstcase::{extends_support, ChainProblem, KappaScheme};

/// The three graph-changing schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Scheme {
    /// Bethe tree `B_{d,k}` with `⌊d/t⌋` root subtrees per role.
    Poly { d: usize, k: usize, t: usize },
    /// Binary tree of depth `k`.
    Log { k: usize },
    /// Nested path tree `H_{d,k}`.
    Const { d: usize, k: usize },
}

/// How a scheme picks the position that absorbs a newly bad vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateRule {
    /// Walk down from the root, always into the lowest-ordered child whose
    /// subtree still holds an eligible position.
    Descent,
    /// The smallest eligible position in the nested linear order.
    LinearOrder,
}

impl Scheme {
    /// Per-round bound on the edge symmetric difference.
    pub fn edge_budget(&self) -> usize {
        match *self {
            Scheme::Poly { d, k, .. } => 4 * (k - 1) * (d + 1),
            Scheme::Log { k } => 12 * (k - 1),
            Scheme::Const { d, .. } => 12 * (d - 1),
        }
    }

    /// Bound on the frontier size `|U|` of every round, not counting target
    /// vertices reached in the last round of a phase.
    pub fn frontier_limit(&self) -> usize {
        match *self {
            Scheme::Poly { k, .. } | Scheme::Log { k } => k - 1,
            Scheme::Const { d, .. } => d,
        }
    }

    /// Lower bound on the phase length given the neutral set size.
    pub fn flow_floor(&self, neutral: usize) -> usize {
        match *self {
            Scheme::Poly { k, .. } | Scheme::Log { k } => neutral / (k - 1) + 1,
            Scheme::Const { d, .. } => neutral / d + 1,
        }
    }

    pub fn candidate_rule(&self) -> CandidateRule {
        match self {
            Scheme::Const { .. } => CandidateRule::LinearOrder,
            _ => CandidateRule::Descent,
        }
    }

    pub fn kappa_scheme(&self) -> KappaScheme {
        match *self {
            Scheme::Poly { t, .. } => KappaScheme::Poly { t },
            Scheme::Log { .. } => KappaScheme::Log,
            Scheme::Const { .. } => KappaScheme::Const,
        }
    }

    /// Generator tree and role partition for this scheme.
    pub fn build(&self) -> Result<(OrderedTree, RolePartition)> {
        let (tree, family) = match *self {
            Scheme::Poly { d, k, t } => (bethe_tree(d, k)?, Family::Bethe { t }),
            Scheme::Log { k } => (binary_tree(k)?, Family::Binary),
            Scheme::Const { d, k } => (nested_path_tree(d, k)?, Family::Nested),
        };
        let roles = partition_roles(&tree, family)?;
        Ok((tree, roles))
    }
}

/// Good vertices adjacent to at least one bad vertex, ascending.
pub fn potential_bad_vertices(g: &Graph, bad: &BTreeSet<usize>) -> Vec<usize> {
    (0..g.n())
        .filter(|v| !bad.contains(v))
        .filter(|&v| g.neighbors(v).iter().any(|w| bad.contains(w)))
        .collect()
}

/// Picks the candidate position among those accepted by `eligible`.
pub fn find_candidate(
    tree: &OrderedTree,
    rule: CandidateRule,
    eligible: &dyn Fn(usize) -> bool,
) -> Option<usize> {
    match rule {
        CandidateRule::LinearOrder => (0..tree.n())
            .filter(|&p| eligible(p))
            .min_by(|&a, &b| tree.nested_cmp(a, b)),
        CandidateRule::Descent => {
            // positions are labeled in BFS order, so children carry larger labels
            let mut reachable = vec![false; tree.n()];
            for p in (0..tree.n()).rev() {
                reachable[p] = eligible(p) || tree.children[p].iter().any(|&c| reachable[c]);
            }
            let mut cur = tree.root;
            if !reachable[cur] {
                return None;
            }
            while let Some(&next) = tree.children[cur].iter().find(|&&c| reachable[c]) {
                cur = next;
            }
            eligible(cur).then_some(cur)
        }
    }
}

/// Bad set and order metadata of a running schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct InfectionState {
    pub bad: BTreeSet<usize>,
    /// Position tree with the children orders of the current phase.
    pub order_meta: OrderedTree,
    pub phase: usize,
}

/// One emitted round of a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based index of the emitted graph.
    pub step: usize,
    pub graph: Graph,
    /// Edge symmetric difference to the previous graph.
    pub delta: usize,
    /// Bad vertices after communicating over the previous graph.
    pub bad: BTreeSet<usize>,
    pub phase: usize,
    /// Frontier size `|U|` of this round.
    pub frontier: usize,
    /// Frontier vertices outside the target set, the ones that get moved.
    pub moving: usize,
    pub swaps: usize,
    /// Phase length, set on the round that reaches the target set.
    pub completed_flow: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct PositionSnapshot {
    bad_positions: BTreeSet<usize>,
    children: Vec<Vec<usize>>,
    mirrored: bool,
}

/// An infinite adversarial graph schedule.
#[derive(Debug, Clone)]
pub struct Schedule {
    scheme: Scheme,
    roles: RolePartition,
    source: BTreeSet<usize>,
    target: BTreeSet<usize>,
    state: InfectionState,
    occupant: Vec<usize>,
    position: Vec<usize>,
    graphs: Vec<Graph>,
    deltas: Vec<usize>,
    phase_iterations: usize,
    flows: Vec<usize>,
    initial: PositionSnapshot,
}

impl Schedule {
    pub fn new(scheme: Scheme) -> Result<Self> {
        let (tree, roles) = scheme.build()?;
        let n = tree.n();
        let source = roles.v1.clone();
        let target = roles.v2.clone();
        let graph = tree.graph.clone();
        let mut s = Schedule {
            scheme,
            source: source.clone(),
            target,
            roles,
            state: InfectionState {
                bad: source,
                order_meta: tree,
                phase: 0,
            },
            occupant: (0..n).collect(),
            position: (0..n).collect(),
            graphs: vec![graph],
            deltas: Vec::new(),
            phase_iterations: 0,
            flows: Vec::new(),
            initial: PositionSnapshot {
                bad_positions: BTreeSet::new(),
                children: Vec::new(),
                mirrored: false,
            },
        };
        s.initial = s.snapshot();
        Ok(s)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Fixed vertex roles of the worst-case objective.
    pub fn roles(&self) -> &RolePartition {
        &self.roles
    }

    pub fn state(&self) -> &InfectionState {
        &self.state
    }

    pub fn n(&self) -> usize {
        self.occupant.len()
    }

    pub fn current_graph(&self) -> &Graph {
        self.graphs.last().expect("schedule always holds the initial graph")
    }

    /// Emitted graphs so far, starting with the initial tree.
    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn deltas(&self) -> &[usize] {
        &self.deltas
    }

    /// Lengths of all completed phases.
    pub fn flows(&self) -> &[usize] {
        &self.flows
    }

    /// Vertex currently sitting at tree position `p`.
    pub fn occupant(&self, p: usize) -> usize {
        self.occupant[p]
    }

    /// Largest vertex degree of the generator tree.
    pub fn generator_max_degree(&self) -> usize {
        self.graphs[0].max_degree()
    }

    fn snapshot(&self) -> PositionSnapshot {
        PositionSnapshot {
            bad_positions: self.state.bad.iter().map(|&v| self.position[v]).collect(),
            children: self.state.order_meta.children.clone(),
            mirrored: self.state.order_meta.mirrored,
        }
    }

    fn rebuild_graph(&self) -> Graph {
        let tree = &self.state.order_meta;
        let edges = (0..tree.n()).filter_map(|p| {
            tree.parent[p].map(|q| (self.occupant[p], self.occupant[q]))
        });
        Graph::from_edges(tree.n(), edges).expect("relabelled tree is a valid graph")
    }

    fn swap_positions(&mut self, u: usize, v: usize) {
        let (pu, pv) = (self.position[u], self.position[v]);
        self.occupant.swap(pu, pv);
        self.position[u] = pv;
        self.position[v] = pu;
    }

    fn fail(&self, detail: String) -> Error {
        Error::Invariant {
            step: self.graphs.len(),
            detail,
        }
    }

    /// Runs one inner-loop round and emits the next graph.
    pub fn advance(&mut self) -> Result<StepRecord> {
        let prev = self.current_graph().clone();
        let mut frontier = potential_bad_vertices(&prev, &self.state.bad);
        let frontier_size = frontier.len();
        if frontier.is_empty() {
            return Err(self.fail("empty frontier".into()));
        }
        // target vertices only show up in the last round of a phase and stay put
        let moving = frontier.iter().filter(|u| !self.target.contains(u)).count();
        if moving > self.scheme.frontier_limit() {
            return Err(self.fail(format!(
                "{moving} frontier vertices outside the target exceed {}",
                self.scheme.frontier_limit()
            )));
        }

        let mut bad = self.state.bad.clone();
        if let Scheme::Const { d, .. } = self.scheme {
            let tree = &self.state.order_meta;
            if let Some(i) = frontier
                .iter()
                .position(|&u| tree.level[self.position[u]] == d)
            {
                bad.insert(frontier.remove(i));
            }
        }

        let rule = self.scheme.candidate_rule();
        let mut swaps = 0;
        let mut pending: BTreeSet<usize> = frontier.iter().copied().collect();
        for u in frontier {
            pending.remove(&u);
            if self.target.contains(&u) {
                bad.insert(u);
                continue;
            }
            // frontier vertices still to be processed turn bad this round anyway
            let candidate = {
                let eligible = |p: usize| {
                    let o = self.occupant[p];
                    !bad.contains(&o) && !self.target.contains(&o) && !pending.contains(&o)
                };
                find_candidate(&self.state.order_meta, rule, &eligible)
            };
            bad.insert(u);
            if let Some(p) = candidate {
                let v = self.occupant[p];
                if v != u {
                    self.swap_positions(u, v);
                    swaps += 1;
                }
            }
        }

        let graph = self.rebuild_graph();
        let delta = edge_diff(&prev, &graph)?;
        if delta > self.scheme.edge_budget() {
            return Err(self.fail(format!(
                "edge change {delta} exceeds budget {}",
                self.scheme.edge_budget()
            )));
        }
        if !graph.is_tree() {
            return Err(self.fail("emitted graph is not a spanning tree".into()));
        }
        self.state.bad = bad;
        self.check_shape()?;

        self.graphs.push(graph.clone());
        self.deltas.push(delta);
        self.phase_iterations += 1;

        let reached_target = self.state.bad.iter().any(|v| self.target.contains(v));
        let record = StepRecord {
            step: self.graphs.len() - 1,
            graph,
            delta,
            bad: self.state.bad.clone(),
            phase: self.state.phase,
            frontier: frontier_size,
            moving,
            swaps,
            completed_flow: reached_target.then_some(self.phase_iterations),
        };
        if reached_target {
            self.finish_phase()?;
        }
        Ok(record)
    }

    fn finish_phase(&mut self) -> Result<()> {
        self.flows.push(self.phase_iterations);
        self.phase_iterations = 0;
        std::mem::swap(&mut self.source, &mut self.target);
        self.state.order_meta.reverse_orders();
        self.state.bad = self.source.clone();
        self.state.phase += 1;
        if self.state.phase % 2 == 0 && self.snapshot() != self.initial {
            return Err(self.fail("two phases did not restore the initial positions".into()));
        }
        Ok(())
    }

    /// Bad positions outside the target keep the scheme's shape: closed under
    /// taking children (descent) or an initial segment of the linear order.
    fn check_shape(&self) -> Result<()> {
        let tree = &self.state.order_meta;
        let in_target = |p: usize| self.target.contains(&self.occupant[p]);
        let is_bad = |p: usize| self.state.bad.contains(&self.occupant[p]);
        match self.scheme.candidate_rule() {
            CandidateRule::Descent => {
                for p in (0..tree.n()).filter(|&p| is_bad(p) && !in_target(p)) {
                    if let Some(&c) = tree.children[p]
                        .iter()
                        .find(|&&c| !in_target(c) && !is_bad(c))
                    {
                        return Err(self.fail(format!(
                            "bad position {p} has good child position {c}"
                        )));
                    }
                }
            }
            CandidateRule::LinearOrder => {
                let order: Vec<usize> = tree
                    .linear_order()
                    .into_iter()
                    .filter(|&p| !in_target(p))
                    .collect();
                let prefix = order.iter().take_while(|&&p| is_bad(p)).count();
                if order[prefix..].iter().any(|&p| is_bad(p)) {
                    return Err(self.fail("bad positions are not an initial segment".into()));
                }
            }
        }
        Ok(())
    }

    /// Runs rounds until the current phase reaches its target and returns the
    /// phase length `T`.
    pub fn information_flow(&mut self) -> Result<usize> {
        let limit = self.n() + 1;
        for _ in 0..limit {
            if let Some(t) = self.advance()?.completed_flow {
                return Ok(t);
            }
        }
        Err(self.fail(format!("phase did not finish within {limit} rounds")))
    }
}

impl Iterator for Schedule {
    type Item = Result<StepRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.advance())
    }
}

/// Graph sequences indexed by communication round.
pub trait GraphSequence {
    fn vertex_count(&self) -> usize;
    /// Graph used by communication round `round` (0-based).
    fn graph_at(&mut self, round: usize) -> Result<Graph>;
}

impl GraphSequence for Schedule {
    fn vertex_count(&self) -> usize {
        self.n()
    }

    fn graph_at(&mut self, round: usize) -> Result<Graph> {
        while self.graphs.len() <= round {
            self.advance()?;
        }
        Ok(self.graphs[round].clone())
    }
}

/// The same graph at every round.
#[derive(Debug, Clone)]
pub struct StaticSequence(pub Graph);

impl GraphSequence for StaticSequence {
    fn vertex_count(&self) -> usize {
        self.0.n()
    }

    fn graph_at(&mut self, _round: usize) -> Result<Graph> {
        Ok(self.0.clone())
    }
}

/// Interleaving of local and communication steps for the span model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepPolicy {
    /// One local step followed by `comms` communication rounds, repeated.
    Burst { comms: usize },
}

impl StepPolicy {
    pub const ALTERNATING: StepPolicy = StepPolicy::Burst { comms: 1 };

    fn is_local(&self, step: usize) -> bool {
        match *self {
            StepPolicy::Burst { comms } => step % (comms + 1) == 0,
        }
    }
}

/// First-reach times of coordinates under the span model.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanTrace {
    /// `first_reach[m - 1]` is `l_m`: the number of steps after which some
    /// node may hold a nonzero coordinate `m`.
    pub first_reach: Vec<usize>,
    pub steps: usize,
    pub comm_rounds: usize,
    /// Largest coordinate index reachable anywhere at the end.
    pub max_reach: usize,
    /// False when the step budget ran out before `max_m` was reached.
    pub complete: bool,
}

impl SpanTrace {
    /// Checks `l_m >= (m - 1) T + m` for every reached `m`.
    pub fn respects_flow(&self, flow: usize) -> bool {
        self.first_reach
            .iter()
            .enumerate()
            .all(|(i, &l)| l >= i * flow + i + 1)
    }
}

/// Simulates the span model: local steps extend each node's support by the
/// parity rule of its vertex function, communication steps take the maximum
/// over closed neighborhoods in the round's graph.
pub fn span_trace(
    seq: &mut dyn GraphSequence,
    problem: &ChainProblem,
    policy: StepPolicy,
    budget: usize,
    max_m: usize,
) -> Result<SpanTrace> {
    let n = seq.vertex_count();
    if n != problem.n {
        return Err(Error::DimensionMismatch {
            expected: problem.n,
            actual: n,
        });
    }
    let roles: Vec<_> = (0..n).map(|v| problem.partition.role(v)).collect();
    let mut reach = vec![0usize; n];
    let mut first_reach = Vec::new();
    let mut comm_rounds = 0;
    let mut steps = 0;
    while steps < budget && first_reach.len() < max_m {
        if policy.is_local(steps) {
            for (r, role) in reach.iter_mut().zip(&roles) {
                if *r < problem.dim && extends_support(*role, *r) {
                    *r += 1;
                }
            }
        } else {
            let g = seq.graph_at(comm_rounds)?;
            reach = (0..n)
                .map(|v| {
                    g.neighbors(v)
                        .iter()
                        .map(|&w| reach[w])
                        .fold(reach[v], usize::max)
                })
                .collect();
            comm_rounds += 1;
        }
        steps += 1;
        let top = reach.iter().copied().max().unwrap_or(0);
        while first_reach.len() < top.min(max_m) {
            first_reach.push(steps);
        }
    }
    Ok(SpanTrace {
        max_reach: reach.iter().copied().max().unwrap_or(0),
        complete: first_reach.len() >= max_m,
        first_reach,
        steps,
        comm_rounds,
    })
}
