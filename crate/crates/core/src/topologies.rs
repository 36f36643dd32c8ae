//! Deterministic graph families: Bethe trees, binary trees, nested path
//! trees `H_{d,k}` and the rotating star, plus the role partitions used by
//! the adversarial schedules.
//!
//! Vertices of every tree are labeled in BFS order from the root, children
//! visited in construction order.

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphcore::Graph;

/// Which generator produced an [`OrderedTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeKind {
    Bethe { d: usize, k: usize },
    Nested { d: usize, k: usize },
}

/// A rooted tree with ordered children and per-vertex metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedTree {
    pub graph: Graph,
    pub root: usize,
    pub kind: TreeKind,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Depth from the root (root = 1) for Bethe trees; coordinate length for `H_{d,k}`.
    pub level: Vec<usize>,
    /// `H_{d,k}` coordinates `(x_1, .., x_g)`; empty for Bethe trees.
    pub coordinates: Vec<Vec<usize>>,
    /// Set by [`OrderedTree::reverse_orders`]; mirrors the first coordinate in
    /// the `H_{d,k}` linear order.
    pub mirrored: bool,
}

impl OrderedTree {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn depth(&self) -> usize {
        self.level.iter().copied().max().unwrap_or(0)
    }

    /// All vertices of the subtree rooted at `v`, ascending.
    pub fn subtree(&self, v: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            out.insert(x);
            stack.extend(self.children[x].iter().copied());
        }
        out
    }

    /// Ancestors of `v` from its parent up to the root.
    pub fn ancestors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.parent[v];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent[p];
        }
        out
    }

    /// Reverses every children list and toggles the mirrored linear order.
    pub fn reverse_orders(&mut self) {
        for c in &mut self.children {
            c.reverse();
        }
        self.mirrored = !self.mirrored;
    }

    /// The `H_{d,k}` linear order: a vertex whose coordinates extend another's
    /// is smaller; otherwise the first differing coordinate decides. When
    /// mirrored, the first coordinate is read as `k + 1 - x_1`.
    pub fn nested_cmp(&self, a: usize, b: usize) -> Ordering {
        let k = match self.kind {
            TreeKind::Nested { k, .. } => k,
            TreeKind::Bethe { .. } => return a.cmp(&b),
        };
        let key = |v: usize| -> Vec<usize> {
            let mut c = self.coordinates[v].clone();
            if self.mirrored {
                c[0] = k + 1 - c[0];
            }
            c
        };
        let (ca, cb) = (key(a), key(b));
        for (x, y) in ca.iter().zip(&cb) {
            if x != y {
                return x.cmp(y);
            }
        }
        // one is a prefix of the other: the longer one is smaller
        cb.len().cmp(&ca.len())
    }

    /// Vertices sorted by [`OrderedTree::nested_cmp`].
    pub fn linear_order(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.n()).collect();
        v.sort_by(|&a, &b| self.nested_cmp(a, b));
        v
    }
}

/// Assembles a tree from a parent-less node list given in BFS order.
fn build_tree(
    kind: TreeKind,
    parent: Vec<Option<usize>>,
    level: Vec<usize>,
    coordinates: Vec<Vec<usize>>,
) -> Result<OrderedTree> {
    let n = parent.len();
    let mut children = vec![Vec::new(); n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for (v, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            children[p].push(v);
            edges.push((p, v));
        }
    }
    Ok(OrderedTree {
        graph: Graph::from_edges(n, edges)?,
        root: 0,
        kind,
        parent,
        children,
        level,
        coordinates,
        mirrored: false,
    })
}

/// Bethe tree `B_{d,k}`: root of degree `d`, internal vertices of degree
/// `d + 1`, leaves at depth `k`.
pub fn bethe_tree(d: usize, k: usize) -> Result<OrderedTree> {
    if d < 2 || k < 2 {
        return Err(Error::InvalidParams(format!(
            "bethe tree needs d >= 2 and k >= 2, got d = {d}, k = {k}"
        )));
    }
    let mut parent = vec![None];
    let mut level = vec![1];
    let mut frontier = vec![0usize];
    for depth in 2..=k {
        let mut next = Vec::with_capacity(frontier.len() * d);
        for &p in &frontier {
            for _ in 0..d {
                next.push(parent.len());
                parent.push(Some(p));
                level.push(depth);
            }
        }
        frontier = next;
    }
    build_tree(TreeKind::Bethe { d, k }, parent, level, Vec::new())
}

/// Complete binary tree of depth `k` (`B_{2,k}`).
pub fn binary_tree(k: usize) -> Result<OrderedTree> {
    bethe_tree(2, k)
}

/// Vertex count of `B_{d,k}`.
pub fn bethe_size(d: usize, k: usize) -> usize {
    (d.pow(k as u32) - 1) / (d - 1)
}

/// Vertex count of `H_{d,k}`: `k + k^2 + ... + k^d`.
pub fn nested_size(d: usize, k: usize) -> usize {
    (1..=d).map(|g| k.pow(g as u32)).sum()
}

/// The nested path tree `H_{d,k}`.
///
/// `H_{1,k}` is a path on `k` vertices numbered `1..=k`, rooted at `k`.
/// `H_{g+1,k}` is a fresh such path with a copy of `H_{g,k}` hung by its root
/// from every path vertex. A vertex at level `g` carries the coordinates
/// `(x_1, .., x_g)`; it is adjacent to `(.., x_g ± 1)`, to the child copy root
/// `(.., x_g, k)`, and when `x_g = k` to `(x_1, .., x_{g-1})`.
pub fn nested_path_tree(d: usize, k: usize) -> Result<OrderedTree> {
    if d < 1 || k < 2 {
        return Err(Error::InvalidParams(format!(
            "nested path tree needs d >= 1 and k >= 2, got d = {d}, k = {k}"
        )));
    }
    let mut parent = vec![None];
    let mut coordinates = vec![vec![k]];
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        let c = coordinates[v].clone();
        let last = *c.last().unwrap();
        let mut kids = Vec::new();
        if last > 1 {
            let mut prev = c.clone();
            *prev.last_mut().unwrap() = last - 1;
            kids.push(prev);
        }
        if c.len() < d {
            let mut sub = c.clone();
            sub.push(k);
            kids.push(sub);
        }
        for kc in kids {
            let id = coordinates.len();
            coordinates.push(kc);
            parent.push(Some(v));
            queue.push_back(id);
        }
    }
    let level = coordinates.iter().map(Vec::len).collect();
    build_tree(TreeKind::Nested { d, k }, parent, level, coordinates)
}

/// Star on `n` vertices centered at `step mod n`.
pub fn rotating_star(n: usize, step: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidParams(format!("rotating star needs n >= 3, got {n}")));
    }
    Graph::star(n, step % n)
}

/// `steps` supergraphs of `skeleton`, each with up to `max_extra` random
/// extra edges drawn independently per step.
pub fn random_supergraph_sequence<R: Rng>(
    skeleton: &Graph,
    steps: usize,
    max_extra: usize,
    rng: &mut R,
) -> Result<Vec<Graph>> {
    let n = skeleton.n();
    (0..steps)
        .map(|_| {
            let extra = rng.gen_range(0..=max_extra);
            let mut edges = skeleton.edges().to_vec();
            for _ in 0..extra {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if a != b {
                    edges.push((a, b));
                }
            }
            Graph::from_edges(n, edges)
        })
        .collect()
}

/// Monotonically shrinking sequence: `skeleton` plus `extra` random
/// non-skeleton edges, one of which is removed every `every` steps.
pub fn shrinking_sequence<R: Rng>(
    skeleton: &Graph,
    extra: usize,
    steps: usize,
    every: usize,
    rng: &mut R,
) -> Result<Vec<Graph>> {
    let n = skeleton.n();
    let mut pool: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| !skeleton.has_edge(a, b))
        .collect();
    if extra > pool.len() || every == 0 {
        return Err(Error::InvalidParams(format!(
            "cannot add {extra} extra edges to a graph with {} free pairs",
            pool.len()
        )));
    }
    pool.shuffle(rng);
    pool.truncate(extra);
    (0..steps)
        .map(|k| {
            let keep = extra.saturating_sub(k / every);
            Graph::from_edges(n, skeleton.edges().iter().chain(&pool[..keep]).copied())
        })
        .collect()
}

/// Which lower-bound construction a partition belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Bethe { t: usize },
    Binary,
    Nested,
}

/// Type-1, type-2 and neutral vertex sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RolePartition {
    pub v1: BTreeSet<usize>,
    pub v2: BTreeSet<usize>,
    pub w: BTreeSet<usize>,
}

/// Vertex role in the worst-case objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    V1,
    V2,
    W,
}

impl RolePartition {
    pub fn from_sets(n: usize, v1: BTreeSet<usize>, v2: BTreeSet<usize>) -> Result<Self> {
        if v1.len() != v2.len() || !v1.is_disjoint(&v2) {
            return Err(Error::InvalidParams(
                "role sets must be disjoint and of equal size".into(),
            ));
        }
        if let Some(&bad) = v1.iter().chain(&v2).find(|&&v| v >= n) {
            return Err(Error::InvalidVertex { vertex: bad, n });
        }
        let w = (0..n).filter(|v| !v1.contains(v) && !v2.contains(v)).collect();
        Ok(RolePartition { v1, v2, w })
    }

    pub fn n(&self) -> usize {
        self.v1.len() + self.v2.len() + self.w.len()
    }

    pub fn role(&self, v: usize) -> Role {
        if self.v1.contains(&v) {
            Role::V1
        } else if self.v2.contains(&v) {
            Role::V2
        } else {
            Role::W
        }
    }

    /// Exchanges the type-1 and type-2 sets.
    pub fn swapped(&self) -> Self {
        RolePartition {
            v1: self.v2.clone(),
            v2: self.v1.clone(),
            w: self.w.clone(),
        }
    }
}

/// The role partition of a lower-bound family on a matching tree.
///
/// * `Bethe { t }`: the `⌊d/t⌋` lowest-ordered root subtrees form `V1`, the
///   `⌊d/t⌋` highest-ordered ones form `V2`.
/// * `Binary`: the subtree under the left-left grandchild of the root is `V1`,
///   the right-right one is `V2`.
/// * `Nested`: `V1` holds the vertices with `x_1 <= ⌊k/3⌋`, `V2` those with
///   `x_1 > k - ⌊k/3⌋`. These are an initial and a final segment of the linear
///   order.
pub fn partition_roles(tree: &OrderedTree, family: Family) -> Result<RolePartition> {
    let n = tree.n();
    match (family, tree.kind) {
        (Family::Bethe { t }, TreeKind::Bethe { d, .. }) => {
            if t <= 2 || t > d {
                return Err(Error::InvalidParams(format!(
                    "bethe partition needs 2 < t <= d, got t = {t}, d = {d}"
                )));
            }
            let count = d / t;
            let kids = &tree.children[tree.root];
            let v1 = kids[..count].iter().flat_map(|&c| tree.subtree(c)).collect();
            let v2 = kids[kids.len() - count..]
                .iter()
                .flat_map(|&c| tree.subtree(c))
                .collect();
            RolePartition::from_sets(n, v1, v2)
        }
        (Family::Binary, TreeKind::Bethe { d: 2, k }) => {
            if k < 4 {
                return Err(Error::InvalidParams(format!(
                    "binary partition needs k >= 4, got {k}"
                )));
            }
            let kids = &tree.children[tree.root];
            let left_left = tree.children[kids[0]][0];
            let right_right = *tree.children[kids[1]].last().unwrap();
            RolePartition::from_sets(n, tree.subtree(left_left), tree.subtree(right_right))
        }
        (Family::Nested, TreeKind::Nested { k, .. }) => {
            if k < 3 {
                return Err(Error::InvalidParams(format!(
                    "nested partition needs k >= 3, got {k}"
                )));
            }
            let q = k / 3;
            let first = |v: usize| tree.coordinates[v][0];
            let v1 = (0..n).filter(|&v| first(v) <= q).collect();
            let v2 = (0..n).filter(|&v| first(v) > k - q).collect();
            RolePartition::from_sets(n, v1, v2)
        }
        (fam, kind) => Err(Error::FamilyMismatch(format!(
            "{fam:?} partition cannot be applied to {kind:?}"
        ))),
    }
}
