//! Undirected simple graphs, their Laplacians and spectral summaries.
//!
//! Graphs keep a sorted edge list `(i, j)` with `i < j` plus a sorted
//! adjacency index, so iteration order is deterministic everywhere.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold under which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIGEN_REL: f64 = 1e-9;

/// Eigenvalue floor for the PSD test on Laplacian differences.
pub const PSD_FLOOR: f64 = -1e-10;

/// Undirected simple graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Pairs are normalized to `i < j` and
    /// deduplicated; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidParams("graph needs at least one vertex".into()));
        }
        let mut list = Vec::new();
        for (a, b) in edges {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::InvalidVertex { vertex: v, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        list.dedup();
        Ok(Self::from_sorted(n, list))
    }

    fn from_sorted(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for nb in &mut adj {
            nb.sort_unstable();
        }
        Graph { n, edges, adj }
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::from_edges(n, std::iter::empty())
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::from_edges(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn star(n: usize, center: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).filter(|&v| v != center).map(|v| (center, v)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted edge list, each pair with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.n && self.adj[a].binary_search(&b).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n && self.is_connected()
    }

    /// Longest shortest-path distance; `None` if disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.n {
            let dist = self.bfs_distances(s);
            for d in dist {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v].unwrap();
            for &w in &self.adj[v] {
                if dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// True if every edge of `self` is an edge of `other`.
    pub fn is_subgraph_of(&self, other: &Graph) -> bool {
        self.n == other.n && self.edges.iter().all(|&(a, b)| other.has_edge(a, b))
    }

    /// Edge-set intersection with another graph on the same vertex set.
    pub fn intersection(&self, other: &Graph) -> Result<Graph> {
        check_same_n(self, other)?;
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&(a, b)| other.has_edge(a, b))
            .collect();
        Ok(Self::from_sorted(self.n, edges))
    }

    /// Serializes to the text format: `n m` then `i j` per edge.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.edges.len());
        for (i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            detail: "missing header".into(),
        })?;
        let (n, m) = parse_pair(header, hline + 1)?;
        let mut edges = Vec::with_capacity(m);
        for (idx, line) in lines {
            edges.push(parse_pair(line, idx + 1)?);
        }
        if edges.len() != m {
            return Err(Error::Parse {
                line: hline + 1,
                detail: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        Self::from_edges(n, edges)
    }
}

fn parse_pair(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace().map(str::parse::<usize>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
        _ => Err(Error::Parse {
            line: lineno,
            detail: format!("expected two non-negative integers, got `{line}`"),
        }),
    }
}

fn check_same_n(a: &Graph, b: &Graph) -> Result<()> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            actual: b.n,
        });
    }
    Ok(())
}

/// Largest, smallest nonzero and ratio of the Laplacian spectrum.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpectralSummary {
    pub lambda_max: f64,
    pub lambda_min_plus: f64,
    pub chi: f64,
}

/// Combinatorial Laplacian `D - A` as a dense matrix.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let mut lap = DMatrix::zeros(g.n, g.n);
    for &(i, j) in &g.edges {
        lap[(i, j)] -= 1.0;
        lap[(j, i)] -= 1.0;
        lap[(i, i)] += 1.0;
        lap[(j, j)] += 1.0;
    }
    lap
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Summary from an ascending Laplacian spectrum.
pub fn summarize_spectrum(eigs: &[f64]) -> Result<SpectralSummary> {
    let lambda_max = eigs.last().copied().unwrap_or(0.0);
    let threshold = ZERO_EIGEN_REL * lambda_max.max(1.0);
    let zeros = eigs.iter().filter(|&&e| e <= threshold).count();
    if zeros > 1 {
        return Err(Error::DisconnectedGraph {
            zero_eigenvalues: zeros,
        });
    }
    let lambda_min_plus = eigs
        .iter()
        .copied()
        .find(|&e| e > threshold)
        .ok_or(Error::DegenerateSpectrum { n: eigs.len() })?;
    Ok(SpectralSummary {
        lambda_max,
        lambda_min_plus,
        chi: lambda_max / lambda_min_plus,
    })
}

pub fn spectral_summary(g: &Graph) -> Result<SpectralSummary> {
    summarize_spectrum(&symmetric_eigenvalues(&laplacian(g)))
}

/// Largest Laplacian eigenvalue; zero for an edgeless graph.
pub fn lambda_max(g: &Graph) -> f64 {
    if g.num_edges() == 0 {
        return 0.0;
    }
    symmetric_eigenvalues(&laplacian(g)).last().copied().unwrap_or(0.0)
}

/// Size of the symmetric difference of the two edge sets.
pub fn edge_diff(g1: &Graph, g2: &Graph) -> Result<usize> {
    check_same_n(g1, g2)?;
    let (a, b) = (&g1.edges, &g2.edges);
    let (mut i, mut j, mut diff) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                diff += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                diff += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    Ok(diff + (a.len() - i) + (b.len() - j))
}

/// Exchanges the neighborhoods of `u` and `v`. Labels stay put; an edge
/// between `u` and `v` itself is preserved.
pub fn swap_vertices(g: &Graph, u: usize, v: usize) -> Result<Graph> {
    for x in [u, v] {
        if x >= g.n {
            return Err(Error::InvalidVertex { vertex: x, n: g.n });
        }
    }
    if u == v {
        return Err(Error::InvalidParams(format!("cannot swap vertex {u} with itself")));
    }
    let relabel = |x: usize| {
        if x == u {
            v
        } else if x == v {
            u
        } else {
            x
        }
    };
    let mut edges: Vec<_> = g
        .edges
        .iter()
        .map(|&(a, b)| {
            let (a, b) = (relabel(a), relabel(b));
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    Ok(Graph::from_sorted(g.n, edges))
}

/// Checks that `Lap(big) - Lap(small)` is PSD. Requires `small ⊆ big`.
pub fn laplacian_monotone_psd_check(big: &Graph, small: &Graph) -> Result<bool> {
    check_same_n(big, small)?;
    if let Some(&(a, b)) = small.edges.iter().find(|&&(a, b)| !big.has_edge(a, b)) {
        return Err(Error::NotSubgraph(a, b));
    }
    let diff = laplacian(big) - laplacian(small);
    Ok(symmetric_eigenvalues(&diff)
        .first()
        .map_or(true, |&e| e >= PSD_FLOOR))
}
