//! Consensus operators over static and time-varying graphs.
//!
//! Node states are stored as rows of an `n × m` matrix.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphcore::{laplacian, lambda_max, spectral_summary, Graph};

/// Graph used at round `k`; the last graph repeats once the sequence ends.
pub fn graph_at(graphs: &[Graph], k: usize) -> &Graph {
    &graphs[k.min(graphs.len() - 1)]
}

fn check_sequence(graphs: &[Graph]) -> Result<usize> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidParams("empty graph sequence".into()))?;
    for g in graphs {
        if g.n() != first.n() {
            return Err(Error::DimensionMismatch {
                expected: first.n(),
                actual: g.n(),
            });
        }
    }
    Ok(first.n())
}

/// Running edge intersection of a nonempty sequence.
pub fn effective_graph(graphs: &[Graph]) -> Result<Graph> {
    check_sequence(graphs)?;
    let mut acc = graphs[0].clone();
    for g in &graphs[1..] {
        acc = acc.intersection(g)?;
    }
    Ok(acc)
}

/// Spectral bounds driving the accelerated gossip parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GossipParams {
    pub lambda_max: f64,
    pub lambda_min_plus: f64,
}

impl GossipParams {
    pub fn new(lambda_max: f64, lambda_min_plus: f64) -> Result<Self> {
        if !(lambda_min_plus > 0.0 && lambda_max >= lambda_min_plus) {
            return Err(Error::InvalidParams(format!(
                "need lambda_max >= lambda_min_plus > 0, got {lambda_max} and {lambda_min_plus}"
            )));
        }
        Ok(GossipParams {
            lambda_max,
            lambda_min_plus,
        })
    }

    /// Bounds realized by a known sequence: the largest per-graph `λ_max` and
    /// `λ_min^+` of the intersection of all graphs.
    pub fn from_sequence(graphs: &[Graph]) -> Result<Self> {
        let skeleton = effective_graph(graphs)?;
        if !skeleton.is_connected() {
            return Err(Error::DisconnectedSkeleton);
        }
        let lmin = spectral_summary(&skeleton)?.lambda_min_plus;
        let lmax = graphs.iter().map(lambda_max).fold(0.0, f64::max);
        GossipParams::new(lmax, lmin)
    }

    pub fn chi(&self) -> f64 {
        self.lambda_max / self.lambda_min_plus
    }

    pub fn eta(&self) -> f64 {
        1.0 / self.lambda_max
    }

    pub fn beta(&self) -> f64 {
        let s = self.chi().sqrt();
        (s - 1.0) / (s + 1.0)
    }

    /// `⌈√χ ln(4χ)⌉` communication rounds.
    pub fn rounds(&self) -> usize {
        let chi = self.chi();
        ((chi.sqrt() * (4.0 * chi).ln()).ceil() as usize).max(1)
    }
}

/// Per-node state of accelerated gossip with non-recoverable links.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipState {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Links still in use; an edge dropped once is never used again.
    pub neighbor_sets: Vec<BTreeSet<usize>>,
    pub k: usize,
    pub eta: f64,
    pub beta: f64,
}

impl GossipState {
    pub fn new(x0: &DMatrix<f64>, first: &Graph, params: &GossipParams) -> Result<Self> {
        if x0.nrows() != first.n() {
            return Err(Error::DimensionMismatch {
                expected: first.n(),
                actual: x0.nrows(),
            });
        }
        Ok(GossipState {
            x: x0.clone(),
            y: x0.clone(),
            neighbor_sets: (0..first.n())
                .map(|i| first.neighbors(i).iter().copied().collect())
                .collect(),
            k: 0,
            eta: params.eta(),
            beta: params.beta(),
        })
    }

    /// One round over `g`.
    pub fn step(&mut self, g: &Graph) -> Result<()> {
        let n = self.x.nrows();
        if g.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: g.n(),
            });
        }
        for (i, set) in self.neighbor_sets.iter_mut().enumerate() {
            set.retain(|&j| g.has_edge(i, j));
        }
        let mut y_next = self.x.clone();
        for i in 0..n {
            let set = &self.neighbor_sets[i];
            let mut lap = self.x.row(i) * set.len() as f64;
            for &j in set {
                lap -= self.x.row(j);
            }
            let updated = self.x.row(i) - lap * self.eta;
            y_next.set_row(i, &updated);
        }
        self.x = &y_next * (1.0 + self.beta) - &self.y * self.beta;
        self.y = y_next;
        self.k += 1;
        Ok(())
    }

    /// Graph formed by the links still in use.
    pub fn effective(&self) -> Graph {
        let edges = self
            .neighbor_sets
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().filter(move |&&j| i < j).map(move |&j| (i, j)));
        Graph::from_edges(self.neighbor_sets.len(), edges).expect("neighbor sets are valid")
    }
}

/// Runs `t` rounds and returns `(x^T, C_T(x0) = x0 - x^T)`.
pub fn accelerated_gossip_nrl(
    x0: &DMatrix<f64>,
    graphs: &[Graph],
    t: usize,
    params: &GossipParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let traj = nrl_trajectory(x0, graphs, t, params)?;
    let xt = traj.last().expect("trajectory holds x^0").clone();
    Ok((xt.clone(), x0 - xt))
}

/// Iterates `x^0, .., x^T` of the per-node algorithm.
pub fn nrl_trajectory(
    x0: &DMatrix<f64>,
    graphs: &[Graph],
    t: usize,
    params: &GossipParams,
) -> Result<Vec<DMatrix<f64>>> {
    check_sequence(graphs)?;
    if t == 0 {
        return Err(Error::InvalidParams("T must be at least 1".into()));
    }
    let mut state = GossipState::new(x0, &graphs[0], params)?;
    let mut out = vec![x0.clone()];
    for k in 0..t {
        state.step(graph_at(graphs, k))?;
        out.push(state.x.clone());
    }
    if !state.effective().is_connected() {
        return Err(Error::DisconnectedSkeleton);
    }
    Ok(out)
}

/// Same iteration written with dense effective Laplacians:
/// `y^{k+1} = x^k - η Ŵ^k x^k`, `x^{k+1} = (1+β) y^{k+1} - β y^k`.
pub fn dense_trajectory(
    x0: &DMatrix<f64>,
    graphs: &[Graph],
    t: usize,
    params: &GossipParams,
) -> Result<Vec<DMatrix<f64>>> {
    check_sequence(graphs)?;
    let (eta, beta) = (params.eta(), params.beta());
    let mut eff = graphs[0].clone();
    let mut x = x0.clone();
    let mut y = x0.clone();
    let mut out = vec![x.clone()];
    for k in 0..t {
        eff = eff.intersection(graph_at(graphs, k))?;
        let y_next = &x - laplacian(&eff) * &x * eta;
        x = &y_next * (1.0 + beta) - &y * beta;
        y = y_next;
        out.push(x.clone());
    }
    Ok(out)
}

/// Fails if some effective Laplacian of the first `t` rounds exceeds `bound`.
pub fn check_spectral_bound(graphs: &[Graph], t: usize, bound: f64) -> Result<()> {
    check_sequence(graphs)?;
    let mut eff = graphs[0].clone();
    for k in 0..t {
        eff = eff.intersection(graph_at(graphs, k))?;
        let lambda = lambda_max(&eff);
        if lambda > bound {
            return Err(Error::SpectralBoundViolation {
                step: k,
                lambda,
                bound,
            });
        }
    }
    Ok(())
}

/// Projects the columns of `x` onto zero-sum vectors.
pub fn center(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub input_norm: f64,
    pub output_norm: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub rounds: usize,
    pub chi: f64,
    pub lower: f64,
    pub upper: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub trials: Vec<TrialResult>,
    pub pass: bool,
}

/// Applies `C_T` to random zero-sum inputs and checks
/// `(1 - 1/√2)‖x‖ ≤ ‖C_T(x)‖ ≤ (1 + 1/√2)‖x‖`.
pub fn verify_ct_sandwich<R: Rng>(
    graphs: &[Graph],
    params: &GossipParams,
    rounds: usize,
    trials: usize,
    cols: usize,
    slack: f64,
    rng: &mut R,
) -> Result<SandwichReport> {
    let n = check_sequence(graphs)?;
    let lower = 1.0 - 0.5f64.sqrt();
    let upper = 1.0 + 0.5f64.sqrt();
    // inputs come from one sequential stream; trials then run in any order
    let inputs: Vec<DMatrix<f64>> = (0..trials)
        .map(|_| center(&DMatrix::from_fn(n, cols, |_, _| rng.gen_range(-1.0..1.0))))
        .collect();
    let results: Vec<TrialResult> = inputs
        .par_iter()
        .enumerate()
        .filter(|(_, x)| x.norm() > 0.0)
        .map(|(trial, x)| {
            let (_, ct) = accelerated_gossip_nrl(x, graphs, rounds, params)?;
            let input_norm = x.norm();
            let output_norm = ct.norm();
            let ratio = output_norm / input_norm;
            Ok(TrialResult {
                trial,
                input_norm,
                output_norm,
                ratio,
                pass: ratio >= lower - slack && ratio <= upper + slack,
            })
        })
        .collect::<Result<_>>()?;
    let min_ratio = results.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = results.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(SandwichReport {
        rounds,
        chi: params.chi(),
        lower,
        upper,
        min_ratio,
        max_ratio,
        pass: results.iter().all(|r| r.pass),
        trials: results,
    })
}

/// `P_K(W) x0` for the Chebyshev polynomial shifted onto
/// `[λ_min^+, λ_max]` of `W = Lap(g)` and normalized by `P_K(0) = 1`.
pub fn chebyshev_static(x0: &DMatrix<f64>, g: &Graph, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::InvalidParams("degree must be at least 1".into()));
    }
    let s = spectral_summary(g)?;
    let w = laplacian(g);
    let span = s.lambda_max - s.lambda_min_plus;
    if span <= 1e-12 * s.lambda_max {
        // single nonzero eigenvalue: one exact step removes the disagreement
        return Ok(x0 - &w * x0 / s.lambda_max);
    }
    let a = (s.lambda_max + s.lambda_min_plus) / span;
    let c = 2.0 / span;
    // vector recurrence for T_j(a - cW) x0 alongside the scalar T_j(a)
    let mut prev = x0.clone();
    let mut cur = x0 * a - &w * x0 * c;
    let (mut t_prev, mut t_cur) = (1.0, a);
    for _ in 1..k {
        let next = (&cur * a - &w * &cur * c) * 2.0 - &prev;
        prev = std::mem::replace(&mut cur, next);
        let t_next = 2.0 * a * t_cur - t_prev;
        t_prev = std::mem::replace(&mut t_cur, t_next);
    }
    Ok(cur / t_cur)
}

/// `steps` rounds of `x ← x - η W x`.
pub fn plain_gossip(x0: &DMatrix<f64>, g: &Graph, steps: usize, eta: f64) -> Result<DMatrix<f64>> {
    if x0.nrows() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            actual: x0.nrows(),
        });
    }
    let w = laplacian(g);
    let mut x = x0.clone();
    for _ in 0..steps {
        x -= &w * &x * eta;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn effective_graph_cases() {
        let p = Graph::path(5).unwrap();
        assert_eq!(effective_graph(&[p.clone(), p.clone()]).unwrap(), p);
        let a = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
        let b = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)]).unwrap();
        assert_eq!(effective_graph(&[a, b]).unwrap(), p);
        assert!(matches!(
            effective_graph(&[p, Graph::path(4).unwrap()]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn consensus_is_fixed() {
        let g = Graph::path(6).unwrap();
        let params = GossipParams::from_sequence(std::slice::from_ref(&g)).unwrap();
        let x0 = DMatrix::from_element(6, 2, 3.5);
        let (xt, ct) = accelerated_gossip_nrl(&x0, &[g], 10, &params).unwrap();
        assert!((xt - &x0).norm() < 1e-12);
        assert!(ct.norm() < 1e-12);
    }

    #[test]
    fn per_node_matches_dense() {
        let graphs = vec![
            Graph::complete(6).unwrap(),
            Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3)]).unwrap(),
            Graph::path(6).unwrap(),
        ];
        let params = GossipParams::from_sequence(&graphs).unwrap();
        let x0 = random_matrix(6, 2, 3);
        let a = nrl_trajectory(&x0, &graphs, 8, &params).unwrap();
        let b = dense_trajectory(&x0, &graphs, 8, &params).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn spectral_bound_violation_is_reported() {
        let graphs = vec![Graph::complete(5).unwrap()];
        assert!(check_spectral_bound(&graphs, 3, 5.0 + 1e-9).is_ok());
        assert!(matches!(
            check_spectral_bound(&graphs, 3, 4.0),
            Err(Error::SpectralBoundViolation { step: 0, .. })
        ));
    }

    #[test]
    fn disconnected_skeleton_is_rejected() {
        let a = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let b = Graph::from_edges(4, [(0, 1), (2, 3), (1, 3)]).unwrap();
        assert_eq!(GossipParams::from_sequence(&[a, b]), Err(Error::DisconnectedSkeleton));
    }

    #[test]
    fn complete_graph_sandwich() {
        let g = Graph::complete(5).unwrap();
        let params = GossipParams::from_sequence(std::slice::from_ref(&g)).unwrap();
        assert!((params.chi() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = verify_ct_sandwich(&[g], &params, params.rounds(), 10, 1, 1e-9, &mut rng).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn chebyshev_degree_one_is_scaled_gossip() {
        let g = Graph::path(7).unwrap();
        let s = spectral_summary(&g).unwrap();
        let x0 = random_matrix(7, 1, 5);
        let cheb = chebyshev_static(&x0, &g, 1).unwrap();
        let eta = 2.0 / (s.lambda_max + s.lambda_min_plus);
        let plain = plain_gossip(&x0, &g, 1, eta).unwrap();
        assert!((cheb - plain).norm() < 1e-12);
    }

    #[test]
    fn chebyshev_keeps_the_mean() {
        let g = Graph::path(9).unwrap();
        let x0 = random_matrix(9, 2, 8);
        let out = chebyshev_static(&x0, &g, 4).unwrap();
        for j in 0..2 {
            assert!((out.column(j).sum() - x0.column(j).sum()).abs() < 1e-10);
        }
    }

    #[test]
    fn rounds_formula() {
        let p = GossipParams::new(4.0, 1.0).unwrap();
        assert_eq!(p.rounds(), (2.0 * 16f64.ln()).ceil() as usize);
        assert_eq!(p.beta(), 1.0 / 3.0);
    }
}
