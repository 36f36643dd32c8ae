use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvlab::gossip::{
    accelerated_gossip_nrl, center, chebyshev_static, dense_trajectory, effective_graph,
    nrl_trajectory, plain_gossip, GossipParams,
};
use tvlab::graphcore::{laplacian, laplacian_monotone_psd_check, spectral_summary, Graph};
use tvlab::topologies::{random_supergraph_sequence, shrinking_sequence};
use tvlab::tvopt::{run_agm_tv, ConsensusSequence};

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0))
}

fn supergraphs(n: usize, steps: usize, seed: u64) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_supergraph_sequence(&Graph::path(n).unwrap(), steps, 3, &mut rng).unwrap()
}

/// `T_K(ω)` for any real `ω`.
fn chebyshev_t(k: usize, w: f64) -> f64 {
    let k = k as f64;
    if w.abs() <= 1.0 {
        (k * w.acos()).cos()
    } else {
        let v = (k * w.abs().acosh()).cosh();
        if w < 0.0 && (k as i64) % 2 == 1 {
            -v
        } else {
            v
        }
    }
}

#[test]
fn chebyshev_matches_dense_polynomial_evaluation() {
    let g = Graph::path(16).unwrap();
    let s = spectral_summary(&g).unwrap();
    let k = s.chi.sqrt().ceil() as usize;
    let eig = SymmetricEigen::new(laplacian(&g));
    let (lmax, lmin) = (s.lambda_max, s.lambda_min_plus);
    let a = (lmax + lmin) / (lmax - lmin);
    let p: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| chebyshev_t(k, (lmax + lmin - 2.0 * l) / (lmax - lmin)) / chebyshev_t(k, a))
        .collect();
    let poly = &eig.eigenvectors * DMatrix::from_diagonal(&DVector::from_vec(p)) * eig.eigenvectors.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let x = center(&random_matrix(&mut rng, 16, 2));
        let fast = chebyshev_static(&x, &g, k).unwrap();
        let dense = &poly * &x;
        assert!((&fast - &dense).norm() <= 1e-10 * x.norm());
        let factor = fast.norm() / x.norm();
        assert!((factor - dense.norm() / x.norm()).abs() < 1e-10);
        assert!(factor <= 1.0 / chebyshev_t(k, a) + 1e-10);
    }
}

#[test]
fn chebyshev_consensus_is_kept() {
    let g = Graph::path(10).unwrap();
    let x = DMatrix::from_element(10, 1, 2.5);
    let out = chebyshev_static(&x, &g, 4).unwrap();
    assert!((out - x).norm() < 1e-12);
}

#[test]
fn per_node_equals_dense_on_random_supergraphs() {
    let graphs = supergraphs(10, 50, 9);
    let params = GossipParams::from_sequence(&graphs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x0 = random_matrix(&mut rng, 10, 3);
    let a = nrl_trajectory(&x0, &graphs, 50, &params).unwrap();
    let b = dense_trajectory(&x0, &graphs, 50, &params).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).norm() <= 1e-12 * x0.norm().max(1.0));
    }
}

#[test]
fn mean_is_preserved() {
    let graphs = supergraphs(12, 80, 2);
    let params = GossipParams::from_sequence(&graphs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x0 = random_matrix(&mut rng, 12, 2);
    for x in nrl_trajectory(&x0, &graphs, 80, &params).unwrap() {
        for j in 0..2 {
            let (now, start) = (x.column(j).sum(), x0.column(j).sum());
            assert!((now - start).abs() <= 1e-10 * x0.norm());
        }
    }
}

#[test]
fn effective_graphs_shrink_monotonically() {
    let graphs = supergraphs(10, 30, 5);
    let mut prev = effective_graph(&graphs[..1]).unwrap();
    for k in 2..=graphs.len() {
        let next = effective_graph(&graphs[..k]).unwrap();
        assert!(next.is_subgraph_of(&prev));
        assert!(laplacian_monotone_psd_check(&prev, &next).unwrap());
        assert!(Graph::path(10).unwrap().is_subgraph_of(&next));
        prev = next;
    }
}

#[test]
fn ct_is_linear_and_lands_in_zero_sum_space() {
    let graphs = supergraphs(12, 100, 6);
    let params = GossipParams::from_sequence(&graphs).unwrap();
    let t = params.rounds();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let u = random_matrix(&mut rng, 12, 1);
        let v = random_matrix(&mut rng, 12, 1);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let ct = |x: &DMatrix<f64>| accelerated_gossip_nrl(x, &graphs, t, &params).unwrap().1;
        let lhs = ct(&(&u * a + &v * b));
        let rhs = ct(&u) * a + ct(&v) * b;
        assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
        assert!(lhs.column(0).sum().abs() <= 1e-10 * (&u * a + &v * b).norm());
    }
}

#[test]
fn static_gossip_is_nesterov_on_the_laplacian_quadratic() {
    let g = Graph::from_edges(10, (0..9).map(|i| (i, i + 1)).chain([(0, 5), (2, 7)])).unwrap();
    let graphs = vec![g];
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x0 = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
    let params = GossipParams::from_sequence(&graphs).unwrap();
    let gossip = nrl_trajectory(&DMatrix::from_column_slice(10, 1, x0.as_slice()), &graphs, 50, &params).unwrap();
    let seq = ConsensusSequence::with_params(&graphs, &x0, params).unwrap();
    let run = run_agm_tv(&seq, &x0, 50, 0).unwrap();
    for (a, b) in gossip.iter().zip(&run.trajectory.x) {
        assert!((a.column(0) - b).norm() <= 1e-12);
    }
}

#[test]
fn shrinking_consensus_agrees_across_modules() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let graphs = shrinking_sequence(&Graph::path(14).unwrap(), 20, 120, 5, &mut rng).unwrap();
    let x0 = DVector::from_fn(14, |_, _| rng.gen_range(-1.0..1.0));
    let seq = ConsensusSequence::new(&graphs, &x0).unwrap();
    let params = *seq.params();
    let steps = params.rounds();
    let run = run_agm_tv(&seq, &x0, steps, 0).unwrap();
    let gossip = nrl_trajectory(&DMatrix::from_column_slice(14, 1, x0.as_slice()), &graphs, steps, &params).unwrap();
    for (a, b) in gossip.iter().zip(&run.trajectory.x) {
        assert!((a.column(0) - b).norm() <= 1e-12);
    }
    // the distance certificate implies the consensus contraction bound
    let chi = params.chi();
    let xbar = seq_mean(&x0);
    let r_sq = (&x0 - &xbar).norm_squared();
    let y_t = run.trajectory.y.last().unwrap();
    let bound = 2.0 * chi * r_sq * (1.0 - 1.0 / chi.sqrt()).powi(steps as i32);
    assert!((y_t - &xbar).norm_squared() <= bound);
    assert!(run.certificate.all_ok());
}

fn seq_mean(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_element(x.len(), x.mean())
}

#[test]
fn plain_gossip_contracts_at_the_spectral_rate() {
    let g = Graph::path(8).unwrap();
    let s = spectral_summary(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = center(&random_matrix(&mut rng, 8, 1));
    let out = plain_gossip(&x, &g, 30, 1.0 / s.lambda_max).unwrap();
    let rate = (1.0 - s.lambda_min_plus / s.lambda_max).powi(30);
    assert!(out.norm() <= rate * x.norm() + 1e-12);
}
