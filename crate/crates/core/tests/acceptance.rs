//! One PASS/FAIL line per acceptance criterion; exits nonzero on any failure.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvlab::adversary::{span_trace, Schedule, Scheme, StepPolicy};
use tvlab::gossip::{accelerated_gossip_nrl, dense_trajectory, nrl_trajectory, verify_ct_sandwich, GossipParams};
use tvlab::graphcore::{spectral_summary, Graph};
use tvlab::harness::{run_schedule, shrinking_consensus_run, ExperimentConfig, Suite};
use tvlab::topologies::{bethe_tree, nested_path_tree, random_supergraph_sequence, Role};
use tvlab::tvopt::{run_agm_tv, ConsensusSequence};
use tvlab::worstcase::{extends_support, ChainProblem};

const POLY: Scheme = Scheme::Poly { d: 4, k: 4, t: 3 };
const LOG: Scheme = Scheme::Log { k: 8 };
const CONST: Scheme = Scheme::Const { d: 3, k: 6 };

/// Relative tolerance of the regression pins.
const PIN_REL: f64 = 1e-8;
const CHI_BETHE_3_4: f64 = 112.79286921549;
const CHI_NESTED_2_4: f64 = 75.06455504312;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion(id: usize, limit: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = body();
    let took = start.elapsed();
    let pass = out.pass && took < limit;
    println!(
        "{} criterion {id}: {} ({:.2}s, limit {}s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn edge_budgets() -> Outcome {
    let mut pass = 84.0 <= 12.0 * 255f64.log2();
    let mut parts = Vec::new();
    for (scheme, budget) in [(POLY, 60), (LOG, 84), (CONST, 24)] {
        let start = Instant::now();
        let (_, recs) = run_schedule(scheme, 500).unwrap();
        let max = recs.iter().map(|(r, _)| r.delta).max().unwrap();
        pass &= recs.len() == 500 && max <= budget && scheme.edge_budget() == budget && start.elapsed() < secs(5);
        parts.push(format!("{scheme:?} max delta {max} <= {budget}"));
    }
    outcome(pass, parts.join("; "))
}

fn frontier_counters() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (scheme, limit) in [(POLY, 3), (LOG, 7), (CONST, 3)] {
        let (_, recs) = run_schedule(scheme, 500).unwrap();
        let max = recs.iter().map(|(r, _)| r.frontier).max().unwrap();
        pass &= max <= limit;
        parts.push(format!("{scheme:?} max |U| {max} <= {limit}"));
    }
    outcome(pass, parts.join("; "))
}

fn information_flow() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (scheme, div) in [(POLY, 3), (LOG, 7), (CONST, 3)] {
        let mut s = Schedule::new(scheme).unwrap();
        let w = s.roles().w.len();
        let floor = w / div + 1;
        let t = s.information_flow().unwrap();
        pass &= t >= floor;
        parts.push(format!("{scheme:?} T {t} >= {floor}"));
        if scheme == POLY {
            let chi = spectral_summary(s.graphs().first().unwrap()).unwrap().chi;
            let bound = (1.0 - 2.0 / 3.0) * chi / (2.0 * 3.0);
            pass &= t as f64 >= bound;
            parts.push(format!("T {t} >= {bound:.4} from chi {chi:.6}"));
        }
    }
    outcome(pass, parts.join("; "))
}

fn span_bound() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for scheme in [POLY, LOG, CONST] {
        let s = Schedule::new(scheme).unwrap();
        let t = s.clone().information_flow().unwrap();
        let budget = 10 * t;
        let p = ChainProblem::new(s.roles().clone(), 1.0, 10.0, budget / t + 4).unwrap();
        let trace = span_trace(&mut s.clone(), &p, StepPolicy::ALTERNATING, budget, 8).unwrap();
        let ok = trace
            .first_reach
            .iter()
            .enumerate()
            .all(|(i, &l)| l >= i * t + i + 1);
        pass &= ok && trace.first_reach.len() >= 2;
        parts.push(format!("{scheme:?} T {t} l_m {:?}", trace.first_reach));
    }
    outcome(pass, parts.join("; "))
}

/// Path skeleton on 20 vertices with up to 3 extra random edges per step.
fn ct_schedule() -> (Vec<Graph>, GossipParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let graphs = random_supergraph_sequence(&Graph::path(20).unwrap(), 300, 3, &mut rng).unwrap();
    let params = GossipParams::from_sequence(&graphs).unwrap();
    (graphs, params)
}

fn ct_sandwich() -> Outcome {
    let (graphs, params) = ct_schedule();
    let t = params.rounds();
    let want = (params.chi().sqrt() * (4.0 * params.chi()).ln()).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = verify_ct_sandwich(&graphs, &params, t, 100, 1, 0.0, &mut rng).unwrap();
    let (lo, hi) = (1.0 - 0.5f64.sqrt() - 1e-9, 1.0 + 0.5f64.sqrt() + 1e-9);
    let pass = t == want && r.trials.len() == 100 && r.min_ratio >= lo && r.max_ratio <= hi;
    outcome(
        pass,
        format!("chi {:.4} T {t}: ratios in [{:.6}, {:.6}] within [{lo:.6}, {hi:.6}]", params.chi(), r.min_ratio, r.max_ratio),
    )
}

fn ct_structure() -> Outcome {
    let (graphs, params) = ct_schedule();
    let t = params.rounds();
    let ct = |x: &DMatrix<f64>| accelerated_gossip_nrl(x, &graphs, t, &params).unwrap().1;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut lin, mut rows) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let u = DMatrix::from_fn(20, 1, |_, _| rng.gen_range(-1.0..1.0));
        let v = DMatrix::from_fn(20, 1, |_, _| rng.gen_range(-1.0..1.0));
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let x = &u * a + &v * b;
        let lhs = ct(&x);
        let rhs = ct(&u) * a + ct(&v) * b;
        lin = lin.max((&lhs - &rhs).norm() / rhs.norm());
        rows = rows.max(lhs.column(0).sum().abs() / x.norm());
    }
    let c = DMatrix::from_element(20, 1, 1.7);
    let fixed = ct(&c).norm();
    let pass = lin <= 1e-10 && rows <= 1e-10 && fixed <= 1e-12;
    outcome(pass, format!("linearity {lin:.2e}, row sums {rows:.2e}, consensus image {fixed:.2e}"))
}

fn potential_monotone() -> Outcome {
    let cfg = ExperimentConfig {
        suite: Suite::Tvopt,
        ..ExperimentConfig::default()
    };
    let run = shrinking_consensus_run(&cfg).unwrap();
    let psi = &run.trace.psi;
    let monotone = psi.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    let rows = &run.certificate.rows;
    let f_ok = rows.iter().all(|r| r.f_gap <= r.f_bound * (1.0 + 1e-9));
    let d_ok = rows.iter().all(|r| r.dist_sq <= r.dist_bound * (1.0 + 1e-9));
    let worst = rows.iter().map(|r| r.f_gap / r.f_bound).fold(0.0, f64::max);
    outcome(
        monotone && f_ok && d_ok && rows.len() == 201,
        format!("psi monotone {monotone}, f bound {f_ok} (worst ratio {worst:.3e}), dist bound {d_ok}"),
    )
}

fn gradient_oracle() -> Outcome {
    let (_, roles) = POLY.build().unwrap();
    let p = ChainProblem::new(roles, 1.0, 10.0, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let v = rng.gen_range(0..p.n);
        let x = DVector::from_fn(10, |_, _| rng.gen_range(-2.0..2.0));
        let g = p.local_gradient(v, &x).unwrap();
        let fd = DVector::from_fn(10, |i, _| {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            (p.local_value(v, &up).unwrap() - p.local_value(v, &down).unwrap()) / (2.0 * h)
        });
        worst = worst.max((&fd - &g).norm() / g.norm().max(1e-12));
    }
    let wide = ChainProblem::new(POLY.build().unwrap().1, 1.0, 10.0, 14).unwrap();
    let reps = [Role::V1, Role::V2, Role::W].map(|r| (0..wide.n).find(|&v| wide.partition.role(v) == r).unwrap());
    let mut extension = true;
    for m in 0..12 {
        let x = DVector::from_fn(14, |i, _| if i < m { rng.gen_range(0.5..1.5) } else { 0.0 });
        for &v in &reps {
            let g = wide.local_gradient(v, &x).unwrap();
            let beyond = (m + 1..14).all(|i| g[i] == 0.0);
            let lit = g[m] != 0.0;
            extension &= beyond && lit == extends_support(wide.partition.role(v), m);
        }
    }
    outcome(
        worst <= 1e-6 && extension,
        format!("max finite-difference rel error {worst:.2e}; support extension exact for m < 12: {extension}"),
    )
}

fn equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let graphs = random_supergraph_sequence(&Graph::path(10).unwrap(), 50, 3, &mut rng).unwrap();
    let params = GossipParams::from_sequence(&graphs).unwrap();
    let x0 = DMatrix::from_fn(10, 2, |_, _| rng.gen_range(-1.0..1.0));
    let a = nrl_trajectory(&x0, &graphs, 50, &params).unwrap();
    let b = dense_trajectory(&x0, &graphs, 50, &params).unwrap();
    let dense_gap = a.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);

    let g = vec![Graph::from_edges(10, (0..9).map(|i| (i, i + 1)).chain([(0, 5), (3, 8)])).unwrap()];
    let sp = GossipParams::from_sequence(&g).unwrap();
    let x = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
    let gossip = nrl_trajectory(&DMatrix::from_column_slice(10, 1, x.as_slice()), &g, 50, &sp).unwrap();
    let seq = ConsensusSequence::with_params(&g, &x, sp).unwrap();
    let run = run_agm_tv(&seq, &x, 50, 0).unwrap();
    let agm_gap = gossip
        .iter()
        .zip(&run.trajectory.x)
        .map(|(p, q)| (p.column(0) - q).norm())
        .fold(0.0, f64::max);
    outcome(
        dense_gap <= 1e-12 && agm_gap <= 1e-12 && a.len() == 51,
        format!("per-node vs dense {dense_gap:.2e}; static gossip vs nesterov {agm_gap:.2e}"),
    )
}

fn spectral_pins() -> Outcome {
    let star = spectral_summary(&Graph::star(4, 0).unwrap()).unwrap().chi;
    let complete = (2..=8)
        .map(|n| (spectral_summary(&Graph::complete(n).unwrap()).unwrap().chi - 1.0).abs())
        .fold(0.0, f64::max);
    let bethe = spectral_summary(&bethe_tree(3, 4).unwrap().graph).unwrap().chi;
    let nested = spectral_summary(&nested_path_tree(2, 4).unwrap().graph).unwrap().chi;
    let mut lam = Vec::new();
    for (d, k) in [(2, 3), (2, 4), (3, 3)] {
        lam.push(spectral_summary(&nested_path_tree(d, k).unwrap().graph).unwrap().lambda_max);
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let pass = (star - 4.0).abs() <= 1e-12
        && complete <= 1e-12
        && rel(bethe, CHI_BETHE_3_4) <= PIN_REL
        && rel(nested, CHI_NESTED_2_4) <= PIN_REL
        && lam.iter().all(|&l| (4.0..=6.0).contains(&l));
    outcome(
        pass,
        format!(
            "star {star:.15}, complete max dev {complete:.1e}, bethe(3,4) {bethe:.11}, nested(2,4) {nested:.11}, lambda_max {lam:.4?}"
        ),
    )
}

fn main() {
    let results = [
        criterion(1, secs(15), edge_budgets),
        criterion(2, secs(15), frontier_counters),
        criterion(3, secs(30), information_flow),
        criterion(4, secs(10), span_bound),
        criterion(5, secs(20), ct_sandwich),
        criterion(6, secs(20), ct_structure),
        criterion(7, secs(5), potential_monotone),
        criterion(8, secs(2), gradient_oracle),
        criterion(9, secs(2), equivalence),
        criterion(10, secs(10), spectral_pins),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
