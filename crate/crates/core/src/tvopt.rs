//! Accelerated Nesterov method over uniformly non-increasing sequences of
//! smooth strongly convex functions with a common minimizer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gossip::{effective_graph, graph_at, GossipParams};
use crate::graphcore::{laplacian, laplacian_monotone_psd_check, symmetric_eigenvalues, Graph, PSD_FLOOR};

/// Relative tolerance for potential monotonicity and rate checks.
pub const MONOTONE_REL_TOL: f64 = 1e-9;
/// Relative tolerance for the two forms of the `z` update.
pub const Z_REL_TOL: f64 = 1e-10;
/// Random probes per step for sampled monotonicity checks.
pub const PROBES_PER_STEP: usize = 8;
/// Relative roundoff allowed on `f_k(y')` once the iterates have converged.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// A sequence `f_0, f_1, ..` sharing `μ`, `L` and a minimizer.
pub trait FunctionSequence {
    fn dim(&self) -> usize;
    fn value(&self, k: usize, x: &DVector<f64>) -> f64;
    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;
    fn mu(&self) -> f64;
    fn l(&self) -> f64;
    fn minimizer(&self) -> &DVector<f64>;

    /// Exact answer to `f_{k+1} ≤ f_k` everywhere, when one is available.
    fn exact_monotone(&self, _k: usize) -> Option<bool> {
        None
    }

    fn kappa(&self) -> f64 {
        self.l() / self.mu()
    }
}

/// `f_k(x) = ½ (x - x*)ᵀ A_k (x - x*)`; the last matrix repeats.
#[derive(Debug, Clone)]
pub struct QuadraticSequence {
    matrices: Vec<DMatrix<f64>>,
    minimizer: DVector<f64>,
    mu: f64,
    l: f64,
}

impl QuadraticSequence {
    /// `μ` and `L` are the extreme eigenvalues over all matrices.
    pub fn new(matrices: Vec<DMatrix<f64>>, minimizer: DVector<f64>) -> Result<Self> {
        let dim = minimizer.len();
        if matrices.is_empty() {
            return Err(Error::InvalidParams("empty matrix sequence".into()));
        }
        let (mut mu, mut l) = (f64::INFINITY, 0.0f64);
        for a in &matrices {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: a.nrows(),
                });
            }
            let eigs = symmetric_eigenvalues(a);
            mu = mu.min(eigs[0]);
            l = l.max(eigs[dim - 1]);
        }
        if mu <= 0.0 {
            return Err(Error::InvalidParams("matrices must be positive definite".into()));
        }
        Ok(QuadraticSequence {
            matrices,
            minimizer,
            mu,
            l,
        })
    }

    /// Same matrices with declared constants.
    pub fn with_constants(mut self, mu: f64, l: f64) -> Self {
        self.mu = mu;
        self.l = l;
        self
    }

    pub fn matrix(&self, k: usize) -> &DMatrix<f64> {
        &self.matrices[k.min(self.matrices.len() - 1)]
    }
}

impl FunctionSequence for QuadraticSequence {
    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn value(&self, k: usize, x: &DVector<f64>) -> f64 {
        let e = x - &self.minimizer;
        0.5 * e.dot(&(self.matrix(k) * &e))
    }

    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self.matrix(k) * (x - &self.minimizer)
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn l(&self) -> f64 {
        self.l
    }

    fn minimizer(&self) -> &DVector<f64> {
        &self.minimizer
    }

    fn exact_monotone(&self, k: usize) -> Option<bool> {
        let diff = self.matrix(k) - self.matrix(k + 1);
        let scale = self.matrix(k).norm().max(1.0);
        Some(symmetric_eigenvalues(&diff)[0] >= PSD_FLOOR * scale)
    }
}

/// `h_k(x) = ½ xᵀ Lap(Ĝ_k) x` over the running edge intersections of a graph
/// sequence, with `μ = λ_min^+`, `L = λ_max` and the average of `x0` as the
/// common minimizer.
#[derive(Debug, Clone)]
pub struct ConsensusSequence {
    effective: Vec<Graph>,
    laplacians: Vec<DMatrix<f64>>,
    params: GossipParams,
    minimizer: DVector<f64>,
}

impl ConsensusSequence {
    pub fn new(graphs: &[Graph], x0: &DVector<f64>) -> Result<Self> {
        let params = GossipParams::from_sequence(graphs)?;
        ConsensusSequence::with_params(graphs, x0, params)
    }

    pub fn with_params(graphs: &[Graph], x0: &DVector<f64>, params: GossipParams) -> Result<Self> {
        let first = effective_graph(&graphs[..1])?;
        if x0.len() != first.n() {
            return Err(Error::DimensionMismatch {
                expected: first.n(),
                actual: x0.len(),
            });
        }
        let mut effective = vec![first];
        for k in 1..graphs.len() {
            let next = effective[k - 1].intersection(graph_at(graphs, k))?;
            effective.push(next);
        }
        let laplacians = effective.iter().map(laplacian).collect();
        let minimizer = DVector::from_element(x0.len(), x0.mean());
        Ok(ConsensusSequence {
            effective,
            laplacians,
            params,
            minimizer,
        })
    }

    pub fn params(&self) -> &GossipParams {
        &self.params
    }

    fn index(&self, k: usize) -> usize {
        k.min(self.effective.len() - 1)
    }
}

impl FunctionSequence for ConsensusSequence {
    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn value(&self, k: usize, x: &DVector<f64>) -> f64 {
        // same value as on x, without cancelling the consensus component
        let e = x - &self.minimizer;
        0.5 * e.dot(&(&self.laplacians[self.index(k)] * &e))
    }

    fn gradient(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.laplacians[self.index(k)] * x
    }

    fn mu(&self) -> f64 {
        self.params.lambda_min_plus
    }

    fn l(&self) -> f64 {
        self.params.lambda_max
    }

    fn minimizer(&self) -> &DVector<f64> {
        &self.minimizer
    }

    fn exact_monotone(&self, k: usize) -> Option<bool> {
        let (a, b) = (self.index(k), self.index(k + 1));
        laplacian_monotone_psd_check(&self.effective[a], &self.effective[b]).ok()
    }
}

/// `(√κ - 1)/(√κ + 1)`, or 0 when `κ = 1`.
pub fn momentum(kappa: f64) -> f64 {
    let s = kappa.sqrt();
    if s <= 1.0 {
        0.0
    } else {
        (s - 1.0) / (s + 1.0)
    }
}

/// One step: `y' = x - ∇f_k(x)/L`, `x' = (1+β) y' - β y`.
pub fn agm_tv_step(
    seq: &dyn FunctionSequence,
    k: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let beta = momentum(seq.kappa());
    let y_next = x - seq.gradient(k, x) / seq.l();
    let x_next = &y_next * (1.0 + beta) - y * beta;
    (x_next, y_next)
}

/// `z = x/τ - (1-τ)/τ · y`.
pub fn z_value(tau: f64, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    x / tau - y * ((1.0 - tau) / tau)
}

/// `z' = z/(1+γ) + γ x/(1+γ) - γ ∇f_k(x)/(μ(1+γ))`.
pub fn z_recursion(
    gamma: f64,
    mu: f64,
    z: &DVector<f64>,
    x: &DVector<f64>,
    grad: &DVector<f64>,
) -> DVector<f64> {
    let s = 1.0 + gamma;
    z / s + x * (gamma / s) - grad * (gamma / (mu * s))
}

fn potential_constants(seq: &dyn FunctionSequence) -> Result<(f64, f64)> {
    let s = seq.kappa().sqrt();
    if s <= 1.0 {
        return Err(Error::KappaOne);
    }
    Ok((1.0 / (s - 1.0), 1.0 / (s + 1.0)))
}

/// `Ψ_k = (1+γ)^k (f_k(y) - f_k(x*) + μ/2 ‖z - x*‖²)`.
pub fn potential(
    seq: &dyn FunctionSequence,
    k: usize,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<f64> {
    let (gamma, _) = potential_constants(seq)?;
    let xs = seq.minimizer();
    let inner = seq.value(k, y) - seq.value(k, xs) + 0.5 * seq.mu() * (z - xs).norm_squared();
    Ok((1.0 + gamma).powi(k as i32) * inner)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTrace {
    pub psi: Vec<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub z: Vec<DVector<f64>>,
    /// Smallest resolvable bracket of `Ψ` before the `(1+γ)^k` factor.
    pub floor: f64,
}

impl PotentialTrace {
    /// `Ψ_{k+1} ≤ Ψ_k` up to relative noise and the resolution floor.
    pub fn step_ok(&self, k: usize) -> bool {
        k == 0
            || self.psi[k]
                <= self.psi[k - 1] * (1.0 + MONOTONE_REL_TOL)
                    + (1.0 + self.gamma).powi(k as i32) * self.floor
    }

    pub fn is_monotone(&self) -> bool {
        (0..self.psi.len()).all(|k| self.step_ok(k))
    }
}

/// Per-iterate row of the convergence certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRow {
    pub k: usize,
    pub f_gap: f64,
    pub dist_sq: f64,
    pub psi: f64,
    pub psi_monotone: bool,
    pub f_bound: f64,
    pub dist_bound: f64,
    pub rate_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub r_sq: f64,
    pub rows: Vec<CertificateRow>,
}

impl Certificate {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.rate_ok && r.psi_monotone)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgmRun {
    pub trajectory: Trajectory,
    pub trace: PotentialTrace,
    pub certificate: Certificate,
}

fn within(lhs: f64, rhs: f64, scale: f64) -> bool {
    lhs <= rhs + MONOTONE_REL_TOL * scale.abs().max(rhs.abs())
}

/// Spot check of `f_{k+1} ≤ f_k`, exact when the sequence supports it.
fn check_monotone(
    seq: &dyn FunctionSequence,
    k: usize,
    points: &[&DVector<f64>],
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if let Some(ok) = seq.exact_monotone(k) {
        return if ok {
            Ok(())
        } else {
            Err(Error::ContractViolation {
                step: k,
                detail: "f_k - f_{k+1} is not positive semidefinite".into(),
            })
        };
    }
    let xs = seq.minimizer();
    let probes: Vec<DVector<f64>> = (0..PROBES_PER_STEP)
        .map(|_| xs + DVector::from_fn(seq.dim(), |_, _| rng.gen_range(-radius..radius)))
        .collect();
    for p in points.iter().copied().chain(probes.iter()) {
        let (now, next) = (seq.value(k, p), seq.value(k + 1, p));
        if !within(next, now, now) {
            return Err(Error::ContractViolation {
                step: k,
                detail: format!("f_(k+1) = {next} exceeds f_k = {now}"),
            });
        }
    }
    Ok(())
}

/// Runs `steps` iterations from `y_0 = x_0 = x0`, checking the `z` identity,
/// the gradient-step inequality and monotonicity of the sequence along the
/// way, and records the rate certificate for every iterate.
pub fn run_agm_tv(
    seq: &dyn FunctionSequence,
    x0: &DVector<f64>,
    steps: usize,
    seed: u64,
) -> Result<AgmRun> {
    if x0.len() != seq.dim() {
        return Err(Error::DimensionMismatch {
            expected: seq.dim(),
            actual: x0.len(),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidParams("need at least one step".into()));
    }
    let (gamma, tau) = potential_constants(seq)?;
    let (mu, l) = (seq.mu(), seq.l());
    let xs = seq.minimizer().clone();
    let r_sq = (x0 - &xs).norm_squared();
    let radius = r_sq.sqrt().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut traj = Trajectory {
        x: vec![x0.clone()],
        y: vec![x0.clone()],
    };
    let mut z = vec![z_value(tau, x0, x0)];
    let mut psi = vec![potential(seq, 0, x0, &z[0])?];
    for k in 0..steps {
        let (x, y) = (&traj.x[k], &traj.y[k]);
        let grad = seq.gradient(k, x);
        let (x_next, y_next) = agm_tv_step(seq, k, x, y);

        let direct = z_value(tau, &x_next, &y_next);
        let recursed = z_recursion(gamma, mu, &z[k], x, &grad);
        let gap = (&direct - &recursed).norm();
        if gap > Z_REL_TOL * direct.norm().max(x.norm()).max(1.0) {
            return Err(Error::Invariant {
                step: k,
                detail: format!("z update forms differ by {gap}"),
            });
        }

        let fx = seq.value(k, x);
        let descent = fx - grad.norm_squared() / (2.0 * l);
        // y' carries an absolute error of order eps |x| since x* need not be 0
        let noise = ROUNDOFF_FLOOR * l * x.norm() * (x - &xs).norm().max((&y_next - &xs).norm());
        if !within(seq.value(k, &y_next), descent + noise, fx) {
            return Err(Error::ContractViolation {
                step: k,
                detail: "gradient step does not decrease f_k by |g|^2/(2L)".into(),
            });
        }
        check_monotone(seq, k, &[x, y, &y_next], radius, &mut rng)?;

        psi.push(potential(seq, k + 1, &y_next, &direct)?);
        z.push(direct);
        traj.x.push(x_next);
        traj.y.push(y_next);
    }

    // z carries an absolute error of order eps |x| / τ
    let resolution = 64.0 * f64::EPSILON * (xs.norm() + r_sq.sqrt()) / tau;
    let trace = PotentialTrace {
        psi,
        gamma,
        tau,
        z,
        floor: (l + mu) * resolution * resolution,
    };
    let rate = 1.0 - 1.0 / seq.kappa().sqrt();
    let rows = (0..=steps)
        .map(|k| {
            let y = &traj.y[k];
            let f_gap = seq.value(k, y) - seq.value(k, &xs);
            let dist_sq = (y - &xs).norm_squared();
            let decay = rate.powi(k as i32);
            let f_bound = (l + mu) * r_sq / 2.0 * decay;
            let dist_bound = (l + mu) * r_sq / mu * decay;
            let scale = (l + mu) * r_sq;
            CertificateRow {
                k,
                f_gap,
                dist_sq,
                psi: trace.psi[k],
                psi_monotone: trace.step_ok(k),
                f_bound,
                dist_bound,
                rate_ok: f_gap <= f_bound * (1.0 + MONOTONE_REL_TOL) + 1e-14 * scale
                    && dist_sq <= dist_bound * (1.0 + MONOTONE_REL_TOL) + 1e-14 * scale / mu,
            }
        })
        .collect();

    Ok(AgmRun {
        trajectory: traj,
        trace,
        certificate: Certificate { r_sq, rows },
    })
}
