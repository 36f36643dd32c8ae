//! Worst-case chain objectives placed on the vertex roles of a partition.
//!
//! Coordinates are 1-indexed in the formulas below and 0-indexed in vectors.
//!
//! * type 1: `μ/(2n)‖x‖² + (L-μ)/(4|V1|) [(x_1 - 1)² + Σ (x_{2j} - x_{2j+1})²]`
//! * type 2: `μ/(2n)‖x‖² + (L-μ)/(4|V2|) Σ (x_{2j-1} - x_{2j})²`
//! * neutral: `μ/(2n)‖x‖²`
//!
//! Sums run over pairs that fit inside the working dimension.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::topologies::{Role, RolePartition};

/// The distributed worst-case problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainProblem {
    pub partition: RolePartition,
    pub mu: f64,
    pub l: f64,
    pub n: usize,
    pub dim: usize,
    pub kappa_g: f64,
    pub kappa_l: f64,
}

impl ChainProblem {
    pub fn new(partition: RolePartition, mu: f64, l: f64, dim: usize) -> Result<Self> {
        if !(mu > 0.0 && l > mu) {
            return Err(Error::InvalidParams(format!(
                "need L > mu > 0, got mu = {mu}, L = {l}"
            )));
        }
        if dim < 2 {
            return Err(Error::InvalidParams(format!("dim must be >= 2, got {dim}")));
        }
        if partition.v1.is_empty() {
            return Err(Error::InvalidParams("type-1 set is empty".into()));
        }
        let n = partition.n();
        let nf = n as f64;
        let v1 = partition.v1.len() as f64;
        let kappa_l = ((l - mu) / (2.0 * v1) + mu / nf) / (mu / nf);
        Ok(ChainProblem {
            partition,
            mu,
            l,
            n,
            dim,
            kappa_g: l / mu,
            kappa_l,
        })
    }

    fn coupling(&self, role: Role) -> f64 {
        match role {
            Role::V1 => (self.l - self.mu) / (4.0 * self.partition.v1.len() as f64),
            Role::V2 => (self.l - self.mu) / (4.0 * self.partition.v2.len() as f64),
            Role::W => 0.0,
        }
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// 0-indexed coordinate pairs coupled by a role's chain term.
    fn pairs(&self, role: Role) -> impl Iterator<Item = (usize, usize)> {
        let start = match role {
            Role::V1 => 1, // (x_2, x_3), (x_4, x_5), ..
            Role::V2 => 0, // (x_1, x_2), (x_3, x_4), ..
            Role::W => self.dim,
        };
        let dim = self.dim;
        (start..dim).step_by(2).filter(move |&i| i + 1 < dim).map(|i| (i, i + 1))
    }

    pub fn local_value(&self, v: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_len(x)?;
        let role = self.partition.role(v);
        let mut chain: f64 = self.pairs(role).map(|(i, j)| (x[i] - x[j]).powi(2)).sum();
        if role == Role::V1 {
            chain += (x[0] - 1.0).powi(2);
        }
        Ok(self.mu / (2.0 * self.n as f64) * x.norm_squared() + self.coupling(role) * chain)
    }

    /// Gradient of the vertex function of `v` at `x`.
    pub fn local_gradient(&self, v: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x)?;
        let role = self.partition.role(v);
        let c = self.coupling(role);
        let mut g = x * (self.mu / self.n as f64);
        for (i, j) in self.pairs(role) {
            let t = 2.0 * c * (x[i] - x[j]);
            g[i] += t;
            g[j] -= t;
        }
        if role == Role::V1 {
            g[0] += 2.0 * c * (x[0] - 1.0);
        }
        Ok(g)
    }

    /// Value of `f = (1/n) Σ_v f_v`.
    pub fn global_value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for v in 0..self.n {
            total += self.local_value(v, x)?;
        }
        Ok(total / self.n as f64)
    }

    pub fn global_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.dim);
        for v in 0..self.n {
            g += self.local_gradient(v, x)?;
        }
        Ok(g / self.n as f64)
    }

    /// Constant Hessian of the global function, assembled column by column.
    pub fn global_hessian(&self) -> DMatrix<f64> {
        let zero = DVector::zeros(self.dim);
        let base = self.global_gradient(&zero).expect("dimension matches");
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            let mut e = zero.clone();
            e[j] = 1.0;
            let col = self.global_gradient(&e).expect("dimension matches") - &base;
            h.set_column(j, &col);
        }
        h
    }

    /// Strong convexity of the assembled global function: `μ/n`.
    pub fn global_mu(&self) -> f64 {
        self.mu / self.n as f64
    }

    /// Smoothness bound of the assembled global function: `(2L - μ)/n`.
    pub fn global_l(&self) -> f64 {
        (2.0 * self.l - self.mu) / self.n as f64
    }

    /// Condition number whose geometric ratio gives the untruncated minimizer.
    pub fn effective_kappa(&self) -> f64 {
        self.global_l() / self.global_mu()
    }

    /// Geometric minimizer of the untruncated global function, cut to `dim`.
    pub fn global_optimum(&self) -> DVector<f64> {
        geometric_optimum(self.effective_kappa(), self.dim)
    }
}

/// `(√κ - 1)/(√κ + 1)`.
pub fn chain_ratio(kappa: f64) -> f64 {
    let s = kappa.sqrt();
    (s - 1.0) / (s + 1.0)
}

/// Vector with entries `ratio^p`, `p = 1..=dim`.
pub fn geometric_optimum(kappa: f64, dim: usize) -> DVector<f64> {
    let q = chain_ratio(kappa);
    DVector::from_iterator(dim, (1..=dim).map(|p| q.powi(p as i32)))
}

/// Whether a gradient of a vertex with this role can light up coordinate
/// `m + 1` when its input is supported on coordinates `1..=m`.
pub fn extends_support(role: Role, m: usize) -> bool {
    match role {
        Role::V1 => m % 2 == 0,
        Role::V2 => m % 2 == 1,
        Role::W => false,
    }
}

/// How a family's lower bound relates local and global condition numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaScheme {
    Poly { t: usize },
    Log,
    Const,
}

/// Lower bound on the global condition number given the local one.
pub fn kappa_global_bound(kappa_l: f64, scheme: KappaScheme) -> f64 {
    match scheme {
        KappaScheme::Poly { t } => (kappa_l - 1.0) / (2.0 * t as f64) + 1.0,
        KappaScheme::Log => 0.4 * (kappa_l - 1.0) + 1.0,
        KappaScheme::Const => (kappa_l - 1.0) / 6.0 + 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphcore::symmetric_eigenvalues;
    use std::collections::BTreeSet;

    fn small_problem(dim: usize) -> ChainProblem {
        let v1: BTreeSet<usize> = [0, 1].into();
        let v2: BTreeSet<usize> = [5, 6].into();
        let p = RolePartition::from_sets(7, v1, v2).unwrap();
        ChainProblem::new(p, 0.5, 10.0, dim).unwrap()
    }

    #[test]
    fn neutral_gradient_at_origin_is_zero() {
        let p = small_problem(6);
        let g = p.local_gradient(3, &DVector::zeros(6)).unwrap();
        assert_eq!(g, DVector::zeros(6));
    }

    #[test]
    fn type_one_gradient_at_origin() {
        let p = small_problem(6);
        let g = p.local_gradient(0, &DVector::zeros(6)).unwrap();
        let want = -(p.l - p.mu) / (2.0 * 2.0);
        assert_eq!(g[0], want);
        assert!(g.iter().skip(1).all(|&e| e == 0.0));
    }

    #[test]
    fn dimension_is_checked() {
        let p = small_problem(6);
        assert_eq!(
            p.local_gradient(0, &DVector::zeros(5)),
            Err(Error::DimensionMismatch { expected: 6, actual: 5 })
        );
    }

    #[test]
    fn kappa_local_formula() {
        let p = small_problem(4);
        let want = ((10.0 - 0.5) / 4.0 + 0.5 / 7.0) / (0.5 / 7.0);
        assert!((p.kappa_l - want).abs() < 1e-12 * want);
    }

    #[test]
    fn kappa_bounds() {
        assert_eq!(kappa_global_bound(7.0, KappaScheme::Poly { t: 3 }), 2.0);
        assert!((kappa_global_bound(6.0, KappaScheme::Log) - 3.0).abs() < 1e-15);
        assert_eq!(kappa_global_bound(13.0, KappaScheme::Const), 3.0);
    }

    #[test]
    fn geometric_optimum_cases() {
        assert_eq!(geometric_optimum(1.0, 4), DVector::zeros(4));
        let x = geometric_optimum(4.0, 3);
        for (p, e) in x.iter().enumerate() {
            assert!((e - 3f64.powi(-(p as i32 + 1))).abs() < 1e-15);
        }
    }

    #[test]
    fn optimum_is_stationary_up_to_the_tail() {
        let p = small_problem(12);
        let x = p.global_optimum();
        let g = p.global_gradient(&x).unwrap();
        let tail = x[p.dim - 1].abs() * p.global_l();
        for i in 0..p.dim - 1 {
            assert!(g[i].abs() < 1e-13, "coordinate {i}: {}", g[i]);
        }
        assert!(g[p.dim - 1].abs() <= tail);
    }

    #[test]
    fn hessian_spectrum_bounds() {
        for dim in 2..=8 {
            let p = small_problem(dim);
            let eigs = symmetric_eigenvalues(&p.global_hessian());
            assert!(eigs[0] >= p.global_mu() - 1e-9);
            assert!(*eigs.last().unwrap() <= p.global_l() + 1e-9);
        }
    }
}
