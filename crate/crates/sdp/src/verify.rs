//! Residual and duality-gap evaluation computed from the user-level data.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::problem::{pair_matrix, pair_vector, BlockKind, Coef, SdpProblem, Sense};
use crate::solver::{BlockValue, SdpSolution, Status};

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    /// Largest absolute violation of a scalar constraint.
    pub eq_residual: f64,
    /// Largest negative eigenvalue (or entry) magnitude over primal blocks.
    pub primal_cone_residual: f64,
    /// Same for the recomputed dual slacks.
    pub dual_cone_residual: f64,
    pub dual_slacks: Vec<BlockValue>,
}

impl Metrics {
    pub fn feas_residual(&self) -> f64 {
        self.eq_residual
            .max(self.primal_cone_residual)
            .max(self.dual_cone_residual)
    }
}

fn pair(coef: &Coef, x: &BlockValue) -> f64 {
    match (coef, x) {
        (Coef::Matrix(e), BlockValue::Matrix(m)) => pair_matrix(e, m),
        (Coef::Vector(e), BlockValue::Vector(v)) => pair_vector(e, v),
        _ => f64::NAN,
    }
}

fn cone_violation(x: &BlockValue) -> f64 {
    match x {
        BlockValue::Matrix(m) => {
            let h = (m + m.adjoint()).scale(0.5);
            let lmin = SymmetricEigen::new(h).eigenvalues.min();
            (-lmin).max(0.0)
        }
        BlockValue::Vector(v) => v.iter().fold(0.0f64, |a, &x| a.max(-x)),
    }
}

fn accumulate(acc: &mut BlockValue, coef: &Coef, s: f64) {
    match (acc, coef) {
        (BlockValue::Matrix(m), Coef::Matrix(_)) => {
            let n = m.nrows();
            *m += coef.to_dense(n).scale(s);
        }
        (BlockValue::Vector(v), Coef::Vector(e)) => {
            for &(i, a) in e {
                v[i] += s * a;
            }
        }
        _ => {}
    }
}

/// Objective values, dual slacks and residuals of a candidate pair.
pub fn evaluate(p: &SdpProblem, blocks: &[BlockValue], y: &[f64]) -> Metrics {
    let mut primal_value = p.objective_offset;
    for (b, coef) in &p.objective {
        primal_value += pair(coef, &blocks[b.0]);
    }
    let mut eq_residual: f64 = 0.0;
    for con in &p.constraints {
        let lhs: f64 = con.terms.iter().map(|(b, c)| pair(c, &blocks[b.0])).sum();
        eq_residual = eq_residual.max((lhs - con.rhs).abs());
    }
    let dual_value = p.objective_offset
        + p.constraints
            .iter()
            .zip(y)
            .map(|(c, yi)| c.rhs * yi)
            .sum::<f64>();

    // Z = s (C - A^T y), s = +1 for minimisation
    let s = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut slacks: Vec<BlockValue> = p
        .blocks
        .iter()
        .map(|k| match *k {
            BlockKind::Nonneg(n) => BlockValue::Vector(vec![0.0; n]),
            BlockKind::Hermitian(n) | BlockKind::Symmetric(n) => {
                BlockValue::Matrix(DMatrix::<Complex64>::zeros(n, n))
            }
        })
        .collect();
    for (b, coef) in &p.objective {
        accumulate(&mut slacks[b.0], coef, s);
    }
    for (con, yi) in p.constraints.iter().zip(y) {
        for (b, coef) in &con.terms {
            accumulate(&mut slacks[b.0], coef, -s * yi);
        }
    }
    let primal_cone_residual = blocks.iter().map(cone_violation).fold(0.0, f64::max);
    let dual_cone_residual = slacks.iter().map(cone_violation).fold(0.0, f64::max);
    Metrics {
        primal_value,
        dual_value,
        gap: (primal_value - dual_value).abs(),
        eq_residual,
        primal_cone_residual,
        dual_cone_residual,
        dual_slacks: slacks,
    }
}

/// Recomputes every residual and the duality gap of `sol` from the
/// problem data; true iff the solution is OPTIMAL and all are within `tol`.
pub fn verify_solution(p: &SdpProblem, sol: &SdpSolution, tol: f64) -> bool {
    if sol.status != Status::Optimal
        || sol.primal_blocks.len() != p.blocks.len()
        || sol.dual_y.len() != p.constraints.len()
    {
        return false;
    }
    for (kind, v) in p.blocks.iter().zip(&sol.primal_blocks) {
        let ok = match (kind, v) {
            (BlockKind::Nonneg(n), BlockValue::Vector(x)) => x.len() == *n,
            (BlockKind::Hermitian(n) | BlockKind::Symmetric(n), BlockValue::Matrix(m)) => {
                m.nrows() == *n && m.ncols() == *n
            }
            _ => false,
        };
        if !ok {
            return false;
        }
    }
    let m = evaluate(p, &sol.primal_blocks, &sol.dual_y);
    let finite = m.primal_value.is_finite() && m.dual_value.is_finite();
    finite && m.gap <= tol * (1.0 + m.primal_value.abs()) && m.feas_residual() <= tol
}
