//! Problem description: variable blocks, linear objective and scalar
//! equality constraints, plus builders that expand matrix-valued
//! constraints into scalar ones.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SdpError;

/// Kind and size of a variable block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum BlockKind {
    /// Complex Hermitian positive semidefinite `n x n`.
    Hermitian(usize),
    /// Real symmetric positive semidefinite `n x n`.
    Symmetric(usize),
    /// Nonnegative vector of length `n`.
    Nonneg(usize),
}

impl BlockKind {
    pub fn dim(&self) -> usize {
        match *self {
            BlockKind::Hermitian(n) | BlockKind::Symmetric(n) | BlockKind::Nonneg(n) => n,
        }
    }

    pub fn is_matrix(&self) -> bool {
        !matches!(self, BlockKind::Nonneg(_))
    }
}

/// Handle to a variable block inside an [`SdpProblem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// `lhs <= rhs` (for matrices: `rhs - lhs` is PSD).
    Le,
    /// `lhs >= rhs` (for matrices: `lhs - rhs` is PSD).
    Ge,
}

/// One entry of a Hermitian coefficient matrix, upper triangle only.
///
/// `(row, col, re, im)` with `row <= col`; the lower entry is the complex
/// conjugate. Diagonal entries must have `im == 0`.
pub type Entry = (usize, usize, f64, f64);

/// Coefficient of a linear functional acting on one block.
///
/// For matrix blocks the functional is `Re Tr(C X)`; for nonnegative
/// blocks it is `sum_i c_i x_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "entries", rename_all = "snake_case")]
pub enum Coef {
    Matrix(Vec<Entry>),
    Vector(Vec<(usize, f64)>),
}

impl Coef {
    /// Sparse coefficient from a dense Hermitian matrix (upper triangle read).
    pub fn from_hermitian(c: &DMatrix<Complex64>) -> Coef {
        let n = c.nrows();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let v = c[(i, j)];
                let im = if i == j { 0.0 } else { v.im };
                if v.re != 0.0 || im != 0.0 {
                    entries.push((i, j, v.re, im));
                }
            }
        }
        Coef::Matrix(entries)
    }

    pub fn from_real(c: &DMatrix<f64>) -> Coef {
        let n = c.nrows();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if c[(i, j)] != 0.0 {
                    entries.push((i, j, c[(i, j)], 0.0));
                }
            }
        }
        Coef::Matrix(entries)
    }

    pub fn identity(n: usize) -> Coef {
        Coef::Matrix((0..n).map(|i| (i, i, 1.0, 0.0)).collect())
    }

    pub fn scaled(&self, s: f64) -> Coef {
        match self {
            Coef::Matrix(e) => {
                Coef::Matrix(e.iter().map(|&(i, j, a, b)| (i, j, s * a, s * b)).collect())
            }
            Coef::Vector(e) => Coef::Vector(e.iter().map(|&(i, a)| (i, s * a)).collect()),
        }
    }

    /// Dense Hermitian form of a matrix coefficient.
    pub fn to_dense(&self, n: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(n, n);
        if let Coef::Matrix(entries) = self {
            for &(i, j, re, im) in entries {
                if i == j {
                    m[(i, i)] += Complex64::new(re, 0.0);
                } else {
                    m[(i, j)] += Complex64::new(re, im);
                    m[(j, i)] += Complex64::new(re, -im);
                }
            }
        }
        m
    }
}

/// Scalar equality constraint `sum_b <A_b, X_b> = rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(BlockId, Coef)>,
    pub rhs: f64,
}

/// Linear map from a block into the space of a matrix constraint.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearMap {
    /// Same dimension as the constraint.
    Identity,
    /// A `k x k` block placed on the rows/columns `indices` of the
    /// constraint space (zero elsewhere).
    Embed(Vec<usize>),
    /// The principal sub-block on `indices` of a larger block; the
    /// constraint space is `indices.len()` square.
    Compress(Vec<usize>),
}

/// Scalar constraints generated by one matrix constraint, indexed by the
/// coordinate functionals of [`hermitian_coordinates`].
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixConstraint {
    pub dim: usize,
    pub complex: bool,
    pub first: usize,
    pub count: usize,
    /// Slack block created for matrix inequalities.
    pub slack: Option<BlockId>,
}

/// A conic program over PSD matrix blocks and nonnegative vectors with
/// scalar equality constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub sense: Sense,
    pub blocks: Vec<BlockKind>,
    pub objective: Vec<(BlockId, Coef)>,
    #[serde(default)]
    pub objective_offset: f64,
    pub constraints: Vec<LinearConstraint>,
}

/// Coordinate functionals of an `n x n` Hermitian (or real symmetric)
/// matrix: diagonal entries, then `Re`/`Im` of the strict upper triangle.
///
/// Each functional is returned as a coefficient `E` with `Re Tr(E Z)`
/// equal to the coordinate of `Z`.
pub fn hermitian_coordinates(n: usize, complex: bool) -> Vec<[usize; 2]> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push([i, i]);
    }
    for j in 0..n {
        for i in 0..j {
            out.push([i, j]);
        }
    }
    if complex {
        for j in 0..n {
            for i in 0..j {
                // marked by (j, i): imaginary part of entry (i, j)
                out.push([j, i]);
            }
        }
    }
    out
}

fn coordinate_value(z: &DMatrix<Complex64>, c: [usize; 2]) -> f64 {
    let [a, b] = c;
    if a == b {
        z[(a, a)].re
    } else if a < b {
        z[(a, b)].re
    } else {
        z[(b, a)].im
    }
}

/// Entry in the constraint space that a coordinate functional reads.
fn coordinate_entry(c: [usize; 2]) -> Entry {
    let [a, b] = c;
    if a == b {
        (a, a, 1.0, 0.0)
    } else if a < b {
        (a, b, 0.5, 0.0)
    } else {
        (b, a, 0.0, 0.5)
    }
}

fn push_entry(out: &mut Vec<Entry>, i: usize, j: usize, re: f64, im: f64) {
    if i == j {
        out.push((i, i, re, 0.0));
    } else if i < j {
        out.push((i, j, re, im));
    } else {
        out.push((j, i, re, -im));
    }
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        SdpProblem {
            sense,
            blocks: Vec::new(),
            objective: Vec::new(),
            objective_offset: 0.0,
            constraints: Vec::new(),
        }
    }

    pub fn add_block(&mut self, kind: BlockKind) -> BlockId {
        self.blocks.push(kind);
        BlockId(self.blocks.len() - 1)
    }

    pub fn block(&self, id: BlockId) -> BlockKind {
        self.blocks[id.0]
    }

    pub fn add_objective(&mut self, block: BlockId, coef: Coef) {
        self.objective.push((block, coef));
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.objective_offset = offset;
    }

    /// Adds `sum <A_b, X_b> = rhs` and returns its index.
    pub fn add_eq(&mut self, terms: Vec<(BlockId, Coef)>, rhs: f64) -> usize {
        self.constraints.push(LinearConstraint { terms, rhs });
        self.constraints.len() - 1
    }

    /// Adds a scalar inequality through a fresh nonnegative slack.
    pub fn add_ineq(&mut self, mut terms: Vec<(BlockId, Coef)>, rel: Relation, rhs: f64) -> usize {
        let slack = self.add_block(BlockKind::Nonneg(1));
        let sign = match rel {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
        };
        terms.push((slack, Coef::Vector(vec![(0, sign)])));
        self.add_eq(terms, rhs)
    }

    /// Adds the matrix equality `sum_b scale_b * map_b(X_b) = rhs`.
    pub fn add_matrix_eq(
        &mut self,
        terms: &[(BlockId, f64, LinearMap)],
        rhs: &DMatrix<Complex64>,
    ) -> MatrixConstraint {
        let n = rhs.nrows();
        let complex = rhs.iter().any(|v| v.im != 0.0)
            || terms
                .iter()
                .any(|(b, _, _)| matches!(self.blocks[b.0], BlockKind::Hermitian(m) if m > 1));
        let coords = hermitian_coordinates(n, complex);
        let first = self.constraints.len();
        for &c in &coords {
            let (ei, ej, er, eim) = coordinate_entry(c);
            let mut row = Vec::with_capacity(terms.len());
            for (block, scale, map) in terms {
                let mut entries = Vec::new();
                match map {
                    LinearMap::Identity => push_entry(&mut entries, ei, ej, er, eim),
                    LinearMap::Embed(idx) => {
                        // adjoint of embedding is compression onto idx
                        let pi = idx.iter().position(|&x| x == ei);
                        let pj = idx.iter().position(|&x| x == ej);
                        if let (Some(pi), Some(pj)) = (pi, pj) {
                            push_entry(&mut entries, pi, pj, er, eim);
                        }
                    }
                    LinearMap::Compress(idx) => push_entry(&mut entries, idx[ei], idx[ej], er, eim),
                }
                if !entries.is_empty() {
                    row.push((*block, Coef::Matrix(entries).scaled(*scale)));
                }
            }
            let rhs_c = coordinate_value(rhs, c);
            self.add_eq(row, rhs_c);
        }
        MatrixConstraint {
            dim: n,
            complex,
            first,
            count: coords.len(),
            slack: None,
        }
    }

    /// Adds a matrix inequality in the Loewner order using a PSD slack.
    pub fn add_matrix_ineq(
        &mut self,
        terms: &[(BlockId, f64, LinearMap)],
        rel: Relation,
        rhs: &DMatrix<Complex64>,
    ) -> MatrixConstraint {
        let n = rhs.nrows();
        let complex = rhs.iter().any(|v| v.im != 0.0)
            || terms
                .iter()
                .any(|(b, _, _)| matches!(self.blocks[b.0], BlockKind::Hermitian(m) if m > 1));
        let kind = if complex {
            BlockKind::Hermitian(n)
        } else {
            BlockKind::Symmetric(n)
        };
        let slack = self.add_block(kind);
        let sign = match rel {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
        };
        let mut all: Vec<(BlockId, f64, LinearMap)> = terms.to_vec();
        all.push((slack, sign, LinearMap::Identity));
        let mut mc = self.add_matrix_eq(&all, rhs);
        mc.slack = Some(slack);
        mc
    }

    /// Checks indices, dimensions and finiteness of all data.
    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |msg: String| Err(SdpError::InvalidProblem(msg));
        if self.blocks.is_empty() {
            return bad("problem has no variable blocks".into());
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.dim() == 0 {
                return bad(format!("block {i} has zero dimension"));
            }
        }
        if !self.objective_offset.is_finite() {
            return bad("objective offset is not finite".into());
        }
        let check_terms = |terms: &[(BlockId, Coef)], what: &str| -> Result<(), SdpError> {
            for (b, coef) in terms {
                let Some(kind) = self.blocks.get(b.0) else {
                    return Err(SdpError::InvalidProblem(format!(
                        "{what}: unknown block {}",
                        b.0
                    )));
                };
                let n = kind.dim();
                match (kind, coef) {
                    (BlockKind::Nonneg(_), Coef::Vector(v)) => {
                        for &(i, a) in v {
                            if i >= n || !a.is_finite() {
                                return Err(SdpError::InvalidProblem(format!(
                                    "{what}: bad vector entry {i} for block {}",
                                    b.0
                                )));
                            }
                        }
                    }
                    (BlockKind::Nonneg(_), Coef::Matrix(_)) | (_, Coef::Vector(_)) => {
                        return Err(SdpError::InvalidProblem(format!(
                            "{what}: coefficient type does not match block {}",
                            b.0
                        )));
                    }
                    (k, Coef::Matrix(e)) => {
                        for &(i, j, re, im) in e {
                            if i > j || j >= n || !re.is_finite() || !im.is_finite() {
                                return Err(SdpError::InvalidProblem(format!(
                                    "{what}: bad matrix entry ({i},{j}) for block {}",
                                    b.0
                                )));
                            }
                            if im != 0.0 && (i == j || matches!(k, BlockKind::Symmetric(_))) {
                                return Err(SdpError::InvalidProblem(format!(
                                    "{what}: imaginary entry ({i},{j}) not allowed for block {}",
                                    b.0
                                )));
                            }
                        }
                    }
                }
            }
            Ok(())
        };
        check_terms(&self.objective, "objective")?;
        for (ci, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return bad(format!("constraint {ci}: rhs not finite"));
            }
            check_terms(&c.terms, &format!("constraint {ci}"))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serialises")
    }

    /// Parses and validates a problem dump.
    pub fn from_json(s: &str) -> Result<SdpProblem, SdpError> {
        let p: SdpProblem =
            serde_json::from_str(s).map_err(|e| SdpError::InvalidProblem(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Multiplier of a matrix constraint reassembled as a Hermitian matrix.
    pub fn matrix_multiplier(&self, mc: &MatrixConstraint, y: &[f64]) -> DMatrix<Complex64> {
        let coords = hermitian_coordinates(mc.dim, mc.complex);
        let mut out = DMatrix::zeros(mc.dim, mc.dim);
        for (k, c) in coords.into_iter().enumerate() {
            let (i, j, re, im) = coordinate_entry(c);
            let v = y[mc.first + k];
            if i == j {
                out[(i, i)] += Complex64::new(v * re, 0.0);
            } else {
                out[(i, j)] += Complex64::new(v * re, v * im);
                out[(j, i)] += Complex64::new(v * re, -v * im);
            }
        }
        out
    }
}

/// `Re Tr(C X)` for a sparse Hermitian coefficient and dense Hermitian X.
pub(crate) fn pair_matrix(entries: &[Entry], x: &DMatrix<Complex64>) -> f64 {
    let mut s = 0.0;
    for &(i, j, re, im) in entries {
        if i == j {
            s += re * x[(i, i)].re;
        } else {
            let v = x[(i, j)];
            s += 2.0 * (re * v.re + im * v.im);
        }
    }
    s
}

pub(crate) fn pair_vector(entries: &[(usize, f64)], x: &[f64]) -> f64 {
    entries.iter().map(|&(i, a)| a * x[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_read_entries() {
        let z = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.3, 0.0),
                Complex64::new(0.1, -0.2),
                Complex64::new(0.1, 0.2),
                Complex64::new(0.7, 0.0),
            ],
        );
        let vals: Vec<f64> = hermitian_coordinates(2, true)
            .into_iter()
            .map(|c| {
                let (i, j, re, im) = coordinate_entry(c);
                pair_matrix(&[(i, j, re, im)], &z)
            })
            .collect();
        assert_eq!(vals.len(), 4);
        assert!((vals[0] - 0.3).abs() < 1e-15);
        assert!((vals[1] - 0.7).abs() < 1e-15);
        assert!((vals[2] - 0.1).abs() < 1e-15);
        assert!((vals[3] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_bad_blocks() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_block(BlockKind::Symmetric(2));
        p.add_objective(x, Coef::Matrix(vec![(0, 1, 1.0, 0.5)]));
        assert!(p.validate().is_err());
        p.objective = vec![(BlockId(9), Coef::identity(2))];
        assert!(p.validate().is_err());
        p.objective = vec![(x, Coef::Matrix(vec![(1, 0, 1.0, 0.0)]))];
        assert!(p.validate().is_err());
        p.objective = vec![(x, Coef::identity(2))];
        assert!(p.validate().is_ok());
    }

    #[test]
    fn json_roundtrip() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block(BlockKind::Hermitian(2));
        let s = p.add_block(BlockKind::Nonneg(1));
        p.add_objective(x, Coef::Matrix(vec![(0, 1, 0.5, -0.25)]));
        p.add_eq(
            vec![(x, Coef::identity(2)), (s, Coef::Vector(vec![(0, 1.0)]))],
            1.0,
        );
        let back = SdpProblem::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }
}
