//! Infeasible-start primal-dual interior-point method with Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector, working on the real
//! symmetric embedding of the user problem.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SdpError;
use crate::problem::{BlockKind, Coef, SdpProblem, Sense};
use crate::verify::{evaluate, Metrics};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_tol: 1e-7,
            feas_tol: 1e-7,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Value of one variable block.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockValue {
    Matrix(DMatrix<Complex64>),
    Vector(Vec<f64>),
}

impl BlockValue {
    pub fn matrix(&self) -> Option<&DMatrix<Complex64>> {
        match self {
            BlockValue::Matrix(m) => Some(m),
            BlockValue::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            BlockValue::Vector(v) => Some(v),
            BlockValue::Matrix(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub status: Status,
    /// Objective at the returned primal point, including the offset.
    pub primal_value: f64,
    /// Dual objective at the returned multipliers, including the offset.
    pub dual_value: f64,
    pub primal_blocks: Vec<BlockValue>,
    /// One multiplier per scalar constraint.
    pub dual_y: Vec<f64>,
    /// Dual slack per block, recomputed from the problem data.
    pub dual_slacks: Vec<BlockValue>,
    pub gap: f64,
    pub feas_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
enum Place {
    Real { blk: usize, n: usize },
    Complex { blk: usize, n: usize },
    Lp { off: usize, n: usize },
}

/// Standard-form data in svec coordinates.
struct Internal {
    dims: Vec<usize>,
    offs: Vec<usize>,
    lp_off: usize,
    lp_n: usize,
    total: usize,
    places: Vec<Place>,
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Original constraint index and scale of each kept row.
    kept: Vec<(usize, f64)>,
    /// Dense per-block row matrices, `None` when the row misses the block.
    row_mats: Vec<Vec<Option<DMatrix<f64>>>>,
}

fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..n {
        for i in 0..=j {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                m[(i, j)] = x * r;
                m[(j, i)] = x * r;
            }
        }
    }
    m
}

fn svec_write(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    let s = std::f64::consts::SQRT_2;
    for j in 0..n {
        for i in 0..=j {
            out[svec_index(i, j)] = if i == j {
                m[(i, i)]
            } else {
                0.5 * s * (m[(i, j)] + m[(j, i)])
            };
        }
    }
}

fn add_sym(out: &mut [f64], i: usize, j: usize, v: f64) {
    if i == j {
        out[svec_index(i, i)] += v;
    } else {
        out[svec_index(i, j)] += std::f64::consts::SQRT_2 * v;
    }
}

impl Internal {
    fn build(p: &SdpProblem) -> Internal {
        let mut dims = Vec::new();
        let mut places = Vec::new();
        let mut lp_n = 0;
        for kind in &p.blocks {
            match *kind {
                BlockKind::Hermitian(n) if n > 1 => {
                    places.push(Place::Complex { blk: dims.len(), n });
                    dims.push(2 * n);
                }
                BlockKind::Hermitian(n) | BlockKind::Symmetric(n) => {
                    places.push(Place::Real { blk: dims.len(), n });
                    dims.push(n);
                }
                BlockKind::Nonneg(n) => {
                    places.push(Place::Lp { off: lp_n, n });
                    lp_n += n;
                }
            }
        }
        let mut offs = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offs.push(total);
            total += svec_len(d);
        }
        let lp_off = total;
        total += lp_n;

        let mut internal = Internal {
            dims,
            offs,
            lp_off,
            lp_n,
            total,
            places,
            c: DVector::zeros(total),
            a: DMatrix::zeros(0, total),
            b: DVector::zeros(0),
            kept: Vec::new(),
            row_mats: Vec::new(),
        };
        let sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut c = vec![0.0; total];
        for (blk, coef) in &p.objective {
            internal.scatter(blk.0, coef, sign, &mut c);
        }
        internal.c = DVector::from_vec(c);
        internal
    }

    fn scatter(&self, block: usize, coef: &Coef, scale: f64, out: &mut [f64]) {
        match (self.places[block], coef) {
            (Place::Real { blk, .. }, Coef::Matrix(e)) => {
                let seg = &mut out[self.offs[blk]..];
                for &(i, j, re, _) in e {
                    add_sym(seg, i, j, scale * re);
                }
            }
            (Place::Complex { blk, n }, Coef::Matrix(e)) => {
                let seg = &mut out[self.offs[blk]..];
                for &(i, j, re, im) in e {
                    let (re, im) = (0.5 * scale * re, 0.5 * scale * im);
                    if i == j {
                        add_sym(seg, i, i, re);
                        add_sym(seg, n + i, n + i, re);
                    } else {
                        add_sym(seg, i, j, re);
                        add_sym(seg, n + i, n + j, re);
                        add_sym(seg, i, n + j, -im);
                        add_sym(seg, j, n + i, im);
                    }
                }
            }
            (Place::Lp { off, .. }, Coef::Vector(e)) => {
                for &(i, v) in e {
                    out[self.lp_off + off + i] += scale * v;
                }
            }
            _ => unreachable!("coefficient kinds are checked by validate"),
        }
    }

    /// Expands constraints, removes dependent rows and normalises the rest.
    /// Returns `false` when the equality system is inconsistent.
    fn set_rows(&mut self, p: &SdpProblem) -> bool {
        let total = self.total;
        let mut basis: Vec<DVector<f64>> = Vec::new();
        // basis[q] = sum_k coeff[q][k] * kept_row[k]
        let mut coeff: Vec<Vec<f64>> = Vec::new();
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let mut orig_rhs: Vec<f64> = Vec::new();
        let mut kept = Vec::new();
        for (ci, con) in p.constraints.iter().enumerate() {
            let mut r = vec![0.0; total];
            for (blk, coef) in &con.terms {
                self.scatter(blk.0, coef, 1.0, &mut r);
            }
            let r = DVector::from_vec(r);
            let norm = r.norm();
            if norm == 0.0 {
                if con.rhs.abs() > 1e-8 {
                    return false;
                }
                continue;
            }
            let mut res = r.clone();
            let mut proj = vec![0.0; basis.len()];
            for _ in 0..2 {
                for (q, bq) in basis.iter().enumerate() {
                    let t = bq.dot(&res);
                    proj[q] += t;
                    res.axpy(-t, bq, 1.0);
                }
            }
            let rn = res.norm();
            if rn <= 1e-9 * norm {
                // r is (numerically) a combination of kept rows
                let mut beta = vec![0.0; rows.len()];
                for (q, t) in proj.iter().enumerate() {
                    for (k, cq) in coeff[q].iter().enumerate() {
                        beta[k] += t * cq;
                    }
                }
                let pred: f64 = beta.iter().zip(&orig_rhs).map(|(bk, rk)| bk * rk).sum();
                let scale: f64 = 1.0
                    + con.rhs.abs()
                    + beta
                        .iter()
                        .zip(&orig_rhs)
                        .map(|(bk, rk)| (bk * rk).abs())
                        .sum::<f64>();
                if (pred - con.rhs).abs() > 1e-8 * scale {
                    return false;
                }
                continue;
            }
            let k_new = rows.len();
            let mut cnew = vec![0.0; k_new + 1];
            cnew[k_new] = 1.0;
            for (q, t) in proj.iter().enumerate() {
                for (k, cq) in coeff[q].iter().enumerate() {
                    cnew[k] -= t * cq;
                }
            }
            for v in cnew.iter_mut() {
                *v /= rn;
            }
            for cq in coeff.iter_mut() {
                cq.push(0.0);
            }
            coeff.push(cnew);
            basis.push(res / rn);
            rows.push(r / norm);
            rhs.push(con.rhs / norm);
            orig_rhs.push(con.rhs);
            kept.push((ci, norm));
        }
        let m = rows.len();
        let mut a = DMatrix::zeros(m, total);
        for (i, r) in rows.iter().enumerate() {
            a.set_row(i, &r.transpose());
        }
        self.a = a;
        self.b = DVector::from_vec(rhs);
        self.kept = kept;
        self.row_mats = (0..m)
            .map(|i| {
                (0..self.dims.len())
                    .map(|blk| {
                        let seg: Vec<f64> = (0..svec_len(self.dims[blk]))
                            .map(|t| self.a[(i, self.offs[blk] + t)])
                            .collect();
                        if seg.iter().all(|v| *v == 0.0) {
                            None
                        } else {
                            Some(smat(&seg, self.dims[blk]))
                        }
                    })
                    .collect()
            })
            .collect();
        true
    }

    fn seg<'a>(&self, v: &'a DVector<f64>, blk: usize) -> &'a [f64] {
        let o = self.offs[blk];
        &v.as_slice()[o..o + svec_len(self.dims[blk])]
    }

    fn lp<'a>(&self, v: &'a DVector<f64>) -> &'a [f64] {
        &v.as_slice()[self.lp_off..self.lp_off + self.lp_n]
    }

    fn block_mat(&self, v: &DVector<f64>, blk: usize) -> DMatrix<f64> {
        smat(self.seg(v, blk), self.dims[blk])
    }

    fn nu(&self) -> f64 {
        (self.dims.iter().sum::<usize>() + self.lp_n) as f64
    }

    fn initial_point(&self) -> (DVector<f64>, DVector<f64>) {
        let mut x = DVector::zeros(self.total);
        let mut z = DVector::zeros(self.total);
        let m = self.a.nrows();
        for blk in 0..self.dims.len() {
            let n = self.dims[blk];
            let sn = (n as f64).sqrt();
            let o = self.offs[blk];
            let len = svec_len(n);
            let mut xi: f64 = 10f64.max(sn);
            let mut eta: f64 = 10f64.max(sn);
            for i in 0..m {
                let na = self.a.view((i, o), (1, len)).norm();
                xi = xi.max(sn * (1.0 + self.b[i].abs()) / (1.0 + na));
                eta = eta.max(na);
            }
            eta = eta.max(self.c.rows(o, len).norm());
            for i in 0..n {
                x[o + svec_index(i, i)] = xi;
                z[o + svec_index(i, i)] = eta;
            }
        }
        if self.lp_n > 0 {
            let o = self.lp_off;
            let sn = (self.lp_n as f64).sqrt();
            let mut xi: f64 = 10f64.max(sn);
            let mut eta: f64 = 10f64.max(sn);
            for i in 0..m {
                let na = self.a.view((i, o), (1, self.lp_n)).norm();
                xi = xi.max(sn * (1.0 + self.b[i].abs()) / (1.0 + na));
                eta = eta.max(na);
            }
            eta = eta.max(self.c.rows(o, self.lp_n).norm());
            for i in 0..self.lp_n {
                x[o + i] = xi;
                z[o + i] = eta;
            }
        }
        (x, z)
    }

    /// User-level primal blocks from an internal point.
    fn user_primal(&self, x: &DVector<f64>) -> Vec<BlockValue> {
        self.places
            .iter()
            .map(|pl| match *pl {
                Place::Real { blk, n } => {
                    let m = self.block_mat(x, blk);
                    BlockValue::Matrix(DMatrix::from_fn(n, n, |i, j| {
                        Complex64::new(m[(i, j)], 0.0)
                    }))
                }
                Place::Complex { blk, n } => {
                    let y = self.block_mat(x, blk);
                    BlockValue::Matrix(DMatrix::from_fn(n, n, |i, j| {
                        Complex64::new(
                            0.5 * (y[(i, j)] + y[(n + i, n + j)]),
                            0.5 * (y[(n + i, j)] - y[(i, n + j)]),
                        )
                    }))
                }
                Place::Lp { off, n } => BlockValue::Vector(self.lp(x)[off..off + n].to_vec()),
            })
            .collect()
    }

    fn user_dual(&self, y: &DVector<f64>, n_constraints: usize, sense: Sense) -> Vec<f64> {
        let sign = match sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut out = vec![0.0; n_constraints];
        for (k, &(ci, norm)) in self.kept.iter().enumerate() {
            out[ci] = sign * y[k] / norm;
        }
        out
    }
}

struct Scaling {
    g: Vec<DMatrix<f64>>,
    ginv: Vec<DMatrix<f64>>,
    w: Vec<DMatrix<f64>>,
    s: Vec<DVector<f64>>,
    lx_inv: Vec<DMatrix<f64>>,
    lz_inv: Vec<DMatrix<f64>>,
    lp_w: Vec<f64>,
}

fn lower_inverse(l: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
}

impl Internal {
    fn scaling(&self, x: &DVector<f64>, z: &DVector<f64>) -> Option<Scaling> {
        let nb = self.dims.len();
        let mut sc = Scaling {
            g: Vec::with_capacity(nb),
            ginv: Vec::with_capacity(nb),
            w: Vec::with_capacity(nb),
            s: Vec::with_capacity(nb),
            lx_inv: Vec::with_capacity(nb),
            lz_inv: Vec::with_capacity(nb),
            lp_w: Vec::new(),
        };
        for blk in 0..nb {
            let lx = Cholesky::new(self.block_mat(x, blk))?.l();
            let lz = Cholesky::new(self.block_mat(z, blk))?.l();
            let svd = (lz.transpose() * &lx).svd(true, true);
            let v = svd.v_t?.transpose();
            let s = svd.singular_values;
            if s.iter().any(|v| !(*v > 0.0)) {
                return None;
            }
            let lx_inv = lower_inverse(&lx)?;
            let lz_inv = lower_inverse(&lz)?;
            let rs = s.map(|v| 1.0 / v.sqrt());
            let g = &lx * &v * DMatrix::from_diagonal(&rs);
            let ginv = DMatrix::from_diagonal(&s.map(f64::sqrt)) * v.transpose() * &lx_inv;
            sc.w.push(&g * g.transpose());
            sc.g.push(g);
            sc.ginv.push(ginv);
            sc.s.push(s);
            sc.lx_inv.push(lx_inv);
            sc.lz_inv.push(lz_inv);
        }
        let xl = self.lp(x);
        let zl = self.lp(z);
        for i in 0..self.lp_n {
            if !(xl[i] > 0.0 && zl[i] > 0.0) {
                return None;
            }
            sc.lp_w.push(xl[i] / zl[i]);
        }
        Some(sc)
    }

    fn schur(&self, sc: &Scaling) -> DMatrix<f64> {
        let m = self.a.nrows();
        let mut mm = DMatrix::zeros(m, m);
        for blk in 0..self.dims.len() {
            let n = self.dims[blk];
            let o = self.offs[blk];
            let len = svec_len(n);
            let w = &sc.w[blk];
            let mut buf = vec![0.0; len];
            for i in 0..m {
                let Some(ai) = &self.row_mats[i][blk] else {
                    continue;
                };
                let p = w * ai * w;
                svec_write(&p, &mut buf);
                for j in i..m {
                    if self.row_mats[j][blk].is_none() {
                        continue;
                    }
                    let mut acc = 0.0;
                    for t in 0..len {
                        acc += buf[t] * self.a[(j, o + t)];
                    }
                    mm[(i, j)] += acc;
                }
            }
        }
        if self.lp_n > 0 {
            let o = self.lp_off;
            for i in 0..m {
                for j in i..m {
                    let mut acc = 0.0;
                    for l in 0..self.lp_n {
                        acc += self.a[(i, o + l)] * sc.lp_w[l] * self.a[(j, o + l)];
                    }
                    mm[(i, j)] += acc;
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                mm[(i, j)] = mm[(j, i)];
            }
        }
        mm
    }

    /// Applies the scaling operator `V -> W V W` blockwise.
    fn apply_w(&self, sc: &Scaling, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.total);
        for blk in 0..self.dims.len() {
            let m = &sc.w[blk] * self.block_mat(v, blk) * &sc.w[blk];
            let o = self.offs[blk];
            svec_write(&m, &mut out.as_mut_slice()[o..o + svec_len(self.dims[blk])]);
        }
        for l in 0..self.lp_n {
            out[self.lp_off + l] = sc.lp_w[l] * v[self.lp_off + l];
        }
        out
    }

    /// Largest step keeping `v + alpha * dv` in the cone.
    fn max_step(&self, linv: &[DMatrix<f64>], v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for blk in 0..self.dims.len() {
            let li = &linv[blk];
            let t = li * self.block_mat(dv, blk) * li.transpose();
            let t = 0.5 * (&t + t.transpose());
            let lmin = SymmetricEigen::new(t).eigenvalues.min();
            if lmin < 0.0 {
                alpha = alpha.min(-1.0 / lmin);
            }
        }
        let vl = self.lp(v);
        let dl = self.lp(dv);
        for l in 0..self.lp_n {
            if dl[l] < 0.0 {
                alpha = alpha.min(-vl[l] / dl[l]);
            }
        }
        alpha
    }
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if m.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let scale = m.diagonal().max().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut mr = m.clone();
        if reg > 0.0 {
            for i in 0..mr.nrows() {
                mr[(i, i)] += reg * scale;
            }
        }
        if let Some(ch) = Cholesky::new(mr) {
            let mut sol = ch.solve(rhs);
            // one step of iterative refinement against the unregularised matrix
            let r = rhs - m * &sol;
            sol += ch.solve(&r);
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol);
            }
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
    }
    m.clone()
        .lu()
        .solve(rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
}

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
}

struct Directions {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
}

fn user_metrics(
    p: &SdpProblem,
    int: &Internal,
    it: &Iterate,
) -> (Vec<BlockValue>, Vec<f64>, Metrics) {
    let blocks = int.user_primal(&it.x);
    let y = int.user_dual(&it.y, p.constraints.len(), p.sense);
    let m = evaluate(p, &blocks, &y);
    (blocks, y, m)
}

fn accept(m: &Metrics, opts: &SolveOptions) -> bool {
    m.gap <= opts.gap_tol * (1.0 + m.primal_value.abs()) && m.feas_residual() <= opts.feas_tol
}

fn finish(
    p: &SdpProblem,
    int: &Internal,
    it: &Iterate,
    status: Status,
    iterations: usize,
) -> SdpSolution {
    let (blocks, y, m) = user_metrics(p, int, it);
    SdpSolution {
        status,
        primal_value: m.primal_value,
        dual_value: m.dual_value,
        gap: m.gap,
        feas_residual: m.feas_residual(),
        primal_blocks: blocks,
        dual_y: y,
        dual_slacks: m.dual_slacks,
        iterations,
    }
}

fn empty_solution(p: &SdpProblem, status: Status) -> SdpSolution {
    let zero_blocks: Vec<BlockValue> = p
        .blocks
        .iter()
        .map(|k| match *k {
            BlockKind::Nonneg(n) => BlockValue::Vector(vec![0.0; n]),
            BlockKind::Hermitian(n) | BlockKind::Symmetric(n) => {
                BlockValue::Matrix(DMatrix::zeros(n, n))
            }
        })
        .collect();
    SdpSolution {
        status,
        primal_value: f64::NAN,
        dual_value: f64::NAN,
        primal_blocks: zero_blocks.clone(),
        dual_y: vec![0.0; p.constraints.len()],
        dual_slacks: zero_blocks,
        gap: f64::NAN,
        feas_residual: f64::NAN,
        iterations: 0,
    }
}

/// Solves `problem` to the requested tolerances.
///
/// Malformed input is an error; infeasibility, unboundedness and budget
/// exhaustion are reported through [`SdpSolution::status`].
pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    if !(opts.gap_tol > 0.0 && opts.feas_tol > 0.0) {
        return Err(SdpError::InvalidProblem(
            "tolerances must be positive".into(),
        ));
    }
    let mut int = Internal::build(problem);
    if !int.set_rows(problem) {
        return Ok(empty_solution(problem, Status::Infeasible));
    }

    let (x, z) = int.initial_point();
    let m = int.a.nrows();
    let mut it = Iterate {
        x,
        y: DVector::zeros(m),
        z,
    };
    let nu = int.nu();
    let norm_b = int.b.norm();
    let norm_c = int.c.norm();
    let inner_feas = 0.05 * opts.feas_tol;
    let inner_gap = 0.05 * opts.gap_tol;

    let mut best: Option<(f64, Iterate)> = None;
    let mut since_best = 0usize;
    let mut progress_ref = f64::INFINITY;
    let mut iter = 0usize;
    loop {
        let rp = &int.b - &int.a * &it.x;
        let rd = &int.c - int.a.transpose() * &it.y - &it.z;
        let pobj = int.c.dot(&it.x);
        let dobj = int.b.dot(&it.y);
        let mu = it.x.dot(&it.z) / nu;
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = rd.norm() / (1.0 + norm_c);
        let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let merit = pinf.max(dinf).max(relgap);
        if !merit.is_finite() {
            break;
        }

        if pinf <= inner_feas && dinf <= inner_feas && relgap <= inner_gap {
            let (_, _, um) = user_metrics(problem, &int, &it);
            if accept(&um, opts) {
                return Ok(finish(problem, &int, &it, Status::Optimal, iter));
            }
        }
        // Farkas-type certificates
        if dobj > 0.0 {
            let aty = &int.c - &rd;
            if aty.norm() / dobj < 1e-8 {
                return Ok(finish(problem, &int, &it, Status::Infeasible, iter));
            }
        }
        if pobj < 0.0 {
            let ax = &int.a * &it.x;
            if ax.norm() / -pobj < 1e-8 {
                return Ok(finish(problem, &int, &it, Status::Unbounded, iter));
            }
        }

        if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            best = Some((
                merit,
                Iterate {
                    x: it.x.clone(),
                    y: it.y.clone(),
                    z: it.z.clone(),
                },
            ));
        }
        if merit < 0.5 * progress_ref {
            progress_ref = merit;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if iter >= opts.max_iter || since_best > 40 {
            break;
        }
        iter += 1;

        let Some(sc) = int.scaling(&it.x, &it.z) else {
            break;
        };
        let schur = int.schur(&sc);
        let wrdw = int.apply_w(&sc, &rd);

        let direction = |rc: &DVector<f64>| -> Option<Directions> {
            let rhs = &rp - &int.a * (rc - &wrdw);
            let dy = solve_spd(&schur, &rhs)?;
            let dz = &rd - int.a.transpose() * &dy;
            let dx = rc - int.apply_w(&sc, &dz);
            Some(Directions { dx, dy, dz })
        };

        // predictor
        let rc_aff = -&it.x;
        let Some(aff) = direction(&rc_aff) else { break };
        let ap = int.max_step(&sc.lx_inv, &it.x, &aff.dx).min(1.0);
        let ad = int.max_step(&sc.lz_inv, &it.z, &aff.dz).min(1.0);
        let mu_aff = (&it.x + ap * &aff.dx).dot(&(&it.z + ad * &aff.dz)) / nu;
        let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);
        let gamma = 0.9 + 0.09 * ap.min(ad);

        // corrector
        let mut rc = DVector::zeros(int.total);
        for blk in 0..int.dims.len() {
            let n = int.dims[blk];
            let g = &sc.g[blk];
            let dxt = &sc.ginv[blk] * int.block_mat(&aff.dx, blk) * sc.ginv[blk].transpose();
            let dzt = g.transpose() * int.block_mat(&aff.dz, blk) * g;
            let cross = &dxt * &dzt + &dzt * &dxt;
            let s = &sc.s[blk];
            let d = DMatrix::from_fn(n, n, |i, j| {
                let mut t = -cross[(i, j)];
                if i == j {
                    t += 2.0 * (sigma * mu - s[i] * s[i]);
                }
                t / (s[i] + s[j])
            });
            let r = g * d * g.transpose();
            let o = int.offs[blk];
            svec_write(&r, &mut rc.as_mut_slice()[o..o + svec_len(n)]);
        }
        for l in 0..int.lp_n {
            let k = int.lp_off + l;
            rc[k] = (sigma * mu - aff.dx[k] * aff.dz[k]) / it.z[k] - it.x[k];
        }
        let Some(dir) = direction(&rc) else { break };
        let ap = (gamma * int.max_step(&sc.lx_inv, &it.x, &dir.dx)).min(1.0);
        let ad = (gamma * int.max_step(&sc.lz_inv, &it.z, &dir.dz)).min(1.0);
        if !(ap > 1e-12 || ad > 1e-12) {
            break;
        }
        it.x += ap * &dir.dx;
        it.y += ad * &dir.dy;
        it.z += ad * &dir.dz;
    }

    let final_it = match best {
        Some((_, b)) => b,
        None => it,
    };
    let (_, _, um) = user_metrics(problem, &int, &final_it);
    let status = if accept(&um, opts) {
        Status::Optimal
    } else {
        Status::MaxIter
    };
    Ok(finish(problem, &int, &final_it, status, iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let mut v = vec![0.0; 6];
        svec_write(&m, &mut v);
        assert!((smat(&v, 3) - &m).norm() < 1e-14);
        let frob: f64 = m.iter().map(|x| x * x).sum();
        let sv: f64 = v.iter().map(|x| x * x).sum();
        assert!((frob - sv).abs() < 1e-12);
    }
}
