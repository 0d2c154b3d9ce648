//! Dense complex Hermitian linear algebra shared by every other module.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, CoherenceError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest tolerated `|A_ij - conj(A_ji)|` before input is rejected.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Default eigenvalue tolerance for positivity checks.
pub const PSD_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-10;
const EIG_RESIDUAL_TOL: f64 = 1e-10;
/// Enumerations of index subsets larger than this are refused.
pub const MAX_SUBSETS: u64 = 1_000_000;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `(A + A^dagger) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn max_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Square complex matrix with Hermitian symmetry.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Validates and symmetrises `m`; rejects non-square, non-finite or
    /// visibly non-Hermitian input.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return invalid(format!(
                "matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("matrix has non-finite entries");
        }
        let asym = max_asymmetry(&m);
        if asym > HERMITICITY_TOL {
            return invalid(format!("matrix is not Hermitian (violation {asym:.3e})"));
        }
        Ok(HermitianMatrix(hermitian_part(&m)))
    }

    /// Hermitian part of a matrix produced by an internal computation.
    pub fn from_computed(m: &CMatrix) -> Self {
        HermitianMatrix(hermitian_part(m))
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        HermitianMatrix::new(m.map(cr))
    }

    pub fn identity(d: usize) -> Self {
        HermitianMatrix(CMatrix::identity(d, d))
    }

    /// Projector `|v><v|` (not normalised).
    pub fn outer(v: &CVector) -> Self {
        HermitianMatrix::from_computed(&(v * v.adjoint()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix(self.0.scale(s))
    }

    /// `Re Tr(self * other)`.
    pub fn expectation(&self, rho: &CMatrix) -> f64 {
        trace_product(&self.0, rho)
    }
}

impl Deref for HermitianMatrix {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

/// Unit-trace positive semidefinite Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(HermitianMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        DensityMatrix::from_hermitian(HermitianMatrix::new(m)?)
    }

    pub fn from_hermitian(h: HermitianMatrix) -> Result<Self> {
        let tr = h.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return invalid(format!("density matrix trace is {:.12}, expected 1", tr.re));
        }
        let lmin = lambda_min(&h);
        if lmin < -PSD_TOL {
            return invalid(format!("density matrix has negative eigenvalue {lmin:.3e}"));
        }
        Ok(DensityMatrix(h))
    }

    /// Normalises a computed PSD matrix to unit trace; fails if it is not
    /// (numerically) positive semidefinite.
    pub fn from_computed(m: &CMatrix) -> Result<Self> {
        let h = hermitian_part(m);
        let tr = h.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(CoherenceError::Numerical(format!(
                "cannot normalise matrix with trace {tr}"
            )));
        }
        DensityMatrix::from_hermitian(HermitianMatrix(h.unscale(tr)))
    }

    pub fn from_pure(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if !(n > 0.0) {
            return invalid("zero state vector");
        }
        DensityMatrix::from_computed(&(psi * psi.adjoint()))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix(HermitianMatrix(CMatrix::identity(d, d).unscale(d as f64)))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn matrix(&self) -> &CMatrix {
        self.0.matrix()
    }

    pub fn purity(&self) -> f64 {
        trace_product(self.matrix(), self.matrix())
    }

    /// `U rho U^dagger`.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        DensityMatrix::from_computed(&(u * self.matrix() * u.adjoint()))
    }
}

impl Deref for DensityMatrix {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        self.0.matrix()
    }
}

/// Ascending eigenvalues with orthonormal eigenvectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V f(Lambda) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let d = CMatrix::from_diagonal(&self.values.map(f));
        &self.vectors * d * self.vectors.adjoint()
    }
}

fn raw_eig(m: &CMatrix) -> Result<Spectrum> {
    let n = m.nrows();
    let max_niter = 200 * n.max(1);
    let Some(eig) = SymmetricEigen::try_new(m.clone(), f64::EPSILON, max_niter) else {
        return Err(CoherenceError::Numerical(format!(
            "Hermitian eigensolver did not converge within {max_niter} iterations"
        )));
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok(Spectrum { values, vectors })
}

/// Eigendecomposition with a reconstruction-residual check.
pub fn eig_hermitian(a: &HermitianMatrix) -> Result<Spectrum> {
    let s = raw_eig(a.matrix())?;
    let rec = s.map(cr);
    let scale = a.norm().max(1.0);
    let res = (a.matrix() - rec).norm();
    if res > EIG_RESIDUAL_TOL * scale {
        return Err(CoherenceError::Numerical(format!(
            "eigendecomposition residual {res:.3e} too large"
        )));
    }
    Ok(s)
}

/// Eigenvalues (ascending) of the Hermitian part of `m`.
pub fn eigenvalues(m: &CMatrix) -> DVector<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    DVector::from_vec(v)
}

pub fn lambda_min(m: &CMatrix) -> f64 {
    eigenvalues(m)[0]
}

pub fn lambda_max(m: &CMatrix) -> f64 {
    let v = eigenvalues(m);
    v[v.len() - 1]
}

pub fn is_psd(a: &HermitianMatrix, tol: f64) -> Result<bool> {
    if !(tol >= 0.0) {
        return invalid("tolerance must be nonnegative");
    }
    Ok(eig_hermitian(a)?.min() >= -tol)
}

/// `M(A)_ii = |A_ii|`, `M(A)_ij = -|A_ij|`.
pub fn comparison_matrix(a: &HermitianMatrix) -> HermitianMatrix {
    let n = a.dim();
    HermitianMatrix(CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            cr(a[(i, i)].norm())
        } else {
            cr(-a[(i, j)].norm())
        }
    }))
}

/// Rows and columns of `a` restricted to `indices` (0-based, order kept).
pub fn principal_submatrix(a: &CMatrix, indices: &[usize]) -> Result<CMatrix> {
    let d = a.nrows();
    if indices.is_empty() {
        return invalid("index subset is empty");
    }
    for (k, &i) in indices.iter().enumerate() {
        if i >= d {
            return invalid(format!("index {i} out of range for dimension {d}"));
        }
        if indices[..k].contains(&i) {
            return invalid(format!("index {i} repeated"));
        }
    }
    Ok(CMatrix::from_fn(indices.len(), indices.len(), |r, s| {
        a[(indices[r], indices[s])]
    }))
}

/// `Re Tr(A B)`.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    s
}

/// Square root of a PSD matrix (negative eigenvalues clipped to zero).
pub fn sqrt_psd(m: &CMatrix) -> Result<CMatrix> {
    let s = raw_eig(&hermitian_part(m))?;
    Ok(s.map(|x| cr(x.max(0.0).sqrt())))
}

/// Uhlmann fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return invalid(format!(
            "dimension mismatch {} vs {}",
            rho.dim(),
            sigma.dim()
        ));
    }
    let sr = sqrt_psd(rho)?;
    let inner = &sr * sigma.matrix() * &sr;
    // rounding noise around zero eigenvalues would otherwise add O(1e-8)
    let f: f64 = eigenvalues(&inner)
        .iter()
        .filter(|&&x| x > 1e-14)
        .map(|x| x.sqrt())
        .sum();
    Ok(f.clamp(0.0, 1.0))
}

/// `(1/2) ||rho - sigma||_1`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return invalid(format!(
            "dimension mismatch {} vs {}",
            rho.dim(),
            sigma.dim()
        ));
    }
    let diff = rho.matrix() - sigma.matrix();
    let t: f64 = eigenvalues(&diff).iter().map(|x| x.abs()).sum();
    Ok((0.5 * t).clamp(0.0, 1.0))
}

/// `exp(-i t H)` for Hermitian `H`.
pub fn unitary_exp(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let s = raw_eig(&hermitian_part(h))?;
    Ok(s.map(|x| Complex64::from_polar(1.0, -t * x)))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    CMatrix::from_fn(ra * rb, ca * cb, |i, j| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    r
}

/// All `k`-element subsets of `0..d` in lexicographic order.
pub fn subsets(d: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > d {
        return invalid(format!("subset size {k} out of range for dimension {d}"));
    }
    let count = binomial(d, k);
    if count > MAX_SUBSETS {
        return invalid(format!(
            "binom({d},{k}) = {count} subsets exceeds the enumeration limit"
        ));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < d - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(n: usize, v: &[f64]) -> HermitianMatrix {
        HermitianMatrix::from_real(&DMatrix::from_row_slice(n, n, v)).unwrap()
    }

    #[test]
    fn eig_examples() {
        let s = eig_hermitian(&HermitianMatrix::identity(3)).unwrap();
        assert_eq!(s.values.as_slice(), &[1.0, 1.0, 1.0]);
        let s = eig_hermitian(&real(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((s.values[0] + 1.0).abs() < 1e-14 && (s.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[cr(1.0), cr(2.0), cr(0.0), cr(1.0)]);
        assert!(HermitianMatrix::new(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[cr(1.0), cr(1.0 + 1e-13), cr(1.0), cr(1.0)]);
        let h = HermitianMatrix::new(m).unwrap();
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn psd_examples() {
        assert!(is_psd(&HermitianMatrix::identity(3), 0.0).unwrap());
        assert!(!is_psd(&real(2, &[1.0, 2.0, 2.0, 1.0]), 1e-9).unwrap());
    }

    #[test]
    fn comparison_matrix_of_plus_state() {
        let h = real(2, &[0.5, 0.5, 0.5, 0.5]);
        let m = comparison_matrix(&h);
        assert_eq!(m[(0, 1)], cr(-0.5));
        let s = eig_hermitian(&m).unwrap();
        assert!(s.values[0].abs() < 1e-15 && (s.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn submatrix_bounds() {
        let a = CMatrix::from_fn(3, 3, |i, j| cr((3 * i + j) as f64));
        assert_eq!(principal_submatrix(&a, &[0, 1, 2]).unwrap(), a);
        assert_eq!(principal_submatrix(&a, &[1]).unwrap()[(0, 0)], cr(4.0));
        assert_eq!(principal_submatrix(&a, &[2, 0]).unwrap()[(0, 1)], cr(6.0));
        assert!(principal_submatrix(&a, &[3]).is_err());
        assert!(principal_submatrix(&a, &[1, 1]).is_err());
        assert!(principal_submatrix(&a, &[]).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let zero = DensityMatrix::from_pure(&CVector::from_vec(vec![cr(1.0), cr(0.0)])).unwrap();
        let one = DensityMatrix::from_pure(&CVector::from_vec(vec![cr(0.0), cr(1.0)])).unwrap();
        let plus = DensityMatrix::from_pure(&CVector::from_vec(vec![cr(1.0), cr(1.0)])).unwrap();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(trace_distance(&zero, &zero).unwrap() < 1e-12);
        assert!(fidelity(&zero, &one).unwrap() < 1e-12);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((fidelity(&zero, &plus).unwrap() - r).abs() < 1e-8);
        assert!((trace_distance(&zero, &plus).unwrap() - r).abs() < 1e-12);
        assert!(fidelity(&zero, &DensityMatrix::maximally_mixed(3)).is_err());
    }

    #[test]
    fn subset_enumeration() {
        let s = subsets(4, 2).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s[0], vec![0, 1]);
        assert_eq!(s[5], vec![2, 3]);
        assert_eq!(subsets(5, 5).unwrap(), vec![vec![0, 1, 2, 3, 4]]);
        assert!(subsets(3, 0).is_err());
        assert!(subsets(40, 20).is_err());
        assert_eq!(binomial(8, 4), 70);
    }

    #[test]
    fn unitary_exp_of_diagonal() {
        let h = CMatrix::from_diagonal(&DVector::from_vec(vec![cr(0.0), cr(1.0)]));
        let u = unitary_exp(&h, std::f64::consts::PI).unwrap();
        assert!((u[(1, 1)] - cr(-1.0)).norm() < 1e-12);
    }
}
