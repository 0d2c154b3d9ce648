//! Multilevel coherence witnesses, k-coherence numerical ranges and the
//! single-observable robustness bound.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoherenceError, Result};
use crate::linalg::{
    eig_hermitian, eigenvalues, lambda_max, principal_submatrix, subsets, CMatrix, DensityMatrix,
    HermitianMatrix,
};
use crate::states::PureState;

/// Hermitian observable non-negative on every state of coherence number
/// at most `level_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub level_k: usize,
    pub matrix: HermitianMatrix,
    /// `W <= I` has been checked.
    pub normalized: bool,
    /// Every `level_k`-block has been checked positive.
    pub validated: bool,
}

impl Witness {
    /// Validates `matrix` at level `k` and records `W <= I`.
    pub fn checked(matrix: HermitianMatrix, k: usize, tol: f64) -> Result<Witness> {
        if !validate_witness(&matrix, k, tol)? {
            return invalid(format!("matrix is not a witness at level {k}"));
        }
        let normalized = lambda_max(&matrix) <= 1.0 + tol;
        Ok(Witness {
            level_k: k,
            matrix,
            normalized,
            validated: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `Tr(W rho)`.
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        if rho.dim() != self.dim() {
            return invalid(format!(
                "witness dimension {} does not match state dimension {}",
                self.dim(),
                rho.dim()
            ));
        }
        Ok(self.matrix.expectation(rho))
    }
}

/// `W_k(psi) = I - (sum of the k largest |c_i|^2)^{-1} |psi><psi|`.
pub fn witness_from_pure(psi: &PureState, k: usize) -> Result<Witness> {
    let d = psi.dim();
    if k == 0 || k >= d {
        return invalid(format!(
            "witness level k = {k} must lie in [1, {}]",
            d.saturating_sub(1)
        ));
    }
    let mut weights: Vec<f64> = psi.amplitudes().iter().map(|z| z.norm_sqr()).collect();
    // stable sort keeps index order among ties
    weights.sort_by(|a, b| b.total_cmp(a));
    let top: f64 = weights[..k].iter().sum();
    if !(top > 0.0) {
        return invalid("top-k amplitudes vanish");
    }
    let v = psi.amplitudes();
    let m = CMatrix::identity(d, d) - (v * v.adjoint()).unscale(top);
    Ok(Witness {
        level_k: k,
        matrix: HermitianMatrix::from_computed(&m),
        normalized: true,
        validated: true,
    })
}

/// True iff every `k x k` principal block of `w` has `lambda_min >= -tol`.
pub fn validate_witness(w: &HermitianMatrix, k: usize, tol: f64) -> Result<bool> {
    let d = w.dim();
    for set in subsets(d, k)? {
        let block = principal_submatrix(w, &set)?;
        if eigenvalues(&block)[0] < -tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigSanity {
    pub n_negative: usize,
    pub min_eig: f64,
    pub max_eig: f64,
    /// Lower bound `-(d-k)/k * lambda_max` on the spectrum.
    pub min_eig_bound: f64,
    pub bound_ok: bool,
}

/// Checks the spectral constraints every valid witness obeys: at most
/// `d - k` negative eigenvalues and `lambda_min >= -(d-k)/k lambda_max`.
pub fn witness_eig_sanity(w: &Witness, tol: f64) -> Result<EigSanity> {
    if !w.validated {
        return invalid("witness has not been validated");
    }
    let d = w.dim();
    let k = w.level_k;
    let spec = eig_hermitian(&w.matrix)?;
    let n_negative = spec.values.iter().filter(|&&x| x < -tol).count();
    let min_eig_bound = -((d - k) as f64 / k as f64) * spec.max();
    let bound_ok = n_negative <= d - k && spec.min() >= min_eig_bound - tol;
    Ok(EigSanity {
        n_negative,
        min_eig: spec.min(),
        max_eig: spec.max(),
        min_eig_bound,
        bound_ok,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericalRange {
    pub level_k: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Extreme expectation values of `o` over states of coherence number at most `k`.
pub fn k_numerical_range(o: &HermitianMatrix, k: usize) -> Result<NumericalRange> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for set in subsets(o.dim(), k)? {
        let ev = eigenvalues(&principal_submatrix(o, &set)?);
        lo = lo.min(ev[0]);
        hi = hi.max(ev[ev.len() - 1]);
    }
    Ok(NumericalRange { level_k: k, lo, hi })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableBound {
    pub value: f64,
    /// A denominator vanished, so that branch carried no information.
    pub degenerate_branch: bool,
}

/// Lower bound on the robustness at level `k` from one expectation value.
pub fn single_observable_bound(
    o: &HermitianMatrix,
    value: f64,
    k: usize,
) -> Result<ObservableBound> {
    if !value.is_finite() {
        return invalid("expectation value must be finite");
    }
    let ev = eigenvalues(o);
    let (lmin, lmax) = (ev[0], ev[ev.len() - 1]);
    let scale = lmax.abs().max(lmin.abs()).max(1.0);
    let slack = 1e-9 * scale;
    if value < lmin - slack || value > lmax + slack {
        return Err(CoherenceError::InconsistentData {
            value,
            lo: lmin,
            hi: lmax,
        });
    }
    if lmax - lmin <= 1e-12 * scale {
        return Err(CoherenceError::DegenerateObservable);
    }
    let nr = k_numerical_range(o, k)?;
    let mut best: f64 = 0.0;
    let mut degenerate_branch = false;
    let den_hi = nr.hi - lmin;
    if den_hi > 1e-12 * scale {
        best = best.max((value - nr.hi) / den_hi);
    } else {
        degenerate_branch = true;
    }
    let den_lo = lmax - nr.lo;
    if den_lo > 1e-12 * scale {
        best = best.max((nr.lo - value) / den_lo);
    } else {
        degenerate_branch = true;
    }
    Ok(ObservableBound {
        value: best,
        degenerate_branch,
    })
}
