//! State factories, coherence rank and the dephasing channels.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{binomial, cr, subsets, CMatrix, CVector, DensityMatrix};

/// Default threshold below which an amplitude counts as zero.
pub const AMP_TOL: f64 = 1e-8;

/// Normalised pure state in the classical basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: CVector,
}

impl PureState {
    pub fn new(amps: CVector) -> Result<Self> {
        if amps.is_empty() {
            return invalid("pure state needs at least one amplitude");
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("amplitudes must be finite");
        }
        let n2 = amps.norm_squared();
        if (n2 - 1.0).abs() > 1e-10 {
            return invalid(format!("amplitudes have squared norm {n2}, expected 1"));
        }
        Ok(PureState { amps })
    }

    /// Normalises `v` first.
    pub fn normalized(v: CVector) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return invalid("cannot normalise a zero or non-finite vector");
        }
        PureState::new(v.unscale(n))
    }

    pub fn basis(d: usize, i: usize) -> Result<Self> {
        if i >= d {
            return invalid(format!("basis index {i} out of range for dimension {d}"));
        }
        let mut v = CVector::zeros(d);
        v[i] = cr(1.0);
        PureState::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(&self.amps).expect("normalised state")
    }
}

/// Parameters of the noisy maximally coherent family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyMcsParams {
    pub dim: usize,
    pub p: f64,
}

/// Uniform superposition `d^{-1/2} sum_i |i>`.
pub fn max_coherent(d: usize) -> Result<PureState> {
    if d == 0 {
        return invalid("dimension must be positive");
    }
    PureState::new(CVector::from_element(d, cr(1.0 / (d as f64).sqrt())))
}

/// `(1 - p) I/d + p |psi+><psi+|`, built entrywise.
pub fn noisy_max_coherent(params: NoisyMcsParams) -> Result<DensityMatrix> {
    let NoisyMcsParams { dim: d, p } = params;
    if d < 2 {
        return invalid("noisy maximally coherent states need d >= 2");
    }
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("mixing parameter p = {p} outside [0, 1]"));
    }
    let df = d as f64;
    let m = CMatrix::from_fn(d, d, |i, j| if i == j { cr(1.0 / df) } else { cr(p / df) });
    DensityMatrix::new(m)
}

/// Number of amplitudes with modulus above `amp_tol`.
pub fn coherence_rank(psi: &PureState, amp_tol: f64) -> usize {
    psi.amps
        .iter()
        .filter(|z| z.norm() > amp_tol)
        .count()
        .max(1)
}

/// Diagonal part of `rho`.
pub fn dephase_full(rho: &DensityMatrix) -> DensityMatrix {
    let d = rho.dim();
    let m = CMatrix::from_fn(d, d, |i, j| if i == j { rho[(i, i)] } else { cr(0.0) });
    DensityMatrix::new(m).expect("diagonal of a state is a state")
}

fn check_k(d: usize, k: usize) -> Result<()> {
    if k == 0 || k > d {
        return invalid(format!("level k = {k} outside [1, {d}]"));
    }
    Ok(())
}

/// k-dephasing via the convex form
/// `(k-1)/(d-1) rho + (d-k)/(d-1) Delta(rho)`.
pub fn dephase_k(rho: &DensityMatrix, k: usize) -> Result<DensityMatrix> {
    let d = rho.dim();
    check_k(d, k)?;
    if d == 1 {
        return Ok(rho.clone());
    }
    let off = (k - 1) as f64 / (d - 1) as f64;
    let m = CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            rho[(i, i)]
        } else {
            rho[(i, j)] * off
        }
    });
    DensityMatrix::from_computed(&m)
}

/// k-dephasing as the normalised sum of `P_I rho P_I` over all k-subsets.
pub fn dephase_k_projectors(rho: &DensityMatrix, k: usize) -> Result<DensityMatrix> {
    let d = rho.dim();
    check_k(d, k)?;
    let norm = binomial(d - 1, k - 1) as f64;
    let mut acc = CMatrix::zeros(d, d);
    for set in subsets(d, k)? {
        for &i in &set {
            for &j in &set {
                acc[(i, j)] += rho[(i, j)];
            }
        }
    }
    DensityMatrix::from_computed(&acc.unscale(norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factories() {
        assert_eq!(max_coherent(1).unwrap().amplitudes()[0], cr(1.0));
        let r = max_coherent(2).unwrap();
        assert!((r.amplitudes()[1].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(max_coherent(0).is_err());
        let rho = noisy_max_coherent(NoisyMcsParams { dim: 4, p: 0.5 }).unwrap();
        assert!((rho[(0, 0)].re - 0.25).abs() < 1e-15 && (rho[(0, 3)].re - 0.125).abs() < 1e-15);
        let pure = noisy_max_coherent(NoisyMcsParams { dim: 4, p: 1.0 }).unwrap();
        assert!((pure.matrix() - max_coherent(4).unwrap().density().matrix()).norm() < 1e-15);
        assert!(noisy_max_coherent(NoisyMcsParams { dim: 4, p: 1.1 }).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(coherence_rank(&PureState::basis(4, 0).unwrap(), AMP_TOL), 1);
        assert_eq!(coherence_rank(&max_coherent(4).unwrap(), AMP_TOL), 4);
        let eps: f64 = 0.01;
        let tail = (eps / 3.0).sqrt();
        let v = CVector::from_vec(vec![cr((1.0 - eps).sqrt()), cr(tail), cr(tail), cr(tail)]);
        assert_eq!(coherence_rank(&PureState::new(v).unwrap(), AMP_TOL), 4);
        let s = 1.0 / 3f64.sqrt();
        let v = CVector::from_vec(vec![cr(0.0), cr(s), cr(s), cr(s)]);
        assert_eq!(coherence_rank(&PureState::new(v).unwrap(), AMP_TOL), 3);
    }

    #[test]
    fn dephasing_examples() {
        let psi = max_coherent(4).unwrap().density();
        let third = noisy_max_coherent(NoisyMcsParams {
            dim: 4,
            p: 1.0 / 3.0,
        })
        .unwrap();
        let d2 = dephase_k(&psi, 2).unwrap();
        assert!((d2.matrix() - third.matrix()).norm() < 1e-14);
        assert!((dephase_k(&psi, 4).unwrap().matrix() - psi.matrix()).norm() < 1e-15);
        assert_eq!(dephase_k(&psi, 1).unwrap(), dephase_full(&psi));
        assert!(
            (dephase_full(&psi).matrix() - DensityMatrix::maximally_mixed(4).matrix()).norm()
                < 1e-15
        );
        assert!(dephase_k(&psi, 5).is_err());
        for k in 1..=4 {
            let a = dephase_k(&psi, k).unwrap();
            let b = dephase_k_projectors(&psi, k).unwrap();
            assert!((a.matrix() - b.matrix()).norm() < 1e-14);
        }
    }
}
