//! Analytic membership certificates that need no optimisation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{comparison_matrix, lambda_min, DensityMatrix, PSD_TOL};
use crate::states::dephase_full;

/// Default tolerance for deciding that off-diagonal entries vanish.
pub const DIAGONAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    CertifiedMember,
    CertifiedNonmember,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    pub verdict: Verdict,
    pub criterion: String,
    /// Signed distance to the threshold; positive favours membership.
    pub margin: f64,
    /// Level of the hierarchy the verdict refers to.
    pub k: usize,
    pub tol: f64,
}

/// Membership in C_2 through positivity of the comparison matrix.
pub fn certify_c2_comparison(rho: &DensityMatrix, tol: f64) -> CertificateVerdict {
    let margin = lambda_min(&comparison_matrix(rho.hermitian()));
    let verdict = if margin >= -tol {
        Verdict::CertifiedMember
    } else {
        Verdict::CertifiedNonmember
    };
    CertificateVerdict {
        verdict,
        criterion: "comparison".into(),
        margin,
        k: 2,
        tol,
    }
}

/// Coherence number of a qutrit: 1 if diagonal, 2 if `M(rho)` is PSD,
/// otherwise 3.
pub fn classify_qutrit(rho: &DensityMatrix, tol: f64) -> Result<usize> {
    if rho.dim() != 3 {
        return invalid(format!(
            "qutrit classification needs d = 3, got {}",
            rho.dim()
        ));
    }
    if is_diagonal(rho, DIAGONAL_TOL.max(tol)) {
        return Ok(1);
    }
    Ok(if lambda_min(&comparison_matrix(rho.hermitian())) >= -tol {
        2
    } else {
        3
    })
}

pub fn is_diagonal(rho: &DensityMatrix, tol: f64) -> bool {
    let d = rho.dim();
    (0..d).all(|i| (0..d).all(|j| i == j || rho[(i, j)].norm() <= tol))
}

/// Purity ball: `Tr rho^2 <= 1/(d-1)` certifies membership of C_2 in
/// every basis.
pub fn purity_ball_check(rho: &DensityMatrix) -> CertificateVerdict {
    let d = rho.dim();
    let threshold = if d > 1 {
        1.0 / (d - 1) as f64
    } else {
        f64::INFINITY
    };
    let margin = threshold - rho.purity();
    // purity is computed to about 1e-15; the boundary state sits exactly on it
    let verdict = if margin >= -1e-12 {
        Verdict::CertifiedMember
    } else {
        Verdict::Inconclusive
    };
    CertificateVerdict {
        verdict,
        criterion: "purity".into(),
        margin,
        k: 2,
        tol: 1e-12,
    }
}

/// Sufficient condition `rho >= (d-k)/(d-1) Delta(rho)` for C_k.
///
/// At `k = 1` the condition is exact, so a failure is reported as a
/// certified non-member there.
pub fn sufficient_ck_check(rho: &DensityMatrix, k: usize, tol: f64) -> Result<CertificateVerdict> {
    let d = rho.dim();
    if k == 0 || k > d {
        return invalid(format!("level k = {k} outside [1, {d}]"));
    }
    let coef = if d > 1 {
        (d - k) as f64 / (d - 1) as f64
    } else {
        0.0
    };
    let diff = rho.matrix() - dephase_full(rho).matrix().scale(coef);
    let margin = lambda_min(&diff);
    let verdict = if margin >= -tol {
        Verdict::CertifiedMember
    } else if k == 1 {
        Verdict::CertifiedNonmember
    } else {
        Verdict::Inconclusive
    };
    Ok(CertificateVerdict {
        verdict,
        criterion: "sufficient".into(),
        margin,
        k,
        tol,
    })
}

/// Default tolerance for eigenvalue margins.
pub const MARGIN_TOL: f64 = PSD_TOL;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cr, CMatrix};
    use crate::states::{max_coherent, noisy_max_coherent, NoisyMcsParams};

    pub(crate) fn qutrit_c2_member() -> DensityMatrix {
        DensityMatrix::new(CMatrix::from_fn(3, 3, |i, j| {
            cr(if i == j { 1.0 / 3.0 } else { 1.0 / 6.0 })
        }))
        .unwrap()
    }

    pub(crate) fn qutrit_genuine() -> DensityMatrix {
        let diag = [5.0 / 12.0, 1.0 / 6.0, 5.0 / 12.0];
        DensityMatrix::new(CMatrix::from_fn(3, 3, |i, j| {
            cr(if i == j { diag[i] } else { 1.0 / 6.0 })
        }))
        .unwrap()
    }

    #[test]
    fn lower_state_determinant() {
        let m = comparison_matrix(qutrit_genuine().hermitian());
        let re = m.map(|z| z.re);
        assert!((re.determinant() + 7.0 / 864.0).abs() < 1e-15);
    }

    #[test]
    fn comparison_examples() {
        let diag = DensityMatrix::new(CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            cr(0.2),
            cr(0.3),
            cr(0.5),
        ])))
        .unwrap();
        assert_eq!(
            certify_c2_comparison(&diag, MARGIN_TOL).verdict,
            Verdict::CertifiedMember
        );
        let up = certify_c2_comparison(&qutrit_c2_member(), MARGIN_TOL);
        assert_eq!(up.verdict, Verdict::CertifiedMember);
        assert!(up.margin.abs() < 1e-14);
        assert_eq!(
            certify_c2_comparison(&qutrit_genuine(), MARGIN_TOL).verdict,
            Verdict::CertifiedNonmember
        );
    }

    #[test]
    fn qutrit_examples() {
        assert_eq!(
            classify_qutrit(&DensityMatrix::maximally_mixed(3), MARGIN_TOL).unwrap(),
            1
        );
        assert_eq!(classify_qutrit(&qutrit_c2_member(), MARGIN_TOL).unwrap(), 2);
        assert_eq!(classify_qutrit(&qutrit_genuine(), MARGIN_TOL).unwrap(), 3);
        assert!(classify_qutrit(&DensityMatrix::maximally_mixed(4), MARGIN_TOL).is_err());
    }

    #[test]
    fn purity_examples() {
        let v = purity_ball_check(&DensityMatrix::maximally_mixed(4));
        assert_eq!(v.verdict, Verdict::CertifiedMember);
        let mut m = CMatrix::identity(4, 4);
        m[(0, 0)] = cr(0.0);
        let boundary = DensityMatrix::new(m.unscale(3.0)).unwrap();
        let v = purity_ball_check(&boundary);
        assert_eq!(v.verdict, Verdict::CertifiedMember);
        assert!(v.margin.abs() < 1e-15);
        let v = purity_ball_check(&max_coherent(4).unwrap().density());
        assert_eq!(v.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn sufficient_examples() {
        let v = sufficient_ck_check(&DensityMatrix::maximally_mixed(4), 2, MARGIN_TOL).unwrap();
        assert_eq!(v.verdict, Verdict::CertifiedMember);
        assert!(v.margin > 0.0);
        for p in [0.0, 0.2, 0.33, 1.0 / 3.0, 0.34, 0.6, 1.0] {
            let rho = noisy_max_coherent(NoisyMcsParams { dim: 4, p }).unwrap();
            let v = sufficient_ck_check(&rho, 2, MARGIN_TOL).unwrap();
            assert_eq!(
                v.verdict == Verdict::CertifiedMember,
                p <= 1.0 / 3.0 + 1e-12,
                "p = {p}"
            );
        }
        let v = sufficient_ck_check(&max_coherent(4).unwrap().density(), 3, MARGIN_TOL).unwrap();
        assert_eq!(v.verdict, Verdict::Inconclusive);
        let v = sufficient_ck_check(&max_coherent(4).unwrap().density(), 1, MARGIN_TOL).unwrap();
        assert_eq!(v.verdict, Verdict::CertifiedNonmember);
        assert!(sufficient_ck_check(&DensityMatrix::maximally_mixed(4), 0, MARGIN_TOL).is_err());
    }
}
