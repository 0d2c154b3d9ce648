//! Phase discrimination: phase channels, success probabilities, the
//! robustness bound they imply and the optimal guessing probability.

use std::f64::consts::PI;

use coherence_sdp::{
    solve, BlockKind, Coef, LinearMap, Relation, SdpProblem, Sense, SolveOptions, Status,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoherenceError, Result};
use crate::linalg::{eig_hermitian, lambda_min, CMatrix, DensityMatrix, HermitianMatrix};
use crate::states::max_coherent;

const POVM_TOL: f64 = 1e-10;

/// Ensemble of phases `phi_m` with prior probabilities `p_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTask {
    pub dim: usize,
    /// `(prior, phase)` pairs.
    pub entries: Vec<(f64, f64)>,
}

impl PhaseTask {
    pub fn new(dim: usize, entries: Vec<(f64, f64)>) -> Result<Self> {
        if dim == 0 {
            return invalid("task dimension must be positive");
        }
        if entries.is_empty() {
            return invalid("task needs at least one phase");
        }
        let mut total = 0.0;
        for &(p, phi) in &entries {
            if !(p >= 0.0) || !p.is_finite() {
                return invalid(format!("prior {p} is not a probability"));
            }
            if !(0.0..2.0 * PI).contains(&phi) {
                return invalid(format!("phase {phi} outside [0, 2pi)"));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("priors sum to {total}, expected 1"));
        }
        Ok(PhaseTask { dim, entries })
    }

    /// `{(1/d, 2 pi m / d)}` for `m = 0..d`.
    pub fn uniform(d: usize) -> Result<Self> {
        if d == 0 {
            return invalid("task dimension must be positive");
        }
        PhaseTask::new(
            d,
            (0..d)
                .map(|m| (1.0 / d as f64, 2.0 * PI * m as f64 / d as f64))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Best classical success probability: the largest prior.
    pub fn p_max(&self) -> f64 {
        self.entries.iter().map(|e| e.0).fold(0.0, f64::max)
    }
}

/// Generalised measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<HermitianMatrix>,
}

impl Povm {
    /// Checks positivity and completeness within `1e-10`.
    pub fn new(elements: Vec<HermitianMatrix>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return invalid("measurement needs at least one element");
        };
        let d = first.dim();
        let mut sum = CMatrix::zeros(d, d);
        for (i, m) in elements.iter().enumerate() {
            if m.dim() != d {
                return invalid(format!(
                    "element {i} has dimension {}, expected {d}",
                    m.dim()
                ));
            }
            let l = lambda_min(m);
            if l < -POVM_TOL {
                return invalid(format!("element {i} has negative eigenvalue {l:.3e}"));
            }
            sum += m.matrix();
        }
        let dev = (sum - CMatrix::identity(d, d))
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()));
        if dev > POVM_TOL {
            return invalid(format!("elements sum to identity only within {dev:.3e}"));
        }
        Ok(Povm { elements })
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// Outcome probabilities `Tr(M_m rho)`.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.elements
            .iter()
            .map(|m| m.expectation(rho.matrix()))
            .collect()
    }
}

/// Phase unitary `exp(-i H phi)` with `H = diag(0, 1, ..., d-1)`.
pub fn phase_unitary(d: usize, phi: f64) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            Complex64::from_polar(1.0, -(i as f64) * phi)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// `U_phi rho U_phi^dagger`: entry `(j, l)` picks up `exp(-i (j - l) phi)`.
pub fn apply_phase(rho: &DensityMatrix, phi: f64) -> DensityMatrix {
    let d = rho.dim();
    let m = CMatrix::from_fn(d, d, |j, l| {
        rho[(j, l)] * Complex64::from_polar(1.0, -((j as f64) - (l as f64)) * phi)
    });
    DensityMatrix::from_computed(&m).expect("unitary image of a state")
}

/// `sum_m p_m Tr(U_m(rho) M_m)`.
pub fn success_probability(rho: &DensityMatrix, task: &PhaseTask, povm: &Povm) -> Result<f64> {
    if task.len() != povm.len() {
        return invalid(format!(
            "task has {} phases but measurement has {} outcomes",
            task.len(),
            povm.len()
        ));
    }
    if rho.dim() != task.dim || povm.dim() != task.dim {
        return invalid("state, task and measurement dimensions differ");
    }
    let mut s = 0.0;
    for ((p, phi), m) in task.entries.iter().zip(povm.elements()) {
        s += p * m.expectation(apply_phase(rho, *phi).matrix());
    }
    Ok(s.clamp(0.0, 1.0))
}

/// `M_m = U_m |psi+><psi+| U_m^dagger`, optimal for the uniform task.
pub fn uniform_optimal_povm(d: usize) -> Result<Povm> {
    let psi = max_coherent(d)?.density();
    let task = PhaseTask::uniform(d)?;
    Povm::new(
        task.entries
            .iter()
            .map(|(_, phi)| apply_phase(&psi, *phi).hermitian().clone())
            .collect(),
    )
}

/// Measurement that always guesses the most likely phase.
pub fn guess_most_likely(task: &PhaseTask) -> Result<Povm> {
    let best = task
        .entries
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let d = task.dim;
    Povm::new(
        (0..task.len())
            .map(|m| {
                if m == best {
                    HermitianMatrix::identity(d)
                } else {
                    HermitianMatrix::identity(d).scale(0.0)
                }
            })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuessResult {
    pub value: f64,
    pub gap: f64,
    /// Measurement read off the dual multipliers (best effort).
    pub povm: Option<Povm>,
}

/// `min Tr sigma` subject to `sigma >= p_m rho_m` for every member.
pub fn optimal_guess_probability(ensemble: &[(f64, DensityMatrix)]) -> Result<GuessResult> {
    let Some((_, first)) = ensemble.first() else {
        return invalid("ensemble is empty");
    };
    let d = first.dim();
    let total: f64 = ensemble.iter().map(|e| e.0).sum();
    if (total - 1.0).abs() > 1e-10 || ensemble.iter().any(|e| !(e.0 >= 0.0)) {
        return invalid(format!(
            "priors must be nonnegative and sum to 1 (sum {total})"
        ));
    }
    if ensemble.iter().any(|e| e.1.dim() != d) {
        return invalid("ensemble states have different dimensions");
    }
    let mut p = SdpProblem::new(Sense::Minimize);
    let sigma = p.add_block(BlockKind::Hermitian(d));
    p.add_objective(sigma, Coef::identity(d));
    let cons: Vec<_> = ensemble
        .iter()
        .map(|(pm, rho)| {
            p.add_matrix_ineq(
                &[(sigma, 1.0, LinearMap::Identity)],
                Relation::Ge,
                &rho.matrix().scale(*pm),
            )
        })
        .collect();
    let sol = solve(&p, &SolveOptions::default())?;
    if sol.status != Status::Optimal {
        return Err(CoherenceError::Solver {
            status: sol.status,
            context: "guessing program".into(),
        });
    }
    let raw: Vec<CMatrix> = cons
        .iter()
        .map(|mc| clip_psd(&p.matrix_multiplier(mc, &sol.dual_y)))
        .collect();
    let povm = complete_povm(raw).ok();
    Ok(GuessResult {
        value: sol.primal_value,
        gap: sol.gap,
        povm,
    })
}

fn clip_psd(m: &CMatrix) -> CMatrix {
    match eig_hermitian(&HermitianMatrix::from_computed(m)) {
        Ok(s) => s.map(|x| Complex64::new(x.max(0.0), 0.0)),
        Err(_) => m.clone(),
    }
}

/// Rescales PSD elements by `S^{-1/2}` (with `S` their sum) so they sum to the identity.
fn complete_povm(raw: Vec<CMatrix>) -> Result<Povm> {
    let d = raw[0].nrows();
    let sum = raw.iter().fold(CMatrix::zeros(d, d), |a, m| a + m);
    let s = eig_hermitian(&HermitianMatrix::from_computed(&sum))?;
    if s.min() <= 0.0 {
        return Err(CoherenceError::Numerical(
            "measurement elements do not span the space".into(),
        ));
    }
    let isqrt = s.map(|x| Complex64::new(1.0 / x.sqrt(), 0.0));
    Povm::new(
        raw.iter()
            .map(|m| HermitianMatrix::from_computed(&(&isqrt * m * &isqrt)))
            .collect(),
    )
}

/// `max{0, p_succ / (k p_max) - 1}`.
pub fn sdi_rmc_bound(p_succ: f64, p_max: f64, k: usize) -> Result<f64> {
    if !(p_max > 0.0 && p_max <= 1.0) {
        return invalid(format!("p_max = {p_max} outside (0, 1]"));
    }
    if !(0.0..=1.0).contains(&p_succ) {
        return invalid(format!("p_succ = {p_succ} outside [0, 1]"));
    }
    if k == 0 {
        return invalid("level k must be positive");
    }
    Ok((p_succ / (k as f64 * p_max) - 1.0).max(0.0))
}

/// Multiplicative correction `1 + d sqrt(1 - F_p^2)` for an imperfect phase device.
pub fn imperfection_factor(d: usize, process_fidelity: f64) -> Result<f64> {
    if !(process_fidelity > 0.0 && process_fidelity <= 1.0) {
        return invalid(format!(
            "process fidelity {process_fidelity} outside (0, 1]"
        ));
    }
    Ok(1.0 + d as f64 * (1.0 - process_fidelity * process_fidelity).sqrt())
}

/// Classical success probability inflated by [`imperfection_factor`], capped at 1.
pub fn imperfection_corrected_pmax(p_max: f64, d: usize, process_fidelity: f64) -> Result<f64> {
    Ok((p_max * imperfection_factor(d, process_fidelity)?).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cr, CVector};
    use crate::states::{noisy_max_coherent, NoisyMcsParams};

    #[test]
    fn phase_action() {
        let plus = max_coherent(2).unwrap().density();
        assert_eq!(apply_phase(&plus, 0.0), plus);
        let flipped = apply_phase(&plus, PI);
        assert!((flipped[(0, 1)] + cr(0.5)).norm() < 1e-15);
        let diag = DensityMatrix::maximally_mixed(3);
        assert!((apply_phase(&diag, 1.3).matrix() - diag.matrix()).norm() < 1e-15);
    }

    #[test]
    fn uniform_task_success() {
        let d = 4;
        let task = PhaseTask::uniform(d).unwrap();
        let povm = uniform_optimal_povm(d).unwrap();
        for p in [0.0, 0.4, 1.0] {
            let rho = noisy_max_coherent(NoisyMcsParams { dim: d, p }).unwrap();
            let ps = success_probability(&rho, &task, &povm).unwrap();
            assert!((ps - (1.0 + 3.0 * p) / 4.0).abs() < 1e-12);
        }
        let incoherent = DensityMatrix::maximally_mixed(d);
        let guess = guess_most_likely(&task).unwrap();
        assert!(
            (success_probability(&incoherent, &task, &guess).unwrap() - task.p_max()).abs() < 1e-15
        );
        let single = PhaseTask::new(d, vec![(1.0, 0.7)]).unwrap();
        let trivial = Povm::new(vec![HermitianMatrix::identity(d)]).unwrap();
        assert!((success_probability(&incoherent, &single, &trivial).unwrap() - 1.0).abs() < 1e-15);
        assert!(success_probability(&incoherent, &single, &povm).is_err());
    }

    #[test]
    fn guessing_examples() {
        let zero = DensityMatrix::from_pure(&CVector::from_vec(vec![cr(1.0), cr(0.0)])).unwrap();
        let one = DensityMatrix::from_pure(&CVector::from_vec(vec![cr(0.0), cr(1.0)])).unwrap();
        let plus = max_coherent(2).unwrap().density();
        let g = optimal_guess_probability(&[(0.5, zero.clone()), (0.5, one)]).unwrap();
        assert!((g.value - 1.0).abs() < 1e-7);
        let g = optimal_guess_probability(&[(0.5, zero.clone()), (0.5, plus)]).unwrap();
        assert!((g.value - (0.5 + 2f64.sqrt() / 4.0)).abs() < 1e-7);
        assert!(g.povm.is_some());
        let g = optimal_guess_probability(&[(0.3, zero.clone()), (0.7, zero)]).unwrap();
        assert!((g.value - 0.7).abs() < 1e-7);
    }

    #[test]
    fn bounds() {
        for k in 1..4 {
            assert_eq!(sdi_rmc_bound(0.25, 0.25, k).unwrap(), 0.0);
        }
        assert!((sdi_rmc_bound(1.0, 0.25, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(sdi_rmc_bound(0.5, 0.0, 1).is_err());
        assert_eq!(imperfection_factor(4, 1.0).unwrap(), 1.0);
        assert!(
            (imperfection_factor(4, 0.9).unwrap() - (1.0 + 4.0 * 0.19f64.sqrt())).abs() < 1e-12
        );
        assert!(
            (imperfection_corrected_pmax(0.25, 4, 0.9956).unwrap() / 0.25 - 1.375).abs() < 5e-3
        );
        assert!(imperfection_factor(4, 0.0).is_err());
    }
}
