//! Robustness of multilevel coherence: primal and dual programs, the
//! closed form for noisy maximally coherent states, partial-data lower
//! bounds and the coherence number.

use coherence_sdp::{
    evaluate, solve, BlockId, BlockKind, Coef, LinearMap, Relation, SdpProblem, SdpSolution, Sense,
    SolveOptions, Status,
};
use serde::{Deserialize, Serialize};

use crate::criteria::{certify_c2_comparison, classify_qutrit, Verdict};
use crate::error::{invalid, CoherenceError, Result};
use crate::linalg::{
    eigenvalues, lambda_max, subsets, CMatrix, DensityMatrix, HermitianMatrix, PSD_TOL,
};
use crate::witness::Witness;

/// Membership threshold on the robustness used by [`coherence_number`].
pub const MEMBERSHIP_TOL: f64 = 1e-6;
const WITNESS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RmcResult {
    pub k: usize,
    pub value: f64,
    /// Optimal witness (dual program only).
    pub witness: Option<Witness>,
    /// Optimal blocks `sigma_I` supported on each index set (primal only).
    pub decomposition: Option<Vec<(Vec<usize>, HermitianMatrix)>>,
    pub gap: f64,
    pub feas_residual: f64,
    pub status: Status,
}

fn check_level(d: usize, k: usize) -> Result<()> {
    if k == 0 || k > d {
        return invalid(format!("level k = {k} outside [1, {d}]"));
    }
    Ok(())
}

fn require_optimal(sol: &SdpSolution, context: &str) -> Result<()> {
    if sol.status == Status::Optimal {
        Ok(())
    } else {
        Err(CoherenceError::Solver {
            status: sol.status,
            context: context.to_string(),
        })
    }
}

/// `max Tr(rho Y) - 1` over `Y >= 0` with `P_I (I - Y) P_I >= 0` for every
/// k-subset `I`; the witness is `W = I - Y`.
pub fn dual_program(rho: &DensityMatrix, k: usize) -> Result<(SdpProblem, BlockId)> {
    let d = rho.dim();
    check_level(d, k)?;
    let mut p = SdpProblem::new(Sense::Maximize);
    let y = p.add_block(BlockKind::Hermitian(d));
    p.add_objective(y, Coef::from_hermitian(rho.matrix()));
    p.set_offset(-1.0);
    let id = CMatrix::identity(k, k);
    for set in subsets(d, k)? {
        p.add_matrix_ineq(&[(y, 1.0, LinearMap::Compress(set))], Relation::Le, &id);
    }
    Ok((p, y))
}

/// `min sum_I Tr sigma_I - 1` over PSD `sigma_I` on each k-subset with
/// `sum_I sigma_I >= rho`.
pub fn primal_program(
    rho: &DensityMatrix,
    k: usize,
) -> Result<(SdpProblem, Vec<(Vec<usize>, BlockId)>)> {
    let d = rho.dim();
    check_level(d, k)?;
    let mut p = SdpProblem::new(Sense::Minimize);
    let mut blocks = Vec::new();
    let mut terms = Vec::new();
    for set in subsets(d, k)? {
        let b = p.add_block(BlockKind::Hermitian(k));
        p.add_objective(b, Coef::identity(k));
        terms.push((b, 1.0, LinearMap::Embed(set.clone())));
        blocks.push((set, b));
    }
    p.set_offset(-1.0);
    p.add_matrix_ineq(&terms, Relation::Ge, rho.matrix());
    Ok((p, blocks))
}

pub fn rmc_dual(rho: &DensityMatrix, k: usize) -> Result<RmcResult> {
    rmc_dual_with(rho, k, &SolveOptions::default())
}

pub fn rmc_dual_with(rho: &DensityMatrix, k: usize, opts: &SolveOptions) -> Result<RmcResult> {
    let (p, y) = dual_program(rho, k)?;
    let sol = solve(&p, opts)?;
    require_optimal(&sol, "robustness dual program")?;
    let ym = sol.primal_blocks[y.0].matrix().expect("matrix block");
    let d = rho.dim();
    let mut w = HermitianMatrix::from_computed(&(CMatrix::identity(d, d) - ym));
    let lmax = lambda_max(&w);
    if lmax > 1.0 {
        w = w.scale(1.0 / lmax);
    }
    let value = -w.expectation(rho.matrix());
    let witness = Witness::checked(w, k, WITNESS_TOL).ok();
    Ok(RmcResult {
        k,
        value: value.max(0.0),
        witness,
        decomposition: None,
        gap: sol.gap,
        feas_residual: sol.feas_residual,
        status: sol.status,
    })
}

pub fn rmc_primal(rho: &DensityMatrix, k: usize) -> Result<RmcResult> {
    rmc_primal_with(rho, k, &SolveOptions::default())
}

pub fn rmc_primal_with(rho: &DensityMatrix, k: usize, opts: &SolveOptions) -> Result<RmcResult> {
    let (p, blocks) = primal_program(rho, k)?;
    let sol = solve(&p, opts)?;
    require_optimal(&sol, "robustness primal program")?;
    let decomposition = blocks
        .into_iter()
        .map(|(set, b)| {
            (
                set,
                HermitianMatrix::from_computed(
                    sol.primal_blocks[b.0].matrix().expect("matrix block"),
                ),
            )
        })
        .collect();
    Ok(RmcResult {
        k,
        value: sol.primal_value.max(0.0),
        witness: None,
        decomposition: Some(decomposition),
        gap: sol.gap,
        feas_residual: sol.feas_residual,
        status: sol.status,
    })
}

/// `max{(p(d-1) - (k-1))/k, 0}`.
pub fn rmc_analytic_nmcs(d: usize, k: usize, p: f64) -> f64 {
    let (d, k) = (d as f64, k as f64);
    ((p * (d - 1.0) - (k - 1.0)) / k).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceNumber {
    pub n_c: usize,
    /// Robustness at each level up to and including `n_c`.
    pub rmc: Vec<f64>,
    /// Whether the analytic criteria (comparison matrix, qutrit rule)
    /// agree with the optimisation.
    pub analytic_agrees: bool,
}

/// Smallest k whose robustness is at most `tol`.
pub fn coherence_number(rho: &DensityMatrix, tol: f64) -> Result<CoherenceNumber> {
    let d = rho.dim();
    let mut rmc = Vec::new();
    let mut n_c = d;
    for k in 1..=d {
        let v = rmc_dual(rho, k)?.value;
        rmc.push(v);
        if v <= tol {
            n_c = k;
            break;
        }
    }
    let mut analytic_agrees = true;
    if d >= 2 {
        let in_c2 = n_c <= 2;
        analytic_agrees &=
            (certify_c2_comparison(rho, PSD_TOL).verdict == Verdict::CertifiedMember) == in_c2;
    }
    if d == 3 {
        analytic_agrees &= classify_qutrit(rho, PSD_TOL)? == n_c;
    }
    Ok(CoherenceNumber {
        n_c,
        rmc,
        analytic_agrees,
    })
}

/// Measured expectation value `Tr(O rho)` with asymmetric uncertainty.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub observable: HermitianMatrix,
    pub value: f64,
    pub err_lo: f64,
    pub err_hi: f64,
}

impl Observation {
    pub fn new(observable: HermitianMatrix, value: f64, err_lo: f64, err_hi: f64) -> Result<Self> {
        if !value.is_finite() || !(err_lo >= 0.0) || !(err_hi >= 0.0) {
            return invalid("observation needs a finite value and nonnegative errors");
        }
        let ev = eigenvalues(&observable);
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        let slack = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
        if value < lo - err_lo - slack || value > hi + err_hi + slack {
            return Err(CoherenceError::InconsistentData { value, lo, hi });
        }
        Ok(Observation {
            observable,
            value,
            err_lo,
            err_hi,
        })
    }

    pub fn exact(observable: HermitianMatrix, value: f64) -> Result<Self> {
        Observation::new(observable, value, 0.0, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationBound {
    pub k: usize,
    pub value: f64,
    pub gap: f64,
    pub feas_residual: f64,
    pub n_observations: usize,
}

/// Program minimising the robustness over all states consistent with `obs`.
pub fn observation_program(obs: &[Observation], k: usize, dim: usize) -> Result<SdpProblem> {
    check_level(dim, k)?;
    for (i, o) in obs.iter().enumerate() {
        if o.observable.dim() != dim {
            return invalid(format!(
                "observation {i} has dimension {}, expected {dim}",
                o.observable.dim()
            ));
        }
    }
    let mut p = SdpProblem::new(Sense::Minimize);
    let tau = p.add_block(BlockKind::Hermitian(dim));
    let mut terms = vec![(tau, -1.0, LinearMap::Identity)];
    for set in subsets(dim, k)? {
        let b = p.add_block(BlockKind::Hermitian(k));
        p.add_objective(b, Coef::identity(k));
        terms.push((b, 1.0, LinearMap::Embed(set)));
    }
    p.set_offset(-1.0);
    p.add_matrix_ineq(&terms, Relation::Ge, &CMatrix::zeros(dim, dim));
    p.add_eq(vec![(tau, Coef::identity(dim))], 1.0);
    for o in obs {
        let coef = Coef::from_hermitian(o.observable.matrix());
        if o.err_lo == 0.0 && o.err_hi == 0.0 {
            p.add_eq(vec![(tau, coef)], o.value);
            continue;
        }
        if o.err_lo.is_finite() {
            p.add_ineq(vec![(tau, coef.clone())], Relation::Ge, o.value - o.err_lo);
        }
        if o.err_hi.is_finite() {
            p.add_ineq(vec![(tau, coef)], Relation::Le, o.value + o.err_hi);
        }
    }
    Ok(p)
}

/// Largest relative gap at which a stalled partial-data solve still reports
/// its dual objective as the bound.
pub const STALL_GAP_TOL: f64 = 1e-4;

/// Smallest robustness at level `k` among states reproducing `obs`.
pub fn rmc_from_observations(
    obs: &[Observation],
    k: usize,
    dim: usize,
) -> Result<ObservationBound> {
    let p = observation_program(obs, k, dim)?;
    if obs.is_empty() {
        // incoherent states reproduce no data at all
        return Ok(ObservationBound {
            k,
            value: 0.0,
            gap: 0.0,
            feas_residual: 0.0,
            n_observations: 0,
        });
    }
    let sol = solve(&p, &SolveOptions::default())?;
    match sol.status {
        Status::Optimal => Ok(ObservationBound {
            k,
            value: sol.primal_value.max(0.0),
            gap: sol.gap,
            feas_residual: sol.feas_residual,
            n_observations: obs.len(),
        }),
        Status::Infeasible => Err(CoherenceError::InfeasibleData),
        Status::MaxIter => {
            // Exact data on a low-rank state leaves the feasible set without
            // interior and the iterates stall short of the gap tolerance. A
            // feasible dual point still bounds the minimum from below.
            let m = evaluate(&p, &sol.primal_blocks, &sol.dual_y);
            let rel_gap = m.gap / (1.0 + m.primal_value.abs());
            if m.dual_cone_residual <= 1e-9 && rel_gap <= STALL_GAP_TOL {
                Ok(ObservationBound {
                    k,
                    value: m.dual_value.max(0.0),
                    gap: m.gap,
                    feas_residual: sol.feas_residual,
                    n_observations: obs.len(),
                })
            } else {
                Err(CoherenceError::Solver {
                    status: sol.status,
                    context: "partial-data program".into(),
                })
            }
        }
        status => Err(CoherenceError::Solver {
            status,
            context: "partial-data program".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cr;
    use crate::states::{max_coherent, noisy_max_coherent, NoisyMcsParams};

    fn nmcs(d: usize, p: f64) -> DensityMatrix {
        noisy_max_coherent(NoisyMcsParams { dim: d, p }).unwrap()
    }

    #[test]
    fn analytic_examples() {
        assert_eq!(rmc_analytic_nmcs(4, 1, 1.0), 3.0);
        assert_eq!(rmc_analytic_nmcs(4, 3, 2.0 / 3.0), 0.0);
        for d in 2..6 {
            for k in 1..=d {
                assert_eq!(rmc_analytic_nmcs(d, k, 0.0), 0.0);
            }
        }
    }

    #[test]
    fn qubit_dual_example() {
        let r = rmc_dual(&nmcs(2, 1.0), 1).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
        let w = r.witness.unwrap();
        assert!((-w.expectation(&nmcs(2, 1.0)).unwrap() - r.value).abs() < 1e-6);
    }

    #[test]
    fn primal_and_dual_agree_on_family() {
        for p in [0.0, 0.45, 1.0] {
            let rho = nmcs(4, p);
            for k in 1..=4 {
                let a = rmc_analytic_nmcs(4, k, p);
                let du = rmc_dual(&rho, k).unwrap().value;
                let pr = rmc_primal(&rho, k).unwrap();
                assert!((du - a).abs() < 1e-6, "dual d=4 k={k} p={p}: {du} vs {a}");
                assert!(
                    (pr.value - a).abs() < 1e-6,
                    "primal d=4 k={k} p={p}: {} vs {a}",
                    pr.value
                );
                for (set, s) in pr.decomposition.unwrap() {
                    assert_eq!(s.dim(), set.len());
                }
            }
        }
    }

    #[test]
    fn diagonal_state_has_zero_robustness() {
        let rho = DensityMatrix::new(CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            cr(0.1),
            cr(0.2),
            cr(0.3),
            cr(0.4),
        ])))
        .unwrap();
        for k in 1..=4 {
            let r = rmc_dual(&rho, k).unwrap();
            assert!(r.value < 1e-7);
            assert!(r.witness.unwrap().expectation(&rho).unwrap() >= -1e-7);
        }
    }

    #[test]
    fn coherence_numbers() {
        assert_eq!(
            coherence_number(&DensityMatrix::maximally_mixed(4), MEMBERSHIP_TOL)
                .unwrap()
                .n_c,
            1
        );
        let r = coherence_number(&nmcs(4, 0.5), MEMBERSHIP_TOL).unwrap();
        assert_eq!(r.n_c, 3);
        assert!(r.analytic_agrees);
        let upper = DensityMatrix::new(CMatrix::from_fn(3, 3, |i, j| {
            cr(if i == j { 1.0 / 3.0 } else { 1.0 / 6.0 })
        }))
        .unwrap();
        let r = coherence_number(&upper, MEMBERSHIP_TOL).unwrap();
        assert_eq!(r.n_c, 2);
        assert!(r.analytic_agrees);
    }

    #[test]
    fn observation_examples() {
        let id = Observation::exact(HermitianMatrix::identity(4), 1.0).unwrap();
        let b = rmc_from_observations(&[id.clone()], 2, 4).unwrap();
        assert!(b.value < 1e-6);
        let proj = max_coherent(4).unwrap().density().hermitian().clone();
        let b =
            rmc_from_observations(&[Observation::exact(proj.clone(), 1.0).unwrap()], 2, 4).unwrap();
        assert!((b.value - 1.0).abs() < 1e-5, "{}", b.value);
        assert!(Observation::exact(proj.clone(), 1.2).is_err());
        // |psi+> forces <0|tau|0> = 1/4
        let mut zero = CMatrix::zeros(4, 4);
        zero[(0, 0)] = cr(1.0);
        let bad = Observation::exact(HermitianMatrix::new(zero).unwrap(), 0.9).unwrap();
        let r = rmc_from_observations(&[bad, Observation::exact(proj, 1.0).unwrap()], 2, 4);
        assert_eq!(r, Err(CoherenceError::InfeasibleData));
    }
}
