//! Simulated photonic pipeline: noisy preparation, shot-limited counts,
//! maximum-likelihood tomography, Monte-Carlo resampling and the figure
//! tables built from them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoherenceError, Result};
use crate::linalg::{
    c, cr, eig_hermitian, fidelity, unitary_exp, CMatrix, DensityMatrix, HermitianMatrix,
};
use crate::phase::{
    apply_phase, imperfection_corrected_pmax, sdi_rmc_bound, uniform_optimal_povm, PhaseTask, Povm,
};
use crate::random::{ic_settings, random_hermitian, random_projector};
use crate::robustness::{rmc_analytic_nmcs, rmc_dual, rmc_from_observations, Observation};
use crate::states::{max_coherent, noisy_max_coherent, NoisyMcsParams};

/// Allowed mismatch between requested and realised preparation figures.
pub const PREP_TOL: f64 = 0.002;

/// Generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Depolarises `target` to the requested purity, then rotates it by
/// `exp(-i eps G)` (seeded random `G`) until the root fidelity matches.
pub fn prepare_noisy(
    target: &DensityMatrix,
    prep_fidelity: f64,
    purity: f64,
    seed: u64,
) -> Result<DensityMatrix> {
    if !(prep_fidelity > 0.0 && prep_fidelity <= 1.0) || !(purity > 0.0 && purity <= 1.0) {
        return invalid("fidelity and purity must lie in (0, 1]");
    }
    let d = target.dim();
    let inv_d = 1.0 / d as f64;
    let p_t = target.purity();
    if purity < inv_d - 1e-12 {
        return invalid(format!("purity {purity} below the minimum 1/{d}"));
    }
    if purity > p_t + PREP_TOL {
        return invalid(format!(
            "purity {purity} exceeds the target purity {p_t:.6}"
        ));
    }
    let mut rho = target.clone();
    if (p_t - purity).abs() > 1e-12 && p_t - inv_d > 1e-15 {
        let keep = ((purity - inv_d).max(0.0) / (p_t - inv_d)).sqrt().min(1.0);
        let m = target.matrix().scale(keep) + CMatrix::identity(d, d).scale((1.0 - keep) * inv_d);
        rho = DensityMatrix::from_computed(&m)?;
    }
    let f0 = fidelity(&rho, target)?;
    if prep_fidelity > f0 + PREP_TOL {
        return Err(CoherenceError::Validation(format!(
            "fidelity {prep_fidelity} unreachable at purity {purity} (at most {f0:.6})"
        )));
    }
    if prep_fidelity >= f0 {
        return Ok(rho);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_hermitian(d, &mut rng);
    let g = g.matrix().unscale(g.matrix().norm().max(f64::MIN_POSITIVE));
    let rotate = |eps: f64| -> Result<DensityMatrix> { rho.conjugate(&unitary_exp(&g, eps)?) };
    let f_at = |eps: f64| -> Result<f64> { fidelity(&rotate(eps)?, target) };
    let mut hi = 1e-3;
    while f_at(hi)? > prep_fidelity {
        hi *= 2.0;
        if hi > std::f64::consts::PI {
            return Err(CoherenceError::Validation(format!(
                "fidelity {prep_fidelity} unreachable by a small rotation"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f_at(mid)? > prep_fidelity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    rotate(0.5 * (lo + hi))
}

/// Random relative phase `N(0, sigma)` between the lower and upper halves of
/// the basis, applied once per call.
pub fn block_phase_jitter(rho: &DensityMatrix, sigma: f64, seed: u64) -> Result<DensityMatrix> {
    if !(sigma >= 0.0) {
        return invalid("jitter width must be nonnegative");
    }
    let d = rho.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: f64 = StandardNormal.sample(&mut rng);
    let theta = theta * sigma;
    let u = CMatrix::from_fn(d, d, |i, j| {
        if i != j {
            cr(0.0)
        } else if i < d / 2 {
            cr(1.0)
        } else {
            c(theta.cos(), theta.sin())
        }
    });
    rho.conjugate(&u)
}

/// Counts collected for one measurement setting.
#[derive(Clone, Debug, PartialEq)]
pub struct CountRecord {
    pub setting_id: usize,
    pub povm: Povm,
    pub counts: Vec<u64>,
    pub shots: u64,
}

impl CountRecord {
    pub fn new(setting_id: usize, povm: Povm, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != povm.len() {
            return invalid(format!(
                "{} counts for a {}-outcome measurement",
                counts.len(),
                povm.len()
            ));
        }
        let shots = counts.iter().sum();
        Ok(CountRecord {
            setting_id,
            povm,
            counts,
            shots,
        })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.shots.max(1) as f64;
        self.counts.iter().map(|&x| x as f64 / n).collect()
    }
}

fn outcome_distribution(rho: &DensityMatrix, povm: &Povm) -> Result<Vec<f64>> {
    if rho.dim() != povm.dim() {
        return invalid(format!(
            "state dimension {} does not match measurement dimension {}",
            rho.dim(),
            povm.dim()
        ));
    }
    let mut p: Vec<f64> = povm
        .probabilities(rho)
        .into_iter()
        .map(|x| x.max(0.0))
        .collect();
    let s: f64 = p.iter().sum();
    if !(s > 0.0) {
        return Err(CoherenceError::Numerical(
            "measurement has zero total probability".into(),
        ));
    }
    p.iter_mut().for_each(|x| *x /= s);
    Ok(p)
}

/// Multinomial draw by successive conditional binomials.
fn multinomial(shots: u64, probs: &[f64], rng: &mut impl Rng) -> Vec<u64> {
    let mut left = shots;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(left);
            break;
        }
        let q = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let n = if left == 0 || q == 0.0 {
            0
        } else if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        out.push(n);
        left -= n;
        mass -= p;
    }
    out
}

/// Shot-limited counts of `povm` on `rho`.
pub fn simulate_counts(
    rho: &DensityMatrix,
    povm: &Povm,
    shots: u64,
    seed: u64,
) -> Result<CountRecord> {
    let probs = outcome_distribution(rho, povm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(CountRecord {
        setting_id: 0,
        povm: povm.clone(),
        counts: multinomial(shots, &probs, &mut rng),
        shots,
    })
}

/// Counts equal to `shots` times the exact probabilities, rounded.
pub fn exact_counts(rho: &DensityMatrix, povm: &Povm, shots: u64) -> Result<CountRecord> {
    let probs = outcome_distribution(rho, povm)?;
    let counts = probs
        .iter()
        .map(|p| (p * shots as f64).round() as u64)
        .collect();
    CountRecord::new(0, povm.clone(), counts)
}

/// Records for every setting in `settings`, seeded per setting.
pub fn simulate_settings(
    rho: &DensityMatrix,
    settings: &[Povm],
    shots: u64,
    seed: u64,
) -> Result<Vec<CountRecord>> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    settings
        .iter()
        .enumerate()
        .map(|(i, povm)| {
            let mut r = simulate_counts(rho, povm, shots, master.next_u64())?;
            r.setting_id = i;
            Ok(r)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyResult {
    pub state: DensityMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub informationally_complete: bool,
    pub warning: Option<String>,
}

/// Real coordinates of Hermitian `d x d` matrices with `Tr(B_a B_b) = delta_ab`.
fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut m = CMatrix::zeros(d, d);
        m[(i, i)] = cr(1.0);
        out.push(m);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut m = CMatrix::zeros(d, d);
            m[(i, j)] = cr(r);
            m[(j, i)] = cr(r);
            out.push(m);
            let mut m = CMatrix::zeros(d, d);
            m[(i, j)] = c(0.0, -r);
            m[(j, i)] = c(0.0, r);
            out.push(m);
        }
    }
    out
}

/// Least-squares fit of the frequencies, projected onto the state space.
fn linear_inversion(records: &[CountRecord], d: usize) -> Result<(DensityMatrix, usize)> {
    let basis = hermitian_basis(d);
    let rows: usize = records.iter().map(|r| r.counts.len()).sum();
    let mut a = DMatrix::<f64>::zeros(rows + 1, d * d);
    let mut b = DVector::<f64>::zeros(rows + 1);
    let mut row = 0;
    for rec in records {
        let f = rec.frequencies();
        for (m, fm) in rec.povm.elements().iter().zip(f) {
            for (col, bm) in basis.iter().enumerate() {
                a[(row, col)] = (m.matrix() * bm).trace().re;
            }
            b[row] = fm;
            row += 1;
        }
    }
    for i in 0..d {
        a[(rows, i)] = 1.0;
    }
    b[rows] = 1.0;
    let svd = a.rows(0, rows).into_owned().svd(false, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax.max(1.0))
        .count();
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| CoherenceError::Numerical(e.to_string()))?;
    let mut m = CMatrix::zeros(d, d);
    for (xa, ba) in x.iter().zip(&basis) {
        m += ba.scale(*xa);
    }
    let spec = eig_hermitian(&HermitianMatrix::from_computed(&m))?;
    let clipped = spec.map(|v| cr(v.max(0.0)));
    let state = if clipped.trace().re > 1e-12 {
        DensityMatrix::from_computed(&clipped)?
    } else {
        DensityMatrix::maximally_mixed(d)
    };
    Ok((state, rank))
}

fn log_likelihood(records: &[CountRecord], rho: &CMatrix) -> f64 {
    let mut l = 0.0;
    for rec in records {
        for (m, &n) in rec.povm.elements().iter().zip(&rec.counts) {
            if n == 0 {
                continue;
            }
            let p = m.expectation(rho);
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            l += n as f64 * p.ln();
        }
    }
    l
}

/// Maximum-likelihood state by diluted `R rho R` iteration from the
/// projected least-squares estimate.
pub fn ml_tomography(
    records: &[CountRecord],
    dim: usize,
    max_iter: usize,
    tol: f64,
) -> Result<TomographyResult> {
    if records.is_empty() {
        return invalid("tomography needs at least one record");
    }
    if let Some(r) = records.iter().find(|r| r.povm.dim() != dim) {
        return invalid(format!(
            "setting {} has dimension {}, expected {dim}",
            r.setting_id,
            r.povm.dim()
        ));
    }
    let total: f64 = records.iter().map(|r| r.shots as f64).sum();
    if !(total > 0.0) {
        return invalid("records contain no counts");
    }
    let (mut rho, rank) = linear_inversion(records, dim)?;
    let informationally_complete = rank == dim * dim;
    let mut ll = log_likelihood(records, rho.matrix());
    if !ll.is_finite() {
        let m =
            rho.matrix().scale(1.0 - 1e-3) + CMatrix::identity(dim, dim).scale(1e-3 / dim as f64);
        rho = DensityMatrix::from_computed(&m)?;
        ll = log_likelihood(records, rho.matrix());
    }
    let id = CMatrix::identity(dim, dim);
    let mut eps: f64 = 1e6;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut r = CMatrix::zeros(dim, dim);
        for rec in records {
            for (m, &n) in rec.povm.elements().iter().zip(&rec.counts) {
                if n > 0 {
                    let p = m.expectation(rho.matrix()).max(f64::MIN_POSITIVE);
                    r += m.matrix().scale(n as f64 / (total * p));
                }
            }
        }
        let mut improved = None;
        while eps > 1e-12 {
            let s = (&id + r.scale(eps)).unscale(1.0 + eps);
            let cand = &s * rho.matrix() * s.adjoint();
            let cand = DensityMatrix::from_computed(&cand)?;
            let l = log_likelihood(records, cand.matrix());
            if l >= ll {
                improved = Some((cand, l));
                break;
            }
            eps *= 0.5;
        }
        let Some((cand, l)) = improved else { break };
        let gain = (l - ll) / total;
        rho = cand;
        ll = l;
        eps = (eps * 2.0).min(1e6);
        if gain < tol {
            break;
        }
    }
    let warning = (!informationally_complete).then(|| {
        format!(
            "settings span {rank} of {} state parameters; estimate is not unique",
            dim * dim
        )
    });
    Ok(TomographyResult {
        state: rho,
        log_likelihood: ll,
        iterations,
        informationally_complete,
        warning,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    /// Estimate on the observed data.
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub sigma_level: f64,
    /// Mean and standard deviation over the resampled runs.
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub intervals: Vec<ConfidenceInterval>,
    pub n_runs: usize,
    pub failures: usize,
}

/// Redraws every record from its empirical distribution.
pub fn resample_records(records: &[CountRecord], rng: &mut impl Rng) -> Vec<CountRecord> {
    records
        .iter()
        .map(|r| {
            let f = r.frequencies();
            CountRecord {
                counts: multinomial(r.shots, &f, rng),
                ..r.clone()
            }
        })
        .collect()
}

/// Monte-Carlo confidence intervals for a vector-valued estimator.
///
/// Run `i` draws from stream `i` of `seed`, so the result does not depend
/// on how runs are spread over threads.
pub fn mc_resample<F>(
    records: &[CountRecord],
    estimator: F,
    n_runs: usize,
    sigma_level: f64,
    seed: u64,
) -> Result<McSummary>
where
    F: Fn(&[CountRecord]) -> Result<Vec<f64>> + Sync,
{
    if n_runs < 2 {
        return invalid("Monte-Carlo resampling needs at least 2 runs");
    }
    if !(sigma_level > 0.0) {
        return invalid("sigma level must be positive");
    }
    let point = estimator(records)?;
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(n_runs);
    let mut runs: Vec<Option<Result<Vec<f64>>>> = vec![None; n_runs];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let estimator = &estimator;
                scope.spawn(move || {
                    (t..n_runs)
                        .step_by(threads)
                        .map(|i| {
                            let mut rng = stream_rng(seed, i as u64);
                            (i, estimator(&resample_records(records, &mut rng)))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("resampling thread panicked") {
                runs[i] = Some(r);
            }
        }
    });
    let mut ok: Vec<Vec<f64>> = Vec::with_capacity(n_runs);
    let mut failures = 0;
    for r in runs.into_iter().flatten() {
        match r {
            Ok(v) if v.len() == point.len() && v.iter().all(|x| x.is_finite()) => ok.push(v),
            _ => failures += 1,
        }
    }
    if failures * 100 > n_runs {
        return Err(CoherenceError::Numerical(format!(
            "estimator failed in {failures} of {n_runs} runs"
        )));
    }
    let n = ok.len() as f64;
    let intervals = point
        .iter()
        .enumerate()
        .map(|(j, &pt)| {
            let mean = ok.iter().map(|v| v[j]).sum::<f64>() / n;
            let var = ok.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let std = var.sqrt();
            ConfidenceInterval {
                point: pt,
                lo: pt - sigma_level * std,
                hi: pt + sigma_level * std,
                sigma_level,
                mean,
                std,
            }
        })
        .collect();
    Ok(McSummary {
        intervals,
        n_runs,
        failures,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl std::str::FromStr for Figure {
    type Err = CoherenceError;
    fn from_str(s: &str) -> Result<Figure> {
        match s {
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            other => Err(CoherenceError::Parse(format!(
                "unknown figure '{other}' (expected fig3..fig6)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FigureConfig {
    pub dim: usize,
    pub p_grid: Vec<f64>,
    /// Shots per measurement setting (or per phase).
    pub shots: u64,
    /// Resampling runs for tomographic estimates.
    pub mc_runs_tomography: usize,
    /// Resampling runs for scalar estimates.
    pub mc_runs_scalar: usize,
    pub sigma_level: f64,
    /// Preparation noise as `(root fidelity, purity)`; none by default.
    pub prep_noise: Option<(f64, f64)>,
    pub phase_jitter: f64,
    pub n_observables: usize,
    /// Mixing parameter of the noisy series in the observable-count figure.
    pub noisy_p: f64,
    /// Use exact expectation values instead of simulated counts.
    pub exact: bool,
    pub process_fidelity: f64,
    pub tomography_max_iter: usize,
    pub tomography_tol: f64,
}

impl Default for FigureConfig {
    fn default() -> Self {
        FigureConfig {
            dim: 4,
            p_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            shots: 100_000,
            mc_runs_tomography: 10_000,
            mc_runs_scalar: 100_000,
            sigma_level: 5.0,
            prep_noise: None,
            phase_jitter: 0.0,
            n_observables: 30,
            noisy_p: 0.8874,
            exact: false,
            process_fidelity: 0.9956,
            tomography_max_iter: 2000,
            tomography_tol: 1e-10,
        }
    }
}

impl FigureConfig {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return invalid("figure dimension must be at least 2");
        }
        if self.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("grid values must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.noisy_p) {
            return invalid("noisy_p must lie in [0, 1]");
        }
        if !(self.sigma_level > 0.0) {
            return invalid("sigma_level must be positive");
        }
        if self.mc_runs_tomography < 2 || self.mc_runs_scalar < 2 {
            return invalid("Monte-Carlo runs must be at least 2");
        }
        if !(self.process_fidelity > 0.0 && self.process_fidelity <= 1.0) {
            return invalid("process fidelity must lie in (0, 1]");
        }
        Ok(())
    }
}

/// One CSV record of a figure table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub series: String,
    /// `p`, or the number of observables.
    pub x: f64,
    pub k: usize,
    pub theory: f64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl FigureRow {
    fn exact(series: &str, x: f64, k: usize, theory: f64, estimate: f64) -> FigureRow {
        FigureRow {
            series: series.into(),
            x,
            k,
            theory,
            estimate,
            ci_lo: estimate,
            ci_hi: estimate,
        }
    }

    fn with_ci(series: &str, x: f64, k: usize, theory: f64, ci: &ConfidenceInterval) -> FigureRow {
        FigureRow {
            series: series.into(),
            x,
            k,
            theory,
            estimate: ci.point,
            ci_lo: ci.lo,
            ci_hi: ci.hi,
        }
    }
}

pub fn reproduce_figure(which: Figure, config: &FigureConfig, seed: u64) -> Result<Vec<FigureRow>> {
    config.validate()?;
    match which {
        Figure::Fig3 => fig3(config),
        Figure::Fig4 => fig4(config, seed),
        Figure::Fig5 => fig5(config, seed),
        Figure::Fig6 => fig6(config, seed),
    }
}

/// Smallest k with `p <= (k-1)/(d-1)`.
pub fn nmcs_coherence_number(d: usize, p: f64) -> usize {
    (1..=d)
        .find(|&k| p * (d - 1) as f64 <= (k - 1) as f64 + 1e-12)
        .unwrap_or(d)
}

fn fig3(cfg: &FigureConfig) -> Result<Vec<FigureRow>> {
    let d = cfg.dim;
    let mut rows = Vec::new();
    for &p in &cfg.p_grid {
        let rho = noisy_max_coherent(NoisyMcsParams { dim: d, p })?;
        let n = crate::robustness::coherence_number(&rho, crate::robustness::MEMBERSHIP_TOL)?;
        let theory = nmcs_coherence_number(d, p);
        rows.push(FigureRow::exact(
            "coherence_number",
            p,
            n.n_c,
            theory as f64,
            n.n_c as f64,
        ));
        for k in 1..d {
            rows.push(FigureRow::exact(
                "rmc",
                p,
                k,
                rmc_analytic_nmcs(d, k, p),
                rmc_dual(&rho, k)?.value,
            ));
        }
    }
    Ok(rows)
}

fn prepared(cfg: &FigureConfig, p: f64, seed: u64) -> Result<DensityMatrix> {
    let mut rho = noisy_max_coherent(NoisyMcsParams { dim: cfg.dim, p })?;
    if let Some((f, pur)) = cfg.prep_noise {
        // the noise is relative to the ideal state, so rescale target purity
        let pur = pur.min(rho.purity());
        rho = prepare_noisy(&rho, f, pur, seed)?;
    }
    if cfg.phase_jitter > 0.0 {
        rho = block_phase_jitter(&rho, cfg.phase_jitter, seed ^ 0x5eed)?;
    }
    Ok(rho)
}

fn two_outcome(proj: &HermitianMatrix) -> Result<Povm> {
    let d = proj.dim();
    let rest = HermitianMatrix::from_computed(&(CMatrix::identity(d, d) - proj.matrix()));
    Povm::new(vec![proj.clone(), rest])
}

fn fig4(cfg: &FigureConfig, seed: u64) -> Result<Vec<FigureRow>> {
    let d = cfg.dim;
    let settings = ic_settings(d);
    let psi = max_coherent(d)?.density();
    let witness_povm = two_outcome(psi.hermitian())?;
    let mut rows = Vec::new();
    for (i, &p) in cfg.p_grid.iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        let rho = prepared(cfg, p, rng.next_u64())?;
        let records = simulate_settings(&rho, &settings, cfg.shots, rng.next_u64())?;
        let (max_iter, tol) = (cfg.tomography_max_iter, cfg.tomography_tol);
        let tomo = mc_resample(
            &records,
            |recs| {
                let t = ml_tomography(recs, d, max_iter, tol)?;
                (1..d).map(|k| Ok(rmc_dual(&t.state, k)?.value)).collect()
            },
            cfg.mc_runs_tomography,
            cfg.sigma_level,
            rng.next_u64(),
        )?;
        let wrec = vec![simulate_counts(
            &rho,
            &witness_povm,
            cfg.shots,
            rng.next_u64(),
        )?];
        let wit = mc_resample(
            &wrec,
            |recs| {
                let f = recs[0].frequencies()[0];
                Ok((1..d).map(|k| d as f64 / k as f64 * f - 1.0).collect())
            },
            cfg.mc_runs_scalar,
            cfg.sigma_level,
            rng.next_u64(),
        )?;
        for k in 1..d {
            rows.push(FigureRow::with_ci(
                "tomography",
                p,
                k,
                rmc_analytic_nmcs(d, k, p),
                &tomo.intervals[k - 1],
            ));
            let theory = (p * (d - 1) as f64 - (k - 1) as f64) / k as f64;
            rows.push(FigureRow::with_ci(
                "witness",
                p,
                k,
                theory,
                &wit.intervals[k - 1],
            ));
        }
    }
    Ok(rows)
}

/// Observation of `Tr(P rho)` from `shots` two-outcome counts with a
/// `sigma_level` binomial error bar.
pub fn observation_from_counts(
    proj: &HermitianMatrix,
    rec: &CountRecord,
    sigma_level: f64,
) -> Result<Observation> {
    let n = rec.shots.max(1) as f64;
    let f = rec.frequencies()[0];
    // a one-count floor keeps the bar open when f is 0 or 1
    let sd = (f * (1.0 - f)).max(1.0 / n).sqrt() / n.sqrt();
    Observation::new(proj.clone(), f, sigma_level * sd, sigma_level * sd)
}

/// Solves the partial-data program, widening every error bar by 1.5 when
/// the data are jointly infeasible (at most `retries` times).
pub fn bound_with_widening(
    obs: &[Observation],
    k: usize,
    d: usize,
    retries: usize,
) -> Result<(f64, usize)> {
    let mut cur = obs.to_vec();
    for attempt in 0..=retries {
        match rmc_from_observations(&cur, k, d) {
            Ok(b) => return Ok((b.value, attempt)),
            Err(CoherenceError::InfeasibleData) if attempt < retries => {
                for o in &mut cur {
                    o.err_lo *= 1.5;
                    o.err_hi *= 1.5;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(CoherenceError::InfeasibleData)
}

fn fig5(cfg: &FigureConfig, seed: u64) -> Result<Vec<FigureRow>> {
    let d = cfg.dim;
    let mut orng = stream_rng(seed, 0);
    let projectors: Vec<HermitianMatrix> = (0..cfg.n_observables)
        .map(|_| random_projector(d, &mut orng))
        .collect();
    let mut rows = Vec::new();
    for (si, (series, p)) in [("pure", 1.0), ("noisy", cfg.noisy_p)]
        .into_iter()
        .enumerate()
    {
        let mut rng = stream_rng(seed, 1 + si as u64);
        let rho = prepared(cfg, p, rng.next_u64())?;
        let mut obs = Vec::with_capacity(projectors.len());
        for proj in &projectors {
            obs.push(if cfg.exact {
                Observation::exact(proj.clone(), proj.expectation(rho.matrix()))?
            } else {
                let rec = simulate_counts(&rho, &two_outcome(proj)?, cfg.shots, rng.next_u64())?;
                observation_from_counts(proj, &rec, cfg.sigma_level)?
            });
        }
        for n in 0..=obs.len() {
            for k in 1..d {
                let (v, _) = bound_with_widening(&obs[..n], k, d, 3)?;
                rows.push(FigureRow::exact(
                    series,
                    n as f64,
                    k,
                    rmc_analytic_nmcs(d, k, p),
                    v,
                ));
            }
        }
    }
    Ok(rows)
}

fn fig6(cfg: &FigureConfig, seed: u64) -> Result<Vec<FigureRow>> {
    let d = cfg.dim;
    let task = PhaseTask::uniform(d)?;
    let povm = uniform_optimal_povm(d)?;
    let p_max = task.p_max();
    let p_corr = imperfection_corrected_pmax(p_max, d, cfg.process_fidelity)?;
    let mut rows = Vec::new();
    for (i, &p) in cfg.p_grid.iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        let rho = prepared(cfg, p, rng.next_u64())?;
        let mut records = Vec::with_capacity(task.len());
        for (m, (_, phi)) in task.entries.iter().enumerate() {
            let mut r =
                simulate_counts(&apply_phase(&rho, *phi), &povm, cfg.shots, rng.next_u64())?;
            r.setting_id = m;
            records.push(r);
        }
        let priors: Vec<f64> = task.entries.iter().map(|e| e.0).collect();
        let mc = mc_resample(
            &records,
            |recs| {
                let ps: f64 = recs
                    .iter()
                    .zip(&priors)
                    .map(|(r, pm)| pm * r.frequencies()[r.setting_id])
                    .sum();
                let mut out = Vec::with_capacity(2 * (d - 1));
                for k in 1..d {
                    out.push(sdi_rmc_bound(ps, p_max, k)?);
                    out.push((ps / (k as f64 * p_corr) - 1.0).max(0.0));
                }
                Ok(out)
            },
            cfg.mc_runs_scalar,
            cfg.sigma_level,
            rng.next_u64(),
        )?;
        for k in 1..d {
            let theory = rmc_analytic_nmcs(d, k, p);
            rows.push(FigureRow::with_ci(
                "sdi",
                p,
                k,
                theory,
                &mc.intervals[2 * (k - 1)],
            ));
            rows.push(FigureRow::with_ci(
                "sdi_corrected",
                p,
                k,
                theory,
                &mc.intervals[2 * (k - 1) + 1],
            ));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_distance;

    fn nmcs(p: f64) -> DensityMatrix {
        noisy_max_coherent(NoisyMcsParams { dim: 4, p }).unwrap()
    }

    fn computational(d: usize) -> Povm {
        Povm::new(
            (0..d)
                .map(|i| {
                    let mut m = CMatrix::zeros(d, d);
                    m[(i, i)] = cr(1.0);
                    HermitianMatrix::new(m).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn preparation_examples() {
        let t = nmcs(1.0);
        assert_eq!(prepare_noisy(&t, 1.0, 1.0, 3).unwrap(), t);
        let a = prepare_noisy(&t, 0.997, 0.995, 7).unwrap();
        let f = fidelity(&a, &t).unwrap();
        assert!((0.995..=0.999).contains(&f), "fidelity {f}");
        assert!((a.purity() - 0.995).abs() < PREP_TOL);
        assert_eq!(a, prepare_noisy(&t, 0.997, 0.995, 7).unwrap());
        assert!(prepare_noisy(&t, 1.0, 0.5, 1).is_err());
        assert!(prepare_noisy(&nmcs(0.5), 0.99, 0.9, 1).is_err());
    }

    #[test]
    fn sampling_examples() {
        let p2 = computational(2);
        let zero = DensityMatrix::new(CMatrix::from_fn(2, 2, |i, j| {
            cr(if i == 0 && j == 0 { 1.0 } else { 0.0 })
        }))
        .unwrap();
        assert_eq!(
            simulate_counts(&zero, &p2, 0, 1).unwrap().counts,
            vec![0, 0]
        );
        assert_eq!(
            simulate_counts(&zero, &p2, 1000, 1).unwrap().counts,
            vec![1000, 0]
        );
        let r = simulate_counts(&DensityMatrix::maximally_mixed(2), &p2, 100_000, 5).unwrap();
        assert_eq!(r.counts.iter().sum::<u64>(), 100_000);
        assert!((r.counts[0] as f64 - 50_000.0).abs() < 5.0 * 158.2);
        assert_eq!(
            r,
            simulate_counts(&DensityMatrix::maximally_mixed(2), &p2, 100_000, 5).unwrap()
        );
    }

    #[test]
    fn tomography_recovers_exact_data() {
        for p in [0.3, 0.887, 1.0] {
            let rho = nmcs(p);
            let recs: Vec<_> = ic_settings(4)
                .iter()
                .map(|s| exact_counts(&rho, s, 1_000_000_000_000_000).unwrap())
                .collect();
            let t = ml_tomography(&recs, 4, 2000, 1e-12).unwrap();
            assert!(t.informationally_complete);
            assert!(trace_distance(&t.state, &rho).unwrap() < 1e-6);
        }
    }

    #[test]
    fn tomography_flags_incomplete_data() {
        let r = vec![simulate_counts(&nmcs(0.5), &computational(4), 1000, 2).unwrap()];
        let t = ml_tomography(&r, 4, 100, 1e-10).unwrap();
        assert!(!t.informationally_complete && t.warning.is_some());
    }

    #[test]
    fn constant_estimator_has_zero_width() {
        let r = vec![simulate_counts(&nmcs(0.5), &computational(4), 1000, 2).unwrap()];
        let s = mc_resample(&r, |_| Ok(vec![0.25]), 50, 5.0, 9).unwrap();
        let ci = s.intervals[0];
        assert_eq!((ci.lo, ci.point, ci.hi), (0.25, 0.25, 0.25));
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let flaky = |n: usize| {
            calls.store(0, std::sync::atomic::Ordering::SeqCst);
            mc_resample(
                &r,
                |_: &[CountRecord]| {
                    let i = calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if (1..=n).contains(&i) {
                        Err(CoherenceError::Numerical("flaky".into()))
                    } else {
                        Ok(vec![1.0])
                    }
                },
                200,
                5.0,
                1,
            )
        };
        assert_eq!(flaky(1).unwrap().failures, 1);
        assert!(flaky(5).is_err());
    }

    #[test]
    fn coherence_number_thresholds() {
        assert_eq!(nmcs_coherence_number(4, 0.0), 1);
        assert_eq!(nmcs_coherence_number(4, 1.0 / 3.0), 2);
        assert_eq!(nmcs_coherence_number(4, 0.34), 3);
        assert_eq!(nmcs_coherence_number(4, 1.0), 4);
    }
}
