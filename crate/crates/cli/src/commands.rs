use std::collections::BTreeMap;
use std::path::Path;

use coherence_core::criteria::{
    certify_c2_comparison, classify_qutrit, purity_ball_check, sufficient_ck_check,
};
use coherence_core::experiment::{reproduce_figure, Figure, FigureConfig, FigureRow};
use coherence_core::io::{
    load_state, load_task, parse_observations, parse_povm, parse_witness, witness_document,
};
use coherence_core::linalg::{eig_hermitian, lambda_max, DensityMatrix};
use coherence_core::phase::{
    apply_phase, imperfection_corrected_pmax, imperfection_factor, optimal_guess_probability,
    sdi_rmc_bound, success_probability, uniform_optimal_povm, PhaseTask,
};
use coherence_core::robustness::{coherence_number, rmc_dual, rmc_from_observations, rmc_primal};
use coherence_core::states::PureState;
use coherence_core::witness::{validate_witness, witness_eig_sanity, witness_from_pure, Witness};
use coherence_core::CoherenceError;
use coherence_sdp::SolveOptions;
use serde_json::{json, Value};

use crate::args::*;
use crate::output::*;

/// Tolerance attached to closed-form quantities (expectation values and
/// success probabilities), which are exact up to rounding.
const EXACT_TOL: f64 = 1e-12;
/// Growth of every error bar when the measured data are jointly infeasible.
const WIDENING: f64 = 1.5;

pub struct Context {
    pub seed: u64,
    pub quiet: bool,
    pub out: Option<std::path::PathBuf>,
}

impl Context {
    fn progress(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn finish(
        &self,
        command: &str,
        config: BTreeMap<String, Value>,
        result: Value,
    ) -> CliResult<()> {
        let m = RunManifest::new(command, config, self.seed);
        emit(self.out.as_deref(), &envelope(&m, result))
    }
}

fn config(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn json_of<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serialises")
}

pub fn run(cli: Cli) -> CliResult<()> {
    let seed = match cli.seed {
        Some(s) => s,
        None => match std::env::var("COHERENCE_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("COHERENCE_SEED='{v}' is not an integer")))?,
            Err(_) => 0,
        },
    };
    let ctx = Context {
        seed,
        quiet: cli.quiet,
        out: cli.out,
    };
    match cli.command {
        Command::Certify(a) => certify(&ctx, a),
        Command::Rmc(a) => rmc(&ctx, a),
        Command::RmcBound(a) => rmc_bound(&ctx, a),
        Command::Witness(w) => witness(&ctx, w),
        Command::PhaseDisc(a) => phase_disc(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Classify(a) => classify(&ctx, a),
    }
}

fn certify(ctx: &Context, a: CertifyArgs) -> CliResult<()> {
    let rho = load_state(&a.state)?;
    let result = match a.criterion {
        Criterion::Comparison => json_of(&certify_c2_comparison(&rho, a.tol)),
        Criterion::Purity => json_of(&purity_ball_check(&rho)),
        Criterion::Sufficient => json_of(&sufficient_ck_check(&rho, a.k, a.tol)?),
        Criterion::Qutrit => {
            json!({ "criterion": "qutrit", "n_C": classify_qutrit(&rho, a.tol)?, "tol": a.tol })
        }
    };
    let crit = format!("{:?}", a.criterion).to_lowercase();
    let cfg = config(&[
        ("state", json!(a.state)),
        ("criterion", json!(crit)),
        ("k", json!(a.k)),
        ("tol", json!(a.tol)),
    ]);
    ctx.finish("certify", cfg, result)
}

fn rmc(ctx: &Context, a: RmcArgs) -> CliResult<()> {
    let rho = load_state(&a.state)?;
    let r = match a.method {
        Method::Dual => rmc_dual(&rho, a.k)?,
        Method::Primal => rmc_primal(&rho, a.k)?,
    };
    if let Some(path) = &a.witness_out {
        let Some(w) = &r.witness else {
            return Err(CliError::usage("--witness-out needs the dual method"));
        };
        write_file(
            path,
            &serde_json::to_string_pretty(&witness_document(w)).expect("witness serialises"),
        )?;
    }
    let tol = SolveOptions::default().gap_tol;
    let method = format!("{:?}", a.method).to_lowercase();
    let result = json!({
        "k": r.k,
        "value": r.value,
        "tol": tol,
        "gap": r.gap,
        "feas_residual": r.feas_residual,
        "status": r.status,
        "method": method,
        "witness_valid": r.witness.is_some(),
    });
    let cfg = config(&[
        ("state", json!(a.state)),
        ("k", json!(a.k)),
        ("method", json!(method)),
    ]);
    ctx.finish("rmc", cfg, result)
}

fn rmc_bound(ctx: &Context, a: RmcBoundArgs) -> CliResult<()> {
    let mut obs = parse_observations(&read_file(&a.observations)?)?;
    let Some(first) = obs.first() else {
        return Err(CliError::usage("observation file is empty"));
    };
    let dim = first.observable.dim();
    let mut scale = 1.0;
    let b = match rmc_from_observations(&obs, a.k, dim) {
        Err(CoherenceError::InfeasibleData) => {
            ctx.progress(
                "data infeasible at the given error bars; retrying with bars widened by 1.5",
            );
            scale = WIDENING;
            for o in &mut obs {
                o.err_lo *= WIDENING;
                o.err_hi *= WIDENING;
            }
            rmc_from_observations(&obs, a.k, dim)?
        }
        other => other?,
    };
    let result = json!({
        "k": b.k,
        "value": b.value,
        "tol": SolveOptions::default().gap_tol,
        "gap": b.gap,
        "feas_residual": b.feas_residual,
        "n_observations": b.n_observations,
        "error_scale": scale,
    });
    let cfg = config(&[
        ("observations", json!(a.observations.display().to_string())),
        ("k", json!(a.k)),
    ]);
    ctx.finish("rmc-bound", cfg, result)
}

/// Amplitudes of a pure state given as a density matrix.
fn pure_amplitudes(rho: &DensityMatrix) -> CliResult<PureState> {
    if (rho.purity() - 1.0).abs() > 1e-9 {
        return Err(CliError::usage(format!(
            "state has purity {:.6}; a pure state is required",
            rho.purity()
        )));
    }
    let spec = eig_hermitian(rho.hermitian())?;
    let d = rho.dim();
    let mut v = spec.vectors.column(d - 1).into_owned();
    // fix the global phase by making the largest amplitude real
    let big = (0..d)
        .max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm()))
        .unwrap_or(0);
    let ph = v[big] / v[big].norm();
    for z in v.iter_mut() {
        *z /= ph;
    }
    Ok(PureState::normalized(v)?)
}

fn witness(ctx: &Context, cmd: WitnessCommand) -> CliResult<()> {
    match cmd {
        WitnessCommand::Build { state, k } => {
            let psi = pure_amplitudes(&load_state(&state)?)?;
            let w = witness_from_pure(&psi, k)?;
            let cfg = config(&[("state", json!(state)), ("k", json!(k))]);
            let mut doc = witness_document(&w);
            doc.manifest = Some(json_of(&RunManifest::new("witness build", cfg, ctx.seed)));
            let mut text = serde_json::to_string_pretty(&doc).expect("witness serialises");
            text.push('\n');
            emit(ctx.out.as_deref(), &text)
        }
        WitnessCommand::Validate { witness, k, tol } => {
            let (m, k_file) = parse_witness(&read_file(&witness)?)?;
            let k = k.unwrap_or(k_file);
            let valid = validate_witness(&m, k, tol)?;
            let normalized = lambda_max(&m) <= 1.0 + tol;
            let sanity = if valid {
                Some(witness_eig_sanity(&Witness::checked(m, k, tol)?, tol)?)
            } else {
                None
            };
            let result = json!({ "valid": valid, "k": k, "tol": tol, "normalized": normalized, "eig_sanity": sanity });
            let cfg = config(&[
                ("witness", json!(witness.display().to_string())),
                ("k", json!(k)),
                ("tol", json!(tol)),
            ]);
            ctx.finish("witness validate", cfg, result)
        }
        WitnessCommand::Expect { witness, state } => {
            let (m, k) = parse_witness(&read_file(&witness)?)?;
            let rho = load_state(&state)?;
            if rho.dim() != m.dim() {
                return Err(CliError::usage(format!(
                    "witness has dimension {}, state {}",
                    m.dim(),
                    rho.dim()
                )));
            }
            let value = m.expectation(rho.matrix());
            let normalized = lambda_max(&m) <= 1.0 + 1e-9;
            let result = json!({
                "k": k,
                "expectation": value,
                "tol": EXACT_TOL,
                "detects": value < -EXACT_TOL,
                "rmc_lower_bound": normalized.then(|| (-value).max(0.0)),
            });
            let cfg = config(&[
                ("witness", json!(witness.display().to_string())),
                ("state", json!(state)),
            ]);
            ctx.finish("witness expect", cfg, result)
        }
    }
}

fn phase_disc(ctx: &Context, a: PhaseDiscArgs) -> CliResult<()> {
    let rho = load_state(&a.state)?;
    let task = load_task(&a.task)?;
    let d = task.dim;
    if rho.dim() != d {
        return Err(CliError::usage(format!(
            "task has dimension {d}, state {}",
            rho.dim()
        )));
    }
    let povm = match &a.povm {
        Some(p) => parse_povm(&read_file(p)?)?,
        None if task == PhaseTask::uniform(d)? => uniform_optimal_povm(d)?,
        None => {
            return Err(CliError::usage(
                "--povm is required unless the task is uniform",
            ))
        }
    };
    let ps = success_probability(&rho, &task, &povm)?;
    let p_max = task.p_max();
    let mut bounds = Vec::new();
    for k in 1..d.max(2) {
        bounds.push(json!({ "k": k, "bound": sdi_rmc_bound(ps, p_max, k)?, "witnesses": ps / p_max > k as f64 + EXACT_TOL }));
    }
    let corrected = match a.process_fidelity {
        Some(f) => {
            let pc = imperfection_corrected_pmax(p_max, d, f)?;
            let per_k: Vec<Value> = (1..d.max(2))
                .map(|k| json!({ "k": k, "bound": (ps / (k as f64 * pc) - 1.0).max(0.0) }))
                .collect();
            json!({ "process_fidelity": f, "factor": imperfection_factor(d, f)?, "p_max": pc, "bounds": per_k })
        }
        None => Value::Null,
    };
    let optimal = if a.optimal {
        let ensemble: Vec<(f64, DensityMatrix)> = task
            .entries
            .iter()
            .map(|(p, phi)| (*p, apply_phase(&rho, *phi)))
            .collect();
        let g = optimal_guess_probability(&ensemble)?;
        json!({ "p_guess": g.value, "gap": g.gap })
    } else {
        Value::Null
    };
    let result = json!({
        "p_succ": ps,
        "p_max": p_max,
        "ratio": ps / p_max,
        "tol": EXACT_TOL,
        "bounds": bounds,
        "corrected": corrected,
        "optimal": optimal,
    });
    let cfg = config(&[
        ("state", json!(a.state)),
        ("task", json!(a.task)),
        (
            "povm",
            json!(a.povm.as_ref().map(|p| p.display().to_string())),
        ),
        ("process_fidelity", json!(a.process_fidelity)),
        ("optimal", json!(a.optimal)),
    ]);
    ctx.finish("phase-disc", cfg, result)
}

fn write_csv(rows: &[FigureRow], out: Option<&Path>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError {
            code: 3,
            kind: "io",
            message: e.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| CliError {
        code: 3,
        kind: "io",
        message: e.to_string(),
    })?;
    emit(out, &String::from_utf8(bytes).expect("csv is utf-8"))
}

fn simulate(ctx: &Context, a: SimulateArgs) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str::<FigureConfig>(&read_file(p)?)
            .map_err(|e| CoherenceError::Parse(format!("figure config: {e}")))?,
        None => FigureConfig::default(),
    };
    if let Some(s) = a.shots {
        cfg.shots = s;
    }
    if let Some(n) = a.mc_runs {
        cfg.mc_runs_tomography = n as usize;
        cfg.mc_runs_scalar = n as usize;
    }
    if let Some(g) = a.grid {
        cfg.p_grid = g;
    }
    if let Some(n) = a.observables {
        cfg.n_observables = n;
    }
    cfg.exact |= a.exact;
    let fig = match a.figure {
        FigureArg::Fig3 => Figure::Fig3,
        FigureArg::Fig4 => Figure::Fig4,
        FigureArg::Fig5 => Figure::Fig5,
        FigureArg::Fig6 => Figure::Fig6,
    };
    let name = json_of(&fig).as_str().unwrap_or_default().to_string();
    ctx.progress(&format!("reproducing {name} with seed {}", ctx.seed));
    let rows = reproduce_figure(fig, &cfg, ctx.seed)?;
    write_csv(&rows, ctx.out.as_deref())?;
    if let Some(out) = &ctx.out {
        let mut config = match json_of(&cfg) {
            Value::Object(m) => m.into_iter().collect::<BTreeMap<_, _>>(),
            _ => BTreeMap::new(),
        };
        config.insert("figure".into(), json!(name));
        let m = RunManifest::new("simulate", config, ctx.seed);
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serialises");
        text.push('\n');
        write_file(&manifest_path(out), &text)?;
        ctx.progress(&format!("wrote {} rows to {}", rows.len(), out.display()));
    }
    Ok(())
}

fn classify(ctx: &Context, a: ClassifyArgs) -> CliResult<()> {
    let rho = load_state(&a.state)?;
    let n = coherence_number(&rho, a.tol)?;
    let result =
        json!({ "n_C": n.n_c, "rmc": n.rmc, "analytic_agrees": n.analytic_agrees, "tol": a.tol });
    let cfg = config(&[("state", json!(a.state)), ("tol", json!(a.tol))]);
    ctx.finish("classify", cfg, result)
}
