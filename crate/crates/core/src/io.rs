//! JSON formats for matrices, witnesses, measurements and observations,
//! plus the short state and task descriptions used on the command line.
//!
//! A matrix is `{"dim": d, "re": [[..]], "im": [[..]]}` with row-major
//! nested arrays; `im` may be omitted for real matrices.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoherenceError, Result};
use crate::linalg::{c, CMatrix, DensityMatrix, HermitianMatrix};
use crate::phase::{PhaseTask, Povm};
use crate::robustness::Observation;
use crate::states::{max_coherent, noisy_max_coherent, NoisyMcsParams, PureState};
use crate::witness::Witness;

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest dimension accepted from text input.
pub const MAX_DIM: usize = 64;

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoherenceError::Parse(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> MatrixJson {
        let d = m.nrows();
        let re = (0..d)
            .map(|i| (0..d).map(|j| m[(i, j)].re).collect())
            .collect();
        let im: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| m[(i, j)].im).collect())
            .collect();
        let im = im.iter().flatten().any(|&x| x != 0.0).then_some(im);
        MatrixJson {
            schema_version: Some(SCHEMA_VERSION),
            dim: d,
            re,
            im,
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let d = self.dim;
        if d == 0 || d > MAX_DIM {
            return parse_err(format!("dimension {d} outside [1, {MAX_DIM}]"));
        }
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if !shape_ok(&self.re) {
            return parse_err(format!("\"re\" must be a {d}x{d} array"));
        }
        if let Some(im) = &self.im {
            if !shape_ok(im) {
                return parse_err(format!("\"im\" must be a {d}x{d} array"));
            }
        }
        Ok(CMatrix::from_fn(d, d, |i, j| {
            c(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
        }))
    }
}

fn from_str<'a, T: Deserialize<'a>>(s: &'a str, what: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| CoherenceError::Parse(format!("{what}: {e}")))
}

pub fn parse_matrix(s: &str) -> Result<CMatrix> {
    from_str::<MatrixJson>(s, "matrix")?.to_matrix()
}

pub fn parse_hermitian(s: &str) -> Result<HermitianMatrix> {
    HermitianMatrix::new(parse_matrix(s)?)
}

pub fn parse_density(s: &str) -> Result<DensityMatrix> {
    DensityMatrix::new(parse_matrix(s)?)
}

pub fn matrix_to_json(m: &CMatrix) -> String {
    serde_json::to_string(&MatrixJson::from_matrix(m)).expect("matrix serialises")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub k: usize,
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
    /// Provenance written alongside by the command-line tool; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

/// Unvalidated witness candidate: the matrix and its claimed level.
pub fn parse_witness(s: &str) -> Result<(HermitianMatrix, usize)> {
    let w: WitnessJson = from_str(s, "witness")?;
    let m = MatrixJson {
        schema_version: None,
        dim: w.dim,
        re: w.re,
        im: w.im,
    }
    .to_matrix()?;
    if w.k == 0 || w.k > w.dim {
        return parse_err(format!("witness level k = {} outside [1, {}]", w.k, w.dim));
    }
    Ok((HermitianMatrix::new(m)?, w.k))
}

pub fn witness_document(w: &Witness) -> WitnessJson {
    let m = MatrixJson::from_matrix(w.matrix.matrix());
    WitnessJson {
        schema_version: Some(SCHEMA_VERSION),
        k: w.level_k,
        dim: m.dim,
        re: m.re,
        im: m.im,
        manifest: None,
    }
}

pub fn witness_to_json(w: &Witness) -> String {
    serde_json::to_string(&witness_document(w)).expect("witness serialises")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationJson {
    pub observable: MatrixJson,
    pub value: f64,
    #[serde(default)]
    pub err_lo: f64,
    #[serde(default)]
    pub err_hi: f64,
}

/// A JSON array of `{observable, value, err_lo, err_hi}`; missing errors are 0.
pub fn parse_observations(s: &str) -> Result<Vec<Observation>> {
    let list: Vec<ObservationJson> = from_str(s, "observations")?;
    list.into_iter()
        .enumerate()
        .map(|(i, o)| {
            let m = HermitianMatrix::new(o.observable.to_matrix()?)
                .map_err(|e| CoherenceError::Parse(format!("observation {i}: {e}")))?;
            Observation::new(m, o.value, o.err_lo, o.err_hi)
        })
        .collect()
}

pub fn observations_to_json(obs: &[Observation]) -> String {
    let list: Vec<ObservationJson> = obs
        .iter()
        .map(|o| ObservationJson {
            observable: MatrixJson {
                schema_version: None,
                ..MatrixJson::from_matrix(o.observable.matrix())
            },
            value: o.value,
            err_lo: o.err_lo,
            err_hi: o.err_hi,
        })
        .collect();
    serde_json::to_string(&list).expect("observations serialise")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub elements: Vec<MatrixJson>,
}

pub fn parse_povm(s: &str) -> Result<Povm> {
    let p: PovmJson = from_str(s, "measurement")?;
    let elems = p
        .elements
        .iter()
        .map(|m| HermitianMatrix::new(m.to_matrix()?))
        .collect::<Result<Vec<_>>>()?;
    Povm::new(elems)
}

pub fn povm_to_json(p: &Povm) -> String {
    let elements = p
        .elements()
        .iter()
        .map(|m| MatrixJson {
            schema_version: None,
            ..MatrixJson::from_matrix(m.matrix())
        })
        .collect();
    serde_json::to_string(&PovmJson {
        schema_version: Some(SCHEMA_VERSION),
        elements,
    })
    .expect("measurement serialises")
}

/// Parsed state description.
#[derive(Clone, Debug, PartialEq)]
pub enum StateSpec {
    /// `mcs:d=4`
    MaxCoherent { dim: usize },
    /// `nmcs:d=4,p=0.5`
    NoisyMaxCoherent { dim: usize, p: f64 },
    /// `mixed:d=4`
    MaximallyMixed { dim: usize },
    /// `basis:d=4,i=0` (0-based index)
    Basis { dim: usize, index: usize },
    /// Anything else: a matrix JSON file.
    File(PathBuf),
}

fn key_values<'a>(body: &'a str, allowed: &[&str]) -> Result<Vec<(&'a str, &'a str)>> {
    let mut out: Vec<(&str, &str)> = Vec::new();
    for part in body.split(',') {
        let Some((k, v)) = part.split_once('=') else {
            return parse_err(format!("expected key=value, got '{part}'"));
        };
        let (k, v) = (k.trim(), v.trim());
        if !allowed.contains(&k) {
            return parse_err(format!(
                "unknown key '{k}' (allowed: {})",
                allowed.join(", ")
            ));
        }
        if out.iter().any(|(seen, _)| *seen == k) {
            return parse_err(format!("key '{k}' given twice"));
        }
        out.push((k, v));
    }
    for &need in allowed {
        if !out.iter().any(|(k, _)| *k == need) {
            return parse_err(format!("missing key '{need}'"));
        }
    }
    Ok(out)
}

fn get<'a>(kv: &[(&str, &'a str)], key: &str) -> &'a str {
    kv.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .expect("presence checked")
}

fn parse_dim(v: &str) -> Result<usize> {
    match v.parse::<usize>() {
        Ok(d) if (1..=MAX_DIM).contains(&d) => Ok(d),
        Ok(d) => parse_err(format!("dimension {d} outside [1, {MAX_DIM}]")),
        Err(_) => parse_err(format!("invalid dimension '{v}'")),
    }
}

fn parse_real(v: &str, what: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => parse_err(format!("invalid {what} '{v}'")),
    }
}

pub fn parse_state_spec(s: &str) -> Result<StateSpec> {
    let s = s.trim();
    if s.is_empty() {
        return parse_err("empty state description");
    }
    let Some((head, body)) = s.split_once(':') else {
        return Ok(StateSpec::File(PathBuf::from(s)));
    };
    let spec = match head {
        "mcs" => StateSpec::MaxCoherent {
            dim: parse_dim(get(&key_values(body, &["d"])?, "d"))?,
        },
        "nmcs" => {
            let kv = key_values(body, &["d", "p"])?;
            let p = parse_real(get(&kv, "p"), "mixing parameter")?;
            if !(0.0..=1.0).contains(&p) {
                return parse_err(format!("mixing parameter {p} outside [0, 1]"));
            }
            StateSpec::NoisyMaxCoherent {
                dim: parse_dim(get(&kv, "d"))?,
                p,
            }
        }
        "mixed" => StateSpec::MaximallyMixed {
            dim: parse_dim(get(&key_values(body, &["d"])?, "d"))?,
        },
        "basis" => {
            let kv = key_values(body, &["d", "i"])?;
            let dim = parse_dim(get(&kv, "d"))?;
            let index = get(&kv, "i")
                .parse::<usize>()
                .map_err(|_| CoherenceError::Parse("invalid basis index".into()))?;
            if index >= dim {
                return parse_err(format!("basis index {index} outside [0, {dim})"));
            }
            StateSpec::Basis { dim, index }
        }
        // Windows drive letters and the like
        _ if head.len() == 1 || head.contains(['/', '.']) => StateSpec::File(PathBuf::from(s)),
        other => {
            return parse_err(format!(
                "unknown state family '{other}' (expected mcs, nmcs, mixed, basis)"
            ))
        }
    };
    Ok(spec)
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CoherenceError::Parse(format!("cannot read {}: {e}", path.display())))
}

pub fn build_state(spec: &StateSpec) -> Result<DensityMatrix> {
    match spec {
        StateSpec::MaxCoherent { dim } => Ok(max_coherent(*dim)?.density()),
        StateSpec::NoisyMaxCoherent { dim, p } => {
            noisy_max_coherent(NoisyMcsParams { dim: *dim, p: *p })
        }
        StateSpec::MaximallyMixed { dim } => Ok(DensityMatrix::maximally_mixed(*dim)),
        StateSpec::Basis { dim, index } => Ok(PureState::basis(*dim, *index)?.density()),
        StateSpec::File(path) => parse_density(&read_file(path)?),
    }
}

/// Parses a state description and builds the state, reading files as needed.
pub fn load_state(s: &str) -> Result<DensityMatrix> {
    build_state(&parse_state_spec(s)?)
}

/// `uniform:d=4`, `phases:d=4;0.5@0;0.5@3.14159` (prior@phase), or a JSON
/// file `{"dim": 4, "entries": [[prior, phase], ..]}`.
pub fn parse_task_spec(s: &str) -> Result<TaskSpec> {
    let s = s.trim();
    if let Some(body) = s.strip_prefix("uniform:") {
        return Ok(TaskSpec::Inline(PhaseTask::uniform(parse_dim(get(
            &key_values(body, &["d"])?,
            "d",
        ))?)?));
    }
    if let Some(body) = s.strip_prefix("phases:") {
        let mut parts = body.split(';');
        let head = parts.next().unwrap_or_default();
        let dim = parse_dim(get(&key_values(head, &["d"])?, "d"))?;
        let mut entries = Vec::new();
        for part in parts {
            let Some((p, phi)) = part.split_once('@') else {
                return parse_err(format!("expected prior@phase, got '{part}'"));
            };
            entries.push((
                parse_real(p.trim(), "prior")?,
                parse_real(phi.trim(), "phase")?,
            ));
        }
        return Ok(TaskSpec::Inline(PhaseTask::new(dim, entries)?));
    }
    if s.is_empty() {
        return parse_err("empty task description");
    }
    Ok(TaskSpec::File(PathBuf::from(s)))
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskSpec {
    Inline(PhaseTask),
    File(PathBuf),
}

pub fn parse_task_json(s: &str) -> Result<PhaseTask> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        #[serde(default)]
        #[allow(dead_code)]
        schema_version: Option<u32>,
        dim: usize,
        entries: Vec<(f64, f64)>,
    }
    let r: Raw = from_str(s, "task")?;
    if r.dim == 0 || r.dim > MAX_DIM {
        return parse_err(format!("dimension {} outside [1, {MAX_DIM}]", r.dim));
    }
    PhaseTask::new(r.dim, r.entries)
}

pub fn load_task(s: &str) -> Result<PhaseTask> {
    match parse_task_spec(s)? {
        TaskSpec::Inline(t) => Ok(t),
        TaskSpec::File(p) => parse_task_json(&read_file(&p)?),
    }
}
