//! File formats: JSON model documents, value surfaces as CSV plus a JSON mirror, Monte
//! Carlo reports and per-path dumps.
//!
//! Floats are written in their shortest round-trip form, so equal inputs give
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hjb::{InvariantReport, OperatorKind, ValueSurface};
use crate::jumps::{Atom, DensitySpec};
use crate::linalg::Matrix;
use crate::market::{CoeffPiece, JumpSource, MarketModel, TransitionJumps};
use crate::optim::MinimumKind;
use crate::policy::GridStrategy;
use crate::scalar::Scalar;
use crate::simulate::PathRecord;
use crate::strategies::AllocationReport;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Shape(String),
}

fn default_vol_epsilon() -> f64 {
    1e-8
}

/// A model document. `theta` may be omitted in the file; validation then rejects it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_states: usize,
    pub m_assets: usize,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub coeffs: Vec<Vec<PieceFile>>,
    #[serde(default)]
    pub jump_laws: Vec<JumpLawFile>,
    #[serde(default = "default_vol_epsilon")]
    pub vol_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceFile {
    pub t_start: f64,
    pub t_end: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub r: f64,
}

/// Exactly one of `atoms` and `density` must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpLawFile {
    pub from: usize,
    pub to: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomFile {
    pub z: Vec<f64>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum DensityFile {
    #[serde(rename = "uniform")]
    Uniform { lower: Vec<f64>, upper: Vec<f64>, nodes: usize },
    #[serde(rename = "trunc_normal")]
    TruncNormal { mean: Vec<f64>, std: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, nodes: usize },
    #[serde(rename = "trunc_dexp")]
    TruncDoubleExp {
        loc: Vec<f64>,
        p_up: Vec<f64>,
        rate_up: Vec<f64>,
        rate_down: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        nodes: usize,
    },
}

fn cast<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn uncast<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn matrix<T: Scalar>(rows: &[Vec<f64>], what: &str) -> Result<Matrix<T>, IoError> {
    let rows: Vec<Vec<T>> = rows.iter().map(|r| cast(r)).collect();
    Matrix::from_rows(&rows).map_err(|e| IoError::Shape(format!("{what}: {e}")))
}

impl DensityFile {
    fn to_spec<T: Scalar>(&self) -> (DensitySpec<T>, usize) {
        match self {
            Self::Uniform { lower, upper, nodes } => {
                (DensitySpec::Uniform { lower: cast(lower), upper: cast(upper) }, *nodes)
            }
            Self::TruncNormal { mean, std, lower, upper, nodes } => (
                DensitySpec::TruncNormal { mean: cast(mean), std: cast(std), lower: cast(lower), upper: cast(upper) },
                *nodes,
            ),
            Self::TruncDoubleExp { loc, p_up, rate_up, rate_down, lower, upper, nodes } => (
                DensitySpec::TruncDoubleExp {
                    loc: cast(loc),
                    p_up: cast(p_up),
                    rate_up: cast(rate_up),
                    rate_down: cast(rate_down),
                    lower: cast(lower),
                    upper: cast(upper),
                },
                *nodes,
            ),
        }
    }

    fn from_spec<T: Scalar>(spec: &DensitySpec<T>, nodes: usize) -> Self {
        match spec {
            DensitySpec::Uniform { lower, upper } => {
                Self::Uniform { lower: uncast(lower), upper: uncast(upper), nodes }
            }
            DensitySpec::TruncNormal { mean, std, lower, upper } => Self::TruncNormal {
                mean: uncast(mean),
                std: uncast(std),
                lower: uncast(lower),
                upper: uncast(upper),
                nodes,
            },
            DensitySpec::TruncDoubleExp { loc, p_up, rate_up, rate_down, lower, upper } => Self::TruncDoubleExp {
                loc: uncast(loc),
                p_up: uncast(p_up),
                rate_up: uncast(rate_up),
                rate_down: uncast(rate_down),
                lower: uncast(lower),
                upper: uncast(upper),
                nodes,
            },
        }
    }
}

impl ModelFile {
    /// Converts to an unvalidated model; only ragged matrices and ambiguous jump entries
    /// are rejected here.
    pub fn to_model<T: Scalar>(&self) -> Result<MarketModel<T>, IoError> {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, schedule)| {
                schedule
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        Ok(CoeffPiece {
                            t_start: T::lit(p.t_start),
                            t_end: T::lit(p.t_end),
                            mu: cast(&p.mu),
                            sigma: matrix(&p.sigma, &format!("coeffs[{i}][{k}].sigma"))?,
                            r: T::lit(p.r),
                        })
                    })
                    .collect::<Result<Vec<_>, IoError>>()
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        let jump_laws = self
            .jump_laws
            .iter()
            .enumerate()
            .map(|(k, law)| {
                let source = match (&law.atoms, &law.density) {
                    (Some(atoms), None) => {
                        JumpSource::Atoms(atoms.iter().map(|a| Atom { z: cast(&a.z), p: T::lit(a.p) }).collect())
                    }
                    (None, Some(d)) => {
                        let (spec, nodes) = d.to_spec();
                        JumpSource::Density { spec, nodes }
                    }
                    _ => {
                        return Err(IoError::Shape(format!(
                            "jump_laws[{k}]: give exactly one of \"atoms\" and \"density\""
                        )))
                    }
                };
                Ok(TransitionJumps { from: law.from, to: law.to, source })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(MarketModel {
            n_states: self.n_states,
            m_assets: self.m_assets,
            horizon: T::lit(self.horizon),
            theta: self.theta.map(T::lit),
            generator: matrix(&self.q, "Q")?,
            coeffs,
            jump_laws,
            vol_epsilon: T::lit(self.vol_epsilon),
        })
    }

    pub fn from_model<T: Scalar>(model: &MarketModel<T>) -> Self {
        let rows = |m: &Matrix<T>| m.to_rows().iter().map(|r| uncast(r)).collect();
        Self {
            n_states: model.n_states,
            m_assets: model.m_assets,
            horizon: model.horizon.as_f64(),
            theta: model.theta.map(Scalar::as_f64),
            q: rows(&model.generator),
            coeffs: model
                .coeffs
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|p| PieceFile {
                            t_start: p.t_start.as_f64(),
                            t_end: p.t_end.as_f64(),
                            mu: uncast(&p.mu),
                            sigma: rows(&p.sigma),
                            r: p.r.as_f64(),
                        })
                        .collect()
                })
                .collect(),
            jump_laws: model
                .jump_laws
                .iter()
                .map(|j| {
                    let (atoms, density) = match &j.source {
                        JumpSource::Atoms(a) => {
                            (Some(a.iter().map(|a| AtomFile { z: uncast(&a.z), p: a.p.as_f64() }).collect()), None)
                        }
                        JumpSource::Density { spec, nodes } => (None, Some(DensityFile::from_spec(spec, *nodes))),
                    };
                    JumpLawFile { from: j.from, to: j.to, atoms, density }
                })
                .collect(),
            vol_epsilon: model.vol_epsilon.as_f64(),
        }
    }
}

/// Reads and deserializes a JSON document.
pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_owned(), source })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<(), IoError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.to_owned(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Write { path: path.to_owned(), source })
}

pub fn parse_model<T: Scalar>(text: &str) -> Result<MarketModel<T>, IoError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|source| IoError::Json { path: PathBuf::from("<model>"), source })?;
    file.to_model()
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<MarketModel<T>, IoError> {
    read_json::<ModelFile>(path)?.to_model()
}

/// One `(node, state)` row of a surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub t: f64,
    pub state: usize,
    pub u: f64,
    pub v: f64,
    pub h: Vec<f64>,
    /// Smallest `1 + h'z` over the admissibility constraints; `None` when there are none.
    pub min_diag: Option<f64>,
    pub kind: MinimumKind,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub t: f64,
    pub state: usize,
    pub h_star: Vec<f64>,
    pub h_kelly: Vec<f64>,
    pub h_hedge: Vec<f64>,
    pub kelly_residual: f64,
    pub star_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub passed: bool,
    pub terminal: bool,
    pub monotone: Vec<(usize, usize)>,
    pub bounds: Vec<(usize, usize)>,
    pub infeasible: Vec<(usize, usize)>,
    pub generator: Vec<usize>,
}

impl From<&InvariantReport> for InvariantSummary {
    fn from(r: &InvariantReport) -> Self {
        Self {
            passed: r.passed(),
            terminal: r.terminal,
            monotone: r.monotone.clone(),
            bounds: r.bounds.clone(),
            infeasible: r.infeasible.clone(),
            generator: r.generator.clone(),
        }
    }
}

/// JSON mirror of a surface CSV. Rows are ordered by node, then state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFile {
    pub theta: f64,
    pub operator: OperatorKind,
    pub n_states: usize,
    pub m_assets: usize,
    pub g_min: f64,
    pub r_min: f64,
    pub ode_error: Option<f64>,
    pub time_grid: Vec<f64>,
    pub nodes: Vec<NodeRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allocations: Vec<AllocationRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariants: Option<InvariantSummary>,
}

impl SurfaceFile {
    pub fn new<T: Scalar>(surface: &ValueSurface<T>) -> Self {
        let n = surface.n_states();
        let mut nodes = Vec::with_capacity(surface.n_nodes() * n);
        for (k, &t) in surface.time_grid.iter().enumerate() {
            for i in 0..n {
                let d = &surface.diagnostics[k][i];
                nodes.push(NodeRow {
                    t: t.as_f64(),
                    state: i,
                    u: surface.u[k][i].as_f64(),
                    v: surface.v[k][i].as_f64(),
                    h: uncast(&surface.h_star[k][i]),
                    min_diag: Some(d.min_slack.as_f64()).filter(|s| s.is_finite()),
                    kind: d.kind,
                    iterations: d.iterations,
                    grad_norm: d.grad_norm.as_f64(),
                });
            }
        }
        Self {
            theta: surface.theta.as_f64(),
            operator: surface.kind,
            n_states: n,
            m_assets: surface.h_star.first().and_then(|row| row.first()).map_or(0, Vec::len),
            g_min: surface.g_min.as_f64(),
            r_min: surface.r_min.as_f64(),
            ode_error: surface.ode_error.map(Scalar::as_f64),
            time_grid: uncast(&surface.time_grid),
            nodes,
            allocations: Vec::new(),
            invariants: None,
        }
    }

    pub fn with_allocations<T: Scalar>(mut self, reports: &[AllocationReport<T>]) -> Self {
        self.allocations = reports
            .iter()
            .map(|r| AllocationRow {
                t: r.t.as_f64(),
                state: r.state,
                h_star: uncast(&r.h_star),
                h_kelly: uncast(&r.h_kelly),
                h_hedge: uncast(&r.h_hedge),
                kelly_residual: r.kelly_residual.as_f64(),
                star_residual: r.star_residual.as_f64(),
            })
            .collect();
        self
    }

    pub fn with_invariants(mut self, report: &InvariantReport) -> Self {
        self.invariants = Some(report.into());
        self
    }

    fn check_layout(&self) -> Result<(), IoError> {
        let expected = self.time_grid.len() * self.n_states;
        if self.nodes.len() != expected {
            return Err(IoError::Shape(format!("surface has {} rows, expected {expected}", self.nodes.len())));
        }
        for (r, row) in self.nodes.iter().enumerate() {
            if row.state != r % self.n_states || row.h.len() != self.m_assets {
                return Err(IoError::Shape(format!("surface row {r} is out of order or has the wrong width")));
            }
        }
        Ok(())
    }

    /// `u(0, i)` for every state.
    pub fn initial_values(&self) -> Vec<f64> {
        self.nodes.iter().take(self.n_states).map(|r| r.u).collect()
    }

    /// The piecewise-constant strategy stored in the surface.
    pub fn strategy(&self) -> Result<GridStrategy<f64>, IoError> {
        self.check_layout()?;
        let h = self.nodes.chunks(self.n_states).map(|c| c.iter().map(|r| r.h.clone()).collect()).collect();
        GridStrategy::new(self.time_grid.clone(), h)
            .ok_or_else(|| IoError::Shape("surface time grid must be strictly increasing with two nodes".into()))
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let file: Self = read_json(path)?;
        file.check_layout()?;
        Ok(file)
    }

    /// Writes the CSV; allocation columns are appended when allocations are present.
    pub fn write_csv(&self, path: &Path) -> Result<(), IoError> {
        let m = self.m_assets;
        let mut header: Vec<String> = ["t", "state", "u", "v"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=m).map(|k| format!("h_{k}")));
        header.push("min_diag".into());
        let with_alloc = !self.allocations.is_empty();
        if with_alloc {
            if self.allocations.len() != self.nodes.len() {
                return Err(IoError::Shape("one allocation row per surface row is required".into()));
            }
            header.extend((1..=m).map(|k| format!("kelly_{k}")));
            header.extend((1..=m).map(|k| format!("hedge_{k}")));
            header.push("kelly_residual".into());
            header.push("star_residual".into());
        }
        let mut rows = Vec::with_capacity(self.nodes.len());
        for (r, node) in self.nodes.iter().enumerate() {
            let mut row = vec![node.t.to_string(), node.state.to_string(), node.u.to_string(), node.v.to_string()];
            row.extend(node.h.iter().map(f64::to_string));
            row.push(node.min_diag.map_or_else(|| "inf".to_string(), |x| x.to_string()));
            if with_alloc {
                let a = &self.allocations[r];
                row.extend(a.h_kelly.iter().map(f64::to_string));
                row.extend(a.h_hedge.iter().map(f64::to_string));
                row.push(a.kelly_residual.to_string());
                row.push(a.star_residual.to_string());
            }
            rows.push(row);
        }
        write_table(path, &header, &rows)
    }
}

/// Writes a header and string rows as CSV.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), IoError> {
    let err = |source| IoError::Csv { path: path.to_owned(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|source| IoError::Write { path: path.to_owned(), source })
}

/// Reads a CSV into its header and string rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let err = |source| IoError::Csv { path: path.to_owned(), source };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let header = r.headers().map_err(err)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    Ok((header, rows))
}

fn joined<X: ToString>(xs: &[X]) -> String {
    xs.iter().map(X::to_string).collect::<Vec<_>>().join(";")
}

/// One row per path: identifiers, wealth and density, and the regime path.
pub fn write_paths_csv(path: &Path, records: &[PathRecord<f64>]) -> Result<(), IoError> {
    let header: Vec<String> =
        ["index", "seed", "log_wealth", "log_chi", "chi", "running_cost", "regimes", "switch_times", "brownian"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|p| {
            vec![
                p.index.to_string(),
                p.seed.to_string(),
                p.log_wealth.to_string(),
                p.log_chi.to_string(),
                p.chi.to_string(),
                p.running_cost.to_string(),
                joined(&p.regimes),
                joined(&p.switch_times),
                joined(&p.brownian),
            ]
        })
        .collect();
    write_table(path, &header, &rows)
}
