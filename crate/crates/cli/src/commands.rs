use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use rs_regime::hjb::{solve_hjb, solve_hjb_with, strategy_value, HjbError, OperatorKind, ValueSurface};
use rs_regime::io::{self, SurfaceFile};
use rs_regime::market::ValidModel;
use rs_regime::policy::{ConstantStrategy, GridStrategy, Strategy};
use rs_regime::simulate::{
    effective_generator, estimate_criterion, simulate_paths, verify_entropy_bound, verify_generator_change,
    verify_martingale, verify_mean_variance, CriterionReport, McReport, StateTilt,
};
use rs_regime::strategies::{allocation_reports, kelly_on_piece, kelly_residual, log_growth_rate};
use rs_regime::Model;

use crate::config::{ConstantH, RunConfig, StrategySpec};

/// Why a command stopped. Input problems exit with 2, numerical ones with 3.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Numerical(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Self::Input(e) | Self::Numerical(e) => e,
        }
    }
}

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn numerical(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

fn hjb(e: HjbError) -> Failure {
    match e {
        HjbError::Grid(_) => input(e),
        e => numerical(e),
    }
}

/// Outcome of a command that ran to completion; `passed` is false when a check failed.
#[derive(Debug, Default)]
pub struct Summary {
    pub passed: bool,
    pub lines: Vec<String>,
    pub written: Vec<PathBuf>,
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    /// Refuses to touch existing files unless `force` is set.
    fn prepare(dir: &Path, names: &[String], force: bool) -> Result<Self, Failure> {
        for name in names {
            let p = dir.join(name);
            if p.exists() && !force {
                return Err(input(anyhow!("{} exists; pass --force to overwrite", p.display())));
            }
        }
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(input)?;
        Ok(Self { dir: dir.to_owned(), written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), Failure> {
        let p = self.path(name);
        io::write_json(&p, value).map_err(input)
    }
}

pub fn load_model(cfg: &RunConfig) -> Result<Model, Failure> {
    let mut raw = io::load_model::<f64>(&cfg.model_path).map_err(input)?;
    if cfg.theta.is_some() {
        raw.theta = cfg.theta;
    }
    raw.validate().map_err(|rep| input(anyhow!("model validation failed:\n{rep}")))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn solve(cfg: &RunConfig, force: bool) -> Result<Summary, Failure> {
    let mut out = Output::prepare(&cfg.output_path, &["surface.csv".into(), "surface.json".into()], force)?;
    let model = load_model(cfg)?;
    let surface = solve_hjb(&model, &cfg.solver()).map_err(hjb)?;
    let allocations = allocation_reports(&model, &surface, &cfg.newton()).map_err(numerical)?;
    let invariants = surface.check_invariants(&model, 10.0 * cfg.tolerances.ode);
    let file = SurfaceFile::new(&surface).with_allocations(&allocations).with_invariants(&invariants);
    file.write_csv(&out.path("surface.csv")).map_err(input)?;
    out.json("surface.json", &file)?;
    let star = allocations.iter().map(|a| a.star_residual).fold(0.0, f64::max);
    let kelly = allocations.iter().map(|a| a.kelly_residual).fold(0.0, f64::max);
    Ok(Summary {
        passed: invariants.passed(),
        lines: vec![
            format!("nodes: {}", surface.n_nodes()),
            format!("u(0) = {}", fmt_vec(&surface.u[0])),
            format!("v(0) = {}", fmt_vec(&surface.v[0])),
            format!("max fixed-point residual: h* {star:.3e}, Kelly {kelly:.3e}"),
            format!("invariants: {invariants}"),
        ],
        written: out.written,
    })
}

#[derive(Serialize)]
struct KellyRow {
    t_start: f64,
    t_end: f64,
    state: usize,
    h: Vec<f64>,
    growth_rate: f64,
    residual: f64,
}

pub fn kelly(cfg: &RunConfig, force: bool) -> Result<Summary, Failure> {
    let mut out = Output::prepare(&cfg.output_path, &["kelly.csv".into(), "kelly.json".into()], force)?;
    let model = load_model(cfg)?;
    let opts = cfg.newton();
    let mut rows = Vec::new();
    for i in 0..model.n_states() {
        for piece in model.pieces(i) {
            let min = kelly_on_piece(&model, piece, i, &opts)
                .with_context(|| format!("Kelly allocation in state {i} on [{}, {})", piece.t_start, piece.t_end))
                .map_err(numerical)?;
            let t = piece.t_start;
            rows.push(KellyRow {
                t_start: t,
                t_end: piece.t_end,
                state: i,
                growth_rate: log_growth_rate(&model, t, i, &min.h).map_err(numerical)?,
                residual: kelly_residual(&model, t, i, &min.h).map_err(numerical)?,
                h: min.h,
            });
        }
    }
    let m = model.m_assets();
    let mut header: Vec<String> = vec!["t_start".into(), "t_end".into(), "state".into()];
    header.extend((1..=m).map(|k| format!("h_{k}")));
    header.extend(["growth_rate".to_string(), "residual".to_string()]);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.t_start.to_string(), r.t_end.to_string(), r.state.to_string()];
            row.extend(r.h.iter().map(f64::to_string));
            row.extend([r.growth_rate.to_string(), r.residual.to_string()]);
            row
        })
        .collect();
    io::write_table(&out.path("kelly.csv"), &header, &table).map_err(input)?;
    out.json("kelly.json", &rows)?;
    let lines = rows
        .iter()
        .map(|r| {
            format!(
                "state {} on [{}, {}): h^K = {}, growth {:.6}",
                r.state,
                r.t_start,
                r.t_end,
                fmt_vec(&r.h),
                r.growth_rate
            )
        })
        .collect();
    Ok(Summary { passed: true, lines, written: out.written })
}

/// A resolved strategy and the value `u(0, i)` it is expected to reach.
struct Resolved {
    label: &'static str,
    strategy: Box<dyn Strategy<f64>>,
    targets: Vec<f64>,
}

fn constant_strategy(model: &Model, h: &ConstantH) -> Result<ConstantStrategy<f64>, Failure> {
    let n = model.n_states();
    let per_state = match h {
        ConstantH::Shared(v) => vec![v.clone(); n],
        ConstantH::PerState(rows) => rows.clone(),
    };
    if per_state.len() != n || per_state.iter().any(|h| h.len() != model.m_assets()) {
        return Err(input(anyhow!("constant strategy must give {} allocations of length {}", n, model.m_assets())));
    }
    for (i, h) in per_state.iter().enumerate() {
        if !model.admissible_set(i).is_feasible(h, 0.0) {
            return Err(input(anyhow!("constant allocation {h:?} is not admissible in state {i}")));
        }
    }
    Ok(ConstantStrategy::new(per_state))
}

fn resolve(cfg: &RunConfig, model: &Model) -> Result<Resolved, Failure> {
    match &cfg.strategy {
        StrategySpec::Optimal => {
            let surface: ValueSurface<f64> = solve_hjb(model, &cfg.solver()).map_err(hjb)?;
            Ok(Resolved {
                label: "optimal",
                targets: surface.u[0].clone(),
                strategy: Box::new(GridStrategy::from_surface(&surface)),
            })
        }
        StrategySpec::Surface { path } => {
            let file = SurfaceFile::read(path).map_err(input)?;
            if file.n_states != model.n_states() || file.m_assets != model.m_assets() {
                return Err(input(anyhow!("{} does not match the model dimensions", path.display())));
            }
            if (file.theta - model.theta()).abs() > 1e-12 * model.theta() {
                return Err(input(anyhow!(
                    "{} was solved with theta = {}, the model has {}",
                    path.display(),
                    file.theta,
                    model.theta()
                )));
            }
            Ok(Resolved {
                label: "surface",
                targets: file.initial_values(),
                strategy: Box::new(file.strategy().map_err(input)?),
            })
        }
        StrategySpec::Constant { h } => {
            let s = constant_strategy(model, h)?;
            let exact = strategy_value(model, &s, 0.0).map_err(hjb)?;
            Ok(Resolved { label: "constant", targets: exact.u, strategy: Box::new(s) })
        }
    }
}

fn states(cfg: &RunConfig, model: &Model) -> Result<Vec<usize>, Failure> {
    match cfg.mc().map_err(input)?.initial_state {
        Some(i) if i >= model.n_states() => Err(input(anyhow!("initial_state {i} out of range"))),
        Some(i) => Ok(vec![i]),
        None => Ok((0..model.n_states()).collect()),
    }
}

fn dump_names(cfg: &RunConfig, states: &[usize]) -> Vec<String> {
    match &cfg.mc {
        Some(mc) if mc.dump_paths => states.iter().map(|i| format!("paths_state{i}.csv")).collect(),
        _ => Vec::new(),
    }
}

fn dump_paths(
    cfg: &RunConfig,
    model: &Model,
    strategy: &dyn Strategy<f64>,
    i: usize,
    out: &mut Output,
) -> Result<(), Failure> {
    let mc = cfg.mc().map_err(input)?;
    if mc.dump_paths {
        let paths = simulate_paths(model, strategy, &mc.config(i)).map_err(numerical)?;
        io::write_paths_csv(&out.path(&format!("paths_state{i}.csv")), &paths).map_err(input)?;
    }
    Ok(())
}

fn verdict(r: &McReport) -> String {
    let target = r.target.map_or_else(|| "-".to_string(), |t| format!("{t:.8}"));
    let pass = match r.pass {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "-",
    };
    format!("{}: {:.8} +- {:.2e} (target {target}) {pass}", r.label, r.estimate, r.std_error)
}

#[derive(Serialize)]
struct SimulateState {
    state: usize,
    target: f64,
    criterion: CriterionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_variance: Option<McReport>,
}

#[derive(Serialize)]
struct SimulateFile {
    strategy: &'static str,
    theta: f64,
    states: Vec<SimulateState>,
}

pub fn simulate(cfg: &RunConfig, force: bool) -> Result<Summary, Failure> {
    let mc = cfg.mc().map_err(input)?;
    let model = load_model(cfg)?;
    let states = states(cfg, &model)?;
    let mut names = vec!["simulate.json".to_string()];
    names.extend(dump_names(cfg, &states));
    let mut out = Output::prepare(&cfg.output_path, &names, force)?;
    let resolved = resolve(cfg, &model)?;
    let strategy = &*resolved.strategy;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for &i in &states {
        let target = resolved.targets[i];
        let criterion = estimate_criterion(&model, strategy, &mc.config(i), Some(target)).map_err(numerical)?;
        lines.push(format!("state {i}: {}", verdict(&criterion.report)));
        let mean_variance = match mc.mean_variance_allowance {
            Some(allowance) => {
                let r = verify_mean_variance(&model, strategy, &mc.config(i), allowance).map_err(numerical)?;
                lines.push(format!("state {i}: {}", verdict(&r)));
                Some(r)
            }
            None => None,
        };
        dump_paths(cfg, &model, strategy, i, &mut out)?;
        rows.push(SimulateState { state: i, target, criterion, mean_variance });
    }
    let passed =
        rows.iter().all(|r| r.criterion.report.passed() && r.mean_variance.as_ref().is_none_or(McReport::passed));
    out.json("simulate.json", &SimulateFile { strategy: resolved.label, theta: model.theta(), states: rows })?;
    Ok(Summary { passed, lines, written: out.written })
}

#[derive(Serialize)]
struct MartingaleState {
    state: usize,
    martingale: McReport,
    entropy: McReport,
}

pub fn verify_martingale_cmd(cfg: &RunConfig, force: bool) -> Result<Summary, Failure> {
    let mc = cfg.mc().map_err(input)?;
    let model = load_model(cfg)?;
    let states = states(cfg, &model)?;
    let mut names = vec!["martingale.json".to_string()];
    names.extend(dump_names(cfg, &states));
    let mut out = Output::prepare(&cfg.output_path, &names, force)?;
    let resolved = resolve(cfg, &model)?;
    let strategy = &*resolved.strategy;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for &i in &states {
        let martingale = verify_martingale(&model, strategy, &mc.config(i)).map_err(numerical)?;
        let entropy = verify_entropy_bound(&model, strategy, &mc.config(i)).map_err(numerical)?;
        lines.push(format!("state {i}: {}", verdict(&martingale)));
        lines.push(format!("state {i}: {}", verdict(&entropy)));
        dump_paths(cfg, &model, strategy, i, &mut out)?;
        rows.push(MartingaleState { state: i, martingale, entropy });
    }
    let passed = rows.iter().all(|r| r.martingale.passed() && r.entropy.passed());
    out.json("martingale.json", &rows)?;
    Ok(Summary { passed, lines, written: out.written })
}

#[derive(Serialize)]
struct GeneratorFile {
    initial_state: usize,
    effective_generator: Vec<Vec<f64>>,
    states: Vec<StateTilt>,
}

pub fn verify_generator_cmd(cfg: &RunConfig, force: bool) -> Result<Summary, Failure> {
    let mc = cfg.mc().map_err(input)?;
    let model = load_model(cfg)?;
    let StrategySpec::Constant { h } = &cfg.strategy else {
        return Err(input(anyhow!("verify-generator needs a constant strategy (\"type\": \"constant\")")));
    };
    let initial = match mc.initial_state {
        Some(i) if i >= model.n_states() => return Err(input(anyhow!("initial_state {i} out of range"))),
        Some(i) => i,
        None => 0,
    };
    let mut out = Output::prepare(&cfg.output_path, &["generator.json".into()], force)?;
    let strategy = constant_strategy(&model, h)?;
    let qh = effective_generator(&model, &strategy, 0.0).map_err(numerical)?;
    let tilts = verify_generator_change(&model, &strategy, &mc.config(initial)).map_err(numerical)?;
    let mut lines = Vec::new();
    for t in &tilts {
        lines.push(format!("state {}: {}", t.state, verdict(&t.intensity)));
        for (j, rate, dest) in &t.transitions {
            lines.push(format!("  -> {j}: {}", verdict(rate)));
            lines.push(format!("  -> {j}: {}", verdict(dest)));
        }
    }
    let passed = tilts.iter().all(StateTilt::passed);
    out.json(
        "generator.json",
        &GeneratorFile { initial_state: initial, effective_generator: qh.to_rows(), states: tilts },
    )?;
    Ok(Summary { passed, lines, written: out.written })
}

/// Where the post-switch values sit relative to `u(i)` over the transitions that carry jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Higher,
    Lower,
    Equal,
    Mixed,
    NoJumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MoreCautious {
    Coinciding,
    Independent,
    Equal,
}

#[derive(Serialize)]
struct CompareState {
    state: usize,
    u_coinciding: f64,
    u_independent: f64,
    h_coinciding: Vec<f64>,
    h_independent: Vec<f64>,
    destination: Destination,
    more_cautious: MoreCautious,
    /// With `destination == Higher`, whether the coinciding position is the smaller one.
    consistent: Option<bool>,
}

fn destination(model: &ValidModel<f64>, u: &[f64], i: usize) -> Destination {
    let (mut higher, mut lower, mut equal) = (0, 0, 0);
    for j in 0..model.n_states() {
        let jumps = model.jump_law(i, j).is_some_and(|law| law.atoms().iter().any(|a| a.z.iter().any(|&z| z != 0.0)));
        if j == i || model.q(i, j) == 0.0 || !jumps {
            continue;
        }
        match u[j].partial_cmp(&u[i]) {
            Some(std::cmp::Ordering::Greater) => higher += 1,
            Some(std::cmp::Ordering::Less) => lower += 1,
            _ => equal += 1,
        }
    }
    match (higher, lower, equal) {
        (0, 0, 0) => Destination::NoJumps,
        (_, 0, 0) => Destination::Higher,
        (0, _, 0) => Destination::Lower,
        (0, 0, _) => Destination::Equal,
        _ => Destination::Mixed,
    }
}

fn norm(h: &[f64]) -> f64 {
    h.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn compare_independent(cfg: &RunConfig, force: bool) -> Result<Summary, Failure> {
    let mut out = Output::prepare(&cfg.output_path, &["compare.csv".into(), "compare.json".into()], force)?;
    let model = load_model(cfg)?;
    let solver = cfg.solver();
    let c = solve_hjb_with(&model, &solver, OperatorKind::Coinciding).map_err(hjb)?;
    let ind = solve_hjb_with(&model, &solver, OperatorKind::Independent).map_err(hjb)?;
    let m = model.m_assets();
    let mut header: Vec<String> =
        ["t", "state", "u_coinciding", "u_independent"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=m).map(|k| format!("h_coinciding_{k}")));
    header.extend((1..=m).map(|k| format!("h_independent_{k}")));
    let mut table = Vec::new();
    for (k, t) in c.time_grid.iter().enumerate() {
        for i in 0..model.n_states() {
            let mut row = vec![t.to_string(), i.to_string(), c.u[k][i].to_string(), ind.u[k][i].to_string()];
            row.extend(c.h_star[k][i].iter().map(f64::to_string));
            row.extend(ind.h_star[k][i].iter().map(f64::to_string));
            table.push(row);
        }
    }
    io::write_table(&out.path("compare.csv"), &header, &table).map_err(input)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for i in 0..model.n_states() {
        let (hc, hi) = (c.h_star[0][i].clone(), ind.h_star[0][i].clone());
        let (nc, ni) = (norm(&hc), norm(&hi));
        let scale = 1e-10 * nc.max(ni).max(1.0);
        let more_cautious = if nc < ni - scale {
            MoreCautious::Coinciding
        } else if ni < nc - scale {
            MoreCautious::Independent
        } else {
            MoreCautious::Equal
        };
        let destination = destination(&model, &c.u[0], i);
        // the prediction covers the crash case only: every jump leads to a worse state
        let consistent = (destination == Destination::Higher).then_some(more_cautious == MoreCautious::Coinciding);
        lines.push(format!(
            "state {i}: u {:.6} vs {:.6}, h* {} vs {}, destination {:?}, more cautious: {:?}",
            c.u[0][i],
            ind.u[0][i],
            fmt_vec(&hc),
            fmt_vec(&hi),
            destination,
            more_cautious
        ));
        rows.push(CompareState {
            state: i,
            u_coinciding: c.u[0][i],
            u_independent: ind.u[0][i],
            h_coinciding: hc,
            h_independent: hi,
            destination,
            more_cautious,
            consistent,
        });
    }
    out.json("compare.json", &rows)?;
    Ok(Summary { passed: true, lines, written: out.written })
}
