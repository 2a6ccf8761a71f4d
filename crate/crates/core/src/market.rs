//! Problem instance: the regime chain, per-regime coefficients, jump laws on transitions,
//! and the admissible allocation sets they induce.

use std::fmt;

use crate::jumps::{discretize_density, Atom, DensitySpec, JumpLaw};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{dot, Scalar};

/// Coefficients of one regime on `[t_start, t_end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffPiece<T> {
    pub t_start: T,
    pub t_end: T,
    pub mu: Vec<T>,
    pub sigma: Matrix<T>,
    pub r: T,
}

/// Jump law on a transition as supplied by the user, before validation.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpSource<T> {
    Atoms(Vec<Atom<T>>),
    Density { spec: DensitySpec<T>, nodes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionJumps<T> {
    pub from: usize,
    pub to: usize,
    pub source: JumpSource<T>,
}

/// Unvalidated problem instance. Call [`MarketModel::validate`] to obtain a [`ValidModel`],
/// which is what every downstream routine takes.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel<T> {
    pub n_states: usize,
    pub m_assets: usize,
    pub horizon: T,
    /// Risk aversion; must be present and positive.
    pub theta: Option<T>,
    pub generator: Matrix<T>,
    /// `coeffs[i]` is the piecewise-constant schedule of regime `i`.
    pub coeffs: Vec<Vec<CoeffPiece<T>>>,
    /// Transitions without an entry carry no price jump.
    pub jump_laws: Vec<TransitionJumps<T>>,
    /// Lower bound on the eigenvalues of `Sigma Sigma'`.
    pub vol_epsilon: T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Outcome of [`validate_model`]; empty means the model passed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue { location: location.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "model valid");
        }
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// Checks every structural assumption of the market. Never fails; the report carries failures.
pub fn validate_model<T: Scalar>(model: &MarketModel<T>) -> ValidationReport {
    build(model).err().unwrap_or_default()
}

impl<T: Scalar> MarketModel<T> {
    pub fn validate(self) -> Result<ValidModel<T>, ValidationReport> {
        build(&self).map(|parts| ValidModel::assemble(self, parts))
    }
}

struct Parts<T> {
    theta: T,
    laws: Vec<Option<JumpLaw<T>>>,
    pieces: Vec<Vec<Piece<T>>>,
}

fn build<T: Scalar>(model: &MarketModel<T>) -> Result<Parts<T>, ValidationReport> {
    let mut rep = ValidationReport::default();
    let n = model.n_states;
    let m = model.m_assets;
    let time_tol = T::tol(1e-12, 16.0) * model.horizon.abs().max(T::one());

    if n == 0 {
        rep.push("n_states", "must be positive");
    }
    if m == 0 {
        rep.push("m_assets", "must be positive");
    }
    if !(model.horizon > T::zero()) || !model.horizon.is_finite() {
        rep.push("horizon", "must be positive and finite");
    }
    let theta = match model.theta {
        Some(th) if th > T::zero() && th.is_finite() => th,
        _ => {
            rep.push("theta", "theta required and > 0");
            T::one()
        }
    };
    if !(model.vol_epsilon > T::zero()) {
        rep.push("vol_epsilon", "must be positive");
    }

    let q = &model.generator;
    if q.rows() != n || q.cols() != n {
        rep.push("Q", format!("expected {n}x{n}, got {}x{}", q.rows(), q.cols()));
    } else {
        let row_tol = T::tol(1e-12, 16.0);
        for i in 0..n {
            for j in 0..n {
                if !q[(i, j)].is_finite() {
                    rep.push(format!("Q[{i}][{j}]"), "not finite");
                } else if i != j && q[(i, j)] < T::zero() {
                    rep.push(format!("Q[{i}][{j}]"), format!("off-diagonal {} is negative", q[(i, j)]));
                }
            }
            let sum: T = q.row(i).iter().copied().sum();
            if sum.abs() > row_tol {
                rep.push(format!("Q row {i}"), format!("row {i} sums to {sum}"));
            }
        }
    }

    let mut pieces = Vec::with_capacity(n);
    if model.coeffs.len() != n {
        rep.push("coeffs", format!("expected schedules for {n} states, got {}", model.coeffs.len()));
    }
    for (i, schedule) in model.coeffs.iter().enumerate() {
        let mut resolved = Vec::with_capacity(schedule.len());
        if schedule.is_empty() {
            rep.push(format!("coeffs[{i}]"), "empty schedule");
        }
        for (k, pc) in schedule.iter().enumerate() {
            let loc = format!("coeffs[{i}][{k}]");
            let expected_start = if k == 0 { T::zero() } else { schedule[k - 1].t_end };
            if (pc.t_start - expected_start).abs() > time_tol {
                let what = if k == 0 {
                    "schedule must start at 0"
                } else if pc.t_start > expected_start {
                    "gap before this piece"
                } else {
                    "overlaps the previous piece"
                };
                rep.push(&loc, format!("{what} (t_start = {}, expected {expected_start})", pc.t_start));
            }
            if !(pc.t_end > pc.t_start) {
                rep.push(&loc, "t_end must exceed t_start");
            }
            if pc.mu.len() != m {
                rep.push(&loc, format!("mu has length {}, expected {m}", pc.mu.len()));
            }
            if pc.sigma.rows() != m || pc.sigma.cols() != m {
                rep.push(&loc, format!("sigma is {}x{}, expected {m}x{m}", pc.sigma.rows(), pc.sigma.cols()));
                continue;
            }
            if !pc.r.is_finite() || pc.mu.iter().any(|x| !x.is_finite()) || !pc.sigma.is_finite() {
                rep.push(&loc, "non-finite coefficient");
                continue;
            }
            let cov = pc.sigma.gram();
            let lam_min = cov.symmetric_eigenvalues()[0];
            if lam_min < model.vol_epsilon {
                rep.push(
                    &loc,
                    format!(
                        "Sigma Sigma' - eps I is not positive semidefinite (min eigenvalue {lam_min} < eps = {})",
                        model.vol_epsilon
                    ),
                );
                continue;
            }
            match cov.cholesky() {
                Ok(chol) => resolved.push(Piece {
                    t_start: pc.t_start,
                    t_end: pc.t_end,
                    mu: pc.mu.clone(),
                    sigma: pc.sigma.clone(),
                    r: pc.r,
                    cov,
                    chol,
                }),
                Err(_) => rep.push(&loc, "Sigma Sigma' is not positive definite"),
            }
        }
        if let Some(last) = schedule.last() {
            if (last.t_end - model.horizon).abs() > time_tol {
                rep.push(
                    format!("coeffs[{i}]"),
                    format!("schedule ends at {}, must cover [0, {}]", last.t_end, model.horizon),
                );
            }
        }
        pieces.push(resolved);
    }

    let mut laws: Vec<Option<JumpLaw<T>>> = vec![None; n * n];
    for (k, entry) in model.jump_laws.iter().enumerate() {
        let loc = format!("jump_laws[{k}] ({} -> {})", entry.from, entry.to);
        if entry.from >= n || entry.to >= n {
            rep.push(loc, "state index out of range");
            continue;
        }
        if entry.from == entry.to {
            rep.push(loc, "jump law on a diagonal entry");
            continue;
        }
        let built = match &entry.source {
            JumpSource::Atoms(atoms) => JumpLaw::new(atoms.clone()),
            JumpSource::Density { spec, nodes } => discretize_density(spec, *nodes),
        };
        match built {
            Ok(law) if law.dim() != m => {
                rep.push(loc, format!("jump dimension {} differs from m_assets = {m}", law.dim()))
            }
            Ok(law) => {
                let slot = &mut laws[entry.from * n + entry.to];
                if slot.is_some() {
                    rep.push(loc, "duplicate jump law for this transition");
                } else {
                    *slot = Some(law);
                }
            }
            Err(e) => rep.push(loc, e.to_string()),
        }
    }

    if rep.passed() {
        Ok(Parts { theta, laws, pieces })
    } else {
        Err(rep)
    }
}

/// Resolved coefficient piece with `Sigma Sigma'` and its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece<T> {
    pub t_start: T,
    pub t_end: T,
    pub mu: Vec<T>,
    pub sigma: Matrix<T>,
    pub r: T,
    pub cov: Matrix<T>,
    pub chol: Cholesky<T>,
}

impl<T: Scalar> Piece<T> {
    /// `mu - r 1`.
    pub fn excess_return(&self) -> Vec<T> {
        self.mu.iter().map(|&x| x - self.r).collect()
    }
}

/// Allocations `h` with `h'z > -1` for every support point `z` of the jumps out of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet<T> {
    pub state: usize,
    pub dim: usize,
    /// Support points; an empty list means the set is all of `R^m`.
    pub constraints: Vec<Vec<T>>,
}

impl<T: Scalar> AdmissibleSet<T> {
    pub fn unconstrained(state: usize, dim: usize) -> Self {
        Self { state, dim, constraints: Vec::new() }
    }

    pub fn is_unconstrained(&self) -> bool {
        self.constraints.is_empty()
    }

    /// `h'z_k > -1 + margin` for every constraint.
    pub fn is_feasible(&self, h: &[T], margin: T) -> bool {
        self.constraints.iter().all(|z| dot(h, z) > margin - T::one())
    }

    /// `min_k 1 + h'z_k`, infinite when unconstrained.
    pub fn min_slack(&self, h: &[T]) -> T {
        self.constraints.iter().map(|z| T::one() + dot(h, z)).fold(T::infinity(), T::min)
    }

    /// Largest `alpha >= 0` keeping `1 + (h + alpha d)'z_k >= margin` for all `k`.
    pub fn max_step(&self, h: &[T], d: &[T], margin: T) -> T {
        let mut alpha = T::infinity();
        for z in &self.constraints {
            let dz = dot(d, z);
            if dz < T::zero() {
                let room = T::one() + dot(h, z) - margin;
                alpha = alpha.min((room / -dz).max(T::zero()));
            }
        }
        alpha
    }

    /// Constraints whose slack is within `band` of `margin`.
    pub fn active(&self, h: &[T], margin: T, band: T) -> Vec<&[T]> {
        self.constraints.iter().filter(|z| T::one() + dot(h, z) <= margin + band).map(Vec::as_slice).collect()
    }
}

/// Validated, immutable model. Safe to share across threads by reference.
#[derive(Debug, Clone)]
pub struct ValidModel<T> {
    source: MarketModel<T>,
    theta: T,
    laws: Vec<Option<JumpLaw<T>>>,
    pieces: Vec<Vec<Piece<T>>>,
    admissible: Vec<AdmissibleSet<T>>,
    breakpoints: Vec<T>,
}

impl<T: Scalar> ValidModel<T> {
    fn assemble(source: MarketModel<T>, parts: Parts<T>) -> Self {
        let n = source.n_states;
        let m = source.m_assets;
        let admissible = (0..n)
            .map(|i| {
                let mut constraints: Vec<Vec<T>> = Vec::new();
                for j in 0..n {
                    if let Some(law) = &parts.laws[i * n + j] {
                        for a in law.atoms() {
                            if a.z.iter().all(|&z| z == T::zero()) || constraints.contains(&a.z) {
                                continue;
                            }
                            constraints.push(a.z.clone());
                        }
                    }
                }
                AdmissibleSet { state: i, dim: m, constraints }
            })
            .collect();
        let mut breakpoints: Vec<T> = vec![T::zero(), source.horizon];
        for schedule in &parts.pieces {
            for p in schedule.iter().skip(1) {
                breakpoints.push(p.t_start);
            }
        }
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let tol = T::tol(1e-12, 16.0) * source.horizon.max(T::one());
        breakpoints.dedup_by(|a, b| (*a - *b).abs() <= tol);
        if let Some(last) = breakpoints.last_mut() {
            *last = source.horizon;
        }
        Self { theta: parts.theta, laws: parts.laws, pieces: parts.pieces, admissible, breakpoints, source }
    }

    pub fn source(&self) -> &MarketModel<T> {
        &self.source
    }

    pub fn n_states(&self) -> usize {
        self.source.n_states
    }

    pub fn m_assets(&self) -> usize {
        self.source.m_assets
    }

    pub fn horizon(&self) -> T {
        self.source.horizon
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    /// Same market with a different risk aversion.
    pub fn with_theta(&self, theta: T) -> Result<Self, ValidationReport> {
        let mut src = self.source.clone();
        src.theta = Some(theta);
        src.validate()
    }

    pub fn generator(&self) -> &Matrix<T> {
        &self.source.generator
    }

    #[inline]
    pub fn q(&self, i: usize, j: usize) -> T {
        self.source.generator[(i, j)]
    }

    /// Total switching intensity `lambda(i) = -Q(i, i)`.
    pub fn intensity(&self, i: usize) -> T {
        -self.q(i, i)
    }

    /// `None` means a switch without a price jump.
    #[inline]
    pub fn jump_law(&self, i: usize, j: usize) -> Option<&JumpLaw<T>> {
        self.laws[i * self.n_states() + j].as_ref()
    }

    /// Whether any transition carries a non-zero jump.
    pub fn has_jumps(&self) -> bool {
        self.laws.iter().flatten().any(|law| law.atoms().iter().any(|a| a.z.iter().any(|&z| z != T::zero())))
    }

    pub fn pieces(&self, i: usize) -> &[Piece<T>] {
        &self.pieces[i]
    }

    /// Coefficients in force at `t` (right-continuous; `t = T` maps to the last piece).
    pub fn coeffs_at(&self, i: usize, t: T) -> &Piece<T> {
        let schedule = &self.pieces[i];
        let k = schedule.partition_point(|p| p.t_end <= t);
        &schedule[k.min(schedule.len() - 1)]
    }

    /// Coefficients in force on the interval `[a, b]` lying inside a single piece.
    pub fn coeffs_on(&self, i: usize, a: T, b: T) -> &Piece<T> {
        self.coeffs_at(i, (a + b) / T::lit(2.0))
    }

    /// Sorted union of all coefficient breakpoints, including `0` and `T`.
    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn admissible_set(&self, i: usize) -> &AdmissibleSet<T> {
        &self.admissible[i]
    }

    /// Smallest short rate over all states and pieces.
    pub fn r_min(&self) -> T {
        self.pieces.iter().flatten().map(|p| p.r).fold(T::infinity(), T::min)
    }
}

/// The admissible set of state `i`.
pub fn admissible_set<T: Scalar>(model: &ValidModel<T>, i: usize) -> AdmissibleSet<T> {
    model.admissible_set(i).clone()
}

/// Strict feasibility with a safety margin.
pub fn is_feasible<T: Scalar>(set: &AdmissibleSet<T>, h: &[T], margin: T) -> bool {
    set.is_feasible(h, margin)
}
