//! Solver output and its structural checks.

use super::operator::{tilted_generator, OperatorKind};
use crate::market::ValidModel;
use crate::optim::MinimumKind;
use crate::scalar::Scalar;

/// Minimizer diagnostics at one node and state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDiagnostics<T> {
    pub kind: MinimumKind,
    pub iterations: usize,
    pub grad_norm: T,
    /// `min_k 1 + h'z_k`; infinite when the state has no jumps.
    pub min_slack: T,
}

/// Value function and optimal allocations on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface<T> {
    pub theta: T,
    pub kind: OperatorKind,
    pub time_grid: Vec<T>,
    /// `u[k][i]`.
    pub u: Vec<Vec<T>>,
    /// `v = -log(u) / theta`.
    pub v: Vec<Vec<T>>,
    /// `h_star[k][i]` minimizes `A(u(t_k), .)(i)` on the piece covering `[t_k, t_k+1)`.
    pub h_star: Vec<Vec<Vec<T>>>,
    pub diagnostics: Vec<Vec<NodeDiagnostics<T>>>,
    pub g_min: T,
    pub r_min: T,
    /// Largest step-doubling error estimate, when error control ran.
    pub ode_error: Option<T>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvariantReport {
    pub terminal: bool,
    /// `(node, state)` pairs where `u` decreases in `t` by more than the tolerance.
    pub monotone: Vec<(usize, usize)>,
    pub bounds: Vec<(usize, usize)>,
    pub infeasible: Vec<(usize, usize)>,
    /// Nodes whose `Q^h` has a negative off-diagonal or a non-zero row sum.
    pub generator: Vec<usize>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.terminal
            && self.monotone.is_empty()
            && self.bounds.is_empty()
            && self.infeasible.is_empty()
            && self.generator.is_empty()
    }
}

impl std::fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            return write!(f, "all invariants hold");
        }
        write!(
            f,
            "terminal: {}, monotonicity breaches: {}, bound breaches: {}, infeasible allocations: {}, bad tilted generators: {}",
            self.terminal,
            self.monotone.len(),
            self.bounds.len(),
            self.infeasible.len(),
            self.generator.len()
        )
    }
}

impl<T: Scalar> ValueSurface<T> {
    pub fn n_nodes(&self) -> usize {
        self.time_grid.len()
    }

    pub fn n_states(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    /// The grid cell whose coefficients determine `h_star[k]`: `[t_k, t_k+1]`, or the last
    /// cell for the terminal node.
    pub fn cell(&self, k: usize) -> (T, T) {
        let k = k.min(self.n_nodes() - 2);
        (self.time_grid[k], self.time_grid[k + 1])
    }

    /// `exp(theta g_min (T - t))` and `exp(-theta r_min (T - t))`.
    pub fn bounds_at(&self, t: T) -> (T, T) {
        let tau = *self.time_grid.last().unwrap() - t;
        ((self.theta * self.g_min * tau).exp(), (-self.theta * self.r_min * tau).exp())
    }

    /// Checks the terminal condition, monotonicity in `t`, the a priori bounds, strict
    /// feasibility of `h*`, and the structure of `Q^h`, all up to `tol`.
    pub fn check_invariants(&self, model: &ValidModel<T>, tol: T) -> InvariantReport {
        let mut rep = InvariantReport::default();
        let n = self.n_states();
        let last = self.n_nodes() - 1;
        rep.terminal = self.u[last].iter().all(|&x| (x - T::one()).abs() <= tol);
        for k in 0..=last {
            let (lo, hi) = self.bounds_at(self.time_grid[k]);
            for i in 0..n {
                let u = self.u[k][i];
                if k < last && u > self.u[k + 1][i] + tol {
                    rep.monotone.push((k, i));
                }
                if u < lo - tol || u > hi + tol || !u.is_finite() {
                    rep.bounds.push((k, i));
                }
                if !model.admissible_set(i).is_feasible(&self.h_star[k][i], T::zero()) {
                    rep.infeasible.push((k, i));
                }
            }
            match tilted_generator(model, &self.h_star[k], self.theta) {
                Ok(qh) => {
                    let row_tol = T::tol(1e-12, 64.0) * qh.max_abs().max(T::one());
                    let bad = (0..n).any(|i| {
                        let sum: T = qh.row(i).iter().copied().sum();
                        sum.abs() > row_tol || (0..n).any(|j| j != i && qh[(i, j)] < T::zero())
                    });
                    if bad {
                        rep.generator.push(k);
                    }
                }
                Err(_) => rep.generator.push(k),
            }
        }
        rep
    }
}
