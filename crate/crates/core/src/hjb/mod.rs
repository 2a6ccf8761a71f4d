//! Risk-sensitive HJB equation on a finite state space.

mod closed_form;
mod operator;
mod solver;
mod surface;

use thiserror::Error;

use crate::jumps::Infeasible;
use crate::linalg::LinalgError;
use crate::optim::MinimizeError;

pub(crate) use closed_form::segments;
pub use closed_form::{closed_form_no_jump, g_star, h_star_no_jump, strategy_value, ClosedForm};
pub(crate) use operator::compensated_excess;
pub use operator::{
    g_minimum, g_on_piece, g_value, independent_jumps_operator, minimize_a, minimize_a_on_piece, operator_a,
    operator_matrix, tilted_generator, AObjective, GFunction, OperatorKind,
};
pub use solver::{solve_hjb, solve_hjb_with, time_grid, SolverConfig, Steps};
pub use surface::{InvariantReport, NodeDiagnostics, ValueSurface};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjbError {
    #[error("minimization failed at t = {t}, state {state}: {source}")]
    Minimize {
        t: f64,
        state: usize,
        #[source]
        source: MinimizeError,
    },
    #[error("u({t}, {state}) = {u} left the trust region [{lo}, {hi}]")]
    TrustRegion { t: f64, state: usize, u: f64, lo: f64, hi: f64 },
    #[error("closed form needs a model without jumps")]
    HasJumps,
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("time {0} outside [0, T]")]
    Time(f64),
    #[error(transparent)]
    Domain(#[from] Infeasible),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
