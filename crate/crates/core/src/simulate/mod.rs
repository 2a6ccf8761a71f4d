//! Exact Monte Carlo for the regime-switching jump diffusion and its measure changes.
//!
//! Path `p` of a run draws from `ChaCha8Rng` seeded with the run seed on stream `p`, and
//! all reductions are pairwise sums in path order, so results do not depend on the number
//! of worker threads.

mod chain;
mod estimators;
mod measure;
mod path;

use thiserror::Error;

use crate::jumps::Infeasible;

pub use chain::{path_rng, sample_chain, simulate_chain, ChainPath};
pub use estimators::{
    estimate_criterion, map_paths, mean_and_se, ratio_and_se, simulate_paths, verify_entropy_bound,
    verify_generator_change, verify_martingale, verify_mean_variance, Comparison, CriterionReport, McConfig, McReport,
    StateTilt,
};
pub use measure::{effective_generator, klebaner_bound};
pub use path::{chi_density, simulate_logwealth, PathIntegrals, PathRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("allocation infeasible at t = {t}, state {state}: {source}")]
    Allocation {
        t: f64,
        state: usize,
        #[source]
        source: Infeasible,
    },
    #[error("invalid simulation settings: {0}")]
    Config(String),
}
