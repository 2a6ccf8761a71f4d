//! Exact log-wealth and density along a simulated regime path.
//!
//! Between switches the coefficients and the allocation are piecewise constant in time,
//! so every `ds` integral is a finite sum and `int h' Sigma dW` over a sojourn is one
//! Gaussian with variance `int h'Ch ds`.

use rand::Rng;

use super::chain::{path_rng, sample_chain};
use super::SimError;
use crate::hjb::{compensated_excess, g_on_piece, segments};
use crate::market::ValidModel;
use crate::policy::Strategy;
use crate::scalar::{dot, Scalar};

const DRIFT: usize = 0;
const VAR: usize = 1;
const COMP: usize = 2;
const COST: usize = 3;

/// Time integrals of the per-state rates along `[0, T]`, tabulated once per strategy.
///
/// Rates per state: log-wealth drift `r + h'(mu - r 1 - sum Q xi) - h'Ch / 2`, variance
/// `h'Ch`, jump compensator `sum_j Q(i, j) (E(1 + h'Z)^-theta - 1)` and running cost `g`.
#[derive(Debug, Clone)]
pub struct PathIntegrals<'a, T, S: ?Sized> {
    model: &'a ValidModel<T>,
    strategy: &'a S,
    theta: T,
    cuts: Vec<T>,
    /// `rates[i][k]` and `cumulative[i][k]` (integral up to `cuts[k]`).
    rates: Vec<Vec<[T; 4]>>,
    cumulative: Vec<Vec<[T; 4]>>,
}

impl<'a, T: Scalar, S: Strategy<T> + ?Sized> PathIntegrals<'a, T, S> {
    pub fn new(model: &'a ValidModel<T>, strategy: &'a S) -> Result<Self, SimError> {
        let theta = model.theta();
        let segs = segments(model, strategy.breakpoints(), T::zero());
        let mut cuts: Vec<T> = segs.iter().map(|s| s.0).collect();
        cuts.push(model.horizon());
        let n = model.n_states();
        let mut rates = vec![Vec::with_capacity(segs.len()); n];
        let mut cumulative = vec![Vec::with_capacity(segs.len() + 1); n];
        for i in 0..n {
            let mut acc = [T::zero(); 4];
            cumulative[i].push(acc);
            for &(a, b) in &segs {
                let piece = model.coeffs_on(i, a, b);
                let h = strategy.allocation(a, i);
                let infeasible = |source| SimError::Allocation { t: a.as_f64(), state: i, source };
                let var = piece.cov.quad_form(h);
                let drift = piece.r + dot(h, &compensated_excess(model, piece, i)) - T::lit(0.5) * var;
                let mut comp = T::zero();
                for j in 0..n {
                    if j != i {
                        if let Some(law) = model.jump_law(i, j) {
                            comp += model.q(i, j) * (law.power_integral(h, theta).map_err(infeasible)? - T::one());
                        }
                    }
                }
                let cost = g_on_piece(model, piece, i, h, theta).map_err(infeasible)?;
                let r = [drift, var, comp, cost];
                for q in 0..4 {
                    acc[q] += r[q] * (b - a);
                }
                rates[i].push(r);
                cumulative[i].push(acc);
            }
        }
        Ok(Self { model, strategy, theta, cuts, rates, cumulative })
    }

    pub fn model(&self) -> &ValidModel<T> {
        self.model
    }

    pub fn strategy(&self) -> &S {
        self.strategy
    }

    fn at(&self, i: usize, t: T) -> [T; 4] {
        let k = self.cuts.partition_point(|&c| c <= t).saturating_sub(1);
        if k >= self.rates[i].len() {
            return self.cumulative[i][self.rates[i].len()];
        }
        let dt = t - self.cuts[k];
        let mut out = self.cumulative[i][k];
        for q in 0..4 {
            out[q] += self.rates[i][k][q] * dt;
        }
        out
    }

    fn integral(&self, i: usize, a: T, b: T) -> [T; 4] {
        let (fa, fb) = (self.at(i, a), self.at(i, b));
        [fb[0] - fa[0], fb[1] - fa[1], fb[2] - fa[2], fb[3] - fa[3]]
    }

    /// Sojourns `(state, start, end)` of a path.
    fn sojourns<'p>(&self, switch_times: &'p [T], regimes: &'p [usize]) -> impl Iterator<Item = (usize, T, T)> + 'p {
        let horizon = self.model.horizon();
        regimes.iter().enumerate().map(move |(k, &i)| {
            let a = if k == 0 { T::zero() } else { switch_times[k - 1] };
            let b = switch_times.get(k).copied().unwrap_or(horizon);
            (i, a, b)
        })
    }

    /// `log(1 + h'z)` at switch `k` of the path.
    fn jump_log(&self, time: T, from: usize, mark: &[T]) -> Result<T, SimError> {
        let h = self.strategy.allocation(time, from);
        let s = T::one() + dot(h, mark);
        if s > T::zero() {
            Ok(s.ln())
        } else {
            Err(SimError::Allocation {
                t: time.as_f64(),
                state: from,
                source: crate::jumps::Infeasible { atom: 0, slack: s.as_f64() },
            })
        }
    }

    /// Simulates one path from `initial` on its own stream.
    pub fn simulate(&self, initial: usize, seed: u64, index: u64) -> Result<PathRecord<T>, SimError> {
        let mut rng = path_rng(seed, index);
        self.simulate_with(initial, &mut rng, seed, index)
    }

    pub fn simulate_with<R: Rng + ?Sized>(
        &self,
        initial: usize,
        rng: &mut R,
        seed: u64,
        index: u64,
    ) -> Result<PathRecord<T>, SimError> {
        let chain = sample_chain(self.model, initial, rng);
        let mut brownian = Vec::with_capacity(chain.regimes.len());
        let mut log_wealth = T::zero();
        let mut variance = T::zero();
        let mut compensator = T::zero();
        let mut running_cost = T::zero();
        for (i, a, b) in self.sojourns(&chain.switch_times, &chain.regimes) {
            let int = self.integral(i, a, b);
            let bm = int[VAR].max(T::zero()).sqrt() * T::standard_normal(rng);
            brownian.push(bm);
            log_wealth += int[DRIFT] + bm;
            variance += int[VAR];
            compensator += int[COMP];
            running_cost += int[COST];
        }
        let mut jump_logs = T::zero();
        for (k, mark) in chain.jump_marks.iter().enumerate() {
            jump_logs += self.jump_log(chain.switch_times[k], chain.regimes[k], mark)?;
        }
        log_wealth += jump_logs;
        let bsum: T = brownian.iter().copied().sum();
        let th = self.theta;
        let log_chi = -th * bsum - th * th / T::lit(2.0) * variance - th * jump_logs - compensator;
        Ok(PathRecord {
            seed,
            index,
            switch_times: chain.switch_times,
            regimes: chain.regimes,
            jump_marks: chain.jump_marks,
            brownian,
            log_wealth,
            log_chi,
            chi: log_chi.exp(),
            running_cost,
        })
    }

    /// `chi_T` recomputed from the stored Brownian integrals, marks and regime path.
    pub fn chi_density(&self, path: &PathRecord<T>) -> Result<T, SimError> {
        let th = self.theta;
        let mut log_chi = T::zero();
        for ((i, a, b), &bm) in self.sojourns(&path.switch_times, &path.regimes).zip(&path.brownian) {
            let int = self.integral(i, a, b);
            log_chi += -th * bm - th * th / T::lit(2.0) * int[VAR] - int[COMP];
        }
        for (k, mark) in path.jump_marks.iter().enumerate() {
            log_chi -= th * self.jump_log(path.switch_times[k], path.regimes[k], mark)?;
        }
        Ok(log_chi.exp())
    }
}

/// One simulated trajectory with its wealth and density.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<T> {
    pub seed: u64,
    pub index: u64,
    pub switch_times: Vec<T>,
    pub regimes: Vec<usize>,
    pub jump_marks: Vec<Vec<T>>,
    /// `int h' Sigma dW` over each sojourn.
    pub brownian: Vec<T>,
    pub log_wealth: T,
    pub log_chi: T,
    pub chi: T,
    /// `int_0^T g(s, X_s, h_s) ds`.
    pub running_cost: T,
}

impl<T: Scalar> PathRecord<T> {
    /// Number of `i -> j` switches.
    pub fn count(&self, i: usize, j: usize) -> usize {
        self.regimes.windows(2).filter(|w| w[0] == i && w[1] == j).count()
    }

    /// Time spent in state `i` up to `horizon`.
    pub fn occupation(&self, i: usize, horizon: T) -> T {
        let mut acc = T::zero();
        for (k, &s) in self.regimes.iter().enumerate() {
            if s == i {
                let a = if k == 0 { T::zero() } else { self.switch_times[k - 1] };
                let b = self.switch_times.get(k).copied().unwrap_or(horizon);
                acc += b - a;
            }
        }
        acc
    }
}

/// Simulates the log-wealth of one path under `strategy`.
pub fn simulate_logwealth<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    initial: usize,
    seed: u64,
    index: u64,
) -> Result<PathRecord<T>, SimError> {
    PathIntegrals::new(model, strategy)?.simulate(initial, seed, index)
}

/// `chi_T` of a recorded path under `strategy`.
pub fn chi_density<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    path: &PathRecord<T>,
) -> Result<T, SimError> {
    PathIntegrals::new(model, strategy)?.chi_density(path)
}
