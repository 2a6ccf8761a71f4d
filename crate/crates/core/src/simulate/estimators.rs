//! Monte Carlo estimators with standard errors and verdicts against analytic targets.

use rayon::prelude::*;
use serde::Serialize;

use super::measure::{effective_generator, klebaner_bound};
use super::path::{PathIntegrals, PathRecord};
use super::SimError;
use crate::market::ValidModel;
use crate::policy::{ConstantStrategy, Strategy};
use crate::scalar::{pairwise_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Verdicts allow `k_sigma` standard errors.
    pub k_sigma: f64,
    pub initial_state: usize,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self { n_paths, seed, k_sigma: 3.0, initial_state: 0 }
    }

    pub fn from_state(self, initial_state: usize) -> Self {
        Self { initial_state, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|estimate - target| <= k SE + allowance`.
    TwoSided,
    /// `estimate <= target + k SE + allowance`.
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub target: Option<f64>,
    pub k_sigma: f64,
    pub allowance: f64,
    pub comparison: Comparison,
    /// `None` without a target.
    pub pass: Option<bool>,
    /// Largest single weight over the sum of weights, for importance-weighted estimates.
    pub max_weight_ratio: Option<f64>,
}

impl McReport {
    pub fn new(label: impl Into<String>, estimate: f64, std_error: f64, cfg: &McConfig) -> Self {
        Self {
            label: label.into(),
            estimate,
            std_error,
            n_paths: cfg.n_paths,
            seed: cfg.seed,
            target: None,
            k_sigma: cfg.k_sigma,
            allowance: 0.0,
            comparison: Comparison::TwoSided,
            pass: None,
            max_weight_ratio: None,
        }
    }

    pub fn against(mut self, target: f64, comparison: Comparison, allowance: f64) -> Self {
        self.target = Some(target);
        self.comparison = comparison;
        self.allowance = allowance;
        let slack = self.k_sigma * self.std_error + allowance;
        self.pass = Some(match comparison {
            Comparison::TwoSided => (self.estimate - target).abs() <= slack,
            Comparison::AtMost => self.estimate <= target + slack,
        });
        self
    }

    /// `(estimate - target) / std_error`.
    pub fn z_score(&self) -> Option<f64> {
        self.target.map(|t| (self.estimate - t) / self.std_error)
    }

    pub fn passed(&self) -> bool {
        self.pass.unwrap_or(false)
    }
}

/// Sample mean and standard error, shifted by the first value so identical samples give
/// an exactly zero error.
pub fn mean_and_se<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let x0 = xs[0];
    let d: Vec<T> = xs.iter().map(|&x| x - x0).collect();
    let d2: Vec<T> = d.iter().map(|&x| x * x).collect();
    let nf = T::lit(n as f64);
    let s1 = pairwise_sum(&d);
    let mean = x0 + s1 / nf;
    if n < 2 {
        return (mean, T::nan());
    }
    let var = ((pairwise_sum(&d2) - s1 * s1 / nf) / (nf - T::one())).max(T::zero());
    (mean, (var / nf).sqrt())
}

/// Ratio `sum a / sum b` with its delta-method standard error.
pub fn ratio_and_se<T: Scalar>(a: &[T], b: &[T]) -> (T, T) {
    let n = T::lit(a.len() as f64);
    let (sa, sb) = (pairwise_sum(a), pairwise_sum(b));
    let ratio = sa / sb;
    let resid: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - ratio * y).collect();
    let (_, se) = mean_and_se(&resid);
    (ratio, se / (sb / n))
}

fn check<T: Scalar>(model: &ValidModel<T>, cfg: &McConfig) -> Result<(), SimError> {
    if cfg.n_paths < 2 {
        return Err(SimError::Config(format!("n_paths must be at least 2, got {}", cfg.n_paths)));
    }
    if cfg.initial_state >= model.n_states() {
        return Err(SimError::Config(format!(
            "initial state {} out of range for {} states",
            cfg.initial_state,
            model.n_states()
        )));
    }
    if !(cfg.k_sigma > 0.0) {
        return Err(SimError::Config("k_sigma must be positive".into()));
    }
    Ok(())
}

/// Simulates `cfg.n_paths` paths in parallel and maps each through `f`, returning the
/// results in path order.
pub fn map_paths<T, S, X, F>(model: &ValidModel<T>, strategy: &S, cfg: &McConfig, f: F) -> Result<Vec<X>, SimError>
where
    T: Scalar,
    S: Strategy<T> + ?Sized,
    X: Send,
    F: Fn(&PathRecord<T>) -> X + Sync,
{
    check(model, cfg)?;
    let integ = PathIntegrals::new(model, strategy)?;
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| integ.simulate(cfg.initial_state, cfg.seed, p).map(|rec| f(&rec)))
        .collect()
}

/// Every path record; meant for small runs and debugging dumps.
pub fn simulate_paths<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    cfg: &McConfig,
) -> Result<Vec<PathRecord<T>>, SimError> {
    map_paths(model, strategy, cfg, Clone::clone)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    /// Estimate of `E[V_T^-theta]`.
    pub report: McReport,
    /// `J = -log(estimate) / theta` and its delta-method standard error.
    pub j_theta: f64,
    pub j_std_error: f64,
}

/// Estimates `E[exp(-theta log V_T)]`, optionally against a target value.
pub fn estimate_criterion<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    cfg: &McConfig,
    target: Option<f64>,
) -> Result<CriterionReport, SimError> {
    let theta = model.theta();
    let xs = map_paths(model, strategy, cfg, |p| (-theta * p.log_wealth).exp())?;
    let (mean, se) = mean_and_se(&xs);
    let (mean, se) = (mean.as_f64(), se.as_f64());
    let mut report = McReport::new("criterion", mean, se, cfg);
    if let Some(t) = target {
        report = report.against(t, Comparison::TwoSided, 0.0);
    }
    let th = theta.as_f64();
    Ok(CriterionReport { report, j_theta: -mean.ln() / th, j_std_error: se / (mean * th) })
}

fn max_weight_ratio<T: Scalar>(w: &[T]) -> f64 {
    let total = pairwise_sum(w);
    (w.iter().copied().fold(T::zero(), T::max) / total).as_f64()
}

/// `E[chi_T] = 1`.
pub fn verify_martingale<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    cfg: &McConfig,
) -> Result<McReport, SimError> {
    let chi = map_paths(model, strategy, cfg, |p| p.chi)?;
    let (mean, se) = mean_and_se(&chi);
    let mut rep = McReport::new("E[chi_T]", mean.as_f64(), se.as_f64(), cfg).against(1.0, Comparison::TwoSided, 0.0);
    rep.max_weight_ratio = Some(max_weight_ratio(&chi));
    Ok(rep)
}

/// Importance-weighted estimates of the tilted chain for one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateTilt {
    pub state: usize,
    /// `E[chi sum_j N_ij] / E[chi O_i]` against `sum_j Q^h(i, j)`.
    pub intensity: McReport,
    /// `(j, rate, destination)`: `E[chi N_ij] / E[chi O_i]` against `Q^h(i, j)`, and
    /// `E[chi N_ij] / E[chi sum_k N_ik]` against `Q^h(i, j) / sum_k Q^h(i, k)`.
    pub transitions: Vec<(usize, McReport, McReport)>,
}

impl StateTilt {
    pub fn passed(&self) -> bool {
        self.intensity.passed() && self.transitions.iter().all(|(_, a, b)| a.passed() && b.passed())
    }
}

/// Checks that reweighting by `chi_T` turns the generator `Q` into `Q^h`, for every state
/// the chain visits. Needs a time-constant strategy so that `Q^h` is constant.
pub fn verify_generator_change<T: Scalar>(
    model: &ValidModel<T>,
    strategy: &ConstantStrategy<T>,
    cfg: &McConfig,
) -> Result<Vec<StateTilt>, SimError> {
    let n = model.n_states();
    let horizon = model.horizon();
    let rows = map_paths(model, strategy, cfg, |p| {
        let mut counts = vec![T::zero(); n * n];
        for w in p.regimes.windows(2) {
            counts[w[0] * n + w[1]] += T::one();
        }
        let occ: Vec<T> = (0..n).map(|i| p.occupation(i, horizon)).collect();
        (p.chi, counts, occ)
    })?;
    // feasibility was checked per state when the paths were set up
    let qh = effective_generator(model, strategy, T::zero()).map_err(|source| SimError::Allocation {
        t: 0.0,
        state: 0,
        source,
    })?;
    let mut out = Vec::new();
    for i in 0..n {
        let b: Vec<T> = rows.iter().map(|(c, _, o)| *c * o[i]).collect();
        if !(pairwise_sum(&b) > T::zero()) || !(model.intensity(i) > T::zero()) {
            continue;
        }
        let total: Vec<T> =
            rows.iter().map(|(c, k, _)| *c * (0..n).filter(|&j| j != i).map(|j| k[i * n + j]).sum::<T>()).collect();
        let tilted_rate = -qh[(i, i)];
        let (r, se) = ratio_and_se(&total, &b);
        let intensity = McReport::new(format!("tilted intensity of state {i}"), r.as_f64(), se.as_f64(), cfg).against(
            tilted_rate.as_f64(),
            Comparison::TwoSided,
            0.0,
        );
        let mut transitions = Vec::new();
        for j in 0..n {
            if j == i || !(model.q(i, j) > T::zero()) {
                continue;
            }
            let a: Vec<T> = rows.iter().map(|(c, k, _)| *c * k[i * n + j]).collect();
            let (r, se) = ratio_and_se(&a, &b);
            let rate = McReport::new(format!("Q^h({i},{j})"), r.as_f64(), se.as_f64(), cfg).against(
                qh[(i, j)].as_f64(),
                Comparison::TwoSided,
                0.0,
            );
            let (r, se) = ratio_and_se(&a, &total);
            let dest = McReport::new(format!("destination {i}->{j}"), r.as_f64(), se.as_f64(), cfg).against(
                (qh[(i, j)] / tilted_rate).as_f64(),
                Comparison::TwoSided,
                0.0,
            );
            transitions.push((j, rate, dest));
        }
        out.push(StateTilt { state: i, intensity, transitions });
    }
    Ok(out)
}

/// `E[chi_T log chi_T] <= klebaner_bound * T`.
pub fn verify_entropy_bound<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    cfg: &McConfig,
) -> Result<McReport, SimError> {
    let xs = map_paths(model, strategy, cfg, |p| p.chi * p.log_chi)?;
    let bound = klebaner_bound(model, strategy).map_err(|source| SimError::Allocation { t: 0.0, state: 0, source })?;
    let (mean, se) = mean_and_se(&xs);
    Ok(McReport::new("E[chi_T log chi_T]", mean.as_f64(), se.as_f64(), cfg).against(
        (bound * model.horizon()).as_f64(),
        Comparison::AtMost,
        0.0,
    ))
}

/// `J_theta - (E[log V_T] - theta Var[log V_T] / 2)` against zero with an allowance for the
/// `O(theta^2)` remainder.
pub fn verify_mean_variance<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    cfg: &McConfig,
    allowance: f64,
) -> Result<McReport, SimError> {
    let theta = model.theta();
    let logs = map_paths(model, strategy, cfg, |p| p.log_wealth)?;
    let e: Vec<T> = logs.iter().map(|&l| (-theta * l).exp()).collect();
    let (me, se_e) = mean_and_se(&e);
    let j = -me.ln() / theta;
    let se_j = se_e / (me * theta);
    let (ml, _) = mean_and_se(&logs);
    let half = theta / T::lit(2.0);
    let psi: Vec<T> = logs.iter().map(|&l| l - half * (l - ml) * (l - ml)).collect();
    let (mv, se_mv) = mean_and_se(&psi);
    let nf = T::lit(logs.len() as f64);
    // psi is centred on the biased sample variance; rescale to the unbiased one
    let mv = ml - (ml - mv) * nf / (nf - T::one());
    let se = (se_j * se_j + se_mv * se_mv).sqrt();
    Ok(McReport::new("J_theta - mean-variance", (j - mv).as_f64(), se.as_f64(), cfg).against(
        0.0,
        Comparison::TwoSided,
        allowance,
    ))
}
