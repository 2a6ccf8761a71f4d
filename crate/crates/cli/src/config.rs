//! Run configuration: one JSON document per run, paths resolved against its directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use rs_regime::hjb::{SolverConfig, Steps};
use rs_regime::optim::NewtonOptions;
use rs_regime::simulate::McConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the subcommand when present.
    #[serde(default)]
    pub command: Option<String>,
    pub model_path: PathBuf,
    /// Output directory.
    pub output_path: PathBuf,
    /// Replaces the model's risk aversion.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub mc: Option<Mc>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub strategy: StrategySpec,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n_steps: Option<usize>,
    pub dt: Option<f64>,
    #[serde(default)]
    pub step_doubling: bool,
}

fn default_k_sigma() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mc {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
    /// Every state when absent.
    #[serde(default)]
    pub initial_state: Option<usize>,
    /// Slack added to the mean-variance verdict for its `O(theta^2)` remainder.
    #[serde(default)]
    pub mean_variance_allowance: Option<f64>,
    /// Writes one CSV row per simulated path.
    #[serde(default)]
    pub dump_paths: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub grad: f64,
    pub ode: f64,
    pub feasibility_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { grad: 1e-10, ode: 1e-8, feasibility_margin: 1e-10 }
    }
}

/// The allocation simulated by the Monte Carlo commands.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    /// Solve the HJB equation first and use its `h*`.
    #[default]
    Optimal,
    /// A surface JSON written by `solve`.
    Surface { path: PathBuf },
    /// Either one allocation for every state or one per state.
    Constant { h: ConstantH },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ConstantH {
    Shared(Vec<f64>),
    PerState(Vec<Vec<f64>>),
}

/// Scalar fields a command-line flag may replace.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_path: Option<PathBuf>,
    pub theta: Option<f64>,
    pub n_steps: Option<usize>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &overrides.output_path {
            cfg.output_path = p.clone();
        } else {
            cfg.output_path = base.join(&cfg.output_path);
        }
        cfg.model_path = base.join(&cfg.model_path);
        if let StrategySpec::Surface { path } = &mut cfg.strategy {
            *path = base.join(&*path);
        }
        if overrides.theta.is_some() {
            cfg.theta = overrides.theta;
        }
        if let Some(n) = overrides.n_steps {
            cfg.grid = Grid { n_steps: Some(n), dt: None, ..cfg.grid };
        }
        if let Some(mc) = &mut cfg.mc {
            mc.n_paths = overrides.n_paths.unwrap_or(mc.n_paths);
            mc.seed = overrides.seed.unwrap_or(mc.seed);
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let t = &self.tolerances;
        if !(t.grad > 0.0 && t.ode > 0.0 && t.feasibility_margin > 0.0) {
            bail!("all tolerances must be positive");
        }
        match (self.grid.n_steps, self.grid.dt) {
            (Some(_), Some(_)) => bail!("grid: give n_steps or dt, not both"),
            (Some(n), None) if n < 2 => bail!("grid: n_steps must be at least 2"),
            (None, Some(dt)) if !(dt > 0.0) => bail!("grid: dt must be positive"),
            _ => {}
        }
        if let Some(mc) = &self.mc {
            if mc.n_paths < 2 {
                bail!("mc: n_paths must be at least 2");
            }
            if !(mc.k_sigma > 0.0) {
                bail!("mc: k_sigma must be positive");
            }
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig<f64> {
        let steps = match (self.grid.n_steps, self.grid.dt) {
            (_, Some(dt)) => Steps::Width(dt),
            (Some(n), None) => Steps::Count(n),
            (None, None) => SolverConfig::<f64>::default().steps,
        };
        SolverConfig {
            steps,
            newton: self.newton(),
            tol_ode: self.tolerances.ode,
            step_doubling: self.grid.step_doubling,
            ..SolverConfig::default()
        }
    }

    pub fn newton(&self) -> NewtonOptions<f64> {
        NewtonOptions {
            tol_grad: self.tolerances.grad,
            feasibility_margin: self.tolerances.feasibility_margin,
            ..NewtonOptions::default()
        }
    }

    /// The Monte Carlo section; seeds are never drawn from the clock.
    pub fn mc(&self) -> Result<&Mc> {
        self.mc.as_ref().context("this command needs an \"mc\" section with n_paths and seed")
    }
}

impl Mc {
    pub fn config(&self, initial_state: usize) -> McConfig {
        McConfig { k_sigma: self.k_sigma, ..McConfig::new(self.n_paths, self.seed).from_state(initial_state) }
    }
}
