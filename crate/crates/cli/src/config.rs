//! Run configuration: file values, then flag overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use seqtrack_core::simulate::SimConfig;
use seqtrack_core::{FitTolerances, ModelParams, PhiOptions, RawParams, RootOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: RawParams,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub numerics: Numerics,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Numerics {
    pub epsilon: f64,
    pub ode_tol: f64,
    pub overflow_cap: f64,
    pub root_tol: f64,
    pub root_delta: f64,
    pub fit: FitTolerances,
}

impl Default for Numerics {
    fn default() -> Self {
        let phi = PhiOptions::default();
        let root = RootOptions::default();
        Self {
            epsilon: phi.epsilon,
            ode_tol: phi.tol,
            overflow_cap: phi.overflow_cap,
            root_tol: root.tol,
            root_delta: root.delta,
            fit: FitTolerances::default(),
        }
    }
}

/// Flags shared by every subcommand; each one overrides the matching
/// config entry.
#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// JSON or TOML file with lambda, mu, alpha, c1, c2 and optional
    /// [sim] and [numerics] tables.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub c1: Option<f64>,
    #[arg(long, global = true)]
    pub c2: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Initial posterior mean.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, global = true)]
    pub clip: Option<f64>,
    #[arg(long, global = true)]
    pub noise_substeps: Option<u32>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub ode_tol: Option<f64>,
    #[arg(long, global = true)]
    pub root_tol: Option<f64>,
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let cfg = if is_toml {
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.message()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(cfg)
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load(path)?,
            None => RunConfig::default(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.model.lambda, self.lambda);
        set(&mut cfg.model.mu, self.mu);
        set(&mut cfg.model.alpha, self.alpha);
        set(&mut cfg.model.c1, self.c1);
        set(&mut cfg.model.c2, self.c2);
        set(&mut cfg.sim.dt, self.dt);
        set(&mut cfg.sim.horizon, self.horizon);
        set(&mut cfg.sim.x0, self.x0);
        set(&mut cfg.sim.clip, self.clip);
        set(&mut cfg.numerics.epsilon, self.epsilon);
        set(&mut cfg.numerics.ode_tol, self.ode_tol);
        set(&mut cfg.numerics.root_tol, self.root_tol);
        if let Some(s) = self.seed {
            cfg.sim.seed = s;
        }
        if let Some(n) = self.noise_substeps {
            cfg.sim.noise_substeps = n;
        }
        cfg.sim.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::try_from(self.model)?)
    }

    pub fn phi_options(&self) -> PhiOptions {
        PhiOptions {
            epsilon: self.numerics.epsilon,
            tol: self.numerics.ode_tol,
            overflow_cap: self.numerics.overflow_cap,
            ..PhiOptions::default()
        }
    }

    pub fn root_options(&self) -> RootOptions {
        RootOptions {
            tol: self.numerics.root_tol,
            delta: self.numerics.root_delta,
            ..RootOptions::default()
        }
    }

    pub fn a_init(a: i8) -> Result<i8> {
        if a != 1 && a != -1 {
            bail!("a-init must be 1 or -1, got {a}");
        }
        Ok(a)
    }
}
