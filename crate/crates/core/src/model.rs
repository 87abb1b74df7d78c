//! Problem parameters, the particular solution `Ṽ` and the generator `L`
//! of the posterior-mean diffusion with discounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five inputs of the tracking problem together with the derived
/// constants `beta = 1/(2 lambda + alpha)` and
/// `gamma = (c1 + c2/2)/(beta + c2/2)`.
///
/// `beta` is the total discounted mismatch saved by holding the right guess
/// forever, so switching is only ever worth it when `c1 < beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    lambda: f64,
    mu: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
    beta: f64,
    gamma: f64,
}

/// The raw (unvalidated) inputs, as read from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for RawParams {
    /// `lambda = alpha = 1/4`, `mu = 1`, `c1 = 1/4`, `c2 = 0`.
    fn default() -> Self {
        Self {
            lambda: 0.25,
            mu: 1.0,
            alpha: 0.25,
            c1: 0.25,
            c2: 0.0,
        }
    }
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.lambda, raw.mu, raw.alpha, raw.c1, raw.c2)
    }
}

fn require(key: &'static str, ok: bool, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            key,
            reason: reason.to_string(),
        })
    }
}

impl ModelParams {
    pub fn new(lambda: f64, mu: f64, alpha: f64, c1: f64, c2: f64) -> Result<Self> {
        require(
            "lambda",
            lambda.is_finite() && lambda > 0.0,
            "must be finite and > 0",
        )?;
        require("mu", mu.is_finite() && mu > 0.0, "must be finite and > 0")?;
        require(
            "alpha",
            alpha.is_finite() && alpha > 0.0,
            "must be finite and > 0",
        )?;
        require("c1", c1.is_finite() && c1 >= 0.0, "must be finite and >= 0")?;
        require("c2", c2.is_finite() && c2 >= 0.0, "must be finite and >= 0")?;
        require("c1", c1 + c2 > 0.0, "c1 + c2 must be > 0")?;

        let beta = 1.0 / (2.0 * lambda + alpha);
        let gamma = (c1 + 0.5 * c2) / (beta + 0.5 * c2);
        Ok(Self {
            lambda,
            mu,
            alpha,
            c1,
            c2,
            beta,
            gamma,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn c2(&self) -> f64 {
        self.c2
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn raw(&self) -> RawParams {
        RawParams {
            lambda: self.lambda,
            mu: self.mu,
            alpha: self.alpha,
            c1: self.c1,
            c2: self.c2,
        }
    }

    /// Copy with a different fixed switching cost.
    pub fn with_c1(&self, c1: f64) -> Result<Self> {
        Self::new(self.lambda, self.mu, self.alpha, c1, self.c2)
    }

    pub fn regime(&self) -> Regime {
        if self.c1 < self.beta {
            Regime::Switching
        } else {
            Regime::NeverSwitch
        }
    }

    /// Cost of never switching away from `a = 1` when the posterior mean
    /// starts at `x`: `1/(2 alpha) - x/(2 (2 lambda + alpha))`.
    pub fn v_tilde(&self, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::Domain {
                what: "v_tilde",
                x,
                lo: -1.0,
                hi: 1.0,
            });
        }
        Ok(self.v_tilde_unchecked(x))
    }

    pub(crate) fn v_tilde_unchecked(&self, x: f64) -> f64 {
        0.5 / self.alpha - 0.5 * x * self.beta
    }

    /// Slope of `Ṽ`, constant.
    pub fn v_tilde_slope(&self) -> f64 {
        -0.5 * self.beta
    }

    /// `L f(x) = mu^2/2 (1 - x^2)^2 f'' - 2 lambda x f' - alpha f` for the
    /// supplied value and derivatives at an interior point.
    pub fn l_residual(&self, x: f64, f: f64, f1: f64, f2: f64) -> Result<f64> {
        if !(x > -1.0 && x < 1.0) {
            return Err(Error::Domain {
                what: "l_residual",
                x,
                lo: -1.0,
                hi: 1.0,
            });
        }
        Ok(self.l_unchecked(x, f, f1, f2))
    }

    pub(crate) fn l_unchecked(&self, x: f64, f: f64, f1: f64, f2: f64) -> f64 {
        let s = 1.0 - x * x;
        0.5 * self.mu * self.mu * s * s * f2 - 2.0 * self.lambda * x * f1 - self.alpha * f
    }

    /// Second derivative forced by `L f = 0`:
    /// `f'' = 2 (2 lambda x f' + alpha f) / (mu^2 (1 - x^2)^2)`.
    pub fn homogeneous_second_derivative(&self, x: f64, f: f64, f1: f64) -> f64 {
        let s = (1.0 - x) * (1.0 + x);
        2.0 * (2.0 * self.lambda * x * f1 + self.alpha * f) / (self.mu * self.mu * s * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Switching,
    NeverSwitch,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Switching => "switching",
            Regime::NeverSwitch => "never_switch",
        })
    }
}
