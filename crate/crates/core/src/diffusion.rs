//! Scale function, speed measure and boundary behaviour of the posterior
//! mean diffusion `dM = -2 lambda M dt + mu (1 - M^2) dW`.
//!
//! With `k = 2 lambda / mu^2` and `v(y) = 1 / (1 - y^2)` the scale density is
//! `p'(y) = exp(k v(y))`, which overflows long before `|y| = 1`. Everything
//! here is computed through the bounded factor
//!
//! ```text
//! q(x) = p(x) / p'(x) = ∫_0^x exp(-k (v(x) - v(s))) ds,
//! ```
//!
//! evaluated with the substitution `r = v(x) - v(s)` once the integrand
//! becomes a narrow boundary layer at `s = x`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::montecarlo::CostEstimate;
use crate::numerics::quad;
use crate::simulate::{aux_stream, PathStream, SimConfig};

/// Beyond `exp(-R_CUT)` the remaining mass of `q` is below f64 resolution.
const R_CUT: f64 = 45.0;
const QUAD_REL: f64 = 1e-13;
const QUAD_INTERVALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleSpeed {
    params: ModelParams,
    k: f64,
    /// `|x|` beyond which `p` is reported as infinite.
    cap: f64,
}

impl ScaleSpeed {
    pub const DEFAULT_CAP: f64 = 1.0 - 1e-8;

    pub fn new(params: &ModelParams) -> Self {
        Self::with_cap(params, Self::DEFAULT_CAP).expect("default cap is valid")
    }

    pub fn with_cap(params: &ModelParams, cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap < 1.0) {
            return Err(Error::InvalidParameter {
                key: "x_cap",
                reason: format!("must lie in (0, 1), got {cap}"),
            });
        }
        Ok(Self {
            params: *params,
            k: 2.0 * params.lambda() / (params.mu() * params.mu()),
            cap,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    fn open_interval(&self, what: &'static str, x: f64) -> Result<()> {
        if x.abs() < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain {
                what,
                x,
                lo: -1.0,
                hi: 1.0,
            })
        }
    }

    /// `1 / (1 - x^2)` from the complement `1 - |x|`.
    fn v(x: f64) -> f64 {
        let w = 1.0 - x.abs();
        1.0 / (w * (2.0 - w))
    }

    /// `q(|x|)`, see the module documentation.
    fn q(&self, x: f64) -> f64 {
        let x = x.abs();
        if x == 0.0 {
            return 0.0;
        }
        let k = self.k;
        let vx = Self::v(x);
        if k * (vx - 1.0) <= R_CUT {
            let f = |s: f64| (-k * (vx - Self::v(s))).exp();
            return quad::integrate(f, 0.0, x, 0.0, QUAD_REL, QUAD_INTERVALS).value;
        }
        // ds/dr = -1 / (2 s (v(x) - r)^2)
        let f = |r: f64| {
            let u = vx - r;
            let s = (1.0 - 1.0 / u).sqrt();
            (-k * r).exp() / (2.0 * s * u * u)
        };
        quad::integrate(f, 0.0, R_CUT / k, 0.0, QUAD_REL, QUAD_INTERVALS).value
    }

    /// Scale density `p'(x) = exp(k / (1 - x^2))`; overflows to `+inf`.
    pub fn p_prime(&self, x: f64) -> Result<f64> {
        self.open_interval("p_prime", x)?;
        Ok((self.k * Self::v(x)).exp())
    }

    pub fn ln_p_prime(&self, x: f64) -> Result<f64> {
        self.open_interval("ln_p_prime", x)?;
        Ok(self.k * Self::v(x))
    }

    /// Scale function `p(x) = ∫_0^x p'(y) dy`, odd, with `p(0) = 0`.
    /// Reported as `±inf` for `|x|` beyond the cap or on overflow.
    pub fn p(&self, x: f64) -> Result<f64> {
        self.open_interval("scale_function", x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        if x.abs() > self.cap {
            return Ok(f64::INFINITY.copysign(x));
        }
        let ln = self.k * Self::v(x) + self.q(x).ln();
        Ok(ln.exp().copysign(x))
    }

    /// `ln |p(x)|`, finite on the whole open interval except at zero.
    pub fn ln_abs_p(&self, x: f64) -> Result<f64> {
        self.open_interval("ln_abs_p", x)?;
        Ok(self.k * Self::v(x) + self.q(x).ln())
    }

    /// Speed density `m(x) = 2 / (p'(x) mu^2 (1 - x^2)^2)`.
    pub fn m_density(&self, x: f64) -> Result<f64> {
        self.open_interval("m_density", x)?;
        let v = Self::v(x);
        let mu2 = self.params.mu() * self.params.mu();
        Ok(2.0 * v * v * (-self.k * v).exp() / mu2)
    }

    /// `p(x) / (p'(x) (1 - x^2)^2)` for `0 < x < 1`.
    pub fn hopital_ratio(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain {
                what: "hopital_ratio",
                x,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let v = Self::v(x);
        Ok(self.q(x) * v * v)
    }

    /// `p(y) m(y)`; bounded, tending to `1 / (2 lambda)` at the boundary.
    pub fn entrance_integrand(&self, y: f64) -> Result<f64> {
        self.open_interval("entrance_integrand", y)?;
        let v = Self::v(y);
        let mu2 = self.params.mu() * self.params.mu();
        Ok(2.0 * self.q(y) * v * v / mu2 * y.signum())
    }

    /// Limit of [`hopital_ratio`](Self::hopital_ratio) at the boundary,
    /// `mu^2 / (4 lambda)`.
    pub fn hopital_limit(&self) -> f64 {
        0.5 / self.k
    }
}

pub fn scale_function(params: &ModelParams, x: f64) -> Result<f64> {
    ScaleSpeed::new(params).p(x)
}

pub fn hopital_ratio(params: &ModelParams, x: f64) -> Result<f64> {
    ScaleSpeed::new(params).hopital_ratio(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntranceCheck {
    pub caps: Vec<f64>,
    /// `∫_0^cap p(y) m(y) dy` for each cap.
    pub values: Vec<f64>,
    /// `values[i + 1] - values[i]`.
    pub differences: Vec<f64>,
    pub tolerance: f64,
    /// Last successive difference below the tolerance.
    pub converged: bool,
}

/// Caps `1 - 10^-j` for `j = 1..=digits`.
pub fn default_caps(digits: u32) -> Vec<f64> {
    (1..=digits)
        .map(|j| 1.0 - 10f64.powi(-(j as i32)))
        .collect()
}

pub fn entrance_boundary_check(
    params: &ModelParams,
    caps: &[f64],
    tolerance: f64,
) -> Result<EntranceCheck> {
    let ss = ScaleSpeed::new(params);
    let mut prev = 0.0;
    let mut total = 0.0;
    let mut values = Vec::with_capacity(caps.len());
    for &cap in caps {
        if !(cap > prev && cap < 1.0) {
            return Err(Error::InvalidParameter {
                key: "x_cap",
                reason: format!("caps must increase inside (0, 1), got {cap} after {prev}"),
            });
        }
        let piece = quad::integrate(
            |y| ss.entrance_integrand(y).unwrap_or(f64::NAN),
            prev,
            cap,
            1e-14,
            1e-12,
            QUAD_INTERVALS,
        );
        if !piece.value.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "entrance integral not finite on [{prev}, {cap}]"
            )));
        }
        total += piece.value;
        values.push(total);
        prev = cap;
    }
    let differences: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let converged = differences.last().is_some_and(|d| d.abs() < tolerance);
    Ok(EntranceCheck {
        caps: caps.to_vec(),
        values,
        differences,
        tolerance,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceEstimate {
    pub start: f64,
    pub level: f64,
    pub estimate: CostEstimate,
    /// Paths that reached the level before the horizon.
    pub hits: usize,
}

/// Monte Carlo estimate of `E_x[exp(-alpha T_y)]` for the simulated
/// posterior mean started at `x = config.x0`. A crossing between grid points
/// is detected with the Brownian-bridge probability
/// `exp(-2 (M_k - y)(M_{k+1} - y) / (sigma^2 dt))`, `sigma = mu (1 - M_k^2)`.
/// Paths that have not reached `y` by the horizon contribute zero.
pub fn laplace_transform_mc(
    params: &ModelParams,
    level: f64,
    config: &SimConfig,
    n_paths: usize,
) -> Result<LaplaceEstimate> {
    config.validate()?;
    let start = config.x0;
    if !(level.abs() < 1.0) || level == start {
        return Err(Error::InvalidParameter {
            key: "level",
            reason: format!("must lie in (-1, 1) and differ from x0 = {start}"),
        });
    }
    let above = start > level;
    let alpha = params.alpha();
    let mut samples = Vec::with_capacity(n_paths);
    let mut hits = 0;
    for path in 0..n_paths as u64 {
        let mut aux = aux_stream(config.seed, path);
        let mut hit = None;
        let mut prev: Option<(f64, f64)> = None;
        for step in PathStream::new(params, config, path)? {
            if let Some((t0, m0)) = prev {
                let (d0, d1) = if above {
                    (m0 - level, step.m - level)
                } else {
                    (level - m0, level - step.m)
                };
                if d1 <= 0.0 {
                    hit = Some(t0 + config.dt * d0 / (d0 - d1));
                } else {
                    let sigma = params.mu() * (1.0 - m0 * m0);
                    let crossed = (-2.0 * d0 * d1 / (sigma * sigma * config.dt)).exp();
                    if aux.random::<f64>() < crossed {
                        hit = Some(t0 + 0.5 * config.dt);
                    }
                }
                if hit.is_some() || (-alpha * step.t).exp() < 1e-14 {
                    break;
                }
            }
            prev = Some((step.t, step.m));
        }
        match hit {
            Some(t) => {
                hits += 1;
                samples.push((-alpha * t).exp());
            }
            None => samples.push(0.0),
        }
    }
    let horizon = config.steps() as f64 * config.dt;
    Ok(LaplaceEstimate {
        start,
        level,
        estimate: CostEstimate::from_samples(&samples, (-alpha * horizon).exp())?,
        hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;

    fn reference() -> ModelParams {
        ModelParams::try_from(RawParams::default()).unwrap()
    }

    #[test]
    fn scale_function_is_odd_and_increasing() {
        let ss = ScaleSpeed::new(&reference());
        assert_eq!(ss.p(0.0).unwrap(), 0.0);
        let mut last = f64::NEG_INFINITY;
        for i in -19..=19 {
            let x = i as f64 * 0.05;
            let p = ss.p(x).unwrap();
            assert!(p > last);
            assert_eq!(p, -ss.p(-x).unwrap());
            last = p;
        }
        assert!(ss.p(1.0).is_err());
        assert_eq!(ss.p(1.0 - 1e-9).unwrap(), f64::INFINITY);
        assert_eq!(ss.p(-(1.0 - 1e-9)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn both_quadrature_branches_agree_at_the_switch() {
        // k = 0.5: the substitution takes over at v(x) = 91.
        let ss = ScaleSpeed::new(&reference());
        let x = (1.0 - 1.0 / 91.0f64).sqrt();
        let below = ss.hopital_ratio(x * (1.0 - 1e-12)).unwrap();
        let above = ss.hopital_ratio(x * (1.0 + 1e-12)).unwrap();
        assert!((below / above - 1.0).abs() < 1e-9, "{below} {above}");
    }

    #[test]
    fn densities_are_positive() {
        let ss = ScaleSpeed::new(&reference());
        for x in [-0.99, -0.3, 0.0, 0.4, 0.95] {
            assert!(ss.p_prime(x).unwrap() >= 1.0);
            assert!(ss.m_density(x).unwrap() > 0.0);
        }
        assert!((ss.m_density(0.0).unwrap() - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn hopital_limit_from_parameters() {
        let p = ModelParams::new(0.5, 1.0, 0.25, 0.25, 0.0).unwrap();
        assert_eq!(ScaleSpeed::new(&p).hopital_limit(), 0.5);
        assert!(hopital_ratio(&p, 0.0).is_err());
    }

    #[test]
    fn entrance_check_rejects_bad_caps() {
        let p = reference();
        assert!(entrance_boundary_check(&p, &[0.9, 0.5], 1e-6).is_err());
        assert!(entrance_boundary_check(&p, &[1.0], 1e-6).is_err());
    }

    #[test]
    fn laplace_rejects_degenerate_level() {
        let cfg = SimConfig {
            x0: 0.5,
            ..SimConfig::default()
        };
        assert!(laplace_transform_mc(&reference(), 0.5, &cfg, 10).is_err());
    }
}
