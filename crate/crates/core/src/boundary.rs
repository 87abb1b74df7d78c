//! Continuous and smooth fit at `-B`.
//!
//! With `V = Ṽ - K φ`, the two fit conditions
//!
//! ```text
//! V(-B) = V(B) + c1 + c2/2 (1 - B)
//! V'(-B) = -V'(B) + c2/2
//! ```
//!
//! are equivalent to `K = h1(B) = h2(B)` where
//!
//! ```text
//! h1(x) = ((beta + c2/2) x - c1 - c2/2) / (φ(-x) - φ(x))
//! h2(x) = (beta + c2/2) / (-φ'(-x) - φ'(x))
//! ```
//!
//! `h1 - h2` is negative just above `gamma` (where `h1` vanishes) and
//! positive near `1`, so `B` is found by bracketing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime};
use crate::numerics::roots::{find_root, RootError};
use crate::ode::PhiSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RootOptions {
    /// Bracket width at which root refinement stops.
    pub tol: f64,
    /// Offset of the left bracket end from `gamma`.
    pub delta: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            delta: 1e-6,
            max_iter: 300,
        }
    }
}

/// The threshold pair. `k` is stated for the `φ` normalised by
/// `φ(1 - epsilon) = phi_norm`; `b` does not depend on the normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeBoundary {
    pub regime: Regime,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub phi_norm: f64,
}

impl FreeBoundary {
    pub fn never_switch(phi_norm: f64) -> Self {
        Self {
            regime: Regime::NeverSwitch,
            k: None,
            b: None,
            phi_norm,
        }
    }

    /// An arbitrary switching pair, not necessarily a solution. Used to probe
    /// how the fit checks react to a wrong threshold.
    pub fn switching(k: f64, b: f64, phi_norm: f64) -> Self {
        Self {
            regime: Regime::Switching,
            k: Some(k),
            b: Some(b),
            phi_norm,
        }
    }

    pub fn pair(&self) -> Option<(f64, f64)> {
        self.k.zip(self.b)
    }
}

fn check_arg(phi: &PhiSolution, what: &'static str, x: f64) -> Result<()> {
    let (lo, hi) = phi.coverage();
    let upper = hi.min(-lo);
    if !(x > 0.0 && x <= upper) {
        return Err(Error::Domain {
            what,
            x,
            lo: 0.0,
            hi: upper,
        });
    }
    Ok(())
}

/// Candidate `K` from continuous fit at threshold `x`.
pub fn h1(params: &ModelParams, phi: &PhiSolution, x: f64) -> Result<f64> {
    check_arg(phi, "h1", x)?;
    let (fp, _) = phi.phi_at(x)?;
    let (fm, _) = phi.phi_at(-x)?;
    let half_c2 = 0.5 * params.c2();
    Ok(((params.beta() + half_c2) * x - params.c1() - half_c2) / (fm - fp))
}

/// Candidate `K` from smooth fit at threshold `x`.
pub fn h2(params: &ModelParams, phi: &PhiSolution, x: f64) -> Result<f64> {
    check_arg(phi, "h2", x)?;
    let (_, dp) = phi.phi_at(x)?;
    let (_, dm) = phi.phi_at(-x)?;
    let denom = -dm - dp;
    if !(denom > 0.0) {
        return Err(Error::DegenerateDenominator { x, value: denom });
    }
    Ok((params.beta() + 0.5 * params.c2()) / denom)
}

pub fn solve_free_boundary(
    params: &ModelParams,
    phi: &PhiSolution,
    opts: &RootOptions,
) -> Result<FreeBoundary> {
    if params.regime() == Regime::NeverSwitch {
        return Ok(FreeBoundary::never_switch(phi.normalization()));
    }
    let (lo_cov, hi_cov) = phi.coverage();
    let lo = params.gamma() + opts.delta;
    let hi = hi_cov.min(-lo_cov);
    let no_bracket = |d_lo: f64, d_hi: f64| Error::NoRootBracket { lo, hi, d_lo, d_hi };
    if !(lo < hi) {
        return Err(no_bracket(f64::NAN, f64::NAN));
    }

    let d = |x: f64| -> f64 {
        match (h1(params, phi, x), h2(params, phi, x)) {
            (Ok(a), Ok(b)) => a - b,
            _ => f64::NAN,
        }
    };
    let root = find_root(d, lo, hi, opts.tol, opts.max_iter).map_err(|e| match e {
        RootError::NotBracketed { f_lo, f_hi } => no_bracket(f_lo, f_hi),
        RootError::NonFinite { x } => {
            Error::InvariantViolation(format!("h1 - h2 not finite at {x}"))
        }
    })?;
    let b = root.x;
    let k = h1(params, phi, b)?;
    if !(k > 0.0 && b > params.gamma() && b < 1.0) {
        return Err(Error::InvariantViolation(format!(
            "solution K = {k}, B = {b} outside (0, inf) x (gamma, 1)"
        )));
    }
    Ok(FreeBoundary::switching(k, b, phi.normalization()))
}

/// `V*(x, a)` assembled from `Ṽ`, `φ` and the threshold pair.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    params: ModelParams,
    phi: PhiSolution,
    fb: FreeBoundary,
}

impl ValueFunction {
    pub fn new(params: ModelParams, phi: PhiSolution, fb: FreeBoundary) -> Self {
        Self { params, phi, fb }
    }

    /// Solves `(K, B)` and wraps the result.
    pub fn solve(params: ModelParams, phi: PhiSolution, opts: &RootOptions) -> Result<Self> {
        let fb = solve_free_boundary(&params, &phi, opts)?;
        Ok(Self::new(params, phi, fb))
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn phi(&self) -> &PhiSolution {
        &self.phi
    }
    pub fn free_boundary(&self) -> &FreeBoundary {
        &self.fb
    }

    /// Interval on which `value_at` is defined.
    pub fn domain(&self) -> (f64, f64) {
        match self.fb.pair() {
            Some(_) => {
                let eps = self.phi.epsilon();
                (-1.0 + eps, 1.0 - eps)
            }
            None => (-1.0, 1.0),
        }
    }

    /// `V(x) = Ṽ(x) - K φ(x)` with first and second derivative; the
    /// continuation branch, extended past `-B` as far as `φ` is tabulated.
    pub fn continuation(&self, x: f64) -> Result<(f64, f64, f64)> {
        let (k, _) = self.fb.pair().ok_or(Error::NotSwitching)?;
        let (f, d) = self.phi.phi_at(x)?;
        let dd = self.phi.second_derivative(x, f, d);
        Ok((
            self.params.v_tilde_unchecked(x) - k * f,
            self.params.v_tilde_slope() - k * d,
            -k * dd,
        ))
    }

    /// `V*(x, a)` and its first two derivatives in `x` (one-sided at `±B`).
    pub fn value_derivatives(&self, x: f64, a: i8) -> Result<(f64, f64, f64)> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain {
                what: "value_at",
                x,
                lo,
                hi,
            });
        }
        if a == -1 {
            let (v, v1, v2) = self.value_derivatives(-x, 1)?;
            return Ok((v, -v1, v2));
        }
        debug_assert_eq!(a, 1, "controls take values in {{-1, 1}}");
        let p = &self.params;
        match self.fb.pair() {
            None => Ok((p.v_tilde_unchecked(x), p.v_tilde_slope(), 0.0)),
            Some((_, b)) if x >= -b => self.continuation(x),
            Some(_) => {
                let (v, v1, v2) = self.continuation(-x)?;
                let half_c2 = 0.5 * p.c2();
                Ok((v + p.c1() + half_c2 * (1.0 + x), -v1 + half_c2, v2))
            }
        }
    }

    pub fn value_at(&self, x: f64, a: i8) -> Result<f64> {
        self.value_derivatives(x, a).map(|(v, _, _)| v)
    }

    /// `min(V*(x, 1), V*(x, -1))`.
    pub fn v_star(&self, x: f64) -> Result<f64> {
        Ok(self.value_at(x, 1)?.min(self.value_at(x, -1)?))
    }

    /// `V(-B) - V(B) - c1 - c2/2 (1 - B)`.
    pub fn continuous_fit_residual(&self) -> Result<f64> {
        let (_, b) = self.fb.pair().ok_or(Error::NotSwitching)?;
        let p = &self.params;
        let (vm, _, _) = self.continuation(-b)?;
        let (vp, _, _) = self.continuation(b)?;
        Ok(vm - vp - p.c1() - 0.5 * p.c2() * (1.0 - b))
    }

    /// `V'(-B) + V'(B) - c2/2`.
    pub fn smooth_fit_residual(&self) -> Result<f64> {
        let (_, b) = self.fb.pair().ok_or(Error::NotSwitching)?;
        let (_, dm, _) = self.continuation(-b)?;
        let (_, dp, _) = self.continuation(b)?;
        Ok(dm + dp - 0.5 * self.params.c2())
    }

    /// `L V*(x, 1) + (1 - x)/2`, zero on the continuation region.
    pub fn excess_generator(&self, x: f64) -> Result<f64> {
        let (v, v1, v2) = self.value_derivatives(x, 1)?;
        Ok(self.params.l_residual(x, v, v1, v2)? + 0.5 * (1.0 - x))
    }

    pub fn verify_fit(&self, tols: &FitTolerances) -> Result<FitReport> {
        let (_, b) = self.fb.pair().ok_or(Error::NotSwitching)?;
        let p = &self.params;
        let eps = self.phi.epsilon();
        let n = tols.grid_points.max(2);
        let open_grid =
            |lo: f64, hi: f64| (0..n).map(move |i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64);

        let continuous_fit = self.continuous_fit_residual()?;
        let smooth_fit = self.smooth_fit_residual()?;

        let mut ode_residual_max = 0.0f64;
        for x in open_grid(-b, 1.0 - eps) {
            ode_residual_max = ode_residual_max.max(self.excess_generator(x)?.abs());
        }
        let mut stopping_excess_min = f64::INFINITY;
        for x in open_grid(-1.0 + eps, -b) {
            stopping_excess_min = stopping_excess_min.min(self.excess_generator(x)?);
        }
        let mut jump_excess_max = f64::NEG_INFINITY;
        for x in open_grid(-1.0 + eps, 1.0 - eps) {
            let gap = (self.value_at(x, 1)? - self.value_at(x, -1)?).abs();
            jump_excess_max = jump_excess_max.max(gap - (p.c1() + 0.5 * p.c2() * (1.0 + x)));
        }

        Ok(FitReport {
            continuous_fit,
            smooth_fit,
            ode_residual_max,
            stopping_excess_min,
            jump_excess_max,
            continuous_fit_pass: continuous_fit.abs() <= tols.continuous,
            smooth_fit_pass: smooth_fit.abs() <= tols.smooth,
            ode_residual_pass: ode_residual_max <= tols.ode,
            stopping_excess_pass: stopping_excess_min > tols.sign_margin,
            jump_excess_pass: jump_excess_max <= tols.sign_margin,
            grid_points: n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitTolerances {
    pub continuous: f64,
    pub smooth: f64,
    pub ode: f64,
    pub sign_margin: f64,
    pub grid_points: usize,
}

impl Default for FitTolerances {
    fn default() -> Self {
        Self {
            continuous: 1e-6,
            smooth: 1e-5,
            ode: 1e-6,
            sign_margin: 1e-9,
            grid_points: 1000,
        }
    }
}

/// Residuals of the verification conditions for a candidate `V*`:
/// the two fit conditions, `L V + (1 - x)/2 = 0` on `(-B, 1)`,
/// `L V + (1 - x)/2 > 0` on `(-1, -B)`, and
/// `|V(x, 1) - V(x, -1)| <= c1 + c2/2 (1 + x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitReport {
    pub continuous_fit: f64,
    pub smooth_fit: f64,
    pub ode_residual_max: f64,
    pub stopping_excess_min: f64,
    pub jump_excess_max: f64,
    pub continuous_fit_pass: bool,
    pub smooth_fit_pass: bool,
    pub ode_residual_pass: bool,
    pub stopping_excess_pass: bool,
    pub jump_excess_pass: bool,
    pub grid_points: usize,
}

impl FitReport {
    pub fn all_pass(&self) -> bool {
        self.continuous_fit_pass
            && self.smooth_fit_pass
            && self.ode_residual_pass
            && self.stopping_excess_pass
            && self.jump_excess_pass
    }
}
