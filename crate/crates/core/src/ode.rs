//! The decreasing positive solution `φ` of the homogeneous equation
//! `L f = 0` on `(-1, 1)`.
//!
//! `φ` blows up at `-1` and has a finite positive limit at `1` with
//! `φ'(1) = -alpha φ(1) / (2 lambda)`. That limit gives Cauchy data a small
//! distance `epsilon` to the left of `1`; the equation is integrated from
//! there towards `-1`. In that direction the second solution `ψ(x) = φ(-x)`
//! decays, so any contamination of the start data dies out.
//!
//! Near `-1`, `φ` behaves like `exp(lambda / (mu^2 (1 + x)))` and overflows
//! long before `-1 + epsilon` for small `epsilon`; the table is truncated
//! once `φ` exceeds a configurable cap and the truncation point recorded.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::dopri::{self, DopriError, StepControl};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiOptions {
    /// Distance of the start point from `1` and of the target from `-1`.
    pub epsilon: f64,
    /// Relative and absolute tolerance of the step control.
    pub tol: f64,
    /// Value `φ(1 - epsilon)`.
    pub normalization: f64,
    /// Stop once `φ` exceeds `overflow_cap * normalization`.
    pub overflow_cap: f64,
    /// Largest step, keeps the table dense enough to plot.
    pub max_step: f64,
    /// Points the integrator must land on exactly.
    #[serde(skip)]
    pub extra_nodes: Vec<f64>,
}

impl Default for PhiOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            tol: 1e-11,
            normalization: 1.0,
            overflow_cap: 1e12,
            max_step: 5e-3,
            extra_nodes: Vec::new(),
        }
    }
}

/// Tabulated `φ` and `φ'` on an increasing grid with Hermite interpolation
/// in between.
#[derive(Debug, Clone, Serialize)]
pub struct PhiSolution {
    params: ModelParams,
    epsilon: f64,
    tol: f64,
    normalization: f64,
    xs: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    /// Left end of the table when the overflow cap stopped integration.
    truncated_at: Option<f64>,
}

pub fn solve_phi(params: &ModelParams, opts: &PhiOptions) -> Result<PhiSolution> {
    if !(opts.epsilon > 0.0 && opts.epsilon <= 1e-2) {
        return Err(Error::InvalidParameter {
            key: "epsilon",
            reason: format!("must lie in (0, 1e-2], got {}", opts.epsilon),
        });
    }
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(Error::InvalidParameter {
            key: "ode_tol",
            reason: format!("must be > 0, got {}", opts.tol),
        });
    }
    if !(opts.normalization > 0.0 && opts.normalization.is_finite()) {
        return Err(Error::InvalidParameter {
            key: "normalization",
            reason: "must be > 0".into(),
        });
    }

    let p = *params;
    let start = 1.0 - opts.epsilon;
    let end = -1.0 + opts.epsilon;
    let y0 = [
        opts.normalization,
        -p.alpha() / (2.0 * p.lambda()) * opts.normalization,
    ];
    let cap = opts.overflow_cap * opts.normalization;
    let ctl = StepControl {
        rtol: opts.tol,
        atol: opts.tol * opts.normalization,
        // The start is stiff: stable steps scale like (1 - x^2)^2.
        h_init: (1e-2 * opts.epsilon * opts.epsilon).max(1e-14),
        h_min: 1e-15,
        h_max: opts.max_step,
        max_steps: 2_000_000,
    };

    let mut xs = Vec::new();
    let mut phi = Vec::new();
    let mut dphi = Vec::new();
    let mut truncated_at = None;
    let rhs = |x: f64, y: &[f64; 2]| [y[1], p.homogeneous_second_derivative(x, y[0], y[1])];
    let outcome = dopri::integrate(rhs, start, y0, end, &opts.extra_nodes, &ctl, |x, y| {
        if y[0] > cap {
            truncated_at = xs.last().copied();
            return false;
        }
        xs.push(x);
        phi.push(y[0]);
        dphi.push(y[1]);
        true
    });
    if let Err(e) = outcome {
        let (reached, reason) = match e {
            DopriError::StepUnderflow { x, h } => (x, format!("step size {h:e} below minimum")),
            DopriError::TooManySteps { x } => (x, "step budget exhausted".to_string()),
            DopriError::NonFinite { x } => (x, "solution overflowed".to_string()),
        };
        return Err(Error::IntegrationFailure { reached, reason });
    }
    if xs.len() < 4 {
        return Err(Error::IntegrationFailure {
            reached: *xs.last().unwrap_or(&start),
            reason: "overflow cap reached immediately".into(),
        });
    }

    xs.reverse();
    phi.reverse();
    dphi.reverse();
    let sol = PhiSolution {
        params: p,
        epsilon: opts.epsilon,
        tol: opts.tol,
        normalization: opts.normalization,
        xs,
        phi,
        dphi,
        truncated_at,
    };
    sol.check_invariants()?;
    Ok(sol)
}

impl PhiSolution {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn tol(&self) -> f64 {
        self.tol
    }
    pub fn normalization(&self) -> f64 {
        self.normalization
    }
    pub fn truncated_at(&self) -> Option<f64> {
        self.truncated_at
    }
    pub fn len(&self) -> usize {
        self.xs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Covered interval `[lo, hi]`; `hi = 1 - epsilon`.
    pub fn coverage(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn covers(&self, x: f64) -> bool {
        let (lo, hi) = self.coverage();
        x >= lo && x <= hi
    }

    /// Grid nodes `(x, φ, φ')` in increasing `x`.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.xs
            .iter()
            .zip(&self.phi)
            .zip(&self.dphi)
            .map(|((&x, &f), &d)| (x, f, d))
    }

    /// `φ''` at `x` from the equation itself.
    pub fn second_derivative(&self, x: f64, f: f64, f1: f64) -> f64 {
        self.params.homogeneous_second_derivative(x, f, f1)
    }

    /// `(φ(x), φ'(x))` by quintic Hermite interpolation using `φ`, `φ'` and
    /// `φ''` at the bracketing nodes, clamped so `φ` stays between its
    /// neighbours and `φ'` between theirs.
    pub fn phi_at(&self, x: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.coverage();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain {
                what: "phi_at",
                x,
                lo,
                hi,
            });
        }
        let i = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return Ok((self.phi[i], self.dphi[i])),
            Err(i) => i - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (f0, f1) = (self.phi[i], self.phi[i + 1]);
        let (d0, d1) = (self.dphi[i], self.dphi[i + 1]);
        let s0 = self.second_derivative(x0, f0, d0);
        let s1 = self.second_derivative(x1, f1, d1);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);

        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 0.5 * t3 - t4 + 0.5 * t5;
        let value =
            h0 * f0 + h1 * h * d0 + h2 * h * h * s0 + h3 * f1 + h4 * h * d1 + h5 * h * h * s1;

        let g0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
        let g1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        let g2 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
        let g3 = -g0;
        let g4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        let g5 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
        let slope = (g0 * f0 + g3 * f1) / h + g1 * d0 + g2 * h * s0 + g4 * d1 + g5 * h * s1;

        Ok((value.clamp(f1, f0), slope.clamp(d0, d1)))
    }

    /// `ψ(x) = φ(-x)` and `ψ'(x) = -φ'(-x)`.
    pub fn psi_at(&self, x: f64) -> Result<(f64, f64)> {
        let (f, d) = self.phi_at(-x)?;
        Ok((f, -d))
    }

    fn check_invariants(&self) -> Result<()> {
        for (i, (x, f, d)) in self.nodes().enumerate() {
            if !(f > 0.0) {
                return Err(Error::InvariantViolation(format!(
                    "phi({x}) = {f} is not positive"
                )));
            }
            if !(d < 0.0) {
                return Err(Error::InvariantViolation(format!(
                    "phi'({x}) = {d} is not negative"
                )));
            }
            if i > 0 {
                if !(self.phi[i - 1] > f) {
                    return Err(Error::InvariantViolation(format!(
                        "phi not strictly decreasing at x = {x}"
                    )));
                }
                if !(self.dphi[i - 1] < d) {
                    return Err(Error::InvariantViolation(format!(
                        "phi' not strictly increasing (convexity) at x = {x}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;

    fn reference() -> ModelParams {
        ModelParams::try_from(RawParams::default()).unwrap()
    }

    #[test]
    fn cauchy_data_at_the_right_end() {
        let sol = solve_phi(&reference(), &PhiOptions::default()).unwrap();
        let (_, hi) = sol.coverage();
        assert_eq!(hi, 0.9999);
        let (f, d) = sol.phi_at(hi).unwrap();
        assert_eq!(f, 1.0);
        assert_eq!(d, -0.5);
    }

    #[test]
    fn truncates_at_the_overflow_cap() {
        let sol = solve_phi(&reference(), &PhiOptions::default()).unwrap();
        let (lo, _) = sol.coverage();
        assert_eq!(sol.truncated_at(), Some(lo));
        // phi ~ exp(lambda / (mu^2 (1 + x))) puts 1e12 near x = -0.991.
        assert!(lo < -0.98 && lo > -0.999, "lo = {lo}");
        assert!(sol.nodes().next().unwrap().1 > 1e11);
    }

    #[test]
    fn interpolation_hits_nodes_and_stays_monotone() {
        let sol = solve_phi(&reference(), &PhiOptions::default()).unwrap();
        let nodes: Vec<_> = sol.nodes().collect();
        for w in nodes.windows(2).step_by(37) {
            let (x0, f0, d0) = w[0];
            let (x1, f1, _) = w[1];
            assert_eq!(sol.phi_at(x0).unwrap(), (f0, d0));
            let (fm, _) = sol.phi_at(0.5 * (x0 + x1)).unwrap();
            assert!(fm < f0 && fm > f1);
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let sol = solve_phi(&reference(), &PhiOptions::default()).unwrap();
        assert!(matches!(sol.phi_at(0.99995), Err(Error::Domain { .. })));
        assert!(matches!(sol.phi_at(-0.9999), Err(Error::Domain { .. })));
        let bad = PhiOptions {
            epsilon: 0.1,
            ..PhiOptions::default()
        };
        assert!(solve_phi(&reference(), &bad).is_err());
        let bad = PhiOptions {
            tol: 0.0,
            ..PhiOptions::default()
        };
        assert!(solve_phi(&reference(), &bad).is_err());
    }

    #[test]
    fn reflection_solves_the_same_equation() {
        let p = reference();
        let sol = solve_phi(&p, &PhiOptions::default()).unwrap();
        for &x in &[-0.8, -0.3, 0.0, 0.4, 0.9] {
            let (f, d) = sol.psi_at(x).unwrap();
            // psi'' (x) = phi''(-x)
            let dd = sol.second_derivative(-x, f, -d);
            let r = p.l_residual(x, f, d, dd).unwrap();
            assert!(r.abs() < 1e-12 * f.max(1.0), "x = {x}: {r}");
        }
    }
}
