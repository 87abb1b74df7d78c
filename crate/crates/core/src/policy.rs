//! Control rules over filtered paths and the discounted tracking cost.
//!
//! Decisions are taken at grid points: the control in force on
//! `[t_k, t_{k+1})` is chosen from `M_k` (and `X_k`). A switch at `t_k`
//! is charged at `t_k` using the post-switch control. The running cost on a
//! step holds the integrand at its left-endpoint value and integrates the
//! discount factor exactly over the step.

use serde::{Deserialize, Serialize};

use crate::boundary::FreeBoundary;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::simulate::PathBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Switch `+1 -> -1` when `M <= -b`, `-1 -> +1` when `M >= b`.
    Threshold {
        b: f64,
    },
    NeverSwitch,
    /// Every `window` steps, follow the sign of the observation increment
    /// over the last window.
    FixedLagSign {
        window: usize,
    },
    /// Switch `+1 -> -1` when `M <= down`, `-1 -> +1` when `M >= up`.
    Custom {
        down: f64,
        up: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    /// Control in force just before time zero.
    pub a_init: i8,
}

fn check_a(a: i8) -> Result<()> {
    if a == 1 || a == -1 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            key: "a_init",
            reason: format!("must be -1 or 1, got {a}"),
        })
    }
}

impl Policy {
    pub fn threshold(b: f64, a_init: i8) -> Result<Self> {
        check_a(a_init)?;
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::InvalidParameter {
                key: "B",
                reason: format!("threshold must lie in (0, 1), got {b}"),
            });
        }
        Ok(Self {
            kind: PolicyKind::Threshold { b },
            a_init,
        })
    }

    pub fn never_switch(a_init: i8) -> Result<Self> {
        check_a(a_init)?;
        Ok(Self {
            kind: PolicyKind::NeverSwitch,
            a_init,
        })
    }

    pub fn fixed_lag_sign(window: usize, a_init: i8) -> Result<Self> {
        check_a(a_init)?;
        if window == 0 {
            return Err(Error::InvalidParameter {
                key: "window",
                reason: "must be >= 1".into(),
            });
        }
        Ok(Self {
            kind: PolicyKind::FixedLagSign { window },
            a_init,
        })
    }

    pub fn custom(down: f64, up: f64, a_init: i8) -> Result<Self> {
        check_a(a_init)?;
        if !(down.is_finite() && up.is_finite()) {
            return Err(Error::InvalidParameter {
                key: "thresholds",
                reason: "must be finite".into(),
            });
        }
        Ok(Self {
            kind: PolicyKind::Custom { down, up },
            a_init,
        })
    }

    /// The optimal rule for a solved free boundary: the threshold policy in
    /// the switching regime, otherwise never switch.
    pub fn optimal(fb: &FreeBoundary, a_init: i8) -> Result<Self> {
        match fb.b {
            Some(b) => Self::threshold(b, a_init),
            None => Self::never_switch(a_init),
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            PolicyKind::Threshold { b } => format!("threshold({b})"),
            PolicyKind::NeverSwitch => "never".to_string(),
            PolicyKind::FixedLagSign { window } => format!("sign({window})"),
            PolicyKind::Custom { down, up } => format!("custom({down},{up})"),
        }
    }

    pub fn start(&self) -> Controller {
        Controller {
            policy: *self,
            a: self.a_init,
            anchor: 0.0,
        }
    }
}

/// Running state of a policy along one path.
#[derive(Debug, Clone, Copy)]
pub struct Controller {
    policy: Policy,
    a: i8,
    anchor: f64,
}

impl Controller {
    /// Control for the step starting at grid point `k` and whether it
    /// differs from the control before `k`.
    pub fn decide(&mut self, k: usize, m: f64, x: f64) -> (i8, bool) {
        let next = match self.policy.kind {
            PolicyKind::NeverSwitch => self.a,
            PolicyKind::Threshold { b } => band(self.a, m, -b, b),
            PolicyKind::Custom { down, up } => band(self.a, m, down, up),
            PolicyKind::FixedLagSign { window } => {
                if k > 0 && k.is_multiple_of(window) {
                    let moved = x - self.anchor;
                    self.anchor = x;
                    if moved > 0.0 {
                        1
                    } else if moved < 0.0 {
                        -1
                    } else {
                        self.a
                    }
                } else {
                    self.a
                }
            }
        };
        let switched = next != self.a;
        self.a = next;
        (next, switched)
    }

    pub fn current(&self) -> i8 {
        self.a
    }
}

fn band(a: i8, m: f64, down: f64, up: f64) -> i8 {
    if a == 1 && m <= down {
        -1
    } else if a == -1 && m >= up {
        1
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPath {
    pub a_init: i8,
    pub a: Vec<i8>,
    /// Grid indices at which the control jumped.
    pub switches: Vec<usize>,
}

pub fn run_policy(policy: &Policy, m_path: &[f64], x_path: Option<&[f64]>) -> Result<ControlPath> {
    if matches!(policy.kind, PolicyKind::FixedLagSign { .. }) && x_path.is_none() {
        return Err(Error::MissingPath("x_obs"));
    }
    if let Some(x) = x_path {
        if x.len() != m_path.len() {
            return Err(Error::GridMismatch {
                expected: m_path.len(),
                got: x.len(),
            });
        }
    }
    let mut ctl = policy.start();
    let mut a = Vec::with_capacity(m_path.len());
    let mut switches = Vec::new();
    for (k, &m) in m_path.iter().enumerate() {
        let (ak, switched) = ctl.decide(k, m, x_path.map_or(0.0, |x| x[k]));
        if switched {
            switches.push(k);
        }
        a.push(ak);
    }
    Ok(ControlPath {
        a_init: policy.a_init,
        a,
        switches,
    })
}

/// Alternating first-passage rule of the optimal tracker for a solved
/// free boundary.
pub fn run_threshold_policy(fb: &FreeBoundary, a_init: i8, m_path: &[f64]) -> Result<ControlPath> {
    let b = fb.b.ok_or(Error::NotSwitching)?;
    run_policy(&Policy::threshold(b, a_init)?, m_path, None)
}

impl PathBundle {
    /// Runs `policy` over the bundle and stores the control.
    pub fn attach_policy(&mut self, policy: &Policy) -> Result<ControlPath> {
        let path = run_policy(policy, &self.m, Some(&self.x_obs))?;
        self.a = Some(path.a.clone());
        self.a_init = Some(path.a_init);
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostForm {
    /// Mismatch against the hidden signal.
    ThetaForm,
    /// Conditional mismatch probability `(1 - A M)/2`.
    MForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostAccumulator {
    pub running: f64,
    pub switching: f64,
    pub total: f64,
    pub form: CostForm,
    pub switches: usize,
    /// Upper bound `exp(-alpha T)/alpha` on the running cost beyond the
    /// horizon.
    pub tail_bound: f64,
}

/// Discount bookkeeping for a uniform grid.
#[derive(Debug, Clone, Copy)]
pub struct Discount {
    factor: f64,
    step_ratio: f64,
    step_weight: f64,
}

impl Discount {
    pub fn new(alpha: f64, dt: f64) -> Self {
        let step_ratio = (-alpha * dt).exp();
        Self {
            factor: 1.0,
            step_ratio,
            step_weight: -(-alpha * dt).exp_m1() / alpha,
        }
    }

    /// `exp(-alpha t_k)` at the current point.
    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// `∫ exp(-alpha s) ds` over the current step.
    pub fn weight(&self) -> f64 {
        self.factor * self.step_weight
    }

    pub fn advance(&mut self) {
        self.factor *= self.step_ratio;
    }
}

/// Per-step accumulation of both cost forms; the streaming counterpart of
/// [`cost_theta_form`] and [`cost_m_form`].
#[derive(Debug, Clone, Copy, Default)]
pub struct DualCost {
    pub theta_running: f64,
    pub theta_switching: f64,
    pub m_running: f64,
    pub m_switching: f64,
    pub switches: usize,
}

impl DualCost {
    #[inline]
    pub fn step(
        &mut self,
        params: &ModelParams,
        disc: &Discount,
        a: i8,
        switched: bool,
        theta: i8,
        m: f64,
    ) {
        let mismatch = if a != theta { 1.0 } else { 0.0 };
        let cond = 0.5 * (1.0 - a as f64 * m);
        let w = disc.weight();
        self.theta_running += w * mismatch;
        self.m_running += w * cond;
        if switched {
            let f = disc.factor();
            self.switches += 1;
            self.theta_switching += f * (params.c1() + params.c2() * mismatch);
            self.m_switching += f * (params.c1() + params.c2() * cond);
        }
    }

    pub fn theta_total(&self) -> f64 {
        self.theta_running + self.theta_switching
    }

    pub fn m_total(&self) -> f64 {
        self.m_running + self.m_switching
    }
}

fn accumulate(
    params: &ModelParams,
    bundle: &PathBundle,
    form: CostForm,
    integrand: impl Fn(usize, i8) -> f64,
) -> Result<CostAccumulator> {
    let a = bundle.a.as_ref().ok_or(Error::MissingPath("a"))?;
    let a_init = bundle.a_init.unwrap_or(a[0]);
    let mut disc = Discount::new(params.alpha(), bundle.dt);
    let steps = bundle.len() - 1;
    let (mut running, mut switching, mut switches) = (0.0, 0.0, 0);
    let mut prev = a_init;
    for (k, &ak) in a.iter().enumerate().take(steps) {
        let c = integrand(k, ak);
        running += disc.weight() * c;
        if ak != prev {
            switches += 1;
            switching += disc.factor() * (params.c1() + params.c2() * c);
        }
        prev = ak;
        disc.advance();
    }
    let horizon = steps as f64 * bundle.dt;
    Ok(CostAccumulator {
        running,
        switching,
        total: running + switching,
        form,
        switches,
        tail_bound: (-params.alpha() * horizon).exp() / params.alpha(),
    })
}

/// `∫ e^{-alpha t} 1{A != θ} dt + Σ e^{-alpha τ} (c1 + c2 1{A_τ != θ_τ})`.
pub fn cost_theta_form(params: &ModelParams, bundle: &PathBundle) -> Result<CostAccumulator> {
    let theta = bundle.theta.as_ref().ok_or(Error::MissingPath("theta"))?;
    accumulate(params, bundle, CostForm::ThetaForm, |k, a| {
        if a != theta[k] {
            1.0
        } else {
            0.0
        }
    })
}

/// `1/2 ∫ e^{-alpha t} (1 - A M) dt + Σ e^{-alpha τ} (c1 + c2/2 (1 - A_τ M_τ))`.
pub fn cost_m_form(params: &ModelParams, bundle: &PathBundle) -> Result<CostAccumulator> {
    let m = &bundle.m;
    accumulate(params, bundle, CostForm::MForm, |k, a| {
        0.5 * (1.0 - a as f64 * m[k])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;
    use crate::simulate::{SimConfig, ThetaPath};

    fn reference() -> ModelParams {
        ModelParams::try_from(RawParams::default()).unwrap()
    }

    fn bundle(theta: Vec<i8>, m: Vec<f64>, a: Vec<i8>, a_init: i8, dt: f64) -> PathBundle {
        let n = m.len();
        PathBundle {
            t: (0..n).map(|k| k as f64 * dt).collect(),
            theta: Some(theta),
            x_obs: vec![0.0; n],
            m,
            a: Some(a),
            a_init: Some(a_init),
            dt,
        }
    }

    #[test]
    fn perfect_tracking_costs_nothing() {
        let p = reference();
        let theta = vec![1, 1, -1, -1, 1, 1];
        let b = bundle(theta.clone(), vec![0.0; 6], theta, 1, 0.1);
        let c = cost_theta_form(&p, &b).unwrap();
        assert_eq!(c.running, 0.0);
        assert_eq!(c.switches, 2);
        let b3 = bundle(vec![1; 6], vec![0.0; 6], vec![1; 6], 1, 0.1);
        assert_eq!(cost_theta_form(&p, &b3).unwrap().total, 0.0);
    }

    #[test]
    fn frozen_mismatch_integral() {
        let p = reference();
        let cfg = SimConfig {
            horizon: 10.0,
            dt: 0.01,
            ..SimConfig::default()
        };
        let n = cfg.steps() + 1;
        let theta = ThetaPath::constant(-1, &cfg).values;
        let b = bundle(theta, vec![0.0; n], vec![1; n], 1, cfg.dt);
        let c = cost_theta_form(&p, &b).unwrap();
        let exact = (1.0 - (-p.alpha() * cfg.horizon).exp()) / p.alpha();
        assert!((c.total - exact).abs() < 1e-12, "{} vs {exact}", c.total);
        assert!((c.tail_bound - (-2.5f64).exp() * 4.0).abs() < 1e-12);

        let m = cost_m_form(&p, &b).unwrap();
        assert!((m.total - 0.5 * exact).abs() < 1e-12);
    }

    #[test]
    fn switch_at_time_zero_charges_c1_only() {
        let p = ModelParams::new(0.25, 1.0, 0.25, 0.25, 0.7).unwrap();
        let b = bundle(vec![-1; 4], vec![0.0; 4], vec![-1; 4], 1, 0.1);
        let c = cost_theta_form(&p, &b).unwrap();
        assert_eq!(c.switches, 1);
        assert_eq!(c.switching, 0.25);
        assert_eq!(c.running, 0.0);
    }

    #[test]
    fn missing_paths() {
        let p = reference();
        let mut b = bundle(vec![1; 3], vec![0.0; 3], vec![1; 3], 1, 0.1);
        b.a = None;
        assert!(matches!(cost_m_form(&p, &b), Err(Error::MissingPath("a"))));
        let mut b = bundle(vec![1; 3], vec![0.0; 3], vec![1; 3], 1, 0.1);
        b.theta = None;
        assert!(matches!(
            cost_theta_form(&p, &b),
            Err(Error::MissingPath("theta"))
        ));
    }

    #[test]
    fn threshold_rule_alternates() {
        let fb = FreeBoundary::switching(0.4, 0.6, 1.0);
        let m = [0.0, -0.5, -0.61, -0.2, 0.59, 0.6, -0.7, 0.2];
        let path = run_threshold_policy(&fb, 1, &m).unwrap();
        assert_eq!(path.a, vec![1, 1, -1, -1, -1, 1, -1, -1]);
        assert_eq!(path.switches, vec![2, 5, 6]);

        let inside = [0.0, 0.3, -0.59, 0.55];
        assert!(run_threshold_policy(&fb, 1, &inside)
            .unwrap()
            .switches
            .is_empty());

        // Starting beyond the threshold switches at time zero.
        let path = run_threshold_policy(&fb, 1, &[-0.8, -0.8]).unwrap();
        assert_eq!(path.switches, vec![0]);

        // Mirror symmetry.
        let mirrored: Vec<f64> = m.iter().map(|v| -v).collect();
        let mp = run_threshold_policy(&fb, -1, &mirrored).unwrap();
        assert_eq!(mp.a, path_neg(&run_threshold_policy(&fb, 1, &m).unwrap().a));
        assert!(run_threshold_policy(&FreeBoundary::never_switch(1.0), 1, &m).is_err());
    }

    fn path_neg(a: &[i8]) -> Vec<i8> {
        a.iter().map(|v| -v).collect()
    }

    #[test]
    fn fixed_lag_sign_follows_block_increments() {
        let pol = Policy::fixed_lag_sign(2, 1).unwrap();
        let m = [0.0; 7];
        let x = [0.0, 0.1, -0.3, -0.2, -0.1, -0.5, -0.6];
        let path = run_policy(&pol, &m, Some(&x)).unwrap();
        assert_eq!(path.a, vec![1, 1, -1, -1, 1, 1, -1]);
        assert!(run_policy(&pol, &m, None).is_err());
    }

    #[test]
    fn constructors_validate() {
        assert!(Policy::threshold(1.0, 1).is_err());
        assert!(Policy::threshold(0.5, 0).is_err());
        assert!(Policy::fixed_lag_sign(0, 1).is_err());
        assert!(Policy::custom(-0.2, 0.3, -1).is_ok());
    }
}
