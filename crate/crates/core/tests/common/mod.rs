//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use seqtrack_core::{solve_phi, ModelParams, PhiOptions, RawParams, RootOptions, ValueFunction};

pub fn reference() -> ModelParams {
    ModelParams::try_from(RawParams::default()).unwrap()
}

pub fn solved(params: ModelParams) -> ValueFunction {
    let phi = solve_phi(&params, &PhiOptions::default()).unwrap();
    ValueFunction::solve(params, phi, &RootOptions::default()).unwrap()
}

/// `(φ, φ')` at `x_end` by classical RK4 from `1 - eps` with steps
/// proportional to the squared distance to the nearer endpoint.
pub fn rk4_phi(lambda: f64, mu: f64, alpha: f64, eps: f64, x_end: f64) -> (f64, f64) {
    let rhs = |x: f64, y: [f64; 2]| -> [f64; 2] {
        let w = 1.0 - x * x;
        [
            y[1],
            2.0 * (2.0 * lambda * x * y[1] + alpha * y[0]) / (mu * mu * w * w),
        ]
    };
    let mut x = 1.0 - eps;
    let mut y = [1.0, -alpha / (2.0 * lambda)];
    while x > x_end {
        let d = (1.0 - x).min(1.0 + x);
        let h = (0.02 * d * d).min(2e-4).min(x - x_end);
        let k1 = rhs(x, y);
        let k2 = rhs(
            x - 0.5 * h,
            [y[0] - 0.5 * h * k1[0], y[1] - 0.5 * h * k1[1]],
        );
        let k3 = rhs(
            x - 0.5 * h,
            [y[0] - 0.5 * h * k2[0], y[1] - 0.5 * h * k2[1]],
        );
        let k4 = rhs(x - h, [y[0] - h * k3[0], y[1] - h * k3[1]]);
        for i in 0..2 {
            y[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        x -= h;
    }
    (y[0], y[1])
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Discrete-time Bayes filter of the two-state chain: condition on the
/// Gaussian increment, then propagate through the transition matrix.
pub fn bayes_step(lambda: f64, mu: f64, m: f64, dx: f64, dt: f64) -> f64 {
    let like_up = (-(dx - mu * dt).powi(2) / (2.0 * dt)).exp();
    let like_down = (-(dx + mu * dt).powi(2) / (2.0 * dt)).exp();
    let up = 0.5 * (1.0 + m) * like_up;
    let down = 0.5 * (1.0 - m) * like_down;
    let posterior = (up - down) / (up + down);
    (-2.0 * lambda * dt).exp() * posterior
}
