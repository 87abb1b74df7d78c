//! Dormand-Prince 5(4) with adaptive step control for small fixed-size
//! systems. Integration may run in either direction of the independent
//! variable.

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Error weights: fifth-order minus embedded fourth-order solution.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// Reached the requested end point.
    Finished,
    /// The observer asked to stop at the last accepted point.
    Halted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DopriError {
    StepUnderflow { x: f64, h: f64 },
    TooManySteps { x: f64 },
    NonFinite { x: f64 },
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(x, y)` from `x0` to `x_end`, landing exactly on every
/// point of `stops` that lies strictly between them. `observe` sees each
/// accepted `(x, y)` (including the start) and may return `false` to halt.
pub fn integrate<const N: usize, F, O>(
    f: F,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    stops: &[f64],
    ctl: &StepControl,
    mut observe: O,
) -> Result<Stop, DopriError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]) -> bool,
{
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    // Stops in integration order.
    let mut pending: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|&s| (s - x0) * dir > 0.0 && (x_end - s) * dir > 0.0)
        .collect();
    pending.sort_by(|a, b| (a * dir).partial_cmp(&(b * dir)).unwrap());
    pending.dedup();
    pending.push(x_end);
    let mut next_stop = 0;

    let mut x = x0;
    let mut y = y0;
    if !observe(x, &y) {
        return Ok(Stop::Halted);
    }
    let mut h = ctl.h_init.abs().min(ctl.h_max);
    let mut k1 = f(x, &y);
    let mut steps = 0usize;

    loop {
        let target = pending[next_stop];
        let remaining = (target - x) * dir;
        let mut landing = false;
        // Stretch slightly rather than leave a sliver before the stop.
        if h * 1.01 >= remaining {
            h = remaining;
            landing = true;
        }
        if steps >= ctl.max_steps {
            return Err(DopriError::TooManySteps { x });
        }
        steps += 1;

        let hs = h * dir;
        let k2 = f(x + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = f(x + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(
            x + C4 * hs,
            &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            x + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            x + hs,
            &axpy(
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            hs,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let x_new = if landing { target } else { x + hs };
        let k7 = f(x_new, &y_new);

        let mut err = 0.0f64;
        for i in 0..N {
            let e =
                hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = ctl.atol + ctl.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            // Treat as a hard rejection and shrink.
            err = 1e10;
        }

        if err <= 1.0 {
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(DopriError::NonFinite { x: x_new });
            }
            x = x_new;
            y = y_new;
            k1 = k7;
            if landing {
                next_stop += 1;
            }
            if !observe(x, &y) {
                return Ok(Stop::Halted);
            }
            if next_stop == pending.len() {
                return Ok(Stop::Finished);
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // A forced landing may have shortened the step; do not let that
            // shrink the next one.
            let base = if landing { h.max(ctl.h_init) } else { h };
            h = (base * fac).min(ctl.h_max);
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            h *= fac;
        }
        if h < ctl.h_min {
            return Err(DopriError::StepUnderflow { x, h });
        }
    }
}
