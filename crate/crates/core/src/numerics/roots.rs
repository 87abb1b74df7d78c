//! Bracketing root finder: regula falsi with the Illinois modification,
//! falling back to bisection whenever the bracket stops shrinking fast.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    /// Final bracket width.
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootError {
    NotBracketed { f_lo: f64, f_hi: f64 },
    NonFinite { x: f64 },
}

pub fn find_root<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<Root, RootError>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (mut fa, mut fb) = (f(a), f(b));
    if !fa.is_finite() {
        return Err(RootError::NonFinite { x: a });
    }
    if !fb.is_finite() {
        return Err(RootError::NonFinite { x: b });
    }
    if fa == 0.0 {
        return Ok(Root {
            x: a,
            fx: fa,
            iterations: 0,
            width: 0.0,
        });
    }
    if fb == 0.0 {
        return Ok(Root {
            x: b,
            fx: fb,
            iterations: 0,
            width: 0.0,
        });
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NotBracketed { f_lo: fa, f_hi: fb });
    }

    // Which end was retained last time (-1 = a, 1 = b); used by Illinois.
    let mut retained = 0i8;
    let mut width_two_ago = f64::INFINITY;
    let mut width_one_ago = b - a;
    let nudge = 0.5 * xtol;
    let mut iterations = 0;
    while iterations < max_iter && b - a > xtol {
        iterations += 1;
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !(x > a && x < b) || (b - a) > 0.5 * width_two_ago {
            x = 0.5 * (a + b);
        }
        // Keep the probe at least xtol/2 inside so the bracket always shrinks.
        x = x.clamp(a + nudge, b - nudge);
        width_two_ago = width_one_ago;
        width_one_ago = b - a;

        let fx = f(x);
        if !fx.is_finite() {
            return Err(RootError::NonFinite { x });
        }
        if fx == 0.0 {
            return Ok(Root {
                x,
                fx,
                iterations,
                width: 0.0,
            });
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
            if retained == 1 {
                fb *= 0.5;
            }
            retained = 1;
        } else {
            b = x;
            fb = fx;
            if retained == -1 {
                fa *= 0.5;
            }
            retained = -1;
        }
    }
    let x = 0.5 * (a + b);
    Ok(Root {
        x,
        fx: f(x),
        iterations,
        width: b - a,
    })
}
