//! Principal branch of the Lambert W function.
//!
//! [`lambert_w0`] evaluates `W₀(x)` for `x ≥ −1/e`; [`lambert_w0_exp`] evaluates
//! `W₀(e^y)` directly from `y`, which is what the steric concentration maps need once
//! `Λ·H·e^{Λμ̃₀+μ̂₀}` no longer fits in a binary64.

use std::f64::consts::E;

/// `1/e` rounded to binary64.
pub const INV_E: f64 = 0.367_879_441_171_442_33;

/// Inputs within this distance below `−1/e` are clamped onto the branch point.
pub const BRANCH_SLACK: f64 = 1e-15;

// Low part of e: E + E_LO represents e to about 2^-106.
const E_LO: f64 = 1.445_646_891_729_250_2e-16;

const MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SpecFunError {
    #[error("lambert_w0: argument {0:e} is below the branch point -1/e")]
    BelowBranchPoint(f64),
    #[error("lambert_w0: non-finite argument {0}")]
    NonFinite(f64),
}

/// Argument of `W₀`, either the value itself or its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WInput {
    /// `W₀(value)`, requires `value ≥ −1/e` up to [`BRANCH_SLACK`].
    Value(f64),
    /// `W₀(e^log_value)`, any finite real.
    LogValue(f64),
}

impl WInput {
    pub fn eval(self) -> Result<f64, SpecFunError> {
        match self {
            WInput::Value(x) => lambert_w0(x),
            WInput::LogValue(y) => lambert_w0_exp(y),
        }
    }
}

/// `W₀(x)`: the solution `w ≥ −1` of `w·e^w = x`.
///
/// Initial guesses come from the branch-point series (`x < −0.25`), from `x(1−x)`
/// near zero and from `ln x − ln ln x` above `e`; Halley iteration polishes them until
/// the identity residual is below `1e−15·|x|` or 50 iterations have run.
pub fn lambert_w0(x: f64) -> Result<f64, SpecFunError> {
    if !x.is_finite() {
        return Err(SpecFunError::NonFinite(x));
    }
    if x < -INV_E - BRANCH_SLACK {
        return Err(SpecFunError::BelowBranchPoint(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x <= -INV_E {
        return Ok(-1.0);
    }

    let mut w = if x < -0.25 {
        // p = sqrt(2(ex + 1)); ex + 1 evaluated with the split constant to keep
        // the cancellation near the branch point exact.
        let q = (x.mul_add(E, 1.0) + x * E_LO).max(0.0);
        let p = (2.0 * q).sqrt();
        let w = branch_series(p);
        if p < 1e-3 {
            // truncation error of the series is O(p^7) here
            return Ok(w);
        }
        w
    } else if x.abs() <= 0.25 {
        x * (1.0 - x)
    } else if x <= E {
        let l = x.ln_1p();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else if x > 1e300 {
        return lambert_w0_exp(x.ln());
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= 1e-15 * x.abs() {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 <= 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        if !step.is_finite() {
            break;
        }
        w -= step;
        if step.abs() <= 2.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w.max(-1.0))
}

fn branch_series(p: f64) -> f64 {
    // W₀ = -1 + p - p²/3 + 11p³/72 - 43p⁴/540 + 769p⁵/17280 - 221p⁶/8505 + …
    const C: [f64; 7] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17280.0,
        -221.0 / 8505.0,
    ];
    C.iter().rev().fold(0.0, |acc, &c| acc.mul_add(p, c))
}

/// `W₀(e^y)` without forming `e^y`.
///
/// For `y ≥ 1` this solves `w + ln w = y` by Halley iteration seeded at `y − ln y`;
/// below that `e^y` is harmless and the call forwards to [`lambert_w0`].
pub fn lambert_w0_exp(y: f64) -> Result<f64, SpecFunError> {
    if !y.is_finite() {
        return Err(SpecFunError::NonFinite(y));
    }
    if y < 1.0 {
        return lambert_w0(y.exp());
    }
    let mut w = y - y.ln();
    for _ in 0..MAX_ITER {
        let g = w + w.ln() - y;
        if g == 0.0 {
            break;
        }
        let g1 = 1.0 + 1.0 / w;
        let g2 = -1.0 / (w * w);
        let newton = g / g1;
        let step = newton / (1.0 - 0.5 * newton * g2 / g1);
        w -= step;
        if step.abs() <= f64::EPSILON * w {
            break;
        }
    }
    Ok(w)
}

/// `dW₀/dx = W₀(x) / (x (1 + W₀(x)))`, with the removable value 1 at `x = 0`.
pub fn lambert_w0_prime(x: f64) -> Result<f64, SpecFunError> {
    if x == 0.0 {
        return Ok(1.0);
    }
    let w = lambert_w0(x)?;
    Ok(w / (x * (1.0 + w)))
}
