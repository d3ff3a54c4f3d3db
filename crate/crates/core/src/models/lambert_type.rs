use super::conventional::boltzmann;
use super::{
    exponents_at, index_sets, log_sum_exp, ConcentrationEval, ConcentrationMap, IonSystem,
    LimitEval, ModelError, StericModel,
};

const MAX_EXPANSIONS: usize = 200;
const MAX_POLISH: usize = 200;

fn exponents<'a>(sys: &'a IonSystem, op: &'static str) -> Result<&'a [f64], ModelError> {
    match sys.model() {
        StericModel::A3A4 { exponents } => Ok(exponents),
        _ => Err(sys.wrong_model(op, "a3a4")),
    }
}

// Root of a strictly increasing function of u: bracket by growing steps from `start`,
// bisect to width `width`, then safeguarded Newton. `f` returns (value, derivative).
fn increasing_root(
    f: impl Fn(f64) -> (f64, f64),
    start: f64,
    width: f64,
    tol: f64,
    phi: f64,
) -> Result<(f64, f64), ModelError> {
    let (k0, _) = f(start);
    if k0 == 0.0 {
        return Ok((start, 0.0));
    }
    let (mut lo, mut hi);
    let mut step = std::f64::consts::LN_2;
    if k0 > 0.0 {
        hi = start;
        lo = start - step;
        let mut n = 0;
        while f(lo).0 > 0.0 {
            n += 1;
            if n > MAX_EXPANSIONS || !lo.is_finite() {
                return Err(ModelError::RootBracket(phi));
            }
            hi = lo;
            step *= 2.0;
            lo -= step;
        }
    } else {
        lo = start;
        hi = start + step;
        let mut n = 0;
        while f(hi).0 < 0.0 {
            n += 1;
            if n > MAX_EXPANSIONS || !hi.is_finite() {
                return Err(ModelError::RootBracket(phi));
            }
            lo = hi;
            step *= 2.0;
            hi += step;
        }
    }
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if f(mid).0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let mut u = hi;
    let mut best = (u, f64::INFINITY);
    for _ in 0..MAX_POLISH {
        let (k, dk) = f(u);
        if k.abs() < best.1 {
            best = (u, k.abs());
        }
        if k.abs() <= tol {
            return Ok((u, k.abs()));
        }
        if k > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - k / dk;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == u || hi - lo <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
            break;
        }
        u = next;
    }
    if best.1 <= tol {
        Ok(best)
    } else {
        Err(ModelError::RootFind {
            phi,
            residual: best.1,
        })
    }
}

/// Solvent concentration from the Lambert-type equation
/// `ln t + Λ Σ_j λ₀λ_j t^{λ_j/λ₀} e^{μ̄_j − z_j φ} = Λλ₀μ̃₀ + μ̂₀`, then `c_i = t^{λ_i/λ₀} e^{μ̄_i − z_i φ}`.
/// The root is found in `u = ln t`. `Λ = 0` falls back to the Boltzmann map.
pub fn conc_a3a4(sys: &IonSystem, phi: f64) -> Result<ConcentrationEval, ModelError> {
    let lam = exponents(sys, "conc_a3a4")?;
    let big = sys.lambda();
    if big == 0.0 {
        return Ok(boltzmann(sys, phi, 0.0));
    }
    let z = sys.valences();
    let a = exponents_at(sys, &sys.mu_bar(), phi);
    let l0 = lam[0];
    let rhs = big * l0 * sys.mu_tilde0() + sys.mu_hat()[0];
    let k = |u: f64| {
        let mut s = 0.0;
        let mut ds = 0.0;
        for j in 0..lam.len() {
            let r = lam[j] / l0;
            let e = lam[j] * (r * u + a[j]).exp();
            s += e;
            ds += r * e;
        }
        (u + big * l0 * s - rhs, 1.0 + big * l0 * ds)
    };
    let tol = 1e-12 * (1.0 + big);
    let (u, _) = increasing_root(k, sys.mu_hat()[0], 1e-3, tol, phi)?;

    let log_c: Vec<f64> = (0..lam.len()).map(|i| lam[i] / l0 * u + a[i]).collect();
    let c: Vec<f64> = log_c.iter().map(|l| l.exp()).collect();
    // (C⁻¹ + Λλλᵀ)⁻¹ by Sherman–Morrison
    let s_ll: f64 = (0..c.len()).map(|i| lam[i] * lam[i] * c[i]).sum();
    let s_lz: f64 = (0..c.len()).map(|i| lam[i] * z[i] * c[i]).sum();
    let coef = big * s_lz / (1.0 + big * s_ll);
    let dc = (0..c.len()).map(|i| c[i] * (coef * lam[i] - z[i])).collect();
    Ok(ConcentrationEval::from_logs(phi, z, log_c, dc))
}

/// Λ → ∞ limit: `Σ_i λ_i (c₀*)^{λ_i/λ₀} e^{μ̄_i − z_i φ} = μ̃₀`.
pub fn limit_a3a4(sys: &IonSystem, phi: f64) -> Result<LimitEval, ModelError> {
    let lam = exponents(sys, "limit_a3a4")?;
    let z = sys.valences();
    let a = exponents_at(sys, &sys.mu_bar(), phi);
    let l0 = lam[0];
    let ln_m0 = sys.mu_tilde0().ln();
    let q = |u: f64| {
        let terms: Vec<f64> = (0..lam.len())
            .map(|i| lam[i].ln() + lam[i] / l0 * u + a[i])
            .collect();
        let lse = log_sum_exp(terms.iter().cloned());
        let slope: f64 = (0..lam.len())
            .map(|i| lam[i] / l0 * (terms[i] - lse).exp())
            .sum();
        (lse - ln_m0, slope)
    };
    let (u, _) = increasing_root(q, 0.0, 1e-3, 1e-14, phi)?;

    let c_star: Vec<f64> = (0..lam.len()).map(|i| (lam[i] / l0 * u + a[i]).exp()).collect();
    let s_ll: f64 = (0..c_star.len()).map(|i| lam[i] * lam[i] * c_star[i]).sum();
    let s_lz: f64 = (0..c_star.len()).map(|i| lam[i] * z[i] * c_star[i]).sum();
    let coef = s_lz / s_ll;
    let dc_star: Vec<f64> = (0..c_star.len())
        .map(|i| c_star[i] * (coef * lam[i] - z[i]))
        .collect();
    let f_star = z.iter().zip(&c_star).map(|(z, c)| z * c).sum();
    // −(Σz²c·Σλ²c − (Σλzc)²)/Σλ²c, expanded over pairs
    let mut gram = 0.0;
    for i in 0..c_star.len() {
        for j in i + 1..c_star.len() {
            let d = z[i] * lam[j] - z[j] * lam[i];
            gram += c_star[i] * c_star[j] * d * d;
        }
    }
    let df_star = -gram / s_ll;
    let n = sys.ion_count() as f64;
    let zmax = (1..z.len())
        .map(|i| z[i].abs() / lam[i])
        .fold(0.0, f64::max);
    let (argmax, argmin) = index_sets(z);
    Ok(LimitEval {
        phi,
        c_star,
        dc_star,
        f_star,
        df_star,
        m_star: None,
        big_m_star: None,
        abs_bound: Some(sys.mu_tilde0() * n * zmax),
        argmax_z: argmax,
        argmin_z: argmin,
    })
}

#[derive(Debug, Clone)]
pub struct A3A4Map {
    sys: IonSystem,
}

impl A3A4Map {
    pub fn new(sys: IonSystem) -> Result<Self, ModelError> {
        exponents(&sys, "A3A4Map")?;
        Ok(A3A4Map { sys })
    }
}

impl ConcentrationMap for A3A4Map {
    fn name(&self) -> &'static str {
        "a3a4"
    }

    fn system(&self) -> &IonSystem {
        &self.sys
    }

    fn lambda(&self) -> Option<f64> {
        Some(self.sys.lambda())
    }

    fn eval(&self, phi: f64) -> Result<ConcentrationEval, ModelError> {
        conc_a3a4(&self.sys, phi)
    }

    fn at_lambda(&self, lambda: f64) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(A3A4Map::new(self.sys.with_lambda(lambda)?)?))
    }

    fn limit(&self) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(A3A4LimitMap::new(self.sys.clone())?))
    }
}

#[derive(Debug, Clone)]
pub struct A3A4LimitMap {
    sys: IonSystem,
}

impl A3A4LimitMap {
    pub fn new(sys: IonSystem) -> Result<Self, ModelError> {
        exponents(&sys, "A3A4LimitMap")?;
        Ok(A3A4LimitMap { sys })
    }

    pub fn eval_limit(&self, phi: f64) -> Result<LimitEval, ModelError> {
        limit_a3a4(&self.sys, phi)
    }
}

impl ConcentrationMap for A3A4LimitMap {
    fn name(&self) -> &'static str {
        "a3a4_limit"
    }

    fn system(&self) -> &IonSystem {
        &self.sys
    }

    fn lambda(&self) -> Option<f64> {
        None
    }

    fn eval(&self, phi: f64) -> Result<ConcentrationEval, ModelError> {
        Ok(limit_a3a4(&self.sys, phi)?.to_eval())
    }

    fn at_lambda(&self, lambda: f64) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(A3A4Map::new(self.sys.with_lambda(lambda)?)?))
    }

    fn limit(&self) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(self.clone()))
    }
}
