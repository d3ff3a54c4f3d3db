use super::conventional::boltzmann;
use super::{
    exponents_at, index_sets, log_sum_exp, ConcentrationEval, ConcentrationMap, IonSystem,
    LimitEval, ModelError, StericModel,
};
use crate::specfun::lambert_w0_exp;

fn weights<'a>(sys: &'a IonSystem, op: &'static str) -> Result<(f64, &'a [f64]), ModelError> {
    match sys.model() {
        StericModel::WeightedA1 { gamma, weights } => Ok((*gamma, weights)),
        _ => Err(sys.wrong_model(op, "weighted_a1")),
    }
}

// ln H and the normalized weights p_j = γ_j e^{a_j} / H (p_0 = 0).
fn log_h(gamma: f64, weights: &[f64], a: &[f64]) -> (f64, Vec<f64>) {
    let mut terms = Vec::with_capacity(a.len());
    terms.push((1.0 - gamma).ln());
    for (w, aj) in weights.iter().zip(&a[1..]) {
        terms.push(w.ln() + aj);
    }
    let ln_h = log_sum_exp(terms.iter().cloned());
    let mut p = vec![0.0; a.len()];
    for j in 1..a.len() {
        p[j] = (terms[j] - ln_h).exp();
    }
    (ln_h, p)
}

/// `H(φ) = 1 − γ + Σ_j γ_j e^{μ̄_j − z_j φ}`.
pub fn h_factor(sys: &IonSystem, phi: f64) -> Result<f64, ModelError> {
    let (gamma, w) = weights(sys, "h_factor")?;
    let a = exponents_at(sys, &sys.mu_bar(), phi);
    Ok(log_h(gamma, w, &a).0.exp())
}

/// Closed-form concentrations `c₀ = W₀(ΛH e^{Λμ̃₀+μ̂₀})/(ΛH)`, `c_i = c₀ e^{μ̄_i − z_i φ}`.
/// `Λ = 0` falls back to the Boltzmann map.
pub fn conc_weighted_a1(sys: &IonSystem, phi: f64) -> Result<ConcentrationEval, ModelError> {
    let (gamma, w) = weights(sys, "conc_weighted_a1")?;
    let lambda = sys.lambda();
    if lambda == 0.0 {
        return Ok(boltzmann(sys, phi, 0.0));
    }
    let z = sys.valences();
    let a = exponents_at(sys, &sys.mu_bar(), phi);
    let (ln_h, p) = log_h(gamma, w, &a);
    let mu0 = lambda * sys.mu_tilde0() + sys.mu_hat()[0];
    let y = lambda.ln() + ln_h + mu0;
    let wv = lambert_w0_exp(y)?;
    // w e^w = e^y, so ln c0 = μ0 − w = ln w − ln Λ − ln H; the second form avoids cancellation
    let ln_c0 = if y > 0.0 {
        wv.ln() - lambda.ln() - ln_h
    } else {
        mu0 - wv
    };
    let log_c: Vec<f64> = a.iter().map(|ai| ln_c0 + ai).collect();

    let s: f64 = p.iter().zip(z).map(|(p, z)| p * z).sum();
    let dln_c0 = s * wv / (1.0 + wv);
    let dc = log_c
        .iter()
        .zip(z)
        .map(|(l, zi)| l.exp() * (dln_c0 - zi))
        .collect();
    Ok(ConcentrationEval::from_logs(phi, z, log_c, dc))
}

/// Λ → ∞ limit `c_i* = μ̃₀ e^{μ̄_i − z_i φ}/H` with the asymptotes `m*`, `M*` of `f*`.
pub fn limit_weighted_a1(sys: &IonSystem, phi: f64) -> Result<LimitEval, ModelError> {
    let (gamma, w) = weights(sys, "limit_weighted_a1")?;
    let z = sys.valences();
    let mu_bar = sys.mu_bar();
    let a = exponents_at(sys, &mu_bar, phi);
    let (ln_h, p) = log_h(gamma, w, &a);
    let m0 = sys.mu_tilde0();
    let c_star: Vec<f64> = a.iter().map(|ai| m0 * (ai - ln_h).exp()).collect();
    let s: f64 = p.iter().zip(z).map(|(p, z)| p * z).sum();
    let dc_star: Vec<f64> = c_star.iter().zip(z).map(|(c, zi)| c * (s - zi)).collect();
    let f_star = z.iter().zip(&c_star).map(|(z, c)| z * c).sum();
    let weight_of = |j: usize| if j == 0 { 1.0 - gamma } else { w[j - 1] };
    // pairwise form of Σ z_i dc_i; pairs with equal z/γ cancel exactly
    let mut df_star = 0.0;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let k = (z[j] - z[i]) * (weight_of(j) * z[i] - weight_of(i) * z[j]);
            if k != 0.0 {
                df_star += m0 * k * (a[i] + a[j] - 2.0 * ln_h).exp();
            }
        }
    }

    let (argmax, argmin) = index_sets(z);
    let asymptote = |set: &[usize]| {
        let top = set.iter().map(|&j| mu_bar[j]).fold(f64::NEG_INFINITY, f64::max);
        let num: f64 = set.iter().map(|&j| (mu_bar[j] - top).exp()).sum();
        let den: f64 = set.iter().map(|&j| weight_of(j) * (mu_bar[j] - top).exp()).sum();
        let zj = z[set[0]];
        if den == 0.0 {
            zj.signum() * f64::INFINITY
        } else {
            m0 * zj * num / den
        }
    };

    Ok(LimitEval {
        phi,
        c_star,
        dc_star,
        f_star,
        df_star,
        m_star: Some(asymptote(&argmin)),
        big_m_star: Some(asymptote(&argmax)),
        abs_bound: None,
        argmax_z: argmax,
        argmin_z: argmin,
    })
}

#[derive(Debug, Clone)]
pub struct WeightedA1Map {
    sys: IonSystem,
}

impl WeightedA1Map {
    pub fn new(sys: IonSystem) -> Result<Self, ModelError> {
        weights(&sys, "WeightedA1Map")?;
        Ok(WeightedA1Map { sys })
    }
}

impl ConcentrationMap for WeightedA1Map {
    fn name(&self) -> &'static str {
        "weighted_a1"
    }

    fn system(&self) -> &IonSystem {
        &self.sys
    }

    fn lambda(&self) -> Option<f64> {
        Some(self.sys.lambda())
    }

    fn eval(&self, phi: f64) -> Result<ConcentrationEval, ModelError> {
        conc_weighted_a1(&self.sys, phi)
    }

    fn at_lambda(&self, lambda: f64) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(WeightedA1Map::new(self.sys.with_lambda(lambda)?)?))
    }

    fn limit(&self) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(WeightedA1LimitMap::new(self.sys.clone())?))
    }
}

#[derive(Debug, Clone)]
pub struct WeightedA1LimitMap {
    sys: IonSystem,
}

impl WeightedA1LimitMap {
    pub fn new(sys: IonSystem) -> Result<Self, ModelError> {
        weights(&sys, "WeightedA1LimitMap")?;
        Ok(WeightedA1LimitMap { sys })
    }

    pub fn eval_limit(&self, phi: f64) -> Result<LimitEval, ModelError> {
        limit_weighted_a1(&self.sys, phi)
    }
}

impl ConcentrationMap for WeightedA1LimitMap {
    fn name(&self) -> &'static str {
        "weighted_a1_limit"
    }

    fn system(&self) -> &IonSystem {
        &self.sys
    }

    fn lambda(&self) -> Option<f64> {
        None
    }

    fn eval(&self, phi: f64) -> Result<ConcentrationEval, ModelError> {
        Ok(limit_weighted_a1(&self.sys, phi)?.to_eval())
    }

    fn at_lambda(&self, lambda: f64) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(WeightedA1Map::new(self.sys.with_lambda(lambda)?)?))
    }

    fn limit(&self) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(self.clone()))
    }
}
