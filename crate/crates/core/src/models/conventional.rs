use super::{ConcentrationEval, ConcentrationMap, IonSystem, ModelError, StericModel};

/// Boltzmann concentrations at `Λ = 0`: `c_i = e^{μ̂_i − z_i φ}`.
pub fn conc_lambda_zero(sys: &IonSystem, phi: f64) -> Result<ConcentrationEval, ModelError> {
    if sys.lambda() != 0.0 {
        return Err(ModelError::LambdaNotZero("conc_lambda_zero"));
    }
    Ok(boltzmann(sys, phi, 0.0))
}

/// Concentrations without steric coupling: `c_i = e^{Λμ̃_i + μ̂_i − z_i φ}`.
pub fn conc_conventional(sys: &IonSystem, phi: f64) -> Result<ConcentrationEval, ModelError> {
    Ok(boltzmann(sys, phi, sys.lambda()))
}

pub(crate) fn boltzmann(sys: &IonSystem, phi: f64, lambda: f64) -> ConcentrationEval {
    let z = sys.valences();
    let log_c: Vec<f64> = (0..sys.species())
        .map(|i| lambda * sys.mu_tilde()[i] + sys.mu_hat()[i] - z[i] * phi)
        .collect();
    let dc = log_c.iter().zip(z).map(|(l, z)| -z * l.exp()).collect();
    ConcentrationEval::from_logs(phi, z, log_c, dc)
}

#[derive(Debug, Clone)]
pub struct ConventionalMap {
    sys: IonSystem,
}

impl ConventionalMap {
    pub fn new(sys: IonSystem) -> Result<Self, ModelError> {
        if !matches!(sys.model(), StericModel::Conventional) {
            return Err(sys.wrong_model("ConventionalMap", "conventional"));
        }
        Ok(ConventionalMap { sys })
    }
}

impl ConcentrationMap for ConventionalMap {
    fn name(&self) -> &'static str {
        "conventional"
    }

    fn system(&self) -> &IonSystem {
        &self.sys
    }

    fn lambda(&self) -> Option<f64> {
        Some(self.sys.lambda())
    }

    fn eval(&self, phi: f64) -> Result<ConcentrationEval, ModelError> {
        conc_conventional(&self.sys, phi)
    }

    fn at_lambda(&self, lambda: f64) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(ConventionalMap::new(self.sys.with_lambda(lambda)?)?))
    }

    fn limit(&self) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Err(ModelError::NoLimit("conventional"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::equilibrium_residual;

    fn sys(lambda: f64) -> IonSystem {
        IonSystem::new(
            vec![0.0, 1.0, -1.0, 2.0],
            StericModel::Conventional,
            lambda,
            0.7,
            vec![0.0, 0.3, -1.0, -2.0],
        )
        .unwrap()
    }

    #[test]
    fn lambda_zero_is_boltzmann() {
        let s = sys(0.0);
        let e = conc_lambda_zero(&s, 0.4).unwrap();
        assert_eq!(e.c[0], 1.0);
        assert!((e.c[1] - (0.3f64 - 0.4).exp()).abs() < 1e-15);
        let df: f64 = -(0..4).map(|i| s.valences()[i].powi(2) * e.c[i]).sum::<f64>();
        assert!((e.df_dphi - df).abs() < 1e-14);
        assert!(e.df_dphi < 0.0);
        assert!(conc_lambda_zero(&sys(1.0), 0.0).is_err());
    }

    #[test]
    fn residual_vanishes() {
        for lambda in [0.0, 1.0, 30.0] {
            let s = sys(lambda);
            for phi in [-5.0, 0.0, 3.0] {
                let e = conc_conventional(&s, phi).unwrap();
                let r = equilibrium_residual(&s, phi, &e.c);
                assert!(r.iter().all(|v| v.abs() < 1e-12), "{r:?}");
            }
        }
    }

    #[test]
    fn rejects_other_models() {
        let s = IonSystem::new(
            vec![0.0, 1.0, -1.0],
            StericModel::A3A4 { exponents: vec![1.0; 3] },
            1.0,
            1.0,
            vec![0.0; 3],
        )
        .unwrap();
        assert!(matches!(
            ConventionalMap::new(s),
            Err(ModelError::WrongModel { .. })
        ));
    }
}
