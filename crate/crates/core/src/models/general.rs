use nalgebra::DMatrix;

use super::conventional::boltzmann;
use super::{ConcentrationEval, ConcentrationMap, IonSystem, ModelError, StericModel};
use crate::linalg::{inf_norm, lu_solve};
use crate::specfun::lambert_w0_exp;

const MAX_ITER: usize = 200;
const MAX_STEP: f64 = 8.0;
const MIN_DAMPING: f64 = 1.0 / (1u64 << 30) as f64;

fn matrix<'a>(sys: &'a IonSystem, op: &'static str) -> Result<&'a DMatrix<f64>, ModelError> {
    match sys.model() {
        StericModel::General { g } => Ok(g),
        _ => Err(sys.wrong_model(op, "general")),
    }
}

/// Solves the equilibrium system for a symmetric positive semidefinite coupling by
/// damped Newton in `u = ln c`.
pub fn conc_general(sys: &IonSystem, phi: f64) -> Result<ConcentrationEval, ModelError> {
    let g = matrix(sys, "conc_general")?;
    let big = sys.lambda();
    if big == 0.0 || g.iter().all(|&v| v == 0.0) {
        return Ok(boltzmann(sys, phi, big));
    }
    let n = sys.species();
    let z = sys.valences();
    let b: Vec<f64> = (0..n)
        .map(|i| big * sys.mu_tilde()[i] + sys.mu_hat()[i] - z[i] * phi)
        .collect();

    let residual = |u: &[f64]| -> Vec<f64> {
        let c: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        (0..n)
            .map(|i| {
                let gc: f64 = (0..n).map(|j| g[(i, j)] * c[j]).sum();
                u[i] - b[i] + big * gc
            })
            .collect()
    };

    // diagonal-only solve is an upper bound for each ln c_i
    let mut u = Vec::with_capacity(n);
    for i in 0..n {
        let gii = g[(i, i)];
        u.push(if gii > 0.0 {
            b[i] - lambert_w0_exp((big * gii).ln() + b[i])?
        } else {
            b[i]
        });
    }

    let tol = 1e-12 * (1.0 + big);
    let accept = 1e-10 * (1.0 + big);
    let mut r = residual(&u);
    let mut norm = inf_norm(&r);
    let mut iters = 0;
    let fail = |iters, norm| ModelError::NewtonFailed {
        phi,
        iters,
        residual: norm,
    };
    while norm > tol {
        if iters == MAX_ITER {
            if norm <= accept {
                break;
            }
            return Err(fail(iters, norm));
        }
        iters += 1;
        let jac = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d + big * g[(i, j)] * u[j].exp()
        });
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let Some(du) = lu_solve(jac, &rhs) else {
            return Err(fail(iters, norm));
        };
        let mut t = (MAX_STEP / inf_norm(&du)).min(1.0);
        let mut moved = false;
        while t >= MIN_DAMPING {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + t * d).collect();
            let rt = residual(&trial);
            let nt = inf_norm(&rt);
            if nt <= (1.0 - 1e-4 * t) * norm {
                u = trial;
                r = rt;
                norm = nt;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            if norm <= accept {
                break;
            }
            return Err(fail(iters, norm));
        }
    }

    let c: Vec<f64> = u.iter().map(|v| v.exp()).collect();
    // (I + Λ C G) dc = −C z
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        d + big * c[i] * g[(i, j)]
    });
    let rhs: Vec<f64> = (0..n).map(|i| -c[i] * z[i]).collect();
    let dc = lu_solve(m, &rhs).ok_or_else(|| fail(iters, norm))?;
    Ok(ConcentrationEval::from_logs(phi, z, u, dc))
}

#[derive(Debug, Clone)]
pub struct GeneralMap {
    sys: IonSystem,
}

impl GeneralMap {
    pub fn new(sys: IonSystem) -> Result<Self, ModelError> {
        matrix(&sys, "GeneralMap")?;
        Ok(GeneralMap { sys })
    }
}

impl ConcentrationMap for GeneralMap {
    fn name(&self) -> &'static str {
        "general"
    }

    fn system(&self) -> &IonSystem {
        &self.sys
    }

    fn lambda(&self) -> Option<f64> {
        Some(self.sys.lambda())
    }

    fn eval(&self, phi: f64) -> Result<ConcentrationEval, ModelError> {
        conc_general(&self.sys, phi)
    }

    fn at_lambda(&self, lambda: f64) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Ok(Box::new(GeneralMap::new(self.sys.with_lambda(lambda)?)?))
    }

    fn limit(&self) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        Err(ModelError::NoLimit("general"))
    }
}
