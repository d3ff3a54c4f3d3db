//! Joint Newton on `(φ, v = ln c₀)` for weighted maps: the PDE rows plus, at every node,
//! `v + Λ e^v H(φ) − Λμ̃₀ − μ̂₀ = 0`.

use nalgebra::DMatrix;

use super::{finish, newton, PBProblem, SolveError, SolveOptions, SolveResult, Stage, System, TraceStep};
use crate::models::{ModelError, StericModel};

struct Coupled<'a> {
    prob: &'a PBProblem,
    z: Vec<f64>,
    mu_bar: Vec<f64>,
    // γ_0 = 1 − γ, γ_j for the ions
    weights: Vec<f64>,
    lambda: f64,
    rhs: f64,
}

struct NodeTerms {
    h: f64,
    dh: f64,
    f: f64,
    df_phi: f64,
}

impl Coupled<'_> {
    fn terms(&self, phi: f64, v: f64) -> NodeTerms {
        let mut t = NodeTerms {
            h: 0.0,
            dh: 0.0,
            f: 0.0,
            df_phi: 0.0,
        };
        for i in 0..self.z.len() {
            let e = (self.mu_bar[i] - self.z[i] * phi).exp();
            let c = (v + self.mu_bar[i] - self.z[i] * phi).exp();
            t.h += self.weights[i] * e;
            t.dh -= self.weights[i] * self.z[i] * e;
            t.f += self.z[i] * c;
            t.df_phi -= self.z[i] * self.z[i] * c;
        }
        t
    }
}

impl System for Coupled<'_> {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let n = self.prob.grid.len();
        let (phi, v) = x.split_at(n);
        let mut r = self.prob.linear_part(phi);
        r.resize(2 * n, 0.0);
        for k in 0..n {
            let t = self.terms(phi[k], v[k]);
            if k > 0 && k < n - 1 {
                r[k] -= self.prob.rho0[k] + t.f;
            }
            r[n + k] = v[k] + self.lambda * v[k].exp() * t.h - self.rhs;
        }
        Ok(r)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        let n = self.prob.grid.len();
        let (phi, v) = x.split_at(n);
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        let reduced = -self.prob.stiffness.as_ref().clone();
        j.view_mut((0, 0), (n, n)).copy_from(&reduced);
        let last = n - 1;
        for c in 0..n {
            j[(0, c)] = -self.prob.eta * self.prob.grid.diff_entry(0, c);
            j[(last, c)] = self.prob.eta * self.prob.grid.diff_entry(last, c);
        }
        j[(0, 0)] += 1.0;
        j[(last, last)] += 1.0;
        for k in 0..n {
            let t = self.terms(phi[k], v[k]);
            if k > 0 && k < last {
                j[(k, k)] -= t.df_phi;
                j[(k, n + k)] = -t.f;
            }
            let c0 = v[k].exp();
            j[(n + k, k)] = self.lambda * c0 * t.dh;
            j[(n + k, n + k)] = 1.0 + self.lambda * c0 * t.h;
        }
        Ok(j)
    }

    fn scale(&self) -> f64 {
        self.prob.scale()
    }
}

pub(super) fn solve_coupled(
    prob: &PBProblem,
    phi_init: &[f64],
    opts: &SolveOptions,
) -> Result<SolveResult, SolveError> {
    let sys = prob.map.system();
    let lambda = match (prob.map.lambda(), sys.model()) {
        (Some(l), StericModel::WeightedA1 { .. }) if l > 0.0 => l,
        _ => {
            return Err(SolveError::InvalidProblem(
                "coupled mode needs a finite-lambda weighted_a1 map with lambda > 0".into(),
            ))
        }
    };
    let StericModel::WeightedA1 { gamma, weights } = sys.model() else {
        unreachable!()
    };
    let mut w = vec![1.0 - gamma];
    w.extend_from_slice(weights);
    let system = Coupled {
        prob,
        z: sys.valences().to_vec(),
        mu_bar: sys.mu_bar(),
        weights: w,
        lambda,
        rhs: lambda * sys.mu_tilde0() + sys.mu_hat()[0],
    };

    let n = prob.grid.len();
    let mut x0 = phi_init.to_vec();
    x0.resize(2 * n, 0.0);
    let o = newton(&system, &x0, opts)?;
    let trace = vec![TraceStep {
        stage: Stage::Direct,
        param: 1.0,
        residual: o.residual,
        iters: o.iters,
        converged: o.converged,
    }];
    if !o.converged {
        return Err(SolveError::NotConverged(Box::new(super::Failure {
            phi: o.x[..n].to_vec(),
            residual_inf: o.residual,
            newton_iters: o.iters,
            trace,
        })));
    }
    let (phi, v) = o.x.split_at(n);
    finish(prob, phi.to_vec(), o.iters, trace, Some(v.to_vec()))
}
