//! Collocation discretization of `−(ε φ′)′ = ρ₀ + f(φ)` on `(−1, 1)` with Robin rows
//! `φ − η φ′ = φ_L` at `x = −1` and `φ + η φ′ = φ_R` at `x = 1`, solved by damped Newton.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::linalg::{dot2, inf_norm, lu_solve, matvec2};
use crate::models::{ConcentrationEval, ConcentrationMap, ModelError};
use crate::spectral::{GridError, SpectralGrid};

mod coupled;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Newton did not converge (best residual {:e} after {} iterations)", .0.residual_inf, .0.newton_iters)]
    NotConverged(Box<Failure>),
}

/// Best iterate of a failed solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub phi: Vec<f64>,
    pub residual_inf: f64,
    pub newton_iters: usize,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Newton at the requested parameters.
    Direct,
    /// Steric strength `Λ·s`.
    Lambda,
    /// Boundary data and fixed charge scaled by `s`.
    Homotopy,
}

/// One Newton run of a solve: the stage, its parameter value, final residual and iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub stage: Stage,
    pub param: f64,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct PBProblem {
    grid: Arc<SpectralGrid>,
    eps: Vec<f64>,
    rho0: Vec<f64>,
    eta: f64,
    bd_left: f64,
    bd_right: f64,
    map: Arc<dyn ConcentrationMap>,
    stiffness: Arc<DMatrix<f64>>,
}

impl PBProblem {
    pub fn new(
        grid: Arc<SpectralGrid>,
        eps: Vec<f64>,
        rho0: Vec<f64>,
        eta: f64,
        bd_left: f64,
        bd_right: f64,
        map: Arc<dyn ConcentrationMap>,
    ) -> Result<Self, SolveError> {
        grid.check_len(eps.len())?;
        grid.check_len(rho0.len())?;
        if eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(SolveError::InvalidProblem(
                "epsilon must be positive and finite at every node".into(),
            ));
        }
        if rho0.iter().any(|r| !r.is_finite()) {
            return Err(SolveError::InvalidProblem("rho0 must be finite".into()));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(SolveError::InvalidProblem(format!("eta must be >= 0, got {eta}")));
        }
        if !(bd_left.is_finite() && bd_right.is_finite()) {
            return Err(SolveError::InvalidProblem("boundary data must be finite".into()));
        }
        let stiffness = Arc::new(stiffness(&grid, &eps));
        Ok(PBProblem {
            grid,
            eps,
            rho0,
            eta,
            bd_left,
            bd_right,
            map,
            stiffness,
        })
    }

    /// Problem with constant `ε` and `ρ₀`.
    pub fn uniform(
        grid: Arc<SpectralGrid>,
        eps: f64,
        rho0: f64,
        eta: f64,
        bd_left: f64,
        bd_right: f64,
        map: Arc<dyn ConcentrationMap>,
    ) -> Result<Self, SolveError> {
        let n = grid.len();
        Self::new(grid, vec![eps; n], vec![rho0; n], eta, bd_left, bd_right, map)
    }

    /// Same discretization and data with another concentration map.
    pub fn with_map(&self, map: Arc<dyn ConcentrationMap>) -> Self {
        PBProblem {
            map,
            ..self.clone()
        }
    }

    // boundary data and fixed charge scaled by s
    fn scaled(&self, s: f64) -> Self {
        PBProblem {
            rho0: self.rho0.iter().map(|r| r * s).collect(),
            bd_left: self.bd_left * s,
            bd_right: self.bd_right * s,
            ..self.clone()
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn shared_grid(&self) -> Arc<SpectralGrid> {
        Arc::clone(&self.grid)
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.bd_left, self.bd_right)
    }

    pub fn map(&self) -> &dyn ConcentrationMap {
        self.map.as_ref()
    }

    pub fn shared_map(&self) -> Arc<dyn ConcentrationMap> {
        Arc::clone(&self.map)
    }

    /// Residual scale `1 + max|ρ₀| + Λ` (`Λ = 0` for limit maps).
    pub fn scale(&self) -> f64 {
        1.0 + inf_norm(&self.rho0) + self.map.lambda().unwrap_or(0.0)
    }

    /// `D·diag(ε)·D`.
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    fn linear_part(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let dphi = matvec2(self.grid.diff_rows(), n, phi);
        let flux: Vec<f64> = dphi.iter().zip(&self.eps).map(|(d, e)| d * e).collect();
        let mut r = matvec2(self.grid.diff_rows(), n, &flux);
        for v in r.iter_mut() {
            *v = -*v;
        }
        let last = n - 1;
        r[0] = dot2(&[1.0, -self.eta, -1.0], &[phi[0], dphi[0], self.bd_left]);
        r[last] = dot2(&[1.0, self.eta, -1.0], &[phi[last], dphi[last], self.bd_right]);
        r
    }
}

fn stiffness(grid: &SpectralGrid, eps: &[f64]) -> DMatrix<f64> {
    let d = grid.diff_matrix();
    let mut ed = d.clone();
    for (k, mut row) in ed.row_iter_mut().enumerate() {
        row *= eps[k];
    }
    &d * &ed
}

pub(crate) fn node_evals(
    map: &dyn ConcentrationMap,
    phi: &[f64],
) -> Result<Vec<ConcentrationEval>, ModelError> {
    phi.iter().map(|&p| map.eval(p)).collect()
}

fn residual_from(prob: &PBProblem, phi: &[f64], evals: &[ConcentrationEval]) -> Vec<f64> {
    let mut r = prob.linear_part(phi);
    let last = r.len() - 1;
    for k in 1..last {
        r[k] -= prob.rho0[k] + evals[k].f;
    }
    r
}

fn jacobian_from(prob: &PBProblem, evals: &[ConcentrationEval]) -> DMatrix<f64> {
    let n = prob.grid.len();
    let last = n - 1;
    let mut j = -prob.stiffness.as_ref().clone();
    for k in 1..last {
        j[(k, k)] -= evals[k].df_dphi;
    }
    for c in 0..n {
        let d0 = prob.grid.diff_entry(0, c);
        let dl = prob.grid.diff_entry(last, c);
        j[(0, c)] = -prob.eta * d0;
        j[(last, c)] = prob.eta * dl;
    }
    j[(0, 0)] += 1.0;
    j[(last, last)] += 1.0;
    j
}

/// Discrete residual: PDE rows at interior nodes, Robin rows at both ends.
pub fn assemble_residual(prob: &PBProblem, phi: &[f64]) -> Result<Vec<f64>, SolveError> {
    prob.grid.check_len(phi.len())?;
    let evals = node_evals(prob.map(), phi)?;
    Ok(residual_from(prob, phi, &evals))
}

/// Analytic Jacobian of [`assemble_residual`].
pub fn assemble_jacobian(prob: &PBProblem, phi: &[f64]) -> Result<DMatrix<f64>, SolveError> {
    prob.grid.check_len(phi.len())?;
    let evals = node_evals(prob.map(), phi)?;
    Ok(jacobian_from(prob, &evals))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Target residual, relative to [`PBProblem::scale`].
    pub tol: f64,
    /// Residual accepted when the line search stalls.
    pub accept: f64,
    pub min_step: f64,
    /// Newton on `(φ, ln c₀)` jointly instead of on `φ` alone (weighted maps only).
    pub coupled: bool,
    /// Allow Λ-continuation and boundary-data homotopy after a failed direct solve.
    pub continuation: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 100,
            tol: 1e-10,
            accept: 1e-9,
            min_step: 1.0 / (1u32 << 20) as f64,
            coupled: false,
            continuation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub phi: Vec<f64>,
    /// `concentrations[i][k] = c_i(φ(x_k))`.
    pub concentrations: Vec<Vec<f64>>,
    pub f_nodes: Vec<f64>,
    pub df_nodes: Vec<f64>,
    pub residual_inf: f64,
    pub newton_iters: usize,
    pub continuation_trace: Vec<TraceStep>,
    /// `ln c₀` unknowns of a coupled solve.
    pub log_c0: Option<Vec<f64>>,
}

// Result of one damped Newton run on a generic residual.
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
}

/// A Newton system: residual and Jacobian of the unknown vector.
pub(crate) trait System {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError>;
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, ModelError>;
    fn scale(&self) -> f64;
}

struct Reduced<'a>(&'a PBProblem);

impl System for Reduced<'_> {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let evals = node_evals(self.0.map(), x)?;
        Ok(residual_from(self.0, x, &evals))
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        let evals = node_evals(self.0.map(), x)?;
        Ok(jacobian_from(self.0, &evals))
    }

    fn scale(&self) -> f64 {
        self.0.scale()
    }
}

pub(crate) fn newton(
    sys: &dyn System,
    start: &[f64],
    opts: &SolveOptions,
) -> Result<Outcome, SolveError> {
    let tol = opts.tol * sys.scale();
    let accept = opts.accept * sys.scale();
    let mut x = start.to_vec();
    let mut r = sys.residual(&x)?;
    let mut norm = inf_norm(&r);
    let mut iters = 0;
    while norm > tol && iters < opts.max_iter {
        let j = sys.jacobian(&x)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let Some(dx) = lu_solve(j, &rhs) else {
            break;
        };
        if dx.iter().any(|v| !v.is_finite()) {
            break;
        }
        iters += 1;
        let mut t = 1.0;
        let mut accepted = false;
        while t >= opts.min_step {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + t * d).collect();
            if let Ok(rt) = sys.residual(&trial) {
                let nt = inf_norm(&rt);
                if nt.is_finite() && nt <= (1.0 - 1e-4 * t) * norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let mut floor = 0.0;
    if norm > tol && norm <= POLISH_GATE * sys.scale() {
        (norm, floor) = polish(sys, &mut x, &mut r)?;
    }
    Ok(Outcome {
        converged: norm <= tol || norm <= accept.max(floor),
        x,
        residual: norm,
        iters,
    })
}

const POLISH_GATE: f64 = 1e-6;
const POLISH_MOVES: usize = 2000;
const SINGLE_COLUMNS: usize = 64;
const PAIR_COLUMNS: usize = 16;
const PAIR_RANGE: i32 = 4;

fn spacing(v: f64) -> f64 {
    let a = v.abs();
    f64::from_bits(a.to_bits() + 1) - a
}

// Near the rounding floor the residual of a binary64 vector is dominated by the rounding of
// x itself, amplified by the Jacobian. Greedy search over representable vectors: shift one or
// two unknowns by integer ulps, predicted through the Jacobian columns.
// Returns the final norm and the half-ulp rounding bound max_k Σ_j |J_kj|·ulp(x_j)/2.
fn polish(sys: &dyn System, x: &mut [f64], r: &mut Vec<f64>) -> Result<(f64, f64), ModelError> {
    let n = x.len();
    let jac = sys.jacobian(x)?;
    let floor = (0..n)
        .map(|k| 0.5 * (0..n).map(|j| jac[(k, j)].abs() * spacing(x[j])).sum::<f64>())
        .fold(0.0, f64::max);
    let start = inf_norm(r);
    if start == 0.0 {
        return Ok((0.0, floor));
    }
    let saved = x.to_vec();
    let mut best_x = saved.clone();
    let mut best_norm = start;
    let mut pred = r.clone();
    // Σ (v/start)^16 as a smooth max norm, abandoned once it reaches `bound`
    let inv = 1.0 / start;
    let soft = |v: f64| {
        let t = v * inv;
        let t = t * t;
        let t = t * t;
        let t = t * t;
        t * t
    };
    let probe = |pred: &[f64], moves: &[(usize, f64)], bound: f64| {
        let mut total = 0.0f64;
        for k in 0..n {
            let v = moves.iter().fold(pred[k], |acc, &(j, d)| acc + d * jac[(k, j)]);
            total += soft(v);
            if total >= bound {
                break;
            }
        }
        total
    };
    for step in 0..POLISH_MOVES {
        let cur: f64 = pred.iter().map(|&v| soft(v)).sum();
        let worst = (0..n)
            .max_by(|&a, &b| pred[a].abs().total_cmp(&pred[b].abs()))
            .unwrap_or(0);
        let target = -pred[worst];
        let mut cols: Vec<usize> = (0..n)
            .filter(|&j| jac[(worst, j)] != 0.0 && spacing(x[j]) >= f64::MIN_POSITIVE)
            .collect();
        cols.sort_by(|&a, &b| {
            (jac[(worst, b)] * spacing(x[b])).abs().total_cmp(&(jac[(worst, a)] * spacing(x[a])).abs())
        });
        cols.truncate(SINGLE_COLUMNS);
        let step_of = |j: usize| jac[(worst, j)] * spacing(x[j]);
        let mut best: (Vec<(usize, f64)>, f64) = (Vec::new(), cur);
        for &j in &cols {
            let m0 = (target / step_of(j)).round().clamp(-1e6, 1e6);
            for m in [m0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0] {
                if m == 0.0 {
                    continue;
                }
                let mv = [(j, m * spacing(x[j]))];
                let top = probe(&pred, &mv, best.1);
                if top < best.1 {
                    best = (mv.to_vec(), top);
                }
            }
        }
        let heavy = &cols[..cols.len().min(PAIR_COLUMNS)];
        for &j1 in heavy {
            for m1 in -PAIR_RANGE..=PAIR_RANGE {
                if m1 == 0 {
                    continue;
                }
                let d1 = m1 as f64 * spacing(x[j1]);
                let rest = target - m1 as f64 * step_of(j1);
                for &j2 in heavy {
                    if j2 == j1 {
                        continue;
                    }
                    let m2 = (rest / step_of(j2)).round().clamp(-1e6, 1e6);
                    if m2 == 0.0 {
                        continue;
                    }
                    let mv = [(j1, d1), (j2, m2 * spacing(x[j2]))];
                    let top = probe(&pred, &mv, best.1);
                    if top < best.1 {
                        best = (mv.to_vec(), top);
                    }
                }
            }
        }
        if best.0.is_empty() {
            break;
        }
        for &(j, d) in &best.0 {
            let old = x[j];
            x[j] = old + d;
            let d = x[j] - old;
            for k in 0..n {
                pred[k] += d * jac[(k, j)];
            }
        }
        if step % 64 == 63 {
            pred = sys.residual(x)?;
        }
        let norm = inf_norm(&pred);
        if norm < best_norm {
            best_norm = norm;
            best_x.copy_from_slice(x);
        }
    }
    x.copy_from_slice(&best_x);
    let exact = sys.residual(x)?;
    let norm = inf_norm(&exact);
    if norm < start {
        *r = exact;
        Ok((norm, floor))
    } else {
        x.copy_from_slice(&saved);
        Ok((start, floor))
    }
}

// Geometric ladder s = 2^-m, ..., 1: find the largest level that converges from `start`,
// then climb with adaptive steps in log2(s).
fn ladder(
    stage: Stage,
    start: &[f64],
    trace: &mut Vec<TraceStep>,
    total: &mut usize,
    mut attempt: impl FnMut(f64, &[f64]) -> Result<Outcome, SolveError>,
) -> Result<Option<Outcome>, SolveError> {
    let mut record = |s: f64, o: &Outcome, trace: &mut Vec<TraceStep>| {
        *total += o.iters;
        trace.push(TraceStep {
            stage,
            param: s,
            residual: o.residual,
            iters: o.iters,
            converged: o.converged,
        });
    };
    let mut base = None;
    for m in 1..=30 {
        let s = 0.5f64.powi(m);
        let o = attempt(s, start)?;
        record(s, &o, trace);
        if o.converged {
            base = Some((s, o));
            break;
        }
    }
    let Some((mut s, mut cur)) = base else {
        return Ok(None);
    };
    let mut step = 1.0f64;
    while s < 1.0 {
        let next = (s * step.exp2()).min(1.0);
        let o = attempt(next, &cur.x)?;
        record(next, &o, trace);
        if o.converged {
            s = next;
            cur = o;
            step = (step * 2.0).min(1.0);
        } else {
            step *= 0.5;
            if step < 1.0 / 64.0 {
                return Ok(None);
            }
        }
    }
    Ok(Some(cur))
}

/// Solves the discrete problem from `phi_init`.
///
/// A failed direct Newton run is retried along a Λ-ladder `Λ/2^m → Λ` (finite `Λ > 0`) and
/// then along a homotopy that scales the boundary data and `ρ₀` from `2^{−m}` up to 1.
pub fn solve(
    prob: &PBProblem,
    phi_init: &[f64],
    opts: &SolveOptions,
) -> Result<SolveResult, SolveError> {
    prob.grid.check_len(phi_init.len())?;
    if opts.coupled {
        return coupled::solve_coupled(prob, phi_init, opts);
    }
    let mut trace = Vec::new();
    let mut total = 0;
    let first = newton(&Reduced(prob), phi_init, opts)?;
    total += first.iters;
    trace.push(TraceStep {
        stage: Stage::Direct,
        param: 1.0,
        residual: first.residual,
        iters: first.iters,
        converged: first.converged,
    });
    let best = (first.residual, first.x.clone());
    let mut done = first.converged.then_some(first);

    if done.is_none() && opts.continuation {
        if let Some(lambda) = prob.map.lambda().filter(|&l| l > 0.0) {
            let o = ladder(Stage::Lambda, phi_init, &mut trace, &mut total, |s, x0| {
                let p = prob.with_map(Arc::from(prob.map.at_lambda(lambda * s)?));
                newton(&Reduced(&p), x0, opts)
            })?;
            done = o;
        }
    }
    if done.is_none() && opts.continuation {
        let o = ladder(Stage::Homotopy, phi_init, &mut trace, &mut total, |s, x0| {
            newton(&Reduced(&prob.scaled(s)), x0, opts)
        })?;
        done = o;
    }

    match done {
        Some(o) => finish(prob, o.x, total, trace, None),
        None => Err(SolveError::NotConverged(Box::new(Failure {
            phi: best.1,
            residual_inf: best.0,
            newton_iters: total,
            trace,
        }))),
    }
}

pub(crate) fn finish(
    prob: &PBProblem,
    phi: Vec<f64>,
    iters: usize,
    trace: Vec<TraceStep>,
    log_c0: Option<Vec<f64>>,
) -> Result<SolveResult, SolveError> {
    let evals = node_evals(prob.map(), &phi)?;
    let species = evals[0].c.len();
    let concentrations = (0..species)
        .map(|i| evals.iter().map(|e| e.c[i]).collect())
        .collect();
    let residual_inf = inf_norm(&residual_from(prob, &phi, &evals));
    Ok(SolveResult {
        concentrations,
        f_nodes: evals.iter().map(|e| e.f).collect(),
        df_nodes: evals.iter().map(|e| e.df_dphi).collect(),
        residual_inf,
        newton_iters: iters,
        continuation_trace: trace,
        log_c0,
        phi,
    })
}
