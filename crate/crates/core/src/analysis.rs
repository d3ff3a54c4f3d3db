//! Post-processing: `f`-profiles over a potential range, oscillation scans of the analytic
//! derivative, spatial scans of `f∘φ`, and Λ → ∞ convergence studies.

use std::sync::Arc;

use rayon::prelude::*;

use crate::models::{build_map, ConcentrationEval, ConcentrationMap, IonSystem, ModelError, Source};
use crate::solver::{solve, PBProblem, SolveError, SolveOptions, SolveResult};

/// Bracket width at which zeros of `df/dφ` are reported.
pub const REFINE_WIDTH: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solve at {stage}: {source}")]
    Solve {
        stage: String,
        #[source]
        source: SolveError,
    },
}

/// Map values on a uniform partition of `[φ_min, φ_max]`.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    map: Arc<dyn ConcentrationMap>,
    phi: Vec<f64>,
    rows: Vec<ConcentrationEval>,
}

impl ProfileTable {
    pub fn map(&self) -> &dyn ConcentrationMap {
        self.map.as_ref()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn rows(&self) -> &[ConcentrationEval] {
        &self.rows
    }

    pub fn f(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.f).collect()
    }

    pub fn df_dphi(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.df_dphi).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Profile of the finite-Λ map of `sys`.
pub fn tabulate_profile(
    sys: &IonSystem,
    phi_min: f64,
    phi_max: f64,
    lp: usize,
) -> Result<ProfileTable, AnalysisError> {
    let map: Arc<dyn ConcentrationMap> = Arc::from(build_map(sys, Source::Finite)?);
    tabulate_map(map, phi_min, phi_max, lp)
}

/// Profile of any map, including the limit maps.
pub fn tabulate_map(
    map: Arc<dyn ConcentrationMap>,
    phi_min: f64,
    phi_max: f64,
    lp: usize,
) -> Result<ProfileTable, AnalysisError> {
    if !(phi_min < phi_max) || !phi_min.is_finite() || !phi_max.is_finite() {
        return Err(AnalysisError::InvalidInput(format!(
            "need finite phi_min < phi_max, got [{phi_min}, {phi_max}]"
        )));
    }
    if lp < 2 {
        return Err(AnalysisError::InvalidInput(format!("need at least 2 intervals, got {lp}")));
    }
    let h = (phi_max - phi_min) / lp as f64;
    let phi: Vec<f64> = (0..=lp)
        .map(|k| if k == lp { phi_max } else { phi_min + k as f64 * h })
        .collect();
    let rows = phi.iter().map(|&p| map.eval(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(ProfileTable { map, phi, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    /// Grid brackets `[a, b]` across which `df/dφ` changes sign.
    pub sign_changes: Vec<(f64, f64)>,
    pub is_monotone: bool,
    /// Refined zeros of `df/dφ`, one per bracket.
    pub extremum_locations: Vec<f64>,
    /// `df/dφ` at each refined zero.
    pub extremum_slopes: Vec<f64>,
}

// indices k where values[k] and the next nonzero value after it have opposite signs
fn sign_change_brackets(values: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut last: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        if v == 0.0 || v.is_nan() {
            continue;
        }
        if let Some(a) = last {
            if (values[a] > 0.0) != (v > 0.0) {
                out.push((a, k));
            }
        }
        last = Some(k);
    }
    out
}

pub fn detect_oscillation(table: &ProfileTable) -> OscillationReport {
    let df = table.df_dphi();
    let brackets = sign_change_brackets(&df);
    let mut report = OscillationReport {
        sign_changes: Vec::new(),
        is_monotone: brackets.is_empty(),
        extremum_locations: Vec::new(),
        extremum_slopes: Vec::new(),
    };
    for (a, b) in brackets {
        let (phi, slope) = refine_zero(table.map(), table.phi[a], df[a], table.phi[b], df[b]);
        report.sign_changes.push((table.phi[a], table.phi[b]));
        report.extremum_locations.push(phi);
        report.extremum_slopes.push(slope);
    }
    report
}

// bisection on the analytic derivative; a failed evaluation stops refinement early
fn refine_zero(map: &dyn ConcentrationMap, mut a: f64, fa: f64, mut b: f64, fb: f64) -> (f64, f64) {
    let (mut best, mut best_val) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
    let up = fa < 0.0;
    while b - a > REFINE_WIDTH {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let Ok(e) = map.eval(m) else {
            break;
        };
        if e.df_dphi.abs() <= best_val.abs() {
            best = m;
            best_val = e.df_dphi;
        }
        if e.df_dphi == 0.0 {
            return (m, 0.0);
        }
        if (e.df_dphi < 0.0) == up {
            a = m;
        } else {
            b = m;
        }
    }
    let m = 0.5 * (a + b);
    match map.eval(m) {
        Ok(e) if e.df_dphi.abs() <= best_val.abs() => (m, e.df_dphi),
        _ => (best, best_val),
    }
}

/// Sign scan of `d/dx f(φ(x)) = f′(φ)·φ′` at the collocation nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialReport {
    pub slope: Vec<f64>,
    /// Node brackets `[x_a, x_b]` across which the slope changes sign.
    pub sign_changes: Vec<(f64, f64)>,
    /// Linear-interpolation estimate of each interior extremum.
    pub extremum_locations: Vec<f64>,
    pub is_monotone: bool,
}

pub fn spatial_profile(prob: &PBProblem, sol: &SolveResult) -> Result<SpatialReport, AnalysisError> {
    let dphi = prob
        .grid()
        .differentiate(&sol.phi)
        .map_err(|e| AnalysisError::InvalidInput(e.to_string()))?;
    if sol.df_nodes.len() != dphi.len() {
        return Err(AnalysisError::InvalidInput("solution does not match the grid".into()));
    }
    let slope: Vec<f64> = sol.df_nodes.iter().zip(&dphi).map(|(a, b)| a * b).collect();
    let x = prob.grid().nodes();
    let brackets = sign_change_brackets(&slope);
    let sign_changes = brackets.iter().map(|&(a, b)| (x[a], x[b])).collect();
    let extremum_locations = brackets
        .iter()
        .map(|&(a, b)| x[a] + (x[b] - x[a]) * slope[a] / (slope[a] - slope[b]))
        .collect();
    Ok(SpatialReport {
        is_monotone: brackets.is_empty(),
        slope,
        sign_changes,
        extremum_locations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub lambda_values: Vec<f64>,
    /// `‖φ_Λ − φ*‖_∞` at the nodes.
    pub sup_errors: Vec<f64>,
    /// `c_errors[k][i] = ‖c_{i,Λ_k} − c_i*‖_∞`.
    pub c_errors: Vec<Vec<f64>>,
    /// Solver residual of each finite-Λ solve.
    pub residuals: Vec<f64>,
    pub limit_residual: f64,
    /// `log(e_k/e_{k+1}) / log(Λ_{k+1}/Λ_k)`, `None` for repeated Λ.
    pub observed_rates: Vec<Option<f64>>,
    /// Whether `sup_errors` strictly decreases.
    pub monotone_decay: bool,
}

/// Worker count for sweeps: `PBS_THREADS` if set to a positive integer, else all processors.
pub fn sweep_threads() -> usize {
    std::env::var("PBS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves the template at every Λ and at the limit map and reports the gaps.
pub fn convergence_study(
    template: &PBProblem,
    lambda_values: &[f64],
    opts: &SolveOptions,
) -> Result<ConvergenceReport, AnalysisError> {
    if lambda_values.len() < 2 {
        return Err(AnalysisError::InvalidInput("need at least two lambda values".into()));
    }
    if lambda_values.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(AnalysisError::InvalidInput("lambda values must be positive and finite".into()));
    }
    if lambda_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(AnalysisError::InvalidInput("lambda values must be ascending".into()));
    }
    let limit = template.with_map(Arc::from(template.map().limit()?));
    let problems = lambda_values
        .iter()
        .map(|&l| Ok(template.with_map(Arc::from(template.map().at_lambda(l)?))))
        .collect::<Result<Vec<_>, ModelError>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads())
        .build()
        .map_err(|e| AnalysisError::InvalidInput(e.to_string()))?;
    let start = vec![0.0; template.grid().len()];
    let run = |p: &PBProblem, stage: String| {
        solve(p, &start, opts).map_err(|source| AnalysisError::Solve { stage, source })
    };
    let (star, finite) = pool.install(|| {
        rayon::join(
            || run(&limit, "the limit map".into()),
            || {
                problems
                    .par_iter()
                    .zip(lambda_values)
                    .map(|(p, l)| run(p, format!("lambda={l}")))
                    .collect::<Vec<_>>()
            },
        )
    });
    let star = star?;
    let finite = finite.into_iter().collect::<Result<Vec<_>, _>>()?;

    let sup_errors: Vec<f64> = finite.iter().map(|s| sup_gap(&s.phi, &star.phi)).collect();
    let c_errors = finite
        .iter()
        .map(|s| {
            s.concentrations
                .iter()
                .zip(&star.concentrations)
                .map(|(a, b)| sup_gap(a, b))
                .collect()
        })
        .collect();
    let observed_rates = sup_errors
        .windows(2)
        .zip(lambda_values.windows(2))
        .map(|(e, l)| (l[1] > l[0]).then(|| (e[0] / e[1]).ln() / (l[1] / l[0]).ln()))
        .collect();
    Ok(ConvergenceReport {
        lambda_values: lambda_values.to_vec(),
        monotone_decay: sup_errors.windows(2).all(|w| w[1] < w[0]),
        c_errors,
        residuals: finite.iter().map(|s| s.residual_inf).collect(),
        limit_residual: star.residual_inf,
        observed_rates,
        sup_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{conc_lambda_zero, conc_weighted_a1, StericModel};
    use crate::spectral::lgl_grid;

    fn four_ion_system(lambda: f64) -> IonSystem {
        IonSystem::new(
            vec![0.0, 1.0, -1.0, 2.0],
            StericModel::WeightedA1 {
                gamma: 0.99,
                weights: vec![0.01, 0.01, 0.97],
            },
            lambda,
            1.0,
            vec![0.0, 0.0, -5.0, -5.0],
        )
        .unwrap()
    }

    fn proportional(lambda: f64) -> IonSystem {
        let z = [1.0, -1.0, 2.0];
        let mut v = vec![0.0];
        v.extend(z);
        IonSystem::new(v, StericModel::proportional(0.99, &z), lambda, 1.0, vec![0.0, 0.0, -5.0, -5.0])
            .unwrap()
    }

    fn symmetric(lambda: f64) -> IonSystem {
        IonSystem::new(
            vec![0.0, 1.0, -1.0],
            StericModel::WeightedA1 {
                gamma: 0.5,
                weights: vec![0.25, 0.25],
            },
            lambda,
            1.0,
            vec![0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn uniform_partition() {
        let t = tabulate_profile(&four_ion_system(4.0), -10.0, 10.0, 1024).unwrap();
        assert_eq!(t.len(), 1025);
        assert_eq!(t.phi()[0], -10.0);
        assert_eq!(t.phi()[1024], 10.0);
        let h = 20.0 / 1024.0;
        for w in t.phi().windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - h).abs() <= 1e-12);
        }
    }

    #[test]
    fn symmetric_three_rows() {
        let t = tabulate_profile(&symmetric(1.0), -1.0, 1.0, 2).unwrap();
        let f = t.f();
        assert_eq!(f.len(), 3);
        assert!(f[0] > 0.0);
        assert!(f[1].abs() <= 1e-15);
        assert!((f[0] + f[2]).abs() <= 1e-14);
    }

    #[test]
    fn bad_ranges() {
        let s = symmetric(1.0);
        assert!(tabulate_profile(&s, 1.0, 1.0, 8).is_err());
        assert!(tabulate_profile(&s, -1.0, 1.0, 1).is_err());
        assert!(tabulate_profile(&s, f64::NAN, 1.0, 8).is_err());
    }

    #[test]
    fn positive_slope_at_minus_two() {
        let t = tabulate_profile(&four_ion_system(4.0), -10.0, 10.0, 1024).unwrap();
        // −2 falls between grid rows; both neighbours have positive slope
        let k = t.phi().iter().position(|&p| p > -2.0).unwrap();
        assert!(t.df_dphi()[k - 1] > 0.0 && t.df_dphi()[k] > 0.0);
    }

    #[test]
    fn gamma_zero_is_scaled_boltzmann() {
        let lambda = 2.5;
        let sys = IonSystem::new(
            vec![0.0, 1.0, -2.0],
            StericModel::WeightedA1 {
                gamma: 0.0,
                weights: vec![0.0, 0.0],
            },
            lambda,
            1.0,
            vec![0.0, 0.3, -0.4],
        )
        .unwrap();
        let base = sys.with_lambda(0.0).unwrap();
        let t = tabulate_profile(&sys, -3.0, 3.0, 60).unwrap();
        // c0 solves ln c0 + Λc0 = Λ, so c0 = 1 for μ̃₀ = 1
        for (phi, row) in t.phi().iter().zip(t.rows()) {
            let b = conc_lambda_zero(&base, *phi).unwrap();
            assert!((row.c[0] - 1.0).abs() <= 1e-12);
            assert!((row.f - b.f).abs() <= 1e-12 * b.f.abs().max(1.0), "{phi}");
        }
    }

    #[test]
    fn four_ion_system_oscillates() {
        let coarse = detect_oscillation(&tabulate_profile(&four_ion_system(4.0), -10.0, 10.0, 1024).unwrap());
        let fine = detect_oscillation(&tabulate_profile(&four_ion_system(4.0), -10.0, 10.0, 2048).unwrap());
        assert!(!coarse.is_monotone);
        assert!(!coarse.sign_changes.is_empty());
        assert_eq!(coarse.sign_changes.len(), fine.sign_changes.len());
        let sys = four_ion_system(4.0);
        for (&p, &s) in coarse.extremum_locations.iter().zip(&coarse.extremum_slopes) {
            assert!(s.abs() <= 1e-6, "{p}: {s}");
            assert_eq!(conc_weighted_a1(&sys, p).unwrap().df_dphi, s);
        }
        for (a, b) in coarse.extremum_locations.iter().zip(&fine.extremum_locations) {
            assert!((a - b).abs() <= 1e-7);
        }
    }

    #[test]
    fn proportional_and_limit_are_monotone() {
        let t = tabulate_profile(&proportional(4.0), -10.0, 10.0, 1024).unwrap();
        let r = detect_oscillation(&t);
        assert!(r.is_monotone);
        assert!(r.sign_changes.is_empty() && r.extremum_locations.is_empty());
        for sys in [proportional(4.0), symmetric(1.0)] {
            let lim: Arc<dyn ConcentrationMap> = Arc::from(build_map(&sys, Source::Limit).unwrap());
            let r = detect_oscillation(&tabulate_map(lim, -10.0, 10.0, 1024).unwrap());
            assert!(r.is_monotone);
        }
    }

    #[test]
    fn brackets_skip_exact_zeros() {
        assert_eq!(sign_change_brackets(&[1.0, 0.0, -1.0, -2.0, 0.0, 3.0]), vec![(0, 2), (3, 5)]);
        assert!(sign_change_brackets(&[0.0, -1.0, 0.0, -1.0]).is_empty());
    }

    fn four_ion_problem(order: usize, sys: &IonSystem) -> PBProblem {
        let grid = Arc::new(lgl_grid(order).unwrap());
        let map: Arc<dyn ConcentrationMap> = Arc::from(build_map(sys, Source::Finite).unwrap());
        PBProblem::uniform(grid, 0.1, 0.0, 0.1, -10.0, 10.0, map).unwrap()
    }

    #[test]
    fn spatial_scan_uses_chain_rule() {
        let p = four_ion_problem(64, &four_ion_system(4.0));
        let s = solve(&p, &vec![0.0; 65], &SolveOptions::default()).unwrap();
        let r = spatial_profile(&p, &s).unwrap();
        let d = p.grid().differentiate(&s.f_nodes).unwrap();
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // the nodal derivative of f∘φ approximates the chain-rule slope on a smooth solution
        let gap = r.slope.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-2 * scale, "{gap} vs {scale}");
        assert_eq!(r.is_monotone, r.sign_changes.is_empty());
        for &x in &r.extremum_locations {
            assert!(x > -1.0 && x < 1.0);
        }
    }

    #[test]
    fn study_rejects_bad_sweeps() {
        let p = four_ion_problem(16, &proportional(1.0));
        let o = SolveOptions::default();
        assert!(convergence_study(&p, &[10.0], &o).is_err());
        assert!(convergence_study(&p, &[100.0, 10.0], &o).is_err());
        assert!(convergence_study(&p, &[0.0, 10.0], &o).is_err());
    }

    #[test]
    fn repeated_lambda_is_deterministic() {
        let p = four_ion_problem(32, &proportional(1.0));
        let r = convergence_study(&p, &[10.0, 10.0], &SolveOptions::default()).unwrap();
        assert_eq!(r.sup_errors[0], r.sup_errors[1]);
        assert_eq!(r.observed_rates, vec![None]);
        assert!(!r.monotone_decay);
    }

    #[test]
    fn proportional_sweep_decays() {
        let p = four_ion_problem(64, &proportional(1.0));
        let r = convergence_study(&p, &[10.0, 1e2, 1e3], &SolveOptions::default()).unwrap();
        assert!(r.monotone_decay, "{:?}", r.sup_errors);
        assert!(r.sup_errors[2] <= 1e-2 * 10.0, "{:?}", r.sup_errors);
        assert_eq!(r.c_errors.len(), 3);
        assert!(r.c_errors.iter().all(|c| c.len() == 4));
        assert!(r.observed_rates.iter().all(|r| r.is_some_and(|v| v > 0.0)));
    }
}
