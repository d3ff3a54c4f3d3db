//! Ion systems and the concentration maps `φ ↦ (c₀(φ), …, c_N(φ))`.
//!
//! Species `0` is the solvent (`z₀ = 0`); species `1..=N` are ions. For a potential
//! `φ` every map solves the equilibrium system
//!
//! ```text
//! ln c_i + z_i φ + Λ Σ_j g_ij c_j = Λ μ̃_i + μ̂_i,   i = 0..N
//! ```
//!
//! for one coupling family `g`, and reports the total ionic charge density
//! `f(φ) = Σ_{i≥1} z_i c_i(φ)` together with its derivative. Each family is a
//! [`ConcentrationMap`] strategy; [`registry::Registry`] selects one by name.

use nalgebra::DMatrix;

use crate::specfun::SpecFunError;

mod conventional;
mod general;
mod lambert_type;
pub mod registry;
mod weighted;

pub use conventional::{conc_conventional, conc_lambda_zero, ConventionalMap};
pub use general::{conc_general, GeneralMap};
pub use lambert_type::{conc_a3a4, limit_a3a4, A3A4LimitMap, A3A4Map};
pub use registry::{build_map, Registry, Source};
pub use weighted::{conc_weighted_a1, h_factor, limit_weighted_a1, WeightedA1LimitMap, WeightedA1Map};

/// Tolerance on `|Σγ_j − γ|` for the weighted family.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Symmetry tolerance for a general coupling matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest admissible eigenvalue of a general coupling matrix.
pub const PSD_TOL: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("need at least two ion species (N >= 2), got N = {0}")]
    TooFewSpecies(usize),
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("solvent valence z0 must be 0, got {0}")]
    SolventCharged(f64),
    #[error("mixed valence required: some z_i * z_j < 0 among the ions")]
    NoMixedValence,
    #[error("steric strength lambda must be >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("total volume fraction gamma must lie in [0, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("weight gamma_{index} must be >= 0, got {value}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("gamma constraint violated: sum of gamma_vec = {sum} but gamma = {gamma}")]
    WeightSum { sum: f64, gamma: f64 },
    #[error("lambda_{index} must be > 0, got {value}")]
    NonPositiveExponent { index: usize, value: f64 },
    #[error("coupling entry g[{row}][{col}] = {value} is negative")]
    NegativeCoupling { row: usize, col: usize, value: f64 },
    #[error("coupling matrix is not symmetric: g[{row}][{col}] != g[{col}][{row}]")]
    NotSymmetric { row: usize, col: usize },
    #[error("coupling matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("mu_tilde0 must be > 0, got {0}")]
    NonPositiveMuTilde(f64),
    #[error("chemical potentials violate {0}")]
    PotentialAssumption(&'static str),
    #[error("{op} requires the {expected} model, system uses {found}")]
    WrongModel {
        op: &'static str,
        expected: &'static str,
        found: &'static str,
    },
    #[error("{0} requires lambda = 0")]
    LambdaNotZero(&'static str),
    #[error("{0} requires lambda > 0")]
    LambdaZero(&'static str),
    #[error("no bracket for the solvent concentration at phi = {0}")]
    RootBracket(f64),
    #[error("root polish did not reach tolerance at phi = {phi} (residual {residual:e})")]
    RootFind { phi: f64, residual: f64 },
    #[error("equilibrium Newton did not converge at phi = {phi} after {iters} iterations (residual {residual:e})")]
    NewtonFailed { phi: f64, iters: usize, residual: f64 },
    #[error("the {0} family has no Lambda -> infinity limit map")]
    NoLimit(&'static str),
    #[error("unknown concentration map {0:?}")]
    UnknownMap(String),
    #[error("lambert W evaluation failed: {0}")]
    SpecFun(#[from] SpecFunError),
}

/// Steric coupling `g_ij`.
#[derive(Debug, Clone, PartialEq)]
pub enum StericModel {
    /// `g ≡ 0`: the conventional Poisson–Boltzmann closure.
    Conventional,
    /// Rows `g_i0 = 1 − γ`, `g_ij = γ_j` (`j ≥ 1`) with `Σ γ_j = γ`. Covers the
    /// uniform, proportional (`γ_j = γ|z_j|/Z`) and free-weight variants.
    WeightedA1 { gamma: f64, weights: Vec<f64> },
    /// `g_ij = λ_i λ_j`.
    A3A4 { exponents: Vec<f64> },
    /// Any symmetric positive semidefinite matrix with nonnegative entries.
    General { g: DMatrix<f64> },
}

impl StericModel {
    pub fn tag(&self) -> &'static str {
        match self {
            StericModel::Conventional => "conventional",
            StericModel::WeightedA1 { .. } => "weighted_a1",
            StericModel::A3A4 { .. } => "a3a4",
            StericModel::General { .. } => "general",
        }
    }

    /// Weighted model with `γ_j = γ|z_j|/Z` over the ion valences `z₁..z_N`.
    pub fn proportional(gamma: f64, ion_valences: &[f64]) -> Self {
        let total: f64 = ion_valences.iter().map(|z| z.abs()).sum();
        StericModel::WeightedA1 {
            gamma,
            weights: ion_valences
                .iter()
                .map(|z| gamma * z.abs() / total)
                .collect(),
        }
    }
}

/// Physics configuration: valences, coupling family, Λ and chemical potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct IonSystem {
    valences: Vec<f64>,
    model: StericModel,
    lambda: f64,
    mu_tilde_base: f64,
    mu_tilde: Vec<f64>,
    mu_hat: Vec<f64>,
}

impl IonSystem {
    /// Builds a system from the base potential `μ̃₀`, expanding it per family:
    /// `μ̃_i = μ̃₀` for the weighted, conventional and general models and
    /// `μ̃_i = λ_i μ̃₀` for `A3A4`.
    pub fn new(
        valences: Vec<f64>,
        model: StericModel,
        lambda: f64,
        mu_tilde0: f64,
        mu_hat: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let mu_tilde = match &model {
            StericModel::A3A4 { exponents } => exponents.iter().map(|l| l * mu_tilde0).collect(),
            _ => vec![mu_tilde0; valences.len()],
        };
        Self::with_potentials(valences, model, lambda, mu_tilde, mu_hat)
    }

    /// Builds a system from the full `μ̃` vector. The weighted family requires
    /// `μ̃_i = μ̃₀ > 0`; `A3A4` requires `μ̃_i = λ_i μ̃₀` with `μ̃₀ > 0`.
    pub fn with_potentials(
        valences: Vec<f64>,
        model: StericModel,
        lambda: f64,
        mu_tilde: Vec<f64>,
        mu_hat: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n1 = valences.len();
        if n1 < 3 {
            return Err(ModelError::TooFewSpecies(n1.saturating_sub(1)));
        }
        check_len("mu_hat", n1, mu_hat.len())?;
        check_len("mu_tilde", n1, mu_tilde.len())?;
        if valences.iter().chain(&mu_hat).chain(&mu_tilde).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("valences and chemical potentials"));
        }
        if valences[0] != 0.0 {
            return Err(ModelError::SolventCharged(valences[0]));
        }
        let ions = &valences[1..];
        if !(ions.iter().any(|&z| z > 0.0) && ions.iter().any(|&z| z < 0.0)) {
            return Err(ModelError::NoMixedValence);
        }
        if !lambda.is_finite() {
            return Err(ModelError::NonFinite("lambda"));
        }
        if lambda < 0.0 {
            return Err(ModelError::NegativeLambda(lambda));
        }

        let mu_tilde_base = match &model {
            StericModel::Conventional => mu_tilde[0],
            StericModel::WeightedA1 { gamma, weights } => {
                validate_weights(*gamma, weights, n1 - 1)?;
                let m0 = mu_tilde[0];
                if m0 <= 0.0 {
                    return Err(ModelError::NonPositiveMuTilde(m0));
                }
                if mu_tilde.iter().any(|&m| (m - m0).abs() > 1e-12 * m0.abs().max(1.0)) {
                    return Err(ModelError::PotentialAssumption("mu_tilde_i = mu_tilde_0"));
                }
                m0
            }
            StericModel::A3A4 { exponents } => {
                check_len("lambda_vec", n1, exponents.len())?;
                for (index, &value) in exponents.iter().enumerate() {
                    if !(value > 0.0 && value.is_finite()) {
                        return Err(ModelError::NonPositiveExponent { index, value });
                    }
                }
                let m0 = mu_tilde[0] / exponents[0];
                if m0 <= 0.0 {
                    return Err(ModelError::NonPositiveMuTilde(m0));
                }
                let consistent = mu_tilde
                    .iter()
                    .zip(exponents)
                    .all(|(&m, &l)| (m - l * m0).abs() <= 1e-12 * (l * m0).abs().max(1.0));
                if !consistent {
                    return Err(ModelError::PotentialAssumption(
                        "mu_tilde_i = lambda_i * mu_tilde_0",
                    ));
                }
                m0
            }
            StericModel::General { g } => {
                validate_general(g, n1)?;
                mu_tilde[0]
            }
        };

        Ok(IonSystem {
            valences,
            model,
            lambda,
            mu_tilde_base,
            mu_tilde,
            mu_hat,
        })
    }

    /// Same system at a different steric strength.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, ModelError> {
        if !lambda.is_finite() {
            return Err(ModelError::NonFinite("lambda"));
        }
        if lambda < 0.0 {
            return Err(ModelError::NegativeLambda(lambda));
        }
        Ok(IonSystem {
            lambda,
            ..self.clone()
        })
    }

    /// Number of ion species `N`.
    pub fn ion_count(&self) -> usize {
        self.valences.len() - 1
    }

    /// Number of species including the solvent, `N + 1`.
    pub fn species(&self) -> usize {
        self.valences.len()
    }

    pub fn valences(&self) -> &[f64] {
        &self.valences
    }

    pub fn model(&self) -> &StericModel {
        &self.model
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Base steric potential `μ̃₀`.
    pub fn mu_tilde0(&self) -> f64 {
        self.mu_tilde_base
    }

    pub fn mu_tilde(&self) -> &[f64] {
        &self.mu_tilde
    }

    pub fn mu_hat(&self) -> &[f64] {
        &self.mu_hat
    }

    /// `μ̄_i`: `μ̂_i − (λ_i/λ₀) μ̂₀` under `A3A4`, `μ̂_i − μ̂₀` otherwise. `μ̄₀ = 0`.
    pub fn mu_bar(&self) -> Vec<f64> {
        let h0 = self.mu_hat[0];
        match &self.model {
            StericModel::A3A4 { exponents } => self
                .mu_hat
                .iter()
                .zip(exponents)
                .map(|(h, l)| h - l / exponents[0] * h0)
                .collect(),
            _ => self.mu_hat.iter().map(|h| h - h0).collect(),
        }
    }

    /// `Z = Σ_{i≥1} |z_i|`.
    pub fn total_valence(&self) -> f64 {
        self.valences[1..].iter().map(|z| z.abs()).sum()
    }

    /// The coupling matrix `g` of the family (weighted rows are not symmetric in general).
    pub fn coupling_matrix(&self) -> DMatrix<f64> {
        let n = self.species();
        match &self.model {
            StericModel::Conventional => DMatrix::zeros(n, n),
            StericModel::WeightedA1 { gamma, weights } => DMatrix::from_fn(n, n, |_, j| {
                if j == 0 {
                    1.0 - gamma
                } else {
                    weights[j - 1]
                }
            }),
            StericModel::A3A4 { exponents } => {
                DMatrix::from_fn(n, n, |i, j| exponents[i] * exponents[j])
            }
            StericModel::General { g } => g.clone(),
        }
    }

    fn wrong_model(&self, op: &'static str, expected: &'static str) -> ModelError {
        ModelError::WrongModel {
            op,
            expected,
            found: self.model.tag(),
        }
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::LengthMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

fn validate_weights(gamma: f64, weights: &[f64], ions: usize) -> Result<(), ModelError> {
    check_len("gamma_vec", ions, weights.len())?;
    if !gamma.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(ModelError::NonFinite("gamma and gamma_vec"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ModelError::GammaOutOfRange(gamma));
    }
    for (i, &w) in weights.iter().enumerate() {
        if w < 0.0 {
            return Err(ModelError::NegativeWeight {
                index: i + 1,
                value: w,
            });
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - gamma).abs() > WEIGHT_SUM_TOL {
        return Err(ModelError::WeightSum { sum, gamma });
    }
    Ok(())
}

fn validate_general(g: &DMatrix<f64>, n: usize) -> Result<(), ModelError> {
    if g.nrows() != n || g.ncols() != n {
        return Err(ModelError::LengthMismatch {
            what: "g matrix entries",
            expected: n * n,
            got: g.nrows() * g.ncols(),
        });
    }
    for row in 0..n {
        for col in 0..n {
            let v = g[(row, col)];
            if !v.is_finite() {
                return Err(ModelError::NonFinite("g matrix"));
            }
            if v < 0.0 {
                return Err(ModelError::NegativeCoupling { row, col, value: v });
            }
            if (v - g[(col, row)]).abs() > SYMMETRY_TOL {
                return Err(ModelError::NotSymmetric { row, col });
            }
        }
    }
    let min_eig = g
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < PSD_TOL {
        return Err(ModelError::NotPositiveSemidefinite(min_eig));
    }
    Ok(())
}

/// Concentrations and charge density at one potential.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationEval {
    pub phi: f64,
    /// `c₀..c_N`, all positive.
    pub c: Vec<f64>,
    /// `ln c_i` as computed internally (finite even where `c_i` would underflow).
    pub log_c: Vec<f64>,
    pub dc_dphi: Vec<f64>,
    /// `f = Σ_{i≥1} z_i c_i`.
    pub f: f64,
    pub df_dphi: f64,
}

impl ConcentrationEval {
    pub(crate) fn from_logs(phi: f64, z: &[f64], log_c: Vec<f64>, dc_dphi: Vec<f64>) -> Self {
        let c: Vec<f64> = log_c.iter().map(|l| l.exp()).collect();
        let f = z.iter().zip(&c).map(|(z, c)| z * c).sum();
        let df_dphi = z.iter().zip(&dc_dphi).map(|(z, d)| z * d).sum();
        ConcentrationEval {
            phi,
            c,
            log_c,
            dc_dphi,
            f,
            df_dphi,
        }
    }
}

/// Λ → ∞ limit of a concentration map at one potential.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEval {
    pub phi: f64,
    pub c_star: Vec<f64>,
    pub dc_star: Vec<f64>,
    pub f_star: f64,
    pub df_star: f64,
    /// `m* = lim_{φ→∞} f*(φ)` (weighted family only; `−∞` when the limit is unbounded).
    pub m_star: Option<f64>,
    /// `M* = lim_{φ→−∞} f*(φ)` (weighted family only).
    pub big_m_star: Option<f64>,
    /// `μ̃₀ N max_i |z_i|/λ_i`, an a priori bound on `|f̃*|` (`A3A4` only).
    pub abs_bound: Option<f64>,
    /// Indices of the largest valence.
    pub argmax_z: Vec<usize>,
    /// Indices of the smallest valence.
    pub argmin_z: Vec<usize>,
}

impl LimitEval {
    pub fn to_eval(&self) -> ConcentrationEval {
        ConcentrationEval {
            phi: self.phi,
            c: self.c_star.clone(),
            log_c: self.c_star.iter().map(|c| c.ln()).collect(),
            dc_dphi: self.dc_star.clone(),
            f: self.f_star,
            df_dphi: self.df_star,
        }
    }
}

/// Residual of the equilibrium system at `(φ, c)`:
/// `ln c_i + z_i φ + Λ Σ_j g_ij c_j − Λ μ̃_i − μ̂_i`.
pub fn equilibrium_residual(sys: &IonSystem, phi: f64, c: &[f64]) -> Vec<f64> {
    let g = sys.coupling_matrix();
    let lam = sys.lambda();
    (0..sys.species())
        .map(|i| {
            let coupling: f64 = (0..sys.species()).map(|j| g[(i, j)] * c[j]).sum();
            c[i].ln() + sys.valences()[i] * phi + lam * coupling
                - lam * sys.mu_tilde()[i]
                - sys.mu_hat()[i]
        })
        .collect()
}

/// A concentration-map strategy.
pub trait ConcentrationMap: Send + Sync + std::fmt::Debug {
    /// Registry name of the strategy.
    fn name(&self) -> &'static str;

    fn system(&self) -> &IonSystem;

    /// Steric strength used by the map; `None` for the Λ → ∞ limit maps.
    fn lambda(&self) -> Option<f64>;

    fn eval(&self, phi: f64) -> Result<ConcentrationEval, ModelError>;

    /// The finite-Λ member of the same family at `lambda`.
    fn at_lambda(&self, lambda: f64) -> Result<Box<dyn ConcentrationMap>, ModelError>;

    /// The Λ → ∞ limit of the family.
    fn limit(&self) -> Result<Box<dyn ConcentrationMap>, ModelError>;
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// `μ̄_i − z_i φ` for every species.
pub(crate) fn exponents_at(sys: &IonSystem, mu_bar: &[f64], phi: f64) -> Vec<f64> {
    mu_bar
        .iter()
        .zip(sys.valences())
        .map(|(m, z)| m - z * phi)
        .collect()
}

pub(crate) fn index_sets(z: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let zmin = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmax = (0..z.len()).filter(|&i| z[i] == zmax).collect();
    let argmin = (0..z.len()).filter(|&i| z[i] == zmin).collect();
    (argmax, argmin)
}
