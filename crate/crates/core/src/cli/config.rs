//! INI-style run configuration.
//!
//! ```text
//! [system]
//! model = weighted_a1
//! z = 0, 1, -1, 2
//! gamma = 0.99
//! gamma_vec = 0.01, 0.01, 0.97
//! lambda = 4
//! mu_tilde0 = 1
//! mu_hat = 0, 0, -5, -5
//!
//! [domain]
//! grid_size = 256
//! eta = 0.1
//! eps = 0.1
//! rho0 = 0
//! phi_bd_left = -10
//! phi_bd_right = 10
//!
//! [run]
//! lambdas = 0.5, 1, 2, 4
//! ```
//!
//! `a3a4` takes `lambda_vec` (one exponent per species), `general` takes one matrix row per
//! species as `g0 = …`, `g1 = …`. `eps` and `rho0` are a number or a path to a file of nodal
//! values.

use std::path::{Path, PathBuf};

use ini::Ini;
use nalgebra::DMatrix;

use crate::models::{IonSystem, ModelError, StericModel};

pub const DEFAULT_PHI_RANGE: (f64, f64) = (-10.0, 10.0);
pub const DEFAULT_PROFILE_INTERVALS: usize = 1024;
pub const DEFAULT_GRID_SIZE: usize = 256;
pub const DEFAULT_RHO0: f64 = 0.0;

const SYSTEM_KEYS: &[&str] = &[
    "n", "model", "z", "gamma", "gamma_vec", "lambda_vec", "lambda", "mu_tilde0", "mu_tilde",
    "mu_hat",
];
const DOMAIN_KEYS: &[&str] = &["grid_size", "eta", "eps", "rho0", "phi_bd_left", "phi_bd_right"];
const RUN_KEYS: &[&str] = &["phi_min", "phi_max", "profile_intervals", "lambdas", "out"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Value {
        section: &'static str,
        key: String,
        msg: String,
    },
    #[error("{0}")]
    Structure(String),
    #[error("[system] {0}")]
    System(#[from] ModelError),
    #[error("{path}: {msg}")]
    NodalFile { path: PathBuf, msg: String },
}

/// A coefficient given as one value for every node or as a file of nodal values.
#[derive(Debug, Clone, PartialEq)]
pub enum Nodal {
    Constant(f64),
    File(PathBuf),
}

impl Nodal {
    /// Nodal values on a grid with `n` nodes; relative paths resolve against `base`.
    pub fn values(&self, n: usize, base: &Path) -> Result<Vec<f64>, ConfigError> {
        let path = match self {
            Nodal::Constant(v) => return Ok(vec![*v; n]),
            Nodal::File(p) => base.join(p),
        };
        let err = |msg: String| ConfigError::NodalFile {
            path: path.clone(),
            msg,
        };
        let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
        let values = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("not a number: {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != n {
            return Err(err(format!("expected {n} nodal values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite nodal value".into()));
        }
        Ok(values)
    }

    fn format(&self) -> String {
        match self {
            Nodal::Constant(v) => fmt(*v),
            Nodal::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub grid_size: usize,
    pub eta: f64,
    pub eps: Nodal,
    pub rho0: Nodal,
    pub phi_bd_left: f64,
    pub phi_bd_right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub phi_min: f64,
    pub phi_max: f64,
    pub profile_intervals: usize,
    pub lambdas: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            phi_min: DEFAULT_PHI_RANGE.0,
            phi_max: DEFAULT_PHI_RANGE.1,
            profile_intervals: DEFAULT_PROFILE_INTERVALS,
            lambdas: Vec::new(),
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: IonSystem,
    pub domain: Option<DomainConfig>,
    pub run: RunSettings,
}

pub(crate) fn fmt(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_string()
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(", ")
}

struct Section<'a> {
    name: &'static str,
    props: &'a ini::Properties,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.props.get(key).map(str::trim)
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            section: self.name,
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| self.err(key, "missing"))
    }

    fn number(&self, key: &str, text: &str) -> Result<f64, ConfigError> {
        let v: f64 = text
            .trim()
            .parse()
            .map_err(|_| self.err(key, format!("not a number: {text:?}")))?;
        if !v.is_finite() {
            return Err(self.err(key, "must be finite"));
        }
        Ok(v)
    }

    fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key).map(|t| self.number(key, t)).transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(key)
            .map(|t| {
                if t.is_empty() {
                    return Err(self.err(key, "empty list"));
                }
                t.split(',').map(|x| self.number(key, x)).collect()
            })
            .transpose()
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.raw(key)
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| self.err(key, format!("not a non-negative integer: {t:?}")))
            })
            .transpose()
    }

    fn nodal(&self, key: &str) -> Result<Option<Nodal>, ConfigError> {
        Ok(self.raw(key).map(|t| match t.parse::<f64>() {
            Ok(v) => Nodal::Constant(v),
            Err(_) => Nodal::File(PathBuf::from(t)),
        }))
    }
}

fn check_keys(section: &Section, allowed: &[&str]) -> Result<(), ConfigError> {
    for (key, _) in section.props.iter() {
        let known = allowed.contains(&key)
            || (section.name == "system" && key.strip_prefix('g').is_some_and(|r| r.parse::<usize>().is_ok()));
        if !known {
            return Err(section.err(key, "unknown key"));
        }
        if section.props.get_all(key).count() > 1 {
            return Err(section.err(key, "given more than once"));
        }
    }
    Ok(())
}

fn parse_system(s: &Section) -> Result<IonSystem, ConfigError> {
    let z = s.list("z")?.ok_or_else(|| s.err("z", "missing"))?;
    let species = z.len();
    if let Some(n) = s.count("n")? {
        if n + 1 != species {
            return Err(s.err("n", format!("N = {n} but z lists {species} species")));
        }
    }
    let tag = s.required("model")?;
    let model = match tag {
        "conventional" => StericModel::Conventional,
        "weighted_a1" => {
            let gamma = s.real("gamma")?.ok_or_else(|| s.err("gamma", "missing"))?;
            match s.list("gamma_vec")? {
                Some(weights) => StericModel::WeightedA1 { gamma, weights },
                None => StericModel::proportional(gamma, &z[1..]),
            }
        }
        "a3a4" => StericModel::A3A4 {
            exponents: s.list("lambda_vec")?.ok_or_else(|| s.err("lambda_vec", "missing"))?,
        },
        "general" => {
            let mut rows = Vec::with_capacity(species);
            for i in 0..species {
                let key = format!("g{i}");
                let row = s.list(&key)?.ok_or_else(|| s.err(&key, "missing matrix row"))?;
                if row.len() != species {
                    return Err(s.err(&key, format!("expected {species} entries, found {}", row.len())));
                }
                rows.extend(row);
            }
            StericModel::General {
                g: DMatrix::from_row_slice(species, species, &rows),
            }
        }
        other => {
            return Err(s.err(
                "model",
                format!("unknown model {other:?} (expected weighted_a1, a3a4, general or conventional)"),
            ))
        }
    };
    for (key, used) in [
        ("gamma", tag == "weighted_a1"),
        ("gamma_vec", tag == "weighted_a1"),
        ("lambda_vec", tag == "a3a4"),
    ] {
        if !used && s.raw(key).is_some() {
            return Err(s.err(key, format!("not used by model {tag}")));
        }
    }
    if tag != "general" {
        if let Some((key, _)) = s.props.iter().find(|(k, _)| k.starts_with('g') && !SYSTEM_KEYS.contains(k)) {
            return Err(s.err(key, format!("not used by model {tag}")));
        }
    }

    let lambda = s.real("lambda")?.ok_or_else(|| s.err("lambda", "missing"))?;
    let mu_hat = s.list("mu_hat")?.unwrap_or_else(|| vec![0.0; species]);
    let sys = match (s.real("mu_tilde0")?, s.list("mu_tilde")?) {
        (Some(m0), None) => IonSystem::new(z, model, lambda, m0, mu_hat)?,
        (None, Some(mt)) => IonSystem::with_potentials(z, model, lambda, mt, mu_hat)?,
        (None, None) => return Err(s.err("mu_tilde0", "missing")),
        (Some(_), Some(_)) => return Err(s.err("mu_tilde", "give mu_tilde0 or mu_tilde, not both")),
    };
    Ok(sys)
}

fn parse_domain(s: &Section) -> Result<DomainConfig, ConfigError> {
    let grid_size = s.count("grid_size")?.unwrap_or(DEFAULT_GRID_SIZE);
    if grid_size < 2 {
        return Err(s.err("grid_size", "must be at least 2"));
    }
    let eta = s.real("eta")?.ok_or_else(|| s.err("eta", "missing"))?;
    if eta < 0.0 {
        return Err(s.err("eta", "must be >= 0"));
    }
    let eps = s.nodal("eps")?.ok_or_else(|| s.err("eps", "missing"))?;
    if let Nodal::Constant(e) = eps {
        if !(e > 0.0 && e.is_finite()) {
            return Err(s.err("eps", "must be positive and finite"));
        }
    }
    let rho0 = s.nodal("rho0")?.unwrap_or(Nodal::Constant(DEFAULT_RHO0));
    if let Nodal::Constant(r) = rho0 {
        if !r.is_finite() {
            return Err(s.err("rho0", "must be finite"));
        }
    }
    Ok(DomainConfig {
        grid_size,
        eta,
        eps,
        rho0,
        phi_bd_left: s.real("phi_bd_left")?.ok_or_else(|| s.err("phi_bd_left", "missing"))?,
        phi_bd_right: s.real("phi_bd_right")?.ok_or_else(|| s.err("phi_bd_right", "missing"))?,
    })
}

fn parse_run(s: &Section) -> Result<RunSettings, ConfigError> {
    let d = RunSettings::default();
    let phi_min = s.real("phi_min")?.unwrap_or(d.phi_min);
    let phi_max = s.real("phi_max")?.unwrap_or(d.phi_max);
    if phi_min >= phi_max {
        return Err(s.err("phi_max", format!("phi range [{phi_min}, {phi_max}] is empty")));
    }
    let profile_intervals = s.count("profile_intervals")?.unwrap_or(d.profile_intervals);
    if profile_intervals < 2 {
        return Err(s.err("profile_intervals", "must be at least 2"));
    }
    let lambdas = s.list("lambdas")?.unwrap_or_default();
    if lambdas.iter().any(|&l| l <= 0.0) {
        return Err(s.err("lambdas", "values must be positive"));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(s.err("lambdas", "values must be ascending"));
    }
    Ok(RunSettings {
        phi_min,
        phi_max,
        profile_intervals,
        lambdas,
        out: s.raw("out").map(PathBuf::from),
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let ini = Ini::load_from_str_noescape(text).map_err(|e| ConfigError::Syntax {
        line: e.line,
        msg: e.msg.to_string(),
    })?;
    let mut seen: Vec<&str> = Vec::new();
    for (name, props) in ini.iter() {
        match name {
            None if props.is_empty() => {}
            None => {
                let key = props.iter().next().map_or("", |(k, _)| k);
                return Err(ConfigError::Structure(format!("key {key:?} outside a section")));
            }
            Some(n) if !["system", "domain", "run"].contains(&n) => {
                return Err(ConfigError::Structure(format!("unknown section [{n}]")));
            }
            Some(n) if seen.contains(&n) => {
                return Err(ConfigError::Structure(format!("section [{n}] given more than once")));
            }
            Some(n) => seen.push(n),
        }
    }
    let section = |name: &'static str| ini.section(Some(name)).map(|props| Section { name, props });

    let sys = section("system").ok_or_else(|| ConfigError::Structure("missing [system] section".into()))?;
    check_keys(&sys, SYSTEM_KEYS)?;
    let domain = section("domain");
    if let Some(d) = &domain {
        check_keys(d, DOMAIN_KEYS)?;
    }
    let run = section("run");
    if let Some(r) = &run {
        check_keys(r, RUN_KEYS)?;
    }
    Ok(RunConfig {
        system: parse_system(&sys)?,
        domain: domain.as_ref().map(parse_domain).transpose()?,
        run: run.as_ref().map(parse_run).transpose()?.unwrap_or_default(),
    })
}

/// Writes a configuration that parses back to an equal `RunConfig`.
pub fn serialize(cfg: &RunConfig) -> String {
    let mut ini = Ini::new();
    let s = &cfg.system;
    {
        let mut sec = ini.with_section(Some("system"));
        sec.set("model", s.model().tag()).set("z", fmt_list(s.valences()));
        match s.model() {
            StericModel::WeightedA1 { gamma, weights } => {
                sec.set("gamma", fmt(*gamma)).set("gamma_vec", fmt_list(weights));
            }
            StericModel::A3A4 { exponents } => {
                sec.set("lambda_vec", fmt_list(exponents));
            }
            StericModel::General { g } => {
                for i in 0..g.nrows() {
                    let row: Vec<f64> = g.row(i).iter().copied().collect();
                    sec.set(format!("g{i}"), fmt_list(&row));
                }
            }
            StericModel::Conventional => {}
        }
        sec.set("lambda", fmt(s.lambda()))
            .set("mu_tilde", fmt_list(s.mu_tilde()))
            .set("mu_hat", fmt_list(s.mu_hat()));
    }
    if let Some(d) = &cfg.domain {
        ini.with_section(Some("domain"))
            .set("grid_size", d.grid_size.to_string())
            .set("eta", fmt(d.eta))
            .set("eps", d.eps.format())
            .set("rho0", d.rho0.format())
            .set("phi_bd_left", fmt(d.phi_bd_left))
            .set("phi_bd_right", fmt(d.phi_bd_right));
    }
    let r = &cfg.run;
    let mut sec = ini.with_section(Some("run"));
    sec.set("phi_min", fmt(r.phi_min))
        .set("phi_max", fmt(r.phi_max))
        .set("profile_intervals", r.profile_intervals.to_string());
    if !r.lambdas.is_empty() {
        sec.set("lambdas", fmt_list(&r.lambdas));
    }
    if let Some(out) = &r.out {
        sec.set("out", out.display().to_string());
    }
    let mut buf = Vec::new();
    ini.write_to(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ini output is UTF-8")
}
