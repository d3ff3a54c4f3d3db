//! Name-keyed registry of concentration-map strategies.

use std::collections::BTreeMap;

use super::{
    A3A4LimitMap, A3A4Map, ConcentrationMap, ConventionalMap, GeneralMap, IonSystem, ModelError,
    StericModel, WeightedA1LimitMap, WeightedA1Map,
};

pub type Builder = fn(&IonSystem) -> Result<Box<dyn ConcentrationMap>, ModelError>;

/// Whether a solve uses the finite-Λ map or its Λ → ∞ limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Finite,
    Limit,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    builders: BTreeMap<String, Builder>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding every built-in strategy.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("conventional", |s| Ok(Box::new(ConventionalMap::new(s.clone())?)));
        r.register("weighted_a1", |s| Ok(Box::new(WeightedA1Map::new(s.clone())?)));
        r.register("weighted_a1_limit", |s| {
            Ok(Box::new(WeightedA1LimitMap::new(s.clone())?))
        });
        r.register("a3a4", |s| Ok(Box::new(A3A4Map::new(s.clone())?)));
        r.register("a3a4_limit", |s| Ok(Box::new(A3A4LimitMap::new(s.clone())?)));
        r.register("general", |s| Ok(Box::new(GeneralMap::new(s.clone())?)));
        r
    }

    /// Adds or replaces a strategy, returning the previous builder if any.
    pub fn register(&mut self, name: &str, builder: Builder) -> Option<Builder> {
        self.builders.insert(name.to_string(), builder)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.builders.contains_key(name)
    }

    pub fn build(&self, name: &str, sys: &IonSystem) -> Result<Box<dyn ConcentrationMap>, ModelError> {
        let b = self
            .builders
            .get(name)
            .ok_or_else(|| ModelError::UnknownMap(name.to_string()))?;
        b(sys)
    }
}

/// Registry key of the default strategy for a model family.
pub fn default_name(model: &StericModel, source: Source) -> Result<&'static str, ModelError> {
    match (model, source) {
        (StericModel::WeightedA1 { .. }, Source::Finite) => Ok("weighted_a1"),
        (StericModel::WeightedA1 { .. }, Source::Limit) => Ok("weighted_a1_limit"),
        (StericModel::A3A4 { .. }, Source::Finite) => Ok("a3a4"),
        (StericModel::A3A4 { .. }, Source::Limit) => Ok("a3a4_limit"),
        (StericModel::Conventional, Source::Finite) => Ok("conventional"),
        (StericModel::General { .. }, Source::Finite) => Ok("general"),
        (m, Source::Limit) => Err(ModelError::NoLimit(m.tag())),
    }
}

/// Builds the default built-in map for the system's family.
pub fn build_map(sys: &IonSystem, source: Source) -> Result<Box<dyn ConcentrationMap>, ModelError> {
    Registry::builtin().build(default_name(sys.model(), source)?, sys)
}
