use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{ckf_update, rckf_update, FilterError, FilterState, HuberConfig, HuberResult, ProcessModel, UpdateIntermediates};

/// Result of one measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub state: FilterState,
    pub intermediates: UpdateIntermediates,
    pub huber: Option<HuberResult>,
}

/// A measurement-update rule plugged into the shared cubature prediction.
pub trait UpdateStrategy: Send + Sync {
    /// Registry key, e.g. `"ckf"`.
    fn name(&self) -> &str;

    fn update(
        &self,
        pred: &FilterState,
        z: &DVector<f64>,
        model: &dyn ProcessModel,
        u: &DVector<f64>,
        r: &DMatrix<f64>,
    ) -> Result<UpdateOutcome, FilterError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CkfStrategy;

impl UpdateStrategy for CkfStrategy {
    fn name(&self) -> &str {
        "ckf"
    }

    fn update(
        &self,
        pred: &FilterState,
        z: &DVector<f64>,
        model: &dyn ProcessModel,
        u: &DVector<f64>,
        r: &DMatrix<f64>,
    ) -> Result<UpdateOutcome, FilterError> {
        let (state, intermediates) = ckf_update(pred, z, model, u, r)?;
        Ok(UpdateOutcome {
            state,
            intermediates,
            huber: None,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RckfStrategy {
    pub huber: HuberConfig,
}

impl RckfStrategy {
    pub fn new(huber: HuberConfig) -> Result<Self, FilterError> {
        huber.validate()?;
        Ok(Self { huber })
    }
}

impl UpdateStrategy for RckfStrategy {
    fn name(&self) -> &str {
        "rckf"
    }

    fn update(
        &self,
        pred: &FilterState,
        z: &DVector<f64>,
        model: &dyn ProcessModel,
        u: &DVector<f64>,
        r: &DMatrix<f64>,
    ) -> Result<UpdateOutcome, FilterError> {
        let (state, intermediates, huber) = rckf_update(pred, z, model, u, r, &self.huber)?;
        Ok(UpdateOutcome {
            state,
            intermediates,
            huber: Some(huber),
        })
    }
}

/// Name-keyed collection of update strategies.
#[derive(Clone, Default)]
pub struct FilterRegistry {
    entries: BTreeMap<String, Arc<dyn UpdateStrategy>>,
}

impl FilterRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `ckf` and `rckf` (the latter with `huber`).
    pub fn with_builtins(huber: HuberConfig) -> Result<Self, FilterError> {
        let mut reg = Self::empty();
        reg.register(Arc::new(CkfStrategy));
        reg.register(Arc::new(RckfStrategy::new(huber)?));
        Ok(reg)
    }

    /// Inserts or replaces the strategy under its own name.
    pub fn register(&mut self, strategy: Arc<dyn UpdateStrategy>) {
        self.entries.insert(strategy.name().to_ascii_lowercase(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn UpdateStrategy>, FilterError> {
        self.entries
            .get(&name.to_ascii_lowercase())
            .cloned()
            .ok_or_else(|| FilterError::UnknownVariant(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for FilterRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}
