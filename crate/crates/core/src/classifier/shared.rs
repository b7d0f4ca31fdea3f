use std::sync::{Arc, RwLock};

use super::{ClassRegistry, ClassificationResult, ClassifyOptions, FeatureVector, Result};

/// Copy-on-write handle: readers classify against an immutable snapshot,
/// writers build a modified copy and swap it in whole.
#[derive(Debug, Clone)]
pub struct SharedRegistry {
    inner: Arc<RwLock<Arc<ClassRegistry>>>,
}

impl SharedRegistry {
    pub fn new(registry: ClassRegistry) -> Self {
        Self {
            inner: Arc::new(RwLock::new(Arc::new(registry))),
        }
    }

    pub fn snapshot(&self) -> Arc<ClassRegistry> {
        Arc::clone(&self.inner.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Applies `f` to a copy; the copy replaces the current registry only if
    /// `f` succeeds.
    pub fn update<T>(&self, f: impl FnOnce(&mut ClassRegistry) -> Result<T>) -> Result<T> {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        let mut next = ClassRegistry::clone(&guard);
        let out = f(&mut next)?;
        *guard = Arc::new(next);
        Ok(out)
    }

    pub fn replace(&self, registry: ClassRegistry) {
        *self.inner.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(registry);
    }

    pub fn classify(
        &self,
        query: &FeatureVector,
        opts: &ClassifyOptions,
    ) -> Result<ClassificationResult> {
        self.snapshot().classify_with(query, opts)
    }
}
