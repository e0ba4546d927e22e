//! Rendered-explanation cache keyed by method and feature bytes.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::FeatureVector;
use crate::explanation::ExplanationMethod;

/// SHA-256 of the method name followed by the little-endian bytes of the
/// three feature values.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn new(method: ExplanationMethod, x: &FeatureVector) -> Self {
        let mut h = Sha256::new();
        h.update(method.as_str().as_bytes());
        for v in x.to_array() {
            h.update(v.to_le_bytes());
        }
        Self(h.finalize().into())
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        f.write_str("…")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Default)]
pub struct ExplanationCache {
    entries: DashMap<CacheKey, Arc<str>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ExplanationCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the stored payload for `key`, computing and inserting it on a
    /// miss. The computation runs without holding any lock; if two callers
    /// race on the same key the first insert wins and both get its bytes.
    pub fn get_or_compute<E>(
        &self,
        key: CacheKey,
        compute: impl FnOnce() -> Result<String, E>,
    ) -> Result<(Arc<str>, bool), E> {
        if let Some(hit) = self.entries.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((Arc::clone(hit.value()), true));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let fresh: Arc<str> = compute()?.into();
        let stored = self.entries.entry(key).or_insert(fresh);
        Ok((Arc::clone(stored.value()), false))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}
