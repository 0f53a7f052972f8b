use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 over the canonical JSON of a request.
pub(crate) fn key<R: Serialize>(model: &str, kind: &str, req: &R) -> Result<String> {
    let body = serde_json::to_string(&(model, kind, req))?;
    Ok(hex::encode(Sha256::digest(body.as_bytes())))
}

type Slot = Arc<Mutex<Option<Value>>>;

/// Request cache keyed by request hash, optionally persisted as one JSON file
/// per entry. Concurrent requests for the same key compute once.
#[derive(Debug, Default)]
pub struct RequestCache {
    slots: Mutex<HashMap<String, Slot>>,
    dir: Option<PathBuf>,
}

impl RequestCache {
    pub fn in_memory() -> Self {
        RequestCache::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(RequestCache {
            slots: Mutex::new(HashMap::new()),
            dir: Some(dir),
        })
    }

    /// Returns the cached value or computes it; the flag is true on a hit.
    /// Failed computations are not cached.
    pub(crate) fn get_or_compute<F>(&self, key: &str, compute: F) -> Result<(Value, bool)>
    where
        F: FnOnce() -> Result<Value>,
    {
        let slot = {
            let mut slots = self.slots.lock().unwrap();
            slots.entry(key.to_string()).or_default().clone()
        };
        let mut guard = slot.lock().unwrap();
        if let Some(v) = guard.as_ref() {
            return Ok((v.clone(), true));
        }
        if let Some(v) = self.read_disk(key) {
            *guard = Some(v.clone());
            return Ok((v, true));
        }
        let v = compute()?;
        self.write_disk(key, &v)?;
        *guard = Some(v.clone());
        Ok((v, false))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn read_disk(&self, key: &str) -> Option<Value> {
        let path = self.path(key)?;
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn write_disk(&self, key: &str, v: &Value) -> Result<()> {
        if let Some(path) = self.path(key) {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_vec(v)?)
                .and_then(|_| std::fs::rename(&tmp, &path))
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_cache_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let k = key("m", "generate", &"req").unwrap();
        {
            let c = RequestCache::on_disk(dir.path()).unwrap();
            let (v, hit) = c.get_or_compute(&k, || Ok(Value::from("out"))).unwrap();
            assert_eq!(v, Value::from("out"));
            assert!(!hit);
        }
        let c = RequestCache::on_disk(dir.path()).unwrap();
        let (v, hit) = c
            .get_or_compute(&k, || panic!("must not recompute"))
            .unwrap();
        assert!(hit);
        assert_eq!(v, Value::from("out"));
    }

    #[test]
    fn errors_are_not_cached() {
        let c = RequestCache::in_memory();
        assert!(c.get_or_compute("k", || Err(Error::EmptyTarget)).is_err());
        let (_, hit) = c.get_or_compute("k", || Ok(Value::from(1))).unwrap();
        assert!(!hit);
    }

    #[test]
    fn keys_differ_by_model_and_kind() {
        let a = key("m1", "generate", &"x").unwrap();
        let b = key("m2", "generate", &"x").unwrap();
        let c = key("m1", "logprob", &"x").unwrap();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }
}
