//! Content-addressed stage cache.
//!
//! An entry lives at `<root>/<stage>/<key>.<ext>`, where the key hashes the
//! stage name, the crate version, the stage-relevant configuration and the
//! digests of the stage inputs. Writes go through temp files and renames, so
//! concurrent writers of the same entry are safe.

use std::cell::Cell;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::fsutil::{read_bytes, write_atomic};

/// Hex SHA-256 of a byte string.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Builds a cache key from labelled parts; parts are length-prefixed so no
/// two different part lists collide by concatenation.
#[derive(Debug, Clone)]
pub struct KeyBuilder {
    hasher: Sha256,
}

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        let mut k = Self { hasher: Sha256::new() };
        k.push("stage", stage.as_bytes());
        k.push("version", env!("CARGO_PKG_VERSION").as_bytes());
        k
    }

    pub fn push(&mut self, label: &str, bytes: &[u8]) -> &mut Self {
        for part in [label.as_bytes(), bytes] {
            self.hasher.update((part.len() as u64).to_le_bytes());
            self.hasher.update(part);
        }
        self
    }

    /// Adds the JSON encoding of `value`.
    pub fn json<T: serde::Serialize>(&mut self, label: &str, value: &T) -> &mut Self {
        self.push(label, &serde_json::to_vec(value).expect("config serializes"))
    }

    pub fn finish(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

#[derive(Debug)]
pub struct Cache {
    root: PathBuf,
    hits: Cell<usize>,
    misses: Cell<usize>,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), hits: Cell::new(0), misses: Cell::new(0) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(stage).join(format!("{key}.{ext}"))
    }

    /// `(hits, misses)` since construction.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits.get(), self.misses.get())
    }

    /// Returns the cached artifacts for `key`, computing and storing them when
    /// any of the `exts` files is absent. `compute` must return one byte
    /// string per extension.
    pub fn get_or_compute<F>(&self, stage: &str, key: &str, exts: &[&str], compute: F) -> Result<Vec<Vec<u8>>>
    where
        F: FnOnce() -> Result<Vec<Vec<u8>>>,
    {
        let paths: Vec<PathBuf> = exts.iter().map(|e| self.entry_path(stage, key, e)).collect();
        if paths.iter().all(|p| p.is_file()) {
            self.hits.set(self.hits.get() + 1);
            return paths.iter().map(|p| read_bytes(p)).collect();
        }
        self.misses.set(self.misses.get() + 1);
        let outputs = compute()?;
        assert_eq!(outputs.len(), exts.len(), "stage `{stage}` returned the wrong number of artifacts");
        for (p, bytes) in paths.iter().zip(&outputs) {
            write_atomic(p, bytes)?;
        }
        Ok(outputs)
    }

    /// Whether every artifact of `key` is present.
    pub fn contains(&self, stage: &str, key: &str, exts: &[&str]) -> bool {
        exts.iter().all(|e| self.entry_path(stage, key, e).is_file())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_length_prefixed() {
        let a = KeyBuilder::new("s").push("x", b"ab").push("y", b"c").finish();
        let b = KeyBuilder::new("s").push("x", b"a").push("y", b"bc").finish();
        assert_ne!(a, b);
        assert_eq!(a, KeyBuilder::new("s").push("x", b"ab").push("y", b"c").finish());
    }
}
