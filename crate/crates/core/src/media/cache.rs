use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::digest::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssetKind {
    Image,
    VideoClip,
    Keyframe,
    Mask,
}

/// A cached media asset attached to a plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRef {
    pub digest: Digest,
    pub kind: AssetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<usize>,
    /// Source image of a mask, or source clip of a keyframe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<Digest>,
}

impl AssetRef {
    pub fn new(digest: Digest, kind: AssetKind) -> Self {
        AssetRef { digest, kind, source_url: None, step_index: None, parent: None }
    }
}

/// Content-addressed byte store, in memory with an optional backing
/// directory (one file per digest).
#[derive(Debug, Default)]
pub struct AssetCache {
    blobs: RwLock<HashMap<Digest, Arc<[u8]>>>,
    dir: Option<PathBuf>,
}

impl AssetCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(AssetCache { blobs: RwLock::default(), dir: Some(dir) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Stores `bytes` and returns their digest. Storing the same bytes again
    /// is a no-op.
    pub fn put(&self, bytes: &[u8]) -> std::io::Result<Digest> {
        let digest = Digest::of(bytes);
        if self.blobs.read().contains_key(&digest) {
            return Ok(digest);
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(digest.as_str());
            if !path.exists() {
                std::fs::write(&path, bytes)?;
            }
        }
        self.blobs.write().entry(digest.clone()).or_insert_with(|| Arc::from(bytes));
        Ok(digest)
    }

    pub fn get(&self, digest: &Digest) -> Option<Arc<[u8]>> {
        if let Some(b) = self.blobs.read().get(digest) {
            return Some(b.clone());
        }
        let bytes: Arc<[u8]> = std::fs::read(self.dir.as_ref()?.join(digest.as_str())).ok()?.into();
        if Digest::of(&bytes) != *digest {
            return None;
        }
        self.blobs.write().insert(digest.clone(), bytes.clone());
        Some(bytes)
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.get(digest).is_some()
    }

    /// Number of distinct blobs held in memory.
    pub fn len(&self) -> usize {
        self.blobs.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = AssetCache::with_dir(dir.path()).unwrap();
        let a = cache.put(b"same bytes").unwrap();
        let b = cache.put(b"same bytes").unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn reads_back_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let d = AssetCache::with_dir(dir.path()).unwrap().put(b"persisted").unwrap();
        let fresh = AssetCache::with_dir(dir.path()).unwrap();
        assert_eq!(&*fresh.get(&d).unwrap(), b"persisted");
        assert!(fresh.get(&Digest::of(b"other")).is_none());
    }
}
