use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Content digest (lowercase hex SHA-256) of an encoded frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(String);

impl ImageRef {
    pub fn of(bytes: &[u8]) -> Self {
        ImageRef(hex(&Sha256::digest(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())).then(|| ImageRef(s.to_ascii_lowercase()))
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Encoded frames keyed by digest, optionally mirrored to a cache directory.
/// Clones share the same storage.
#[derive(Clone, Default)]
pub struct ImageStore {
    frames: Arc<RwLock<HashMap<ImageRef, Arc<[u8]>>>>,
    cache_dir: Option<PathBuf>,
}

impl fmt::Debug for ImageStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageStore")
            .field("len", &self.len())
            .field("cache_dir", &self.cache_dir)
            .finish()
    }
}

impl ImageStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_cache_dir(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ImageStore {
            frames: Arc::default(),
            cache_dir: Some(dir),
        })
    }

    pub fn put(&self, bytes: &[u8]) -> ImageRef {
        let r = ImageRef::of(bytes);
        let mut frames = self.frames.write().expect("image store poisoned");
        if !frames.contains_key(&r) {
            if let Some(dir) = &self.cache_dir {
                let path = dir.join(r.as_str());
                if !path.exists() {
                    if let Err(e) = std::fs::write(&path, bytes) {
                        tracing::warn!(path = %path.display(), error = %e, "frame cache write failed");
                    }
                }
            }
            frames.insert(r.clone(), Arc::from(bytes));
        }
        r
    }

    pub fn get(&self, r: &ImageRef) -> Option<Arc<[u8]>> {
        if let Some(bytes) = self.frames.read().expect("image store poisoned").get(r) {
            return Some(bytes.clone());
        }
        let dir = self.cache_dir.as_ref()?;
        let bytes: Arc<[u8]> = read_cached(dir, r)?.into();
        self.frames
            .write()
            .expect("image store poisoned")
            .insert(r.clone(), bytes.clone());
        Some(bytes)
    }

    pub fn len(&self) -> usize {
        self.frames.read().expect("image store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn read_cached(dir: &Path, r: &ImageRef) -> Option<Vec<u8>> {
    let bytes = std::fs::read(dir.join(r.as_str())).ok()?;
    // a cache file has to match its name
    (ImageRef::of(&bytes) == *r).then_some(bytes)
}
