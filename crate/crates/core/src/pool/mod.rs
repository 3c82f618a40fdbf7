//! Labeled image pool.
//!
//! The pool holds two collections of curator-labeled images, pleasing and
//! displeasing, loaded from a JSON manifest. Valence is never inferred; it
//! is whatever the manifest says. After ingestion the pool is read-only and
//! is replaced wholesale through [`SharedPool`] when a new manifest is loaded.

mod manifest;
mod transform;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{Manifest, ManifestEntry, MANIFEST_VERSION};
pub use transform::{transform, TransformParams, CANONICAL_SIZE};

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("failed to read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Parse(String),
    #[error("image file for `{id}` not found at {path}")]
    MissingImage { id: String, path: PathBuf },
    #[error("image file for `{id}` at {path} is not a decodable raster image")]
    UndecodableImage { id: String, path: PathBuf },
    #[error("duplicate image id `{0}`")]
    DuplicateId(String),
    #[error("insufficient pool: requested {requested} images, {available} available")]
    InsufficientPool { requested: usize, available: usize },
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("image encode failed: {0}")]
    Encode(String),
}

/// Binary aesthetic label. There is no neutral class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Pleasing,
    Displeasing,
}

impl Valence {
    pub fn opposite(self) -> Self {
        match self {
            Valence::Pleasing => Valence::Displeasing,
            Valence::Displeasing => Valence::Pleasing,
        }
    }
}

impl fmt::Display for Valence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valence::Pleasing => f.write_str("pleasing"),
            Valence::Displeasing => f.write_str("displeasing"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub String);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Subject category label such as `flowers` or `cars`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Category(pub String);

impl Category {
    pub fn new(name: impl Into<String>) -> Self {
        Category(name.into())
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: ImageId,
    pub category: Category,
    pub valence: Valence,
    /// Resolved location of the raw image bytes on disk.
    pub bytes_ref: PathBuf,
    pub source_url: String,
    pub license: String,
}

/// Pool size parameters: `m` images in total, `p` pleasing and `d` displeasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PoolStats {
    pub m: usize,
    pub p: usize,
    pub d: usize,
}

impl PoolStats {
    pub fn new(pleasing: usize, displeasing: usize) -> Self {
        PoolStats {
            m: pleasing + displeasing,
            p: pleasing,
            d: displeasing,
        }
    }

    pub fn count(&self, valence: Valence) -> usize {
        match valence {
            Valence::Pleasing => self.p,
            Valence::Displeasing => self.d,
        }
    }
}

/// Per-slot seed for the image transform pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformSeed(pub u64);

/// Number of puzzles of `n` images each whose image sets are pairwise disjoint.
///
/// `n = 0` has no meaningful answer and yields 0.
pub fn max_disjoint_puzzles(stats: PoolStats, n: usize) -> usize {
    stats.m.checked_div(n).unwrap_or(0)
}

/// An immutable, validated collection of image records.
#[derive(Debug, Default)]
pub struct ImagePool {
    records: Vec<Arc<ImageRecord>>,
    by_id: HashMap<ImageId, usize>,
    // Indices into `records`, grouped by valence and then by category.
    by_valence: [Vec<usize>; 2],
    by_category: HashMap<Category, [Vec<usize>; 2]>,
}

fn valence_slot(valence: Valence) -> usize {
    match valence {
        Valence::Pleasing => 0,
        Valence::Displeasing => 1,
    }
}

impl ImagePool {
    /// Builds a pool from records without touching the filesystem.
    pub fn from_records(records: impl IntoIterator<Item = ImageRecord>) -> Result<Self, PoolError> {
        let mut pool = ImagePool::default();
        for record in records {
            if pool.by_id.contains_key(&record.id) {
                return Err(PoolError::DuplicateId(record.id.0));
            }
            let idx = pool.records.len();
            let slot = valence_slot(record.valence);
            pool.by_id.insert(record.id.clone(), idx);
            pool.by_valence[slot].push(idx);
            pool.by_category.entry(record.category.clone()).or_default()[slot].push(idx);
            pool.records.push(Arc::new(record));
        }
        Ok(pool)
    }

    /// Loads and validates a manifest. Every referenced file must exist and
    /// carry a recognizable PNG or JPEG header with non-zero dimensions.
    pub fn load_manifest(path: &Path) -> Result<Self, PoolError> {
        let text = std::fs::read_to_string(path).map_err(|source| PoolError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest = Manifest::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut seen = HashSet::new();
        let mut records = Vec::with_capacity(manifest.images.len());
        for entry in manifest.images {
            if !seen.insert(entry.id.clone()) {
                return Err(PoolError::DuplicateId(entry.id));
            }
            let bytes_ref = base.join(&entry.path);
            check_image_file(&entry.id, &bytes_ref)?;
            records.push(ImageRecord {
                id: ImageId(entry.id),
                category: Category(entry.category),
                valence: entry.valence,
                bytes_ref,
                source_url: entry.source_url,
                license: entry.license,
            });
        }
        Self::from_records(records)
    }

    pub fn stats(&self) -> PoolStats {
        PoolStats::new(self.by_valence[0].len(), self.by_valence[1].len())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &ImageId) -> Option<&Arc<ImageRecord>> {
        self.by_id.get(id).map(|&idx| &self.records[idx])
    }

    pub fn records(&self) -> impl Iterator<Item = &Arc<ImageRecord>> {
        self.records.iter()
    }

    pub fn categories(&self) -> impl Iterator<Item = &Category> {
        self.by_category.keys()
    }

    /// Number of images with `valence`, optionally restricted to one category.
    pub fn available(&self, valence: Valence, category: Option<&Category>) -> usize {
        self.candidates(valence, category).len()
    }

    fn candidates(&self, valence: Valence, category: Option<&Category>) -> &[usize] {
        let slot = valence_slot(valence);
        match category {
            None => &self.by_valence[slot],
            Some(c) => self.by_category.get(c).map(|v| v[slot].as_slice()).unwrap_or(&[]),
        }
    }

    /// Draws `count` distinct records of the given valence uniformly without
    /// replacement.
    pub fn sample_images<R: Rng + ?Sized>(
        &self,
        valence: Valence,
        category: Option<&Category>,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<Arc<ImageRecord>>, PoolError> {
        let candidates = self.candidates(valence, category);
        if candidates.len() < count {
            return Err(PoolError::InsufficientPool {
                requested: count,
                available: candidates.len(),
            });
        }
        Ok(rand::seq::index::sample(rng, candidates.len(), count)
            .into_iter()
            .map(|i| Arc::clone(&self.records[candidates[i]]))
            .collect())
    }
}

fn check_image_file(id: &str, path: &Path) -> Result<(), PoolError> {
    if !path.is_file() {
        return Err(PoolError::MissingImage {
            id: id.to_owned(),
            path: path.to_path_buf(),
        });
    }
    let undecodable = || PoolError::UndecodableImage {
        id: id.to_owned(),
        path: path.to_path_buf(),
    };
    let reader = image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|_| undecodable())?;
    match reader.format() {
        Some(image::ImageFormat::Png | image::ImageFormat::Jpeg) => {}
        _ => return Err(undecodable()),
    }
    match reader.into_dimensions() {
        Ok((w, h)) if w > 0 && h > 0 => Ok(()),
        _ => Err(undecodable()),
    }
}

/// Read-mostly handle shared by request handlers. Ingestion builds a complete
/// new pool and swaps it in, so readers never observe a partial pool.
#[derive(Debug, Default)]
pub struct SharedPool {
    current: RwLock<Arc<ImagePool>>,
}

impl SharedPool {
    pub fn new(pool: ImagePool) -> Self {
        SharedPool {
            current: RwLock::new(Arc::new(pool)),
        }
    }

    pub fn snapshot(&self) -> Arc<ImagePool> {
        Arc::clone(&self.current.read())
    }

    /// Loads `manifest_path` and replaces the current pool. On error the
    /// previous pool stays in place.
    pub fn ingest_manifest(&self, manifest_path: &Path) -> Result<PoolStats, PoolError> {
        let pool = ImagePool::load_manifest(manifest_path)?;
        let stats = pool.stats();
        *self.current.write() = Arc::new(pool);
        Ok(stats)
    }

    pub fn replace(&self, pool: ImagePool) -> PoolStats {
        let stats = pool.stats();
        *self.current.write() = Arc::new(pool);
        stats
    }

    pub fn stats(&self) -> PoolStats {
        self.current.read().stats()
    }
}
