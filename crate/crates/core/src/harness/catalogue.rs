use std::collections::HashMap;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pool::{Category, ImageId, ImagePool, ImageRecord, PoolStats, Valence};
use crate::puzzle::{generate_puzzle, PuzzleSpec};

use super::HarnessError;

/// A file-less pool with `stats.p` pleasing and `stats.d` displeasing images
/// in a single category.
pub fn synthetic_pool(stats: PoolStats) -> ImagePool {
    let mk = |i: usize, valence: Valence| ImageRecord {
        id: ImageId(format!("img-{i:06}")),
        category: Category::new("any"),
        valence,
        bytes_ref: PathBuf::new(),
        source_url: String::new(),
        license: String::new(),
    };
    let records = (0..stats.p)
        .map(|i| mk(i, Valence::Pleasing))
        .chain((0..stats.d).map(|i| mk(stats.p + i, Valence::Displeasing)));
    ImagePool::from_records(records).expect("synthetic ids are unique")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogueState {
    /// Times each image has been seen.
    pub observed: HashMap<ImageId, u32>,
    pub puzzles_solved: usize,
    /// Chao1 richness estimate from the sighting counts.
    pub pool_size_estimate: Option<usize>,
    pub pool_size: usize,
}

impl CatalogueState {
    pub fn distinct_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn coverage(&self) -> f64 {
        if self.pool_size == 0 {
            0.0
        } else {
            self.observed.len() as f64 / self.pool_size as f64
        }
    }

    fn estimate(&self) -> Option<usize> {
        if self.observed.is_empty() {
            return None;
        }
        let seen = self.observed.len() as f64;
        let f1 = self.observed.values().filter(|&&c| c == 1).count() as f64;
        let f2 = self.observed.values().filter(|&&c| c == 2).count() as f64;
        let extra = if f2 > 0.0 {
            f1 * f1 / (2.0 * f2)
        } else {
            f1 * (f1 - 1.0) / 2.0
        };
        Some((seen + extra).round() as usize)
    }
}

/// An attacker's helpers solve `puzzles_observed` puzzles drawn from a pool
/// with the given stats and write down every image they were shown.
pub fn run_catalogue<R: Rng + ?Sized>(
    pool_stats: PoolStats,
    spec: &PuzzleSpec,
    puzzles_observed: usize,
    rng: &mut R,
) -> Result<CatalogueState, HarnessError> {
    let pool = synthetic_pool(pool_stats);
    catalogue_pool(&pool, spec, puzzles_observed, rng)
}

fn catalogue_pool<R: Rng + ?Sized>(
    pool: &ImagePool,
    spec: &PuzzleSpec,
    puzzles_observed: usize,
    rng: &mut R,
) -> Result<CatalogueState, HarnessError> {
    let mut state = CatalogueState {
        observed: HashMap::new(),
        puzzles_solved: 0,
        pool_size_estimate: None,
        pool_size: pool.len(),
    };
    for _ in 0..puzzles_observed {
        let puzzle = generate_puzzle(spec, pool, rng)?;
        for slot in &puzzle.slots {
            *state.observed.entry(slot.image.id.clone()).or_default() += 1;
        }
        state.puzzles_solved += 1;
    }
    state.pool_size_estimate = state.estimate();
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogueSummary {
    pub pool: PoolStats,
    pub n: usize,
    pub k: usize,
    pub puzzles_observed: usize,
    pub repeats: usize,
    pub mean_coverage: f64,
    pub min_coverage: f64,
    pub max_coverage: f64,
    pub expected_coverage: f64,
}

/// Mean coverage over `repeats` independent catalogue runs.
pub fn run_catalogue_repeats<R: Rng + ?Sized>(
    pool_stats: PoolStats,
    spec: &PuzzleSpec,
    puzzles_observed: usize,
    repeats: usize,
    rng: &mut R,
) -> Result<CatalogueSummary, HarnessError> {
    let pool = synthetic_pool(pool_stats);
    let mut total = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for _ in 0..repeats {
        let c = catalogue_pool(&pool, spec, puzzles_observed, rng)?.coverage();
        total += c;
        min = min.min(c);
        max = max.max(c);
    }
    let mean = if repeats == 0 { 0.0 } else { total / repeats as f64 };
    Ok(CatalogueSummary {
        pool: pool_stats,
        n: spec.n,
        k: spec.k,
        puzzles_observed,
        repeats,
        mean_coverage: mean,
        min_coverage: if repeats == 0 { 0.0 } else { min },
        max_coverage: if repeats == 0 { 0.0 } else { max },
        expected_coverage: expected_coverage(pool_stats, spec, puzzles_observed),
    })
}

/// Expected fraction of the pool seen after `q` puzzles.
///
/// Each puzzle draws `k` of the `t` target-valence images and `n - k` of the
/// `o` others, so a given target image escapes one puzzle with probability
/// `1 - k/t` and an other-valence image with `1 - (n-k)/o`. When
/// `k/t = (n-k)/o` this is the valence-blind `1 - (1 - n/m)^q`.
pub fn expected_coverage(stats: PoolStats, spec: &PuzzleSpec, q: usize) -> f64 {
    if stats.m == 0 {
        return 0.0;
    }
    let target = spec.polarity.target_valence();
    let t = stats.count(target) as f64;
    let o = stats.count(target.opposite()) as f64;
    let seen = |count: f64, per_puzzle: f64| {
        if count == 0.0 {
            0.0
        } else {
            count * (1.0 - (1.0 - per_puzzle / count).powi(q as i32))
        }
    };
    (seen(t, spec.k as f64) + seen(o, (spec.n - spec.k) as f64)) / stats.m as f64
}
