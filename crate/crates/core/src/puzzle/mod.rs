//! Puzzle assembly, answer checking and difficulty escalation.
//!
//! A puzzle shows `n` images of which `k` carry the target valence. Under the
//! default polarity the targets are the displeasing images hidden among
//! pleasing ones; the reversed polarity asks for the pleasing ones. A random
//! clicker picking `k` slots succeeds with probability `1 / C(n, k)`.

mod combinatorics;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pool::{Category, ImagePool, ImageRecord, PoolError, TransformSeed, Valence};

pub(crate) use combinatorics::percent_label;
pub use combinatorics::{binomial, GuessProbability, MAX_BINOMIAL_N};

#[derive(Debug, Error)]
pub enum PuzzleError {
    #[error("binomial coefficient undefined for k={k} > n={n}")]
    BinomialRange { n: u64, k: u64 },
    #[error("binomial coefficient limited to n <= 64, got n={n}")]
    BinomialTooLarge { n: u64 },
    #[error("invalid puzzle spec: need 1 <= k < n <= 64, got n={n}, k={k}")]
    InvalidSpec { n: usize, k: usize },
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("no category holds {targets} {target} and {others} {other} images")]
    NoCategoryLargeEnough {
        target: Valence,
        targets: usize,
        other: Valence,
        others: usize,
    },
    #[error("selected slot {index} is out of range for a {n}-image puzzle")]
    SlotOutOfRange { index: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    FindDispleasing,
    FindPleasing,
}

impl Polarity {
    pub fn target_valence(self) -> Valence {
        match self {
            Polarity::FindDispleasing => Valence::Displeasing,
            Polarity::FindPleasing => Valence::Pleasing,
        }
    }

    /// Instruction shown to the user. The count of targets is only implied
    /// by singular or plural wording.
    pub fn instruction(self, k: usize) -> &'static str {
        match (self, k) {
            (Polarity::FindDispleasing, 1) => "click on the image that does not look nice",
            (Polarity::FindDispleasing, _) => "click on the images that do not look nice",
            (Polarity::FindPleasing, 1) => "click on the image that looks nice",
            (Polarity::FindPleasing, _) => "click on the images that look nice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategoryMode {
    /// All images in a puzzle come from one category.
    Homogeneous,
    /// Images are drawn from the whole pool.
    Mixed,
}

impl std::str::FromStr for CategoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "homogeneous" => Ok(CategoryMode::Homogeneous),
            "mixed" => Ok(CategoryMode::Mixed),
            other => Err(format!(
                "unknown category mode `{other}` (expected homogeneous or mixed)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PuzzleSpec {
    pub n: usize,
    pub k: usize,
    pub polarity: Polarity,
    pub category_mode: CategoryMode,
    pub escalation_level: u32,
}

impl Default for PuzzleSpec {
    fn default() -> Self {
        PuzzleSpec {
            n: 9,
            k: 1,
            polarity: Polarity::FindDispleasing,
            category_mode: CategoryMode::Mixed,
            escalation_level: 0,
        }
    }
}

impl PuzzleSpec {
    /// A level-0 spec with the given shape.
    pub fn new(n: usize, k: usize, polarity: Polarity, category_mode: CategoryMode) -> Result<Self, PuzzleError> {
        let spec = PuzzleSpec {
            n,
            k,
            polarity,
            category_mode,
            escalation_level: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PuzzleError> {
        if self.k >= 1 && self.k < self.n && self.n as u64 <= MAX_BINOMIAL_N {
            Ok(())
        } else {
            Err(PuzzleError::InvalidSpec { n: self.n, k: self.k })
        }
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn instruction(&self) -> &'static str {
        self.polarity.instruction(self.k)
    }
}

impl fmt::Display for PuzzleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={} k={} level={}", self.n, self.k, self.escalation_level)
    }
}

/// Chance that a uniformly random `k`-subset of slots is the answer set.
pub fn random_guess_probability(spec: &PuzzleSpec) -> Result<GuessProbability, PuzzleError> {
    spec.validate()?;
    Ok(GuessProbability::one_in(binomial(spec.n as u64, spec.k as u64)?))
}

/// `(n, k)` per escalation level. Level 0 is the default puzzle.
pub const ESCALATION_SCHEDULE: [(usize, usize); 3] = [(9, 1), (12, 2), (12, 3)];

/// Next harder spec. The final level maps to itself. Polarity and category
/// mode carry over unchanged.
pub fn escalate(spec: &PuzzleSpec) -> PuzzleSpec {
    let last = ESCALATION_SCHEDULE.len() as u32 - 1;
    if spec.escalation_level >= last {
        return *spec;
    }
    let level = spec.escalation_level + 1;
    let (n, k) = ESCALATION_SCHEDULE[level as usize];
    PuzzleSpec {
        n,
        k,
        escalation_level: level,
        ..*spec
    }
}

/// Applies [`escalate`] `steps` times.
pub fn escalate_by(spec: &PuzzleSpec, steps: usize) -> PuzzleSpec {
    let mut out = *spec;
    for _ in 0..steps.min(ESCALATION_SCHEDULE.len()) {
        out = escalate(&out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub image: Arc<ImageRecord>,
    pub seed: TransformSeed,
}

#[derive(Debug, Clone)]
pub struct Puzzle {
    pub spec: PuzzleSpec,
    pub slots: Vec<Slot>,
    pub answer_set: BTreeSet<usize>,
    pub instruction: String,
}

impl Puzzle {
    /// Checks the structural invariants: slot and answer counts, valence of
    /// every slot against the polarity, and no repeated image.
    pub fn check_invariants(&self) -> Result<(), String> {
        let spec = &self.spec;
        if self.slots.len() != spec.n {
            return Err(format!("{} slots for n={}", self.slots.len(), spec.n));
        }
        if self.answer_set.len() != spec.k {
            return Err(format!("{} answers for k={}", self.answer_set.len(), spec.k));
        }
        if let Some(&i) = self.answer_set.iter().find(|&&i| i >= spec.n) {
            return Err(format!("answer index {i} out of range"));
        }
        let target = spec.polarity.target_valence();
        for (i, slot) in self.slots.iter().enumerate() {
            let want = if self.answer_set.contains(&i) {
                target
            } else {
                target.opposite()
            };
            if slot.image.valence != want {
                return Err(format!("slot {i} holds {} image, expected {want}", slot.image.valence));
            }
        }
        let distinct: BTreeSet<_> = self.slots.iter().map(|s| &s.image.id).collect();
        if distinct.len() != self.slots.len() {
            return Err("an image appears twice".into());
        }
        Ok(())
    }
}

/// Draws a puzzle for `spec` from `pool`. Slot order is a uniform shuffle
/// and every slot gets its own transform seed.
pub fn generate_puzzle<R: Rng + ?Sized>(
    spec: &PuzzleSpec,
    pool: &ImagePool,
    rng: &mut R,
) -> Result<Puzzle, PuzzleError> {
    spec.validate()?;
    let target = spec.polarity.target_valence();
    let other = target.opposite();
    let (targets, others) = (spec.k, spec.n - spec.k);

    let category = match spec.category_mode {
        CategoryMode::Mixed => None,
        CategoryMode::Homogeneous => {
            let mut eligible: Vec<&Category> = pool
                .categories()
                .filter(|c| pool.available(target, Some(c)) >= targets && pool.available(other, Some(c)) >= others)
                .collect();
            // HashMap iteration order is unspecified; sort for reproducibility.
            eligible.sort();
            match eligible.choose(rng) {
                Some(c) => Some((*c).clone()),
                None => {
                    return Err(PuzzleError::NoCategoryLargeEnough {
                        target,
                        targets,
                        other,
                        others,
                    })
                }
            }
        }
    };

    let target_images = pool.sample_images(target, category.as_ref(), targets, rng)?;
    let other_images = pool.sample_images(other, category.as_ref(), others, rng)?;

    let mut tagged: Vec<(Arc<ImageRecord>, bool)> = target_images
        .into_iter()
        .map(|r| (r, true))
        .chain(other_images.into_iter().map(|r| (r, false)))
        .collect();
    tagged.shuffle(rng);

    let mut answer_set = BTreeSet::new();
    let mut slots = Vec::with_capacity(spec.n);
    for (i, (image, is_target)) in tagged.into_iter().enumerate() {
        if is_target {
            answer_set.insert(i);
        }
        slots.push(Slot {
            image,
            seed: TransformSeed(rng.next_u64()),
        });
    }

    Ok(Puzzle {
        spec: *spec,
        slots,
        answer_set,
        instruction: spec.instruction().to_owned(),
    })
}

/// True iff `selection` is exactly the answer set.
pub fn verify_answer(puzzle: &Puzzle, selection: &BTreeSet<usize>) -> Result<bool, PuzzleError> {
    let n = puzzle.spec.n;
    if let Some(&index) = selection.iter().find(|&&i| i >= n) {
        return Err(PuzzleError::SlotOutOfRange { index, n });
    }
    Ok(*selection == puzzle.answer_set)
}
