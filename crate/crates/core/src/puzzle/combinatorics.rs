use std::fmt;

use serde::{Deserialize, Serialize};

use super::PuzzleError;

/// Largest `n` accepted by [`binomial`]; every `C(64, k)` fits in a `u64`.
pub const MAX_BINOMIAL_N: u64 = 64;

/// Number of `k`-subsets of an `n`-set, computed exactly.
pub fn binomial(n: u64, k: u64) -> Result<u64, PuzzleError> {
    if n > MAX_BINOMIAL_N {
        return Err(PuzzleError::BinomialTooLarge { n });
    }
    if k > n {
        return Err(PuzzleError::BinomialRange { n, k });
    }
    let k = k.min(n - k);
    // Each partial product r * (n - i) / (i + 1) equals C(n - k + i + 1, i + 1)
    // scaled exactly, so the division never truncates.
    let mut r: u128 = 1;
    for i in 0..u128::from(k) {
        r = r * (u128::from(n) - i) / (i + 1);
    }
    Ok(r as u64)
}

/// A success probability of the form `1 / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GuessProbability {
    pub denominator: u64,
}

impl GuessProbability {
    pub fn one_in(denominator: u64) -> Self {
        assert!(denominator > 0, "probability denominator must be positive");
        GuessProbability { denominator }
    }

    pub fn value(&self) -> f64 {
        1.0 / self.denominator as f64
    }

    pub fn percent(&self) -> f64 {
        100.0 / self.denominator as f64
    }

    /// Percentage rounded to one decimal, dropping a trailing `.0`
    /// (`1/56` renders as `1.8%`, `1/4` as `25%`).
    pub fn percent_label(&self) -> String {
        percent_label(self.percent())
    }
}

pub(crate) fn percent_label(percent: f64) -> String {
    let s = format!("{percent:.1}");
    let s = s.strip_suffix(".0").unwrap_or(&s);
    format!("{s}%")
}

impl fmt::Display for GuessProbability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1/{} ({})", self.denominator, self.percent_label())
    }
}
