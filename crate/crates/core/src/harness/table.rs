use serde::{Deserialize, Serialize};

use crate::puzzle::{binomial, GuessProbability};

/// A scheme's chance of being beaten by a random guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GuessEntry {
    /// `1 / C(n, k)` for a pick-`k`-of-`n` puzzle.
    Exact {
        n: u64,
        k: u64,
        probability: GuessProbability,
    },
    /// Only an upper bound is known, in percent.
    Below {
        percent: f64,
    },
    NotApplicable {
        note: String,
    },
}

impl GuessEntry {
    fn exact(n: u64, k: u64) -> Self {
        let probability = GuessProbability::one_in(binomial(n, k).expect("table shapes are small"));
        GuessEntry::Exact { n, k, probability }
    }

    pub fn label(&self) -> String {
        match self {
            GuessEntry::Exact { probability, .. } => probability.percent_label(),
            GuessEntry::Below { percent } => format!("<{}", crate::puzzle::percent_label(*percent)),
            GuessEntry::NotApplicable { .. } => "N/A".into(),
        }
    }

    /// Value used to order schemes from hardest to easiest to guess. A fixed
    /// action with no puzzle is as guessable as it gets.
    fn ordering_value(&self) -> f64 {
        match self {
            GuessEntry::Exact { probability, .. } => probability.value(),
            GuessEntry::Below { percent } => percent / 100.0,
            GuessEntry::NotApplicable { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scheme: String,
    pub entry: GuessEntry,
    /// 1 = least guessable.
    pub rank: usize,
}

/// Random-guess success for the compared schemes, from closed forms only.
pub fn comparison_table() -> Vec<TableRow> {
    let entries = [
        ("Text-based reCAPTCHA", GuessEntry::Below { percent: 1.0 }),
        ("Image-based reCAPTCHA", GuessEntry::exact(8, 3)),
        (
            "NCRC",
            GuessEntry::NotApplicable {
                note: "fixed action (checking a box)".into(),
            },
        ),
        ("sweetCaptcha", GuessEntry::exact(4, 1)),
        ("Aesthetic CAPTCHA", GuessEntry::exact(9, 1)),
    ];
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].1.ordering_value().total_cmp(&entries[b].1.ordering_value()));
    let mut ranks = vec![0; entries.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    entries
        .into_iter()
        .zip(ranks)
        .map(|((scheme, entry), rank)| TableRow {
            scheme: scheme.into(),
            entry,
            rank,
        })
        .collect()
}

pub fn render_table(rows: &[TableRow]) -> String {
    let mut out = format!(
        "{:<24} {:>10} {:>8} {:>5}  {}\n",
        "scheme", "P(guess)", "exact", "rank", "note"
    );
    for row in rows {
        let (exact, note) = match &row.entry {
            GuessEntry::Exact { probability, n, k } => {
                (format!("1/{}", probability.denominator), format!("pick {k} of {n}"))
            }
            GuessEntry::Below { .. } => ("-".into(), "reported bound".into()),
            GuessEntry::NotApplicable { note } => ("-".into(), note.clone()),
        };
        out.push_str(&format!(
            "{:<24} {:>10} {:>8} {:>5}  {}\n",
            row.scheme,
            row.entry.label(),
            exact,
            row.rank,
            note
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row<'a>(rows: &'a [TableRow], scheme: &str) -> &'a TableRow {
        rows.iter().find(|r| r.scheme == scheme).unwrap()
    }

    #[test]
    fn labels_and_exact_values() {
        let rows = comparison_table();
        let image = row(&rows, "Image-based reCAPTCHA");
        assert_eq!(image.entry.label(), "1.8%");
        assert!(matches!(image.entry, GuessEntry::Exact { probability, .. } if probability.denominator == 56));
        assert_eq!(row(&rows, "sweetCaptcha").entry.label(), "25%");
        assert_eq!(row(&rows, "Aesthetic CAPTCHA").entry.label(), "11.1%");
        assert_eq!(row(&rows, "Text-based reCAPTCHA").entry.label(), "<1%");
        let ncrc = row(&rows, "NCRC");
        assert_eq!(ncrc.entry.label(), "N/A");
        assert!(matches!(&ncrc.entry, GuessEntry::NotApplicable { note } if note == "fixed action (checking a box)"));
    }

    #[test]
    fn ranks_follow_guessability() {
        let ranks: Vec<_> = comparison_table().iter().map(|r| r.rank).collect();
        assert_eq!(ranks, vec![1, 2, 5, 4, 3]);
    }

    #[test]
    fn renders_every_scheme() {
        let text = render_table(&comparison_table());
        assert_eq!(text.lines().count(), 6);
        assert!(text.contains("1/56"));
    }
}
