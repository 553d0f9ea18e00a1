//! Word error rate via edit-distance alignment, dataset aggregation, and the
//! text normalization shared with language-model training.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ScoringError {
    #[error("empty reference: WER undefined")]
    EmptyReference,
    #[error("duplicate utterance id: {0}")]
    DuplicateUtterance(String),
}

pub type Result<T> = std::result::Result<T, ScoringError>;

/// Uppercase, strip punctuation except intra-word apostrophes, split on
/// whitespace.
pub fn normalize_text(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in s.split_whitespace() {
        let mut word = String::new();
        for c in raw.chars() {
            if c.is_alphanumeric() {
                for u in c.to_uppercase() {
                    word.push(u);
                }
            } else if c == '\'' {
                word.push('\'');
            }
        }
        let word = word.trim_matches('\'').to_string();
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EditOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

#[derive(Clone, Debug, Default)]
pub struct WerCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_words: usize,
}

impl WerCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn wer_percent(&self) -> f64 {
        100.0 * self.errors() as f64 / self.reference_words as f64
    }

    fn add(&mut self, other: &WerCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.reference_words += other.reference_words;
    }
}

#[derive(Clone, Debug)]
pub struct WerReport {
    pub counts: WerCounts,
    pub alignment: Vec<(EditOp, Option<String>, Option<String>)>,
}

/// Minimal-edit alignment with unit costs. Tie-break prefers substitution
/// over deletion over insertion so traces are reproducible.
pub fn wer(reference: &[String], hypothesis: &[String]) -> Result<WerReport> {
    if reference.is_empty() {
        return Err(ScoringError::EmptyReference);
    }
    let (n, m) = (reference.len(), hypothesis.len());
    let mut dist = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dist[idx(i, 0)] = i;
    }
    for j in 0..=m {
        dist[idx(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = if reference[i - 1] == hypothesis[j - 1] { 0 } else { 1 };
            let sub = dist[idx(i - 1, j - 1)] + sub_cost;
            let del = dist[idx(i - 1, j)] + 1;
            let ins = dist[idx(i, j - 1)] + 1;
            dist[idx(i, j)] = sub.min(del).min(ins);
        }
    }
    // trace back with the stated tie-break order
    let mut alignment = Vec::new();
    let mut counts = WerCounts {
        reference_words: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let cur = dist[idx(i, j)];
        let sub_ok = i > 0
            && j > 0
            && dist[idx(i - 1, j - 1)]
                + usize::from(reference[i - 1] != hypothesis[j - 1])
                == cur;
        let del_ok = i > 0 && dist[idx(i - 1, j)] + 1 == cur;
        let ins_ok = j > 0 && dist[idx(i, j - 1)] + 1 == cur;
        if sub_ok {
            let op = if reference[i - 1] == hypothesis[j - 1] {
                EditOp::Match
            } else {
                counts.substitutions += 1;
                EditOp::Substitute
            };
            alignment.push((
                op,
                Some(reference[i - 1].clone()),
                Some(hypothesis[j - 1].clone()),
            ));
            i -= 1;
            j -= 1;
        } else if del_ok {
            counts.deletions += 1;
            alignment.push((EditOp::Delete, Some(reference[i - 1].clone()), None));
            i -= 1;
        } else if ins_ok {
            counts.insertions += 1;
            alignment.push((EditOp::Insert, None, Some(hypothesis[j - 1].clone())));
            j -= 1;
        } else {
            unreachable!("broken DP table");
        }
    }
    alignment.reverse();
    Ok(WerReport { counts, alignment })
}

#[derive(Clone, Debug)]
pub struct DatasetReport {
    pub aggregate: WerCounts,
    pub per_utterance: BTreeMap<String, WerCounts>,
    /// Utterances with no hypothesis (scored as all deletions).
    pub missing: Vec<String>,
}

/// Corpus-level WER: counts are summed over utterances before dividing.
pub fn score_dataset(
    references: &[(String, Vec<String>)],
    hypotheses: &BTreeMap<String, Vec<String>>,
) -> Result<DatasetReport> {
    let mut seen = std::collections::BTreeSet::new();
    let mut aggregate = WerCounts::default();
    let mut per_utterance = BTreeMap::new();
    let mut missing = Vec::new();
    for (utt, reference) in references {
        if !seen.insert(utt.clone()) {
            return Err(ScoringError::DuplicateUtterance(utt.clone()));
        }
        let counts = match hypotheses.get(utt) {
            Some(hyp) => wer(reference, hyp)?.counts,
            None => {
                missing.push(utt.clone());
                WerCounts {
                    deletions: reference.len(),
                    reference_words: reference.len(),
                    ..Default::default()
                }
            }
        };
        aggregate.add(&counts);
        per_utterance.insert(utt.clone(), counts);
    }
    Ok(DatasetReport {
        aggregate,
        per_utterance,
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(|w| w.to_string()).collect()
    }

    #[test]
    fn normalizes_fig5_utterance() {
        assert_eq!(
            normalize_text("as the sun will rise."),
            words("AS THE SUN WILL RISE")
        );
    }

    #[test]
    fn keeps_intra_word_apostrophes() {
        assert_eq!(normalize_text("don't"), vec!["DON'T".to_string()]);
        assert_eq!(normalize_text(""), Vec::<String>::new());
    }

    #[test]
    fn identical_sequences_score_zero() {
        let r = words("AS THE SUN WILL RISE");
        let rep = wer(&r, &r).unwrap();
        assert_eq!(rep.counts.errors(), 0);
        assert_eq!(rep.counts.wer_percent(), 0.0);
    }

    #[test]
    fn one_substitution_is_twenty_percent_of_five() {
        let r = words("AS THE SUN WILL RISE");
        let h = words("AS THE SON WILL RISE");
        let rep = wer(&r, &h).unwrap();
        assert_eq!(rep.counts.substitutions, 1);
        assert_eq!(rep.counts.wer_percent(), 20.0);
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let r = words("AS THE SUN WILL RISE");
        let rep = wer(&r, &[]).unwrap();
        assert_eq!(rep.counts.deletions, 5);
        assert_eq!(rep.counts.wer_percent(), 100.0);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(wer(&[], &words("A")).is_err());
    }

    #[test]
    fn aggregate_sums_counts_before_dividing() {
        let refs = vec![
            ("u1".to_string(), words("A B C D E")),
            ("u2".to_string(), words("A B C D E")),
        ];
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".to_string(), words("A B X D E"));
        hyps.insert("u2".to_string(), words("A B C D E"));
        let rep = score_dataset(&refs, &hyps).unwrap();
        assert_eq!(rep.aggregate.wer_percent(), 10.0);
    }

    #[test]
    fn missing_hypothesis_counts_deletions_and_is_flagged() {
        let refs = vec![("u1".to_string(), words("A B C"))];
        let rep = score_dataset(&refs, &BTreeMap::new()).unwrap();
        assert_eq!(rep.aggregate.deletions, 3);
        assert_eq!(rep.missing, vec!["u1".to_string()]);
    }

    #[test]
    fn duplicate_utterances_rejected() {
        let refs = vec![
            ("u1".to_string(), words("A")),
            ("u1".to_string(), words("B")),
        ];
        assert!(score_dataset(&refs, &BTreeMap::new()).is_err());
    }
}
