use crate::{LmError, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Pronunciation dictionary in CMU format: `WORD PH1 PH2 ...` with alternate
/// pronunciations as `WORD(2)`, comments starting with `;;;`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub entries: BTreeMap<String, Vec<Vec<String>>>,
    pub inventory: BTreeSet<String>,
    /// Phones that carried stress digits in the raw file (the vowel set),
    /// recorded in post-stripping form.
    pub vowels: BTreeSet<String>,
    pub unk_word: Option<String>,
}

/// Phone-loop pronunciation model for the unknown word: any phone sequence
/// of length >= 1, phones drawn from the lexicon's unigram phone frequency,
/// with a geometric continuation probability.
#[derive(Clone, Debug)]
pub struct UnkModel {
    pub phone_probs: Vec<(String, f64)>,
    pub continuation: f64,
}

impl UnkModel {
    /// Probability that the loop emits exactly this phone sequence.
    pub fn sequence_prob(&self, phones: &[&str]) -> f64 {
        let mut p = 1.0;
        for (i, ph) in phones.iter().enumerate() {
            let ph_p = self
                .phone_probs
                .iter()
                .find(|(name, _)| name == ph)
                .map(|(_, p)| *p)
                .unwrap_or(0.0);
            p *= ph_p;
            p *= if i + 1 < phones.len() {
                self.continuation
            } else {
                1.0 - self.continuation
            };
        }
        p
    }
}

/// Word-to-phones expansion of a transcript: one pronunciation per in-vocab
/// word, plus the words that were not found.
#[derive(Clone, Debug, Default)]
pub struct PhoneTranscription {
    pub pronunciations: Vec<Vec<String>>,
    pub oov_words: Vec<String>,
}

fn strip_stress(phone: &str) -> (String, bool) {
    let had_digit = phone.chars().any(|c| c.is_ascii_digit());
    let base: String = phone.chars().filter(|c| !c.is_ascii_digit()).collect();
    (base, had_digit)
}

/// Split `WORD(2)` into the bare word; the index is only used for ordering
/// within the file so the value itself is discarded.
fn base_word(token: &str) -> &str {
    match token.find('(') {
        Some(i) if token.ends_with(')') => &token[..i],
        _ => token,
    }
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    load_lexicon_with(path, true)
}

pub fn load_lexicon_with(path: &Path, strip_stress_digits: bool) -> Result<Lexicon> {
    let text = std::fs::read_to_string(path).map_err(|source| LmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_lexicon(&text, strip_stress_digits)
}

pub fn parse_lexicon(text: &str, strip_stress_digits: bool) -> Result<Lexicon> {
    let mut entries: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    let mut inventory = BTreeSet::new();
    let mut vowels = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(";;;") {
            // the vowel set survives stress stripping via a comment header
            if let Some(rest) = line.strip_prefix(";;; vowels:") {
                for ph in rest.split_whitespace() {
                    vowels.insert(ph.to_string());
                }
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let word_tok = fields.next().unwrap();
        let word = base_word(word_tok).to_uppercase();
        if word.is_empty() {
            return Err(LmError::BadLexicon {
                line: i + 1,
                msg: "empty word".into(),
            });
        }
        let mut phones = Vec::new();
        for raw in fields {
            let (base, had_digit) = strip_stress(raw);
            let phone = if strip_stress_digits {
                base
            } else {
                raw.to_string()
            };
            if had_digit {
                vowels.insert(if strip_stress_digits {
                    phone.clone()
                } else {
                    strip_stress(raw).0
                });
            }
            inventory.insert(phone.clone());
            phones.push(phone);
        }
        if phones.is_empty() {
            return Err(LmError::BadLexicon {
                line: i + 1,
                msg: format!("word {word} has no phones"),
            });
        }
        entries.entry(word).or_default().push(phones);
    }
    Ok(Lexicon {
        entries,
        inventory,
        vowels,
        unk_word: None,
    })
}

impl Lexicon {
    /// Canonical CMU-format serialization, sorted by word, alternates
    /// numbered `WORD(2)`, `WORD(3)`, ...
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        if !self.vowels.is_empty() {
            out.push_str(";;; vowels:");
            for v in &self.vowels {
                out.push(' ');
                out.push_str(v);
            }
            out.push('\n');
        }
        for (word, prons) in &self.entries {
            for (i, pron) in prons.iter().enumerate() {
                if i == 0 {
                    out.push_str(word);
                } else {
                    out.push_str(&format!("{word}({})", i + 1));
                }
                for ph in pron {
                    out.push(' ');
                    out.push_str(ph);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.serialize()).map_err(|source| LmError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// First pronunciation per word; OOV words are reported, never dropped
    /// silently.
    pub fn transcript_to_phones(&self, transcript: &[String]) -> PhoneTranscription {
        let mut out = PhoneTranscription::default();
        for word in transcript {
            match self.entries.get(word) {
                Some(prons) => out.pronunciations.push(prons[0].clone()),
                None => out.oov_words.push(word.clone()),
            }
        }
        out
    }

    /// Unigram phone-loop unk model: per-phone probabilities proportional to
    /// phone frequency across all pronunciations, geometric continuation 0.5.
    pub fn make_unk_model(&self) -> Result<UnkModel> {
        if self.inventory.is_empty() {
            return Err(LmError::EmptyInventory);
        }
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for ph in &self.inventory {
            freq.insert(ph, 0);
        }
        let mut total = 0usize;
        for prons in self.entries.values() {
            for pron in prons {
                for ph in pron {
                    *freq.get_mut(ph.as_str()).unwrap() += 1;
                    total += 1;
                }
            }
        }
        let phone_probs = if total == 0 {
            // inventory with no usage: fall back to uniform
            let n = self.inventory.len() as f64;
            freq.keys().map(|ph| (ph.to_string(), 1.0 / n)).collect()
        } else {
            freq.iter()
                .map(|(ph, c)| (ph.to_string(), *c as f64 / total as f64))
                .collect()
        };
        Ok(UnkModel {
            phone_probs,
            continuation: 0.5,
        })
    }

    /// Adds at most one alternate pronunciation per word with every vowel of
    /// the first pronunciation stretched to `k` copies.
    pub fn extend_vowels(&self, k: usize) -> Lexicon {
        let mut out = self.clone();
        for (_, prons) in out.entries.iter_mut() {
            let first = prons[0].clone();
            let mut stretched = Vec::new();
            for ph in &first {
                let copies = if self.vowels.contains(ph) { k } else { 1 };
                for _ in 0..copies {
                    stretched.push(ph.clone());
                }
            }
            if stretched != first && !prons.contains(&stretched) {
                prons.push(stretched);
            }
        }
        out
    }
}
