use crate::{LmError, Result};
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const LN_10: f64 = std::f64::consts::LN_10;

/// Sentinel for history words outside the vocabulary: never matches any
/// stored gram, so lookups fall straight through the backoff chain.
const NO_MATCH: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct TextCorpus {
    pub sentences: Vec<Vec<String>>,
    pub vocabulary: BTreeSet<String>,
    pub num_words: usize,
}

impl TextCorpus {
    pub fn from_sentences(sentences: Vec<Vec<String>>) -> Result<Self> {
        let sentences: Vec<Vec<String>> =
            sentences.into_iter().filter(|s| !s.is_empty()).collect();
        if sentences.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let mut vocabulary = BTreeSet::new();
        let mut num_words = 0;
        for s in &sentences {
            num_words += s.len();
            for w in s {
                vocabulary.insert(w.clone());
            }
        }
        Ok(TextCorpus {
            sentences,
            vocabulary,
            num_words,
        })
    }

    /// One sentence per line; lines are normalized with the scoring rules
    /// (uppercase, punctuation stripped except intra-word apostrophes).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_sentences(
            text.lines()
                .map(descant_scoring::normalize_text)
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {
    /// Raw relative frequencies; test-only mode with no held-out mass.
    MaximumLikelihood,
    /// Interpolated Kneser-Ney with a fixed discount, stored in backoff form.
    KneserNey { discount: f64 },
    /// Model loaded from text; estimation method unknown, counts absent.
    Imported,
}

#[derive(Clone, Debug, Default)]
struct CountTables {
    /// raw[L-1]: gram of length L -> occurrence count over padded sentences
    raw: Vec<HashMap<Vec<u32>, u64>>,
}

#[derive(Clone, Debug)]
pub struct NGramModel {
    order: usize,
    /// Predicted vocabulary (excludes the start marker).
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    bos: u32,
    /// probs[L-1]: gram of length L -> log10 conditional probability
    probs: Vec<HashMap<Vec<u32>, f64>>,
    /// backoffs[L-1]: history of length L -> log10 backoff weight
    backoffs: Vec<HashMap<Vec<u32>, f64>>,
    smoothing: Smoothing,
    has_unk: bool,
    counts: Option<CountTables>,
}

pub fn train_ngram(corpus: &TextCorpus, n: usize, smoothing: Smoothing) -> Result<NGramModel> {
    NGramModel::train(corpus, n, smoothing)
}

impl NGramModel {
    pub fn train(corpus: &TextCorpus, n: usize, smoothing: Smoothing) -> Result<NGramModel> {
        if !(1..=4).contains(&n) {
            return Err(LmError::BadOrder(n));
        }
        if matches!(smoothing, Smoothing::Imported) {
            return Err(LmError::InvalidArg(
                "Imported is not a trainable smoothing mode".into(),
            ));
        }
        // word ids: BOS first, then sorted vocabulary, then EOS
        let mut ids = HashMap::new();
        let mut vocab = Vec::new();
        ids.insert(BOS.to_string(), 0u32);
        for w in &corpus.vocabulary {
            ids.insert(w.clone(), (vocab.len() + 1) as u32);
            vocab.push(w.clone());
        }
        ids.insert(EOS.to_string(), (vocab.len() + 1) as u32);
        vocab.push(EOS.to_string());

        let mut counts = CountTables {
            raw: vec![HashMap::new(); n],
        };
        for sent in &corpus.sentences {
            let mut padded = Vec::with_capacity(sent.len() + 2);
            padded.push(0u32);
            for w in sent {
                padded.push(ids[w]);
            }
            padded.push(ids[EOS]);
            for len in 1..=n {
                for win in padded.windows(len) {
                    *counts.raw[len - 1].entry(win.to_vec()).or_insert(0) += 1;
                }
            }
        }

        let mut model = NGramModel {
            order: n,
            vocab,
            ids,
            bos: 0,
            probs: Vec::new(),
            backoffs: Vec::new(),
            smoothing,
            has_unk: false,
            counts: Some(counts),
        };
        model.rebuild_tables()?;
        Ok(model)
    }

    /// Recompute probability and backoff tables from stored counts. Used both
    /// at training time and when the unk word is attached.
    fn rebuild_tables(&mut self) -> Result<()> {
        let n = self.order;
        let counts = self.counts.as_ref().ok_or(LmError::NoCounts)?;
        // adjusted counts: raw at the top order, continuation counts below,
        // except grams starting with the sentence-start marker (raw: they
        // cannot be extended to the left). Grams ending in BOS are dropped.
        let mut adjusted: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); n];
        adjusted[n - 1] = counts.raw[n - 1].clone();
        for len in (1..n).rev() {
            let mut table = HashMap::new();
            for gram in counts.raw[len].keys() {
                *table.entry(gram[1..].to_vec()).or_insert(0u64) += 1;
            }
            for (gram, &c) in &counts.raw[len - 1] {
                if gram[0] == self.bos && gram.len() > 1 {
                    table.insert(gram.clone(), c);
                }
            }
            adjusted[len - 1] = table;
        }
        for table in &mut adjusted {
            table.retain(|gram, _| *gram.last().unwrap() != self.bos);
        }

        // the uniform floor runs over the predicted vocabulary, which already
        // includes unk once attached
        let v_uniform = self.vocab.len() as f64;
        let mut probs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); n];
        let mut backoffs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); n.max(2) - 1];

        match self.smoothing {
            Smoothing::MaximumLikelihood => {
                for len in 1..=n {
                    let mut denom: HashMap<&[u32], u64> = HashMap::new();
                    for (gram, &c) in &counts.raw[len - 1] {
                        if *gram.last().unwrap() == self.bos {
                            continue;
                        }
                        *denom.entry(&gram[..len - 1]).or_insert(0) += c;
                    }
                    for (gram, &c) in &counts.raw[len - 1] {
                        if *gram.last().unwrap() == self.bos {
                            continue;
                        }
                        let d = denom[&gram[..len - 1]] as f64;
                        probs[len - 1].insert(gram.clone(), (c as f64 / d).log10());
                    }
                }
            }
            Smoothing::KneserNey { discount: d } => {
                // backoff weights first: a history of length L is any prefix
                // seen at order L+1; beta(h) = d * types(h) / total(h)
                for len_h in 1..n {
                    let mut denom: HashMap<Vec<u32>, (u64, u64)> = HashMap::new();
                    for (gram, &a) in &adjusted[len_h] {
                        let e = denom.entry(gram[..len_h].to_vec()).or_insert((0, 0));
                        e.0 += a;
                        e.1 += 1;
                    }
                    backoffs[len_h - 1] = denom
                        .into_iter()
                        .map(|(h, (total, types))| {
                            (h, (d * types as f64 / total as f64).log10())
                        })
                        .collect();
                }
                // then probabilities, bottom-up so each order can interpolate
                // with the completed one below it
                for len in 1..=n {
                    let mut denom: HashMap<&[u32], (u64, u64)> = HashMap::new();
                    for (gram, &a) in &adjusted[len - 1] {
                        let e = denom.entry(&gram[..len - 1]).or_insert((0, 0));
                        e.0 += a;
                        e.1 += 1;
                    }
                    let mut level = HashMap::new();
                    for (gram, &a) in &adjusted[len - 1] {
                        let (total, types) = denom[&gram[..len - 1]];
                        let held = (a as f64 - d).max(0.0) / total as f64;
                        let beta = d * types as f64 / total as f64;
                        let lower = if len == 1 {
                            1.0 / v_uniform
                        } else {
                            lookup_linear(&probs, &backoffs, &gram[1..])
                        };
                        level.insert(gram.clone(), (held + beta * lower).log10());
                    }
                    if len == 1 && self.has_unk {
                        // unk gets exactly the uniform share of the reserve
                        let (total, types) = denom[&[][..]];
                        let beta = d * types as f64 / total as f64;
                        let unk_id = self.ids[UNK];
                        level.insert(vec![unk_id], (beta / v_uniform).log10());
                    }
                    probs[len - 1] = level;
                }
            }
            Smoothing::Imported => unreachable!(),
        }
        // start marker: conventional placeholder probability
        probs[0].insert(vec![self.bos], -99.0);
        self.probs = probs;
        self.backoffs = backoffs;
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn has_unk(&self) -> bool {
        self.has_unk
    }

    /// Predicted vocabulary: regular words plus the end marker (and unk when
    /// attached); the start marker is excluded.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        if id == self.bos {
            return Some(BOS);
        }
        self.vocab.get(id as usize - 1).map(|s| s.as_str())
    }

    pub fn bos_id(&self) -> u32 {
        self.bos
    }

    pub fn eos_id(&self) -> u32 {
        self.ids[EOS]
    }

    pub fn unk_id(&self) -> Option<u32> {
        if self.has_unk {
            self.ids.get(UNK).copied()
        } else {
            None
        }
    }

    fn map_history(&self, history: &[String]) -> Vec<u32> {
        history
            .iter()
            .map(|w| {
                self.ids
                    .get(w)
                    .copied()
                    .unwrap_or(if self.has_unk { self.ids[UNK] } else { NO_MATCH })
            })
            .collect()
    }

    /// Natural-log conditional probability with the backoff chain; history
    /// longer than order-1 is truncated from the left.
    pub fn score(&self, history: &[String], word: &str) -> Result<f64> {
        let wid = match self.ids.get(word) {
            Some(&id) => id,
            None if self.has_unk => self.ids[UNK],
            None => return Err(LmError::Oov(word.to_string())),
        };
        let hist = self.map_history(history);
        match self.score_ids(&hist, wid) {
            Some(lp) => Ok(lp),
            None => Err(LmError::Oov(word.to_string())),
        }
    }

    /// Same as `score` but over pre-mapped word ids; returns None only when
    /// the word has no unigram entry (ML mode or a marker misuse).
    pub fn score_ids(&self, history: &[u32], word: u32) -> Option<f64> {
        let max_h = (self.order - 1).min(history.len());
        let hist = &history[history.len() - max_h..];
        let mut acc = 0.0f64;
        for start in 0..=hist.len() {
            let h = &hist[start..];
            let mut gram = Vec::with_capacity(h.len() + 1);
            gram.extend_from_slice(h);
            gram.push(word);
            if let Some(&lp) = self.probs[h.len()].get(&gram) {
                return Some((acc + lp) * LN_10);
            }
            if !h.is_empty() {
                if let Some(&b) = self.backoffs[h.len() - 1].get(h) {
                    acc += b;
                }
            }
        }
        None
    }

    /// exp of the mean negative log-probability over all tokens, including
    /// one end-of-sentence token per sentence.
    pub fn perplexity(&self, corpus: &TextCorpus) -> Result<f64> {
        let mut total = 0.0f64;
        let mut tokens = 0usize;
        for sent in &corpus.sentences {
            let mut history: Vec<String> = vec![BOS.to_string()];
            for word in sent.iter().chain(std::iter::once(&EOS.to_string())) {
                total += self.score(&history, word)?;
                tokens += 1;
                history.push(word.clone());
            }
        }
        Ok((-total / tokens as f64).exp())
    }

    /// Adds the unk word, funding it from the discount reserve: the uniform
    /// interpolation floor is spread over V+1 words and unk receives exactly
    /// that share, so normalization is preserved at every order.
    pub fn attach_unk(&self) -> Result<NGramModel> {
        if self.has_unk {
            return Err(LmError::UnkAlreadyAttached);
        }
        if !matches!(self.smoothing, Smoothing::KneserNey { .. }) {
            return Err(LmError::InvalidArg(
                "attach_unk requires a smoothed model with a discount reserve".into(),
            ));
        }
        let mut model = self.clone();
        model.has_unk = true;
        model
            .ids
            .insert(UNK.to_string(), (model.vocab.len() + 1) as u32);
        model.vocab.push(UNK.to_string());
        model.rebuild_tables()?;
        Ok(model)
    }

    // serialization hooks for the ARPA module
    pub(crate) fn tables(
        &self,
    ) -> (&[HashMap<Vec<u32>, f64>], &[HashMap<Vec<u32>, f64>]) {
        (&self.probs, &self.backoffs)
    }

    pub(crate) fn from_tables(
        order: usize,
        vocab: Vec<String>,
        ids: HashMap<String, u32>,
        probs: Vec<HashMap<Vec<u32>, f64>>,
        backoffs: Vec<HashMap<Vec<u32>, f64>>,
    ) -> NGramModel {
        let has_unk = ids.contains_key(UNK);
        NGramModel {
            order,
            vocab,
            ids,
            bos: 0,
            probs,
            backoffs,
            smoothing: Smoothing::Imported,
            has_unk,
            counts: None,
        }
    }
}

/// Linear-space probability lookup against partially built tables (orders
/// below the current one are complete).
fn lookup_linear(
    probs: &[HashMap<Vec<u32>, f64>],
    backoffs: &[HashMap<Vec<u32>, f64>],
    gram: &[u32],
) -> f64 {
    let mut acc = 0.0f64;
    for start in 0..gram.len() {
        let g = &gram[start..];
        if let Some(&lp) = probs[g.len() - 1].get(g) {
            return 10f64.powf(acc + lp);
        }
        let h = &g[..g.len() - 1];
        if !h.is_empty() {
            if let Some(&b) = backoffs[h.len() - 1].get(h) {
                acc += b;
            }
        }
    }
    0.0
}
