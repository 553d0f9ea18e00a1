//! Small recurrent language model for second-pass rescoring: one tanh
//! recurrent layer with tied input/output embeddings, trained by
//! cross-entropy with truncated backpropagation through time.

use crate::ngram::{TextCorpus, EOS, UNK};
use crate::{LmError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

#[derive(Clone, Debug)]
pub struct RnnlmConfig {
    /// Recurrent state size; also the embedding size (tied weights).
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Gradients are truncated to windows of this many steps.
    pub bptt_len: usize,
    pub seed: u64,
}

impl Default for RnnlmConfig {
    fn default() -> Self {
        RnnlmConfig {
            hidden_dim: 64,
            epochs: 5,
            learning_rate: 0.1,
            bptt_len: 32,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RecurrentLM {
    /// Predicted vocabulary: corpus words, end marker, unk.
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    hidden: usize,
    /// Tied embedding, [V x H]: row v is both the input vector for word v
    /// and the output logit weights for word v.
    emb: Vec<f64>,
    /// Recurrence weights [H x H], hidden bias [H], output bias [V].
    wh: Vec<f64>,
    bh: Vec<f64>,
    bo: Vec<f64>,
    /// Held-out perplexity after each training epoch.
    pub held_out_ppl: Vec<f64>,
}

pub fn train_rnnlm(
    corpus: &TextCorpus,
    held_out: Option<&TextCorpus>,
    config: &RnnlmConfig,
) -> Result<RecurrentLM> {
    if corpus.sentences.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    if config.hidden_dim == 0 || config.bptt_len == 0 {
        return Err(LmError::InvalidArg("zero hidden_dim or bptt_len".into()));
    }
    let mut model = RecurrentLM::new_random(corpus, config.hidden_dim, config.seed);
    let eval = held_out.unwrap_or(corpus);
    for _ in 0..config.epochs {
        for sent in &corpus.sentences {
            let targets = model.sentence_targets(sent);
            // truncated BPTT: windows carry state forward but not gradients
            let mut state = model.zero_state();
            let mut pos = 0;
            while pos < targets.len() {
                let end = (pos + config.bptt_len).min(targets.len());
                let (_, grad, next_state) =
                    model.window_loss_grad(&state, &targets[pos..end]);
                model.apply_grad(&grad, config.learning_rate);
                state = next_state;
                pos = end;
            }
        }
        model.held_out_ppl.push(model.perplexity(eval)?);
    }
    Ok(model)
}

impl RecurrentLM {
    fn new_random(corpus: &TextCorpus, hidden: usize, seed: u64) -> RecurrentLM {
        let mut vocab: Vec<String> = corpus.vocabulary.iter().cloned().collect();
        vocab.push(EOS.to_string());
        if !corpus.vocabulary.contains(UNK) {
            vocab.push(UNK.to_string());
        }
        let ids = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let v = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (hidden as f64).sqrt();
        let mut init = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
        };
        RecurrentLM {
            hidden,
            emb: init(v * hidden),
            wh: init(hidden * hidden),
            bh: vec![0.0; hidden],
            bo: vec![0.0; v],
            vocab,
            ids,
            held_out_ppl: Vec::new(),
        }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.hidden]
    }

    fn map_word(&self, word: &str) -> u32 {
        self.ids
            .get(word)
            .copied()
            .unwrap_or_else(|| self.ids[UNK])
    }

    /// Word ids a sentence asks the model to predict, in order, ending with
    /// the end marker. Out-of-vocabulary words map to unk.
    pub fn sentence_targets(&self, sent: &[String]) -> Vec<u32> {
        let mut out: Vec<u32> = sent.iter().map(|w| self.map_word(w)).collect();
        out.push(self.ids[EOS]);
        out
    }

    /// Output distribution given the current state; rows sum to 1.
    pub fn distribution(&self, state: &[f64]) -> Vec<f64> {
        let v = self.vocab.len();
        let h = self.hidden;
        let mut logits = self.bo.clone();
        for (w, logit) in logits.iter_mut().enumerate() {
            let row = &self.emb[w * h..(w + 1) * h];
            *logit += row.iter().zip(state).map(|(a, b)| a * b).sum::<f64>();
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        for l in logits.iter_mut() {
            *l /= sum;
        }
        debug_assert_eq!(logits.len(), v);
        logits
    }

    fn consume(&self, state: &[f64], word: u32) -> Vec<f64> {
        let h = self.hidden;
        let row = &self.emb[word as usize * h..(word as usize + 1) * h];
        let mut next = self.bh.clone();
        for i in 0..h {
            let wrow = &self.wh[i * h..(i + 1) * h];
            next[i] += row[i]
                + wrow.iter().zip(state).map(|(a, b)| a * b).sum::<f64>();
        }
        for x in next.iter_mut() {
            *x = x.tanh();
        }
        next
    }

    /// Pure scoring step: log-probability of `word` under the state's
    /// distribution and the state after consuming `word`.
    pub fn score_step(&self, state: &[f64], word: &str) -> Result<(f64, Vec<f64>)> {
        let wid = match self.ids.get(word) {
            Some(&id) => id,
            None => self.ids[UNK],
        };
        let p = self.distribution(state);
        let lp = p[wid as usize].ln();
        Ok((lp, self.consume(state, wid)))
    }

    pub fn sentence_logprob(&self, sent: &[String]) -> f64 {
        let mut state = self.zero_state();
        let mut total = 0.0;
        for &t in &self.sentence_targets(sent) {
            let p = self.distribution(&state);
            total += p[t as usize].ln();
            state = self.consume(&state, t);
        }
        total
    }

    pub fn perplexity(&self, corpus: &TextCorpus) -> Result<f64> {
        let mut total = 0.0;
        let mut tokens = 0usize;
        for sent in &corpus.sentences {
            total += self.sentence_logprob(sent);
            tokens += sent.len() + 1;
        }
        Ok((-total / tokens as f64).exp())
    }

    pub fn param_count(&self) -> usize {
        self.emb.len() + self.wh.len() + self.bh.len() + self.bo.len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.emb);
        out.extend_from_slice(&self.wh);
        out.extend_from_slice(&self.bh);
        out.extend_from_slice(&self.bo);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let (a, rest) = flat.split_at(self.emb.len());
        let (b, rest) = rest.split_at(self.wh.len());
        let (c, d) = rest.split_at(self.bh.len());
        self.emb.copy_from_slice(a);
        self.wh.copy_from_slice(b);
        self.bh.copy_from_slice(c);
        self.bo.copy_from_slice(d);
    }

    /// Total cross-entropy loss over one window of target ids starting from
    /// `state0`, its gradient in `params_flat` order, and the final state.
    pub fn window_loss_grad(
        &self,
        state0: &[f64],
        targets: &[u32],
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let v = self.vocab.len();
        let t_len = targets.len();
        // forward, caching states and distributions
        let mut states = Vec::with_capacity(t_len + 1);
        states.push(state0.to_vec());
        let mut dists = Vec::with_capacity(t_len);
        let mut loss = 0.0;
        for (t, &w) in targets.iter().enumerate() {
            let p = self.distribution(&states[t]);
            loss -= p[w as usize].ln();
            dists.push(p);
            states.push(self.consume(&states[t], w));
        }
        // backward
        let mut d_emb = vec![0.0; v * h];
        let mut d_wh = vec![0.0; h * h];
        let mut d_bh = vec![0.0; h];
        let mut d_bo = vec![0.0; v];
        let mut d_state = vec![0.0; h]; // gradient flowing into states[t+1]
        for t in (0..t_len).rev() {
            // through the recurrence h_{t+1} = tanh(emb[w] + wh h_t + bh)
            let w = targets[t] as usize;
            let ht1 = &states[t + 1];
            let ht = &states[t];
            let mut da = vec![0.0; h];
            for i in 0..h {
                da[i] = d_state[i] * (1.0 - ht1[i] * ht1[i]);
            }
            for i in 0..h {
                d_emb[w * h + i] += da[i];
                d_bh[i] += da[i];
                for j in 0..h {
                    d_wh[i * h + j] += da[i] * ht[j];
                }
            }
            let mut d_ht = vec![0.0; h];
            for i in 0..h {
                for j in 0..h {
                    d_ht[j] += self.wh[i * h + j] * da[i];
                }
            }
            // through the prediction made from states[t]
            let p = &dists[t];
            for u in 0..v {
                let dl = p[u] - if u == targets[t] as usize { 1.0 } else { 0.0 };
                d_bo[u] += dl;
                let row = &self.emb[u * h..(u + 1) * h];
                for j in 0..h {
                    d_emb[u * h + j] += dl * ht[j];
                    d_ht[j] += dl * row[j];
                }
            }
            d_state = d_ht;
        }
        let mut grad = Vec::with_capacity(self.param_count());
        grad.extend_from_slice(&d_emb);
        grad.extend_from_slice(&d_wh);
        grad.extend_from_slice(&d_bh);
        grad.extend_from_slice(&d_bo);
        (loss, grad, states.pop().unwrap())
    }

    fn apply_grad(&mut self, grad: &[f64], lr: f64) {
        // clip by global norm to keep small-corpus training stable
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > 5.0 { 5.0 / norm } else { 1.0 };
        let mut params = self.params_flat();
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= lr * scale * g;
        }
        self.set_params_flat(&params);
    }
}
