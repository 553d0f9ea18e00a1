use descant_decoder::LogPosteriors;
use descant_lm::lexicon::parse_lexicon;
use descant_lm::{Lexicon, NGramModel, Smoothing, TextCorpus, BOS, EOS};

pub fn lexicon(text: &str) -> Lexicon {
    parse_lexicon(text, true).unwrap()
}

pub fn corpus(lines: &[&str]) -> TextCorpus {
    TextCorpus::from_sentences(
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect(),
    )
    .unwrap()
}

pub fn kn(c: &TextCorpus, n: usize) -> NGramModel {
    NGramModel::train(c, n, Smoothing::KneserNey { discount: 0.75 }).unwrap()
}

pub fn posteriors(frames: usize, states: usize, rows: &[&[f64]]) -> LogPosteriors {
    assert_eq!(rows.len(), frames);
    let mut data = Vec::new();
    for row in rows {
        assert_eq!(row.len(), states);
        // rows are linear probabilities; store normalized logs
        let z: f64 = row.iter().sum();
        for &p in *row {
            data.push((p / z).ln());
        }
    }
    LogPosteriors {
        frames,
        num_states: states,
        data,
    }
}

/// Best acoustic log-score of aligning `phones` (as posterior columns) to the
/// frame range [start, end): every phone takes >= 1 contiguous frame.
pub fn best_alignment_score(
    post: &LogPosteriors,
    phones: &[usize],
    start: usize,
    end: usize,
) -> f64 {
    if phones.is_empty() {
        return if start == end { 0.0 } else { f64::NEG_INFINITY };
    }
    if end - start < phones.len() {
        return f64::NEG_INFINITY;
    }
    let mut best = f64::NEG_INFINITY;
    // first phone occupies [start, split)
    let max_first = end - start - (phones.len() - 1);
    let mut am_first = 0.0;
    for len in 1..=max_first {
        am_first += post.get(start + len - 1, phones[0]);
        let rest = best_alignment_score(post, &phones[1..], start + len, end);
        if am_first + rest > best {
            best = am_first + rest;
        }
    }
    best
}

/// Exhaustive search over all word sequences and word-boundary alignments.
/// Returns the best (score, words) with lexicographic tie-breaking, and all
/// word sequences with at least one complete path.
pub fn brute_force(
    post: &LogPosteriors,
    lex: &Lexicon,
    lm: &NGramModel,
    phone_of: &dyn Fn(&str) -> usize,
    acoustic_scale: f64,
    wip: f64,
) -> (f64, Vec<String>, std::collections::BTreeSet<Vec<String>>) {
    let words: Vec<(&String, Vec<Vec<usize>>)> = lex
        .entries
        .iter()
        .filter(|(w, _)| lm.word_id(w).is_some())
        .map(|(w, prons)| {
            (
                w,
                prons
                    .iter()
                    .map(|p| p.iter().map(|ph| phone_of(ph)).collect())
                    .collect(),
            )
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut all = std::collections::BTreeSet::new();
    // recursive enumeration over (frame, history)
    fn recurse(
        post: &LogPosteriors,
        words: &[(&String, Vec<Vec<usize>>)],
        lm: &NGramModel,
        scale: f64,
        wip: f64,
        frame: usize,
        hist: &mut Vec<String>,
        score: f64,
        best: &mut (f64, Vec<String>),
        all: &mut std::collections::BTreeSet<Vec<String>>,
    ) {
        if frame == post.frames {
            let mut full_hist = vec![BOS.to_string()];
            full_hist.extend(hist.iter().cloned());
            let total = score + lm.score(&full_hist, EOS).unwrap();
            let seq: Vec<String> = hist.clone();
            all.insert(seq.clone());
            if total > best.0 + 1e-12
                || ((total - best.0).abs() <= 1e-12 && seq < best.1)
            {
                *best = (total, seq);
            }
            return;
        }
        for (word, prons) in words {
            let mut full_hist = vec![BOS.to_string()];
            full_hist.extend(hist.iter().cloned());
            let lm_score = lm.score(&full_hist, word).unwrap() + wip;
            for end in frame + 1..=post.frames {
                // best pronunciation and alignment for this span
                let mut am = f64::NEG_INFINITY;
                for pron in prons {
                    let s = best_alignment_score(post, pron, frame, end);
                    if s > am {
                        am = s;
                    }
                }
                if am == f64::NEG_INFINITY {
                    continue;
                }
                hist.push((*word).clone());
                recurse(
                    post,
                    words,
                    lm,
                    scale,
                    wip,
                    end,
                    hist,
                    score + scale * am + lm_score,
                    best,
                    all,
                );
                hist.pop();
            }
        }
    }
    let mut hist = Vec::new();
    recurse(
        post, &words, lm, acoustic_scale, wip, 0, &mut hist, 0.0, &mut best, &mut all,
    );
    (best.0, best.1, all)
}
