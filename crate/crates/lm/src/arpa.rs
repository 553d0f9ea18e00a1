//! ARPA-style text serialization for backoff n-gram models: log10
//! probabilities, one section per order, optional backoff weight per entry.

use crate::ngram::NGramModel;
use crate::{LmError, Result};
use std::collections::HashMap;
use std::path::Path;

pub fn save_arpa(model: &NGramModel, path: &Path) -> Result<()> {
    let text = to_arpa(model);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|source| LmError::Io {
        path: tmp.display().to_string(),
        source,
    })?;
    std::fs::rename(&tmp, path).map_err(|source| LmError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn to_arpa(model: &NGramModel) -> String {
    let (probs, backoffs) = model.tables();
    let mut out = String::from("\\data\\\n");
    for (i, table) in probs.iter().enumerate() {
        out.push_str(&format!("ngram {}={}\n", i + 1, table.len()));
    }
    for (i, table) in probs.iter().enumerate() {
        out.push_str(&format!("\n\\{}-grams:\n", i + 1));
        let mut entries: Vec<(Vec<&str>, f64, Option<f64>)> = table
            .iter()
            .map(|(gram, &lp)| {
                let words: Vec<&str> =
                    gram.iter().map(|&id| model.word(id).unwrap()).collect();
                let bow = backoffs
                    .get(i)
                    .and_then(|b| b.get(gram))
                    .copied();
                (words, lp, bow)
            })
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for (words, lp, bow) in entries {
            out.push_str(&format!("{lp}\t{}", words.join(" ")));
            if let Some(b) = bow {
                out.push_str(&format!("\t{b}"));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

pub fn load_arpa(path: &Path) -> Result<NGramModel> {
    let text = std::fs::read_to_string(path).map_err(|source| LmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_arpa(&text)
}

pub fn from_arpa(text: &str) -> Result<NGramModel> {
    let bad = |line: usize, msg: &str| LmError::BadModelFile {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    // header
    let mut declared: Vec<usize> = Vec::new();
    let mut saw_data = false;
    for (i, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "\\data\\" {
            saw_data = true;
            continue;
        }
        if !saw_data {
            return Err(bad(i + 1, "expected \\data\\ header"));
        }
        if let Some(rest) = line.strip_prefix("ngram ") {
            let (k, count) = rest
                .split_once('=')
                .ok_or_else(|| bad(i + 1, "malformed ngram count"))?;
            let k: usize = k.trim().parse().map_err(|_| bad(i + 1, "bad order"))?;
            let count: usize =
                count.trim().parse().map_err(|_| bad(i + 1, "bad count"))?;
            if k != declared.len() + 1 {
                return Err(bad(i + 1, "ngram counts out of order"));
            }
            declared.push(count);
            continue;
        }
        if line.starts_with('\\') {
            // first section header; re-process below
            return parse_sections(text, declared, i);
        }
        return Err(bad(i + 1, "unexpected line in header"));
    }
    Err(bad(0, "no n-gram sections found"))
}

fn parse_sections(text: &str, declared: Vec<usize>, start_line: usize) -> Result<NGramModel> {
    let bad = |line: usize, msg: String| LmError::BadModelFile { line, msg };
    let order = declared.len();
    if order == 0 {
        return Err(bad(start_line + 1, "empty \\data\\ section".into()));
    }
    // two passes: collect vocabulary from the 1-gram section, then grams
    let mut raw_sections: Vec<Vec<(usize, &str)>> = vec![Vec::new(); order];
    let mut current: Option<usize> = None;
    for (i, line) in text.lines().enumerate().skip(start_line) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "\\end\\" {
            current = None;
            continue;
        }
        if let Some(rest) = line.strip_prefix('\\') {
            let k = rest
                .strip_suffix("-grams:")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| bad(i + 1, format!("unknown section {line}")))?;
            if k == 0 || k > order {
                return Err(bad(i + 1, format!("section order {k} out of range")));
            }
            current = Some(k);
            continue;
        }
        match current {
            Some(k) => raw_sections[k - 1].push((i + 1, line)),
            None => return Err(bad(i + 1, "entry outside any section".into())),
        }
    }
    for (k, (section, want)) in raw_sections.iter().zip(&declared).enumerate() {
        if section.len() != *want {
            return Err(bad(
                0,
                format!(
                    "\\{}-grams: declared {want} entries, found {}",
                    k + 1,
                    section.len()
                ),
            ));
        }
    }

    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut vocab: Vec<String> = Vec::new();
    ids.insert(crate::ngram::BOS.to_string(), 0);
    // stable id assignment: sorted unigram words
    let mut words: Vec<&str> = Vec::new();
    for (line_no, line) in &raw_sections[0] {
        let mut f = line.split_whitespace();
        let _lp = f.next();
        let w = f
            .next()
            .ok_or_else(|| bad(*line_no, "unigram entry missing word".into()))?;
        if w != crate::ngram::BOS {
            words.push(w);
        }
    }
    words.sort_unstable();
    for w in words {
        if !ids.contains_key(w) {
            ids.insert(w.to_string(), (vocab.len() + 1) as u32);
            vocab.push(w.to_string());
        }
    }

    let mut probs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order];
    let mut backoffs: Vec<HashMap<Vec<u32>, f64>> =
        vec![HashMap::new(); order.max(2) - 1];
    for (k, section) in raw_sections.iter().enumerate() {
        let len = k + 1;
        for (line_no, line) in section {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != len + 1 && fields.len() != len + 2 {
                return Err(bad(*line_no, format!("expected {} or {} fields", len + 1, len + 2)));
            }
            let lp: f64 = fields[0]
                .parse()
                .map_err(|_| bad(*line_no, "bad log-probability".into()))?;
            let gram: Vec<u32> = fields[1..=len]
                .iter()
                .map(|w| {
                    ids.get(*w)
                        .copied()
                        .ok_or_else(|| bad(*line_no, format!("word {w} not in unigrams")))
                })
                .collect::<Result<_>>()?;
            probs[k].insert(gram.clone(), lp);
            if fields.len() == len + 2 {
                if len >= order {
                    return Err(bad(*line_no, "backoff weight on top-order entry".into()));
                }
                let bow: f64 = fields[len + 1]
                    .parse()
                    .map_err(|_| bad(*line_no, "bad backoff weight".into()))?;
                backoffs[k].insert(gram, bow);
            }
        }
    }
    Ok(NGramModel::from_tables(order, vocab, ids, probs, backoffs))
}
