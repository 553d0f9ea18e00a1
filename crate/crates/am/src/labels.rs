use crate::{AmError, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Frame-label files hold one utterance per line:
/// `<utt_id> <label> <label> ...` with integer state labels.
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let utt = parts.next().unwrap().to_string();
        let labels: Vec<usize> = parts
            .map(|p| {
                p.parse().map_err(|e| AmError::BadLabelFile {
                    line: line_no,
                    msg: format!("bad label {p}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if labels.is_empty() {
            return Err(AmError::BadLabelFile {
                line: line_no,
                msg: format!("utterance {utt} has no labels"),
            });
        }
        if out.insert(utt.clone(), labels).is_some() {
            return Err(AmError::BadLabelFile {
                line: line_no,
                msg: format!("duplicate utterance {utt}"),
            });
        }
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    parse_labels(&std::fs::read_to_string(path)?)
}
