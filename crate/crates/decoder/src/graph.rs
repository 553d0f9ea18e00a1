use crate::{DecodeError, Result};
use descant_lm::{Lexicon, NGramModel, UnkModel, BOS, EOS, UNK};

/// Phone-level prefix tree over the lexicon. Node 0 is the root (no phone);
/// every other node is reached by consuming one phone, with one HMM state
/// per phone (self-loop added at search time). Words complete at the node
/// reached by their final phone.
#[derive(Clone, Debug)]
pub struct DecodeGraph {
    /// Sorted phone inventory; posterior column k scores phone k.
    pub phones: Vec<String>,
    pub nodes: Vec<TreeNode>,
    /// Phone-loop pronunciation model for unk, if enabled.
    pub unk: Option<UnkModel>,
    /// Log phone probabilities of the unk loop, indexed like `phones`.
    pub unk_phone_logp: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TreeNode {
    /// Phone index consumed on the arc into this node (unused for the root).
    pub phone: usize,
    pub children: Vec<usize>,
    /// Words whose pronunciation completes here.
    pub words: Vec<String>,
}

pub fn build_graph(
    lexicon: &Lexicon,
    lm: &NGramModel,
    unk: Option<UnkModel>,
) -> Result<DecodeGraph> {
    if lexicon.entries.is_empty() {
        return Err(DecodeError::EmptyLexicon);
    }
    let phones: Vec<String> = lexicon.inventory.iter().cloned().collect();
    let phone_id = |ph: &str| phones.iter().position(|p| p == ph).unwrap();

    // every LM word needs a pronunciation unless the unk loop covers it
    for word in lm.vocab() {
        if word == EOS || word == BOS || word == UNK {
            continue;
        }
        if !lexicon.contains(word) && unk.is_none() {
            return Err(DecodeError::VocabMismatch(word.clone()));
        }
    }

    let mut nodes = vec![TreeNode::default()];
    for (word, prons) in &lexicon.entries {
        if lm.word_id(word).is_none() {
            // not scorable: acoustically reachable only through the unk loop
            continue;
        }
        for pron in prons {
            let mut cur = 0usize;
            for ph in pron {
                let pid = phone_id(ph);
                cur = match nodes[cur].children.iter().find(|&&c| nodes[c].phone == pid)
                {
                    Some(&c) => c,
                    None => {
                        nodes.push(TreeNode {
                            phone: pid,
                            children: Vec::new(),
                            words: Vec::new(),
                        });
                        let id = nodes.len() - 1;
                        let parent = cur;
                        nodes[parent].children.push(id);
                        id
                    }
                };
            }
            if !nodes[cur].words.contains(word) {
                nodes[cur].words.push(word.clone());
            }
        }
    }

    let unk_phone_logp = match &unk {
        Some(model) => phones
            .iter()
            .map(|ph| {
                model
                    .phone_probs
                    .iter()
                    .find(|(name, _)| name == ph)
                    .map(|(_, p)| p.ln())
                    .unwrap_or(f64::NEG_INFINITY)
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(DecodeGraph {
        phones,
        nodes,
        unk,
        unk_phone_logp,
    })
}

impl DecodeGraph {
    pub fn num_phones(&self) -> usize {
        self.phones.len()
    }

    pub fn phone_index(&self, phone: &str) -> Option<usize> {
        self.phones.iter().position(|p| p == phone)
    }
}
