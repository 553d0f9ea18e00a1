use crate::lattice::{Lattice, LatticeArc, LatticeNode};
use crate::{DecodeError, Result};
use descant_lm::{NGramModel, RecurrentLM, EOS};
use std::collections::BTreeMap;

/// Replaces arc LM scores with scores from `lm`, splitting nodes whenever
/// the relevant LM histories diverge. Acoustic scores are untouched.
pub fn rescore_ngram(
    lattice: &Lattice,
    lm: &NGramModel,
    word_insertion_penalty: f64,
) -> Result<Lattice> {
    lattice.validate()?;
    let order = lattice.topo_order()?;
    let hist_cap = lm.order().saturating_sub(1);
    let truncate = |mut h: Vec<u32>| -> Vec<u32> {
        if h.len() > hist_cap {
            h.drain(..h.len() - hist_cap);
        }
        h
    };
    let map_word = |w: &str| -> Result<u32> {
        lm.word_id(w)
            .or(lm.unk_id())
            .ok_or_else(|| DecodeError::Unmappable(w.to_string()))
    };

    // expanded states: (old node, history) -> new node id
    let mut new_nodes: Vec<LatticeNode> = Vec::new();
    let mut arcs: Vec<LatticeArc> = Vec::new();
    let mut states: Vec<BTreeMap<Vec<u32>, usize>> =
        vec![BTreeMap::new(); lattice.nodes.len()];
    let final_new = {
        new_nodes.push(lattice.nodes[lattice.final_node].clone());
        0usize
    };
    let start_hist = truncate(vec![lm.bos_id()]);
    let start_new = {
        new_nodes.push(lattice.nodes[lattice.start].clone());
        1usize
    };
    states[lattice.start].insert(start_hist, start_new);

    let mut out: Vec<Vec<&LatticeArc>> = vec![Vec::new(); lattice.nodes.len()];
    for arc in &lattice.arcs {
        out[arc.from].push(arc);
    }
    for row in out.iter_mut() {
        row.sort_by(|a, b| (a.to, &a.word).cmp(&(b.to, &b.word)));
    }
    let eos = lm.eos_id();
    for &u in &order {
        if states[u].is_empty() {
            continue;
        }
        let hists: Vec<(Vec<u32>, usize)> = states[u]
            .iter()
            .map(|(h, &id)| (h.clone(), id))
            .collect();
        for (hist, new_u) in hists {
            for arc in &out[u] {
                match &arc.word {
                    Some(w) => {
                        let wid = map_word(w)?;
                        let lm_score = lm
                            .score_ids(&hist, wid)
                            .ok_or_else(|| DecodeError::Unmappable(w.clone()))?
                            + word_insertion_penalty;
                        let mut nh = hist.clone();
                        nh.push(wid);
                        let nh = truncate(nh);
                        let new_v = *states[arc.to].entry(nh).or_insert_with(|| {
                            new_nodes.push(lattice.nodes[arc.to].clone());
                            new_nodes.len() - 1
                        });
                        arcs.push(LatticeArc {
                            from: new_u,
                            to: new_v,
                            word: Some(w.clone()),
                            am: arc.am,
                            lm: lm_score,
                        });
                    }
                    None => {
                        // epsilon into the final node: sentence end
                        let lm_score = lm
                            .score_ids(&hist, eos)
                            .ok_or_else(|| DecodeError::Unmappable(EOS.into()))?;
                        let to = if arc.to == lattice.final_node {
                            final_new
                        } else {
                            return Err(DecodeError::InvalidLattice(
                                "epsilon arc not into the final node".into(),
                            ));
                        };
                        arcs.push(LatticeArc {
                            from: new_u,
                            to,
                            word: None,
                            am: arc.am,
                            lm: lm_score,
                        });
                    }
                }
            }
        }
    }
    let result = Lattice {
        nodes: new_nodes,
        arcs,
        start: start_new,
        final_node: final_new,
    };
    let result = crate::decode::trim(&result)?;
    result.validate()?;
    Ok(result)
}

/// Interpolates arc LM scores with a recurrent LM along expanded paths:
/// `lm <- (1-w) * ngram + w * rnn`. Histories reaching a node are merged
/// when their last `merge_words` words agree, keeping the state of the
/// best-scoring path; expansion is limited by `pruning_beam`.
pub fn rescore_rnnlm(
    lattice: &Lattice,
    rnn: &RecurrentLM,
    weight: f64,
    merge_words: usize,
    pruning_beam: f64,
) -> Result<Lattice> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(DecodeError::InvalidParam(
            "interpolation weight outside [0,1]".into(),
        ));
    }
    if merge_words == 0 {
        return Err(DecodeError::InvalidParam("merge_words == 0".into()));
    }
    lattice.validate()?;
    let order = lattice.topo_order()?;

    struct State {
        new_id: usize,
        rnn_state: Vec<f64>,
        fwd: f64,
    }
    // per old node: merged-history key -> expanded state
    let mut states: Vec<BTreeMap<Vec<u32>, State>> = (0..lattice.nodes.len())
        .map(|_| BTreeMap::new())
        .collect();
    let mut new_nodes: Vec<LatticeNode> = Vec::new();
    let mut arcs: Vec<LatticeArc> = Vec::new();
    new_nodes.push(lattice.nodes[lattice.final_node].clone());
    let final_new = 0usize;
    new_nodes.push(lattice.nodes[lattice.start].clone());
    states[lattice.start].insert(
        Vec::new(),
        State {
            new_id: 1,
            rnn_state: rnn.zero_state(),
            fwd: 0.0,
        },
    );

    let mut out: Vec<Vec<&LatticeArc>> = vec![Vec::new(); lattice.nodes.len()];
    for arc in &lattice.arcs {
        out[arc.from].push(arc);
    }
    for row in out.iter_mut() {
        row.sort_by(|a, b| (a.to, &a.word).cmp(&(b.to, &b.word)));
    }

    for &u in &order {
        if states[u].is_empty() {
            continue;
        }
        // prune expanded states against the node-best forward score
        let best = states[u]
            .values()
            .map(|s| s.fwd)
            .fold(f64::NEG_INFINITY, f64::max);
        let live: Vec<Vec<u32>> = states[u]
            .iter()
            .filter(|(_, s)| s.fwd >= best - pruning_beam)
            .map(|(k, _)| k.clone())
            .collect();
        for key in live {
            let (new_u, rnn_state, fwd) = {
                let s = &states[u][&key];
                (s.new_id, s.rnn_state.clone(), s.fwd)
            };
            for arc in &out[u] {
                let (word_for_rnn, is_final) = match &arc.word {
                    Some(w) => (w.as_str(), false),
                    None => (EOS, arc.to == lattice.final_node),
                };
                let (lp, next_state) = rnn
                    .score_step(&rnn_state, word_for_rnn)
                    .map_err(|_| DecodeError::Unmappable(word_for_rnn.into()))?;
                let lm_new = (1.0 - weight) * arc.lm + weight * lp;
                if arc.word.is_none() {
                    if !is_final {
                        return Err(DecodeError::InvalidLattice(
                            "epsilon arc not into the final node".into(),
                        ));
                    }
                    arcs.push(LatticeArc {
                        from: new_u,
                        to: final_new,
                        word: None,
                        am: arc.am,
                        lm: lm_new,
                    });
                    continue;
                }
                let wid = rnn.word_id(word_for_rnn).unwrap_or_else(|| {
                    rnn.word_id(descant_lm::UNK).expect("rnn has unk")
                });
                let mut nk = key.clone();
                nk.push(wid);
                if nk.len() > merge_words {
                    nk.drain(..nk.len() - merge_words);
                }
                let cand_fwd = fwd + arc.am + lm_new;
                let target = states[arc.to].get_mut(&nk);
                let new_v = match target {
                    Some(s) => {
                        if cand_fwd > s.fwd {
                            s.fwd = cand_fwd;
                            s.rnn_state = next_state;
                        }
                        s.new_id
                    }
                    None => {
                        new_nodes.push(lattice.nodes[arc.to].clone());
                        let id = new_nodes.len() - 1;
                        states[arc.to].insert(
                            nk,
                            State {
                                new_id: id,
                                rnn_state: next_state,
                                fwd: cand_fwd,
                            },
                        );
                        id
                    }
                };
                arcs.push(LatticeArc {
                    from: new_u,
                    to: new_v,
                    word: arc.word.clone(),
                    am: arc.am,
                    lm: lm_new,
                });
            }
        }
    }
    let result = Lattice {
        nodes: new_nodes,
        arcs,
        start: 1,
        final_node: final_new,
    };
    let result = crate::decode::trim(&result)?;
    result.validate()?;
    Ok(result)
}
