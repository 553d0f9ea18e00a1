use crate::graph::DecodeGraph;
use crate::lattice::{BestPath, Lattice, LatticeArc, LatticeNode};
use crate::{DecodeError, Result};
use descant_lm::NGramModel;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Frame-by-state log-posteriors from the acoustic model, row-major.
#[derive(Clone, Debug)]
pub struct LogPosteriors {
    pub frames: usize,
    pub num_states: usize,
    pub data: Vec<f64>,
}

impl LogPosteriors {
    pub fn get(&self, frame: usize, state: usize) -> f64 {
        self.data[frame * self.num_states + state]
    }
}

#[derive(Clone, Debug)]
pub struct DecodeParams {
    pub beam: f64,
    pub lattice_beam: f64,
    pub acoustic_scale: f64,
    pub word_insertion_penalty: f64,
    pub max_active_tokens: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            beam: 16.0,
            lattice_beam: 8.0,
            acoustic_scale: 1.0,
            word_insertion_penalty: 0.0,
            max_active_tokens: 2000,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lattice_beam > 0.0 && self.beam >= self.lattice_beam) {
            return Err(DecodeError::InvalidParam(
                "need beam >= lattice_beam > 0".into(),
            ));
        }
        if self.max_active_tokens == 0 {
            return Err(DecodeError::InvalidParam("max_active_tokens == 0".into()));
        }
        Ok(())
    }
}

pub type Hypothesis = BestPath;

/// Search position: inside the prefix tree, or inside one phone of the unk
/// phone loop.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Pos {
    Tree(usize),
    Unk(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct TokKey {
    pos: Pos,
    /// Lattice node where the current word started.
    origin: usize,
    /// LM history at the word start, truncated to order-1 ids.
    hist: Vec<u32>,
}

#[derive(Clone, Copy, Debug)]
struct TokVal {
    /// Unscaled acoustic log-score accumulated inside the current word.
    am: f64,
    /// Unk pronunciation log-cost accumulated so far (0 for tree tokens).
    pron: f64,
}

pub fn decode(
    post: &LogPosteriors,
    graph: &DecodeGraph,
    lm: &NGramModel,
    params: &DecodeParams,
) -> Result<(Hypothesis, Lattice)> {
    params.validate()?;
    if post.num_states != graph.num_phones() {
        return Err(DecodeError::StateMismatch {
            got: post.num_states,
            want: graph.num_phones(),
        });
    }
    if post.frames == 0 {
        return Err(DecodeError::InvalidParam("no frames".into()));
    }
    let unk_id = match (&graph.unk, lm.unk_id()) {
        (Some(_), Some(id)) => Some(id),
        (Some(_), None) => {
            return Err(DecodeError::InvalidParam(
                "graph has an unk loop but the LM has no unk word".into(),
            ))
        }
        (None, _) => None,
    };
    let word_ids: HashMap<&str, u32> = graph
        .nodes
        .iter()
        .flat_map(|n| n.words.iter())
        .map(|w| (w.as_str(), lm.word_id(w).expect("graph word in LM")))
        .collect();
    let hist_cap = lm.order().saturating_sub(1);
    let truncate = |mut h: Vec<u32>| -> Vec<u32> {
        if h.len() > hist_cap {
            h.drain(..h.len() - hist_cap);
        }
        h
    };
    let scale = params.acoustic_scale;
    let t_total = post.frames;
    let k = post.num_states;
    let (log_cont, log_stop) = match &graph.unk {
        Some(u) => (u.continuation.ln(), (1.0 - u.continuation).ln()),
        None => (0.0, 0.0),
    };

    // lattice under construction
    let mut lat_frames: Vec<usize> = vec![0];
    let mut lat_hists: Vec<Vec<u32>> = vec![truncate(vec![lm.bos_id()])];
    let mut node_score: Vec<f64> = vec![0.0];
    let mut node_map: HashMap<(usize, Vec<u32>), usize> = HashMap::new();
    node_map.insert((0, lat_hists[0].clone()), 0);
    // arcs deduplicated by (from, to, word), keeping the best acoustic score
    let mut arc_map: BTreeMap<(usize, usize, String), (f64, f64)> = BTreeMap::new();

    let mut tokens: BTreeMap<TokKey, TokVal> = BTreeMap::new();
    let mut frontier: Vec<usize> = vec![0];

    for t in 0..t_total {
        let mut next: BTreeMap<TokKey, TokVal> = BTreeMap::new();
        let offer = |map: &mut BTreeMap<TokKey, TokVal>,
                         key: TokKey,
                         val: TokVal,
                         node_score: &[f64]| {
            let total = node_score[key.origin] + scale * val.am + val.pron;
            match map.get(&key) {
                Some(old)
                    if node_score[key.origin] + scale * old.am + old.pron >= total => {}
                _ => {
                    map.insert(key, val);
                }
            }
        };
        // existing tokens consume frame t
        for (key, val) in &tokens {
            match key.pos {
                Pos::Tree(n) => {
                    let node = &graph.nodes[n];
                    let stay = TokVal {
                        am: val.am + post.get(t, node.phone),
                        pron: val.pron,
                    };
                    offer(&mut next, key.clone(), stay, &node_score);
                    for &c in &node.children {
                        let adv = TokVal {
                            am: val.am + post.get(t, graph.nodes[c].phone),
                            pron: val.pron,
                        };
                        let k2 = TokKey {
                            pos: Pos::Tree(c),
                            origin: key.origin,
                            hist: key.hist.clone(),
                        };
                        offer(&mut next, k2, adv, &node_score);
                    }
                }
                Pos::Unk(p) => {
                    let stay = TokVal {
                        am: val.am + post.get(t, p),
                        pron: val.pron,
                    };
                    offer(&mut next, key.clone(), stay, &node_score);
                    for q in 0..k {
                        if graph.unk_phone_logp[q].is_finite() {
                            let adv = TokVal {
                                am: val.am + post.get(t, q),
                                pron: val.pron + log_cont + graph.unk_phone_logp[q],
                            };
                            let k2 = TokKey {
                                pos: Pos::Unk(q),
                                origin: key.origin,
                                hist: key.hist.clone(),
                            };
                            offer(&mut next, k2, adv, &node_score);
                        }
                    }
                }
            }
        }
        // new words start at every lattice node sitting at frame t
        for &l in &frontier {
            debug_assert_eq!(lat_frames[l], t);
            for &c in &graph.nodes[0].children {
                let val = TokVal {
                    am: post.get(t, graph.nodes[c].phone),
                    pron: 0.0,
                };
                let key = TokKey {
                    pos: Pos::Tree(c),
                    origin: l,
                    hist: lat_hists[l].clone(),
                };
                offer(&mut next, key, val, &node_score);
            }
            if graph.unk.is_some() {
                for p in 0..k {
                    if graph.unk_phone_logp[p].is_finite() {
                        let val = TokVal {
                            am: post.get(t, p),
                            pron: graph.unk_phone_logp[p],
                        };
                        let key = TokKey {
                            pos: Pos::Unk(p),
                            origin: l,
                            hist: lat_hists[l].clone(),
                        };
                        offer(&mut next, key, val, &node_score);
                    }
                }
            }
        }
        // beam pruning relative to the frame-best token
        let total_of = |key: &TokKey, val: &TokVal| {
            node_score[key.origin] + scale * val.am + val.pron
        };
        let best = next
            .iter()
            .map(|(k2, v)| total_of(k2, v))
            .fold(f64::NEG_INFINITY, f64::max);
        if params.beam.is_finite() {
            next.retain(|k2, v| total_of(k2, v) >= best - params.beam);
        }
        if next.len() > params.max_active_tokens {
            let mut ranked: Vec<(TokKey, TokVal)> = next.into_iter().collect();
            ranked.sort_by(|a, b| {
                total_of(&b.0, &b.1)
                    .partial_cmp(&total_of(&a.0, &a.1))
                    .unwrap()
                    .then_with(|| a.0.cmp(&b.0))
            });
            ranked.truncate(params.max_active_tokens);
            next = ranked.into_iter().collect();
        }
        tokens = next;

        // word completions at the t+1 boundary
        let mut new_frontier: BTreeSet<usize> = BTreeSet::new();
        let completions: Vec<(TokKey, TokVal, String, u32, f64)> = tokens
            .iter()
            .flat_map(|(key, val)| {
                let mut out = Vec::new();
                match key.pos {
                    Pos::Tree(n) => {
                        for w in &graph.nodes[n].words {
                            out.push((
                                key.clone(),
                                *val,
                                w.clone(),
                                word_ids[w.as_str()],
                                scale * val.am,
                            ));
                        }
                    }
                    Pos::Unk(_) => {
                        out.push((
                            key.clone(),
                            *val,
                            descant_lm::UNK.to_string(),
                            unk_id.unwrap(),
                            scale * val.am + val.pron + log_stop,
                        ));
                    }
                }
                out
            })
            .collect();
        for (key, _val, word, wid, arc_am) in completions {
            let lm_arc = match lm.score_ids(&key.hist, wid) {
                Some(s) => s + params.word_insertion_penalty,
                None => continue,
            };
            let mut new_hist = key.hist.clone();
            new_hist.push(wid);
            let new_hist = truncate(new_hist);
            let node = *node_map
                .entry((t + 1, new_hist.clone()))
                .or_insert_with(|| {
                    lat_frames.push(t + 1);
                    lat_hists.push(new_hist.clone());
                    node_score.push(f64::NEG_INFINITY);
                    lat_frames.len() - 1
                });
            let cand = node_score[key.origin] + arc_am + lm_arc;
            if cand > node_score[node] {
                node_score[node] = cand;
            }
            let entry = arc_map
                .entry((key.origin, node, word))
                .or_insert((f64::NEG_INFINITY, lm_arc));
            if arc_am > entry.0 {
                *entry = (arc_am, lm_arc);
            }
            new_frontier.insert(node);
        }
        frontier = new_frontier.into_iter().collect();
    }

    // sentence end: epsilon arcs into a unique final node
    let end_nodes: Vec<usize> = (0..lat_frames.len())
        .filter(|&i| lat_frames[i] == t_total)
        .collect();
    if end_nodes.is_empty() {
        return Err(DecodeError::NoPath);
    }
    let final_node = lat_frames.len();
    lat_frames.push(t_total);
    let eos = lm.eos_id();
    let mut arcs: Vec<LatticeArc> = arc_map
        .into_iter()
        .map(|((from, to, word), (am, lm))| LatticeArc {
            from,
            to,
            word: Some(word),
            am,
            lm,
        })
        .collect();
    for &n in &end_nodes {
        if let Some(s) = lm.score_ids(&lat_hists[n], eos) {
            arcs.push(LatticeArc {
                from: n,
                to: final_node,
                word: None,
                am: 0.0,
                lm: s,
            });
        }
    }
    let lattice = Lattice {
        nodes: lat_frames
            .iter()
            .map(|&frame| LatticeNode { frame })
            .collect(),
        arcs,
        start: 0,
        final_node,
    };
    let lattice = trim(&lattice)?;
    let lattice = if params.lattice_beam.is_finite() {
        lattice.prune(params.lattice_beam)?
    } else {
        lattice
    };
    lattice.validate()?;
    let best = lattice.best_path()?;
    Ok((best, lattice))
}

/// Removes nodes and arcs that are not on any start-to-final path.
pub fn trim(lat: &Lattice) -> Result<Lattice> {
    let n = lat.nodes.len();
    let mut fwd = vec![false; n];
    let mut bwd = vec![false; n];
    mark(lat, lat.start, false, &mut fwd);
    mark(lat, lat.final_node, true, &mut bwd);
    let keep: Vec<bool> = (0..n).map(|i| fwd[i] && bwd[i]).collect();
    if !keep[lat.start] || !keep[lat.final_node] {
        return Err(DecodeError::NoPath);
    }
    let mut remap = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for i in 0..n {
        if keep[i] {
            remap[i] = nodes.len();
            nodes.push(lat.nodes[i].clone());
        }
    }
    let arcs = lat
        .arcs
        .iter()
        .filter(|a| keep[a.from] && keep[a.to])
        .map(|a| LatticeArc {
            from: remap[a.from],
            to: remap[a.to],
            word: a.word.clone(),
            am: a.am,
            lm: a.lm,
        })
        .collect();
    Ok(Lattice {
        nodes,
        arcs,
        start: remap[lat.start],
        final_node: remap[lat.final_node],
    })
}

fn mark(lat: &Lattice, origin: usize, reverse: bool, seen: &mut [bool]) {
    let mut stack = vec![origin];
    while let Some(u) = stack.pop() {
        if seen[u] {
            continue;
        }
        seen[u] = true;
        for arc in &lat.arcs {
            let (src, dst) = if reverse {
                (arc.to, arc.from)
            } else {
                (arc.from, arc.to)
            };
            if src == u && !seen[dst] {
                stack.push(dst);
            }
        }
    }
}
