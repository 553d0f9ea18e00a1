use crate::{DecodeError, Result};
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

pub const EPSILON: &str = "<eps>";

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeNode {
    pub frame: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeArc {
    pub from: usize,
    pub to: usize,
    /// None is an epsilon arc; epsilon into the final node marks sentence end.
    pub word: Option<String>,
    /// Acoustic log-score, pre-scaled; includes the unk pronunciation cost
    /// for unk arcs so LM replacement preserves it.
    pub am: f64,
    /// LM log-score (natural log).
    pub lm: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Lattice {
    pub nodes: Vec<LatticeNode>,
    pub arcs: Vec<LatticeArc>,
    pub start: usize,
    pub final_node: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeStats {
    pub num_nodes: usize,
    pub num_arcs: usize,
    pub num_word_sequences: usize,
    /// False when the sequence count hit the enumeration cap and is only a
    /// lower bound.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestPath {
    pub words: Vec<String>,
    pub score: f64,
    /// (word, start frame, end frame) per word arc.
    pub alignment: Vec<(String, usize, usize)>,
}

impl Lattice {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| DecodeError::InvalidLattice(msg);
        if self.nodes.is_empty() {
            return Err(DecodeError::EmptyLattice);
        }
        if self.start >= self.nodes.len() || self.final_node >= self.nodes.len() {
            return Err(bad("start/final id out of range".into()));
        }
        if self.nodes[self.start].frame != 0 {
            return Err(bad("start node not at frame 0".into()));
        }
        for (i, arc) in self.arcs.iter().enumerate() {
            if arc.from >= self.nodes.len() || arc.to >= self.nodes.len() {
                return Err(bad(format!("arc {i} endpoint out of range")));
            }
            let (f, t) = (self.nodes[arc.from].frame, self.nodes[arc.to].frame);
            match arc.word {
                Some(_) if t <= f => {
                    return Err(bad(format!("word arc {i} does not advance time")))
                }
                None if t != f => {
                    return Err(bad(format!("epsilon arc {i} changes frame")))
                }
                _ => {}
            }
        }
        // topological order exists (word arcs advance frames; epsilon arcs
        // stay, so a cycle requires an epsilon cycle within one frame)
        self.topo_order()?;
        // reachability both ways
        let fwd = self.reachable_from(self.start, false);
        let bwd = self.reachable_from(self.final_node, true);
        for id in 0..self.nodes.len() {
            if !fwd.contains(&id) || !bwd.contains(&id) {
                return Err(bad(format!("node {id} not on any start-final path")));
            }
        }
        Ok(())
    }

    fn reachable_from(&self, origin: usize, reverse: bool) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![origin];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            for arc in &self.arcs {
                let (src, dst) = if reverse {
                    (arc.to, arc.from)
                } else {
                    (arc.from, arc.to)
                };
                if src == n && !seen.contains(&dst) {
                    stack.push(dst);
                }
            }
        }
        seen
    }

    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, arc) in self.arcs.iter().enumerate() {
            indeg[arc.to] += 1;
            out[arc.from].push(i);
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        queue.sort_unstable();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = queue.pop() {
            order.push(u);
            for &ai in &out[u] {
                let v = self.arcs[ai].to;
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push(v);
                }
            }
        }
        if order.len() != n {
            return Err(DecodeError::InvalidLattice("cycle detected".into()));
        }
        Ok(order)
    }

    /// Max-score start-to-final path; ties resolved toward the
    /// lexicographically smaller word sequence.
    pub fn best_path(&self) -> Result<BestPath> {
        if self.nodes.is_empty() {
            return Err(DecodeError::EmptyLattice);
        }
        let order = self.topo_order()?;
        let n = self.nodes.len();
        let mut score = vec![f64::NEG_INFINITY; n];
        let mut back: Vec<Option<usize>> = vec![None; n]; // arc index
        let mut words: Vec<Vec<String>> = vec![Vec::new(); n];
        score[self.start] = 0.0;
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, arc) in self.arcs.iter().enumerate() {
            out[arc.from].push(i);
        }
        for &u in &order {
            if score[u] == f64::NEG_INFINITY {
                continue;
            }
            for &ai in &out[u] {
                let arc = &self.arcs[ai];
                let cand = score[u] + arc.am + arc.lm;
                let mut cand_words = words[u].clone();
                if let Some(w) = &arc.word {
                    cand_words.push(w.clone());
                }
                let better = cand > score[arc.to] + 1e-12
                    || ((cand - score[arc.to]).abs() <= 1e-12
                        && cand_words < words[arc.to]);
                if better {
                    score[arc.to] = cand;
                    back[arc.to] = Some(ai);
                    words[arc.to] = cand_words;
                }
            }
        }
        if score[self.final_node] == f64::NEG_INFINITY {
            return Err(DecodeError::NoPath);
        }
        let mut alignment = Vec::new();
        let mut cur = self.final_node;
        while let Some(ai) = back[cur] {
            let arc = &self.arcs[ai];
            if let Some(w) = &arc.word {
                alignment.push((
                    w.clone(),
                    self.nodes[arc.from].frame,
                    self.nodes[arc.to].frame,
                ));
            }
            cur = arc.from;
        }
        alignment.reverse();
        Ok(BestPath {
            words: words[self.final_node].clone(),
            score: score[self.final_node],
            alignment,
        })
    }

    /// Drops arcs whose best complete path falls more than `beam` below the
    /// overall best, then removes orphaned nodes.
    pub fn prune(&self, beam: f64) -> Result<Lattice> {
        if beam < 0.0 {
            return Err(DecodeError::InvalidParam("negative beam".into()));
        }
        let order = self.topo_order()?;
        let n = self.nodes.len();
        let mut fwd = vec![f64::NEG_INFINITY; n];
        let mut bwd = vec![f64::NEG_INFINITY; n];
        fwd[self.start] = 0.0;
        for &u in &order {
            for arc in self.arcs.iter().filter(|a| a.from == u) {
                let c = fwd[u] + arc.am + arc.lm;
                if c > fwd[arc.to] {
                    fwd[arc.to] = c;
                }
            }
        }
        bwd[self.final_node] = 0.0;
        for &u in order.iter().rev() {
            for arc in self.arcs.iter().filter(|a| a.to == u) {
                let c = bwd[u] + arc.am + arc.lm;
                if c > bwd[arc.from] {
                    bwd[arc.from] = c;
                }
            }
        }
        let best = fwd[self.final_node];
        if best == f64::NEG_INFINITY {
            return Err(DecodeError::NoPath);
        }
        let keep_arc: Vec<bool> = self
            .arcs
            .iter()
            .map(|a| fwd[a.from] + a.am + a.lm + bwd[a.to] >= best - beam)
            .collect();
        let mut keep_node = vec![false; n];
        keep_node[self.start] = true;
        keep_node[self.final_node] = true;
        for (a, &k) in self.arcs.iter().zip(&keep_arc) {
            if k {
                keep_node[a.from] = true;
                keep_node[a.to] = true;
            }
        }
        let mut remap = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        for i in 0..n {
            if keep_node[i] {
                remap[i] = nodes.len();
                nodes.push(self.nodes[i].clone());
            }
        }
        let arcs = self
            .arcs
            .iter()
            .zip(&keep_arc)
            .filter(|(_, &k)| k)
            .map(|(a, _)| LatticeArc {
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
            start: remap[self.start],
            final_node: remap[self.final_node],
        })
    }

    /// Node/arc counts plus the number of distinct word sequences, exact up
    /// to a million sequences.
    pub fn stats(&self) -> LatticeStats {
        const CAP: usize = 1_000_000;
        let mut sequences: BTreeSet<Vec<String>> = BTreeSet::new();
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (i, arc) in self.arcs.iter().enumerate() {
            out[arc.from].push(i);
        }
        let mut exact = true;
        // iterative DFS over (node, words-so-far)
        let mut stack: Vec<(usize, Vec<String>)> = vec![(self.start, Vec::new())];
        while let Some((u, words)) = stack.pop() {
            if sequences.len() > CAP {
                exact = false;
                break;
            }
            if u == self.final_node {
                sequences.insert(words.clone());
            }
            for &ai in &out[u] {
                let arc = &self.arcs[ai];
                let mut w = words.clone();
                if let Some(word) = &arc.word {
                    w.push(word.clone());
                }
                stack.push((arc.to, w));
            }
        }
        LatticeStats {
            num_nodes: self.nodes.len(),
            num_arcs: self.arcs.len(),
            num_word_sequences: sequences.len().min(CAP),
            exact,
        }
    }

    /// Deterministic DOT export: nodes labeled by frame, arcs `word/am:lm`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph lattice {\n  rankdir=LR;\n");
        for (i, node) in self.nodes.iter().enumerate() {
            let shape = if i == self.final_node {
                "doublecircle"
            } else {
                "circle"
            };
            out.push_str(&format!(
                "  n{i} [label=\"{i}@{}\", shape={shape}];\n",
                node.frame
            ));
        }
        let mut arcs: Vec<&LatticeArc> = self.arcs.iter().collect();
        arcs.sort_by(|a, b| (a.from, a.to, &a.word).cmp(&(b.from, b.to, &b.word)));
        for arc in arcs {
            let word = arc.word.as_deref().unwrap_or(EPSILON);
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{}/{:.3}:{:.3}\"];\n",
                arc.from, arc.to, word, arc.am, arc.lm
            ));
        }
        out.push_str("}\n");
        out
    }

    /// Text serialization: header, `N id frame` node lines, then one arc per
    /// line `from to word am lm`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("start {}\nfinal {}\n", self.start, self.final_node));
        for (i, node) in self.nodes.iter().enumerate() {
            out.push_str(&format!("N {i} {}\n", node.frame));
        }
        for arc in &self.arcs {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                arc.from,
                arc.to,
                arc.word.as_deref().unwrap_or(EPSILON),
                arc.am,
                arc.lm
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.serialize()).map_err(|e| {
            DecodeError::InvalidLattice(format!("cannot write {}: {e}", path.display()))
        })
    }

    pub fn parse(text: &str) -> Result<Lattice> {
        let bad = |line: usize, msg: &str| DecodeError::BadLatticeFile {
            line,
            msg: msg.to_string(),
        };
        let mut lat = Lattice::default();
        let mut node_map: HashMap<usize, usize> = HashMap::new();
        let mut start: Option<usize> = None;
        let mut final_node: Option<usize> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "start" | "final" => {
                    let id: usize = fields
                        .get(1)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad(i + 1, "bad header id"))?;
                    if fields[0] == "start" {
                        start = Some(id);
                    } else {
                        final_node = Some(id);
                    }
                }
                "N" => {
                    if fields.len() != 3 {
                        return Err(bad(i + 1, "node line needs `N id frame`"));
                    }
                    let id: usize =
                        fields[1].parse().map_err(|_| bad(i + 1, "bad node id"))?;
                    let frame: usize =
                        fields[2].parse().map_err(|_| bad(i + 1, "bad frame"))?;
                    node_map.insert(id, lat.nodes.len());
                    lat.nodes.push(LatticeNode { frame });
                }
                _ => {
                    if fields.len() != 5 {
                        return Err(bad(i + 1, "arc line needs `from to word am lm`"));
                    }
                    let from: usize =
                        fields[0].parse().map_err(|_| bad(i + 1, "bad from id"))?;
                    let to: usize =
                        fields[1].parse().map_err(|_| bad(i + 1, "bad to id"))?;
                    let word = if fields[2] == EPSILON {
                        None
                    } else {
                        Some(fields[2].to_string())
                    };
                    let am: f64 =
                        fields[3].parse().map_err(|_| bad(i + 1, "bad am score"))?;
                    let lm: f64 =
                        fields[4].parse().map_err(|_| bad(i + 1, "bad lm score"))?;
                    let from = *node_map
                        .get(&from)
                        .ok_or_else(|| bad(i + 1, "arc before node"))?;
                    let to = *node_map
                        .get(&to)
                        .ok_or_else(|| bad(i + 1, "arc before node"))?;
                    lat.arcs.push(LatticeArc {
                        from,
                        to,
                        word,
                        am,
                        lm,
                    });
                }
            }
        }
        lat.start = start.ok_or_else(|| bad(0, "missing start header"))?;
        lat.final_node = final_node.ok_or_else(|| bad(0, "missing final header"))?;
        Ok(lat)
    }
}
