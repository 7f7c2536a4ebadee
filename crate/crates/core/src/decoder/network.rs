//! The recognition network: a weighted finite-state transducer whose arcs
//! carry an acoustic-model id (input), a word id (output), and a
//! negative-log weight.

use crate::error::{Error, Result};
use crate::gmm::Gmm;

/// Label value meaning epsilon (input) or no word (output).
pub const EPSILON: u32 = 0;

/// One transition. `id` is the arc's position in the network's arc vector and
/// is the first tie-break key on equal costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetArc {
    pub src: u32,
    pub dest: u32,
    pub ilabel: u32,
    pub olabel: u32,
    pub weight: f64,
}

/// Validated WFST plus its sidecar tables. State 0 is the start state.
/// Model id m (>= 1) refers to `models[m - 1]`; word id w (>= 1) to
/// `words[w - 1]`.
#[derive(Debug, Clone)]
pub struct RecognitionNetwork {
    state_count: usize,
    arcs: Vec<NetArc>,
    offsets: Vec<usize>,
    finals: Vec<Option<f64>>,
    words: Vec<String>,
    models: Vec<Gmm>,
    /// States ordered so every epsilon arc goes from an earlier to a later
    /// position; validated acyclic at load.
    eps_order: Vec<u32>,
}

impl RecognitionNetwork {
    pub fn new(
        state_count: usize,
        mut arcs: Vec<NetArc>,
        finals: Vec<(u32, f64)>,
        words: Vec<String>,
        models: Vec<Gmm>,
    ) -> Result<Self> {
        if state_count == 0 {
            return Err(Error::InvalidNetwork("network needs at least the start state".into()));
        }
        for a in &arcs {
            if a.src as usize >= state_count || a.dest as usize >= state_count {
                return Err(Error::InvalidNetwork(format!(
                    "arc {} -> {} references a state >= state_count {}",
                    a.src, a.dest, state_count
                )));
            }
            if a.ilabel != EPSILON && (a.ilabel as usize) > models.len() {
                return Err(Error::InvalidNetwork(format!(
                    "arc input label {} has no model-table entry",
                    a.ilabel
                )));
            }
            if a.olabel != EPSILON && (a.olabel as usize) > words.len() {
                return Err(Error::InvalidNetwork(format!(
                    "arc output label {} has no word-table entry",
                    a.olabel
                )));
            }
            if !a.weight.is_finite() {
                return Err(Error::InvalidNetwork("arc weight must be finite".into()));
            }
        }
        if !models.is_empty() {
            let dim = models[0].dim();
            if models.iter().any(|m| m.dim() != dim) {
                return Err(Error::InvalidNetwork("acoustic models disagree on dimension".into()));
            }
        }
        // arc ids follow (src, original order); stable sort keeps intra-state order
        arcs.sort_by_key(|a| a.src);
        let mut offsets = vec![0usize; state_count + 1];
        for a in &arcs {
            offsets[a.src as usize + 1] += 1;
        }
        for i in 0..state_count {
            offsets[i + 1] += offsets[i];
        }
        let mut final_table = vec![None; state_count];
        for (s, w) in finals {
            if s as usize >= state_count {
                return Err(Error::InvalidNetwork(format!("final state {s} out of range")));
            }
            final_table[s as usize] = Some(w);
        }
        let eps_order = epsilon_topological_order(state_count, &arcs)?;
        Ok(Self {
            state_count,
            arcs,
            offsets,
            finals: final_table,
            words,
            models,
            eps_order,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn start_state(&self) -> u32 {
        0
    }

    pub fn arcs_from(&self, state: u32) -> &[NetArc] {
        &self.arcs[self.offsets[state as usize]..self.offsets[state as usize + 1]]
    }

    /// Global id of the first arc leaving `state`.
    pub fn first_arc_id(&self, state: u32) -> usize {
        self.offsets[state as usize]
    }

    pub fn all_arcs(&self) -> &[NetArc] {
        &self.arcs
    }

    pub fn final_weight(&self, state: u32) -> Option<f64> {
        self.finals[state as usize]
    }

    pub fn epsilon_order(&self) -> &[u32] {
        &self.eps_order
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize - 1]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn model(&self, ilabel: u32) -> &Gmm {
        &self.models[ilabel as usize - 1]
    }

    pub fn models(&self) -> &[Gmm] {
        &self.models
    }

    pub fn model_dim(&self) -> Option<usize> {
        self.models.first().map(|m| m.dim())
    }

    /// Parses the line-oriented text format: `src \t dst \t ilabel \t olabel
    /// \t weight` for arcs, `state \t weight` for final states. Blank lines
    /// and lines starting with '#' are skipped. The state count is one more
    /// than the largest referenced state id.
    pub fn from_text(text: &str, words: Vec<String>, models: Vec<Gmm>) -> Result<Self> {
        let mut arcs = Vec::new();
        let mut finals = Vec::new();
        let mut max_state = 0u32;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parse_u32 = |s: &str| -> Result<u32> {
                s.parse().map_err(|_| Error::Parse(format!("line {}: bad integer '{s}'", lineno + 1)))
            };
            let parse_f64 = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse(format!("line {}: bad number '{s}'", lineno + 1)))
            };
            match fields.len() {
                5 => {
                    let a = NetArc {
                        src: parse_u32(fields[0])?,
                        dest: parse_u32(fields[1])?,
                        ilabel: parse_u32(fields[2])?,
                        olabel: parse_u32(fields[3])?,
                        weight: parse_f64(fields[4])?,
                    };
                    max_state = max_state.max(a.src).max(a.dest);
                    arcs.push(a);
                }
                2 => {
                    let s = parse_u32(fields[0])?;
                    max_state = max_state.max(s);
                    finals.push((s, parse_f64(fields[1])?));
                }
                n => {
                    return Err(Error::Parse(format!(
                        "line {}: expected 2 or 5 tab-separated fields, got {n}",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(max_state as usize + 1, arcs, finals, words, models)
    }

    /// Serializes back to the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.arcs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                a.src, a.dest, a.ilabel, a.olabel, a.weight
            ));
        }
        for (s, w) in self.finals.iter().enumerate() {
            if let Some(w) = w {
                out.push_str(&format!("{s}\t{w}\n"));
            }
        }
        out
    }
}

/// Kahn's algorithm restricted to epsilon arcs. States with no epsilon
/// involvement still appear in the order.
fn epsilon_topological_order(state_count: usize, arcs: &[NetArc]) -> Result<Vec<u32>> {
    let mut indegree = vec![0usize; state_count];
    let mut out_edges: Vec<Vec<u32>> = vec![Vec::new(); state_count];
    for a in arcs {
        if a.ilabel == EPSILON {
            if a.src == a.dest {
                return Err(Error::InvalidNetwork(format!(
                    "epsilon self-loop on state {}",
                    a.src
                )));
            }
            indegree[a.dest as usize] += 1;
            out_edges[a.src as usize].push(a.dest);
        }
    }
    let mut queue: Vec<u32> = (0..state_count as u32).filter(|&s| indegree[s as usize] == 0).collect();
    // process smallest state first for a deterministic order
    queue.sort_unstable();
    let mut order = Vec::with_capacity(state_count);
    let mut head = 0;
    while head < queue.len() {
        // keep the frontier sorted
        queue[head..].sort_unstable();
        let s = queue[head];
        head += 1;
        order.push(s);
        for &d in &out_edges[s as usize] {
            indegree[d as usize] -= 1;
            if indegree[d as usize] == 0 {
                queue.push(d);
            }
        }
    }
    if order.len() != state_count {
        return Err(Error::InvalidNetwork("epsilon arcs form a cycle".into()));
    }
    Ok(order)
}
