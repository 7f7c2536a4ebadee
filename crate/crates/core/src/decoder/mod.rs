//! Data-parallel WFST Viterbi beam search.
//!
//! Each frame runs two phases: a compute-intensive observation phase that
//! evaluates every gathered acoustic model against the frame's feature
//! vector, and a communication-intensive traversal phase that relaxes arcs
//! into a per-state best-cost table using atomic compare-and-update-minimum.
//! Minimum is commutative and associative, so final costs are independent of
//! scheduling; ties resolve to the smaller arc id then smaller source state,
//! which makes backpointers schedule-independent too.

pub mod network;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use network::{RecognitionNetwork, EPSILON};

/// Decode-time parameters. Costs are negative logs; smaller is better.
#[derive(Debug, Clone)]
pub struct DecodeConfig {
    pub beam_width: f64,
    pub acoustic_scale: f64,
    pub max_active: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam_width: 12.0, acoustic_scale: 0.083, max_active: None }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beam_width > 0.0) {
            return Err(Error::Config("beam_width must be positive".into()));
        }
        if !(self.acoustic_scale > 0.0) || !self.acoustic_scale.is_finite() {
            return Err(Error::Config("acoustic_scale must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn unpruned() -> Self {
        Self { beam_width: f64::INFINITY, acoustic_scale: 1.0, max_active: None }
    }
}

const NO_BACKPTR: u32 = u32::MAX;

/// One active hypothesis.
#[derive(Debug, Clone, Copy)]
pub struct Token {
    pub state: u32,
    pub cost: f64,
    pub backpointer: u32,
    /// (arc id << 32 | source state) of the winning predecessor; tie-break key.
    win_key: u64,
}

/// Backpointer arena entry.
#[derive(Debug, Clone, Copy)]
struct BackPtr {
    prev: u32,
    olabel: u32,
    frame: u32,
}

/// Monotone map from f64 to u64 so fetch_min works on cost bits.
#[inline]
fn cost_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

#[inline]
fn key_cost(k: u64) -> f64 {
    if k >> 63 == 1 {
        f64::from_bits(k & !(1 << 63))
    } else {
        f64::from_bits(!k)
    }
}

/// Per-frame work lists: the active token list, the gathered unique model-id
/// buffer, the atomic per-state best-cost and tie tables, and the backpointer
/// store.
pub struct TraversalBuffers {
    pub active: Vec<Token>,
    pub model_ids: Vec<u32>,
    best_cost: Vec<AtomicU64>,
    tie_key: Vec<AtomicU64>,
    token_of_state: Vec<u32>,
    arena: Vec<BackPtr>,
}

impl TraversalBuffers {
    pub fn new(state_count: usize) -> Self {
        Self {
            active: Vec::new(),
            model_ids: Vec::new(),
            best_cost: (0..state_count).map(|_| AtomicU64::new(u64::MAX)).collect(),
            tie_key: (0..state_count).map(|_| AtomicU64::new(u64::MAX)).collect(),
            token_of_state: vec![u32::MAX; state_count],
            arena: Vec::new(),
        }
    }

    fn reset_frame_tables(&mut self) {
        for v in &self.best_cost {
            v.store(u64::MAX, Ordering::Relaxed);
        }
        for v in &self.tie_key {
            v.store(u64::MAX, Ordering::Relaxed);
        }
    }
}

/// Sorted, duplicate-free ids of every acoustic model on an emitting arc
/// leaving an active state.
pub fn gather_active_models(buffers: &TraversalBuffers, net: &RecognitionNetwork) -> Vec<u32> {
    let mut ids: Vec<u32> = buffers
        .active
        .iter()
        .flat_map(|t| net.arcs_from(t.state).iter().filter(|a| a.ilabel != EPSILON).map(|a| a.ilabel))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Scaled negative log-likelihoods for a sorted id buffer.
pub struct LikelihoodTable {
    ids: Vec<u32>,
    values: Vec<f64>,
}

impl LikelihoodTable {
    pub fn get(&self, id: u32) -> Option<f64> {
        self.ids.binary_search(&id).ok().map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Observation phase: one scaled negative log-likelihood per unique model id,
/// computed in parallel. Results are identical for any worker count.
pub fn observation_phase(
    model_ids: &[u32],
    net: &RecognitionNetwork,
    x: &[f64],
    scale: f64,
) -> Result<LikelihoodTable> {
    debug_assert!(model_ids.windows(2).all(|w| w[0] < w[1]), "gathered ids must be sorted unique");
    for &id in model_ids {
        if id == EPSILON || id as usize > net.models().len() {
            return Err(Error::Internal(format!("unresolvable model id {id}")));
        }
    }
    let values: Vec<f64> = model_ids
        .par_iter()
        .map(|&id| {
            let ll = net.model(id).log_likelihood_unchecked(x);
            -scale * ll
        })
        .collect();
    Ok(LikelihoodTable { ids: model_ids.to_vec(), values })
}

/// Traversal phase for one frame: relax every emitting arc from every active
/// token, resolve per-destination winners, run the epsilon closure in
/// topological order, then prune.
pub fn traversal_phase(
    buffers: &mut TraversalBuffers,
    net: &RecognitionNetwork,
    table: &LikelihoodTable,
    config: &DecodeConfig,
    frame: u32,
) -> Result<()> {
    buffers.reset_frame_tables();

    // pass 1: atomic minimum on candidate costs
    let active = std::mem::take(&mut buffers.active);
    let best_cost = &buffers.best_cost;
    active.par_iter().try_for_each(|tok| -> Result<()> {
        for a in net.arcs_from(tok.state) {
            if a.ilabel == EPSILON {
                continue;
            }
            let like = table
                .get(a.ilabel)
                .ok_or_else(|| Error::Internal(format!("likelihood table missing id {}", a.ilabel)))?;
            let cand = tok.cost + a.weight + like;
            best_cost[a.dest as usize].fetch_min(cost_key(cand), Ordering::Relaxed);
        }
        Ok(())
    })?;

    // pass 2: among candidates matching the settled best cost, atomic minimum
    // on the (arc id, source state) tie key
    let tie_key = &buffers.tie_key;
    active.par_iter().for_each(|tok| {
        let mut arc_id = net.first_arc_id(tok.state);
        for a in net.arcs_from(tok.state) {
            if a.ilabel != EPSILON {
                let like = table.get(a.ilabel).unwrap();
                let cand = tok.cost + a.weight + like;
                let dest = a.dest as usize;
                if cost_key(cand) == best_cost[dest].load(Ordering::Relaxed) {
                    let key = ((arc_id as u64) << 32) | tok.state as u64;
                    tie_key[dest].fetch_min(key, Ordering::Relaxed);
                }
            }
            arc_id += 1;
        }
    });

    // sequential resolution in destination-state order
    let mut token_of_prev = std::mem::take(&mut buffers.token_of_state);
    for slot in token_of_prev.iter_mut() {
        *slot = u32::MAX;
    }
    for (i, tok) in active.iter().enumerate() {
        token_of_prev[tok.state as usize] = i as u32;
    }
    let mut next: Vec<Token> = Vec::with_capacity(active.len());
    for dest in 0..net.state_count() {
        let bits = buffers.best_cost[dest].load(Ordering::Relaxed);
        if bits == u64::MAX {
            continue;
        }
        let key = buffers.tie_key[dest].load(Ordering::Relaxed);
        let arc_id = (key >> 32) as usize;
        let src_state = (key & 0xffff_ffff) as u32;
        let arc = net.all_arcs()[arc_id];
        debug_assert_eq!(arc.dest as usize, dest);
        let prev_tok = token_of_prev[src_state as usize];
        let prev_bp = active[prev_tok as usize].backpointer;
        buffers.arena.push(BackPtr { prev: prev_bp, olabel: arc.olabel, frame });
        next.push(Token {
            state: dest as u32,
            cost: key_cost(bits),
            backpointer: (buffers.arena.len() - 1) as u32,
            win_key: key,
        });
    }
    buffers.token_of_state = token_of_prev;
    buffers.active = next;

    epsilon_closure(buffers, net, frame);
    prune(buffers, config);
    Ok(())
}

/// Relaxes non-emitting arcs to fixpoint; the epsilon subgraph is acyclic and
/// processed once in topological order.
fn epsilon_closure(buffers: &mut TraversalBuffers, net: &RecognitionNetwork, frame: u32) {
    let mut slot = std::mem::take(&mut buffers.token_of_state);
    for s in slot.iter_mut() {
        *s = u32::MAX;
    }
    let mut tokens = std::mem::take(&mut buffers.active);
    for (i, t) in tokens.iter().enumerate() {
        slot[t.state as usize] = i as u32;
    }
    for &state in net.epsilon_order() {
        let src_idx = slot[state as usize];
        if src_idx == u32::MAX {
            continue;
        }
        let (src_cost, src_bp) = {
            let t = &tokens[src_idx as usize];
            (t.cost, t.backpointer)
        };
        let mut arc_id = net.first_arc_id(state);
        for a in net.arcs_from(state) {
            if a.ilabel == EPSILON {
                let cand = src_cost + a.weight;
                let key = ((arc_id as u64) << 32) | state as u64;
                let dest_idx = slot[a.dest as usize];
                let better = if dest_idx == u32::MAX {
                    true
                } else {
                    let d = &tokens[dest_idx as usize];
                    cand < d.cost || (cand == d.cost && key < d.win_key)
                };
                if better {
                    buffers.arena.push(BackPtr { prev: src_bp, olabel: a.olabel, frame });
                    let tok = Token {
                        state: a.dest,
                        cost: cand,
                        backpointer: (buffers.arena.len() - 1) as u32,
                        win_key: key,
                    };
                    if dest_idx == u32::MAX {
                        slot[a.dest as usize] = tokens.len() as u32;
                        tokens.push(tok);
                    } else {
                        tokens[dest_idx as usize] = tok;
                    }
                }
            }
            arc_id += 1;
        }
    }
    tokens.sort_by_key(|t| t.state);
    buffers.token_of_state = slot;
    buffers.active = tokens;
}

fn prune(buffers: &mut TraversalBuffers, config: &DecodeConfig) {
    if buffers.active.is_empty() {
        return;
    }
    if config.beam_width.is_finite() {
        let best = buffers.active.iter().map(|t| t.cost).fold(f64::INFINITY, f64::min);
        let limit = best + config.beam_width;
        buffers.active.retain(|t| t.cost <= limit);
    }
    if let Some(max) = config.max_active {
        if buffers.active.len() > max {
            buffers
                .active
                .sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.state.cmp(&b.state)));
            buffers.active.truncate(max);
            buffers.active.sort_by_key(|t| t.state);
        }
    }
}

/// One recognized word with its frame span [start, end).
#[derive(Debug, Clone, PartialEq)]
pub struct WordHyp {
    pub word_id: u32,
    pub word: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Wall-clock phase breakdown of a decode run.
#[derive(Debug, Clone, Default)]
pub struct PhaseTimings {
    pub observation: Duration,
    pub traversal: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub words: Vec<WordHyp>,
    pub total_cost: f64,
    pub active_counts: Vec<usize>,
    pub timings: PhaseTimings,
    pub n_frames: usize,
    pub frame_period: f64,
}

impl DecodeResult {
    /// Equality of everything except timings.
    pub fn same_output(&self, other: &Self) -> bool {
        self.words == other.words
            && self.total_cost.to_bits() == other.total_cost.to_bits()
            && self.active_counts == other.active_counts
            && self.n_frames == other.n_frames
    }

    /// Processing time divided by audio duration.
    pub fn real_time_factor(&self) -> f64 {
        let audio = self.n_frames as f64 * self.frame_period;
        if audio > 0.0 {
            self.timings.total.as_secs_f64() / audio
        } else {
            0.0
        }
    }

    /// CTM lines: `<utt> 1 <tbeg> <tdur> <word>`.
    pub fn to_ctm(&self, utt: &str) -> String {
        let mut out = String::new();
        for w in &self.words {
            let tbeg = w.start_frame as f64 * self.frame_period;
            let tdur = (w.end_frame - w.start_frame) as f64 * self.frame_period;
            out.push_str(&format!("{utt} 1 {tbeg:.3} {tdur:.3} {}\n", w.word));
        }
        out
    }
}

/// Full decode: per frame, gather -> observation -> traversal; final weights
/// at the last frame; backtrack the best final token.
pub fn decode(
    net: &RecognitionNetwork,
    features: &FeatureMatrix,
    config: &DecodeConfig,
) -> Result<DecodeResult> {
    config.validate()?;
    if features.n_frames() > 0 {
        if let Some(dim) = net.model_dim() {
            if dim != features.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "feature dim {} vs acoustic model dim {dim}",
                    features.dim()
                )));
            }
        }
    }
    let started = Instant::now();
    let mut buffers = TraversalBuffers::new(net.state_count());
    buffers.arena.push(BackPtr { prev: NO_BACKPTR, olabel: EPSILON, frame: 0 });
    buffers.active.push(Token {
        state: net.start_state(),
        cost: 0.0,
        backpointer: 0,
        win_key: u64::MAX,
    });
    epsilon_closure(&mut buffers, net, 0);
    prune(&mut buffers, config);

    let mut timings = PhaseTimings::default();
    let mut active_counts = Vec::with_capacity(features.n_frames());
    for t in 0..features.n_frames() {
        let ids = gather_active_models(&buffers, net);
        let t0 = Instant::now();
        let table = observation_phase(&ids, net, features.row(t), config.acoustic_scale)?;
        timings.observation += t0.elapsed();
        let t1 = Instant::now();
        traversal_phase(&mut buffers, net, &table, config, t as u32)?;
        timings.traversal += t1.elapsed();
        if buffers.active.is_empty() {
            return Err(Error::DecodeFailure { frame: t });
        }
        active_counts.push(buffers.active.len());
    }

    // final weights
    let mut best: Option<(f64, u32, u32)> = None; // (cost, state, backpointer)
    for tok in &buffers.active {
        if let Some(fw) = net.final_weight(tok.state) {
            let total = tok.cost + fw;
            let better = match best {
                None => true,
                Some((c, s, _)) => total < c || (total == c && tok.state < s),
            };
            if better {
                best = Some((total, tok.state, tok.backpointer));
            }
        }
    }
    let (total_cost, _, mut bp) = best.ok_or(Error::DecodeFailure { frame: features.n_frames() })?;

    // backtrack emissions
    let mut emissions: Vec<(u32, u32)> = Vec::new(); // (frame, olabel)
    while bp != NO_BACKPTR {
        let e = buffers.arena[bp as usize];
        if e.olabel != EPSILON {
            emissions.push((e.frame, e.olabel));
        }
        bp = e.prev;
    }
    emissions.reverse();
    let n_frames = features.n_frames();
    let mut words = Vec::with_capacity(emissions.len());
    for (i, &(frame, olabel)) in emissions.iter().enumerate() {
        let start = frame as usize;
        let end = if i + 1 < emissions.len() {
            (emissions[i + 1].0 as usize).max(start)
        } else {
            n_frames.max(start)
        };
        words.push(WordHyp {
            word_id: olabel,
            word: net.word(olabel).to_string(),
            start_frame: start,
            end_frame: end,
        });
    }
    timings.total = started.elapsed();
    Ok(DecodeResult {
        words,
        total_cost,
        active_counts,
        timings,
        n_frames,
        frame_period: features.frame_period,
    })
}

/// Timing entry for one worker count.
#[derive(Debug, Clone)]
pub struct DecodeBenchEntry {
    pub workers: usize,
    pub observation: Duration,
    pub traversal: Duration,
    pub total: Duration,
    pub real_time_factor: f64,
}

/// Benchmark report; output equality across worker counts is asserted before
/// this is returned.
#[derive(Debug, Clone)]
pub struct DecodeBenchReport {
    pub entries: Vec<DecodeBenchEntry>,
    pub result: DecodeResult,
}

impl DecodeBenchReport {
    /// Speedup of each entry relative to the single-worker run.
    pub fn speedup(&self, workers: usize) -> Option<f64> {
        let base = self.entries.iter().find(|e| e.workers == 1)?;
        let e = self.entries.iter().find(|e| e.workers == workers)?;
        Some(base.total.as_secs_f64() / e.total.as_secs_f64())
    }
}

/// Runs the same decode under each worker count, asserts identical output,
/// and reports per-phase wall-clock and real-time factor.
pub fn benchmark_decode(
    net: &RecognitionNetwork,
    features: &FeatureMatrix,
    config: &DecodeConfig,
    worker_counts: &[usize],
) -> Result<DecodeBenchReport> {
    if worker_counts.is_empty() {
        return Err(Error::Config("no worker counts given".into()));
    }
    let mut entries = Vec::new();
    let mut reference: Option<DecodeResult> = None;
    for &wc in worker_counts {
        let result = crate::workers::run_with_workers(wc, || decode(net, features, config))?;
        if let Some(r) = &reference {
            if !r.same_output(&result) {
                return Err(Error::Internal(format!(
                    "decode output diverged at {wc} workers"
                )));
            }
        }
        entries.push(DecodeBenchEntry {
            workers: wc,
            observation: result.timings.observation,
            traversal: result.timings.traversal,
            total: result.timings.total,
            real_time_factor: result.real_time_factor(),
        });
        if reference.is_none() {
            reference = Some(result);
        }
    }
    Ok(DecodeBenchReport { entries, result: reference.unwrap() })
}
