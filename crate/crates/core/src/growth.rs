//! Monte Carlo growth of GHZ resources and their assembly into larger graphs.
//!
//! Phase 1 grows GHZ pieces out of single emitters by double heralding.
//! Pieces that miss the fidelity target are then realigned with their own
//! leaves. Finally pieces are joined along a plan by merging or bridging
//! through heralded cherries.
//!
//! Every random draw comes from a stream keyed by the seed and by what is
//! being decided (round and pair, piece, join), so results do not depend on
//! how rayon schedules the work.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heralding::{apply_dh_to_graph, kraus_weights, lab_qubit_tilt, DhContext, DhOutcome, DhSampler};
use crate::io::CsvTable;
use crate::leakage::{LeakageProfile, TimeSampler};
use crate::metrics::ComparisonMode;
use crate::oracle::{build_state, StateVector, Unitary2};
use crate::procedures::{
    bridge, cherry_center, choose_method, failure_tilt, merge, p_s, realign, remove_cherry, JoinKind, Method,
    ProcedureOutcome, Sign,
};
use crate::rng::{open_unit, stream, stream_id};
use crate::tilted_graph::{apply_lab_hadamard, TiltAngle, TiltedGraph, VertexId};

const TAG_PAIRING: u8 = 1;
const TAG_PHASE1: u8 = 2;
const TAG_REALIGN: u8 = 3;
const TAG_JOIN: u8 = 4;

/// Index of an emitter system in the cavity pool.
pub type SystemId = u32;

/// `½(1 + |sin 2θ|)`: fidelity with `|+⟩` once a known Z frame is undone.
pub fn frame_fidelity(tilt: TiltAngle) -> f64 {
    0.5 * (1.0 + (2.0 * tilt.radians()).sin().abs())
}

/// A GHZ piece `cosθ|0…0⟩ + sinθ|1…1⟩` over its member systems.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub tilt: TiltAngle,
    /// The first member is the hub that holds the tilt.
    pub members: Vec<SystemId>,
}

impl Piece {
    pub fn fresh(system: SystemId) -> Self {
        Self { tilt: TiltAngle::UNTILTED, members: vec![system] }
    }

    pub fn id(&self) -> SystemId {
        self.members[0]
    }

    pub fn ghz_size(&self) -> usize {
        self.members.len()
    }

    pub fn fidelity(&self) -> f64 {
        frame_fidelity(self.tilt)
    }

    /// Star form: tilted hub, Hadamard leaves.
    pub fn graph(&self) -> Result<TiltedGraph> {
        let leaves: Vec<VertexId> = self.members[1..].iter().map(|&m| VertexId(m)).collect();
        TiltedGraph::ghz(VertexId(self.id()), &leaves, self.tilt)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Inventory {
    pub pieces: Vec<Piece>,
}

impl Inventory {
    /// One untilted single-qubit piece per system.
    pub fn fresh(systems: usize) -> Self {
        Self { pieces: (0..systems as SystemId).map(Piece::fresh).collect() }
    }

    pub fn qubit_count(&self) -> usize {
        self.pieces.iter().map(Piece::ghz_size).sum()
    }

    /// Number of pieces of each size.
    pub fn census(&self) -> BTreeMap<usize, usize> {
        let mut c = BTreeMap::new();
        for p in &self.pieces {
            *c.entry(p.ghz_size()).or_insert(0) += 1;
        }
        c
    }

    /// NaN when empty.
    pub fn mean_fidelity(&self) -> f64 {
        mean(self.pieces.iter().map(Piece::fidelity))
    }

    pub fn mean_tilt(&self) -> f64 {
        mean(self.pieces.iter().map(|p| p.tilt.radians()))
    }

    pub fn with_min_size(&self, size: usize) -> Inventory {
        Inventory { pieces: self.pieces.iter().filter(|p| p.ghz_size() >= size).cloned().collect() }
    }

    fn sort(&mut self) {
        self.pieces.sort_by_key(Piece::id);
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Which partner of a pair gets an X flip before heralding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlipDecision {
    pub flip_a: bool,
    pub flip_b: bool,
}

/// `|sin²θ_a − sin²θ_b|`.
pub fn sin2_gap(theta_a: TiltAngle, theta_b: TiltAngle) -> f64 {
    (theta_a.radians().sin().powi(2) - theta_b.radians().sin().powi(2)).abs()
}

/// Flips `b` when the tilts are more than ½ apart in `sin²`. Flipping either
/// side gives the same `E(F²)`; the second partner is the one flipped.
pub fn maybe_flip(theta_a: TiltAngle, theta_b: TiltAngle) -> FlipDecision {
    FlipDecision { flip_a: false, flip_b: sin2_gap(theta_a, theta_b) > 0.5 }
}

impl FlipDecision {
    pub fn apply(self, theta_a: TiltAngle, theta_b: TiltAngle) -> (TiltAngle, TiltAngle) {
        let f = |t: TiltAngle, on: bool| if on { t.complement() } else { t };
        (f(theta_a, self.flip_a), f(theta_b, self.flip_b))
    }
}

/// Index pairs plus the piece left over when the count is odd.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Pairs {
    pub pairs: Vec<(usize, usize)>,
    pub leftover: Option<usize>,
}

fn adjacent(order: &[usize]) -> Pairs {
    Pairs {
        pairs: order.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
        leftover: (order.len() % 2 == 1).then(|| order[order.len() - 1]),
    }
}

/// Stable sort by tilt, then adjacent pairs. The largest tilt waits when
/// the count is odd.
pub fn pair_by_tilt(tilts: &[f64]) -> Pairs {
    let mut order: Vec<usize> = (0..tilts.len()).collect();
    order.sort_by(|&i, &j| tilts[i].total_cmp(&tilts[j]));
    adjacent(&order)
}

pub fn pair_inventory(pieces: &[Piece]) -> Pairs {
    let tilts: Vec<f64> = pieces.iter().map(|p| p.tilt.radians()).collect();
    pair_by_tilt(&tilts)
}

pub fn pair_randomly<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Pairs {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    adjacent(&order)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pairing {
    SortedTilt,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JoinPolicy {
    /// Whichever of methods (i) and (ii) is more likely to succeed.
    Auto,
    ForceI,
    ForceII,
}

#[derive(Clone, Debug)]
pub struct StrategyConfig {
    pub profiles: Vec<LeakageProfile>,
    /// Profile index of each system.
    pub assignment: Vec<usize>,
    pub target_ghz_size: usize,
    /// Minimum `f = ½(1 + sin 2θ)` a piece must reach.
    pub fidelity_acceptance: f64,
    pub pairing: Pairing,
    pub flip_rule: bool,
    pub join_method: JoinPolicy,
    /// Let failed joins steer the sign and method of the next attempt.
    pub recycling: bool,
    pub comparison: ComparisonMode,
    pub detection_efficiency: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl StrategyConfig {
    /// `systems` emitters drawing profiles from `profiles` in turn.
    pub fn round_robin(
        profiles: Vec<LeakageProfile>,
        systems: usize,
        target_ghz_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = profiles.len().max(1);
        let c = Self {
            assignment: (0..systems).map(|i| i % n).collect(),
            profiles,
            target_ghz_size,
            fidelity_acceptance: 0.99,
            pairing: Pairing::SortedTilt,
            flip_rule: true,
            join_method: JoinPolicy::Auto,
            recycling: true,
            comparison: ComparisonMode::Approx,
            detection_efficiency: 1.0,
            max_rounds: 10_000,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn system_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.profiles.is_empty() {
            return bad("the cavity pool needs at least one profile".into());
        }
        if self.assignment.is_empty() {
            return bad("the cavity pool is empty".into());
        }
        if let Some(&i) = self.assignment.iter().find(|&&i| i >= self.profiles.len()) {
            return bad(format!("system assigned to missing profile {i}"));
        }
        if self.target_ghz_size < 2 {
            return bad(format!("target GHZ size must be at least 2, got {}", self.target_ghz_size));
        }
        if !(self.fidelity_acceptance > 0.5 && self.fidelity_acceptance <= 1.0) {
            return bad(format!("fidelity acceptance must lie in (1/2, 1], got {}", self.fidelity_acceptance));
        }
        if !(self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0) {
            return bad(format!("detection efficiency must lie in (0, 1], got {}", self.detection_efficiency));
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be positive".into());
        }
        Ok(())
    }

    fn samplers(&self) -> Result<Vec<Arc<TimeSampler>>> {
        self.profiles.iter().map(|p| TimeSampler::new(p).map(Arc::new)).collect()
    }

    fn profile_of(&self, system: SystemId) -> Result<usize> {
        self.assignment
            .get(system as usize)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("system {system} is not in the cavity pool")))
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub attempts: u64,
    pub successes: u64,
    pub qubits_consumed: u64,
    pub mean_tilt: f64,
    pub mean_fidelity: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub dh_attempts: u64,
    pub dh_successes: u64,
    pub qubits_initial: u64,
    pub qubits_consumed: u64,
    pub realignments_attempted: u64,
    pub realignments_succeeded: u64,
    pub merges: u64,
    pub bridges: u64,
    /// Piece (or component) count by size at the end.
    pub census: BTreeMap<usize, usize>,
    pub mean_final_fidelity: f64,
    /// Largest `|sin²θ_a − sin²θ_b|` over all heralding attempts issued.
    pub max_sin2_gap: f64,
    pub rounds: Vec<RoundStats>,
}

impl RunStats {
    pub const HEADERS: [&'static str; 6] =
        ["round", "attempts", "successes", "qubits_consumed", "mean_tilt", "mean_fidelity"];

    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(Self::HEADERS);
        for r in &self.rounds {
            t.push(vec![
                r.round.to_string(),
                r.attempts.to_string(),
                r.successes.to_string(),
                r.qubits_consumed.to_string(),
                crate::io::format_f64(r.mean_tilt),
                crate::io::format_f64(r.mean_fidelity),
            ]);
        }
        t
    }

    /// Appends a later phase. Counters add up; rounds are renumbered to
    /// follow on; the census and final fidelity are taken from `later`.
    pub fn then(mut self, later: RunStats) -> RunStats {
        let offset = self.rounds.len();
        self.dh_attempts += later.dh_attempts;
        self.dh_successes += later.dh_successes;
        self.qubits_consumed += later.qubits_consumed;
        self.realignments_attempted += later.realignments_attempted;
        self.realignments_succeeded += later.realignments_succeeded;
        self.merges += later.merges;
        self.bridges += later.bridges;
        self.census = later.census;
        self.mean_final_fidelity = later.mean_final_fidelity;
        self.max_sin2_gap = self.max_sin2_gap.max(later.max_sin2_gap);
        self.rounds.extend(later.rounds.into_iter().map(|r| RoundStats { round: r.round + offset, ..r }));
        self
    }
}

enum PairResult {
    Joined(Piece),
    Split(Piece, Piece),
}

fn attempt_pair(
    a: &Piece,
    b: &Piece,
    config: &StrategyConfig,
    samplers: &[Arc<TimeSampler>],
    rng: &mut impl rand::Rng,
) -> Result<(PairResult, f64)> {
    let flip = if config.flip_rule { maybe_flip(a.tilt, b.tilt) } else { FlipDecision::default() };
    let (ta, tb) = flip.apply(a.tilt, b.tilt);
    let sa = samplers[config.profile_of(a.id())?].clone();
    let sb = samplers[config.profile_of(b.id())?].clone();
    let sampler = DhSampler::from_samplers(ta, tb, sa, sb).with_detection_efficiency(config.detection_efficiency)?;
    let result = match sampler.attempt(rng)? {
        DhOutcome::Success { theta_beta, .. } => {
            let members = a.members.iter().chain(&b.members).copied().collect();
            PairResult::Joined(Piece { tilt: theta_beta, members })
        }
        DhOutcome::Failure { .. } => PairResult::Split(a.clone(), b.clone()),
    };
    Ok((result, sin2_gap(ta, tb)))
}

/// Phase 1: pair, flip, herald and fuse until every piece has reached the
/// target size or no pair is left.
///
/// A failed attempt destroys both pieces; their systems return to the raw
/// pool as fresh `|+⟩` qubits. Pieces that reach the target stop growing.
pub fn run_phase1(config: &StrategyConfig) -> Result<(Inventory, RunStats)> {
    config.validate()?;
    let samplers = config.samplers()?;
    let target = config.target_ghz_size;
    let mut inv = Inventory::fresh(config.system_count());
    let mut stats = RunStats { qubits_initial: inv.qubit_count() as u64, ..RunStats::default() };
    for round in 0..config.max_rounds {
        let (active, done): (Vec<Piece>, Vec<Piece>) = inv.pieces.iter().cloned().partition(|p| p.ghz_size() < target);
        if active.len() < 2 {
            break;
        }
        let pairs = match config.pairing {
            Pairing::SortedTilt => pair_inventory(&active),
            Pairing::Random => {
                pair_randomly(active.len(), &mut stream(config.seed, stream_id(TAG_PAIRING, round as u32, 0)))
            }
        };
        let results: Vec<Result<(PairResult, f64)>> = pairs
            .pairs
            .par_iter()
            .enumerate()
            .map(|(k, &(i, j))| {
                let mut rng = stream(config.seed, stream_id(TAG_PHASE1, round as u32, k as u32));
                attempt_pair(&active[i], &active[j], config, &samplers, &mut rng)
            })
            .collect();
        let mut next = done;
        next.extend(pairs.leftover.map(|i| active[i].clone()));
        let mut successes = 0;
        for r in results {
            let (r, gap) = r?;
            stats.max_sin2_gap = stats.max_sin2_gap.max(gap);
            match r {
                PairResult::Joined(p) => {
                    successes += 1;
                    next.push(p);
                }
                PairResult::Split(a, b) => {
                    next.extend(a.members.iter().chain(&b.members).map(|&m| Piece::fresh(m)));
                }
            }
        }
        inv = Inventory { pieces: next };
        inv.sort();
        stats.dh_attempts += pairs.pairs.len() as u64;
        stats.dh_successes += successes;
        stats.rounds.push(RoundStats {
            round,
            attempts: pairs.pairs.len() as u64,
            successes,
            qubits_consumed: 0,
            mean_tilt: inv.mean_tilt(),
            mean_fidelity: inv.mean_fidelity(),
        });
    }
    if inv.pieces.iter().all(|p| p.ghz_size() < target) {
        return Err(Error::Exhausted(format!(
            "no piece reached {target} qubits from a pool of {} within {} rounds",
            config.system_count(),
            config.max_rounds
        )));
    }
    stats.census = inv.census();
    stats.mean_final_fidelity = inv.mean_fidelity();
    Ok((inv, stats))
}

struct RealignTally {
    piece: Option<Piece>,
    attempted: u64,
    succeeded: u64,
    consumed: u64,
}

/// Realigns one piece with its own leaves until it meets `acceptance`.
/// Success leaves the hub untilted; failure moves it to `−R(θ)`. Each attempt
/// measures one leaf.
fn realign_piece(piece: &Piece, acceptance: f64, rng: &mut impl rand::Rng) -> RealignTally {
    let mut p = piece.clone();
    let mut t = RealignTally { piece: None, attempted: 0, succeeded: 0, consumed: 0 };
    while p.fidelity() < acceptance && p.ghz_size() >= 2 {
        let theta = p.tilt.radians();
        t.attempted += 1;
        t.consumed += 1;
        p.members.pop();
        if open_unit(rng) < p_s(theta) {
            t.succeeded += 1;
            p.tilt = TiltAngle::UNTILTED;
        } else {
            p.tilt = TiltAngle::new(-failure_tilt(theta));
        }
    }
    if p.ghz_size() >= 2 {
        t.piece = Some(p);
    } else {
        t.consumed += p.ghz_size() as u64;
    }
    t
}

/// Realignment of every piece below `acceptance`. Pieces that drop below two
/// qubits are discarded and count as consumed.
pub fn run_realignment(inv: &Inventory, acceptance: f64, seed: u64) -> Result<(Inventory, RunStats)> {
    if !(acceptance > 0.5 && acceptance <= 1.0) {
        return Err(Error::InvalidParameter(format!("fidelity acceptance must lie in (1/2, 1], got {acceptance}")));
    }
    let tallies: Vec<RealignTally> = inv
        .pieces
        .par_iter()
        .map(|p| realign_piece(p, acceptance, &mut stream(seed, stream_id(TAG_REALIGN, p.id(), 0))))
        .collect();
    let mut out = Inventory::default();
    let mut stats = RunStats { qubits_initial: inv.qubit_count() as u64, ..RunStats::default() };
    for t in tallies {
        stats.realignments_attempted += t.attempted;
        stats.realignments_succeeded += t.succeeded;
        stats.qubits_consumed += t.consumed;
        out.pieces.extend(t.piece);
    }
    out.sort();
    stats.census = out.census();
    stats.mean_final_fidelity = out.mean_fidelity();
    stats.rounds.push(RoundStats {
        round: 0,
        attempts: stats.realignments_attempted,
        successes: stats.realignments_succeeded,
        qubits_consumed: stats.qubits_consumed,
        mean_tilt: out.mean_tilt(),
        mean_fidelity: out.mean_fidelity(),
    });
    Ok((out, stats))
}

/// Which pieces to join, and how. Node `i` is piece `i` of the inventory.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinPlan {
    pub kind: JoinKind,
    pub edges: Vec<(usize, usize)>,
}

impl JoinPlan {
    /// `0 − 1 − … − (n−1)`.
    pub fn linear(nodes: usize, kind: JoinKind) -> Self {
        Self { kind, edges: (1..nodes).map(|i| (i - 1, i)).collect() }
    }

    pub fn node_count(&self) -> usize {
        self.edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0)
    }
}

/// A physical operation, in the order it was applied. Replaying these on a
/// state vector is independent of every graph rewrite rule.
#[derive(Clone, Debug, PartialEq)]
pub enum PhysicalOp {
    /// A piece enters the register.
    AddPiece(TiltedGraph),
    Hadamard(VertexId),
    /// Heralded double-heralding success with its Kraus weights.
    Herald {
        qa: VertexId,
        qb: VertexId,
        weights: [f64; 2],
    },
    /// Lab Z measurement left by a failed heralding attempt.
    MeasureZ {
        qubit: VertexId,
        outcome: u8,
    },
    /// Rotation then Z measurement, by a procedure.
    Measure {
        qubit: VertexId,
        rotation: Unitary2,
        outcome: u8,
    },
}

/// Applies `trace` to a dense register. Measured qubits leave the register.
pub fn replay(trace: &[PhysicalOp]) -> Result<StateVector> {
    let mut state: Option<StateVector> = None;
    let missing = || Error::Precondition("operation before any piece was added".into());
    for op in trace {
        match op {
            PhysicalOp::AddPiece(g) => {
                let s = build_state(g)?;
                state = Some(match state {
                    Some(cur) => cur.tensor(&s)?,
                    None => s,
                });
            }
            PhysicalOp::Hadamard(q) => state.as_mut().ok_or_else(missing)?.apply_1q(*q, &Unitary2::hadamard())?,
            PhysicalOp::Herald { qa, qb, weights } => {
                state.as_mut().ok_or_else(missing)?.apply_dh_kraus(*qa, *qb, *weights)?
            }
            PhysicalOp::MeasureZ { qubit, outcome } => {
                let s = state.take().ok_or_else(missing)?;
                state = Some(s.project_out(*qubit, &Unitary2::IDENTITY, *outcome)?.1);
            }
            PhysicalOp::Measure { qubit, rotation, outcome } => {
                let s = state.take().ok_or_else(missing)?;
                state = Some(s.project_out(*qubit, rotation, *outcome)?.1);
            }
        }
    }
    state.ok_or_else(missing)
}

#[derive(Clone, Debug)]
pub struct JoinOutput {
    pub graph: TiltedGraph,
    pub stats: RunStats,
    pub trace: Vec<PhysicalOp>,
    /// Merge or bridge attempts spent on each plan edge.
    pub attempts: Vec<u32>,
}

fn measured(rec: &ProcedureOutcome) -> PhysicalOp {
    PhysicalOp::Measure { qubit: rec.measured, rotation: rec.physical_rotation, outcome: rec.outcome }
}

/// An unused leaf of `piece`: any non-hub member still hanging off a single
/// vertex. After a merge that vertex may belong to another piece.
fn free_leaf(g: &TiltedGraph, piece: &Piece) -> Option<VertexId> {
    piece.members[1..].iter().map(|&m| VertexId(m)).find(|&q| g.contains(q) && cherry_center(g, q).is_ok())
}

struct Joiner<'a> {
    inv: &'a Inventory,
    config: &'a StrategyConfig,
    samplers: Vec<Arc<TimeSampler>>,
    g: TiltedGraph,
    added: Vec<bool>,
    trace: Vec<PhysicalOp>,
    stats: RunStats,
}

impl Joiner<'_> {
    fn ensure(&mut self, node: usize) -> Result<()> {
        if !self.added[node] {
            let pg = self.inv.pieces[node].graph()?;
            self.g = std::mem::take(&mut self.g).union(&pg)?;
            self.trace.push(PhysicalOp::AddPiece(pg));
            self.stats.qubits_initial += self.inv.pieces[node].ghz_size() as u64;
            self.added[node] = true;
        }
        Ok(())
    }

    fn hadamard(&mut self, q: VertexId) -> Result<()> {
        self.g = apply_lab_hadamard(&self.g, q)?;
        self.trace.push(PhysicalOp::Hadamard(q));
        Ok(())
    }

    /// One heralding attempt between a free leaf of each piece. Returns the
    /// centre and cherry on success.
    fn herald(&mut self, x: usize, y: usize, rng: &mut impl rand::Rng) -> Result<Option<(VertexId, VertexId)>> {
        let (px, py) = (&self.inv.pieces[x], &self.inv.pieces[y]);
        let (Some(la), Some(lb)) = (free_leaf(&self.g, px), free_leaf(&self.g, py)) else {
            return Err(Error::Exhausted(format!("pieces {x} and {y} have no free leaves left")));
        };
        self.hadamard(la)?;
        self.hadamard(lb)?;
        let sa = self.samplers[self.config.profile_of(la.0)?].clone();
        let sb = self.samplers[self.config.profile_of(lb.0)?].clone();
        let (ta, tb) = (lab_qubit_tilt(&self.g, la)?, lab_qubit_tilt(&self.g, lb)?);
        let sampler =
            DhSampler::from_samplers(ta, tb, sa, sb).with_detection_efficiency(self.config.detection_efficiency)?;
        let outcome = sampler.attempt(rng)?;
        self.stats.dh_attempts += 1;
        self.g = apply_dh_to_graph(&self.g, la, lb, outcome)?;
        match outcome {
            DhOutcome::Failure { z_outcomes } => {
                self.trace.push(PhysicalOp::MeasureZ { qubit: la, outcome: z_outcomes[0] });
                self.trace.push(PhysicalOp::MeasureZ { qubit: lb, outcome: z_outcomes[1] });
                Ok(None)
            }
            DhOutcome::Success { clicks, parity, .. } => {
                self.stats.dh_successes += 1;
                let ctx: &DhContext = sampler.context();
                self.trace.push(PhysicalOp::Herald { qa: la, qb: lb, weights: kraus_weights(ctx, clicks, parity) });
                if cherry_center(&self.g, lb).is_ok_and(|c| c == la) {
                    Ok(Some((la, lb)))
                } else if cherry_center(&self.g, la).is_ok_and(|c| c == lb) {
                    Ok(Some((lb, la)))
                } else {
                    Err(Error::Graph(format!("heralding {la} and {lb} did not leave a cherry")))
                }
            }
        }
    }

    /// Repeats heralded merge or bridge attempts on `(x, y)` until resolved.
    fn join(&mut self, x: usize, y: usize, kind: JoinKind, rng: &mut impl rand::Rng) -> Result<(u32, Vec<f64>)> {
        self.ensure(x)?;
        self.ensure(y)?;
        let mut attempts = 0;
        let mut tilts = Vec::new();
        loop {
            let Some((centre, cherry)) = self.herald(x, y, rng)? else {
                continue;
            };
            attempts += 1;
            let tilt = self.g.vertex(centre).expect("centre survives heralding").tilt;
            tilts.push(tilt.radians());
            let gamma = if self.config.recycling { self.prior(centre, cherry) } else { 0.0 };
            let method = match self.config.join_method {
                JoinPolicy::Auto => choose_method(tilt, gamma, kind).method,
                JoinPolicy::ForceI => Method::I,
                JoinPolicy::ForceII => Method::II,
            };
            let (rec, g) = match method {
                Method::I => remove_cherry(&self.g, cherry, rng)?,
                Method::II => {
                    let (rec, g) = realign(&self.g, cherry, rng)?;
                    self.stats.realignments_attempted += 1;
                    self.stats.realignments_succeeded += u64::from(rec.success);
                    (rec, g)
                }
            };
            self.trace.push(measured(&rec));
            self.g = g;
            let sign = if self.config.recycling { None } else { Some(Sign::Plus) };
            let (rec, g) = match kind {
                JoinKind::Merge => {
                    self.stats.merges += 1;
                    merge(&self.g, centre, sign, rng)?
                }
                JoinKind::Bridge => {
                    self.stats.bridges += 1;
                    bridge(&self.g, centre, sign, rng)?
                }
            };
            self.trace.push(measured(&rec));
            self.g = g;
            if rec.resolved {
                return Ok((attempts, tilts));
            }
        }
    }

    /// Annotation already joining the centre's two outer neighbours.
    fn prior(&self, centre: VertexId, cherry: VertexId) -> f64 {
        let outer: Vec<VertexId> =
            self.g.neighbors(centre).into_iter().map(|(w, _)| w).filter(|&w| w != cherry).collect();
        match outer.as_slice() {
            [a, b] => self.g.edge(*a, *b).and_then(|e| e.angle()).unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

/// Phases 2 and 3: joins inventory pieces along `plan`.
///
/// For each plan edge a free leaf of each piece is turned into the graph
/// frame and the two are heralded, leaving a tilted centre with a cherry
/// between the hubs. The centre is then merged or bridged, by method (i) or
/// (ii), until the hubs are resolved. Failed attempts leave an annotation
/// that the next attempt builds on.
pub fn run_join(inv: &Inventory, plan: &JoinPlan, config: &StrategyConfig) -> Result<JoinOutput> {
    run_join_trial(inv, plan, config, 0)
}

/// [`run_join`] on an independent random stream `trial`.
pub fn run_join_trial(inv: &Inventory, plan: &JoinPlan, config: &StrategyConfig, trial: u32) -> Result<JoinOutput> {
    config.validate()?;
    let nodes = plan.node_count();
    if nodes > inv.pieces.len() {
        return Err(Error::Exhausted(format!("plan needs {nodes} pieces, inventory has {}", inv.pieces.len())));
    }
    for (i, p) in inv.pieces[..nodes].iter().enumerate() {
        if p.ghz_size() < 2 {
            return Err(Error::Precondition(format!("piece {i} has a single qubit and no leaf")));
        }
        if !p.tilt.is_untilted() && p.fidelity() < config.fidelity_acceptance {
            return Err(Error::Precondition(format!(
                "piece {i} has fidelity {} below acceptance {}",
                p.fidelity(),
                config.fidelity_acceptance
            )));
        }
    }
    if let Some(&(a, b)) = plan.edges.iter().find(|(a, b)| a == b) {
        return Err(Error::InvalidParameter(format!("plan edge ({a}, {b}) joins a piece to itself")));
    }
    let mut j = Joiner {
        inv,
        config,
        samplers: config.samplers()?,
        g: TiltedGraph::new(),
        added: vec![false; nodes],
        trace: Vec::new(),
        stats: RunStats::default(),
    };
    let mut attempts = Vec::with_capacity(plan.edges.len());
    for (k, &(x, y)) in plan.edges.iter().enumerate() {
        let before = j.g.qubit_count() as u64 + j.stats.qubits_initial;
        let mut rng = stream(config.seed, stream_id(TAG_JOIN, trial, k as u32));
        let dh_before = (j.stats.dh_attempts, j.stats.dh_successes);
        let (n, tilts) = j.join(x, y, plan.kind, &mut rng)?;
        let after = j.g.qubit_count() as u64 + j.stats.qubits_initial;
        attempts.push(n);
        j.stats.rounds.push(RoundStats {
            round: k,
            attempts: j.stats.dh_attempts - dh_before.0,
            successes: j.stats.dh_successes - dh_before.1,
            qubits_consumed: before.saturating_sub(after),
            mean_tilt: mean(tilts.iter().copied()),
            mean_fidelity: mean(tilts.iter().map(|&t| frame_fidelity(TiltAngle::new(t)))),
        });
    }
    let mut stats = j.stats;
    stats.qubits_consumed = stats.qubits_initial - j.g.qubit_count() as u64;
    let mut census = BTreeMap::new();
    for c in j.g.components() {
        *census.entry(c.len()).or_insert(0) += 1;
    }
    stats.census = census;
    stats.mean_final_fidelity = mean(j.g.vertices().map(|v| frame_fidelity(v.tilt)));
    Ok(JoinOutput { graph: j.g, stats, trace: j.trace, attempts })
}

/// Attempts per join over `trials` independent joins of two fresh untilted
/// pieces of `piece_size` qubits.
pub fn join_attempt_samples(
    config: &StrategyConfig,
    kind: JoinKind,
    trials: u32,
    piece_size: usize,
) -> Result<Vec<u32>> {
    if 2 * piece_size > config.system_count() {
        return Err(Error::InvalidParameter(format!(
            "two pieces of {piece_size} need {} systems, the pool has {}",
            2 * piece_size,
            config.system_count()
        )));
    }
    let n = piece_size as SystemId;
    let inv = Inventory {
        pieces: vec![
            Piece { tilt: TiltAngle::UNTILTED, members: (0..n).collect() },
            Piece { tilt: TiltAngle::UNTILTED, members: (n..2 * n).collect() },
        ],
    };
    let plan = JoinPlan { kind, edges: vec![(0, 1)] };
    (0..trials).into_par_iter().map(|t| run_join_trial(&inv, &plan, config, t).map(|o| o.attempts[0])).collect()
}

#[cfg(test)]
mod tests;
