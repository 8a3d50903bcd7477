//! Chain-building diagonalizers against a table functional.
//!
//! A stage machine watches a stable pair coloring `d`, a table functional
//! `Ψ`, and a uniform sequence of tree enumerations. Along the enumeration
//! member that currently looks infinite it tries to commit a growing chain
//! of blocks — finite sets homogeneous for a target color whose union,
//! joined with the chain below, makes `Ψ` output 1 somewhere fresh. The
//! emitted unary coloring cycles with the chain depth, so each successful
//! commitment flips the color that later `Ψ`-outputs receive. Repair moves
//! fire when a block's elements stop looking like they limit to the block's
//! color, when a chain node falls off the live tree, or when the watched
//! member stops looking infinite.
//!
//! The base machine (one slot) scans for blocks directly. The general
//! machine (k slots) instead runs a canonical stacked-forest search per
//! live terminal, commits the least eligible slot/block pair once every
//! search completes, grows auxiliary tree enumerations out of the searches'
//! stalls, and recurses on those enumerations to produce companion
//! colorings. A mixed-radix assembly packs the family into a single
//! coloring, and the verdict checker hunts for a homogeneous set witnessing
//! that `Ψ` fails against the assembled family: its output set is either
//! small or straddles two colors.

use std::collections::BTreeMap;
use std::fmt;

use crate::coloring::{
    derive_stability, encode_tuple, guess_limit, hash_count, is_homogeneous, thin_to_homogeneous,
    PairColoring, StabilityCert, UnaryColoring,
};
use crate::enumerations::{
    looks_extendible, looks_infinite, trivial_sequence, EnumError, UniformSequence,
    UniformSequenceBuilder,
};
use crate::fincomb::Predicate;
use crate::forest::{CanonicalSearch, SearchBudget, SearchStatus};
use crate::functional::{defined_set, eval_on_set, TableFunctional};
use crate::set::{str_display, str_ran, SmallSet, Str};
use crate::Stage;

/// Exhaustive block scans refuse windows wider than this; at supported
/// scales the windows stay far below it.
const SCAN_WIDTH_LIMIT: u32 = 22;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CohError {
    /// The color sets cannot supply one target color per slot.
    BadColorSets { k: u32, c: SmallSet, c0: SmallSet },
    /// Zero slots requested.
    ZeroK,
    /// The recursion allowance cannot reach the base machine.
    RecursionBudget { k: u32, depth: u32 },
    /// An auxiliary enumeration failed its structural laws.
    Enumeration(EnumError),
    /// Inputs beyond the supported desk scale.
    ScaleBound { what: String },
}

impl fmt::Display for CohError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CohError::BadColorSets { k, c, c0 } => write!(
                f,
                "need c0 ⊆ c with at least {k} colors left over, got c={:?} c0={:?}",
                c.to_vec(),
                c0.to_vec()
            ),
            CohError::ZeroK => write!(f, "slot count must be at least 1"),
            CohError::RecursionBudget { k, depth } => {
                write!(f, "recursion budget {depth} cannot reach the base machine from k={k}")
            }
            CohError::Enumeration(e) => write!(f, "auxiliary enumeration invalid: {e}"),
            CohError::ScaleBound { what } => write!(f, "beyond supported scale: {what}"),
        }
    }
}

impl std::error::Error for CohError {}

impl From<EnumError> for CohError {
    fn from(e: EnumError) -> Self {
        CohError::Enumeration(e)
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Inputs to one diagonalizer run: slot count `k`, ambient and excluded
/// color sets leaving at least `k` colors free, the watched pair coloring,
/// the uniform sequence being tracked, and the functional under attack.
#[derive(Debug, Clone)]
pub struct CohConfig {
    pub k: u32,
    pub c: SmallSet,
    pub c0: SmallSet,
    pub d: PairColoring,
    pub seq: UniformSequence,
    pub psi: TableFunctional,
    targets: Vec<u32>,
}

impl CohConfig {
    /// Validate the color sets and fix the target colors: the `k` smallest
    /// members of `c − c0`, one per slot. More than `k` free colors are
    /// tolerated; the extras are simply never targeted.
    pub fn new(
        k: u32,
        c: SmallSet,
        c0: SmallSet,
        d: PairColoring,
        seq: UniformSequence,
        psi: TableFunctional,
    ) -> Result<Self, CohError> {
        if k == 0 {
            return Err(CohError::ZeroK);
        }
        let free = c.minus(c0);
        if !c0.is_subset_of(c) || free.len() < k {
            return Err(CohError::BadColorSets { k, c, c0 });
        }
        let targets: Vec<u32> = free.iter().take(k as usize).collect();
        Ok(CohConfig { k, c, c0, d, seq, psi, targets })
    }

    /// The color each slot's blocks must be homogeneous in.
    pub fn targets(&self) -> &[u32] {
        &self.targets
    }
}

// ---------------------------------------------------------------------------
// Machine state
// ---------------------------------------------------------------------------

/// One chain node: a block per slot (exactly one non-empty) and the stage
/// the node was committed, which dominates every member of every block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HEntry {
    pub sets: Vec<SmallSet>,
    pub u: Stage,
}

impl HEntry {
    /// Index of the non-empty block, if any.
    pub fn slot(&self) -> Option<usize> {
        self.sets.iter().position(|s| !s.is_empty())
    }
}

/// The machine's live state: chain nodes keyed by the enumeration string
/// they were committed at, the common chain depth `n` of the current
/// terminals, the index of the watched member, and the colors emitted so
/// far.
#[derive(Debug, Clone, Default)]
pub struct CohState {
    h: BTreeMap<Str, HEntry>,
    n: usize,
    active_l: usize,
    c_values: Vec<u32>,
}

impl CohState {
    /// Current chain depth: nodes defined along each live branch.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Index of the enumeration member being watched.
    pub fn active_l(&self) -> usize {
        self.active_l
    }

    /// Colors emitted so far, one per stage.
    pub fn c_values(&self) -> &[u32] {
        &self.c_values
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Str, &HEntry)> {
        self.h.iter()
    }

    /// Sorted distinct string depths at which chain nodes currently sit.
    pub fn class_depths(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.h.keys().map(|k| k.len() as u32).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Union of the slot-`j` blocks at `sigma`'s defined prefixes, with the
    /// largest commit stage among those prefixes (over all slots).
    pub fn chain(&self, sigma: &[u32], j: usize) -> (SmallSet, Option<Stage>) {
        let mut union = SmallSet::empty();
        let mut max_u: Option<Stage> = None;
        for depth in self.class_depths() {
            let depth = depth as usize;
            if depth > sigma.len() {
                break;
            }
            if let Some(entry) = self.h.get(&sigma[..depth]) {
                union = union.union(entry.sets[j]);
                max_u = Some(max_u.map_or(entry.u, |m| m.max(entry.u)));
            }
        }
        (union, max_u)
    }

    /// Chain nodes no other node strictly extends: the deepest node of each
    /// live branch.
    pub fn maximal_keys(&self) -> Vec<Str> {
        self.h
            .keys()
            .filter(|k| {
                !self
                    .h
                    .keys()
                    .any(|other| other.len() > k.len() && other.starts_with(k.as_slice()))
            })
            .cloned()
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

/// Why an auxiliary-enumeration attempt was closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UhatCause {
    /// Every terminal's search produced a fresh tree at the watched slot.
    NewTreeEverywhere,
    /// Every terminal's search has decided, one way or the other.
    AllSearchesTerminated,
    /// The main machine changed state, restarting all searches.
    StateChanged,
}

/// Log of everything the machine does, one entry per action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CohEvent {
    /// A chain node was committed at `sigma` with block `f` in slot `j`,
    /// certified by output 1 at `x` within the recorded use.
    Defined { stage: Stage, sigma: Str, j: u32, f: SmallSet, x: u32, use_bound: u32 },
    /// Search certificates were complete everywhere but some terminal
    /// offered no eligible slot/block pair, so nothing was committed.
    NothingDefined { stage: Stage },
    /// A chain node fell off the live tree and was removed.
    Undefined { stage: Stage, sigma: Str },
    /// Element `culprit` stopped looking like its block's color; the node
    /// classes at index `class` and deeper were removed.
    Truncated { stage: Stage, class: usize, culprit: u32 },
    /// The watched member stopped looking infinite; moved to the next one.
    Advanced { stage: Stage, new_l: usize },
    /// An auxiliary attempt opened for slot `j`.
    UhatStarted { j: u32, stage: Stage, member: usize },
    /// An auxiliary attempt committed the level `level`.
    UhatGrown { j: u32, stage: Stage, member: usize, level: u32 },
    /// An auxiliary attempt closed.
    UhatClosed { j: u32, stage: Stage, member: usize, cause: UhatCause },
    /// A nested machine was instantiated for slot `j`.
    Recursed { j: u32, k_next: u32 },
    /// A state invariant failed after the stage's actions (never expected).
    InvariantViolated { stage: Stage, what: String },
}

impl fmt::Display for CohEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CohEvent::Defined { stage, sigma, j, f: set, x, use_bound } => write!(
                f,
                "{stage}: defined {} slot {j} block {:?} witness x={x} use={use_bound}",
                str_display(sigma),
                set.to_vec()
            ),
            CohEvent::NothingDefined { stage } => {
                write!(f, "{stage}: searches complete but no eligible block")
            }
            CohEvent::Undefined { stage, sigma } => {
                write!(f, "{stage}: undefined {}", str_display(sigma))
            }
            CohEvent::Truncated { stage, class, culprit } => {
                write!(f, "{stage}: truncated classes >= {class} (culprit {culprit})")
            }
            CohEvent::Advanced { stage, new_l } => {
                write!(f, "{stage}: advanced to member {new_l}")
            }
            CohEvent::UhatStarted { j, stage, member } => {
                write!(f, "{stage}: aux[{j}] attempt {member} started")
            }
            CohEvent::UhatGrown { j, stage, member, level } => {
                write!(f, "{stage}: aux[{j}] attempt {member} grew level {level}")
            }
            CohEvent::UhatClosed { j, stage, member, cause } => {
                write!(f, "{stage}: aux[{j}] attempt {member} closed ({cause:?})")
            }
            CohEvent::Recursed { j, k_next } => {
                write!(f, "recursed into slot {j} machine with k={k_next}")
            }
            CohEvent::InvariantViolated { stage, what } => {
                write!(f, "{stage}: INVARIANT VIOLATED: {what}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// State invariants
// ---------------------------------------------------------------------------

/// A violated machine invariant, reported with the offending data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CohViolation {
    /// Chain nodes exist but the watched member does not.
    NoMember { l: usize },
    /// The number of distinct node depths disagrees with the chain count.
    ClassCount { classes: usize, n: usize },
    /// A chain node no longer looks extendible.
    KeyNotExtendible { sigma: Str },
    /// A live terminal is missing its prefix node at a class depth.
    MissingPrefix { terminal: Str, depth: u32 },
    /// A node's block vector has the wrong slot count.
    SlotCount { sigma: Str, got: usize, want: usize },
    /// A node does not hold exactly one non-empty block.
    NonemptyCount { sigma: Str, nonempty: usize },
    /// A node's stage does not dominate its block.
    UnboundedStage { sigma: Str },
    /// A deeper node's block fails to clear a shallower node's stage.
    NestingOrder { lower: Str, upper: Str },
}

impl fmt::Display for CohViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CohViolation::NoMember { l } => write!(f, "nodes defined but member {l} missing"),
            CohViolation::ClassCount { classes, n } => {
                write!(f, "{classes} node depths but chain count {n}")
            }
            CohViolation::KeyNotExtendible { sigma } => {
                write!(f, "node {} not extendible", str_display(sigma))
            }
            CohViolation::MissingPrefix { terminal, depth } => write!(
                f,
                "terminal {} lacks its depth-{depth} node",
                str_display(terminal)
            ),
            CohViolation::SlotCount { sigma, got, want } => {
                write!(f, "node {} has {got} slots, want {want}", str_display(sigma))
            }
            CohViolation::NonemptyCount { sigma, nonempty } => write!(
                f,
                "node {} has {nonempty} non-empty blocks",
                str_display(sigma)
            ),
            CohViolation::UnboundedStage { sigma } => {
                write!(f, "node {} committed below its block's maximum", str_display(sigma))
            }
            CohViolation::NestingOrder { lower, upper } => write!(
                f,
                "node {} block does not clear node {} stage",
                str_display(upper),
                str_display(lower)
            ),
        }
    }
}

/// Check every structural law of the machine state at stage `t`: slot
/// counts, single-non-empty blocks, stage domination, chain nesting, the
/// agreement of node depths with the chain count, and the coverage of
/// every live terminal by nodes at every class depth.
pub fn check_coh_state(
    state: &CohState,
    seq: &UniformSequence,
    k: u32,
    t: Stage,
) -> Vec<CohViolation> {
    let mut out = Vec::new();
    for (sigma, entry) in state.entries() {
        if entry.sets.len() != k as usize {
            out.push(CohViolation::SlotCount {
                sigma: sigma.clone(),
                got: entry.sets.len(),
                want: k as usize,
            });
            continue;
        }
        let nonempty = entry.sets.iter().filter(|s| !s.is_empty()).count();
        if nonempty != 1 {
            out.push(CohViolation::NonemptyCount { sigma: sigma.clone(), nonempty });
        }
        let union = entry
            .sets
            .iter()
            .fold(SmallSet::empty(), |acc, s| acc.union(*s));
        if union.max().is_some_and(|m| entry.u < m) {
            out.push(CohViolation::UnboundedStage { sigma: sigma.clone() });
        }
    }
    // Nesting: along comparable nodes, a deeper block sits above every
    // shallower node's commit stage.
    let keys: Vec<&Str> = state.h.keys().collect();
    for lower in &keys {
        for upper in &keys {
            if upper.len() <= lower.len() || !upper.starts_with(lower.as_slice()) {
                continue;
            }
            let upper_union = state.h[*upper]
                .sets
                .iter()
                .fold(SmallSet::empty(), |acc, s| acc.union(*s));
            if upper_union.min().is_some_and(|m| m <= state.h[*lower].u) {
                out.push(CohViolation::NestingOrder {
                    lower: (*lower).clone(),
                    upper: (*upper).clone(),
                });
            }
        }
    }
    let depths = state.class_depths();
    if depths.len() != state.n {
        out.push(CohViolation::ClassCount { classes: depths.len(), n: state.n });
    }
    if state.h.is_empty() {
        return out;
    }
    let Some(member) = seq.member(state.active_l) else {
        out.push(CohViolation::NoMember { l: state.active_l });
        return out;
    };
    for sigma in state.h.keys() {
        if !looks_extendible(member, sigma, t) {
            out.push(CohViolation::KeyNotExtendible { sigma: sigma.clone() });
        }
    }
    if let Some((_, terminals)) = member.top_level_by(t) {
        for term in terminals {
            for &depth in &depths {
                let depth = depth as usize;
                if depth > term.len() || !state.h.contains_key(&term[..depth]) {
                    out.push(CohViolation::MissingPrefix {
                        terminal: term.clone(),
                        depth: depth as u32,
                    });
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// The stage machine
// ---------------------------------------------------------------------------

struct Machine<'a> {
    cfg: &'a CohConfig,
    stage_limit: Stage,
    state: CohState,
    events: Vec<CohEvent>,
    violations: usize,
    /// Stage of the last state change; searches restart from here.
    base: Stage,
    /// Live per-terminal searches for the current base epoch (k > 1).
    searches: BTreeMap<Str, CanonicalSearch>,
    /// Whether `psi` has the exact uniform-pool shape that admits the
    /// entry-driven least-block shortcut.
    pool_shaped: bool,
}

/// The uniform pool shape: every entry outputs 1 on a full initial-segment
/// constraint and appears exactly when its use or its input requires.
fn has_pool_shape(psi: &TableFunctional) -> bool {
    psi.entries().iter().all(|e| {
        e.output == 1
            && e.use_bound < 64
            && e.mask == SmallSet::below(e.use_bound).0
            && e.stage == e.use_bound.max(e.x + 1)
    })
}

impl<'a> Machine<'a> {
    fn new(cfg: &'a CohConfig, stage_limit: Stage) -> Self {
        Machine {
            cfg,
            stage_limit,
            state: CohState::default(),
            events: Vec::new(),
            violations: 0,
            base: 0,
            searches: BTreeMap::new(),
            pool_shaped: has_pool_shape(&cfg.psi),
        }
    }

    /// Strings of the watched member's deepest committed level at `t`.
    fn terminals(&self, t: Stage) -> Vec<Str> {
        self.cfg
            .seq
            .member(self.state.active_l)
            .and_then(|m| m.top_level_by(t))
            .map(|(_, strings)| strings.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Process the trigger conditions at stage `t`; true when the state
    /// changed. Repairs preempt commitment: the member advance fires alone,
    /// then both clean-up repairs, and a commitment is attempted only on a
    /// stage with nothing to repair.
    fn process(&mut self, t: Stage) -> bool {
        let seq = &self.cfg.seq;
        // The watched member no longer looks infinite while a later one
        // does: restart against the successor.
        if !looks_infinite(seq, self.state.active_l, t)
            && (self.state.active_l + 1..seq.len()).any(|l| looks_infinite(seq, l, t))
        {
            self.state.h.clear();
            self.state.n = 0;
            self.state.active_l += 1;
            self.events
                .push(CohEvent::Advanced { stage: t, new_l: self.state.active_l });
            return true;
        }
        let Some(member) = seq.member(self.state.active_l) else {
            return false;
        };
        let mut changed = false;
        // Nodes that fell off the live tree.
        let dead: Vec<Str> = self
            .state
            .h
            .keys()
            .filter(|s| !looks_extendible(member, s, t))
            .cloned()
            .collect();
        for sigma in dead {
            self.state.h.remove(&sigma);
            self.events.push(CohEvent::Undefined { stage: t, sigma });
            changed = true;
        }
        // A block element that stopped looking like its slot's color kills
        // its class and everything deeper.
        let depths = self.state.class_depths();
        let mut cut: Option<(usize, u32)> = None;
        'scan: for (m, &depth) in depths.iter().enumerate() {
            for (key, entry) in &self.state.h {
                if key.len() as u32 != depth {
                    continue;
                }
                for (j, set) in entry.sets.iter().enumerate() {
                    for x in set.iter() {
                        if guess_limit(&self.cfg.d, x, t) != Some(self.cfg.targets[j]) {
                            cut = Some((m, x));
                            break 'scan;
                        }
                    }
                }
            }
        }
        if let Some((m, culprit)) = cut {
            let cut_depth = depths[m];
            self.state.h.retain(|key, _| (key.len() as u32) < cut_depth);
            self.state.n = m;
            self.events.push(CohEvent::Truncated { stage: t, class: m, culprit });
            changed = true;
        }
        if changed {
            return true;
        }
        // Commitment: all live terminals must be bare.
        let terms = self.terminals(t);
        if terms.is_empty() || terms.iter().any(|s| self.state.h.contains_key(s)) {
            return false;
        }
        if self.cfg.k == 1 {
            self.fire_base(t, &terms)
        } else {
            self.fire_general(t, &terms)
        }
    }

    /// Emit the stage's color: the chain depth modulo `k + 1`.
    fn emit_color(&mut self) {
        self.state
            .c_values
            .push(self.state.n as u32 % (self.cfg.k + 1));
    }

    /// Record any structural violations at `t` as events.
    fn check(&mut self, t: Stage) {
        for v in check_coh_state(&self.state, &self.cfg.seq, self.cfg.k, t) {
            self.events
                .push(CohEvent::InvariantViolated { stage: t, what: v.to_string() });
            self.violations += 1;
        }
    }

    // -- base machine (k = 1) ------------------------------------------------

    /// Try to commit a block at every live terminal; all-or-nothing.
    fn fire_base(&mut self, t: Stage, terms: &[Str]) -> bool {
        let target = self.cfg.targets[0];
        let mut picks: Vec<(Str, SmallSet, u32, u32)> = Vec::new();
        for sigma in terms {
            let (chain, max_u) = self.state.chain(sigma, 0);
            match self.least_candidate_base(sigma, chain, max_u, t, target) {
                Some((f, x, use_bound)) => picks.push((sigma.clone(), f, x, use_bound)),
                None => return false,
            }
        }
        for (sigma, f, x, use_bound) in picks {
            self.state
                .h
                .insert(sigma.clone(), HEntry { sets: vec![f], u: t });
            self.events
                .push(CohEvent::Defined { stage: t, sigma, j: 0, f, x, use_bound });
        }
        self.state.n += 1;
        true
    }

    /// The least eligible block at `sigma`: non-empty, inside the
    /// terminal's range, above every earlier commit stage, every element
    /// looking like it limits to `target`, all cross pairs already colored
    /// `target`, and `Ψ` on chain ∪ block outputting 1 at some input at or
    /// above the chain's stages — converged strictly below `t`.
    fn least_candidate_base(
        &self,
        sigma: &[u32],
        chain: SmallSet,
        max_u: Option<Stage>,
        t: Stage,
        target: u32,
    ) -> Option<(SmallSet, u32, u32)> {
        let lo = max_u.map_or(0, |u| u + 1);
        let x_lo = max_u.unwrap_or(0);
        let raw = str_ran(sigma).intersect(SmallSet::interval(lo, t));
        let window: SmallSet = raw
            .iter()
            .filter(|&y| guess_limit(&self.cfg.d, y, t) == Some(target))
            .collect();
        if window.is_empty() {
            return None;
        }
        if self.pool_shaped {
            self.least_candidate_pooled(chain, window, x_lo, t, target)
        } else {
            assert!(
                window.len() <= SCAN_WIDTH_LIMIT,
                "window of {} points is too wide for the exhaustive block scan",
                window.len()
            );
            window
                .subsets_in_witness_order()
                .filter(|f| !f.is_empty())
                .find_map(|f| {
                    if !self.pairs_ok(chain, f, t, target) {
                        return None;
                    }
                    self.eval_witness(chain.union(f), x_lo, t)
                        .map(|(x, ub)| (f, x, ub))
                })
        }
    }

    /// Entry-driven shortcut, exact for pool-shaped tables: any block that
    /// works resolves through some entry, and that entry's minimal demand
    /// (its missing constraint bits, or a lone window point when nothing is
    /// missing) is an eligible block no later in witness order.
    fn least_candidate_pooled(
        &self,
        chain: SmallSet,
        window: SmallSet,
        x_lo: u32,
        t: Stage,
        target: u32,
    ) -> Option<(SmallSet, u32, u32)> {
        let mut cands: Vec<SmallSet> = Vec::new();
        for e in self.cfg.psi.entries() {
            if e.stage > t || e.use_bound >= t || e.x < x_lo || e.x >= t {
                continue;
            }
            let below_use = SmallSet::below(e.use_bound);
            let bits = SmallSet(e.bits);
            if !chain.intersect(below_use).is_subset_of(bits) {
                continue;
            }
            let need = bits.minus(chain);
            if !need.is_subset_of(window) {
                continue;
            }
            if need.is_empty() {
                let forbidden = below_use.minus(bits);
                for y in window.minus(forbidden).iter() {
                    cands.push(SmallSet::singleton(y));
                }
            } else {
                cands.push(need);
            }
        }
        cands.sort_by(|a, b| a.witness_cmp(*b));
        cands.dedup();
        for f in cands {
            if !self.pairs_ok(chain, f, t, target) {
                continue;
            }
            if let Some((x, ub)) = self.eval_witness(chain.union(f), x_lo, t) {
                return Some((f, x, ub));
            }
        }
        None
    }

    /// All pairs reaching into `f` from chain ∪ f have converged to
    /// `target` by `t`.
    fn pairs_ok(&self, chain: SmallSet, f: SmallSet, t: Stage, target: u32) -> bool {
        let a = chain.union(f);
        f.iter().all(|y| {
            a.iter()
                .take_while(|&x| x < y)
                .all(|x| self.cfg.d.value_by(x, y, t) == Some(target))
        })
    }

    /// First input in `[x_lo, t)` where `Ψ` on `a` outputs 1 with use
    /// strictly below `t`.
    fn eval_witness(&self, a: SmallSet, x_lo: u32, t: Stage) -> Option<(u32, u32)> {
        (x_lo..t).find_map(|x| {
            let ev = eval_on_set(&self.cfg.psi, a, x, t);
            if ev.converges_to(1) && ev.use_bound().is_some_and(|u| u < t) {
                Some((x, ev.use_bound().expect("convergent evaluation carries a use")))
            } else {
                None
            }
        })
    }

    // -- general machine (k > 1) ---------------------------------------------

    /// Try to commit a slot/block pair at every live terminal. Requires
    /// every terminal's stacked search to have completed; commits are
    /// all-or-nothing across terminals.
    fn fire_general(&mut self, t: Stage, terms: &[Str]) -> bool {
        for sigma in terms {
            if *self.search_for(sigma, t).status() != SearchStatus::Done {
                return false;
            }
        }
        let mut picks: Vec<(Str, u32, SmallSet, u32, u32)> = Vec::new();
        for sigma in terms {
            match self.least_pair(sigma, t) {
                Some(p) => picks.push(p),
                None => {
                    self.events.push(CohEvent::NothingDefined { stage: t });
                    return false;
                }
            }
        }
        let k = self.cfg.k as usize;
        for (sigma, j, f, x, use_bound) in picks {
            let mut sets = vec![SmallSet::empty(); k];
            sets[j as usize] = f;
            self.state.h.insert(sigma.clone(), HEntry { sets, u: t });
            self.events
                .push(CohEvent::Defined { stage: t, sigma, j, f, x, use_bound });
        }
        self.state.n += 1;
        true
    }

    /// The least slot/block pair offered by `sigma`'s completed forest:
    /// slots ascending, then blocks in witness order over the forest's
    /// level-`j` terminal ranges, filtered to elements that look like they
    /// limit to the slot's color.
    fn least_pair(&self, sigma: &Str, t: Stage) -> Option<(Str, u32, SmallSet, u32, u32)> {
        let forest = self.searches.get(sigma)?.found_forest()?;
        let tick = t - self.base;
        for j in 0..self.cfg.k {
            let target = self.cfg.targets[j as usize];
            let phi = self.phi_for(sigma, j as usize);
            let mut best: Option<SmallSet> = None;
            for tree in forest.level(j).trees() {
                for alpha in tree.tree.terminals() {
                    let window: SmallSet = str_ran(&alpha)
                        .iter()
                        .filter(|&y| guess_limit(&self.cfg.d, y, t) == Some(target))
                        .collect();
                    assert!(
                        window.len() <= SCAN_WIDTH_LIMIT,
                        "tree range of {} points is too wide for the block scan",
                        window.len()
                    );
                    let found = window
                        .subsets_in_witness_order()
                        .filter(|f| !f.is_empty())
                        .find(|f| phi.holds_by(*f, tick));
                    if let Some(f) = found {
                        best = Some(match best {
                            Some(b) if b.witness_cmp(f).is_le() => b,
                            _ => f,
                        });
                    }
                }
            }
            if let Some(f) = best {
                let (chain, max_u) = self.state.chain(sigma, j as usize);
                let x_lo = max_u.unwrap_or(0);
                let (x, ub) = self
                    .eval_witness(chain.union(f), x_lo, t)
                    .expect("the block formula held, so its witness replays");
                return Some((sigma.clone(), j, f, x, ub));
            }
        }
        None
    }

    /// The slot-`j` block formula at `sigma`, frozen against the current
    /// state and base epoch. Evaluated by searches on their internal clock:
    /// internal stage `s` stands for ambient stage `base + s`.
    fn phi_for(&self, sigma: &[u32], j: usize) -> Predicate {
        let (chain, max_u) = self.state.chain(sigma, j);
        let d = self.cfg.d.clone();
        let psi = self.cfg.psi.clone();
        let target = self.cfg.targets[j];
        let base = self.base;
        Predicate::new(format!("slot-{j} block formula"), move |f: SmallSet, s: Stage| {
            let t_amb = base.saturating_add(s);
            if f.is_empty() {
                return false;
            }
            if let Some(u) = max_u {
                if f.min().expect("non-empty") <= u {
                    return false;
                }
            }
            let a = chain.union(f);
            let pairs = f.iter().all(|y| {
                a.iter()
                    .take_while(|&x| x < y)
                    .all(|x| d.value_by(x, y, t_amb) == Some(target))
            });
            if !pairs {
                return false;
            }
            let x_lo = max_u.unwrap_or(0);
            (x_lo..t_amb).any(|x| {
                let ev = eval_on_set(&psi, a, x, t_amb);
                ev.converges_to(1) && ev.use_bound().is_some_and(|u| u < t_amb)
            })
        })
    }

    /// The live search for `sigma`, created on first sight in the current
    /// base epoch and stepped to the epoch's tick for stage `t`.
    fn search_for(&mut self, sigma: &Str, t: Stage) -> &CanonicalSearch {
        if !self.searches.contains_key(sigma) {
            let phis: Vec<Predicate> = (0..self.cfg.k as usize)
                .map(|j| self.phi_for(sigma, j))
                .collect();
            let budget = SearchBudget::new(self.stage_limit, 63, 8);
            self.searches
                .insert(sigma.clone(), CanonicalSearch::new(phis, str_ran(sigma), budget));
        }
        let tick = t.saturating_sub(self.base);
        let search = self.searches.get_mut(sigma).expect("just inserted");
        while search.stage() < tick && *search.status() == SearchStatus::Running {
            search.step();
        }
        self.searches.get(sigma).expect("just inserted")
    }

    /// Trees found at `level` in `sigma`'s search strictly after the
    /// ambient stage `since` (within the current base epoch).
    fn new_trees(&mut self, sigma: &Str, level: u32, since: Stage, t: Stage) -> usize {
        let tick_since = since.saturating_sub(self.base);
        self.search_for(sigma, t).trees_found_since(level, tick_since)
    }

    /// Total trees found at `level` in `sigma`'s search by stage `t`.
    fn total_trees(&mut self, sigma: &Str, level: u32, t: Stage) -> usize {
        self.search_for(sigma, t).trees_found(level)
    }
}

// ---------------------------------------------------------------------------
// The base run
// ---------------------------------------------------------------------------

/// Run the single-slot machine for `stage_limit` stages: the emitted
/// coloring (over two colors), the final state, and the full event log.
/// Invariant violations are recorded in the log, never panicked on.
pub fn coh_k1_run(
    cfg: &CohConfig,
    stage_limit: Stage,
) -> (UnaryColoring, CohState, Vec<CohEvent>) {
    assert_eq!(cfg.k, 1, "the base run is the single-slot machine");
    let mut machine = Machine::new(cfg, stage_limit);
    for t in 0..stage_limit {
        let changed = machine.process(t);
        if changed {
            machine.base = t;
        }
        machine.emit_color();
        machine.check(t);
    }
    let c = UnaryColoring::new(machine.state.c_values.clone(), 2)
        .expect("depth mod 2 stays below 2");
    (c, machine.state, machine.events)
}

// ---------------------------------------------------------------------------
// Auxiliary enumeration tracks
// ---------------------------------------------------------------------------

/// One auxiliary-enumeration track: slot `j`'s ordered sequence of
/// attempts, grown out of the stalls of the per-terminal searches.
struct UhatTrack {
    j: u32,
    builder: UniformSequenceBuilder,
    /// Stage the open attempt started.
    start: Stage,
    /// Watched member's deepest committed level at the attempt's start.
    ref_top: Option<u32>,
    /// Terminal chosen at the previous growth; later growths must extend it.
    pick: Option<Str>,
    /// Suffix origin within the followed terminal (slot 0 growth).
    z: Option<usize>,
    /// Fresh lower-slot trees already consumed (positive-slot growth).
    consumed: usize,
}

impl UhatTrack {
    fn new(j: u32) -> Self {
        UhatTrack {
            j,
            builder: UniformSequenceBuilder::new(),
            start: 0,
            ref_top: None,
            pick: None,
            z: None,
            consumed: 0,
        }
    }

    fn open_member(&self) -> usize {
        self.builder.member_count().saturating_sub(1)
    }

    fn try_start(&mut self, machine: &Machine<'_>, t: Stage, events: &mut Vec<CohEvent>) {
        if self.builder.start_member(t).is_err() {
            // Too early for the next attempt index; retry at a later stage.
            return;
        }
        self.start = t;
        self.ref_top = machine
            .cfg
            .seq
            .member(machine.state.active_l)
            .and_then(|m| m.top_committed_by(t));
        self.pick = None;
        self.z = None;
        self.consumed = 0;
        events.push(CohEvent::UhatStarted { j: self.j, stage: t, member: self.open_member() });
    }

    fn close(&mut self, t: Stage, cause: UhatCause, events: &mut Vec<CohEvent>) {
        let member = self.open_member();
        self.builder
            .close(t)
            .expect("the open attempt closes at or after its last commitment");
        events.push(CohEvent::UhatClosed { j: self.j, stage: t, member, cause });
    }
}

/// Advance track `track` at stage `t`. Any main-machine state change closes
/// the open attempt; otherwise the track grows on a stalled search, closes
/// on fresh trees everywhere or on all searches having decided, and idles
/// when none of its conditions applies (or growth has no compatible
/// terminal to follow).
fn uhat_step(
    machine: &mut Machine<'_>,
    track: &mut UhatTrack,
    t: Stage,
    changed: bool,
    events: &mut Vec<CohEvent>,
) {
    if !track.builder.has_open() {
        track.try_start(machine, t, events);
        return;
    }
    if changed {
        track.close(t, UhatCause::StateChanged, events);
        track.try_start(machine, t, events);
        return;
    }
    let terms = machine.terminals(t);
    if terms.is_empty() {
        return;
    }
    let top_now = machine
        .cfg
        .seq
        .member(machine.state.active_l)
        .and_then(|m| m.top_committed_by(t));
    let new_terms = top_now > track.ref_top;
    let j = track.j;
    let since = track.start;

    // Growth: the watched member has grown while some terminal's search
    // stalled at this slot (for positive slots, with every terminal's
    // search already past the slot below).
    let growth_applies = if j == 0 {
        new_terms
            && terms
                .iter()
                .any(|s| machine.new_trees(s, 0, since, t) == 0)
    } else {
        new_terms
            && terms
                .iter()
                .all(|s| machine.new_trees(s, j - 1, since, t) > 0)
            && terms
                .iter()
                .any(|s| machine.new_trees(s, j, since, t) == 0)
    };
    if growth_applies {
        if j == 0 {
            grow_suffix(machine, track, t, &terms, events);
        } else {
            grow_from_tree(machine, track, t, &terms, events);
        }
        return;
    }
    // Fresh tree at this slot in every terminal: the attempt is done.
    if terms
        .iter()
        .all(|s| machine.new_trees(s, j, since, t) > 0)
    {
        track.close(t, UhatCause::NewTreeEverywhere, events);
        track.try_start(machine, t, events);
        return;
    }
    // Every search decided: nothing more will ever stall.
    if terms
        .iter()
        .all(|s| *machine.search_for(s, t).status() != SearchStatus::Running)
    {
        track.close(t, UhatCause::AllSearchesTerminated, events);
        track.try_start(machine, t, events);
    }
}

/// Slot-0 growth: follow one stalled terminal, publishing ever longer
/// suffixes of it, one entry per level.
fn grow_suffix(
    machine: &mut Machine<'_>,
    track: &mut UhatTrack,
    t: Stage,
    terms: &[Str],
    events: &mut Vec<CohEvent>,
) {
    let since = track.start;
    let eligible: Vec<Str> = terms
        .iter()
        .filter(|s| machine.new_trees(s, 0, since, t) == 0)
        .cloned()
        .collect();
    let chosen = eligible.into_iter().find(|s| match &track.pick {
        None => true,
        Some(p) => s.len() > p.len() && s.starts_with(p.as_slice()),
    });
    let Some(sigma) = chosen else {
        return; // growth applies, but no terminal extends the followed one
    };
    let z = *track.z.get_or_insert(sigma.len() - 1);
    let target_len = sigma.len() - z;
    let from = track.builder.open_depth().expect("track has an open attempt");
    for x in from..=target_len {
        let suffix: Str = sigma[z..z + x].to_vec();
        if track
            .builder
            .commit_level(std::iter::once(suffix).collect(), t)
            .is_err()
        {
            return; // stage too early for this attempt index; retry later
        }
        events.push(CohEvent::UhatGrown {
            j: track.j,
            stage: t,
            member: track.open_member(),
            level: x as u32,
        });
    }
    track.pick = Some(sigma);
}

/// Positive-slot growth: consume the next fresh lower-slot tree of one
/// stalled terminal, publishing every one-point extension of the open
/// attempt's deepest strings into that tree's range.
fn grow_from_tree(
    machine: &mut Machine<'_>,
    track: &mut UhatTrack,
    t: Stage,
    terms: &[Str],
    events: &mut Vec<CohEvent>,
) {
    let since = track.start;
    let j = track.j;
    let mut chosen: Option<(Str, SmallSet)> = None;
    for sigma in terms {
        if machine.new_trees(sigma, j, since, t) != 0 {
            continue;
        }
        let compatible = match &track.pick {
            None => true,
            Some(p) => sigma.len() > p.len() && sigma.starts_with(p.as_slice()),
        };
        if !compatible {
            continue;
        }
        let total = machine.total_trees(sigma, j - 1, t);
        let fresh = machine.new_trees(sigma, j - 1, since, t);
        let ref_count = total - fresh;
        let idx = ref_count + track.consumed;
        if idx >= total {
            continue; // every fresh tree here is already consumed
        }
        let ran = machine.searches[sigma].partial_forest().level(j - 1).trees()[idx]
            .tree
            .ran();
        chosen = Some((sigma.clone(), ran));
        break;
    }
    let Some((sigma, ran)) = chosen else {
        return;
    };
    let depth = track.builder.open_depth().expect("track has an open attempt");
    let strings: std::collections::BTreeSet<Str> = if depth == 1 {
        ran.iter().map(|v| vec![v]).collect()
    } else {
        let (_, top) = track.builder.open_top().expect("attempt has a deepest level");
        let mut out = std::collections::BTreeSet::new();
        for tau in top {
            let last = *tau.last().expect("levels above the root are non-empty strings");
            for v in ran.iter().filter(|&v| v > last) {
                let mut s = tau.clone();
                s.push(v);
                out.insert(s);
            }
        }
        out
    };
    if strings.is_empty() {
        return; // nothing extends the current level into this tree's range
    }
    if track.builder.commit_level(strings, t).is_err() {
        return;
    }
    events.push(CohEvent::UhatGrown {
        j,
        stage: t,
        member: track.open_member(),
        level: depth as u32,
    });
    track.pick = Some(sigma);
    track.consumed += 1;
}

// ---------------------------------------------------------------------------
// The general run
// ---------------------------------------------------------------------------

/// Everything one diagonalizer run produces: the main coloring (over
/// `k + 1` colors), the `k` companion colorings, the auxiliary enumeration
/// per slot, the final state, the event log, the violation count, and the
/// nested runs that produced the companions.
#[derive(Debug)]
pub struct CohRun {
    pub c: UnaryColoring,
    pub c_js: Vec<UnaryColoring>,
    pub uhats: Vec<UniformSequence>,
    pub state: CohState,
    pub events: Vec<CohEvent>,
    pub violations: usize,
    pub nested: Vec<CohRun>,
}

impl CohRun {
    /// Violations in this run and every nested run.
    pub fn total_violations(&self) -> usize {
        self.violations + self.nested.iter().map(CohRun::total_violations).sum::<usize>()
    }

    /// Depth of nesting below this run (0 for the base machine).
    pub fn nesting_depth(&self) -> usize {
        self.nested
            .iter()
            .map(|r| 1 + r.nesting_depth())
            .max()
            .unwrap_or(0)
    }
}

/// Run the `k`-slot machine for `stage_limit` stages, recursing on the
/// auxiliary enumerations to build the companion colorings. `depth` must be
/// at least `cfg.k`; each recursion level spends one unit.
pub fn coh_general_run(
    cfg: &CohConfig,
    stage_limit: Stage,
    depth: u32,
) -> Result<CohRun, CohError> {
    if cfg.k > depth {
        return Err(CohError::RecursionBudget { k: cfg.k, depth });
    }
    if cfg.k == 1 {
        let (c, state, events) = coh_k1_run(cfg, stage_limit);
        let violations = events
            .iter()
            .filter(|e| matches!(e, CohEvent::InvariantViolated { .. }))
            .count();
        let c_js = vec![
            UnaryColoring::new(vec![0; stage_limit as usize], 1)
                .expect("the one-color coloring is trivially valid"),
        ];
        return Ok(CohRun {
            c,
            c_js,
            uhats: Vec::new(),
            state,
            events,
            violations,
            nested: Vec::new(),
        });
    }
    let k = cfg.k;
    let mut machine = Machine::new(cfg, stage_limit);
    let mut tracks: Vec<UhatTrack> = (0..k).map(UhatTrack::new).collect();
    let mut track_events: Vec<CohEvent> = Vec::new();
    for t in 0..stage_limit {
        let changed = machine.process(t);
        if changed {
            machine.base = t;
            machine.searches.clear();
        }
        machine.emit_color();
        machine.check(t);
        for track in &mut tracks {
            uhat_step(&mut machine, track, t, changed, &mut track_events);
        }
    }
    let c = UnaryColoring::new(machine.state.c_values.clone(), k + 1)
        .expect("depth mod (k+1) stays below k+1");
    let mut events = machine.events;
    events.append(&mut track_events);
    let violations = machine.violations;
    let state = machine.state;

    // Recurse per slot on the finished auxiliary sequences.
    let radix_inner = hash_count(k.saturating_sub(2))
        .map_err(|_| CohError::ScaleBound { what: format!("companion radix for k={k}") })?
        as u32;
    let mut c_js = Vec::with_capacity(k as usize);
    let mut uhats = Vec::with_capacity(k as usize);
    let mut nested = Vec::with_capacity(k as usize);
    for (j, track) in tracks.into_iter().enumerate() {
        let seq = track.builder.finish()?;
        let child_cfg = CohConfig::new(
            k - 1,
            cfg.c,
            cfg.c0.with(cfg.targets[j]),
            cfg.d.clone(),
            seq.clone(),
            cfg.psi.clone(),
        )?;
        events.push(CohEvent::Recursed { j: j as u32, k_next: k - 1 });
        let child = coh_general_run(&child_cfg, stage_limit, depth - 1)?;
        let mut radices = vec![k];
        radices.extend(std::iter::repeat_n(radix_inner, k as usize - 1));
        let values: Vec<u32> = (0..stage_limit)
            .map(|x| {
                let mut parts = vec![child.c.value(x)];
                parts.extend(child.c_js.iter().map(|cj| cj.value(x)));
                encode_tuple(&parts, &radices).expect("component values fit their radices") as u32
            })
            .collect();
        let m = hash_count(k - 1)
            .map_err(|_| CohError::ScaleBound { what: format!("companion range for k={k}") })?
            as u32;
        c_js.push(UnaryColoring::new(values, m).expect("mixed-radix code stays below its range"));
        uhats.push(seq);
        nested.push(child);
    }
    Ok(CohRun { c, c_js, uhats, state, events, violations, nested })
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Assemble the full coloring family against `(d, Ψ)` over the trivially
/// growing single-path enumeration, and pack it into one coloring over
/// `hash_count(k)` colors, together with the run that produced it.
pub fn build_e_run(
    k: u32,
    d: &PairColoring,
    psi: &TableFunctional,
    stage_limit: Stage,
) -> Result<(UnaryColoring, CohRun), CohError> {
    if k == 0 {
        return Err(CohError::ZeroK);
    }
    if k > 3 {
        return Err(CohError::ScaleBound { what: format!("assembly slot count {k}") });
    }
    if stage_limit > 63 {
        return Err(CohError::ScaleBound { what: format!("stage limit {stage_limit}") });
    }
    let cfg = CohConfig::new(
        k,
        SmallSet::below(k + 1),
        SmallSet::empty(),
        d.clone(),
        trivial_sequence(stage_limit),
        psi.clone(),
    )?;
    let run = coh_general_run(&cfg, stage_limit, k)?;
    let radix_inner = hash_count(k - 1)
        .map_err(|_| CohError::ScaleBound { what: format!("assembly radix for k={k}") })?
        as u32;
    let mut radices = vec![k + 1];
    radices.extend(std::iter::repeat_n(radix_inner, k as usize));
    let m = hash_count(k).map_err(|_| CohError::ScaleBound { what: format!("k={k}") })? as u32;
    let values: Vec<u32> = (0..stage_limit)
        .map(|x| {
            let mut parts = vec![run.c.value(x)];
            parts.extend(run.c_js.iter().map(|cj| cj.value(x)));
            encode_tuple(&parts, &radices).expect("component values fit their radices") as u32
        })
        .collect();
    let e = UnaryColoring::new(values, m).expect("mixed-radix code stays below its range");
    Ok((e, run))
}

/// [`build_e_run`], keeping only the assembled coloring.
pub fn build_e(
    k: u32,
    d: &PairColoring,
    psi: &TableFunctional,
    stage_limit: Stage,
) -> Result<UnaryColoring, CohError> {
    build_e_run(k, d, psi, stage_limit).map(|(e, _)| e)
}

// ---------------------------------------------------------------------------
// Pigeonhole
// ---------------------------------------------------------------------------

/// The purely arithmetic step of the final argument. `level_colors[n]` is
/// the slot of the `n`-th chain node. For each residue class `i` modulo
/// `k + 1`, let `j_i` be the least slot hit at least `theta` times by nodes
/// with `n ≡ i`; when every class has one, two classes must share, and the
/// least such collision `(i, i', j)` with `i < i'` is returned.
pub fn coh_pigeonhole(level_colors: &[u32], k: u32, theta: u32) -> Option<(u32, u32, u32)> {
    let classes = k + 1;
    let mut j_of: Vec<Option<u32>> = Vec::with_capacity(classes as usize);
    for i in 0..classes {
        let j_i = (0..k).find(|&j| {
            level_colors
                .iter()
                .enumerate()
                .filter(|(n, &c)| (*n as u32) % classes == i && c == j)
                .count() as u32
                >= theta
        });
        j_of.push(j_i);
    }
    if j_of.iter().any(Option::is_none) {
        return None;
    }
    for i in 0..classes {
        for i2 in i + 1..classes {
            if j_of[i as usize] == j_of[i2 as usize] {
                return Some((i, i2, j_of[i as usize].expect("checked above")));
            }
        }
    }
    unreachable!("k+1 defined slots among k values always collide")
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

/// Which disjunct a passing homogeneous set witnessed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassReason {
    /// `Ψ` on the set outputs fewer than two values above the threshold.
    SmallImage,
    /// The outputs above the threshold take at least two colors.
    TwoColors,
}

/// Outcome of hunting for a homogeneous set that defeats the assembly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CohVerdict {
    Pass { h: SmallSet, color: u32, reason: PassReason, theta: u32 },
    Fail { trace: String, theta: u32 },
}

impl CohVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, CohVerdict::Pass { .. })
    }
}

/// Greedily extend `seed` by pool elements keeping the set homogeneous in
/// `j` under the final values of `d`.
fn extend_homogeneous(seed: SmallSet, pool: SmallSet, d: &PairColoring, j: u32) -> SmallSet {
    let mut h = seed;
    for x in pool.iter().filter(|&x| x < d.n() && !seed.contains(x)) {
        let ok = h.iter().all(|p| {
            let (lo, hi) = (p.min(x), p.max(x));
            lo != hi && d.value(lo, hi) == j
        });
        if ok {
            h.insert(x);
        }
    }
    h
}

/// Search the finished `run` for a homogeneous set defeating `(e, Ψ)`:
/// candidates are the greedy homogeneous thinnings per color, the chain
/// unions of the final state, and those unions greedily extended. A
/// candidate passes when it has at least `theta` elements, is homogeneous,
/// and `Ψ`'s output set on it — cut to inputs at or above `theta` — is
/// either smaller than two or spans two `e`-colors.
pub fn coh_verify_run(
    run: &CohRun,
    e: &UnaryColoring,
    d: &PairColoring,
    psi: &TableFunctional,
    theta: u32,
) -> CohVerdict {
    let cert: StabilityCert = derive_stability(d);
    let stage_limit = e.n();
    let mut candidates: Vec<(SmallSet, u32)> = Vec::new();
    let mut pools: Vec<SmallSet> = Vec::new();
    for j in 0..d.k() {
        let pool: SmallSet = (0..d.n())
            .filter(|&x| cert.color_of(x) == Some(j))
            .collect();
        pools.push(pool);
        if let Ok(h) = thin_to_homogeneous(pool, d, &cert, j) {
            candidates.push((h, j));
        }
    }
    let slot_count = run.c_js.len().max(1) as u32;
    for sigma in run.state.maximal_keys() {
        for j in 0..slot_count.min(d.k()) {
            let (union, _) = run.state.chain(&sigma, j as usize);
            if union.is_empty() {
                continue;
            }
            candidates.push((union, j));
            let extended = extend_homogeneous(union, pools[j as usize], d, j);
            candidates.push((extended, j));
        }
    }
    let mut tried = 0usize;
    for (h, j) in candidates {
        if h.len() < theta || !is_homogeneous(h, d, j) {
            continue;
        }
        tried += 1;
        let w = defined_set(psi, h, e.n(), stage_limit);
        let w_high: Vec<u32> = w.iter().filter(|&x| x >= theta).collect();
        if w_high.len() < 2 {
            return CohVerdict::Pass { h, color: j, reason: PassReason::SmallImage, theta };
        }
        let mut colors: Vec<u32> = w_high.iter().map(|&x| e.value(x)).collect();
        colors.sort_unstable();
        colors.dedup();
        if colors.len() >= 2 {
            return CohVerdict::Pass { h, color: j, reason: PassReason::TwoColors, theta };
        }
    }
    CohVerdict::Fail {
        trace: format!(
            "no defeating homogeneous set among {tried} eligible candidates; \
             final chain depth {}, {} events, watched member {}",
            run.state.n(),
            run.events.len(),
            run.state.active_l()
        ),
        theta,
    }
}

/// Rebuild the run behind `e` (the slot count is recovered from `e`'s color
/// range) and search it for a homogeneous set defeating `(e, Ψ)`.
pub fn coh_diagonal_verify(
    e: &UnaryColoring,
    d: &PairColoring,
    psi: &TableFunctional,
    theta: u32,
) -> Result<CohVerdict, CohError> {
    let k = match e.m() {
        2 => 1,
        12 => 2,
        6912 => 3,
        m => {
            return Err(CohError::ScaleBound {
                what: format!("color range {m} is not an assembly range"),
            })
        }
    };
    let (_, run) = build_e_run(k, d, psi, e.n())?;
    Ok(coh_verify_run(&run, e, d, psi, theta))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
