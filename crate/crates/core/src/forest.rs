//! Search engines over witness trees: the tail-emptiness probe, pruned
//! sequence construction, the canonical level-by-level forest search, and
//! monochromatic-terminal extraction from a finished forest.

use std::fmt;

use crate::fincomb::{
    generated_subtree, tree_less, FiniteTree, PhiSequence, PhiTree, Predicate,
};
use crate::set::{str_ran, SmallSet, Str};
use crate::Stage;

/// Hard cap on the number of elements in any window that gets a full
/// subset scan; beyond this the search reports exhaustion instead of
/// attempting a 2^w enumeration.
const WINDOW_SCAN_LIMIT: u32 = 18;

/// Resource bounds for the searches in this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    /// Stage clock ceiling; predicates are approximated up to here.
    pub max_stage: Stage,
    /// Largest number the searches will put into any tree (inclusive).
    pub universe_bound: u32,
    /// Most trees any single sequence may collect.
    pub max_trees: usize,
}

impl SearchBudget {
    pub fn new(max_stage: Stage, universe_bound: u32, max_trees: usize) -> Self {
        assert!(max_stage > 0 && max_trees > 0, "budget fields must be positive");
        SearchBudget { max_stage, universe_bound, max_trees }
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_stage: 64, universe_bound: 15, max_trees: 16 }
    }
}

// ---------------------------------------------------------------------------
// Tail-emptiness probe
// ---------------------------------------------------------------------------

/// Outcome of probing for an ever-growing sequence of confirmed sets.
#[derive(Debug, Clone)]
pub enum ProbeOutcome {
    /// A separated sequence of `max_trees` certified chain trees.
    SequenceFound(PhiSequence),
    /// Exhaustive certificate: no subset of the window above `z` (and within
    /// the universe bound) is confirmed by the horizon stage.
    TailEmpty { z: u32 },
    /// The budget could not decide either way (window too wide to scan).
    Exhausted,
}

/// Greedily collect trees of prefixes of confirmed sets, each strictly above
/// the last. Either `max_trees` trees are found, or the scan above the last
/// tree comes up empty at the horizon stage, which is an exhaustive
/// certificate for the tail (`z` is the largest entry of the last tree found,
/// or 0 when none was).
pub fn finseq_probe(phi: &Predicate, universe: SmallSet, budget: &SearchBudget) -> ProbeOutcome {
    let horizon = budget.max_stage;
    let mut seq = PhiSequence::empty();
    let mut z: u32 = 0;
    let mut found_any = false;
    loop {
        if seq.len() >= budget.max_trees {
            return ProbeOutcome::SequenceFound(seq);
        }
        let lo = if found_any { z + 1 } else { 0 };
        let window = universe.intersect(SmallSet::interval(lo, budget.universe_bound + 1));
        if window.len() > WINDOW_SCAN_LIMIT {
            return ProbeOutcome::Exhausted;
        }
        match window.least_subset_where(|f| phi.holds_by(f, horizon)) {
            Some(f) => {
                let chain = FiniteTree::principal_chain(f, universe, 1);
                let tree = PhiTree::certify(chain, phi, horizon)
                    .expect("the chain's terminal range is the confirmed set itself");
                if let Some(m) = f.max() {
                    z = m;
                }
                found_any = true;
                seq.push(tree)
                    .expect("each confirmed set lies strictly above the previous tree");
            }
            None => return ProbeOutcome::TailEmpty { z },
        }
    }
}

// ---------------------------------------------------------------------------
// Pruned-sequence construction
// ---------------------------------------------------------------------------

/// Outcome of building a pruned sequence over a supplied block sequence.
#[derive(Debug, Clone)]
pub enum BuildOutcome {
    Built(PhiSequence),
    /// The `n`-th generated subtree failed to close off within the supplied
    /// prefix of blocks.
    Stuck(usize),
}

/// Build `count` trees, the `n`-th being the subtree generated under `psi`
/// by the blocks of `phiseq` starting at position `Σ_{m<n} height(U_m)`.
/// Each tree must close off (no live frontier) and certify against `psi`
/// within the blocks remaining; otherwise the build is stuck at that index.
pub fn build_psi_sequence(
    phiseq: &PhiSequence,
    psi: &Predicate,
    stage: Stage,
    count: usize,
) -> BuildOutcome {
    let mut out = PhiSequence::empty();
    let mut s = 0usize;
    for n in 0..count {
        let blocks: Vec<&FiniteTree> = phiseq.trees()[s.min(phiseq.len())..]
            .iter()
            .map(|t| &t.tree)
            .collect();
        let cap = blocks.len() as u32;
        let g = generated_subtree(&blocks, psi, stage, cap);
        if !g.alive.is_empty() {
            return BuildOutcome::Stuck(n);
        }
        match PhiTree::certify(g.tree, psi, stage) {
            Ok(t) => {
                s += t.tree.height() as usize;
                out.push(t).expect("blocks above the previous tree keep sequences separated");
            }
            Err(_) => return BuildOutcome::Stuck(n),
        }
    }
    BuildOutcome::Built(out)
}

// ---------------------------------------------------------------------------
// Forests
// ---------------------------------------------------------------------------

/// A finished forest: one separated tree sequence per level, where every
/// tree above level 0 is the generated subtree of a run of blocks from the
/// level below, and the level lengths are trimmed to exactly what the top
/// tree consumes.
#[derive(Debug, Clone)]
pub struct Forest {
    levels: Vec<PhiSequence>,
    /// Stage at which each tree was found (level 0) or closed off (above).
    stages: Vec<Vec<Stage>>,
}

impl Forest {
    pub fn k(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn level(&self, j: u32) -> &PhiSequence {
        &self.levels[j as usize]
    }

    pub fn stage_of(&self, j: u32, n: usize) -> Stage {
        self.stages[j as usize][n]
    }

    /// Offsets `s_j` (one less than the number of trees kept at level `j`;
    /// -1 denotes an empty level).
    pub fn offsets(&self) -> Vec<i64> {
        self.levels.iter().map(|l| l.len() as i64 - 1).collect()
    }

    /// Union of the ranges of every tree at every level.
    pub fn ran(&self) -> SmallSet {
        self.levels
            .iter()
            .fold(SmallSet::empty(), |acc, l| acc.union(l.ran()))
    }

    /// All `(level, tree index, terminal, range)` entries in witness search
    /// order: ascending level, then tree index, then node order.
    pub fn terminal_entries(&self) -> Vec<(u32, usize, Str, SmallSet)> {
        let mut out = Vec::new();
        for (j, level) in self.levels.iter().enumerate() {
            for (n, t) in level.trees().iter().enumerate() {
                for alpha in t.tree.terminals() {
                    let ran = str_ran(&alpha);
                    out.push((j as u32, n, alpha, ran));
                }
            }
        }
        out
    }

    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![format!("forest k={}", self.levels.len())];
        for (j, level) in self.levels.iter().enumerate() {
            for (n, t) in level.trees().iter().enumerate() {
                out.push(format!(
                    "tree-at level={j} index={n} stage={}",
                    self.stages[j][n]
                ));
                out.extend(t.tree.to_lines());
            }
        }
        out.push("endforest".to_string());
        out
    }

    /// Parse the block emitted by [`to_lines`]. Witness maps are not stored;
    /// the caller re-certifies against its predicates if needed.
    pub fn from_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Forest, String> {
        let header = lines.next().ok_or("expected forest header")?.trim();
        let k: usize = header
            .strip_prefix("forest k=")
            .ok_or_else(|| format!("expected `forest k=…`, got {header:?}"))?
            .parse()
            .map_err(|_| format!("bad k in {header:?}"))?;
        let mut levels: Vec<Vec<FiniteTree>> = vec![Vec::new(); k];
        let mut stages: Vec<Vec<Stage>> = vec![Vec::new(); k];
        loop {
            let line = lines.next().ok_or("unterminated forest block")?.trim();
            if line == "endforest" {
                break;
            }
            let rest = line
                .strip_prefix("tree-at ")
                .ok_or_else(|| format!("expected `tree-at …` or `endforest`, got {line:?}"))?;
            let mut level = None;
            let mut index = None;
            let mut stage = None;
            for field in rest.split_whitespace() {
                if let Some(v) = field.strip_prefix("level=") {
                    level = v.parse::<usize>().ok();
                } else if let Some(v) = field.strip_prefix("index=") {
                    index = v.parse::<usize>().ok();
                } else if let Some(v) = field.strip_prefix("stage=") {
                    stage = v.parse::<Stage>().ok();
                }
            }
            let (level, index, stage) = match (level, index, stage) {
                (Some(l), Some(n), Some(s)) if l < k => (l, n, s),
                _ => return Err(format!("bad tree-at line {line:?}")),
            };
            if index != levels[level].len() {
                return Err(format!("tree indices at level {level} out of order"));
            }
            levels[level].push(FiniteTree::from_lines(lines)?);
            stages[level].push(stage);
        }
        // Without predicates, trees enter the sequence with empty witness
        // maps; `check_forest` re-certifies them.
        let mut seqs = Vec::with_capacity(k);
        for lvl in levels {
            let mut seq = PhiSequence::empty();
            for tree in lvl {
                seq.push(PhiTree { tree, witnesses: Default::default() })
                    .map_err(|e| e.to_string())?;
            }
            seqs.push(seq);
        }
        Ok(Forest { levels: seqs, stages })
    }
}

/// Ways a claimed forest can fail re-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForestViolation {
    LevelCount { expected: usize, found: usize },
    NotCertified { level: u32, index: usize, terminal: Str },
    NotSeparated { level: u32 },
    WrongOffset { level: u32, expected: i64, found: i64 },
    NotGenerated { level: u32, index: usize },
    BlocksMissing { level: u32, index: usize },
}

impl fmt::Display for ForestViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForestViolation::LevelCount { expected, found } => {
                write!(f, "expected {expected} levels, found {found}")
            }
            ForestViolation::NotCertified { level, index, terminal } => write!(
                f,
                "tree {index} at level {level} has unconfirmed terminal {}",
                crate::set::str_display(terminal)
            ),
            ForestViolation::NotSeparated { level } => {
                write!(f, "level {level} is not a separated sequence")
            }
            ForestViolation::WrongOffset { level, expected, found } => write!(
                f,
                "level {level} keeps {found} trees where the consumption count gives {expected}"
            ),
            ForestViolation::NotGenerated { level, index } => write!(
                f,
                "tree {index} at level {level} is not the generated subtree of its blocks"
            ),
            ForestViolation::BlocksMissing { level, index } => write!(
                f,
                "tree {index} at level {level} consumes more blocks than the level below has"
            ),
        }
    }
}

impl std::error::Error for ForestViolation {}

/// Independent re-derivation of every forest invariant: each level is a
/// separated sequence of certified trees (at their recorded stages), each
/// tree above level 0 equals the generated subtree of its block run, and the
/// level lengths follow the consumption-count recurrence from the top down.
pub fn check_forest(forest: &Forest, phis: &[Predicate]) -> Result<(), ForestViolation> {
    let k = phis.len();
    if forest.levels.len() != k {
        return Err(ForestViolation::LevelCount { expected: k, found: forest.levels.len() });
    }
    for (j, phi) in phis.iter().enumerate() {
        let level = &forest.levels[j];
        // Separation (all pairs).
        for hi in 1..level.len() {
            for lo in 0..hi {
                if !tree_less(&level.trees()[lo].tree, &level.trees()[hi].tree) {
                    return Err(ForestViolation::NotSeparated { level: j as u32 });
                }
            }
        }
        // Certification at recorded stages.
        for (n, t) in level.trees().iter().enumerate() {
            let stage = forest.stages[j][n];
            if let Err(term) = PhiTree::certify(t.tree.clone(), phi, stage) {
                return Err(ForestViolation::NotCertified {
                    level: j as u32,
                    index: n,
                    terminal: term,
                });
            }
        }
    }
    // Offsets: the top level keeps one tree; below, exactly the blocks the
    // level above consumes.
    let mut expected = 1i64;
    for j in (0..k).rev() {
        let found = forest.levels[j].len() as i64;
        if found != expected {
            return Err(ForestViolation::WrongOffset {
                level: j as u32,
                expected: expected - 1,
                found: found - 1,
            });
        }
        if j > 0 {
            expected = forest.levels[j]
                .trees()
                .iter()
                .map(|t| t.tree.height() as i64)
                .sum();
        }
    }
    // Generating relation.
    for (j, phi) in phis.iter().enumerate().skip(1) {
        let mut s = 0usize;
        for (n, t) in forest.levels[j].trees().iter().enumerate() {
            let h = t.tree.height() as usize;
            if s + h > forest.levels[j - 1].len() {
                return Err(ForestViolation::BlocksMissing { level: j as u32, index: n });
            }
            let blocks: Vec<&FiniteTree> = forest.levels[j - 1].trees()[s..s + h]
                .iter()
                .map(|b| &b.tree)
                .collect();
            let g = generated_subtree(&blocks, phi, forest.stages[j][n], h as u32);
            let same = g.tree.node_count() == t.tree.node_count()
                && g.tree.nodes().all(|nd| t.tree.contains(nd));
            if !same || !g.alive.is_empty() {
                return Err(ForestViolation::NotGenerated { level: j as u32, index: n });
            }
            s += h;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Canonical search
// ---------------------------------------------------------------------------

/// Progress events emitted by the canonical search, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchEvent {
    /// A tree joined the sequence at `level` as entry `index`.
    TreeFound { stage: Stage, level: u32, index: usize, height: u32 },
    /// The pending subtree at `level` (generated from blocks starting at
    /// `start` on the level below) was allotted its `alloted`-th block.
    LevelExtended { stage: Stage, level: u32, start: usize, allotted: usize },
}

/// Why a canonical search gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExhaustReason {
    /// Exhaustive certificate at the horizon: no confirmed set above `z`
    /// remains in the universe, so the base sequence cannot grow.
    TailEmpty { z: u32 },
    /// The base sequence hit the tree cap with the forest still incomplete:
    /// some pending subtree refused to close off.
    MaxTrees,
    /// The stage clock ran out first.
    StageHorizon,
    /// A scan window exceeded the feasible subset-enumeration width.
    ScanTooWide,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchStatus {
    Running,
    Done,
    Exhausted(ExhaustReason),
}

/// Result of running a canonical search to completion.
#[derive(Debug, Clone)]
pub enum SearchOutcome {
    Forest(Forest),
    Exhausted {
        reason: ExhaustReason,
        /// Untrimmed levels built so far, for inspection and bridging.
        partial: Forest,
        events: Vec<SearchEvent>,
    },
}

struct LevelState {
    seq: PhiSequence,
    stages: Vec<Stage>,
    /// Levels above 0: first block index of the pending subtree.
    pending_start: usize,
    /// Levels above 0: blocks allotted to the pending subtree so far.
    pending_allotted: usize,
    /// Level 0 only: largest entry of the last tree found.
    z: u32,
    found_any: bool,
}

impl LevelState {
    fn new() -> Self {
        LevelState {
            seq: PhiSequence::empty(),
            stages: Vec::new(),
            pending_start: 0,
            pending_allotted: 0,
            z: 0,
            found_any: false,
        }
    }
}

/// The canonical forest search as a resumable stage machine.
///
/// Each `step` advances the stage clock once: the base level scans the part
/// of the universe enumerated so far for one more confirmed set (taken as a
/// chain tree), and every level above feeds banked blocks into its pending
/// generated subtree, promoting it into the level's sequence when it closes
/// off. The search completes when the top level lands its first tree; the
/// kept prefix of each level is then trimmed to what the top tree consumed.
pub struct CanonicalSearch {
    phis: Vec<Predicate>,
    universe: SmallSet,
    budget: SearchBudget,
    stage: Stage,
    levels: Vec<LevelState>,
    events: Vec<SearchEvent>,
    status: SearchStatus,
}

impl CanonicalSearch {
    pub fn new(phis: Vec<Predicate>, universe: SmallSet, budget: SearchBudget) -> Self {
        assert!(!phis.is_empty(), "need at least one predicate");
        let levels = (0..phis.len()).map(|_| LevelState::new()).collect();
        CanonicalSearch {
            phis,
            universe,
            budget,
            stage: 0,
            levels,
            events: Vec::new(),
            status: SearchStatus::Running,
        }
    }

    pub fn status(&self) -> &SearchStatus {
        &self.status
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn events(&self) -> &[SearchEvent] {
        &self.events
    }

    /// Number of trees the sequence at `level` holds so far.
    pub fn trees_found(&self, level: u32) -> usize {
        self.levels[level as usize].seq.len()
    }

    /// Trees found at `level` strictly after `since`.
    pub fn trees_found_since(&self, level: u32, since: Stage) -> usize {
        self.events
            .iter()
            .filter(|e| {
                matches!(e, SearchEvent::TreeFound { stage, level: l, .. }
                    if *l == level && *stage > since)
            })
            .count()
    }

    /// Lower edge of the base level's next scan window.
    pub fn level0_lo(&self) -> u32 {
        if self.levels[0].found_any {
            self.levels[0].z + 1
        } else {
            0
        }
    }

    /// Block window of the pending subtree at `level` (levels above 0):
    /// first block index into the level below, and blocks allotted so far.
    pub fn pending_window(&self, level: u32) -> (usize, usize) {
        let st = &self.levels[level as usize];
        (st.pending_start, st.pending_allotted)
    }

    /// Advance one stage. No-op once the search is decided.
    pub fn step(&mut self) -> &SearchStatus {
        if self.status != SearchStatus::Running {
            return &self.status;
        }
        self.stage += 1;
        let t = self.stage;
        if t > self.budget.max_stage {
            let reason = if self.levels[0].seq.len() >= self.budget.max_trees {
                ExhaustReason::MaxTrees
            } else {
                ExhaustReason::StageHorizon
            };
            self.status = SearchStatus::Exhausted(reason);
            return &self.status;
        }

        // Base level: scan the enumerated part of the window for one more
        // confirmed set.
        let hi = self.budget.universe_bound + 1;
        let full_window = {
            let lo = if self.levels[0].found_any { self.levels[0].z + 1 } else { 0 };
            self.universe.intersect(SmallSet::interval(lo, hi))
        };
        let paced_window = full_window.intersect(SmallSet::below(t));
        if paced_window.len() > WINDOW_SCAN_LIMIT {
            self.status = SearchStatus::Exhausted(ExhaustReason::ScanTooWide);
            return &self.status;
        }
        if self.levels[0].seq.len() < self.budget.max_trees {
            match paced_window.least_subset_where(|f| self.phis[0].holds_by(f, t)) {
                Some(f) => {
                    let chain = FiniteTree::principal_chain(f, self.universe, 1);
                    let tree = PhiTree::certify(chain, &self.phis[0], t)
                        .expect("scan found a confirmed subset of the chain's range");
                    if let Some(m) = f.max() {
                        self.levels[0].z = m;
                    }
                    self.levels[0].found_any = true;
                    let index = self.levels[0].seq.len();
                    self.levels[0]
                        .seq
                        .push(tree)
                        .expect("window lies above every earlier tree");
                    self.levels[0].stages.push(t);
                    self.events.push(SearchEvent::TreeFound {
                        stage: t,
                        level: 0,
                        index,
                        height: f.len(),
                    });
                }
                None => {
                    // Only a full, unpaced window scan at the horizon
                    // certifies emptiness.
                    if t == self.budget.max_stage && paced_window == full_window {
                        self.status =
                            SearchStatus::Exhausted(ExhaustReason::TailEmpty { z: self.levels[0].z });
                        return &self.status;
                    }
                }
            }
        }

        // Upper levels: feed banked blocks, promote at most one closed-off
        // subtree per level per stage.
        for j in 1..self.phis.len() {
            loop {
                let (start, allotted) =
                    (self.levels[j].pending_start, self.levels[j].pending_allotted);
                let below = &self.levels[j - 1].seq;
                let blocks: Vec<&FiniteTree> = below.trees()[start.min(below.len())
                    ..(start + allotted).min(below.len())]
                    .iter()
                    .map(|b| &b.tree)
                    .collect();
                let g = generated_subtree(&blocks, &self.phis[j], t, allotted as u32);
                if g.alive.is_empty() {
                    // A starved terminal (empty block range) cannot
                    // certify; wait for the pruning front to advance.
                    if let Ok(tree) = PhiTree::certify(g.tree, &self.phis[j], t) {
                        let h = tree.tree.height() as usize;
                        let index = self.levels[j].seq.len();
                        self.levels[j]
                            .seq
                            .push(tree)
                            .expect("blocks above earlier trees keep levels separated");
                        self.levels[j].stages.push(t);
                        self.levels[j].pending_start = start + h;
                        self.levels[j].pending_allotted = 0;
                        self.events.push(SearchEvent::TreeFound {
                            stage: t,
                            level: j as u32,
                            index,
                            height: h as u32,
                        });
                    }
                    break;
                }
                if start + allotted < below.len() {
                    self.levels[j].pending_allotted += 1;
                    self.events.push(SearchEvent::LevelExtended {
                        stage: t,
                        level: j as u32,
                        start,
                        allotted: allotted + 1,
                    });
                } else {
                    break;
                }
            }
        }

        // Completion: the top level needs exactly one tree.
        if !self.levels[self.phis.len() - 1].seq.is_empty() {
            self.status = SearchStatus::Done;
        }
        &self.status
    }

    /// Step until decided.
    pub fn run_to_end(&mut self) {
        while self.status == SearchStatus::Running {
            self.step();
        }
    }

    /// The completed forest once the search is done, trimmed to what the
    /// top tree consumed; none while running or after exhaustion.
    pub fn found_forest(&self) -> Option<Forest> {
        match self.status {
            SearchStatus::Done => Some(self.trimmed()),
            _ => None,
        }
    }

    /// Snapshot of the levels built so far, untrimmed.
    pub fn partial_forest(&self) -> Forest {
        Forest {
            levels: self.levels.iter().map(|l| l.seq.clone()).collect(),
            stages: self.levels.iter().map(|l| l.stages.clone()).collect(),
        }
    }

    /// Trimmed forest: the top level keeps one tree, and each level below
    /// keeps exactly the blocks the level above consumes.
    fn trimmed(&self) -> Forest {
        let k = self.phis.len();
        let mut keep = vec![0usize; k];
        keep[k - 1] = 1;
        for j in (0..k - 1).rev() {
            keep[j] = self.levels[j + 1].seq.trees()[..keep[j + 1]]
                .iter()
                .map(|t| t.tree.height() as usize)
                .sum();
        }
        let mut levels = Vec::with_capacity(k);
        let mut stages = Vec::with_capacity(k);
        for (j, keep_j) in keep.iter().enumerate() {
            let trees = self.levels[j].seq.trees()[..*keep_j].to_vec();
            levels.push(PhiSequence::new(trees).expect("prefix of a separated sequence"));
            stages.push(self.levels[j].stages[..*keep_j].to_vec());
        }
        Forest { levels, stages }
    }

    pub fn into_outcome(mut self) -> SearchOutcome {
        self.run_to_end();
        match &self.status {
            SearchStatus::Done => SearchOutcome::Forest(self.trimmed()),
            SearchStatus::Exhausted(reason) => SearchOutcome::Exhausted {
                reason: *reason,
                partial: self.partial_forest(),
                events: self.events,
            },
            SearchStatus::Running => unreachable!("run_to_end decides the status"),
        }
    }
}

/// Run the canonical search to completion in one call.
pub fn canonical_search(
    phis: Vec<Predicate>,
    universe: SmallSet,
    budget: SearchBudget,
) -> SearchOutcome {
    CanonicalSearch::new(phis, universe, budget).into_outcome()
}

// ---------------------------------------------------------------------------
// Monochromatic terminal extraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoWitness;

impl fmt::Display for NoWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no monochromatic terminal; the forest invariant must have been violated")
    }
}

impl std::error::Error for NoWitness {}

/// Find a terminal whose range is monochromatic in its own level's color:
/// the first `(j, n, α)` in ascending level, tree index, then node order
/// with `l(x) = j` for every `x ∈ ran(α)`. On any valid forest this search
/// cannot fail.
pub fn combcore_witness(
    forest: &Forest,
    l: impl Fn(u32) -> u32,
) -> Result<(u32, usize, Str), NoWitness> {
    for j in 0..forest.k() {
        for (n, t) in forest.level(j).trees().iter().enumerate() {
            for alpha in t.tree.terminals() {
                if str_ran(&alpha).iter().all(|x| l(x) == j) {
                    return Ok((j, n, alpha));
                }
            }
        }
    }
    Err(NoWitness)
}
