//! Stagewise enumerations of trees and uniform sequences of attempts.
//!
//! A [`TreeEnumeration`] reveals a tree of increasing strings one level at a
//! time: level `x` is a finite, nonempty set of strings of length `x`, each a
//! one-point extension of a string on the level before, and level 0 is the
//! bare root. Every committed level carries the stage at which it appeared,
//! so "defined by stage s" questions make sense; an enumeration may also be
//! closed at some stage, after which it commits nothing further.
//!
//! A [`UniformSequence`] strings together successive attempts: at most the
//! last member is still open, each member starts no earlier than its
//! predecessor closed, and on any level committed by two members the earlier
//! member committed it strictly first. The index of a member bounds its
//! stages from below: member `l` commits only at stages above `l`.
//!
//! [`from_canonical_trace`] replays a canonical forest search and records the
//! attempts it runs at one chosen level — window segments for the base
//! level, pending generated subtrees for the levels above — as a uniform
//! sequence, which is how search traces are handed to consumers that work
//! with enumerations rather than forests.

use std::collections::BTreeSet;
use std::fmt;

use crate::fincomb::{generated_subtree, FiniteTree, Predicate};
use crate::forest::{
    CanonicalSearch, ExhaustReason, SearchBudget, SearchOutcome, SearchStatus,
};
use crate::set::{is_increasing, str_display, str_parse, SmallSet, Str};
use crate::Stage;

/// Violations of the enumeration laws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnumError {
    /// Level 0 is not exactly the bare root.
    RootNotBare,
    /// A committed level above 0 holds no strings.
    EmptyLevel { x: usize },
    /// A string's length differs from its level.
    LengthMismatch { x: usize },
    /// A string is not strictly increasing.
    NotIncreasing { x: usize },
    /// A string does not extend anything on the level below.
    Orphan { x: usize },
    /// A level was committed at an earlier stage than the level below it.
    StageRegress { x: usize },
    /// Member `member` committed level `x` at a stage not above `member`.
    StageBound { member: usize, x: usize },
    /// Members `earlier < later` both committed level `x`, but not in order.
    MemberOrder { earlier: usize, later: usize, x: usize },
    /// The enumeration closed before its last commitment.
    ClosedBeforeCommit,
    /// An open member is followed by another member.
    OpenNotLast { member: usize },
    /// A member committed nothing at all.
    EmptyMember { member: usize },
    /// A member started before its predecessor closed.
    StartBeforeClose { member: usize },
    /// Builder: no open attempt to commit into or close.
    NoCurrent,
    /// Builder: an attempt is still open.
    AttemptStillOpen,
    /// A structural fault inside one member of a sequence.
    InMember { member: usize, inner: Box<EnumError> },
    /// Text form could not be parsed.
    Parse(String),
}

impl fmt::Display for EnumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnumError::RootNotBare => write!(f, "level 0 must be exactly the bare root"),
            EnumError::EmptyLevel { x } => write!(f, "committed level {x} holds no strings"),
            EnumError::LengthMismatch { x } => {
                write!(f, "level {x} holds a string of the wrong length")
            }
            EnumError::NotIncreasing { x } => {
                write!(f, "level {x} holds a non-increasing string")
            }
            EnumError::Orphan { x } => {
                write!(f, "level {x} holds a string extending nothing below")
            }
            EnumError::StageRegress { x } => {
                write!(f, "level {x} committed before the level below it")
            }
            EnumError::StageBound { member, x } => {
                write!(f, "member {member} committed level {x} at a stage not above {member}")
            }
            EnumError::MemberOrder { earlier, later, x } => write!(
                f,
                "members {earlier} and {later} committed level {x} out of order"
            ),
            EnumError::ClosedBeforeCommit => {
                write!(f, "enumeration closed before its last commitment")
            }
            EnumError::OpenNotLast { member } => {
                write!(f, "member {member} is open but not last")
            }
            EnumError::EmptyMember { member } => {
                write!(f, "member {member} committed nothing")
            }
            EnumError::StartBeforeClose { member } => {
                write!(f, "member {member} started before its predecessor closed")
            }
            EnumError::NoCurrent => write!(f, "no open attempt"),
            EnumError::AttemptStillOpen => write!(f, "an attempt is still open"),
            EnumError::InMember { member, inner } => {
                write!(f, "member {member}: {inner}")
            }
            EnumError::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for EnumError {}

/// A tree revealed level by level, each level stamped with its commit stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEnumeration {
    /// Index `x`: the strings of length `x`, and the stage they appeared at.
    levels: Vec<(BTreeSet<Str>, Stage)>,
    /// Stage at which the enumeration stopped committing, if it ever did.
    closed: Option<Stage>,
}

impl TreeEnumeration {
    pub fn new(
        levels: Vec<(BTreeSet<Str>, Stage)>,
        closed: Option<Stage>,
    ) -> Result<Self, EnumError> {
        let e = TreeEnumeration { levels, closed };
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<(), EnumError> {
        for (x, (strings, stage)) in self.levels.iter().enumerate() {
            if x == 0 {
                let bare: BTreeSet<Str> = std::iter::once(Vec::new()).collect();
                if *strings != bare {
                    return Err(EnumError::RootNotBare);
                }
                continue;
            }
            if strings.is_empty() {
                return Err(EnumError::EmptyLevel { x });
            }
            let (below, below_stage) = &self.levels[x - 1];
            if *stage < *below_stage {
                return Err(EnumError::StageRegress { x });
            }
            for s in strings {
                if s.len() != x {
                    return Err(EnumError::LengthMismatch { x });
                }
                if !is_increasing(s) {
                    return Err(EnumError::NotIncreasing { x });
                }
                if !below.contains(&s[..x - 1]) {
                    return Err(EnumError::Orphan { x });
                }
            }
        }
        if let (Some(cs), Some((_, last))) = (self.closed, self.levels.last()) {
            if cs < *last {
                return Err(EnumError::ClosedBeforeCommit);
            }
        }
        Ok(())
    }

    /// Number of committed levels (one more than the deepest level index).
    pub fn committed_count(&self) -> usize {
        self.levels.len()
    }

    /// The strings at level `x`, if committed.
    pub fn level(&self, x: u32) -> Option<&BTreeSet<Str>> {
        self.levels.get(x as usize).map(|(s, _)| s)
    }

    /// Stage at which level `x` was committed.
    pub fn stage_of(&self, x: u32) -> Option<Stage> {
        self.levels.get(x as usize).map(|(_, s)| *s)
    }

    /// The strings at level `x` if that level was committed by stage `s`.
    pub fn level_by(&self, x: u32, s: Stage) -> Option<&BTreeSet<Str>> {
        match self.levels.get(x as usize) {
            Some((strings, stage)) if *stage <= s => Some(strings),
            _ => None,
        }
    }

    /// Largest level index committed by stage `s`.
    pub fn top_committed_by(&self, s: Stage) -> Option<u32> {
        self.levels
            .iter()
            .rposition(|(_, stage)| *stage <= s)
            .map(|x| x as u32)
    }

    /// The deepest level committed by stage `s`, with its index.
    pub fn top_level_by(&self, s: Stage) -> Option<(u32, &BTreeSet<Str>)> {
        let x = self.top_committed_by(s)?;
        Some((x, self.level(x).expect("committed level present")))
    }

    pub fn is_closed(&self) -> bool {
        self.closed.is_some()
    }

    pub fn closed_stage(&self) -> Option<Stage> {
        self.closed
    }

    /// All committed levels with their stages, in depth order.
    pub fn levels(&self) -> impl Iterator<Item = (&BTreeSet<Str>, Stage)> {
        self.levels.iter().map(|(s, t)| (s, *t))
    }
}

/// A string `sigma` looks extendible on `u` at stage `s` when the deepest
/// level committed by `s` holds an extension of it. With nothing committed
/// by `s` nothing looks extendible.
pub fn looks_extendible(u: &TreeEnumeration, sigma: &[u32], s: Stage) -> bool {
    match u.top_level_by(s) {
        None => false,
        Some((_, strings)) => strings
            .iter()
            .any(|tau| tau.len() >= sigma.len() && tau[..sigma.len()] == *sigma),
    }
}

/// Successive enumeration attempts with the ordering discipline between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniformSequence {
    members: Vec<TreeEnumeration>,
}

impl UniformSequence {
    pub fn new(members: Vec<TreeEnumeration>) -> Result<Self, EnumError> {
        let seq = UniformSequence { members };
        seq.validate()?;
        Ok(seq)
    }

    fn validate(&self) -> Result<(), EnumError> {
        for (l, m) in self.members.iter().enumerate() {
            m.validate().map_err(|inner| EnumError::InMember {
                member: l,
                inner: Box::new(inner),
            })?;
            if m.committed_count() == 0 {
                return Err(EnumError::EmptyMember { member: l });
            }
            // Member index bounds every commit stage from below.
            for (x, (_, stage)) in m.levels.iter().enumerate() {
                if *stage <= l as Stage {
                    return Err(EnumError::StageBound { member: l, x });
                }
            }
            if !m.is_closed() && l + 1 != self.members.len() {
                return Err(EnumError::OpenNotLast { member: l });
            }
            if l > 0 {
                let prev = &self.members[l - 1];
                // A member starts no earlier than its predecessor closed.
                let start = m.stage_of(0).expect("nonempty member");
                match prev.closed_stage() {
                    Some(cs) if cs <= start => {}
                    _ => return Err(EnumError::StartBeforeClose { member: l }),
                }
                // Shared levels were committed strictly earlier by the
                // earlier member.
                for earlier in 0..l {
                    let em = &self.members[earlier];
                    for x in 0..m.committed_count().min(em.committed_count()) {
                        let a = em.stage_of(x as u32).expect("committed");
                        let b = m.stage_of(x as u32).expect("committed");
                        if a >= b {
                            return Err(EnumError::MemberOrder {
                                earlier,
                                later: l,
                                x,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn members(&self) -> &[TreeEnumeration] {
        &self.members
    }

    pub fn member(&self, l: usize) -> Option<&TreeEnumeration> {
        self.members.get(l)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Event-log text form: one line per committed level, `close` lines for
    /// closed members, bracketed by a header and `end`.
    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![format!("useq members={}", self.members.len())];
        for (l, m) in self.members.iter().enumerate() {
            for (x, (strings, stage)) in m.levels.iter().enumerate() {
                let body = strings
                    .iter()
                    .map(|s| str_display(s))
                    .collect::<Vec<_>>()
                    .join(" ");
                out.push(format!("{l} ; {x} ; {stage} ; {body}"));
            }
            if let Some(cs) = m.closed {
                out.push(format!("{l} ; close ; {cs} ;"));
            }
        }
        out.push("end".to_string());
        out
    }

    /// Parse the form produced by [`UniformSequence::to_lines`].
    pub fn from_lines(lines: &[String]) -> Result<Self, EnumError> {
        let bad = |msg: String| EnumError::Parse(msg);
        let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
        let header = it.next().ok_or_else(|| bad("empty input".into()))?;
        let count: usize = header
            .strip_prefix("useq members=")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad(format!("bad header {header:?}")))?;
        type RawMember = (Vec<(BTreeSet<Str>, Stage)>, Option<Stage>);
        let mut raw: Vec<RawMember> = vec![(Vec::new(), None); count];
        let mut saw_end = false;
        for line in it {
            if line == "end" {
                saw_end = true;
                break;
            }
            let parts: Vec<&str> = line.splitn(4, ';').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(bad(format!("bad row {line:?}")));
            }
            let l: usize = parts[0]
                .parse()
                .map_err(|_| bad(format!("bad member index {:?}", parts[0])))?;
            if l >= count {
                return Err(bad(format!("member index {l} out of range")));
            }
            let stage: Stage = parts[2]
                .parse()
                .map_err(|_| bad(format!("bad stage {:?}", parts[2])))?;
            if parts[1] == "close" {
                if raw[l].1.is_some() {
                    return Err(bad(format!("member {l} closed twice")));
                }
                raw[l].1 = Some(stage);
                continue;
            }
            let x: usize = parts[1]
                .parse()
                .map_err(|_| bad(format!("bad level index {:?}", parts[1])))?;
            if x != raw[l].0.len() {
                return Err(bad(format!("member {l} level {x} out of order")));
            }
            if raw[l].1.is_some() {
                return Err(bad(format!("member {l} commits after closing")));
            }
            let mut strings = BTreeSet::new();
            for tok in parts[3].split_whitespace() {
                strings.insert(str_parse(tok).map_err(bad)?);
            }
            raw[l].0.push((strings, stage));
        }
        if !saw_end {
            return Err(bad("missing end line".into()));
        }
        let members = raw
            .into_iter()
            .map(|(levels, closed)| TreeEnumeration { levels, closed })
            .collect();
        UniformSequence::new(members)
    }
}

/// Member `l` looks infinite at stage `s` when it has committed something by
/// `s` while no later member has started by `s`.
pub fn looks_infinite(seq: &UniformSequence, l: usize, s: Stage) -> bool {
    let Some(u) = seq.member(l) else {
        return false;
    };
    if u.top_committed_by(s).is_none() {
        return false;
    }
    seq.members[l + 1..]
        .iter()
        .all(|v| v.top_committed_by(s).is_none())
}

/// Incremental constructor for a [`UniformSequence`], enforcing the
/// enumeration laws at every commitment.
#[derive(Debug, Default)]
pub struct UniformSequenceBuilder {
    members: Vec<TreeEnumeration>,
}

impl UniformSequenceBuilder {
    pub fn new() -> Self {
        UniformSequenceBuilder {
            members: Vec::new(),
        }
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// Whether the last member is still accepting commitments.
    pub fn has_open(&self) -> bool {
        self.members.last().is_some_and(|m| !m.is_closed())
    }

    /// Committed level count of the open member.
    pub fn open_depth(&self) -> Option<usize> {
        match self.members.last() {
            Some(m) if !m.is_closed() => Some(m.committed_count()),
            _ => None,
        }
    }

    /// Depth and strings of the open member's deepest committed level.
    pub fn open_top(&self) -> Option<(u32, &BTreeSet<Str>)> {
        match self.members.last() {
            Some(m) if !m.is_closed() => m.top_level_by(Stage::MAX),
            _ => None,
        }
    }

    /// Open the next attempt, committing its bare root at `stage`.
    pub fn start_member(&mut self, stage: Stage) -> Result<(), EnumError> {
        if self.has_open() {
            return Err(EnumError::AttemptStillOpen);
        }
        let l = self.members.len();
        if stage <= l as Stage {
            return Err(EnumError::StageBound { member: l, x: 0 });
        }
        if let Some(prev) = self.members.last() {
            let cs = prev.closed_stage().expect("previous member closed");
            if cs > stage {
                return Err(EnumError::StartBeforeClose { member: l });
            }
        }
        self.members.push(TreeEnumeration {
            levels: Vec::new(),
            closed: None,
        });
        self.commit_level(std::iter::once(Vec::new()).collect(), stage)
    }

    /// Commit the next level of the open attempt.
    pub fn commit_level(
        &mut self,
        strings: BTreeSet<Str>,
        stage: Stage,
    ) -> Result<(), EnumError> {
        if !self.has_open() {
            return Err(EnumError::NoCurrent);
        }
        let l = self.members.len() - 1;
        let x = self.members[l].committed_count();
        if stage <= l as Stage {
            return Err(EnumError::StageBound { member: l, x });
        }
        for earlier in 0..l {
            if let Some(a) = self.members[earlier].stage_of(x as u32) {
                if a >= stage {
                    return Err(EnumError::MemberOrder {
                        earlier,
                        later: l,
                        x,
                    });
                }
            }
        }
        let m = &mut self.members[l];
        m.levels.push((strings, stage));
        if let Err(e) = m.validate() {
            m.levels.pop();
            return Err(e);
        }
        if x > 0 && m.stage_of(x as u32 - 1).expect("below committed") > stage {
            m.levels.pop();
            return Err(EnumError::StageRegress { x });
        }
        Ok(())
    }

    /// Close the open attempt at `stage`.
    pub fn close(&mut self, stage: Stage) -> Result<(), EnumError> {
        if !self.has_open() {
            return Err(EnumError::NoCurrent);
        }
        let m = self.members.last_mut().expect("open member");
        if let Some((_, last)) = m.levels.last() {
            if stage < *last {
                return Err(EnumError::ClosedBeforeCommit);
            }
        }
        m.closed = Some(stage);
        Ok(())
    }

    pub fn finish(self) -> Result<UniformSequence, EnumError> {
        UniformSequence::new(self.members)
    }
}

/// The everywhere-defined single-attempt sequence: one open member whose
/// level `x` holds the first `x` points of the ambient order, committed at
/// stage `x + 1`.
pub fn trivial_sequence(depth: u32) -> UniformSequence {
    let mut b = UniformSequenceBuilder::new();
    b.start_member(1).expect("fresh builder accepts the root");
    for x in 1..=depth {
        let s: Str = (0..x).collect();
        b.commit_level(std::iter::once(s).collect(), x + 1)
            .expect("segment extends the one below");
    }
    b.finish().expect("single growing attempt is lawful")
}

/// Replay a canonical forest search over `phis` and record the attempts it
/// runs at `level` as a uniform sequence.
///
/// At the base level each attempt scans longer and longer segments of the
/// window left above the previously confirmed set, so its enumeration
/// commits those segments as a single lengthening path; the attempt closes
/// when the scan confirms a set. At levels above, each attempt grows the
/// pending generated subtree block by block, committing each newly built
/// level, and closes when the subtree closes off into a certified tree.
/// Whatever attempt is running when the search stops is left open. Requires
/// the predicates' confirmations to be monotone in the stage, as every
/// predicate built by [`crate::fincomb::parse_predicate`] is.
pub fn from_canonical_trace(
    phis: Vec<Predicate>,
    universe: SmallSet,
    budget: SearchBudget,
    level: u32,
) -> Result<(UniformSequence, SearchOutcome), EnumError> {
    assert!(
        (level as usize) < phis.len(),
        "level {level} outside the family of {} predicates",
        phis.len()
    );
    let phi = phis[level as usize].clone();
    let max_trees = budget.max_trees;
    let bound = budget.universe_bound;
    let mut search = CanonicalSearch::new(phis, universe, budget);
    let mut b = UniformSequenceBuilder::new();
    while *search.status() == SearchStatus::Running {
        let found_before = search.trees_found(level);
        let lo_before = search.level0_lo();
        search.step();
        let t = search.stage();
        match search.status() {
            // An empty-tail verdict is reached only after a full scan at
            // this stage, so the tick's view still gets recorded.
            SearchStatus::Exhausted(ExhaustReason::TailEmpty { .. }) => {}
            // Horizon and width aborts happen before any work at this stage.
            SearchStatus::Exhausted(_) => break,
            _ => {}
        }
        let promoted = search.trees_found(level) > found_before;
        if level == 0 {
            if found_before >= max_trees {
                continue;
            }
            if !b.has_open() {
                b.start_member(t)?;
            }
            let seg = universe
                .intersect(SmallSet::interval(lo_before, bound + 1))
                .intersect(SmallSet::below(t))
                .to_vec();
            let have = b.open_depth().expect("attempt open");
            for x in have..=seg.len() {
                b.commit_level(std::iter::once(seg[..x].to_vec()).collect(), t)?;
            }
            if promoted {
                b.close(t)?;
            }
        } else if promoted {
            // The pending subtree closed off this stage; its certified form
            // carries the final levels.
            let forest = search.partial_forest();
            let tree = &forest.level(level).trees()[found_before].tree;
            if !b.has_open() {
                b.start_member(t)?;
            }
            let have = b.open_depth().expect("attempt open") as u32;
            for x in have..=tree.height() {
                b.commit_level(tree.nodes_at_level(x).into_iter().collect(), t)?;
            }
            b.close(t)?;
        } else {
            let (start, allotted) = search.pending_window(level);
            let forest = search.partial_forest();
            let below = forest.level(level - 1).trees();
            let lo = start.min(below.len());
            let hi = (start + allotted).min(below.len());
            let blocks: Vec<&FiniteTree> = below[lo..hi].iter().map(|p| &p.tree).collect();
            let g = generated_subtree(&blocks, &phi, t, allotted as u32);
            if !b.has_open() {
                b.start_member(t)?;
            }
            let have = b.open_depth().expect("attempt open") as u32;
            for x in have..=g.tree.height() {
                b.commit_level(g.tree.nodes_at_level(x).into_iter().collect(), t)?;
            }
        }
    }
    Ok((b.finish()?, search.into_outcome()))
}
