//! Forcing with finite families of binary columns carrying limit locks.
//!
//! A condition is a finite family of equal-length binary strings (columns),
//! each column optionally locked to a constant tail. Conditions order by
//! columnwise prefix extension with locks kept verbatim; a lock pins every
//! later bit of its column, so a locked column has a forced limit.
//!
//! On top of the poset sit three engines:
//!
//! * a **forcing surrogate** for table functionals over the family join —
//!   a value is forced exactly when the bits the table would read are
//!   already determined and every earlier table row is already refuted, so
//!   forced values persist under extension;
//! * **witness trees**: the tree of increasing strings over a reservoir
//!   none of whose proper prefixes admits a `(F, w)` witness for a table,
//!   labeled bottom-up with the least witness input or `∞`, then thinned to
//!   a subtree `T₀` in which every internal node keeps at least `θ`
//!   children;
//! * a **requirement ledger** driven stage by stage: `Q` stages grow both
//!   limit-color families of a pair table, `R` stages walk a witness tree
//!   to diagonalize an extraction table, and `P` stages meet caller-supplied
//!   density probes. Every stage re-checks the ledger invariants and reports
//!   honestly when a search is blocked or stalls at this scale.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::fincomb::{FiniteTree, TreeError};
use crate::functional::{eval_on_set, TableFunctional};
use crate::set::{pair, str_display, str_ran, unpair, SmallSet, Str};
use crate::Stage;

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CError {
    /// Columns of unequal length.
    Ragged,
    /// A column entry that is neither 0 nor 1.
    BadBit { column: usize, x: u32, v: u8 },
    /// A locked column whose stored tail disagrees with its lock.
    LockBroken { column: usize, x: u32 },
    /// The lock table must cover exactly the columns.
    LockCount { columns: usize, locks: usize },
    /// A condition needs at least one column.
    NoColumns,
    /// The requested object does not fit the fixed word size.
    ScaleBound { what: String },
    /// Witness-tree construction failed structurally.
    Tree(TreeError),
    /// A node recorded as witnessed admits no witness after all: the tree
    /// builder and the labeler disagree.
    UnlabelableTerminal { node: Str },
    /// The extension-search budget ran out before the stage settled.
    BudgetExhausted { what: String },
}

impl fmt::Display for CError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CError::Ragged => write!(f, "columns have unequal lengths"),
            CError::BadBit { column, x, v } => {
                write!(f, "column {column} holds {v} at position {x}; bits must be 0 or 1")
            }
            CError::LockBroken { column, x } => {
                write!(f, "column {column} disagrees with its lock at position {x}")
            }
            CError::LockCount { columns, locks } => {
                write!(f, "{columns} columns but {locks} lock entries")
            }
            CError::NoColumns => write!(f, "a condition needs at least one column"),
            CError::ScaleBound { what } => write!(f, "out of scale: {what}"),
            CError::Tree(e) => write!(f, "witness tree: {e}"),
            CError::UnlabelableTerminal { node } => write!(
                f,
                "node {} is marked witnessed but admits no witness",
                str_display(node)
            ),
            CError::BudgetExhausted { what } => write!(f, "budget exhausted during {what}"),
        }
    }
}

impl std::error::Error for CError {}

impl From<TreeError> for CError {
    fn from(e: TreeError) -> Self {
        CError::Tree(e)
    }
}

// ---------------------------------------------------------------------------
// Conditions

/// Commitment attached to one column: `Locked { i, k }` pins every bit at
/// position `≥ k` to `i`; `Unlocked` leaves the tail free. Locks are chosen
/// when a column is created and never change along an extension chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lock {
    Locked { i: u8, k: u32 },
    Unlocked,
}

impl fmt::Display for Lock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lock::Locked { i, k } => write!(f, "!{i}@{k}"),
            Lock::Unlocked => write!(f, "~"),
        }
    }
}

/// A forcing condition: a nonempty family of equal-length binary columns,
/// one lock per column. `Locked { i, k }` requires `column[x] = i` for every
/// stored position `x ≥ k` and commits all future positions the same way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CCondition {
    columns: Vec<Vec<u8>>,
    locks: Vec<Lock>,
}

impl CCondition {
    pub fn new(columns: Vec<Vec<u8>>, locks: Vec<Lock>) -> Result<Self, CError> {
        if columns.is_empty() {
            return Err(CError::NoColumns);
        }
        if locks.len() != columns.len() {
            return Err(CError::LockCount { columns: columns.len(), locks: locks.len() });
        }
        let len = columns[0].len();
        for (n, col) in columns.iter().enumerate() {
            if col.len() != len {
                return Err(CError::Ragged);
            }
            for (x, &v) in col.iter().enumerate() {
                if v > 1 {
                    return Err(CError::BadBit { column: n, x: x as u32, v });
                }
            }
            if let Lock::Locked { i, k } = locks[n] {
                for (x, &v) in col.iter().enumerate().skip(k as usize) {
                    if v != i {
                        return Err(CError::LockBroken { column: n, x: x as u32 });
                    }
                }
            }
        }
        Ok(CCondition { columns, locks })
    }

    /// The first condition: a single empty, unlocked column.
    pub fn initial() -> Self {
        CCondition { columns: vec![Vec::new()], locks: vec![Lock::Unlocked] }
    }

    /// Number of columns.
    pub fn n(&self) -> usize {
        self.columns.len()
    }

    /// Common length of the columns.
    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, m: usize) -> &[u8] {
        &self.columns[m]
    }

    pub fn lock(&self, m: usize) -> Lock {
        self.locks[m]
    }

    /// Extend every column to `new_len`, filling lock-pinned positions with
    /// the lock value and everything else with 0. Shorter targets are a
    /// no-op.
    pub fn padded_to(&self, new_len: usize) -> CCondition {
        let mut q = self.clone();
        for (m, col) in q.columns.iter_mut().enumerate() {
            while col.len() < new_len {
                let x = col.len() as u32;
                let bit = match q.locks[m] {
                    Lock::Locked { i, k } if x >= k => i,
                    _ => 0,
                };
                col.push(bit);
            }
        }
        q
    }

    /// Extend so that column 0 holds bit `i` at position `w`. `None` when a
    /// lock or an already-stored bit disagrees.
    pub fn with_col0_bit(&self, w: u32, i: u8) -> Option<CCondition> {
        if let Lock::Locked { i: i0, k } = self.locks[0] {
            if w >= k && i0 != i {
                return None;
            }
        }
        if (w as usize) < self.len() {
            return if self.columns[0][w as usize] == i { Some(self.clone()) } else { None };
        }
        let mut q = self.padded_to(w as usize + 1);
        q.columns[0][w as usize] = i;
        Some(q)
    }
}

impl fmt::Display for CCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (n, col) in self.columns.iter().enumerate() {
            if n > 0 {
                write!(f, " ")?;
            }
            if col.is_empty() {
                write!(f, "ε")?;
            } else {
                for &b in col {
                    write!(f, "{b}")?;
                }
            }
            if let Lock::Locked { .. } = self.locks[n] {
                write!(f, "{}", self.locks[n])?;
            }
        }
        write!(f, "]")
    }
}

/// Whether `q` extends `p`: at least as many columns, each old column
/// extended as a string, and every old lock kept verbatim.
pub fn c_extends(q: &CCondition, p: &CCondition) -> bool {
    if q.n() < p.n() || q.len() < p.len() {
        return false;
    }
    for m in 0..p.n() {
        if q.locks[m] != p.locks[m] {
            return false;
        }
        if q.columns[m][..p.len()] != p.columns[m][..] {
            return false;
        }
    }
    true
}

/// Whether a family of full-length binary strings extends `p`: each of
/// `p`'s columns is a prefix of the matching string, and every lock holds
/// out to the string's full length.
pub fn family_extends(family: &[Vec<u8>], p: &CCondition) -> bool {
    if family.len() < p.n() {
        return false;
    }
    if family.iter().any(|s| s.iter().any(|&b| b > 1)) {
        return false;
    }
    for (m, s) in family.iter().take(p.n()).enumerate() {
        if s.len() < p.len() || s[..p.len()] != p.columns[m][..] {
            return false;
        }
        if let Lock::Locked { i, k } = p.locks[m] {
            if s.iter().skip(k as usize).any(|&b| b != i) {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Forcing surrogate over the family join

/// Code the family join: bit `pair(n, x)` is set when column `n` holds 1 at
/// position `x`. Returns the join together with its determined length: the
/// largest `m ≤ 64` such that every code below `m` decodes to a stored
/// position. Bits at codes at or beyond the determined length are partial
/// and must not be trusted; set bits whose code exceeds the word are
/// dropped, which is sound because only the determined region is ever read.
pub fn family_join(p: &CCondition) -> (SmallSet, u32) {
    let mut join = SmallSet::empty();
    for (n, col) in p.columns.iter().enumerate() {
        for (x, &b) in col.iter().enumerate() {
            if b == 1 {
                let code = pair(n as u32, x as u32);
                if code <= SmallSet::MAX_ELEM {
                    join.insert(code);
                }
            }
        }
    }
    let mut join_len = 0u32;
    while join_len < 64 {
        let (n, x) = unpair(join_len);
        if (n as usize) < p.n() && (x as usize) < p.len() {
            join_len += 1;
        } else {
            break;
        }
    }
    (join, join_len)
}

/// The output the condition forces at input `code`, if any.
///
/// Rows of the table are scanned in resolution order. A row whose
/// constraint conflicts with the determined region of the join can never
/// fire in any extension and is skipped. The first remaining row decides:
/// if its use fits inside the determined region it matches in every
/// extension and its output is forced; otherwise some extension may or may
/// not trigger it, so nothing is forced. Forced values therefore persist
/// under extension: the determined region only grows and never changes.
pub fn c_forces_value(
    phi: &TableFunctional,
    p: &CCondition,
    code: u32,
    horizon: Stage,
) -> Option<u8> {
    let (join, join_len) = family_join(p);
    let window = SmallSet::below(join_len);
    for e in phi.entries() {
        if e.stage > horizon || e.x != code {
            continue;
        }
        let determined = e.mask & window.0;
        if join.0 & determined != e.bits & determined {
            continue;
        }
        if e.use_bound <= join_len {
            return Some(e.output);
        }
        return None;
    }
    None
}

/// Largest stage mentioned by the table: evaluating at this horizon enables
/// every row.
pub fn full_horizon(t: &TableFunctional) -> Stage {
    t.entries().iter().map(|e| e.stage).max().unwrap_or(0)
}

/// Least threshold `m` such that the window `[max(m, x+1), universe)` holds
/// at least `theta` inputs `y`, every one of which has the pair input
/// `⟨x, y⟩` forced to `j`. This is the finite surrogate for forcing the
/// limit of the pair column at `x`: the whole visible tail beyond the
/// threshold is pinned, and the tail is required to be `theta` wide so the
/// claim never holds vacuously.
pub fn realizes_limit(
    phi: &TableFunctional,
    q: &CCondition,
    x: u32,
    j: u8,
    universe: u32,
    theta: u32,
    horizon: Stage,
) -> Option<u32> {
    for m in 0..universe {
        let start = m.max(x + 1);
        if universe.saturating_sub(start) < theta {
            return None;
        }
        if (start..universe).all(|y| c_forces_value(phi, q, pair(x, y), horizon) == Some(j)) {
            return Some(m);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Extension enumeration

/// Visit extensions of `p` in canonical order — by column count, then by
/// new length, then by bit pattern — starting with `p` itself. Old columns
/// vary only on positions a lock does not pin; new columns are created
/// unlocked, which loses no generality for forced-value searches because
/// locks only shrink the extension space and contribute no join bits of
/// their own. The visitor returns `Some` to accept and stop. Every visit
/// costs one unit of the shared `budget`; `Err(BudgetExhausted)` when it
/// runs dry.
pub fn for_each_c_extension<T>(
    p: &CCondition,
    max_cols: usize,
    max_len: usize,
    budget: &Cell<u64>,
    mut visit: impl FnMut(&CCondition) -> Option<T>,
) -> Result<Option<T>, CError> {
    let max_cols = max_cols.max(p.n());
    let max_len = max_len.max(p.len());
    for n_cols in p.n()..=max_cols {
        for new_len in p.len()..=max_len {
            let mut base_cols: Vec<Vec<u8>> = Vec::with_capacity(n_cols);
            let mut locks: Vec<Lock> = Vec::with_capacity(n_cols);
            let mut slots: Vec<(usize, usize)> = Vec::new();
            for m in 0..n_cols {
                let (mut col, lock) = if m < p.n() {
                    (p.columns[m].clone(), p.locks[m])
                } else {
                    (Vec::new(), Lock::Unlocked)
                };
                let start = col.len();
                col.resize(new_len, 0);
                for (x, slot) in col.iter_mut().enumerate().skip(start) {
                    match lock {
                        Lock::Locked { i, k } if (x as u32) >= k => *slot = i,
                        _ => slots.push((m, x)),
                    }
                }
                base_cols.push(col);
                locks.push(lock);
            }
            if slots.len() > 63 {
                return Err(CError::ScaleBound {
                    what: format!("{} free positions in one extension shape", slots.len()),
                });
            }
            for pattern in 0u64..(1u64 << slots.len()) {
                if budget.get() == 0 {
                    return Err(CError::BudgetExhausted {
                        what: "extension enumeration".to_string(),
                    });
                }
                budget.set(budget.get() - 1);
                let mut cols = base_cols.clone();
                for (bit, &(m, x)) in slots.iter().enumerate() {
                    cols[m][x] = ((pattern >> bit) & 1) as u8;
                }
                let q = CCondition { columns: cols, locks: locks.clone() };
                debug_assert!(c_extends(&q, p), "enumerated conditions extend the base");
                if let Some(t) = visit(&q) {
                    return Ok(Some(t));
                }
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Witness search

/// Least `F ⊆ r` (witness order) with the table converging to 1 on
/// `base ∪ F` at input `w`, together with the use of the decisive row.
///
/// Complete at this scale: the evaluation at `w` reads oracle bits only
/// inside the union of the row masks at that input, so every candidate `F`
/// behaves like its trace on that union; candidates range over subsets of
/// `r ∩ union`, each verified with the real evaluator.
pub fn witness_at(
    psi: &TableFunctional,
    base: SmallSet,
    r: SmallSet,
    w: u32,
) -> Option<(SmallSet, u32)> {
    let horizon = full_horizon(psi);
    let mask_union: u64 =
        psi.entries().iter().filter(|e| e.x == w).fold(0, |acc, e| acc | e.mask);
    let pool = r.intersect(SmallSet(mask_union));
    for f in pool.subsets_in_witness_order() {
        let ev = eval_on_set(psi, base.union(f), w, horizon);
        if ev.converges_to(1) {
            let u = ev.use_bound().expect("a convergent evaluation has a use");
            return Some((f, u));
        }
    }
    None
}

/// Least `(w, F)` with `w ≥ k`, `F ⊆ r`, and the table converging to 1 on
/// `base ∪ F` at `w`: least `w` first, then least `F` in witness order.
/// Returns `(w, F, use)`.
pub fn least_witness(
    psi: &TableFunctional,
    base: SmallSet,
    r: SmallSet,
    k: u32,
) -> Option<(u32, SmallSet, u32)> {
    let ws: BTreeSet<u32> = psi.entries().iter().filter(|e| e.x >= k).map(|e| e.x).collect();
    for w in ws {
        if let Some((f, u)) = witness_at(psi, base, r, w) {
            return Some((w, f, u));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Witness trees

/// The tree of strictly increasing strings over a reservoir none of whose
/// proper prefixes carries a witness. `witnessed` marks the childless nodes
/// whose own range does carry one; the remaining childless nodes ran into
/// the depth limit (genuine horizon stand-ins for longer branches) or
/// exhausted the reservoir (enumeration artifacts).
#[derive(Debug, Clone)]
pub struct CTree {
    pub tree: FiniteTree,
    pub witnessed: BTreeSet<Str>,
    /// The depth limit the tree was built with; childless unwitnessed nodes
    /// of exactly this length are horizon leaves.
    pub depth_cut: usize,
}

/// Grow the witness tree for `(base, psi, k)` over `reservoir`, cut at
/// `max_depth`.
pub fn build_t(
    base: SmallSet,
    psi: &TableFunctional,
    k: u32,
    reservoir: SmallSet,
    max_depth: usize,
) -> Result<CTree, CError> {
    let mut nodes: BTreeSet<Str> = BTreeSet::new();
    let mut witnessed: BTreeSet<Str> = BTreeSet::new();
    let mut frontier: Vec<Str> = vec![Vec::new()];
    while let Some(alpha) = frontier.pop() {
        let here = str_ran(&alpha);
        nodes.insert(alpha.clone());
        if least_witness(psi, base, here, k).is_some() {
            witnessed.insert(alpha);
            continue;
        }
        if alpha.len() >= max_depth {
            continue;
        }
        let lo = alpha.last().map_or(0, |&y| y + 1);
        for y in reservoir.iter().filter(|&y| y >= lo) {
            let mut child = alpha.clone();
            child.push(y);
            frontier.push(child);
        }
    }
    let width = reservoir.len().max(1);
    let tree = FiniteTree::new(nodes, reservoir, width)?;
    Ok(CTree { tree, witnessed, depth_cut: max_depth })
}

/// Node label: the least witness input of the subtree in the finite case,
/// `∞` when no input stabilizes below the thinning threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeLabel {
    Finite(u32),
    Infinity,
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeLabel::Finite(w) => write!(f, "{w}"),
            NodeLabel::Infinity => write!(f, "∞"),
        }
    }
}

/// A witness tree with a total labeling.
#[derive(Debug, Clone)]
pub struct LabeledTree {
    pub ctree: CTree,
    pub labels: BTreeMap<Str, NodeLabel>,
}

/// Label every node, working upward from the deepest:
///
/// * a witnessed childless node gets the least `w ≥ k` whose witness its
///   range carries (`UnlabelableTerminal` if none — the builder and the
///   labeler disagree);
/// * a childless node at the depth or reservoir horizon gets `∞`;
/// * an internal node gets `Finite(w)` for the least `w` shared by at least
///   `theta` of its children's labels, else `∞`.
pub fn label_tree(
    ct: &CTree,
    base: SmallSet,
    psi: &TableFunctional,
    k: u32,
    theta: u32,
) -> Result<LabeledTree, CError> {
    let mut order: Vec<Str> = ct.tree.nodes().cloned().collect();
    order.sort_by_key(|s| std::cmp::Reverse(s.len()));
    let mut labels: BTreeMap<Str, NodeLabel> = BTreeMap::new();
    for alpha in order {
        let kids = ct.tree.children(&alpha);
        let label = if kids.is_empty() {
            if ct.witnessed.contains(&alpha) {
                match least_witness(psi, base, str_ran(&alpha), k) {
                    Some((w, _, _)) => NodeLabel::Finite(w),
                    None => return Err(CError::UnlabelableTerminal { node: alpha }),
                }
            } else {
                NodeLabel::Infinity
            }
        } else {
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            for c in &kids {
                if let NodeLabel::Finite(w) = labels[c] {
                    *counts.entry(w).or_insert(0) += 1;
                }
            }
            match counts.iter().find(|&(_, &n)| n >= theta) {
                Some((&w, _)) => NodeLabel::Finite(w),
                None => NodeLabel::Infinity,
            }
        };
        labels.insert(alpha, label);
    }
    Ok(LabeledTree { ctree: ct.clone(), labels })
}

/// Which thinning rule kept an internal node's children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum T0Case {
    /// The node is finitely labeled: children sharing its label are kept.
    SameFinite(u32),
    /// The node is labeled `∞` but at least `theta` children are finitely
    /// labeled: those are kept.
    FiniteFamily,
    /// The node and at least `theta` of its surviving children are labeled
    /// `∞`: the surviving `∞` children are kept.
    InfFamily,
}

/// The thinned subtree, the rule applied at each kept internal node, and
/// whether the root supported a subtree at all (when it does not, the
/// result is the bare root and the structural checker reports it).
#[derive(Debug, Clone)]
pub struct T0Extraction {
    pub tree: FiniteTree,
    pub cases: BTreeMap<Str, T0Case>,
    pub theta: u32,
    pub root_viable: bool,
}

/// Thin a labeled tree to `T₀`: bottom-up, a childless node stands when it
/// is witnessed or sits at the depth horizon (a node childless only because
/// the reservoir ran dry is an enumeration artifact and does not stand); a
/// finitely labeled internal node keeps the children sharing its label (the
/// labeling rule guarantees at least `theta` of them, and such subtrees
/// never prune); an `∞` node keeps its finitely labeled children when at
/// least `theta` exist, otherwise its surviving `∞` children when at least
/// `theta` exist, otherwise it does not survive.
pub fn extract_t0(lt: &LabeledTree, theta: u32) -> T0Extraction {
    let t = &lt.ctree.tree;
    let mut order: Vec<Str> = t.nodes().cloned().collect();
    order.sort_by_key(|s| std::cmp::Reverse(s.len()));
    let mut viable: BTreeMap<Str, bool> = BTreeMap::new();
    let mut kept: BTreeMap<Str, Vec<Str>> = BTreeMap::new();
    let mut tentative: BTreeMap<Str, T0Case> = BTreeMap::new();
    for alpha in order {
        let kids = t.children(&alpha);
        if kids.is_empty() {
            let stands =
                lt.ctree.witnessed.contains(&alpha) || alpha.len() == lt.ctree.depth_cut;
            viable.insert(alpha, stands);
            continue;
        }
        match lt.labels[&alpha] {
            NodeLabel::Finite(w) => {
                let same: Vec<Str> = kids
                    .iter()
                    .filter(|c| lt.labels[*c] == NodeLabel::Finite(w))
                    .cloned()
                    .collect();
                debug_assert!(
                    same.len() as u32 >= theta,
                    "a finite internal label needs theta children sharing it"
                );
                debug_assert!(
                    same.iter().all(|c| viable[c]),
                    "finitely labeled nodes always stand"
                );
                tentative.insert(alpha.clone(), T0Case::SameFinite(w));
                kept.insert(alpha.clone(), same);
                viable.insert(alpha, true);
            }
            NodeLabel::Infinity => {
                let fin: Vec<Str> = kids
                    .iter()
                    .filter(|c| matches!(lt.labels[*c], NodeLabel::Finite(_)))
                    .cloned()
                    .collect();
                if fin.len() as u32 >= theta {
                    tentative.insert(alpha.clone(), T0Case::FiniteFamily);
                    kept.insert(alpha.clone(), fin);
                    viable.insert(alpha, true);
                    continue;
                }
                let vinf: Vec<Str> = kids
                    .iter()
                    .filter(|c| lt.labels[*c] == NodeLabel::Infinity && viable[*c])
                    .cloned()
                    .collect();
                if vinf.len() as u32 >= theta {
                    tentative.insert(alpha.clone(), T0Case::InfFamily);
                    kept.insert(alpha.clone(), vinf);
                    viable.insert(alpha, true);
                } else {
                    viable.insert(alpha, false);
                }
            }
        }
    }
    let root: Str = Vec::new();
    let root_viable = viable[&root];
    let mut nodes: BTreeSet<Str> = BTreeSet::new();
    let mut cases: BTreeMap<Str, T0Case> = BTreeMap::new();
    nodes.insert(root.clone());
    if root_viable {
        let mut queue: Vec<Str> = vec![root];
        while let Some(alpha) = queue.pop() {
            if let Some(children) = kept.get(&alpha) {
                cases.insert(alpha.clone(), tentative[&alpha]);
                for c in children {
                    nodes.insert(c.clone());
                    queue.push(c.clone());
                }
            }
        }
    }
    let tree = FiniteTree::new(nodes, t.universe(), t.width_bound())
        .expect("kept nodes form a subtree");
    T0Extraction { tree, cases, theta, root_viable }
}

/// Structural defects of a thinned tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum T0Violation {
    /// A node childless in the thinned tree still has children in the
    /// original.
    TerminalNotTerminalInT { node: Str },
    /// An internal node of the thinned tree keeps fewer than `theta`
    /// children.
    ThinInternal { node: Str, children: usize },
}

impl fmt::Display for T0Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            T0Violation::TerminalNotTerminalInT { node } => {
                write!(f, "thinned terminal {} is internal in the full tree", str_display(node))
            }
            T0Violation::ThinInternal { node, children } => {
                write!(f, "thinned node {} keeps only {children} children", str_display(node))
            }
        }
    }
}

/// Check the two structural guarantees of thinning: every childless node of
/// `t0` is childless in `t`, and every internal node of `t0` keeps at least
/// `theta` children.
pub fn check_t0(t0: &FiniteTree, t: &FiniteTree, theta: u32) -> Vec<T0Violation> {
    let mut out = Vec::new();
    for s in t0.nodes() {
        let mine = t0.children(s);
        if mine.is_empty() {
            if !t.children(s).is_empty() {
                out.push(T0Violation::TerminalNotTerminalInT { node: s.clone() });
            }
        } else if (mine.len() as u32) < theta {
            out.push(T0Violation::ThinInternal { node: s.clone(), children: mine.len() });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Density probes

/// Membership test of a density probe.
pub type CDenseTest = Arc<dyn Fn(&CCondition) -> bool + Send + Sync>;
/// Constructive extension of a density probe; must land inside the set.
pub type CDenseExtend = Arc<dyn Fn(&CCondition) -> Option<CCondition> + Send + Sync>;

/// A density probe over the condition poset: a membership test plus a
/// constructive extension that must land inside the set.
#[derive(Clone)]
pub struct CDenseSpec {
    pub name: String,
    pub test: CDenseTest,
    pub extend: CDenseExtend,
}

/// The density family of a pair-set blocker: probe `e` asks for some
/// `⟨x, w⟩` in the relation with `w ≥ e` and column 0 holding bit `i` at
/// `w`. The extension realizes the least such `w` that fits `max_len`.
pub fn we_spec(rel: &BTreeSet<(u32, u32)>, i: u8, e: u32, max_len: usize) -> CDenseSpec {
    let test_rel = rel.clone();
    let test: CDenseTest = Arc::new(move |q: &CCondition| {
        test_rel.iter().any(|&(_, w)| {
            w >= e && (w as usize) < q.len() && q.column(0)[w as usize] == i
        })
    });
    let ext_rel = rel.clone();
    let extend: CDenseExtend = Arc::new(move |q: &CCondition| {
        let mut candidates: Vec<u32> =
            ext_rel.iter().filter(|&&(_, w)| w >= e).map(|&(_, w)| w).collect();
        candidates.sort_unstable();
        candidates.dedup();
        for w in candidates {
            if (w as usize) >= max_len {
                continue;
            }
            if let Some(q2) = q.with_col0_bit(w, i) {
                return Some(q2);
            }
        }
        None
    });
    CDenseSpec { name: format!("W[{e}] bit {i}"), test, extend }
}

/// Default probe provider: pair-set blockers get their `W` family, plain
/// reservoir blockers carry no prebuilt family.
pub fn we_provider(member: &YMember, e: u32, max_len: usize) -> Option<CDenseSpec> {
    match member {
        YMember::Pairs { rel, i } => Some(we_spec(rel, *i, e, max_len)),
        YMember::Plain(_) => None,
    }
}

// ---------------------------------------------------------------------------
// Requirement ledger

/// A blocker recorded when a stage certifies a search empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum YMember {
    /// A reservoir snapshot: no extension realizes the needed limit at any
    /// of its members.
    Plain(SmallSet),
    /// Case-1 pair set: the candidate `⟨x, w⟩` pairs of a walk step,
    /// together with the bit the walk was committed to on column 0.
    Pairs { rel: BTreeSet<(u32, u32)>, i: u8 },
}

impl fmt::Display for YMember {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            YMember::Plain(s) => write!(f, "plain {s}"),
            YMember::Pairs { rel, i } => {
                write!(f, "pairs(bit {i})")?;
                for (x, w) in rel {
                    write!(f, " <{x},{w}>")?;
                }
                Ok(())
            }
        }
    }
}

/// The running state of the requirement construction: the condition chain's
/// newest element, the limit-color families `H` keyed by (table id, color),
/// the reservoir `I`, the blockers `Y`, and bookkeeping for stage parity.
#[derive(Debug, Clone)]
pub struct RequirementLedger {
    pub p: CCondition,
    pub h: BTreeMap<(u64, u8), SmallSet>,
    pub i_set: SmallSet,
    pub y: Vec<YMember>,
    pub stage: u32,
    /// Visit counts of the walk stages, keyed by (pair-table id,
    /// extraction-table id, color); the parity picks the committed bit.
    pub r_count: BTreeMap<(u64, u64, u8), u32>,
    pub universe: u32,
    pub theta: u32,
}

impl RequirementLedger {
    /// The starting ledger: one empty unlocked column, full reservoir,
    /// nothing recorded.
    pub fn initial(universe: u32, theta: u32) -> Self {
        RequirementLedger {
            p: CCondition::initial(),
            h: BTreeMap::new(),
            i_set: SmallSet::below(universe),
            y: Vec::new(),
            stage: 0,
            r_count: BTreeMap::new(),
            universe,
            theta,
        }
    }

    /// Text dump of the whole ledger, one line per component.
    pub fn dump(&self) -> Vec<String> {
        let mut out = vec![format!(
            "stage {} theta {} universe {} condition {}",
            self.stage, self.theta, self.universe, self.p
        )];
        out.push(format!("reservoir {}", self.i_set));
        if self.h.is_empty() {
            out.push("families: none".to_string());
        }
        for ((id, j), set) in &self.h {
            out.push(format!("family table {id} color {j}: {set}"));
        }
        if self.y.is_empty() {
            out.push("blockers: none".to_string());
        }
        for (n, m) in self.y.iter().enumerate() {
            out.push(format!("blocker {n}: {m}"));
        }
        out
    }
}

/// A broken ledger invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LedgerViolation {
    /// A limit-color family lost a member.
    HShrunk { id: u64, j: u8 },
    /// The reservoir gained a member.
    ReservoirGrew,
    /// The blocker list changed other than by appending.
    YShrunk,
    /// The new condition does not extend the old one.
    ChainBroken,
    /// The stage counter did not advance by one.
    StageNotAdvanced,
    /// A family member at or above the reservoir minimum.
    HNotBelowI { id: u64, j: u8 },
    /// A nonempty family whose table was not supplied for re-checking.
    TableMissing { id: u64 },
    /// The condition fails to force the family's color at a visible pair.
    HypothesisBroken { id: u64, j: u8, x: u32, y: u32 },
}

impl fmt::Display for LedgerViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LedgerViolation::HShrunk { id, j } => {
                write!(f, "family (table {id}, color {j}) shrank")
            }
            LedgerViolation::ReservoirGrew => write!(f, "reservoir grew"),
            LedgerViolation::YShrunk => write!(f, "blocker list shrank or changed"),
            LedgerViolation::ChainBroken => write!(f, "condition chain broken"),
            LedgerViolation::StageNotAdvanced => write!(f, "stage counter did not advance"),
            LedgerViolation::HNotBelowI { id, j } => {
                write!(f, "family (table {id}, color {j}) reaches into the reservoir")
            }
            LedgerViolation::TableMissing { id } => {
                write!(f, "table {id} not supplied for hypothesis re-check")
            }
            LedgerViolation::HypothesisBroken { id, j, x, y } => write!(
                f,
                "condition does not force color {j} at pair <{x},{y}> of table {id}"
            ),
        }
    }
}

/// Re-check every ledger invariant after a stage: monotone growth of the
/// families and blockers, shrinkage of the reservoir, chain extension,
/// families strictly below the reservoir, and the standing hypothesis that
/// the condition forces each family's color at every visible pair.
pub fn check_ledger(
    cur: &RequirementLedger,
    prev: &RequirementLedger,
    tables: &[&TableFunctional],
) -> Vec<LedgerViolation> {
    let mut out = Vec::new();
    for (&(id, j), h_prev) in &prev.h {
        let h_cur = cur.h.get(&(id, j)).copied().unwrap_or(SmallSet::EMPTY);
        if !h_prev.is_subset_of(h_cur) {
            out.push(LedgerViolation::HShrunk { id, j });
        }
    }
    if !cur.i_set.is_subset_of(prev.i_set) {
        out.push(LedgerViolation::ReservoirGrew);
    }
    if cur.y.len() < prev.y.len() || cur.y[..prev.y.len()] != prev.y[..] {
        out.push(LedgerViolation::YShrunk);
    }
    if !c_extends(&cur.p, &prev.p) {
        out.push(LedgerViolation::ChainBroken);
    }
    if cur.stage != prev.stage + 1 {
        out.push(LedgerViolation::StageNotAdvanced);
    }
    for (&(id, j), &h) in &cur.h {
        if h.is_empty() {
            continue;
        }
        if let (Some(hx), Some(im)) = (h.max(), cur.i_set.min()) {
            if hx >= im {
                out.push(LedgerViolation::HNotBelowI { id, j });
            }
        }
        let Some(table) = tables.iter().find(|t| t.id() == id) else {
            out.push(LedgerViolation::TableMissing { id });
            continue;
        };
        let horizon = full_horizon(table);
        'hyp: for x in h.iter() {
            for y in cur.i_set.iter() {
                if c_forces_value(table, &cur.p, pair(x, y), horizon) != Some(j) {
                    out.push(LedgerViolation::HypothesisBroken { id, j, x, y });
                    break 'hyp;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Stages

/// What a stage is dedicated to.
#[derive(Clone, Copy)]
pub enum StageDedication<'a> {
    /// Meet density probe `m` of blocker `n` (stage tag `t`).
    P { t: u32, n: usize, m: u32 },
    /// Grow both limit-color families of the pair table by one point each.
    Q { phi: &'a TableFunctional },
    /// Walk the witness tree of the extraction table for color `j`.
    R { phi: &'a TableFunctional, psi: &'a TableFunctional, j: u8 },
}

/// Scale bounds for one stage.
#[derive(Debug, Clone, Copy)]
pub struct StageParams {
    /// Largest column count an extension may reach.
    pub max_cols: usize,
    /// Largest column length an extension may reach.
    pub max_len: usize,
    /// Depth cut of witness trees.
    pub max_depth: usize,
    /// Extension-visit allowance per stage.
    pub budget: u64,
}

/// What a stage did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageAction {
    /// Density stage had nothing to do.
    PNoOp { reason: String },
    /// Density probe met, extending the condition or not.
    PMet { name: String, extended: bool },
    /// Both limit colors realized: the families each grew by one point.
    QAdded { x0: u32, m0: u32, x1: u32, m1: u32 },
    /// Certified: no extension realizes color `j` at any reservoir point;
    /// the reservoir snapshot joined the blockers.
    QBlocked { j: u8 },
    /// Both colors realizable separately but no composed extension found.
    QStalled { reason: String },
    /// A full-depth unwitnessed branch survives: the reservoir shrank to
    /// its range.
    RPath { branch: Str },
    /// The walk reached a witnessed terminal: the family grew by the
    /// witness set.
    RTerminal { w: u32, f: SmallSet, use_bound: u32 },
    /// Walk step exhausted: the step's candidate set joined the blockers
    /// (case 1 records pairs, case 2 records points).
    RBlocked { case: u8 },
    /// The walk ran out of usable tree at this scale; nothing changed.
    RStalled { reason: String },
}

impl fmt::Display for StageAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageAction::PNoOp { reason } => write!(f, "density no-op: {reason}"),
            StageAction::PMet { name, extended } => {
                write!(f, "density {name} met{}", if *extended { " by extension" } else { "" })
            }
            StageAction::QAdded { x0, m0, x1, m1 } => write!(
                f,
                "limits realized: color 0 at {x0} (threshold {m0}), color 1 at {x1} (threshold {m1})"
            ),
            StageAction::QBlocked { j } => {
                write!(f, "no extension realizes color {j}; reservoir recorded as blocker")
            }
            StageAction::QStalled { reason } => write!(f, "limit search stalled: {reason}"),
            StageAction::RPath { branch } => {
                write!(f, "unwitnessed branch survives: {}", str_display(branch))
            }
            StageAction::RTerminal { w, f: set, use_bound } => {
                write!(f, "witnessed terminal at input {w}: family grew by {set} (use {use_bound})")
            }
            StageAction::RBlocked { case } => {
                write!(f, "walk step blocked (case {case}); candidates recorded as blocker")
            }
            StageAction::RStalled { reason } => write!(f, "walk stalled: {reason}"),
        }
    }
}

/// One stage's outcome: the action taken, the thinning threshold in force,
/// and every invariant violation found afterwards (always empty unless the
/// engine is broken).
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: u32,
    pub action: StageAction,
    pub theta: u32,
    pub violations: Vec<LedgerViolation>,
}

impl StageReport {
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![format!("stage {} (theta {}): {}", self.stage, self.theta, self.action)];
        for v in &self.violations {
            out.push(format!("  violation: {v}"));
        }
        out
    }
}

fn p_stage(
    next: &mut RequirementLedger,
    n: usize,
    m: u32,
    provider: &dyn Fn(&YMember, u32) -> Option<CDenseSpec>,
) -> StageAction {
    if n >= next.y.len() {
        return StageAction::PNoOp {
            reason: format!("blocker {n} does not exist (only {})", next.y.len()),
        };
    }
    let member = next.y[n].clone();
    let Some(spec) = provider(&member, m) else {
        return StageAction::PNoOp { reason: "no density family for this blocker".to_string() };
    };
    if (spec.test)(&next.p) {
        return StageAction::PMet { name: spec.name, extended: false };
    }
    match (spec.extend)(&next.p) {
        Some(q) => {
            if !(spec.test)(&q) || !c_extends(&q, &next.p) {
                return StageAction::PNoOp {
                    reason: format!("{}: extension left the set or broke the chain", spec.name),
                };
            }
            next.p = q;
            StageAction::PMet { name: spec.name, extended: true }
        }
        None => StageAction::PNoOp {
            reason: format!("{}: not meetable at this scale", spec.name),
        },
    }
}

/// Whether any extension realizes the limit color `j` at any reservoir
/// point (used to certify a blocked search).
#[allow(clippy::too_many_arguments)]
fn limit_realizable(
    phi: &TableFunctional,
    p: &CCondition,
    j: u8,
    i_set: SmallSet,
    universe: u32,
    theta: u32,
    params: &StageParams,
    budget: &Cell<u64>,
) -> Result<bool, CError> {
    let horizon = full_horizon(phi);
    let hit = for_each_c_extension(p, params.max_cols, params.max_len, budget, |q| {
        i_set
            .iter()
            .find(|&x| realizes_limit(phi, q, x, j, universe, theta, horizon).is_some())
            .map(|_| ())
    })?;
    Ok(hit.is_some())
}

fn q_stage(
    next: &mut RequirementLedger,
    phi: &TableFunctional,
    params: &StageParams,
    budget: &Cell<u64>,
) -> Result<StageAction, CError> {
    let p = next.p.clone();
    let i_set = next.i_set;
    let universe = next.universe;
    let theta = next.theta;
    let horizon = full_horizon(phi);
    type Found = (CCondition, u32, u32, u32, u32);
    let composed: Option<Result<Found, CError>> =
        for_each_c_extension(&p, params.max_cols, params.max_len, budget, |q0| {
            for x0 in i_set.iter() {
                let Some(m0) = realizes_limit(phi, q0, x0, 0, universe, theta, horizon) else {
                    continue;
                };
                let inner = for_each_c_extension(
                    q0,
                    params.max_cols,
                    params.max_len,
                    budget,
                    |q1| {
                        for x1 in i_set.iter().filter(|&x1| x1 != x0) {
                            if let Some(m1) =
                                realizes_limit(phi, q1, x1, 1, universe, theta, horizon)
                            {
                                return Some((q1.clone(), x0, m0, x1, m1));
                            }
                        }
                        None
                    },
                );
                match inner {
                    Err(e) => return Some(Err(e)),
                    Ok(Some(found)) => return Some(Ok(found)),
                    Ok(None) => {}
                }
            }
            None
        })?;
    match composed {
        Some(Err(e)) => Err(e),
        Some(Ok((q, x0, m0, x1, m1))) => {
            next.p = q;
            next.h.entry((phi.id(), 0)).or_insert(SmallSet::EMPTY).insert(x0);
            next.h.entry((phi.id(), 1)).or_insert(SmallSet::EMPTY).insert(x1);
            let lo = (x0.max(x1) + 1).max(m0).max(m1);
            next.i_set = next.i_set.intersect(SmallSet::interval(lo, 64));
            Ok(StageAction::QAdded { x0, m0, x1, m1 })
        }
        None => {
            for j in [0u8, 1] {
                if !limit_realizable(phi, &p, j, i_set, universe, theta, params, budget)? {
                    next.y.push(YMember::Plain(i_set));
                    return Ok(StageAction::QBlocked { j });
                }
            }
            Ok(StageAction::QStalled {
                reason: "both colors realizable separately, no composed extension".to_string(),
            })
        }
    }
}

fn r_stage(
    next: &mut RequirementLedger,
    phi: &TableFunctional,
    psi: &TableFunctional,
    j: u8,
    params: &StageParams,
    budget: &Cell<u64>,
) -> Result<StageAction, CError> {
    let key = (phi.id(), psi.id(), j);
    let count = *next.r_count.get(&key).unwrap_or(&0);
    next.r_count.insert(key, count + 1);
    let i = (count % 2) as u8;
    let k = next.p.len() as u32;
    let h_j = next.h.get(&(phi.id(), j)).copied().unwrap_or(SmallSet::EMPTY);
    let universe = next.universe;
    let theta = next.theta;
    let horizon = full_horizon(phi);

    let ct = build_t(h_j, psi, k, next.i_set, params.max_depth)?;
    if let Some(branch) = ct
        .tree
        .nodes()
        .find(|s| s.len() == params.max_depth && !ct.witnessed.contains(*s))
    {
        next.i_set = str_ran(branch);
        return Ok(StageAction::RPath { branch: branch.clone() });
    }

    let lt = label_tree(&ct, h_j, psi, k, theta)?;
    let ex = extract_t0(&lt, theta);
    if !ex.root_viable {
        return Ok(StageAction::RStalled {
            reason: "no subtree keeps theta children everywhere at this scale".to_string(),
        });
    }

    let root: Str = Vec::new();
    let mut q = match lt.labels[&root] {
        NodeLabel::Finite(w) => match next.p.with_col0_bit(w, i) {
            Some(q0) => q0,
            None => {
                return Ok(StageAction::RStalled {
                    reason: format!("column 0 cannot take bit {i} at {w}"),
                })
            }
        },
        NodeLabel::Infinity => next.p.clone(),
    };
    let mut alpha: Str = root;
    let mut m_bound: u32 = 0;

    loop {
        let t0_kids = ex.tree.children(&alpha);
        if t0_kids.is_empty() {
            if !ct.witnessed.contains(&alpha) {
                return Ok(StageAction::RStalled {
                    reason: "walk ended at a horizon node".to_string(),
                });
            }
            let NodeLabel::Finite(w_t) = lt.labels[&alpha] else {
                return Ok(StageAction::RStalled {
                    reason: "witnessed terminal labeled infinite".to_string(),
                });
            };
            // A witnessed terminal is only reachable through the
            // finite-label regime, which commits this bit on entry.
            if (w_t as usize) >= q.len() || q.column(0)[w_t as usize] != i {
                return Ok(StageAction::RStalled {
                    reason: format!("terminal bit {i} at {w_t} was never committed"),
                });
            }
            let Some((w_wit, f, u)) = least_witness(psi, h_j, str_ran(&alpha), k) else {
                return Err(CError::UnlabelableTerminal { node: alpha });
            };
            debug_assert_eq!(w_wit, w_t, "terminal label is its least witness input");
            next.p = q;
            let grown = h_j.union(f);
            next.h.insert((phi.id(), j), grown);
            let lo_exclusive = u.max(f.max().unwrap_or(0));
            let min_allowed = (lo_exclusive + 1).max(m_bound);
            next.i_set = next.i_set.intersect(SmallSet::interval(min_allowed, 64));
            return Ok(StageAction::RTerminal { w: w_t, f, use_bound: u });
        }

        let s_kids: Vec<Str> = t0_kids
            .into_iter()
            .filter(|b| b.last().is_some_and(|&y| y >= m_bound))
            .collect();
        if s_kids.is_empty() {
            return Ok(StageAction::RStalled {
                reason: "no child clears the limit threshold".to_string(),
            });
        }
        match ex.cases[&alpha] {
            T0Case::FiniteFamily => {
                // The node is labeled ∞ with finitely labeled children: a
                // step must also commit column 0 at the child's label.
                let rel: BTreeSet<(u32, u32)> = s_kids
                    .iter()
                    .filter_map(|b| match lt.labels[b] {
                        NodeLabel::Finite(w) if (w as usize) >= q.len() => {
                            Some((*b.last().expect("children are nonempty"), w))
                        }
                        _ => None,
                    })
                    .collect();
                let pick = for_each_c_extension(
                    &q,
                    params.max_cols,
                    params.max_len,
                    budget,
                    |cand| {
                        for &(x, w) in &rel {
                            if (w as usize) < cand.len()
                                && cand.column(0)[w as usize] == i
                                && realizes_limit(phi, cand, x, j, universe, theta, horizon)
                                    .is_some()
                            {
                                let m = realizes_limit(phi, cand, x, j, universe, theta, horizon)
                                    .expect("just checked");
                                return Some((cand.clone(), x, m));
                            }
                        }
                        None
                    },
                )?;
                match pick {
                    Some((cand, x, m)) => {
                        q = cand;
                        m_bound = m_bound.max(m);
                        alpha.push(x);
                    }
                    None => {
                        next.y.push(YMember::Pairs { rel, i });
                        return Ok(StageAction::RBlocked { case: 1 });
                    }
                }
            }
            T0Case::SameFinite(_) | T0Case::InfFamily => {
                let points: SmallSet =
                    s_kids.iter().map(|b| *b.last().expect("children are nonempty")).collect();
                let pick = for_each_c_extension(
                    &q,
                    params.max_cols,
                    params.max_len,
                    budget,
                    |cand| {
                        for x in points.iter() {
                            if let Some(m) =
                                realizes_limit(phi, cand, x, j, universe, theta, horizon)
                            {
                                return Some((cand.clone(), x, m));
                            }
                        }
                        None
                    },
                )?;
                match pick {
                    Some((cand, x, m)) => {
                        q = cand;
                        m_bound = m_bound.max(m);
                        alpha.push(x);
                    }
                    None => {
                        next.y.push(YMember::Plain(points));
                        return Ok(StageAction::RBlocked { case: 2 });
                    }
                }
            }
        }
    }
}

/// Run one stage: clone the ledger, apply the dedicated action, then
/// re-check every invariant against the predecessor. `tables` supplies the
/// pair tables for the hypothesis re-check.
pub fn run_requirement_stage(
    ledger: &RequirementLedger,
    dedication: &StageDedication<'_>,
    provider: &dyn Fn(&YMember, u32) -> Option<CDenseSpec>,
    tables: &[&TableFunctional],
    params: &StageParams,
) -> Result<(RequirementLedger, StageReport), CError> {
    let mut next = ledger.clone();
    next.stage += 1;
    let budget = Cell::new(params.budget);
    let action = match *dedication {
        StageDedication::P { t: _, n, m } => p_stage(&mut next, n, m, provider),
        StageDedication::Q { phi } => q_stage(&mut next, phi, params, &budget)?,
        StageDedication::R { phi, psi, j } => {
            r_stage(&mut next, phi, psi, j, params, &budget)?
        }
    };
    let violations = check_ledger(&next, ledger, tables);
    let report = StageReport { stage: next.stage, action, theta: ledger.theta, violations };
    Ok((next, report))
}

// ---------------------------------------------------------------------------
// Driver

/// Scale configuration of a full requirement run.
#[derive(Debug, Clone, Copy)]
pub struct NscredConfig {
    pub universe: u32,
    pub theta: u32,
    pub stages: u32,
    pub params: StageParams,
}

/// A finished run: final ledger plus one report per stage.
#[derive(Debug)]
pub struct NscredRun {
    pub ledger: RequirementLedger,
    pub reports: Vec<StageReport>,
}

impl NscredRun {
    /// Total invariant violations across all stages (zero on a sound run).
    pub fn total_violations(&self) -> usize {
        self.reports.iter().map(|r| r.violations.len()).sum()
    }

    /// Full text dump: per-stage reports followed by the final ledger.
    pub fn dump(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.reports {
            out.extend(r.lines());
        }
        out.push("final ledger:".to_string());
        out.extend(self.ledger.dump());
        out
    }
}

/// Drive the requirement construction round-robin — grow the families, walk
/// the witness tree for each color, meet a density probe — for the given
/// number of stages. Every stage re-checks the ledger invariants; the
/// reports record each action, every violation, and the thinning threshold
/// in force.
pub fn run_nscred(
    phi: &TableFunctional,
    psi: &TableFunctional,
    cfg: &NscredConfig,
) -> Result<NscredRun, CError> {
    if cfg.universe > 64 {
        return Err(CError::ScaleBound {
            what: format!("universe {} exceeds the 64-element word", cfg.universe),
        });
    }
    if cfg.theta == 0 {
        return Err(CError::ScaleBound { what: "theta must be at least 1".to_string() });
    }
    if cfg.params.max_cols == 0 || cfg.params.max_len == 0 {
        return Err(CError::ScaleBound {
            what: "extension bounds must be at least 1".to_string(),
        });
    }
    let top_code = pair(cfg.params.max_cols as u32 - 1, cfg.params.max_len as u32 - 1);
    if top_code > SmallSet::MAX_ELEM {
        return Err(CError::ScaleBound {
            what: format!(
                "joins over {} columns of length {} reach code {top_code}, past the 64-element word",
                cfg.params.max_cols, cfg.params.max_len
            ),
        });
    }
    let provider = |member: &YMember, e: u32| we_provider(member, e, cfg.params.max_len);
    let tables: Vec<&TableFunctional> = vec![phi];
    let mut ledger = RequirementLedger::initial(cfg.universe, cfg.theta);
    let mut reports = Vec::new();
    for s in 0..cfg.stages {
        let round = s / 4;
        let dedication = match s % 4 {
            0 => StageDedication::Q { phi },
            1 => StageDedication::R { phi, psi, j: 0 },
            2 => StageDedication::R { phi, psi, j: 1 },
            _ => StageDedication::P {
                t: s,
                n: (round as usize) % ledger.y.len().max(1),
                m: round,
            },
        };
        let (next, report) =
            run_requirement_stage(&ledger, &dedication, &provider, &tables, &cfg.params)?;
        ledger = next;
        reports.push(report);
    }
    Ok(NscredRun { ledger, reports })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::Entry;

    fn table(id: u64, entries: Vec<Entry>) -> TableFunctional {
        TableFunctional::new(entries, id).expect("test table is valid")
    }

    /// A pair table forcing color `x mod 2` at every pair over `[0, n)`,
    /// unconditionally (empty constraints).
    fn parity_pairs(n: u32, id: u64) -> TableFunctional {
        let mut entries = Vec::new();
        for x in 0..n {
            for y in 0..n {
                let code = pair(x, y);
                entries.push(Entry {
                    stage: code + 1,
                    use_bound: 0,
                    x: code,
                    mask: 0,
                    bits: 0,
                    output: (x % 2) as u8,
                });
            }
        }
        table(id, entries)
    }

    /// An extraction table with one singleton witness per point: input `w`,
    /// oracle must contain `a`.
    fn singleton_witnesses(w: u32, points: SmallSet, id: u64) -> TableFunctional {
        let entries = points
            .iter()
            .map(|a| Entry {
                stage: (a + 1).max(w + 1),
                use_bound: a + 1,
                x: w,
                mask: 1 << a,
                bits: 1 << a,
                output: 1,
            })
            .collect();
        table(id, entries)
    }

    fn params() -> StageParams {
        StageParams { max_cols: 2, max_len: 4, max_depth: 3, budget: 200_000 }
    }

    #[test]
    fn condition_validation() {
        assert!(CCondition::new(vec![vec![0, 1], vec![1, 1]], vec![Lock::Unlocked; 2]).is_ok());
        assert_eq!(
            CCondition::new(vec![vec![0], vec![1, 1]], vec![Lock::Unlocked; 2]),
            Err(CError::Ragged)
        );
        assert_eq!(
            CCondition::new(vec![vec![2]], vec![Lock::Unlocked]),
            Err(CError::BadBit { column: 0, x: 0, v: 2 })
        );
        assert_eq!(
            CCondition::new(vec![vec![1, 0]], vec![Lock::Locked { i: 1, k: 1 }]),
            Err(CError::LockBroken { column: 0, x: 1 })
        );
        assert_eq!(
            CCondition::new(vec![vec![0]], vec![]),
            Err(CError::LockCount { columns: 1, locks: 0 })
        );
        assert_eq!(CCondition::new(vec![], vec![]), Err(CError::NoColumns));
        let p0 = CCondition::initial();
        assert_eq!((p0.n(), p0.len(), p0.lock(0)), (1, 0, Lock::Unlocked));
    }

    #[test]
    fn extends_basics() {
        let p = CCondition::new(
            vec![vec![0, 1], vec![1, 1]],
            vec![Lock::Unlocked, Lock::Locked { i: 1, k: 0 }],
        )
        .unwrap();
        assert!(c_extends(&p, &p), "extension is reflexive");
        let longer = CCondition::new(
            vec![vec![0, 1, 0], vec![1, 1, 1]],
            vec![Lock::Unlocked, Lock::Locked { i: 1, k: 0 }],
        )
        .unwrap();
        assert!(c_extends(&longer, &p));
        assert!(!c_extends(&p, &longer));
        let flipped = CCondition::new(
            vec![vec![1, 1, 0], vec![1, 1, 1]],
            vec![Lock::Unlocked, Lock::Locked { i: 1, k: 0 }],
        )
        .unwrap();
        assert!(!c_extends(&flipped, &p), "an old bit changed");
        let relocked = CCondition::new(
            vec![vec![0, 1, 0], vec![1, 1, 1]],
            vec![Lock::Unlocked, Lock::Locked { i: 1, k: 1 }],
        )
        .unwrap();
        assert!(!c_extends(&relocked, &p), "an old lock changed");
        let fewer = CCondition::new(vec![vec![0, 1]], vec![Lock::Unlocked]).unwrap();
        assert!(!c_extends(&fewer, &p), "columns disappeared");
        let wider = CCondition::new(
            vec![vec![0, 1], vec![1, 1], vec![0, 0]],
            vec![Lock::Unlocked, Lock::Locked { i: 1, k: 0 }, Lock::Locked { i: 0, k: 0 }],
        )
        .unwrap();
        assert!(c_extends(&wider, &p), "new columns choose their own locks");
    }

    /// Chains built by repeated extension stay chains, verified against an
    /// independently written extension check.
    #[test]
    fn extends_chain_against_oracle() {
        fn oracle_extends(q: &CCondition, p: &CCondition) -> bool {
            if q.n() < p.n() || q.len() < p.len() {
                return false;
            }
            (0..p.n()).all(|m| {
                q.lock(m) == p.lock(m)
                    && (0..p.len()).all(|x| q.column(m)[x] == p.column(m)[x])
            })
        }
        let mut chain = vec![CCondition::initial()];
        for step in 0u32..12 {
            let prev = chain.last().unwrap();
            let mut cols: Vec<Vec<u8>> = (0..prev.n()).map(|m| prev.column(m).to_vec()).collect();
            let mut locks: Vec<Lock> = (0..prev.n()).map(|m| prev.lock(m)).collect();
            for (m, col) in cols.iter_mut().enumerate() {
                let bit = match locks[m] {
                    Lock::Locked { i, .. } => i,
                    Lock::Unlocked => ((step as usize + m) % 2) as u8,
                };
                col.push(bit);
            }
            if step % 3 == 2 {
                let i = (step % 2) as u8;
                cols.push(vec![i; cols[0].len()]);
                locks.push(Lock::Locked { i, k: 0 });
            }
            chain.push(CCondition::new(cols, locks).expect("extension step is valid"));
        }
        for a in 0..chain.len() {
            for b in 0..chain.len() {
                let expect = b >= a;
                assert_eq!(c_extends(&chain[b], &chain[a]), expect, "chain pair ({a},{b})");
                assert_eq!(
                    oracle_extends(&chain[b], &chain[a]),
                    expect,
                    "oracle pair ({a},{b})"
                );
            }
        }
        let mut broken = chain[6].clone();
        let columns: Vec<Vec<u8>> = (0..broken.n())
            .map(|m| {
                let mut c = broken.column(m).to_vec();
                if m == 0 {
                    c[0] ^= 1;
                }
                c
            })
            .collect();
        broken = CCondition::new(columns, (0..broken.n()).map(|m| broken.lock(m)).collect())
            .unwrap();
        assert!(!c_extends(&broken, &chain[5]));
        assert!(!oracle_extends(&broken, &chain[5]));
    }

    #[test]
    fn family_extension_checks() {
        let p = CCondition::new(
            vec![vec![0, 1], vec![1, 1]],
            vec![Lock::Unlocked, Lock::Locked { i: 1, k: 0 }],
        )
        .unwrap();
        let exact = vec![vec![0, 1], vec![1, 1]];
        assert!(family_extends(&exact, &p), "the condition's own columns qualify");
        let good = vec![vec![0, 1, 1, 0], vec![1, 1, 1, 1]];
        assert!(family_extends(&good, &p));
        let tail_broken = vec![vec![0, 1, 1, 0], vec![1, 1, 1, 0]];
        assert!(!family_extends(&tail_broken, &p), "locked tail must persist forever");
        let prefix_broken = vec![vec![1, 1, 0, 0], vec![1, 1, 1, 1]];
        assert!(!family_extends(&prefix_broken, &p));
        let short = vec![vec![0, 1, 1]];
        assert!(!family_extends(&short, &p), "every column needs a string");
        let extra = vec![vec![0, 1, 0], vec![1, 1, 1], vec![0, 0, 0]];
        assert!(family_extends(&extra, &p), "extra strings beyond the columns are free");
    }

    #[test]
    fn join_and_forced_values() {
        // σ0 = 10, σ1 = 01: join bit pair(0,0)=0 and pair(1,1)=4 set;
        // determined region = codes {0,1,2} (code 3 decodes to column 2).
        let p = CCondition::new(vec![vec![1, 0], vec![0, 1]], vec![Lock::Unlocked; 2]).unwrap();
        let (join, join_len) = family_join(&p);
        assert_eq!(join, SmallSet::from_slice(&[0, 4]));
        assert_eq!(join_len, 3);

        // One fully determined row: needs bit 0 set and bit 2 clear.
        let fire = Entry { stage: 10, use_bound: 3, x: 9, mask: 0b101, bits: 0b001, output: 1 };
        // Earlier row refuted on the determined region: needs bit 0 clear
        // and bit 1 set (incompatible with the firing row, so the table
        // stays consistent).
        let refuted = Entry { stage: 10, use_bound: 2, x: 9, mask: 0b011, bits: 0b010, output: 0 };
        let t1 = table(1, vec![fire, refuted]);
        assert_eq!(c_forces_value(&t1, &p, 9, 10), Some(1), "refuted rows are skipped");

        // Earlier row undetermined (it also reads code 3, outside the
        // region): resolution is open, so nothing is forced even though
        // consistency means the value could not actually differ.
        let undetermined =
            Entry { stage: 10, use_bound: 4, x: 9, mask: 0b1001, bits: 0b0001, output: 1 };
        let late_fire = Entry { stage: 11, ..fire };
        let t2 = table(2, vec![late_fire, undetermined]);
        assert_eq!(c_forces_value(&t2, &p, 9, 11), None, "an open earlier row blocks forcing");
        assert_eq!(c_forces_value(&t1, &p, 9, 9), None, "horizon gates the rows");
        assert_eq!(c_forces_value(&t1, &p, 8, 10), None, "other inputs are untouched");
    }

    /// Forced values persist under every enumerated extension, and on
    /// full-size conditions forcing agrees with direct evaluation of the
    /// join.
    #[test]
    fn forced_values_persist_and_match_eval() {
        // Rows on a shared input are pairwise incompatible (they disagree
        // on a common constraint bit), so the table is consistent.
        let rows = vec![
            Entry { stage: 10, use_bound: 3, x: 0, mask: 0b101, bits: 0b001, output: 1 },
            Entry { stage: 10, use_bound: 4, x: 0, mask: 0b1011, bits: 0b0010, output: 0 },
            Entry { stage: 12, use_bound: 5, x: 1, mask: 0b10001, bits: 0b10001, output: 1 },
            Entry { stage: 12, use_bound: 2, x: 1, mask: 0b01, bits: 0b00, output: 0 },
        ];
        let phi = table(7, rows);
        let horizon = full_horizon(&phi);
        let p0 = CCondition::initial();
        let budget = Cell::new(u64::MAX);
        let mut space: Vec<CCondition> = Vec::new();
        for_each_c_extension::<()>(&p0, 3, 2, &budget, |q| {
            space.push(q.clone());
            None
        })
        .unwrap();
        assert_eq!(space.len(), 101, "1+2+4 + 1+4+16 + 1+8+64 enumerated shapes");
        for q in &space {
            for code in 0..6u32 {
                let Some(v) = c_forces_value(&phi, q, code, horizon) else { continue };
                let inner = Cell::new(u64::MAX);
                for_each_c_extension::<()>(q, 3, 2, &inner, |r| {
                    assert_eq!(
                        c_forces_value(&phi, r, code, horizon),
                        Some(v),
                        "forced value lost from {q} to {r} at {code}"
                    );
                    None
                })
                .unwrap();
            }
        }
        // Full-size conditions (3 columns, length 2): determined region is
        // codes {0..4}, covering every row use except the 5-use row.
        for q in space.iter().filter(|q| q.n() == 3 && q.len() == 2) {
            let (join, join_len) = family_join(q);
            assert_eq!(join_len, 5);
            for code in [0u32, 1] {
                let forced = c_forces_value(&phi, q, code, horizon);
                let eval = eval_on_set(&phi, join, code, horizon);
                match forced {
                    Some(v) => assert!(eval.converges_to(v), "forcing disagrees with the join"),
                    None => {
                        // Only rows reading past the determined region may
                        // separate forcing from direct evaluation.
                        if let Some(u) = eval.use_bound() {
                            assert!(u > join_len, "a determined row should have forced");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn extension_enumeration_canonical_and_budgeted() {
        let p0 = CCondition::initial();
        let budget = Cell::new(u64::MAX);
        let mut seen: Vec<CCondition> = Vec::new();
        for_each_c_extension::<()>(&p0, 2, 2, &budget, |q| {
            seen.push(q.clone());
            None
        })
        .unwrap();
        // Shapes (cols, len): (1,0) 1, (1,1) 2, (1,2) 4, (2,0) 1, (2,1) 4,
        // (2,2) 16 — 28 conditions, the identity first.
        assert_eq!(seen.len(), 28);
        assert_eq!(seen[0], p0);
        assert_eq!(seen[1], CCondition::new(vec![vec![0]], vec![Lock::Unlocked]).unwrap());
        assert_eq!(seen[2], CCondition::new(vec![vec![1]], vec![Lock::Unlocked]).unwrap());
        let mut dedup = seen.clone();
        dedup.sort_by(|a, b| format!("{a}").cmp(&format!("{b}")));
        dedup.dedup();
        assert_eq!(dedup.len(), 28, "no duplicates");

        let tight = Cell::new(10u64);
        let r = for_each_c_extension::<()>(&p0, 2, 2, &tight, |_| None);
        assert_eq!(
            r,
            Err(CError::BudgetExhausted { what: "extension enumeration".to_string() })
        );

        // Lock-pinned positions are filled, never enumerated.
        let locked =
            CCondition::new(vec![vec![0]], vec![Lock::Locked { i: 1, k: 1 }]).unwrap();
        let budget = Cell::new(u64::MAX);
        let mut count = 0usize;
        for_each_c_extension::<()>(&locked, 1, 3, &budget, |q| {
            count += 1;
            for x in 1..q.len() {
                assert_eq!(q.column(0)[x], 1, "lock pins the tail");
            }
            None
        })
        .unwrap();
        assert_eq!(count, 3, "only the three lengths, no free bits");
    }

    #[test]
    fn empty_table_gives_all_infinite_labels() {
        let psi = table(3, vec![]);
        let reservoir = SmallSet::below(6);
        let ct = build_t(SmallSet::EMPTY, &psi, 0, reservoir, 2).unwrap();
        assert!(ct.witnessed.is_empty());
        // 1 root + 6 singletons + C(6,2) pairs.
        assert_eq!(ct.tree.node_count(), 1 + 6 + 15);
        let lt = label_tree(&ct, SmallSet::EMPTY, &psi, 0, 3).unwrap();
        assert!(lt.labels.values().all(|&l| l == NodeLabel::Infinity));
        let ex = extract_t0(&lt, 3);
        assert!(ex.root_viable);
        assert!(ex.cases.values().all(|&c| c == T0Case::InfFamily));
        // Depth-1 node [a] keeps all children {a+1..6}; viable needs ≥ 3.
        for a in 0..6u32 {
            assert_eq!(ex.tree.contains(&[a]), a <= 2, "singleton {a}");
        }
        assert!(check_t0(&ex.tree, &ct.tree, 3).is_empty());
    }

    /// Every singleton extension carries a witness at input 2, so all
    /// depth-1 nodes are terminals labeled 2 and the root inherits the
    /// label. Replayed by hand against the evaluator.
    #[test]
    fn depth_one_witnesses_label_and_extract() {
        let psi = singleton_witnesses(2, SmallSet::below(6), 4);
        let reservoir = SmallSet::below(6);
        let ct = build_t(SmallSet::EMPTY, &psi, 2, reservoir, 3).unwrap();
        assert_eq!(ct.tree.node_count(), 7, "root plus six witnessed children");
        assert_eq!(ct.witnessed.len(), 6);
        for a in 0..6u32 {
            let ev = eval_on_set(&psi, SmallSet::singleton(a), 2, full_horizon(&psi));
            assert!(ev.converges_to(1), "hand replay of the witness at {a}");
        }
        let lt = label_tree(&ct, SmallSet::EMPTY, &psi, 2, 3).unwrap();
        for a in 0..6u32 {
            assert_eq!(lt.labels[&vec![a]], NodeLabel::Finite(2));
        }
        assert_eq!(lt.labels[&Vec::new()], NodeLabel::Finite(2), "six shared labels beat θ=3");
        let ex = extract_t0(&lt, 3);
        assert!(ex.root_viable);
        assert_eq!(ex.tree.node_count(), 7, "the whole tree survives");
        assert_eq!(ex.cases[&Vec::new()], T0Case::SameFinite(2));
        assert!(check_t0(&ex.tree, &ct.tree, 3).is_empty());
    }

    #[test]
    fn theta_above_branching_forces_infinity_and_flags_thin_root() {
        let psi = singleton_witnesses(2, SmallSet::below(6), 5);
        let ct = build_t(SmallSet::EMPTY, &psi, 2, SmallSet::below(6), 3).unwrap();
        let lt = label_tree(&ct, SmallSet::EMPTY, &psi, 2, 7).unwrap();
        assert_eq!(
            lt.labels[&Vec::new()],
            NodeLabel::Infinity,
            "no label reaches a threshold above the branching"
        );
        let ex = extract_t0(&lt, 7);
        assert!(!ex.root_viable);
        assert_eq!(ex.tree.node_count(), 1, "bare root");
        let v = check_t0(&ex.tree, &ct.tree, 7);
        assert_eq!(
            v,
            vec![T0Violation::TerminalNotTerminalInT { node: Vec::new() }],
            "the degenerate tree is flagged, not hidden"
        );
    }

    /// Distinct witness inputs per point: every depth-1 child of the root
    /// gets its own label, so the root is labeled ∞ yet keeps its finitely
    /// labeled children. Each kept node's rule is re-derived by hand.
    #[test]
    fn mixed_labels_choose_finite_family() {
        // Witness at input b for the point b (b ≥ 1 participates since k=1).
        let entries = (0..8u32)
            .map(|b| Entry {
                stage: b + 2,
                use_bound: b + 1,
                x: b,
                mask: 1 << b,
                bits: 1 << b,
                output: 1,
            })
            .collect();
        let psi = table(6, entries);
        let ct = build_t(SmallSet::EMPTY, &psi, 1, SmallSet::below(8), 2).unwrap();
        let lt = label_tree(&ct, SmallSet::EMPTY, &psi, 1, 3).unwrap();
        for b in 1..8u32 {
            assert_eq!(lt.labels[&vec![b]], NodeLabel::Finite(b), "own witness input");
        }
        assert_eq!(lt.labels[&vec![0]], NodeLabel::Infinity, "no witness at input 0 with k=1");
        assert_eq!(lt.labels[&Vec::new()], NodeLabel::Infinity, "all labels distinct");
        let ex = extract_t0(&lt, 3);
        assert!(ex.root_viable);
        assert_eq!(ex.cases[&Vec::new()], T0Case::FiniteFamily);
        assert!(ex.tree.contains(&[1]) && ex.tree.contains(&[7]));
        assert!(!ex.tree.contains(&[0]), "the ∞ child loses to the finite family");
        // Per-node rule oracle: recount each kept internal node's children.
        for (node, case) in &ex.cases {
            let kept = ex.tree.children(node);
            match case {
                T0Case::SameFinite(w) => {
                    assert!(kept.iter().all(|c| lt.labels[c] == NodeLabel::Finite(*w)));
                    assert_eq!(lt.labels[node], NodeLabel::Finite(*w));
                }
                T0Case::FiniteFamily => {
                    assert_eq!(lt.labels[node], NodeLabel::Infinity);
                    assert!(kept
                        .iter()
                        .all(|c| matches!(lt.labels[c], NodeLabel::Finite(_))));
                    assert!(kept.len() >= 3);
                }
                T0Case::InfFamily => {
                    assert_eq!(lt.labels[node], NodeLabel::Infinity);
                    assert!(kept.iter().all(|c| lt.labels[c] == NodeLabel::Infinity));
                    assert!(kept.len() >= 3);
                }
            }
        }
        assert!(check_t0(&ex.tree, &ct.tree, 3).is_empty());
    }

    #[test]
    fn disagreeing_witness_record_is_an_error() {
        let psi = singleton_witnesses(2, SmallSet::below(6), 8);
        let ct = build_t(SmallSet::EMPTY, &psi, 2, SmallSet::below(6), 3).unwrap();
        // Corrupt: label against an empty table, so the recorded witnesses
        // cannot be reproduced.
        let empty = table(9, vec![]);
        let r = label_tree(&ct, SmallSet::EMPTY, &empty, 2, 3);
        assert!(
            matches!(r, Err(CError::UnlabelableTerminal { .. })),
            "expected the builder/labeler disagreement error"
        );
    }

    #[test]
    fn q_stage_grows_both_families_twice() {
        let phi = parity_pairs(8, 11);
        let psi = table(12, vec![]);
        let ledger = RequirementLedger::initial(8, 3);
        let tables: Vec<&TableFunctional> = vec![&phi];
        let provider = |m: &YMember, e: u32| we_provider(m, e, 4);
        let (l1, rep1) = run_requirement_stage(
            &ledger,
            &StageDedication::Q { phi: &phi },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(rep1.action, StageAction::QAdded { x0: 0, m0: 0, x1: 1, m1: 0 });
        assert_eq!(l1.h[&(11, 0)], SmallSet::singleton(0));
        assert_eq!(l1.h[&(11, 1)], SmallSet::singleton(1));
        assert_eq!(l1.i_set, SmallSet::interval(2, 8));
        assert!(rep1.violations.is_empty(), "{:?}", rep1.violations);
        let _ = psi;
        let (l2, rep2) = run_requirement_stage(
            &l1,
            &StageDedication::Q { phi: &phi },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(rep2.action, StageAction::QAdded { x0: 2, m0: 0, x1: 3, m1: 0 });
        assert_eq!(l2.h[&(11, 0)], SmallSet::from_slice(&[0, 2]));
        assert_eq!(l2.h[&(11, 1)], SmallSet::from_slice(&[1, 3]));
        assert_eq!(l2.i_set, SmallSet::interval(4, 8));
        assert!(rep2.violations.is_empty(), "{:?}", rep2.violations);
    }

    #[test]
    fn q_stage_blocked_records_reservoir() {
        let phi = table(13, vec![]);
        let ledger = RequirementLedger::initial(8, 3);
        let tables: Vec<&TableFunctional> = vec![&phi];
        let provider = |m: &YMember, e: u32| we_provider(m, e, 4);
        let (l1, rep) = run_requirement_stage(
            &ledger,
            &StageDedication::Q { phi: &phi },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(rep.action, StageAction::QBlocked { j: 0 });
        assert_eq!(l1.y, vec![YMember::Plain(SmallSet::below(8))]);
        assert_eq!(l1.p, ledger.p, "nothing else moved");
        assert_eq!(l1.i_set, ledger.i_set);
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    }

    #[test]
    fn r_stage_takes_surviving_branch() {
        let phi = parity_pairs(8, 14);
        let psi = table(15, vec![]);
        let ledger = RequirementLedger::initial(8, 3);
        let tables: Vec<&TableFunctional> = vec![&phi];
        let provider = |m: &YMember, e: u32| we_provider(m, e, 4);
        let (l1, rep) = run_requirement_stage(
            &ledger,
            &StageDedication::R { phi: &phi, psi: &psi, j: 0 },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(rep.action, StageAction::RPath { branch: vec![0, 1, 2] });
        assert_eq!(l1.i_set, SmallSet::from_slice(&[0, 1, 2]));
        assert_eq!(l1.r_count[&(14, 15, 0)], 1);
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    }

    #[test]
    fn r_stage_terminal_grows_family_then_parity_flips() {
        let phi = parity_pairs(8, 16);
        // Witnesses at input 0 for every point (k = 0 at the first stage).
        let psi = singleton_witnesses(0, SmallSet::below(8), 17);
        let ledger = RequirementLedger::initial(8, 3);
        let tables: Vec<&TableFunctional> = vec![&phi];
        let provider = |m: &YMember, e: u32| we_provider(m, e, 4);
        let (l1, rep1) = run_requirement_stage(
            &ledger,
            &StageDedication::R { phi: &phi, psi: &psi, j: 0 },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(
            rep1.action,
            StageAction::RTerminal { w: 0, f: SmallSet::singleton(0), use_bound: 1 }
        );
        assert_eq!(l1.h[&(16, 0)], SmallSet::singleton(0));
        assert_eq!(l1.p.len(), 1);
        assert_eq!(l1.p.column(0), &[0], "first visit commits bit 0");
        assert_eq!(l1.i_set, SmallSet::interval(2, 8));
        assert!(rep1.violations.is_empty(), "{:?}", rep1.violations);

        // Second visit: parity flips to 1, k is now 1, the table has no
        // witness inputs ≥ 1, so the tree is all horizon and a full-depth
        // branch survives.
        let (l2, rep2) = run_requirement_stage(
            &l1,
            &StageDedication::R { phi: &phi, psi: &psi, j: 0 },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(rep2.action, StageAction::RPath { branch: vec![2, 3, 4] });
        assert_eq!(l2.i_set, SmallSet::from_slice(&[2, 3, 4]));
        assert_eq!(l2.r_count[&(16, 17, 0)], 2);
        assert!(rep2.violations.is_empty(), "{:?}", rep2.violations);
    }

    #[test]
    fn p_stage_meets_pair_blocker_and_skips_plain() {
        let phi = parity_pairs(8, 18);
        let tables: Vec<&TableFunctional> = vec![&phi];
        let provider = |m: &YMember, e: u32| we_provider(m, e, 8);
        let mut ledger = RequirementLedger::initial(8, 3);
        ledger.y.push(YMember::Pairs {
            rel: [(2u32, 5u32)].into_iter().collect(),
            i: 1,
        });
        ledger.y.push(YMember::Plain(SmallSet::below(4)));

        let (l1, rep1) = run_requirement_stage(
            &ledger,
            &StageDedication::P { t: 0, n: 2, m: 0 },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert!(matches!(rep1.action, StageAction::PNoOp { .. }), "index past the blockers");
        assert_eq!(l1.p, ledger.p);

        let (l2, rep2) = run_requirement_stage(
            &ledger,
            &StageDedication::P { t: 0, n: 0, m: 3 },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(
            rep2.action,
            StageAction::PMet { name: "W[3] bit 1".to_string(), extended: true }
        );
        assert_eq!(l2.p.len(), 6);
        assert_eq!(l2.p.column(0), &[0, 0, 0, 0, 0, 1]);
        assert!(rep2.violations.is_empty(), "{:?}", rep2.violations);

        let (l3, rep3) = run_requirement_stage(
            &l2,
            &StageDedication::P { t: 1, n: 0, m: 3 },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(
            rep3.action,
            StageAction::PMet { name: "W[3] bit 1".to_string(), extended: false }
        );
        assert_eq!(l3.p, l2.p);

        let (_, rep4) = run_requirement_stage(
            &ledger,
            &StageDedication::P { t: 2, n: 1, m: 0 },
            &provider,
            &tables,
            &params(),
        )
        .unwrap();
        assert_eq!(
            rep4.action,
            StageAction::PNoOp { reason: "no density family for this blocker".to_string() }
        );
    }

    #[test]
    fn window_width_gates_realized_limits() {
        // Pair input ⟨1, y⟩ forced to 1 only for y ∈ {2, 3, 4}.
        let entries = [2u32, 3, 4]
            .iter()
            .map(|&y| {
                let code = pair(1, y);
                Entry { stage: code + 1, use_bound: 0, x: code, mask: 0, bits: 0, output: 1 }
            })
            .collect();
        let phi = table(19, entries);
        let p = CCondition::initial();
        let horizon = full_horizon(&phi);
        assert_eq!(
            realizes_limit(&phi, &p, 1, 1, 5, 3, horizon),
            Some(0),
            "window [2,5) is fully forced and 3 wide"
        );
        assert_eq!(
            realizes_limit(&phi, &p, 1, 1, 5, 4, horizon),
            None,
            "3 forced points cannot fill a width-4 requirement"
        );
        assert_eq!(
            realizes_limit(&phi, &p, 1, 1, 8, 3, horizon),
            None,
            "unforced tail points block every threshold"
        );
    }

    #[test]
    fn ledger_checker_flags_each_break() {
        let phi = parity_pairs(8, 20);
        let tables: Vec<&TableFunctional> = vec![&phi];
        let mut prev = RequirementLedger::initial(8, 3);
        prev.h.insert((20, 0), SmallSet::singleton(0));
        prev.i_set = SmallSet::interval(2, 8);
        prev.y.push(YMember::Plain(SmallSet::below(2)));

        let mut ok = prev.clone();
        ok.stage = 1;
        assert!(check_ledger(&ok, &prev, &tables).is_empty());

        let mut bad = ok.clone();
        bad.h.insert((20, 0), SmallSet::EMPTY);
        assert!(check_ledger(&bad, &prev, &tables)
            .contains(&LedgerViolation::HShrunk { id: 20, j: 0 }));

        let mut bad = ok.clone();
        bad.i_set = SmallSet::below(8);
        assert!(check_ledger(&bad, &prev, &tables).contains(&LedgerViolation::ReservoirGrew));

        let mut bad = ok.clone();
        bad.y.clear();
        assert!(check_ledger(&bad, &prev, &tables).contains(&LedgerViolation::YShrunk));

        let mut bad = ok.clone();
        bad.p = CCondition::new(vec![vec![1]], vec![Lock::Locked { i: 1, k: 0 }]).unwrap();
        // A different first column with a different lock: not an extension.
        assert!(check_ledger(&bad, &prev, &tables).contains(&LedgerViolation::ChainBroken));

        let mut bad = ok.clone();
        bad.stage = 5;
        assert!(check_ledger(&bad, &prev, &tables).contains(&LedgerViolation::StageNotAdvanced));

        let mut bad = ok.clone();
        bad.h.insert((20, 0), SmallSet::singleton(5));
        let v = check_ledger(&bad, &prev, &tables);
        assert!(v.contains(&LedgerViolation::HNotBelowI { id: 20, j: 0 }));

        let mut bad = ok.clone();
        bad.h.insert((20, 1), SmallSet::singleton(0));
        // Color 1 at x = 0 contradicts the parity table (0 is even).
        let v = check_ledger(&bad, &prev, &tables);
        assert!(v
            .iter()
            .any(|x| matches!(x, LedgerViolation::HypothesisBroken { id: 20, j: 1, .. })));

        let unknown = table(99, vec![]);
        let wrong_tables: Vec<&TableFunctional> = vec![&unknown];
        assert!(check_ledger(&ok, &prev, &wrong_tables)
            .contains(&LedgerViolation::TableMissing { id: 20 }));
    }

    #[test]
    fn full_run_is_clean_and_deterministic() {
        let phi = parity_pairs(8, 21);
        let psi = singleton_witnesses(0, SmallSet::below(8), 22);
        let cfg = NscredConfig { universe: 8, theta: 3, stages: 8, params: params() };
        let run1 = run_nscred(&phi, &psi, &cfg).unwrap();
        assert_eq!(run1.reports.len(), 8);
        assert_eq!(run1.total_violations(), 0, "{:?}", run1.dump());
        let run2 = run_nscred(&phi, &psi, &cfg).unwrap();
        assert_eq!(run1.dump(), run2.dump(), "stage driver is deterministic");
        assert!(run1.ledger.stage == 8);
        // The round-robin touched every stage kind.
        assert!(matches!(run1.reports[0].action, StageAction::QAdded { .. }));
        assert!(matches!(
            run1.reports[1].action,
            StageAction::RTerminal { .. } | StageAction::RPath { .. }
        ));
        assert!(matches!(run1.reports[3].action, StageAction::PNoOp { .. }));
    }

    #[test]
    fn driver_rejects_out_of_scale_configs() {
        let phi = parity_pairs(4, 23);
        let psi = table(24, vec![]);
        let bad = NscredConfig {
            universe: 8,
            theta: 3,
            stages: 1,
            params: StageParams { max_cols: 8, max_len: 8, max_depth: 2, budget: 1000 },
        };
        match run_nscred(&phi, &psi, &bad) {
            Err(CError::ScaleBound { .. }) => {}
            other => panic!("expected a scale refusal, got {other:?}"),
        }
        let zero = NscredConfig {
            universe: 8,
            theta: 0,
            stages: 1,
            params: params(),
        };
        assert!(matches!(run_nscred(&phi, &psi, &zero), Err(CError::ScaleBound { .. })));
    }
}
