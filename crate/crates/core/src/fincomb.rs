//! Stage-clocked predicates on small sets, finite trees of increasing
//! strings, witness-certified trees, separated tree sequences, and the
//! subtree a sequence generates under a pruning predicate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::set::{is_increasing, str_display, str_parse, str_ran, SmallSet, Str};
use crate::Stage;

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

/// A predicate on small sets evaluated against a stage clock.
///
/// `holds_by(f, s)` must be monotone in `s`: once true at a stage it stays
/// true at every later stage. Everything downstream (witness stages, locking,
/// limit guessing) leans on that monotonicity.
#[derive(Clone)]
pub struct Predicate {
    eval: Arc<dyn Fn(SmallSet, Stage) -> bool + Send + Sync>,
    descr: String,
    spec: Option<String>,
}

impl Predicate {
    pub fn new<F>(descr: impl Into<String>, eval: F) -> Self
    where
        F: Fn(SmallSet, Stage) -> bool + Send + Sync + 'static,
    {
        Predicate {
            eval: Arc::new(eval),
            descr: descr.into(),
            spec: None,
        }
    }

    pub fn holds_by(&self, f: SmallSet, stage: Stage) -> bool {
        (self.eval)(f, stage)
    }

    /// Eventual truth at the given horizon stage.
    pub fn holds_within(&self, f: SmallSet, horizon: Stage) -> bool {
        self.holds_by(f, horizon)
    }

    pub fn descr(&self) -> &str {
        &self.descr
    }

    /// The registry spec this predicate was parsed from, if any.
    pub fn spec(&self) -> Option<&str> {
        self.spec.as_deref()
    }

    /// Least stage `s <= horizon` with `holds_by(f, s)`, by binary search
    /// over the monotone stage axis.
    pub fn least_stage(&self, f: SmallSet, horizon: Stage) -> Option<Stage> {
        if !self.holds_by(f, horizon) {
            return None;
        }
        let (mut lo, mut hi) = (0u32, horizon);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.holds_by(f, mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo)
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Predicate({})", self.descr)
    }
}

/// Stage a plain registry predicate first confirms `f`: after reading all of
/// `f`, i.e. `max(f) + 1`, with the empty set confirmed immediately.
fn read_stage(f: SmallSet) -> Stage {
    f.max().map_or(0, |m| m + 1)
}

/// Parse a predicate from its registry spec, e.g. `"card-ge 2"`,
/// `"includes 0b101"` (set arguments are bitmasks, decimal or `0b`/`0x`),
/// or `"delayed 3 contains 4"`.
///
/// Every registry predicate confirms a set only once the stage clock has
/// passed the set's largest element (plus any `delayed` offset), so stage
/// monotonicity holds by construction.
pub fn parse_predicate(spec: &str) -> Result<Predicate, String> {
    let toks: Vec<&str> = spec.split_whitespace().collect();
    let mut p = parse_predicate_toks(&toks)?;
    p.spec = Some(toks.join(" "));
    Ok(p)
}

fn parse_num(tok: &str) -> Result<u64, String> {
    let r = if let Some(hex) = tok.strip_prefix("0x") {
        u64::from_str_radix(hex, 16)
    } else if let Some(bin) = tok.strip_prefix("0b") {
        u64::from_str_radix(bin, 2)
    } else {
        tok.parse()
    };
    r.map_err(|_| format!("bad numeric argument {tok:?}"))
}

fn parse_predicate_toks(toks: &[&str]) -> Result<Predicate, String> {
    let (&head, args) = toks
        .split_first()
        .ok_or_else(|| "empty predicate spec".to_string())?;
    let arg = |i: usize| -> Result<u64, String> {
        args.get(i)
            .ok_or_else(|| format!("{head}: missing argument {i}"))
            .and_then(|t| parse_num(t))
    };
    let gated = |descr: String, prop: Box<dyn Fn(SmallSet) -> bool + Send + Sync>| {
        Predicate::new(descr, move |f, s| s >= read_stage(f) && prop(f))
    };
    match head {
        "always" => Ok(gated("always".into(), Box::new(|_| true))),
        "never" => Ok(Predicate::new("never", |_, _| false)),
        "nonempty" => Ok(gated("nonempty".into(), Box::new(|f| !f.is_empty()))),
        "contains" => {
            let x = arg(0)? as u32;
            Ok(gated(format!("contains {x}"), Box::new(move |f| f.contains(x))))
        }
        "includes" => {
            let m = SmallSet(arg(0)?);
            Ok(gated(format!("includes {m}"), Box::new(move |f| m.is_subset_of(f))))
        }
        "subset-of" => {
            let m = SmallSet(arg(0)?);
            Ok(gated(
                format!("subset-of {m}"),
                Box::new(move |f| f.is_subset_of(m)),
            ))
        }
        "intersects" => {
            let m = SmallSet(arg(0)?);
            Ok(gated(
                format!("intersects {m}"),
                Box::new(move |f| !f.intersect(m).is_empty()),
            ))
        }
        "card-ge" => {
            let n = arg(0)? as u32;
            Ok(gated(format!("card-ge {n}"), Box::new(move |f| f.len() >= n)))
        }
        "card-eq" => {
            let n = arg(0)? as u32;
            Ok(gated(format!("card-eq {n}"), Box::new(move |f| f.len() == n)))
        }
        "max-ge" => {
            let n = arg(0)? as u32;
            Ok(gated(
                format!("max-ge {n}"),
                Box::new(move |f| f.max().is_some_and(|m| m >= n)),
            ))
        }
        "sum-ge" => {
            let n = arg(0)?;
            Ok(gated(
                format!("sum-ge {n}"),
                Box::new(move |f| f.iter().map(u64::from).sum::<u64>() >= n),
            ))
        }
        "all-mod" => {
            let m = arg(0)? as u32;
            let r = arg(1)? as u32;
            if m == 0 {
                return Err("all-mod: modulus must be positive".into());
            }
            Ok(gated(
                format!("all-mod {m} {r}"),
                Box::new(move |f| !f.is_empty() && f.iter().all(|x| x % m == r % m)),
            ))
        }
        "adjacent-pair" => Ok(gated(
            "adjacent-pair".into(),
            Box::new(|f| f.0 & (f.0 >> 1) != 0),
        )),
        "delayed" => {
            let d = arg(0)? as u32;
            let inner = parse_predicate_toks(&args[1..])?;
            Ok(Predicate::new(
                format!("delayed {d} ({})", inner.descr),
                move |f, s| {
                    let need = read_stage(f).saturating_add(d);
                    s >= need && inner.holds_by(f, s)
                },
            ))
        }
        other => Err(format!("unknown predicate {other:?}")),
    }
}

/// A small deterministic family of registry predicates over `{0,…,n-1}`,
/// used by exhaustive search demos and tests.
pub fn sample_family(n: u32) -> Vec<Predicate> {
    let full = SmallSet::below(n).0;
    let mut specs = vec![
        "never".to_string(),
        "nonempty".to_string(),
        "adjacent-pair".to_string(),
        format!("card-ge {}", (n / 2).max(2)),
        format!("max-ge {}", n.saturating_sub(1)),
        format!("sum-ge {n}"),
        "all-mod 2 0".to_string(),
        "all-mod 2 1".to_string(),
        format!("subset-of {}", full >> 1),
        "delayed 2 card-ge 2".to_string(),
    ];
    for x in (0..n).step_by(2) {
        specs.push(format!("contains {x}"));
    }
    specs
        .iter()
        .map(|s| parse_predicate(s).expect("sample specs parse"))
        .collect()
}

// ---------------------------------------------------------------------------
// Finite trees of increasing strings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeError {
    MissingRoot,
    NotPrefixClosed(Str),
    NotIncreasing(Str),
    OutsideUniverse(Str),
    WidthExceeded { node: Str, found: usize, bound: u32 },
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeError::MissingRoot => write!(f, "tree does not contain the empty string"),
            TreeError::NotPrefixClosed(s) => {
                write!(f, "node {} has a missing prefix", str_display(s))
            }
            TreeError::NotIncreasing(s) => {
                write!(f, "node {} is not strictly increasing", str_display(s))
            }
            TreeError::OutsideUniverse(s) => {
                write!(f, "node {} uses entries outside the universe", str_display(s))
            }
            TreeError::WidthExceeded { node, found, bound } => write!(
                f,
                "node {} has {found} children, exceeding width bound {bound}",
                str_display(node)
            ),
        }
    }
}

impl std::error::Error for TreeError {}

/// A finite tree of strictly increasing strings over a small universe,
/// prefix-closed, rooted at the empty string, with bounded branching.
///
/// Node order (iteration order) is the lexicographic order on strings.
#[derive(Clone, PartialEq, Eq)]
pub struct FiniteTree {
    nodes: BTreeSet<Str>,
    universe: SmallSet,
    width: u32,
}

impl FiniteTree {
    pub fn new(nodes: BTreeSet<Str>, universe: SmallSet, width: u32) -> Result<Self, TreeError> {
        if !nodes.contains(&Vec::new()) {
            return Err(TreeError::MissingRoot);
        }
        for s in &nodes {
            if !is_increasing(s) {
                return Err(TreeError::NotIncreasing(s.clone()));
            }
            if !str_ran(s).is_subset_of(universe) {
                return Err(TreeError::OutsideUniverse(s.clone()));
            }
            if !s.is_empty() && !nodes.contains(&s[..s.len() - 1]) {
                return Err(TreeError::NotPrefixClosed(s.clone()));
            }
        }
        let t = FiniteTree { nodes, universe, width };
        for s in &t.nodes {
            let found = t.children(s).len();
            if found as u32 > width {
                return Err(TreeError::WidthExceeded {
                    node: s.clone(),
                    found,
                    bound: width,
                });
            }
        }
        Ok(t)
    }

    /// The one-node tree `{ root }`.
    pub fn root_only(universe: SmallSet, width: u32) -> Self {
        let mut nodes = BTreeSet::new();
        nodes.insert(Vec::new());
        FiniteTree { nodes, universe, width }
    }

    /// The chain of prefixes of the increasing enumeration of `f`.
    pub fn principal_chain(f: SmallSet, universe: SmallSet, width: u32) -> Self {
        debug_assert!(f.is_subset_of(universe));
        let elems = f.to_vec();
        let mut nodes = BTreeSet::new();
        for k in 0..=elems.len() {
            nodes.insert(elems[..k].to_vec());
        }
        FiniteTree {
            nodes,
            universe,
            width: width.max(1),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Str> {
        self.nodes.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, s: &[u32]) -> bool {
        self.nodes.contains(s)
    }

    pub fn children(&self, s: &[u32]) -> Vec<Str> {
        self.nodes
            .iter()
            .filter(|n| n.len() == s.len() + 1 && n.starts_with(s))
            .cloned()
            .collect()
    }

    pub fn terminals(&self) -> Vec<Str> {
        self.nodes
            .iter()
            .filter(|s| self.children(s).is_empty())
            .cloned()
            .collect()
    }

    /// Union of the entries of all nodes.
    pub fn ran(&self) -> SmallSet {
        let mut r = SmallSet::empty();
        for s in &self.nodes {
            r = r.union(str_ran(s));
        }
        r
    }

    /// Length of the longest node.
    pub fn height(&self) -> u32 {
        self.nodes.iter().map(|s| s.len() as u32).max().unwrap_or(0)
    }

    pub fn universe(&self) -> SmallSet {
        self.universe
    }

    pub fn width_bound(&self) -> u32 {
        self.width
    }

    pub fn nodes_at_level(&self, level: u32) -> Vec<Str> {
        self.nodes
            .iter()
            .filter(|s| s.len() as u32 == level)
            .cloned()
            .collect()
    }

    pub fn to_lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.nodes.len() + 2);
        let uni = self
            .universe
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push(format!("tree width={} universe={}", self.width, uni));
        for s in &self.nodes {
            out.push(format!("node {}", str_display(s)));
        }
        out.push("end".to_string());
        out
    }

    /// Parse the block emitted by [`to_lines`] from a line iterator; the
    /// iterator is left positioned after the block's `end` line.
    pub fn from_lines<'a>(
        lines: &mut impl Iterator<Item = &'a str>,
    ) -> Result<Self, String> {
        let header = lines
            .next()
            .ok_or_else(|| "expected tree header".to_string())?
            .trim();
        let rest = header
            .strip_prefix("tree ")
            .ok_or_else(|| format!("expected `tree …` header, got {header:?}"))?;
        let mut width: Option<u32> = None;
        let mut universe = SmallSet::empty();
        for field in rest.split_whitespace() {
            if let Some(w) = field.strip_prefix("width=") {
                width = Some(w.parse().map_err(|_| format!("bad width {w:?}"))?);
            } else if let Some(u) = field.strip_prefix("universe=") {
                for part in u.split(',').filter(|p| !p.is_empty()) {
                    let x: u32 = part
                        .parse()
                        .map_err(|_| format!("bad universe entry {part:?}"))?;
                    universe.insert(x);
                }
            } else {
                return Err(format!("unknown tree header field {field:?}"));
            }
        }
        let width = width.ok_or_else(|| "tree header missing width".to_string())?;
        let mut nodes = BTreeSet::new();
        for line in lines {
            let line = line.trim();
            if line == "end" {
                return FiniteTree::new(nodes, universe, width).map_err(|e| e.to_string());
            }
            let s = line
                .strip_prefix("node ")
                .ok_or_else(|| format!("expected `node …` or `end`, got {line:?}"))?;
            nodes.insert(str_parse(s)?);
        }
        Err("unterminated tree block".to_string())
    }
}

impl fmt::Debug for FiniteTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FiniteTree[")?;
        for (i, s) in self.nodes.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", str_display(s))?;
        }
        write!(f, "]")
    }
}

/// Separation order on trees: everything in `a`'s range lies strictly below
/// everything in `b`'s range. Vacuously true when either range is empty.
pub fn tree_less(a: &FiniteTree, b: &FiniteTree) -> bool {
    match (a.ran().max(), b.ran().min()) {
        (Some(hi), Some(lo)) => hi < lo,
        _ => true,
    }
}

// ---------------------------------------------------------------------------
// Witness-certified trees
// ---------------------------------------------------------------------------

/// Result of checking a tree against a predicate at a stage: either every
/// terminal's range carries a confirmed subset (with the least such subset
/// and its least confirmation stage recorded), or a failing terminal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhiCheck {
    Holds(BTreeMap<Str, (SmallSet, Stage)>),
    FailsAt(Str),
}

/// Check whether every terminal `t` of `tree` has some `F ⊆ ran(t)` with
/// `phi` confirmed by `stage`. Witnesses are least in witness order; their
/// recorded stage is the least stage at which they confirm.
pub fn is_phi_tree(tree: &FiniteTree, phi: &Predicate, stage: Stage) -> PhiCheck {
    let mut witnesses = BTreeMap::new();
    for t in tree.terminals() {
        let ran = str_ran(&t);
        match ran.least_subset_where(|f| phi.holds_by(f, stage)) {
            Some(f) => {
                let s = phi
                    .least_stage(f, stage)
                    .expect("witness confirmed at `stage`, so a least stage exists");
                witnesses.insert(t, (f, s));
            }
            None => return PhiCheck::FailsAt(t),
        }
    }
    PhiCheck::Holds(witnesses)
}

/// A tree together with a witness map certifying it against some predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiTree {
    pub tree: FiniteTree,
    pub witnesses: BTreeMap<Str, (SmallSet, Stage)>,
}

impl PhiTree {
    /// Certify `tree` against `phi` at `stage`.
    pub fn certify(tree: FiniteTree, phi: &Predicate, stage: Stage) -> Result<PhiTree, Str> {
        match is_phi_tree(&tree, phi, stage) {
            PhiCheck::Holds(witnesses) => Ok(PhiTree { tree, witnesses }),
            PhiCheck::FailsAt(t) => Err(t),
        }
    }

    /// Largest recorded witness confirmation stage (0 when there are none).
    pub fn max_witness_stage(&self) -> Stage {
        self.witnesses.values().map(|&(_, s)| s).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeqError {
    NotSeparated { lo: usize, hi: usize },
}

impl fmt::Display for SeqError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqError::NotSeparated { lo, hi } => {
                write!(f, "trees {lo} and {hi} are not separated")
            }
        }
    }
}

impl std::error::Error for SeqError {}

/// A sequence of certified trees with pairwise separated ranges.
#[derive(Debug, Clone, Default)]
pub struct PhiSequence {
    trees: Vec<PhiTree>,
}

impl PhiSequence {
    pub fn new(trees: Vec<PhiTree>) -> Result<Self, SeqError> {
        for hi in 1..trees.len() {
            for lo in 0..hi {
                if !tree_less(&trees[lo].tree, &trees[hi].tree) {
                    return Err(SeqError::NotSeparated { lo, hi });
                }
            }
        }
        Ok(PhiSequence { trees })
    }

    pub fn empty() -> Self {
        PhiSequence { trees: Vec::new() }
    }

    pub fn push(&mut self, t: PhiTree) -> Result<(), SeqError> {
        for (lo, prev) in self.trees.iter().enumerate() {
            if !tree_less(&prev.tree, &t.tree) {
                return Err(SeqError::NotSeparated { lo, hi: self.trees.len() });
            }
        }
        self.trees.push(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn trees(&self) -> &[PhiTree] {
        &self.trees
    }

    pub fn ran(&self) -> SmallSet {
        self.trees
            .iter()
            .fold(SmallSet::empty(), |acc, t| acc.union(t.tree.ran()))
    }
}

// ---------------------------------------------------------------------------
// Generated subtrees
// ---------------------------------------------------------------------------

/// The subtree generated by a sequence of block trees under a pruning
/// predicate, plus its live frontier.
#[derive(Debug, Clone)]
pub struct GeneratedTree {
    pub tree: FiniteTree,
    /// Nodes at the final built level that are still extendible: no subset of
    /// their range is confirmed by the pruning predicate at the build stage.
    pub alive: Vec<Str>,
}

/// Build the subtree generated by `blocks` under `psi` at `stage`.
///
/// Level `x+1` extends a node `α` at level `x` by each `e ∈ ran(blocks[x])`
/// with `e > last(α)`, provided no `F ⊆ ran(α)` is confirmed by `psi` at
/// `stage`; a node whose range carries a confirmed subset is pruned (kept,
/// but childless). The empty block list generates the one-node tree. Building
/// stops after `height_cap` levels even if blocks remain.
pub fn generated_subtree(
    blocks: &[&FiniteTree],
    psi: &Predicate,
    stage: Stage,
    height_cap: u32,
) -> GeneratedTree {
    let height = (blocks.len() as u32).min(height_cap);
    let mut universe = SmallSet::empty();
    let mut width = 1u32;
    for b in blocks.iter().take(height as usize) {
        universe = universe.union(b.ran());
        width = width.max(b.ran().len());
    }

    let mut nodes: BTreeSet<Str> = BTreeSet::new();
    nodes.insert(Vec::new());
    // Extendible nodes of the current level, paired with their range.
    let mut level: Vec<(Str, SmallSet)> = Vec::new();
    if !psi.holds_by(SmallSet::empty(), stage) {
        level.push((Vec::new(), SmallSet::empty()));
    }

    for x in 0..height {
        if level.is_empty() {
            break;
        }
        let block_ran = blocks[x as usize].ran();
        let mut next: Vec<(Str, SmallSet)> = Vec::new();
        for (alpha, ran) in &level {
            let floor = alpha.last().map_or(0, |&l| l + 1);
            for e in block_ran.iter().filter(|&e| e >= floor) {
                let mut child = alpha.clone();
                child.push(e);
                let child_ran = ran.with(e);
                nodes.insert(child.clone());
                // The parent was extendible, so no confirmed subset avoids
                // `e`; only subsets containing `e` need checking here.
                let extendible = !child_ran
                    .without(e)
                    .subsets_in_witness_order()
                    .any(|f| psi.holds_by(f.with(e), stage));
                if extendible {
                    next.push((child, child_ran));
                }
            }
        }
        level = next;
    }

    let alive = level.into_iter().map(|(s, _)| s).collect();
    let tree = FiniteTree { nodes, universe, width };
    debug_assert!(
        FiniteTree::new(tree.nodes.clone(), universe, width).is_ok(),
        "generated subtree is well-formed by construction"
    );
    GeneratedTree { tree, alive }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(nodes: &[&[u32]], universe: SmallSet, width: u32) -> FiniteTree {
        let set: BTreeSet<Str> = nodes.iter().map(|s| s.to_vec()).collect();
        FiniteTree::new(set, universe, width).unwrap()
    }

    #[test]
    fn predicate_stage_monotone_on_registry_grid() {
        let fam = sample_family(6);
        for p in &fam {
            for mask in 0..64u64 {
                let f = SmallSet(mask);
                let mut seen = false;
                for s in 0..12 {
                    let h = p.holds_by(f, s);
                    assert!(!seen || h, "{} not monotone at {f} stage {s}", p.descr());
                    seen = h;
                }
            }
        }
    }

    #[test]
    fn least_stage_matches_linear_scan() {
        let p = parse_predicate("delayed 2 card-ge 2").unwrap();
        for mask in 0..64u64 {
            let f = SmallSet(mask);
            let linear = (0..=20).find(|&s| p.holds_by(f, s));
            assert_eq!(p.least_stage(f, 20), linear, "at {f}");
        }
    }

    #[test]
    fn registry_rejects_garbage() {
        assert!(parse_predicate("").is_err());
        assert!(parse_predicate("frobnicate 3").is_err());
        assert!(parse_predicate("contains").is_err());
        assert!(parse_predicate("all-mod 0 1").is_err());
    }

    #[test]
    fn adjacent_pair_bit_trick_matches_definition() {
        let p = parse_predicate("adjacent-pair").unwrap();
        for mask in 0..256u64 {
            let f = SmallSet(mask);
            let expect = f.iter().any(|x| f.contains(x + 1));
            assert_eq!(p.holds_by(f, 64), expect, "at {f}");
        }
    }

    #[test]
    fn tree_validation_catches_each_defect() {
        let uni = SmallSet::below(6);
        assert!(matches!(
            FiniteTree::new(BTreeSet::new(), uni, 2),
            Err(TreeError::MissingRoot)
        ));
        let orphan: BTreeSet<Str> = [vec![], vec![1, 2]].into_iter().collect();
        assert!(matches!(
            FiniteTree::new(orphan, uni, 2),
            Err(TreeError::NotPrefixClosed(_))
        ));
        let dec: BTreeSet<Str> = [vec![], vec![3], vec![3, 1]].into_iter().collect();
        assert!(matches!(
            FiniteTree::new(dec, uni, 2),
            Err(TreeError::NotIncreasing(_))
        ));
        let out: BTreeSet<Str> = [vec![], vec![9]].into_iter().collect();
        assert!(matches!(
            FiniteTree::new(out, uni, 2),
            Err(TreeError::OutsideUniverse(_))
        ));
        let wide: BTreeSet<Str> = [vec![], vec![0], vec![1], vec![2]].into_iter().collect();
        assert!(matches!(
            FiniteTree::new(wide, uni, 2),
            Err(TreeError::WidthExceeded { .. })
        ));
    }

    #[test]
    fn tree_queries() {
        let t = tree(
            &[&[], &[1], &[1, 3], &[1, 4], &[2]],
            SmallSet::below(6),
            2,
        );
        assert_eq!(t.height(), 2);
        assert_eq!(t.ran(), SmallSet::from_slice(&[1, 2, 3, 4]));
        assert_eq!(t.children(&[1]), vec![vec![1, 3], vec![1, 4]]);
        assert_eq!(
            t.terminals(),
            vec![vec![1, 3], vec![1, 4], vec![2]],
        );
        assert_eq!(t.nodes_at_level(1), vec![vec![1], vec![2]]);
    }

    #[test]
    fn tree_text_roundtrip() {
        let t = tree(&[&[], &[0], &[0, 2]], SmallSet::from_slice(&[0, 2, 5]), 3);
        let lines = t.to_lines();
        let joined = lines.join("\n");
        let mut it = joined.lines();
        let back = FiniteTree::from_lines(&mut it).unwrap();
        assert_eq!(back, t);
        assert_eq!(it.next(), None);
        // Root-only with empty universe also roundtrips.
        let r = FiniteTree::root_only(SmallSet::empty(), 1);
        let joined = r.to_lines().join("\n");
        assert_eq!(FiniteTree::from_lines(&mut joined.lines()).unwrap(), r);
    }

    #[test]
    fn tree_less_conventions() {
        let uni = SmallSet::below(10);
        let a = tree(&[&[], &[1], &[2]], uni, 3);
        let b = tree(&[&[], &[3]], uni, 3);
        let root = FiniteTree::root_only(uni, 3);
        assert!(tree_less(&a, &b));
        assert!(!tree_less(&b, &a));
        assert!(tree_less(&a, &root));
        assert!(tree_less(&root, &a));
        assert!(tree_less(&root, &root));
        assert!(!tree_less(&a, &a));
    }

    #[test]
    fn phi_tree_check_picks_least_witness() {
        // Terminals {1,3} and {1,4}; predicate holds on any set containing 1.
        let t = tree(&[&[], &[1], &[1, 3], &[1, 4]], SmallSet::below(6), 2);
        let phi = parse_predicate("contains 1").unwrap();
        match is_phi_tree(&t, &phi, 10) {
            PhiCheck::Holds(w) => {
                // Least witness in witness order is {1}, confirmed at stage 2.
                assert_eq!(w[&vec![1, 3]], (SmallSet::singleton(1), 2));
                assert_eq!(w[&vec![1, 4]], (SmallSet::singleton(1), 2));
            }
            PhiCheck::FailsAt(t) => panic!("unexpected failure at {}", str_display(&t)),
        }
    }

    #[test]
    fn phi_tree_check_reports_first_failing_terminal() {
        let t = tree(&[&[], &[1], &[2]], SmallSet::below(6), 2);
        let phi = parse_predicate("contains 2").unwrap();
        assert_eq!(is_phi_tree(&t, &phi, 10), PhiCheck::FailsAt(vec![1]));
        // At a too-early stage even the right set is unconfirmed.
        assert_eq!(is_phi_tree(&t, &phi, 1), PhiCheck::FailsAt(vec![1]));
    }

    #[test]
    fn empty_witness_is_least_when_predicate_allows_it() {
        let t = tree(&[&[], &[4]], SmallSet::below(6), 1);
        let phi = parse_predicate("always").unwrap();
        match is_phi_tree(&t, &phi, 10) {
            PhiCheck::Holds(w) => assert_eq!(w[&vec![4]], (SmallSet::empty(), 0)),
            _ => panic!("always-predicate must certify"),
        }
    }

    #[test]
    fn sequence_rejects_overlap_and_accepts_separation() {
        let uni = SmallSet::below(10);
        let phi = parse_predicate("always").unwrap();
        let mk = |nodes: &[&[u32]]| PhiTree::certify(tree(nodes, uni, 2), &phi, 10).unwrap();
        let a = mk(&[&[], &[1]]);
        let b = mk(&[&[], &[3], &[4]]);
        let c = mk(&[&[], &[4]]);
        assert!(PhiSequence::new(vec![a.clone(), b.clone()]).is_ok());
        assert_eq!(
            PhiSequence::new(vec![b.clone(), c.clone()]).unwrap_err(),
            SeqError::NotSeparated { lo: 0, hi: 1 }
        );
        let mut seq = PhiSequence::empty();
        seq.push(a).unwrap();
        assert!(seq.push(c).is_ok());
        assert_eq!(seq.ran(), SmallSet::from_slice(&[1, 4]));
    }

    /// Reference implementation of generated-subtree membership, straight
    /// from the definition and with no incremental shortcuts.
    fn generated_reference(
        blocks: &[&FiniteTree],
        psi: &Predicate,
        stage: Stage,
    ) -> BTreeSet<Str> {
        fn node_in(blocks: &[&FiniteTree], psi: &Predicate, stage: Stage, s: &[u32]) -> bool {
            if s.is_empty() {
                return true;
            }
            let (head, last) = (&s[..s.len() - 1], s[s.len() - 1]);
            if !node_in(blocks, psi, stage, head) {
                return false;
            }
            if !is_increasing(s) {
                return false;
            }
            if !blocks[head.len()].ran().contains(last) {
                return false;
            }
            // Parent must be extendible: no confirmed subset of its range.
            !str_ran(head)
                .subsets_in_witness_order()
                .any(|f| psi.holds_by(f, stage))
        }
        let mut all = BTreeSet::new();
        let mut frontier: Vec<Str> = vec![Vec::new()];
        all.insert(Vec::new());
        for x in 0..blocks.len() {
            let mut next = Vec::new();
            for alpha in &frontier {
                for e in blocks[x].ran().iter() {
                    let mut cand = alpha.clone();
                    cand.push(e);
                    if node_in(blocks, psi, stage, &cand) {
                        all.insert(cand.clone());
                        next.push(cand);
                    }
                }
            }
            frontier = next;
        }
        all
    }

    #[test]
    fn generated_subtree_matches_reference_on_grid() {
        let uni = SmallSet::below(12);
        let b0 = tree(&[&[], &[0], &[1]], uni, 2);
        let b1 = tree(&[&[], &[3], &[3, 4]], uni, 2);
        let b2 = tree(&[&[], &[6], &[7]], uni, 2);
        let blocks = [&b0, &b1, &b2];
        for spec in [
            "never",
            "nonempty",
            "contains 3",
            "card-ge 2",
            "adjacent-pair",
            "delayed 4 contains 0",
            "always",
        ] {
            let psi = parse_predicate(spec).unwrap();
            for stage in [0, 2, 5, 30] {
                let got = generated_subtree(&blocks, &psi, stage, 16);
                let expect = generated_reference(&blocks, &psi, stage);
                let got_nodes: BTreeSet<Str> = got.tree.nodes().cloned().collect();
                assert_eq!(got_nodes, expect, "psi={spec} stage={stage}");
            }
        }
    }

    #[test]
    fn generated_subtree_edge_cases() {
        let uni = SmallSet::below(8);
        let never = parse_predicate("never").unwrap();
        let always = parse_predicate("always").unwrap();

        // Empty block list generates the one-node tree; the root stays alive
        // unless the predicate already confirms the empty set.
        let g = generated_subtree(&[], &never, 10, 16);
        assert_eq!(g.tree.node_count(), 1);
        assert_eq!(g.alive, vec![Vec::<u32>::new()]);
        let g = generated_subtree(&[], &always, 10, 16);
        assert_eq!(g.alive, Vec::<Str>::new());

        // A confirmed empty set prunes the root immediately.
        let b0 = tree(&[&[], &[2]], uni, 1);
        let g = generated_subtree(&[&b0], &always, 10, 16);
        assert_eq!(g.tree.node_count(), 1);
        assert!(g.alive.is_empty());

        // Height cap stops consumption.
        let b1 = tree(&[&[], &[5]], uni, 1);
        let g = generated_subtree(&[&b0, &b1], &never, 10, 1);
        assert_eq!(g.tree.height(), 1);
        assert_eq!(g.alive, vec![vec![2]]);

        // Increasingness filters non-ascending extensions.
        let lo = tree(&[&[], &[5]], uni, 1);
        let hi = tree(&[&[], &[3]], uni, 1);
        let g = generated_subtree(&[&lo, &hi], &never, 10, 16);
        assert!(g.tree.contains(&[5]));
        assert!(!g.tree.contains(&[5, 3]));
        assert!(g.alive.is_empty(), "nothing extendible reached level 2");
    }

    #[test]
    fn generated_subtree_prunes_exactly_when_witness_appears() {
        let uni = SmallSet::below(8);
        let b0 = tree(&[&[], &[1], &[2]], uni, 2);
        let b1 = tree(&[&[], &[4]], uni, 1);
        // Confirms {1} only; nodes whose range contains 1 become childless.
        let psi = parse_predicate("includes 0b10").unwrap();
        let g = generated_subtree(&[&b0, &b1], &psi, 10, 16);
        assert!(g.tree.contains(&[1]));
        assert!(!g.tree.contains(&[1, 4]), "pruned branch must not extend");
        assert!(g.tree.contains(&[2, 4]));
        assert_eq!(g.alive, vec![vec![2, 4]]);
    }
}
