//! Finite truth-table functionals with explicit use and stage stamps:
//! evaluation against set oracles, use-extension stability, an even/odd
//! oracle join, and a canonical bounded enumeration of all small tables.

use std::fmt;

use crate::set::SmallSet;
use crate::Stage;

/// One table row: if the oracle agrees with `bits` on the positions in
/// `mask`, then on input `x` the functional outputs `output` with use
/// `use_bound`, first available at `stage`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entry {
    // Field order gives the derived lexicographic order = resolution order:
    // least stage first, then least use, then input and constraint.
    pub stage: Stage,
    pub use_bound: u32,
    pub x: u32,
    pub mask: u64,
    pub bits: u64,
    pub output: u8,
}

impl Entry {
    /// Whether the oracle `a` satisfies this entry's constraint.
    pub fn matches(&self, a: SmallSet, x: u32, stage: Stage) -> bool {
        self.x == x && self.stage <= stage && a.0 & self.mask == self.bits
    }

    fn validate(&self) -> Result<(), TableError> {
        let use_window = if self.use_bound >= 64 { u64::MAX } else { (1u64 << self.use_bound) - 1 };
        let ok = self.bits & !self.mask == 0
            && self.mask & !use_window == 0
            && self.stage >= self.use_bound
            && self.stage > self.x
            && self.output <= 1;
        if ok {
            Ok(())
        } else {
            Err(TableError::BadEntry(*self))
        }
    }

    /// Two constraints that agree on their common domain can both match one
    /// oracle.
    fn compatible(&self, other: &Entry) -> bool {
        let common = self.mask & other.mask;
        self.bits & common == other.bits & common
    }

    pub fn to_line(&self) -> String {
        let list = |s: u64| -> String {
            if s == 0 {
                "-".to_string()
            } else {
                SmallSet(s).iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            }
        };
        format!(
            "{} @ {} ; {} ; {} ; {} ; {}",
            list(self.bits),
            list(self.mask),
            self.x,
            self.output,
            self.use_bound,
            self.stage
        )
    }

    pub fn from_line(line: &str) -> Result<Entry, String> {
        let parts: Vec<&str> = line.split(';').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(format!("entry line needs 5 fields, got {}: {line:?}", parts.len()));
        }
        let (bits_str, mask_str) = parts[0]
            .split_once('@')
            .ok_or_else(|| format!("missing `@` in constraint {:?}", parts[0]))?;
        let parse_set = |s: &str| -> Result<u64, String> {
            let s = s.trim();
            if s == "-" {
                return Ok(0);
            }
            let mut out = 0u64;
            for p in s.split(',').filter(|p| !p.is_empty()) {
                let x: u32 = p.trim().parse().map_err(|_| format!("bad position {p:?}"))?;
                if x > 63 {
                    return Err(format!("position {x} out of range"));
                }
                out |= 1 << x;
            }
            Ok(out)
        };
        let num = |s: &str| -> Result<u32, String> {
            s.parse().map_err(|_| format!("bad number {s:?}"))
        };
        let e = Entry {
            bits: parse_set(bits_str)?,
            mask: parse_set(mask_str)?,
            x: num(parts[1])?,
            output: num(parts[2])? as u8,
            use_bound: num(parts[3])?,
            stage: num(parts[4])?,
        };
        e.validate().map_err(|e| e.to_string())?;
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableError {
    BadEntry(Entry),
    /// Two compatible constraints on the same input disagree on output.
    Inconsistent(Entry, Entry),
}

impl fmt::Display for TableError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableError::BadEntry(e) => write!(f, "entry violates use discipline: {}", e.to_line()),
            TableError::Inconsistent(a, b) => write!(
                f,
                "entries disagree on a shared oracle: {} vs {}",
                a.to_line(),
                b.to_line()
            ),
        }
    }
}

impl std::error::Error for TableError {}

/// A {0,1}-valued functional given by finitely many table rows. Immutable
/// and consistency-checked after construction, so evaluation is total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableFunctional {
    entries: Vec<Entry>,
    id: u64,
}

impl TableFunctional {
    pub fn new(mut entries: Vec<Entry>, id: u64) -> Result<Self, TableError> {
        for e in &entries {
            e.validate()?;
        }
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let (a, b) = (&entries[i], &entries[j]);
                if a.x == b.x && a.compatible(b) && a.output != b.output {
                    return Err(TableError::Inconsistent(*a, *b));
                }
            }
        }
        entries.sort();
        entries.dedup();
        Ok(TableFunctional { entries, id })
    }

    pub fn empty(id: u64) -> Self {
        TableFunctional { entries: Vec::new(), id }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![format!("table id={} entries={}", self.id, self.entries.len())];
        out.extend(self.entries.iter().map(Entry::to_line));
        out.push("end".to_string());
        out
    }

    pub fn from_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self, String> {
        let header = lines.next().ok_or("expected table header")?.trim();
        let rest = header
            .strip_prefix("table ")
            .ok_or_else(|| format!("expected `table …`, got {header:?}"))?;
        let mut id = None;
        let mut count = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("id=") {
                id = v.parse::<u64>().ok();
            } else if let Some(v) = field.strip_prefix("entries=") {
                count = v.parse::<usize>().ok();
            }
        }
        let (id, count) = match (id, count) {
            (Some(i), Some(c)) => (i, c),
            _ => return Err(format!("bad table header {header:?}")),
        };
        let mut entries = Vec::with_capacity(count);
        for line in lines {
            let line = line.trim();
            if line == "end" {
                if entries.len() != count {
                    return Err(format!(
                        "table declares {count} entries but has {}",
                        entries.len()
                    ));
                }
                return TableFunctional::new(entries, id).map_err(|e| e.to_string());
            }
            entries.push(Entry::from_line(line)?);
        }
        Err("unterminated table block".to_string())
    }
}

/// Result of evaluating a functional on an oracle at an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    Convergent { value: u8, use_bound: u32 },
    Divergent,
}

impl Evaluation {
    pub fn value(&self) -> Option<u8> {
        match self {
            Evaluation::Convergent { value, .. } => Some(*value),
            Evaluation::Divergent => None,
        }
    }

    pub fn use_bound(&self) -> Option<u32> {
        match self {
            Evaluation::Convergent { use_bound, .. } => Some(*use_bound),
            Evaluation::Divergent => None,
        }
    }

    pub fn converges_to(&self, v: u8) -> bool {
        self.value() == Some(v)
    }
}

/// Evaluate `psi` on oracle `a` at input `x` by `stage`: the first matching
/// entry in resolution order (least stage, then least use) decides.
pub fn eval_on_set(psi: &TableFunctional, a: SmallSet, x: u32, stage: Stage) -> Evaluation {
    for e in psi.entries() {
        if e.matches(a, x, stage) {
            return Evaluation::Convergent { value: e.output, use_bound: e.use_bound };
        }
    }
    Evaluation::Divergent
}

/// Least stage at which `eval_on_set` first converges on `(a, x)`, if it
/// does by `horizon`. Entry stages make evaluation monotone in the stage.
pub fn least_convergence_stage(
    psi: &TableFunctional,
    a: SmallSet,
    x: u32,
    horizon: Stage,
) -> Option<Stage> {
    psi.entries()
        .iter()
        .filter(|e| e.stage <= horizon && e.matches(a, x, e.stage))
        .map(|e| e.stage)
        .min()
}

/// The set the functional carves out of `[0, bound)` over oracle `a`.
pub fn defined_set(psi: &TableFunctional, a: SmallSet, bound: u32, stage: Stage) -> SmallSet {
    (0..bound)
        .filter(|&x| eval_on_set(psi, a, x, stage).converges_to(1))
        .collect()
}

/// Whether extending the oracle from `f` to `h ⊇ f` preserves the
/// computation at `x`: true iff `h` agrees with `f` below the use, in which
/// case the evaluations are checked equal.
pub fn use_extension_stability(
    psi: &TableFunctional,
    f: SmallSet,
    h: SmallSet,
    x: u32,
    stage: Stage,
) -> bool {
    debug_assert!(f.is_subset_of(h), "callers extend f to h");
    let u = match eval_on_set(psi, f, x, stage) {
        Evaluation::Convergent { use_bound, .. } => use_bound,
        Evaluation::Divergent => return false,
    };
    let window = SmallSet::below(u.min(64));
    let stable = h.intersect(window) == f.intersect(window);
    if stable {
        debug_assert_eq!(
            eval_on_set(psi, f, x, stage).value(),
            eval_on_set(psi, h, x, stage).value(),
            "a use-respecting extension cannot change the value"
        );
    }
    stable
}

/// Even/odd join of two oracles: `x` goes to `2x`, `y` to `2y+1`. Halves
/// must fit below 32.
pub fn join(x: SmallSet, y: SmallSet) -> SmallSet {
    debug_assert!(x.max().is_none_or(|m| m < 32) && y.max().is_none_or(|m| m < 32));
    let mut out = SmallSet::empty();
    for e in x.iter() {
        out.insert(2 * e);
    }
    for e in y.iter() {
        out.insert(2 * e + 1);
    }
    out
}

/// Inverse of [`join`].
pub fn split(a: SmallSet) -> (SmallSet, SmallSet) {
    let mut x = SmallSet::empty();
    let mut y = SmallSet::empty();
    for e in a.iter() {
        if e % 2 == 0 {
            x.insert(e / 2);
        } else {
            y.insert(e / 2);
        }
    }
    (x, y)
}

// ---------------------------------------------------------------------------
// Canonical bounded enumeration
// ---------------------------------------------------------------------------

/// Bounds for the canonical table enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationParams {
    /// Constraints are oracle prefixes of length up to this.
    pub max_use: u32,
    /// Inputs range over `[0, max_x)`.
    pub max_x: u32,
    /// Tables take at most this many rows from the pool.
    pub max_entries: usize,
}

impl EnumerationParams {
    pub fn new(max_use: u32, max_x: u32, max_entries: usize) -> Self {
        assert!(max_use < 32 && max_x > 0);
        EnumerationParams { max_use, max_x, max_entries }
    }
}

/// The canonical entry pool: every oracle-prefix constraint of length
/// `len ≤ max_use` (all `2^len` bit patterns), on every input `x < max_x`,
/// with output 1, use `len`, and stage `max(len, x+1)`.
///
/// Prefix constraints on a common input are always compatible-and-agreeing
/// (they output 1), so every subset of the pool is a consistent table.
pub fn entry_pool(params: EnumerationParams) -> Vec<Entry> {
    let mut pool = Vec::new();
    for len in 0..=params.max_use {
        let mask = (1u64 << len) - 1;
        for bits in 0..(1u64 << len) {
            for x in 0..params.max_x {
                pool.push(Entry {
                    stage: len.max(x + 1),
                    use_bound: len,
                    x,
                    mask,
                    bits,
                    output: 1,
                });
            }
        }
    }
    pool
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out = 1u64;
    for i in 0..k {
        out = out * (n - i) / (i + 1);
    }
    out
}

/// How many tables the enumeration contains: all subsets of the pool of
/// size up to `max_entries`.
pub fn table_count(params: EnumerationParams) -> u64 {
    let n = entry_pool(params).len() as u64;
    (0..=params.max_entries as u64).map(|m| binomial(n, m)).sum()
}

/// The `idx`-th table of the enumeration: subsets ordered by size, then by
/// the colexicographic rank of their sorted index tuple.
pub fn table_by_index(pool: &[Entry], params: EnumerationParams, idx: u64) -> TableFunctional {
    let n = pool.len() as u64;
    let mut rank = idx;
    let mut size = 0u64;
    loop {
        let block = binomial(n, size);
        if rank < block {
            break;
        }
        rank -= block;
        size += 1;
        assert!(
            size <= params.max_entries as u64,
            "index beyond the enumeration"
        );
    }
    // Colexicographic unranking of the `rank`-th size-`size` subset.
    let mut members = Vec::with_capacity(size as usize);
    let mut m = size;
    let mut hi = n;
    while m > 0 {
        // Largest c with binomial(c, m) <= rank.
        let mut c = m - 1;
        while c + 1 < hi && binomial(c + 1, m) <= rank {
            c += 1;
        }
        rank -= binomial(c, m);
        members.push(c);
        hi = c;
        m -= 1;
    }
    members.reverse();
    let entries: Vec<Entry> = members.iter().map(|&i| pool[i as usize]).collect();
    TableFunctional::new(entries, idx).expect("pool subsets are consistent by construction")
}

/// Iterate every table of the enumeration in index order.
pub fn enumerate_tables(params: EnumerationParams) -> impl Iterator<Item = TableFunctional> {
    let pool = entry_pool(params);
    let total = table_count(params);
    (0..total).map(move |i| table_by_index(&pool, params, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(mask: u64, bits: u64, x: u32, output: u8, use_bound: u32, stage: Stage) -> Entry {
        Entry { stage, use_bound, x, mask, bits, output }
    }

    #[test]
    fn empty_table_diverges() {
        let t = TableFunctional::empty(0);
        assert_eq!(eval_on_set(&t, SmallSet::from_slice(&[1, 2]), 3, 100), Evaluation::Divergent);
    }

    #[test]
    fn empty_constraint_matches_any_oracle() {
        let t = TableFunctional::new(vec![entry(0, 0, 5, 1, 0, 6)], 1).unwrap();
        assert!(eval_on_set(&t, SmallSet::empty(), 5, 6).converges_to(1));
        assert!(eval_on_set(&t, SmallSet::from_slice(&[0, 9]), 5, 10).converges_to(1));
        // Before the entry's stage: divergent.
        assert_eq!(eval_on_set(&t, SmallSet::empty(), 5, 5), Evaluation::Divergent);
        // Wrong input: divergent.
        assert_eq!(eval_on_set(&t, SmallSet::empty(), 4, 10), Evaluation::Divergent);
    }

    #[test]
    fn use_discipline_rejected_at_construction() {
        // Domain outside [0, use).
        assert!(TableFunctional::new(vec![entry(0b100, 0, 0, 1, 2, 5)], 0).is_err());
        // Stage below use.
        assert!(TableFunctional::new(vec![entry(0b1, 1, 0, 1, 1, 0)], 0).is_err());
        // Stage not above input.
        assert!(TableFunctional::new(vec![entry(0, 0, 5, 1, 0, 5)], 0).is_err());
        // Bits outside mask.
        assert!(TableFunctional::new(vec![entry(0b1, 0b11, 0, 1, 2, 5)], 0).is_err());
    }

    #[test]
    fn inconsistent_pair_rejected() {
        // Compatible constraints ({0} set vs {1} clear share no domain) on
        // the same input with different outputs.
        let a = entry(0b01, 0b01, 3, 1, 1, 4);
        let b = entry(0b10, 0b00, 3, 0, 2, 4);
        assert!(matches!(
            TableFunctional::new(vec![a, b], 0),
            Err(TableError::Inconsistent(..))
        ));
        // Incompatible constraints may disagree freely.
        let c = entry(0b1, 0b1, 3, 1, 1, 4);
        let d = entry(0b1, 0b0, 3, 0, 1, 4);
        assert!(TableFunctional::new(vec![c, d], 0).is_ok());
    }

    /// Plain linear-scan oracle: collect all matching entries, check they
    /// agree, and resolve by the (stage, use) order explicitly.
    fn eval_reference(t: &TableFunctional, a: SmallSet, x: u32, stage: Stage) -> Evaluation {
        let mut hits: Vec<&Entry> = t
            .entries()
            .iter()
            .filter(|e| e.x == x && e.stage <= stage && a.0 & e.mask == e.bits)
            .collect();
        hits.sort_by_key(|e| (e.stage, e.use_bound));
        match hits.first() {
            Some(e) => {
                assert!(hits.iter().all(|h| h.output == e.output), "consistency");
                Evaluation::Convergent { value: e.output, use_bound: e.use_bound }
            }
            None => Evaluation::Divergent,
        }
    }

    #[test]
    fn eval_agrees_with_reference_on_random_tables() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut built = 0;
        while built < 50 {
            let n = rng.gen_range(0..5);
            let entries: Vec<Entry> = (0..n)
                .map(|_| {
                    let u = rng.gen_range(0..6u32);
                    let mask: u64 = rng.gen_range(0..(1u64 << u));
                    let bits = rng.gen_range(0..=mask) & mask;
                    let x = rng.gen_range(0..6u32);
                    entry(mask, bits, x, rng.gen_range(0..2u8), u, u.max(x + 1) + rng.gen_range(0..3))
                })
                .collect();
            let t = match TableFunctional::new(entries, built) {
                Ok(t) => t,
                Err(_) => continue,
            };
            built += 1;
            for _ in 0..40 {
                let a = SmallSet(rng.gen_range(0..64));
                let x = rng.gen_range(0..6);
                let s = rng.gen_range(0..12);
                assert_eq!(eval_on_set(&t, a, x, s), eval_reference(&t, a, x, s));
            }
        }
    }

    #[test]
    fn defined_set_aggregates_pointwise() {
        let t = TableFunctional::new(
            vec![entry(0b1, 0b1, 0, 1, 1, 2), entry(0b1, 0b1, 2, 1, 1, 3)],
            0,
        )
        .unwrap();
        let a = SmallSet::singleton(0);
        assert_eq!(defined_set(&t, a, 4, 10), SmallSet::from_slice(&[0, 2]));
        assert_eq!(defined_set(&t, a, 4, 2), SmallSet::from_slice(&[0]));
        assert_eq!(defined_set(&t, SmallSet::empty(), 4, 10), SmallSet::empty());
    }

    #[test]
    fn least_convergence_stage_is_exact() {
        let t = TableFunctional::new(
            vec![entry(0b1, 0b1, 0, 1, 1, 7), entry(0b11, 0b01, 0, 1, 2, 3)],
            0,
        )
        .unwrap();
        // Oracle {0}: both entries match; the second is available at 3.
        assert_eq!(least_convergence_stage(&t, SmallSet::singleton(0), 0, 10), Some(3));
        // Oracle {0,1}: only the first (mask {0,1} wants bit 1 clear fails).
        assert_eq!(
            least_convergence_stage(&t, SmallSet::from_slice(&[0, 1]), 0, 10),
            Some(7)
        );
        assert_eq!(least_convergence_stage(&t, SmallSet::empty(), 0, 10), None);
        // Horizon cuts it off.
        assert_eq!(least_convergence_stage(&t, SmallSet::singleton(0), 0, 2), None);
        // Cross-check against stepping eval.
        for s in 0..10 {
            let e = eval_on_set(&t, SmallSet::singleton(0), 0, s);
            assert_eq!(e.value().is_some(), s >= 3);
        }
    }

    #[test]
    fn use_extension_cases() {
        // Constraint reads positions {0,1}; use 2.
        let t = TableFunctional::new(vec![entry(0b11, 0b01, 0, 1, 2, 3)], 0).unwrap();
        let f = SmallSet::singleton(0);
        assert!(use_extension_stability(&t, f, f, 0, 10), "h = f");
        let h_hi = f.with(5);
        assert!(use_extension_stability(&t, f, h_hi, 0, 10), "added element above use");
        assert!(eval_on_set(&t, h_hi, 0, 10).converges_to(1));
        let h_lo = f.with(1);
        assert!(!use_extension_stability(&t, f, h_lo, 0, 10), "changed below use");
        assert_eq!(eval_on_set(&t, h_lo, 0, 10), Evaluation::Divergent);
    }

    #[test]
    fn monotone_use_property_on_enumeration_slice() {
        let params = EnumerationParams::new(3, 3, 2);
        for t in enumerate_tables(params).step_by(97) {
            for a_bits in 0..32u64 {
                let a = SmallSet(a_bits);
                for x in 0..3 {
                    if let Evaluation::Convergent { value, use_bound } =
                        eval_on_set(&t, a, x, 100)
                    {
                        let window = SmallSet::below(use_bound);
                        for b_bits in 0..32u64 {
                            let b = SmallSet(b_bits);
                            if b.intersect(window) == a.intersect(window) {
                                assert_eq!(
                                    eval_on_set(&t, b, x, 100).value(),
                                    Some(value),
                                    "table {} a={a} b={b} x={x}",
                                    t.id()
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn join_is_bit_exact_and_splits_back() {
        let x = SmallSet::from_slice(&[0, 2]);
        let y = SmallSet::singleton(1);
        assert_eq!(join(x, y), SmallSet::from_slice(&[0, 3, 4]));
        assert_eq!(split(join(x, y)), (x, y));
        assert_eq!(join(SmallSet::empty(), SmallSet::empty()), SmallSet::empty());
    }

    #[test]
    fn pool_size_and_table_count_match_formulas() {
        let params = EnumerationParams::new(4, 4, 3);
        let pool = entry_pool(params);
        assert_eq!(pool.len(), 31 * 4, "2^0+…+2^4 prefixes times 4 inputs");
        let n = pool.len() as u64;
        let expect = 1 + n + n * (n - 1) / 2 + n * (n - 1) * (n - 2) / 6;
        assert_eq!(table_count(params), expect);
        assert_eq!(table_count(params), 317_875);
    }

    #[test]
    fn enumeration_is_injective_and_ordered_small() {
        let params = EnumerationParams::new(1, 2, 2);
        let pool = entry_pool(params);
        let total = table_count(params);
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..total {
            let t = table_by_index(&pool, params, i);
            assert!(t.entries().len() <= 2);
            assert!(
                seen.insert(t.entries().to_vec()),
                "index {i} repeated a table"
            );
        }
        assert_eq!(seen.len() as u64, total);
    }

    #[test]
    fn enumeration_is_deterministic() {
        let params = EnumerationParams::new(2, 2, 2);
        let a: Vec<_> = enumerate_tables(params).map(|t| t.to_lines().join("|")).collect();
        let b: Vec<_> = enumerate_tables(params).map(|t| t.to_lines().join("|")).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn table_text_roundtrip() {
        let t = TableFunctional::new(
            vec![entry(0b11, 0b01, 0, 1, 2, 3), entry(0, 0, 1, 0, 0, 2)],
            42,
        )
        .unwrap();
        let text = t.to_lines().join("\n");
        let back = TableFunctional::from_lines(&mut text.lines()).unwrap();
        assert_eq!(back, t);
        assert!(TableFunctional::from_lines(&mut "table id=0 entries=1\nend".lines()).is_err());
    }
}
