//! Pair colorings with convergence stamps, stability certificates and limit
//! guessing, homogeneity notions, greedy thinning, the tower count #, mixed-
//! radix tuple codes, and binary digit families of unary colorings.

use std::collections::BTreeMap;
use std::fmt;

use crate::set::SmallSet;
use crate::Stage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColoringError {
    ColorOutOfRange { x: u32, y: u32, color: u32, k: u32 },
    /// The stamp convention is broken: a pair converged before an earlier
    /// pair in the same row.
    StampOrder { x: u32, y: u32 },
    ValueOutOfRange { index: usize, value: u32, bound: u32 },
    HashOverflow { k: u32 },
    RadixMismatch,
    EmptyResult,
}

impl fmt::Display for ColoringError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColoringError::ColorOutOfRange { x, y, color, k } => {
                write!(f, "pair ({x},{y}) colored {color}, but k = {k}")
            }
            ColoringError::StampOrder { x, y } => write!(
                f,
                "pair ({x},{y}) converges before ({x},{}), breaking row convergence order",
                y - 1
            ),
            ColoringError::ValueOutOfRange { index, value, bound } => {
                write!(f, "value {value} at {index} exceeds bound {bound}")
            }
            ColoringError::HashOverflow { k } => {
                write!(f, "#({k}) does not fit in 64 bits")
            }
            ColoringError::RadixMismatch => write!(f, "tuple and radix lists disagree"),
            ColoringError::EmptyResult => write!(f, "thinning produced an empty set"),
        }
    }
}

impl std::error::Error for ColoringError {}

fn pair_idx(x: u32, y: u32) -> usize {
    debug_assert!(x < y);
    (y as usize * (y as usize - 1)) / 2 + x as usize
}

/// A total coloring of pairs from `[0, n)` with `k` colors, where each pair
/// carries the stage at which its value first shows up. Within a row (fixed
/// `x`), stamps never decrease as `y` grows, so a converged pair means every
/// earlier pair in the row has converged too.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairColoring {
    n: u32,
    k: u32,
    cells: Vec<(u32, Stage)>,
}

impl PairColoring {
    pub fn from_fn(
        n: u32,
        k: u32,
        mut f: impl FnMut(u32, u32) -> (u32, Stage),
    ) -> Result<Self, ColoringError> {
        let mut cells = vec![(0, 0); (n as usize * n.saturating_sub(1) as usize) / 2];
        for y in 1..n {
            for x in 0..y {
                let (c, s) = f(x, y);
                if c >= k {
                    return Err(ColoringError::ColorOutOfRange { x, y, color: c, k });
                }
                cells[pair_idx(x, y)] = (c, s);
            }
        }
        // Row convention: stamps nondecreasing in y for each fixed x.
        for x in 0..n {
            for y in x + 2..n {
                if cells[pair_idx(x, y)].1 < cells[pair_idx(x, y - 1)].1 {
                    return Err(ColoringError::StampOrder { x, y });
                }
            }
        }
        Ok(PairColoring { n, k, cells })
    }

    /// The canonical stable coloring of a limit map: `d(x,y) = limits[x]`,
    /// with the pair `(x,y)` converging at stage `y+1`.
    pub fn canonical_stable(limits: &[u32], k: u32) -> Self {
        let n = limits.len() as u32;
        PairColoring::from_fn(n, k, |x, y| (limits[x as usize], y + 1))
            .expect("constant rows with increasing stamps always validate")
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Eventual value of the pair.
    pub fn value(&self, x: u32, y: u32) -> u32 {
        self.cells[pair_idx(x, y)].0
    }

    /// Stage-gated value: present once the stage clock reaches the stamp.
    pub fn value_by(&self, x: u32, y: u32, s: Stage) -> Option<u32> {
        let (c, stamp) = self.cells[pair_idx(x, y)];
        (stamp <= s).then_some(c)
    }

    pub fn stamp(&self, x: u32, y: u32) -> Stage {
        self.cells[pair_idx(x, y)].1
    }

    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![format!("pairs n={} k={}", self.n, self.k)];
        for y in 1..self.n {
            for x in 0..y {
                let (c, s) = self.cells[pair_idx(x, y)];
                out.push(format!("entry {x} {y} = {c} @ {s}"));
            }
        }
        out.push("end".to_string());
        out
    }

    pub fn from_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self, String> {
        let header = lines.next().ok_or("expected pairs header")?.trim();
        let rest = header
            .strip_prefix("pairs ")
            .ok_or_else(|| format!("expected `pairs …`, got {header:?}"))?;
        let mut n = None;
        let mut k = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("n=") {
                n = v.parse::<u32>().ok();
            } else if let Some(v) = field.strip_prefix("k=") {
                k = v.parse::<u32>().ok();
            }
        }
        let (n, k) = match (n, k) {
            (Some(n), Some(k)) => (n, k),
            _ => return Err(format!("bad pairs header {header:?}")),
        };
        let mut map = BTreeMap::new();
        for line in lines {
            let line = line.trim();
            if line == "end" {
                return PairColoring::from_fn(n, k, |x, y| {
                    *map.get(&(x, y)).unwrap_or(&(0, 0))
                })
                .map_err(|e| e.to_string())
                .and_then(|pc| {
                    let expected = (n as usize * n.saturating_sub(1) as usize) / 2;
                    if map.len() == expected {
                        Ok(pc)
                    } else {
                        Err(format!("expected {expected} entries, got {}", map.len()))
                    }
                });
            }
            let rest = line
                .strip_prefix("entry ")
                .ok_or_else(|| format!("expected `entry …` or `end`, got {line:?}"))?;
            let (lhs, rhs) = rest.split_once('=').ok_or_else(|| format!("bad entry {line:?}"))?;
            let coords: Vec<u32> = lhs
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| format!("bad coordinate {t:?}")))
                .collect::<Result<_, _>>()?;
            let (val, stamp) = rhs.split_once('@').ok_or_else(|| format!("bad entry {line:?}"))?;
            let c: u32 = val.trim().parse().map_err(|_| format!("bad color {val:?}"))?;
            let s: Stage = stamp.trim().parse().map_err(|_| format!("bad stage {stamp:?}"))?;
            if coords.len() != 2 || coords[0] >= coords[1] || coords[1] >= n {
                return Err(format!("bad coordinates in {line:?}"));
            }
            map.insert((coords[0], coords[1]), (c, s));
        }
        Err("unterminated pairs block".to_string())
    }
}

/// Per-row limit claims: `x` settles to `color` from `threshold` on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StabilityCert {
    pub limits: BTreeMap<u32, (u32, u32)>,
}

impl StabilityCert {
    pub fn color_of(&self, x: u32) -> Option<u32> {
        self.limits.get(&x).map(|&(c, _)| c)
    }
}

/// Verify a certificate row by row: `d(x,y) = color` for every
/// `y ∈ [max(threshold, x+1), n)`.
pub fn check_stability(d: &PairColoring, cert: &StabilityCert) -> bool {
    cert.limits.iter().all(|(&x, &(color, z))| {
        x < d.n() && (z.max(x + 1)..d.n()).all(|y| d.value(x, y) == color)
    })
}

/// Derive the exact certificate of a coloring: each row's final value with
/// the least threshold it is constant from. Rows with no pairs are omitted.
pub fn derive_stability(d: &PairColoring) -> StabilityCert {
    let mut limits = BTreeMap::new();
    for x in 0..d.n().saturating_sub(1) {
        let last = d.value(x, d.n() - 1);
        let mut z = x + 1;
        for y in (x + 1..d.n()).rev() {
            if d.value(x, y) != last {
                z = y + 1;
                break;
            }
        }
        limits.insert(x, (last, z));
    }
    StabilityCert { limits }
}

/// The stage-bounded limit guess: the value of `d(x,y)` for the largest
/// `y ≤ s` that has converged by `s`; none if no pair in the row has.
pub fn guess_limit(d: &PairColoring, x: u32, s: Stage) -> Option<u32> {
    let hi = d.n().saturating_sub(1).min(s);
    (x + 1..=hi).rev().find_map(|y| d.value_by(x, y, s))
}

/// Every pair inside `h` has eventual color `j`.
pub fn is_homogeneous(h: SmallSet, d: &PairColoring, j: u32) -> bool {
    let elems = h.to_vec();
    elems.iter().enumerate().all(|(i, &x)| {
        elems[i + 1..].iter().all(|&y| y < d.n() && d.value(x, y) == j)
    })
}

/// Every element of `l` limits to `j` according to the certificate, and the
/// certificate's rows for those elements actually hold of `d`.
pub fn is_limit_homogeneous(l: SmallSet, d: &PairColoring, cert: &StabilityCert, j: u32) -> bool {
    l.iter().all(|x| match cert.limits.get(&x) {
        Some(&(color, z)) => {
            color == j && (z.max(x + 1)..d.n()).all(|y| d.value(x, y) == color)
        }
        None => false,
    })
}

/// A total coloring of `[0, n)` with `m` colors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnaryColoring {
    values: Vec<u32>,
    m: u32,
}

impl UnaryColoring {
    pub fn new(values: Vec<u32>, m: u32) -> Result<Self, ColoringError> {
        for (index, &value) in values.iter().enumerate() {
            if value >= m {
                return Err(ColoringError::ValueOutOfRange { index, value, bound: m });
            }
        }
        Ok(UnaryColoring { values, m })
    }

    pub fn n(&self) -> u32 {
        self.values.len() as u32
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn value(&self, x: u32) -> u32 {
        self.values[x as usize]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn to_lines(&self) -> Vec<String> {
        let vals = self
            .values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            format!("unary n={} m={}", self.values.len(), self.m),
            format!("values {vals}"),
            "end".to_string(),
        ]
    }

    pub fn from_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self, String> {
        let header = lines.next().ok_or("expected unary header")?.trim();
        let rest = header
            .strip_prefix("unary ")
            .ok_or_else(|| format!("expected `unary …`, got {header:?}"))?;
        let mut n = None;
        let mut m = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("n=") {
                n = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("m=") {
                m = v.parse::<u32>().ok();
            }
        }
        let (n, m) = match (n, m) {
            (Some(n), Some(m)) => (n, m),
            _ => return Err(format!("bad unary header {header:?}")),
        };
        let vline = lines.next().ok_or("expected values line")?.trim();
        let body = vline
            .strip_prefix("values")
            .ok_or_else(|| format!("expected `values …`, got {vline:?}"))?
            .trim();
        let values: Vec<u32> = if body.is_empty() {
            Vec::new()
        } else {
            body.split(',')
                .map(|t| t.trim().parse().map_err(|_| format!("bad value {t:?}")))
                .collect::<Result<_, _>>()?
        };
        if values.len() != n {
            return Err(format!("expected {n} values, got {}", values.len()));
        }
        match lines.next().map(str::trim) {
            Some("end") => UnaryColoring::new(values, m).map_err(|e| e.to_string()),
            other => Err(format!("expected `end`, got {other:?}")),
        }
    }
}

/// Constant on the part of `s` at or above `threshold` (vacuous when that
/// part has at most one element).
pub fn is_almost_homogeneous(s: SmallSet, c: &UnaryColoring, threshold: u32) -> bool {
    let mut tail = s.iter().filter(|&x| x >= threshold && x < c.n());
    match tail.next() {
        None => true,
        Some(first) => {
            let v = c.value(first);
            tail.all(|x| c.value(x) == v)
        }
    }
}

/// Greedily thin a limit-homogeneous set to a homogeneous one: take `x ∈ l`
/// in increasing order when it pairs with color `j` against everything
/// chosen and clears every chosen element's stability threshold.
pub fn thin_to_homogeneous(
    l: SmallSet,
    d: &PairColoring,
    cert: &StabilityCert,
    j: u32,
) -> Result<SmallSet, ColoringError> {
    let mut h: Vec<u32> = Vec::new();
    for x in l.iter().filter(|&x| x < d.n()) {
        let ok = h.iter().all(|&prev| {
            let threshold = cert.limits.get(&prev).map_or(0, |&(_, z)| z);
            x >= threshold && d.value(prev, x) == j
        });
        if ok {
            h.push(x);
        }
    }
    if h.is_empty() {
        return Err(ColoringError::EmptyResult);
    }
    Ok(h.into_iter().collect())
}

// ---------------------------------------------------------------------------
// The tower count # and tuple codes
// ---------------------------------------------------------------------------

/// `#(0) = 1` and `#(k) = (k+1) · #(k−1)^k`.
pub fn hash_count(k: u32) -> Result<u64, ColoringError> {
    if k > 4 {
        return Err(ColoringError::HashOverflow { k });
    }
    let mut h: u64 = 1;
    for i in 1..=k {
        let mut pow: u64 = 1;
        for _ in 0..i {
            pow = pow.checked_mul(h).ok_or(ColoringError::HashOverflow { k })?;
        }
        h = (i as u64 + 1)
            .checked_mul(pow)
            .ok_or(ColoringError::HashOverflow { k })?;
    }
    Ok(h)
}

/// Mixed-radix code of a tuple, first coordinate most significant.
pub fn encode_tuple(values: &[u32], radices: &[u32]) -> Result<u64, ColoringError> {
    if values.len() != radices.len() {
        return Err(ColoringError::RadixMismatch);
    }
    let mut acc: u64 = 0;
    for (&v, &r) in values.iter().zip(radices) {
        if v >= r {
            return Err(ColoringError::RadixMismatch);
        }
        acc = acc
            .checked_mul(r as u64)
            .and_then(|a| a.checked_add(v as u64))
            .ok_or(ColoringError::RadixMismatch)?;
    }
    Ok(acc)
}

/// Inverse of [`encode_tuple`].
pub fn decode_tuple(code: u64, radices: &[u32]) -> Result<Vec<u32>, ColoringError> {
    let mut out = vec![0u32; radices.len()];
    let mut rest = code;
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = (rest % r as u64) as u32;
        rest /= r as u64;
    }
    if rest != 0 {
        return Err(ColoringError::RadixMismatch);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Digit families
// ---------------------------------------------------------------------------

/// Bits needed to write every value below `total`: `⌊log₂(total−1)⌋ + 1`,
/// with a single digit when only the value 0 exists.
pub fn digit_width(total: u64) -> u32 {
    match total.saturating_sub(1) {
        0 => 1,
        max => 64 - max.leading_zeros(),
    }
}

/// Zero-padded binary digits of `value`, index 0 most significant.
pub fn digits_msb(value: u64, width: u32) -> Vec<u8> {
    (0..width)
        .map(|i| ((value >> (width - 1 - i)) & 1) as u8)
        .collect()
}

/// The 0/1 columns of a unary coloring's binary digits: column `s` holds the
/// numbers whose `s`-th digit (0 = most significant, zero-padded) is 1.
/// Columns at or beyond the width are identically zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitFamily {
    pub width: u32,
    pub n: u32,
    columns: Vec<SmallSet>,
}

impl DigitFamily {
    pub fn column(&self, s: u32) -> SmallSet {
        self.columns.get(s as usize).copied().unwrap_or_default()
    }

    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![format!("digits width={} n={}", self.width, self.n)];
        for (s, col) in self.columns.iter().enumerate() {
            let bits: String = (0..self.n)
                .map(|x| if col.contains(x) { '1' } else { '0' })
                .collect();
            out.push(format!("column {s} {bits}"));
        }
        out.push("end".to_string());
        out
    }
}

/// Digit columns of `e` as a coloring into `#(k)` colors; the width is
/// determined by `#(k)`.
pub fn digit_family(e: &UnaryColoring, k: u32) -> Result<DigitFamily, ColoringError> {
    let total = hash_count(k)?;
    if e.m() as u64 != total {
        return Err(ColoringError::RadixMismatch);
    }
    Ok(digit_family_with_width(e, digit_width(total)))
}

/// Digit columns with an explicit width (for composed codes whose totals are
/// not tower counts).
pub fn digit_family_with_width(e: &UnaryColoring, width: u32) -> DigitFamily {
    let columns = (0..width)
        .map(|s| {
            (0..e.n())
                .filter(|&x| digits_msb(e.value(x) as u64, width)[s as usize] == 1)
                .collect()
        })
        .collect();
    DigitFamily { width, n: e.n(), columns }
}

/// For every column below `ncols`, the part of `y` at or above `tail_start`
/// lies entirely inside or entirely outside the column.
pub fn is_cohesive_upto(y: SmallSet, family: &DigitFamily, ncols: u32, tail_start: u32) -> bool {
    let tail = y.minus(SmallSet::below(tail_start));
    (0..ncols).all(|s| {
        let col = family.column(s);
        tail.is_subset_of(col) || tail.intersect(col).is_empty()
    })
}
