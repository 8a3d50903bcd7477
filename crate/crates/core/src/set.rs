//! Small finite sets of natural numbers as 64-bit masks, increasing strings,
//! and the canonical orderings both are searched in.

use std::fmt;

/// A subset of `{0, …, 63}` stored as a bitmask.
///
/// The mask itself is the canonical index of the set (the sum of `2^x` over
/// members), so numeric order on the mask is canonical-index order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SmallSet(pub u64);

impl SmallSet {
    pub const EMPTY: SmallSet = SmallSet(0);

    /// Largest element any `SmallSet` can hold.
    pub const MAX_ELEM: u32 = 63;

    pub fn empty() -> Self {
        SmallSet(0)
    }

    pub fn singleton(x: u32) -> Self {
        debug_assert!(x <= Self::MAX_ELEM);
        SmallSet(1u64 << x)
    }

    /// `{lo, lo+1, …, hi-1}`; empty when `lo >= hi`.
    pub fn interval(lo: u32, hi: u32) -> Self {
        if lo >= hi {
            return SmallSet(0);
        }
        debug_assert!(hi <= 64);
        let upto_hi = if hi == 64 { u64::MAX } else { (1u64 << hi) - 1 };
        let upto_lo = (1u64 << lo) - 1;
        SmallSet(upto_hi & !upto_lo)
    }

    /// `{0, …, n-1}`.
    pub fn below(n: u32) -> Self {
        Self::interval(0, n)
    }

    pub fn from_slice(xs: &[u32]) -> Self {
        let mut s = SmallSet(0);
        for &x in xs {
            s.insert(x);
        }
        s
    }

    pub fn insert(&mut self, x: u32) {
        debug_assert!(x <= Self::MAX_ELEM);
        self.0 |= 1u64 << x;
    }

    pub fn remove(&mut self, x: u32) {
        if x <= Self::MAX_ELEM {
            self.0 &= !(1u64 << x);
        }
    }

    pub fn contains(&self, x: u32) -> bool {
        x <= Self::MAX_ELEM && (self.0 >> x) & 1 == 1
    }

    pub fn with(mut self, x: u32) -> Self {
        self.insert(x);
        self
    }

    pub fn without(mut self, x: u32) -> Self {
        self.remove(x);
        self
    }

    pub fn union(self, other: Self) -> Self {
        SmallSet(self.0 | other.0)
    }

    pub fn intersect(self, other: Self) -> Self {
        SmallSet(self.0 & other.0)
    }

    pub fn minus(self, other: Self) -> Self {
        SmallSet(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn min(self) -> Option<u32> {
        if self.0 == 0 {
            None
        } else {
            Some(self.0.trailing_zeros())
        }
    }

    pub fn max(self) -> Option<u32> {
        if self.0 == 0 {
            None
        } else {
            Some(63 - self.0.leading_zeros())
        }
    }

    /// Canonical index: the sum of `2^x` over members. Identical to the mask.
    pub fn canonical_index(self) -> u64 {
        self.0
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = u32> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let x = rest.trailing_zeros();
                rest &= rest - 1;
                Some(x)
            }
        })
    }

    pub fn to_vec(self) -> Vec<u32> {
        self.iter().collect()
    }

    /// Witness order: first by largest element (empty set least), then by
    /// canonical index. Every witness search in the engine breaks ties this
    /// way, so "least" always means least in this order.
    pub fn witness_cmp(self, other: Self) -> std::cmp::Ordering {
        self.max()
            .cmp(&other.max())
            .then(self.canonical_index().cmp(&other.canonical_index()))
    }

    /// All subsets of `self` in witness order (empty set first, then grouped
    /// by largest element, canonical index ascending within a group).
    pub fn subsets_in_witness_order(self) -> impl Iterator<Item = SmallSet> {
        let window = self;
        let mut emitted_empty = false;
        let mut maxes = window.to_vec().into_iter();
        let mut cur_max: Option<u32> = None;
        // Strictly-below-max part of the window; submasks of it are walked in
        // ascending numeric order via `next = (cur - mask) & mask`.
        let mut low_mask: u64 = 0;
        let mut cur_sub: u64 = 0;
        let mut group_done = true;
        std::iter::from_fn(move || {
            if !emitted_empty {
                emitted_empty = true;
                return Some(SmallSet(0));
            }
            loop {
                if group_done {
                    let m = maxes.next()?;
                    cur_max = Some(m);
                    low_mask = window.0 & ((1u64 << m) - 1);
                    cur_sub = 0;
                    group_done = false;
                    return Some(SmallSet((1u64 << m) | cur_sub));
                }
                let next = cur_sub.wrapping_sub(low_mask) & low_mask;
                if next == 0 {
                    group_done = true;
                    continue;
                }
                cur_sub = next;
                let m = cur_max.unwrap();
                return Some(SmallSet((1u64 << m) | cur_sub));
            }
        })
    }

    /// Least subset of `self` (in witness order) satisfying `pred`.
    pub fn least_subset_where(self, mut pred: impl FnMut(SmallSet) -> bool) -> Option<SmallSet> {
        self.subsets_in_witness_order().find(|&f| pred(f))
    }
}

impl fmt::Debug for SmallSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for SmallSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, x) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<u32> for SmallSet {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        let mut s = SmallSet(0);
        for x in iter {
            s.insert(x);
        }
        s
    }
}

/// A finite strictly increasing string of naturals; the empty string is the
/// root of every tree here. `Vec<u32>`'s derived order is the lexicographic
/// node order used whenever tree nodes are scanned "in order".
pub type Str = Vec<u32>;

/// Whether `s` is strictly increasing.
pub fn is_increasing(s: &[u32]) -> bool {
    s.windows(2).all(|w| w[0] < w[1])
}

/// Range of a string: the set of its entries.
pub fn str_ran(s: &[u32]) -> SmallSet {
    s.iter().copied().collect()
}

/// Display form of a string: entries joined by `.`, the empty string as `-`.
pub fn str_display(s: &[u32]) -> String {
    if s.is_empty() {
        "-".to_string()
    } else {
        s.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// Parse the display form produced by [`str_display`].
pub fn str_parse(text: &str) -> Result<Str, String> {
    let text = text.trim();
    if text == "-" {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in text.split('.') {
        let x: u32 = part
            .trim()
            .parse()
            .map_err(|_| format!("bad string entry {part:?}"))?;
        out.push(x);
    }
    if !is_increasing(&out) {
        return Err(format!("string {text:?} is not increasing"));
    }
    Ok(out)
}

/// Cantor pairing `<n, x>`, used to code families of sets as single sets.
pub fn pair(n: u32, x: u32) -> u32 {
    let s = n + x;
    s * (s + 1) / 2 + x
}

/// Inverse of [`pair`].
pub fn unpair(p: u32) -> (u32, u32) {
    // Largest s with s(s+1)/2 <= p.
    let mut s = 0u32;
    while (s + 1) * (s + 2) / 2 <= p {
        s += 1;
    }
    let x = p - s * (s + 1) / 2;
    let n = s - x;
    (n, x)
}
