//! Finite-universe checking of four reducibility notions between problems.
//!
//! A problem is a finite list of instances (bitset-coded structures), each
//! with a nonempty list of solution sets. A reduction candidate is a pair
//! of table functionals: `forward` sends an instance of the source problem
//! to an instance of the target, `backward` sends a solution back. The four
//! notions differ on two axes:
//!
//! * **uniform** (`u`, `su`): one table pair must work for every instance;
//! * **computable** (`c`, `sc`): each instance may pick its own tables from
//!   a finite candidate space;
//! * the **strong** variants (`su`, `sc`) feed the backward table only the
//!   solution, while the plain variants feed it the instance–solution join.
//!
//! Positive verdicts are exhaustive over every instance and solution at
//! this scale. Negative verdicts for the computable notions are reported as
//! `RefutedAtScale` with the searched space — a statement about the space,
//! never a theorem.

use std::collections::BTreeMap;
use std::fmt;

use crate::functional::{eval_on_set, Entry, TableFunctional};
use crate::set::SmallSet;

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReductError {
    /// Instance and solution lists of different lengths.
    LengthMismatch { instances: usize, solution_lists: usize },
    /// An instance with no solutions (problems must be total).
    NoSolutions { index: usize },
    /// The same instance bitset listed twice: which solutions apply is
    /// ambiguous.
    DuplicateInstance { index: usize },
    /// A solution or instance outside the declared domain.
    OutsideDomain { index: usize, what: String },
    /// The checker was handed a mode it does not cover.
    WrongMode { mode: Mode, checker: &'static str },
    /// The requested object does not fit the fixed word size.
    ScaleBound { what: String },
    /// A problem file line that does not parse.
    Parse { line: usize, message: String },
}

impl fmt::Display for ReductError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReductError::LengthMismatch { instances, solution_lists } => write!(
                f,
                "{instances} instances but {solution_lists} solution lists"
            ),
            ReductError::NoSolutions { index } => {
                write!(f, "instance {index} has no solutions")
            }
            ReductError::DuplicateInstance { index } => {
                write!(f, "instance {index} duplicates an earlier one")
            }
            ReductError::OutsideDomain { index, what } => {
                write!(f, "entry {index}: {what} lies outside the declared domain")
            }
            ReductError::WrongMode { mode, checker } => {
                write!(f, "mode {mode} is not handled by the {checker} checker")
            }
            ReductError::ScaleBound { what } => write!(f, "out of scale: {what}"),
            ReductError::Parse { line, message } => {
                write!(f, "problem text line {line}: {message}")
            }
        }
    }
}

impl std::error::Error for ReductError {}

// ---------------------------------------------------------------------------
// Problems

/// A finitely specified problem: every instance is a bitset over codes
/// below `code_bound`, every solution a subset of `[0, universe)`, and
/// every instance carries at least one solution.
#[derive(Debug, Clone)]
pub struct FiniteProblem {
    name: String,
    universe: u32,
    code_bound: u32,
    instances: Vec<SmallSet>,
    solutions: Vec<Vec<SmallSet>>,
    index: BTreeMap<SmallSet, usize>,
}

impl FiniteProblem {
    pub fn new(
        name: impl Into<String>,
        universe: u32,
        code_bound: u32,
        instances: Vec<SmallSet>,
        solutions: Vec<Vec<SmallSet>>,
    ) -> Result<Self, ReductError> {
        if instances.len() != solutions.len() {
            return Err(ReductError::LengthMismatch {
                instances: instances.len(),
                solution_lists: solutions.len(),
            });
        }
        if universe > 64 || code_bound > 64 {
            return Err(ReductError::ScaleBound {
                what: format!("domain bounds ({universe}, {code_bound}) exceed the word"),
            });
        }
        let mut index = BTreeMap::new();
        for (i, &x) in instances.iter().enumerate() {
            if !x.is_subset_of(SmallSet::below(code_bound)) {
                return Err(ReductError::OutsideDomain {
                    index: i,
                    what: format!("instance {x}"),
                });
            }
            if index.insert(x, i).is_some() {
                return Err(ReductError::DuplicateInstance { index: i });
            }
            if solutions[i].is_empty() {
                return Err(ReductError::NoSolutions { index: i });
            }
            for s in &solutions[i] {
                if !s.is_subset_of(SmallSet::below(universe)) {
                    return Err(ReductError::OutsideDomain {
                        index: i,
                        what: format!("solution {s}"),
                    });
                }
            }
        }
        Ok(FiniteProblem { name: name.into(), universe, code_bound, instances, solutions, index })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Solutions live inside `[0, universe)`.
    pub fn universe(&self) -> u32 {
        self.universe
    }

    /// Instances live inside `[0, code_bound)`; forward tables must be
    /// total on this domain.
    pub fn code_bound(&self) -> u32 {
        self.code_bound
    }

    pub fn instances(&self) -> &[SmallSet] {
        &self.instances
    }

    /// The solution list of an instance, or `None` when the bitset is not
    /// an instance of this problem.
    pub fn solutions_of(&self, instance: SmallSet) -> Option<&[SmallSet]> {
        self.index.get(&instance).map(|&i| self.solutions[i].as_slice())
    }

    /// Serialize to the problem text format (one keyword per line).
    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("problem {}", self.name),
            format!("universe {}", self.universe),
            format!("codes {}", self.code_bound),
        ];
        for (i, &x) in self.instances.iter().enumerate() {
            out.push(format!("instance {}", set_field(x)));
            for &s in &self.solutions[i] {
                out.push(format!("solution {}", set_field(s)));
            }
        }
        out
    }

    /// Parse the problem text format: a `problem`, `universe`, and `codes`
    /// header followed by `instance` lines, each followed by its `solution`
    /// lines. Elements are comma-separated numbers, `-` for the empty set.
    pub fn from_lines(lines: &[impl AsRef<str>]) -> Result<Self, ReductError> {
        let mut name: Option<String> = None;
        let mut universe: Option<u32> = None;
        let mut code_bound: Option<u32> = None;
        let mut instances: Vec<SmallSet> = Vec::new();
        let mut solutions: Vec<Vec<SmallSet>> = Vec::new();
        for (ln, raw) in lines.iter().enumerate() {
            let line = raw.as_ref().trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ReductError::Parse { line: ln + 1, message };
            let (key, rest) = match line.split_once(' ') {
                Some((k, r)) => (k, r.trim()),
                None => return Err(err(format!("expected 'keyword value', got {line:?}"))),
            };
            match key {
                "problem" => name = Some(rest.to_string()),
                "universe" => {
                    universe =
                        Some(rest.parse().map_err(|e| err(format!("bad universe: {e}")))?)
                }
                "codes" => {
                    code_bound =
                        Some(rest.parse().map_err(|e| err(format!("bad code bound: {e}")))?)
                }
                "instance" => {
                    instances.push(parse_set_field(rest).map_err(&err)?);
                    solutions.push(Vec::new());
                }
                "solution" => match solutions.last_mut() {
                    Some(list) => list.push(parse_set_field(rest).map_err(&err)?),
                    None => return Err(err("solution before any instance".to_string())),
                },
                other => return Err(err(format!("unknown keyword {other:?}"))),
            }
        }
        let missing = |what: &str| ReductError::Parse {
            line: lines.len(),
            message: format!("missing {what} header"),
        };
        FiniteProblem::new(
            name.ok_or_else(|| missing("problem"))?,
            universe.ok_or_else(|| missing("universe"))?,
            code_bound.ok_or_else(|| missing("codes"))?,
            instances,
            solutions,
        )
    }
}

fn set_field(s: SmallSet) -> String {
    if s.is_empty() {
        "-".to_string()
    } else {
        s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

fn parse_set_field(text: &str) -> Result<SmallSet, String> {
    if text == "-" {
        return Ok(SmallSet::EMPTY);
    }
    let mut out = SmallSet::EMPTY;
    for part in text.split(',') {
        let x: u32 =
            part.trim().parse().map_err(|e| format!("bad element {part:?}: {e}"))?;
        if x > SmallSet::MAX_ELEM {
            return Err(format!("element {x} exceeds the 64-element word"));
        }
        out.insert(x);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Pigeonhole problems

/// The code of "point `x` has color `c`" in a `k`-coloring instance.
pub fn color_code(x: u32, c: u32, k: u32) -> u32 {
    x * k + c
}

/// The single-dimension pigeonhole problem with `k` colors over `[0, n)`:
/// instances are total colorings (coded one set bit per point), solutions
/// are monochromatic subsets of size at least 2. Requires `k·n ≤ 32` so
/// instances stay joinable under the plain modes, and `n > k` so every
/// coloring repeats some color (the pigeonhole keeps the problem total).
pub fn rt1(k: u32, n: u32) -> Result<FiniteProblem, ReductError> {
    if k == 0 || n == 0 {
        return Err(ReductError::ScaleBound { what: "empty color or point set".to_string() });
    }
    if k * n > 32 {
        return Err(ReductError::ScaleBound {
            what: format!("{k}-colorings of [0,{n}) need {} codes; joins allow 32", k * n),
        });
    }
    if n <= k {
        return Err(ReductError::ScaleBound {
            what: format!(
                "with {n} points and {k} colors a coloring may have no repeated color"
            ),
        });
    }
    let mut instances = Vec::new();
    let mut solutions = Vec::new();
    // Enumerate colorings as base-k counters, least point fastest.
    let total = (k as u64).pow(n);
    for mut idx in 0..total {
        let mut coded = SmallSet::EMPTY;
        let mut classes: Vec<SmallSet> = vec![SmallSet::EMPTY; k as usize];
        for x in 0..n {
            let c = (idx % k as u64) as u32;
            idx /= k as u64;
            coded.insert(color_code(x, c, k));
            classes[c as usize].insert(x);
        }
        let mut sols = Vec::new();
        for class in classes {
            for sub in class.subsets_in_witness_order() {
                if sub.len() >= 2 {
                    sols.push(sub);
                }
            }
        }
        instances.push(coded);
        solutions.push(sols);
    }
    FiniteProblem::new(format!("RT1_{k}@{n}"), n, k * n, instances, solutions)
}

// ---------------------------------------------------------------------------
// Candidates and modes

/// Which of the four reducibility notions a candidate is offered for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    U,
    Su,
    C,
    Sc,
}

impl Mode {
    pub fn is_uniform(self) -> bool {
        matches!(self, Mode::U | Mode::Su)
    }

    /// Strong variants read only the solution; plain variants read the
    /// instance–solution join.
    pub fn is_strong(self) -> bool {
        matches!(self, Mode::Su | Mode::Sc)
    }

    pub fn parse(text: &str) -> Option<Mode> {
        match text {
            "u" => Some(Mode::U),
            "su" => Some(Mode::Su),
            "c" => Some(Mode::C),
            "sc" => Some(Mode::Sc),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::U => write!(f, "u"),
            Mode::Su => write!(f, "su"),
            Mode::C => write!(f, "c"),
            Mode::Sc => write!(f, "sc"),
        }
    }
}

/// A reduction candidate: the forward table maps source instances to
/// target instances, the backward table maps target solutions (joined with
/// the instance unless the mode is strong) to source solutions.
#[derive(Debug, Clone)]
pub struct ReductionCandidate {
    pub forward: TableFunctional,
    pub backward: TableFunctional,
    pub mode: Mode,
}

/// The largest stage a table mentions; evaluating there enables every row.
fn table_horizon(t: &TableFunctional) -> u32 {
    t.entries().iter().map(|e| e.stage).max().unwrap_or(0)
}

/// The image `{ x < bound : table(oracle, x) = 1 }`, or the first input in
/// the domain where the table diverges (totality failure).
pub fn table_image(
    t: &TableFunctional,
    oracle: SmallSet,
    bound: u32,
) -> Result<SmallSet, u32> {
    let horizon = table_horizon(t);
    let mut out = SmallSet::EMPTY;
    for x in 0..bound {
        match eval_on_set(t, oracle, x, horizon).value() {
            Some(1) => out.insert(x),
            Some(_) => {}
            None => return Err(x),
        }
    }
    Ok(out)
}

/// Interleave an instance and a solution into one oracle: bit `2n` holds
/// `x`'s bit `n`, bit `2n+1` holds `y`'s bit `n`. Both halves must fit in
/// 32 bits.
pub fn join_sets(x: SmallSet, y: SmallSet) -> Result<SmallSet, ReductError> {
    if x.max().is_some_and(|m| m >= 32) || y.max().is_some_and(|m| m >= 32) {
        return Err(ReductError::ScaleBound {
            what: format!("join of {x} and {y} needs elements below 32"),
        });
    }
    let mut out = SmallSet::EMPTY;
    for n in x.iter() {
        out.insert(2 * n);
    }
    for n in y.iter() {
        out.insert(2 * n + 1);
    }
    Ok(out)
}

/// Rewrite a solution-only backward table so that it reads the solution off
/// the odd half of an instance–solution join: every constraint bit `n`
/// moves to `2n + 1`. A table that witnesses a strong reduction witnesses
/// the plain one after this transform, which is how the implication arrows
/// `su → u` and `sc → c` are realized constructively.
pub fn on_join_solution_half(
    psi: &TableFunctional,
    id: u64,
) -> Result<TableFunctional, ReductError> {
    let spread = |bits: u64| -> Result<u64, ReductError> {
        let mut out = 0u64;
        for n in SmallSet(bits).iter() {
            if n >= 32 {
                return Err(ReductError::ScaleBound {
                    what: format!("constraint bit {n} cannot move to the odd join half"),
                });
            }
            out |= 1 << (2 * n + 1);
        }
        Ok(out)
    };
    let mut entries = Vec::with_capacity(psi.entries().len());
    for e in psi.entries() {
        let use_bound = 2 * e.use_bound;
        entries.push(Entry {
            stage: e.stage.max(use_bound).max(e.x + 1),
            use_bound,
            x: e.x,
            mask: spread(e.mask)?,
            bits: spread(e.bits)?,
            output: e.output,
        });
    }
    Ok(TableFunctional::new(entries, id)
        .expect("spreading bit positions preserves validity and consistency"))
}

// ---------------------------------------------------------------------------
// Table builders for the bundled problems

/// A forward table recoding a `j`-coloring as a `k`-coloring through the
/// color map `f : [0, j) → [0, k)`. The output bit for "point `x` has color
/// `c`" is the OR of the input bits "point `x` has color `c'`" over
/// `f(c') = c` (constant 0 when no color maps to `c`).
pub fn recolor_table(
    j: u32,
    k: u32,
    n: u32,
    f: impl Fn(u32) -> u32,
    id: u64,
) -> Result<TableFunctional, ReductError> {
    if j * n > 32 || k * n > 64 {
        return Err(ReductError::ScaleBound {
            what: format!("recoloring {j}→{k} over [0,{n}) exceeds the word"),
        });
    }
    for c in 0..j {
        if f(c) >= k {
            return Err(ReductError::OutsideDomain {
                index: c as usize,
                what: format!("color map sends {c} to {}", f(c)),
            });
        }
    }
    let mut entries = Vec::new();
    for x in 0..n {
        for c in 0..k {
            let out_code = color_code(x, c, k);
            let sources: Vec<u32> =
                (0..j).filter(|&cp| f(cp) == c).map(|cp| color_code(x, cp, j)).collect();
            let mask: u64 = sources.iter().map(|&b| 1u64 << b).sum();
            let use_bound = sources.iter().map(|&b| b + 1).max().unwrap_or(0);
            let stage = (out_code + 1).max(use_bound);
            // One row per pattern of the source bits; output 1 unless none
            // of them is set.
            for sub in SmallSet(mask).subsets_in_witness_order() {
                entries.push(Entry {
                    stage,
                    use_bound,
                    x: out_code,
                    mask,
                    bits: sub.0,
                    output: u8::from(!sub.is_empty()),
                });
            }
        }
    }
    Ok(TableFunctional::new(entries, id).expect("recoloring rows are pairwise incompatible"))
}

/// The identity table on subsets of `[0, n)`: output bit `w` equals input
/// bit `w`.
pub fn subset_identity_table(n: u32, id: u64) -> Result<TableFunctional, ReductError> {
    if n > 32 {
        return Err(ReductError::ScaleBound {
            what: format!("identity on [0,{n}) exceeds the joinable half-word"),
        });
    }
    let mut entries = Vec::new();
    for w in 0..n {
        for output in [0u8, 1] {
            entries.push(Entry {
                stage: w + 2,
                use_bound: w + 1,
                x: w,
                mask: 1 << w,
                bits: if output == 1 { 1 << w } else { 0 },
                output,
            });
        }
    }
    Ok(TableFunctional::new(entries, id).expect("identity rows are pairwise incompatible"))
}

/// The canonical inclusion candidate witnessing that the `j`-color
/// pigeonhole reduces strongly uniformly to the `k`-color one for `j < k`:
/// recode the coloring through the identity color map and hand solutions
/// back unchanged.
pub fn rt1_inclusion_candidate(
    j: u32,
    k: u32,
    n: u32,
    mode: Mode,
) -> Result<ReductionCandidate, ReductError> {
    if j >= k {
        return Err(ReductError::ScaleBound {
            what: format!("inclusion needs j < k, got {j} ≥ {k}"),
        });
    }
    let forward = recolor_table(j, k, n, |c| c, 1)?;
    let backward = if mode.is_strong() {
        subset_identity_table(n, 2)?
    } else {
        on_join_solution_half(&subset_identity_table(n, 2)?, 2)?
    };
    Ok(ReductionCandidate { forward, backward, mode })
}

// ---------------------------------------------------------------------------
// Uniform checking

/// Why a candidate failed on a particular instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    /// The forward table diverged at an instance-domain code.
    ForwardPartial { code: u32 },
    /// The forward image is not an instance of the target problem.
    ForwardNotInstance { image: SmallSet },
    /// The backward table diverged at a solution-domain input.
    BackwardPartial { input: u32 },
    /// The backward image is not a solution of the source instance.
    BackwardNotSolution { output: SmallSet },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::ForwardPartial { code } => {
                write!(f, "forward table diverges at code {code}")
            }
            Failure::ForwardNotInstance { image } => {
                write!(f, "forward image {image} is not a target instance")
            }
            Failure::BackwardPartial { input } => {
                write!(f, "backward table diverges at input {input}")
            }
            Failure::BackwardNotSolution { output } => {
                write!(f, "backward image {output} does not solve the instance")
            }
        }
    }
}

/// Outcome of the uniform check: either every instance–solution pair
/// passed, or the first counterexample in instance-then-solution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UniformOutcome {
    Holds,
    Counterexample { x: SmallSet, y_hat: Option<SmallSet>, failure: Failure },
}

impl UniformOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, UniformOutcome::Holds)
    }
}

/// Check a uniform reduction exhaustively: for every instance `X` of `q`,
/// the forward image must be an instance of `p`, and for every solution
/// `Ŷ` of that image, the backward table — fed `Ŷ` alone in strong mode,
/// the join `X ⊕ Ŷ` otherwise — must output a solution of `X`.
pub fn check_uniform(
    q: &FiniteProblem,
    p: &FiniteProblem,
    cand: &ReductionCandidate,
) -> Result<UniformOutcome, ReductError> {
    if !cand.mode.is_uniform() {
        return Err(ReductError::WrongMode { mode: cand.mode, checker: "uniform" });
    }
    for &x in q.instances() {
        let image = match table_image(&cand.forward, x, p.code_bound()) {
            Ok(s) => s,
            Err(code) => {
                return Ok(UniformOutcome::Counterexample {
                    x,
                    y_hat: None,
                    failure: Failure::ForwardPartial { code },
                })
            }
        };
        let Some(hat_solutions) = p.solutions_of(image) else {
            return Ok(UniformOutcome::Counterexample {
                x,
                y_hat: None,
                failure: Failure::ForwardNotInstance { image },
            });
        };
        let x_solutions = q.solutions_of(x).expect("instances come from q itself");
        for &y_hat in hat_solutions {
            let oracle = if cand.mode.is_strong() { y_hat } else { join_sets(x, y_hat)? };
            let y = match table_image(&cand.backward, oracle, q.universe()) {
                Ok(s) => s,
                Err(input) => {
                    return Ok(UniformOutcome::Counterexample {
                        x,
                        y_hat: Some(y_hat),
                        failure: Failure::BackwardPartial { input },
                    })
                }
            };
            if !x_solutions.contains(&y) {
                return Ok(UniformOutcome::Counterexample {
                    x,
                    y_hat: Some(y_hat),
                    failure: Failure::BackwardNotSolution { output: y },
                });
            }
        }
    }
    Ok(UniformOutcome::Holds)
}

// ---------------------------------------------------------------------------
// Computable checking

/// The finite table space a computable-reduction search ranges over.
#[derive(Debug, Clone, Default)]
pub struct CandidateSpace {
    pub forwards: Vec<TableFunctional>,
    pub backwards: Vec<TableFunctional>,
}

/// Per-instance witnesses for a computable reduction: the forward table
/// index used for the instance, and for each solution of the image, the
/// backward table index that maps it home.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputableWitness {
    pub instance: SmallSet,
    pub forward: usize,
    pub per_solution: Vec<(SmallSet, usize)>,
}

/// Outcome of the computable check. `RefutedAtScale` means no witness
/// exists **in the searched space** — a statement about this scale and
/// space, never a non-reducibility theorem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComputableOutcome {
    Holds(Vec<ComputableWitness>),
    RefutedAtScale { forwards: usize, backwards: usize, failed_instance: SmallSet },
}

impl ComputableOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, ComputableOutcome::Holds(_))
    }
}

/// Check a computable reduction: every instance of `q` may pick its own
/// forward table from the space (the image must be an instance of `p`),
/// and each solution of the image may pick its own backward table (fed the
/// solution alone when `strong`, the join otherwise) landing in the
/// instance's solutions. Exhaustive over the space, first witness in space
/// order.
pub fn check_computable(
    q: &FiniteProblem,
    p: &FiniteProblem,
    strong: bool,
    space: &CandidateSpace,
) -> Result<ComputableOutcome, ReductError> {
    let mut witnesses = Vec::new();
    'instances: for &x in q.instances() {
        let x_solutions = q.solutions_of(x).expect("instances come from q itself");
        'forwards: for (fi, phi) in space.forwards.iter().enumerate() {
            let Ok(image) = table_image(phi, x, p.code_bound()) else {
                continue;
            };
            let Some(hat_solutions) = p.solutions_of(image) else {
                continue;
            };
            let mut per_solution = Vec::with_capacity(hat_solutions.len());
            for &y_hat in hat_solutions {
                let oracle = if strong { y_hat } else { join_sets(x, y_hat)? };
                let found = space.backwards.iter().position(|psi| {
                    matches!(table_image(psi, oracle, q.universe()),
                             Ok(y) if x_solutions.contains(&y))
                });
                match found {
                    Some(bi) => per_solution.push((y_hat, bi)),
                    None => continue 'forwards,
                }
            }
            witnesses.push(ComputableWitness { instance: x, forward: fi, per_solution });
            continue 'instances;
        }
        return Ok(ComputableOutcome::RefutedAtScale {
            forwards: space.forwards.len(),
            backwards: space.backwards.len(),
            failed_instance: x,
        });
    }
    Ok(ComputableOutcome::Holds(witnesses))
}

// ---------------------------------------------------------------------------
// Relation diagram

/// One dataset row: a label and the verdict (if checked) under each mode.
#[derive(Debug, Clone, Default)]
pub struct DiagramEntry {
    pub label: String,
    pub su: Option<bool>,
    pub u: Option<bool>,
    pub sc: Option<bool>,
    pub c: Option<bool>,
}

impl DiagramEntry {
    fn verdict(&self, m: Mode) -> Option<bool> {
        match m {
            Mode::Su => self.su,
            Mode::U => self.u,
            Mode::Sc => self.sc,
            Mode::C => self.c,
        }
    }
}

/// A dataset row where a stronger notion holds but a weaker one was
/// checked and failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagramViolation {
    pub label: String,
    pub stronger: Mode,
    pub weaker: Mode,
}

impl fmt::Display for DiagramViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: holds at {} but fails at {}",
            self.label, self.stronger, self.weaker
        )
    }
}

/// The implication arrows between the four notions: whenever the first
/// holds, the second must.
pub const DIAGRAM_ARROWS: [(Mode, Mode); 4] =
    [(Mode::Su, Mode::Sc), (Mode::Su, Mode::U), (Mode::Sc, Mode::C), (Mode::U, Mode::C)];

/// Aggregate of a diagram check over a dataset.
#[derive(Debug, Clone)]
pub struct DiagramReport {
    pub entries: usize,
    pub checked_arrows: usize,
    pub violations: Vec<DiagramViolation>,
}

impl DiagramReport {
    pub fn consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every implication arrow on every dataset row: a Holds at a
/// stronger notion with a checked-and-failed weaker notion is a violation.
/// Unchecked verdicts are skipped, an empty dataset yields an empty report.
pub fn relation_diagram(entries: &[DiagramEntry]) -> DiagramReport {
    let mut checked_arrows = 0;
    let mut violations = Vec::new();
    for e in entries {
        for &(stronger, weaker) in &DIAGRAM_ARROWS {
            if let (Some(s), Some(w)) = (e.verdict(stronger), e.verdict(weaker)) {
                checked_arrows += 1;
                if s && !w {
                    violations.push(DiagramViolation {
                        label: e.label.clone(),
                        stronger,
                        weaker,
                    });
                }
            }
        }
    }
    DiagramReport { entries: entries.len(), checked_arrows, violations }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    /// A two-instance toy problem over subsets: each instance solves to
    /// itself (and only itself).
    fn toy_identity_problem() -> FiniteProblem {
        let instances = vec![SmallSet::from_slice(&[0, 2]), SmallSet::from_slice(&[1, 3])];
        let solutions = instances.iter().map(|&s| vec![s]).collect();
        FiniteProblem::new("toy", 4, 4, instances, solutions).unwrap()
    }

    #[test]
    fn problem_validation() {
        let i = vec![SmallSet::from_slice(&[0])];
        assert!(matches!(
            FiniteProblem::new("x", 4, 4, i.clone(), vec![]),
            Err(ReductError::LengthMismatch { .. })
        ));
        assert!(matches!(
            FiniteProblem::new("x", 4, 4, i.clone(), vec![vec![]]),
            Err(ReductError::NoSolutions { index: 0 })
        ));
        assert!(matches!(
            FiniteProblem::new(
                "x",
                4,
                4,
                vec![SmallSet::from_slice(&[0]), SmallSet::from_slice(&[0])],
                vec![vec![SmallSet::EMPTY], vec![SmallSet::EMPTY]],
            ),
            Err(ReductError::DuplicateInstance { index: 1 })
        ));
        assert!(matches!(
            FiniteProblem::new("x", 4, 4, vec![SmallSet::from_slice(&[9])], vec![vec![
                SmallSet::EMPTY
            ]]),
            Err(ReductError::OutsideDomain { .. })
        ));
        assert!(matches!(
            FiniteProblem::new("x", 2, 4, i, vec![vec![SmallSet::from_slice(&[3])]]),
            Err(ReductError::OutsideDomain { .. })
        ));
    }

    /// Solutions of the bundled pigeonhole problems re-derived from
    /// scratch: monochromatic subsets of size ≥ 2, nothing else.
    #[test]
    fn rt1_solutions_against_direct_enumeration() {
        let p = rt1(2, 5).unwrap();
        assert_eq!(p.instances().len(), 32);
        assert_eq!(p.universe(), 5);
        assert_eq!(p.code_bound(), 10);
        for &inst in p.instances() {
            // Decode the coloring.
            let color = |x: u32| (0..2).find(|&c| inst.contains(color_code(x, c, 2))).unwrap();
            let mut expect: Vec<SmallSet> = Vec::new();
            for mask in 0u64..(1 << 5) {
                let s = SmallSet(mask);
                if s.len() >= 2 && s.iter().all(|x| color(x) == color(s.min().unwrap())) {
                    expect.push(s);
                }
            }
            let mut got: Vec<SmallSet> = p.solutions_of(inst).unwrap().to_vec();
            expect.sort();
            got.sort();
            assert_eq!(got, expect, "instance {inst}");
        }
        // Pigeonhole at the largest bundled scale: every instance solvable.
        let p4 = rt1(4, 8).unwrap();
        assert_eq!(p4.instances().len(), 65536);
        assert!(p4.instances().iter().all(|&i| !p4.solutions_of(i).unwrap().is_empty()));
        // Out-of-scale and unsolvable shapes refused.
        assert!(rt1(4, 9).is_err());
        assert!(rt1(4, 4).is_err());
    }

    #[test]
    fn identity_candidate_holds_everywhere() {
        let q = toy_identity_problem();
        let ident = subset_identity_table(4, 7).unwrap();
        for mode in [Mode::Su, Mode::U] {
            let backward = if mode.is_strong() {
                ident.clone()
            } else {
                on_join_solution_half(&ident, 8).unwrap()
            };
            let cand =
                ReductionCandidate { forward: ident.clone(), backward, mode };
            assert_eq!(check_uniform(&q, &q, &cand).unwrap(), UniformOutcome::Holds, "{mode}");
        }
        let space = CandidateSpace {
            forwards: vec![ident.clone()],
            backwards: vec![ident.clone(), on_join_solution_half(&ident, 9).unwrap()],
        };
        assert!(check_computable(&q, &q, true, &space).unwrap().holds());
        assert!(check_computable(&q, &q, false, &space).unwrap().holds());
        // Wrong-mode guard.
        let bad = ReductionCandidate { forward: ident.clone(), backward: ident, mode: Mode::C };
        assert!(matches!(
            check_uniform(&q, &q, &bad),
            Err(ReductError::WrongMode { .. })
        ));
    }

    /// Swapping the two colors of a 2-coloring preserves the monochromatic
    /// sets, so swap-forward plus identity-backward holds strongly.
    #[test]
    fn color_swap_holds() {
        let p = rt1(2, 5).unwrap();
        let swap = recolor_table(2, 2, 5, |c| 1 - c, 11).unwrap();
        let cand = ReductionCandidate {
            forward: swap,
            backward: subset_identity_table(5, 12).unwrap(),
            mode: Mode::Su,
        };
        assert_eq!(check_uniform(&p, &p, &cand).unwrap(), UniformOutcome::Holds);
    }

    /// Merging colors {0,1} of a 3-coloring manufactures solutions that mix
    /// the original colors; handing them back unchanged must fail, and the
    /// returned counterexample must replay.
    #[test]
    fn naive_merge_finds_counterexample() {
        let q = rt1(3, 6).unwrap();
        let p = rt1(2, 6).unwrap();
        let merge = recolor_table(3, 2, 6, |c| u32::from(c == 2), 13).unwrap();
        let cand = ReductionCandidate {
            forward: merge.clone(),
            backward: subset_identity_table(6, 14).unwrap(),
            mode: Mode::Su,
        };
        let out = check_uniform(&q, &p, &cand).unwrap();
        let UniformOutcome::Counterexample { x, y_hat: Some(y_hat), failure } = out else {
            panic!("expected a backward counterexample, got {out:?}");
        };
        assert!(matches!(failure, Failure::BackwardNotSolution { .. }));
        // Replay: the image really is an instance of p, the solution really
        // solves it, and the handed-back set really is not a solution of x.
        let image = table_image(&merge, x, p.code_bound()).unwrap();
        assert!(p.solutions_of(image).unwrap().contains(&y_hat));
        let Failure::BackwardNotSolution { output } = failure else { unreachable!() };
        assert_eq!(output, y_hat, "identity backward hands the set through");
        assert!(!q.solutions_of(x).unwrap().contains(&output));
    }

    /// The flagship inclusion sweep: the canonical candidate witnesses the
    /// strong uniform reduction for every color pair j < k ≤ 4 at the full
    /// 8-point universe.
    #[test]
    fn inclusion_holds_strongly_for_all_pairs() {
        for k in 2..=4u32 {
            let p = rt1(k, 8).unwrap();
            for j in 1..k {
                let q = rt1(j, 8).unwrap();
                let cand = rt1_inclusion_candidate(j, k, 8, Mode::Su).unwrap();
                assert_eq!(
                    check_uniform(&q, &p, &cand).unwrap(),
                    UniformOutcome::Holds,
                    "inclusion {j} into {k}"
                );
            }
        }
        assert!(rt1_inclusion_candidate(3, 3, 8, Mode::Su).is_err());
    }

    /// The join carries the instance on even bits and the solution on odd
    /// bits, and the spread transform makes a solution-only table read the
    /// odd half: evaluation agrees point for point.
    #[test]
    fn join_and_spread_transform_agree() {
        let xs = [SmallSet::from_slice(&[0, 3, 7]), SmallSet::EMPTY, SmallSet::below(10)];
        let ys = [SmallSet::from_slice(&[1, 4]), SmallSet::below(5), SmallSet::EMPTY];
        let psi = subset_identity_table(8, 21).unwrap();
        let psi_join = on_join_solution_half(&psi, 22).unwrap();
        for &x in &xs {
            for &y in &ys {
                let join = join_sets(x, y).unwrap();
                for n in 0..10 {
                    assert_eq!(join.contains(2 * n), x.contains(n), "even bit {n}");
                    assert_eq!(join.contains(2 * n + 1), y.contains(n), "odd bit {n}");
                }
                assert_eq!(
                    table_image(&psi_join, join, 8),
                    table_image(&psi, y, 8),
                    "x={x} y={y}"
                );
            }
        }
        assert!(join_sets(SmallSet::from_slice(&[32]), SmallSet::EMPTY).is_err());
    }

    /// A strong uniform witness turns into a plain uniform witness through
    /// the spread transform — the su → u arrow, constructively.
    #[test]
    fn strong_witness_transforms_to_plain() {
        let q = rt1(2, 6).unwrap();
        let p = rt1(3, 6).unwrap();
        let su = rt1_inclusion_candidate(2, 3, 6, Mode::Su).unwrap();
        assert!(check_uniform(&q, &p, &su).unwrap().holds());
        let u = ReductionCandidate {
            forward: su.forward.clone(),
            backward: on_join_solution_half(&su.backward, 23).unwrap(),
            mode: Mode::U,
        };
        assert!(check_uniform(&q, &p, &u).unwrap().holds());
    }

    /// The computable checker finds per-instance witnesses even when the
    /// space leads with junk, and reports the space honestly when nothing
    /// works.
    #[test]
    fn computable_witnesses_and_refutation() {
        let q = toy_identity_problem();
        let ident = subset_identity_table(4, 31).unwrap();
        // A constant-empty backward: wrong for every instance here.
        let junk = TableFunctional::new(
            (0..4)
                .map(|w| Entry { stage: w + 1, use_bound: 0, x: w, mask: 0, bits: 0, output: 0 })
                .collect(),
            32,
        )
        .unwrap();
        let space = CandidateSpace {
            forwards: vec![junk.clone(), ident.clone()],
            backwards: vec![junk.clone(), ident.clone()],
        };
        let out = check_computable(&q, &q, true, &space).unwrap();
        let ComputableOutcome::Holds(ws) = &out else { panic!("expected witnesses") };
        assert_eq!(ws.len(), 2);
        for w in ws {
            // The junk forward image (∅ bits... every instance maps to ∅)
            // is not an instance, so the identity forward is chosen; the
            // junk backward likewise never lands in the solutions.
            assert_eq!(w.forward, 1, "instance {}", w.instance);
            assert!(w.per_solution.iter().all(|&(_, bi)| bi == 1));
        }
        let refuted = check_computable(
            &q,
            &q,
            true,
            &CandidateSpace { forwards: vec![junk.clone()], backwards: vec![junk] },
        )
        .unwrap();
        let ComputableOutcome::RefutedAtScale { forwards, backwards, failed_instance } =
            refuted
        else {
            panic!("expected a scale refutation");
        };
        assert_eq!((forwards, backwards), (1, 1));
        assert_eq!(failed_instance, q.instances()[0], "first failing instance reported");
        let empty = check_computable(&q, &q, false, &CandidateSpace::default()).unwrap();
        assert!(!empty.holds());
    }

    /// Diagram rows built from real checks are consistent; a fabricated
    /// stronger-holds/weaker-fails row is flagged.
    #[test]
    fn diagram_checks_arrows() {
        assert!(relation_diagram(&[]).consistent());
        let q = rt1(1, 4).unwrap();
        let p = rt1(2, 4).unwrap();
        let su = rt1_inclusion_candidate(1, 2, 4, Mode::Su).unwrap();
        let u = rt1_inclusion_candidate(1, 2, 4, Mode::U).unwrap();
        let space = CandidateSpace {
            forwards: vec![su.forward.clone()],
            backwards: vec![su.backward.clone(), u.backward.clone()],
        };
        let row = DiagramEntry {
            label: "inclusion 1→2".to_string(),
            su: Some(check_uniform(&q, &p, &su).unwrap().holds()),
            u: Some(check_uniform(&q, &p, &u).unwrap().holds()),
            sc: Some(check_computable(&q, &p, true, &space).unwrap().holds()),
            c: Some(check_computable(&q, &p, false, &space).unwrap().holds()),
        };
        assert_eq!(
            (row.su, row.u, row.sc, row.c),
            (Some(true), Some(true), Some(true), Some(true)),
            "all four notions hold for the inclusion"
        );
        let report = relation_diagram(std::slice::from_ref(&row));
        assert_eq!(report.checked_arrows, 4);
        assert!(report.consistent());

        let fabricated = DiagramEntry {
            label: "broken".to_string(),
            su: Some(true),
            u: Some(false),
            sc: None,
            c: Some(true),
        };
        let report = relation_diagram(&[row, fabricated]);
        assert_eq!(
            report.violations,
            vec![DiagramViolation {
                label: "broken".to_string(),
                stronger: Mode::Su,
                weaker: Mode::U
            }]
        );
        assert_eq!(report.checked_arrows, 4 + 2, "unchecked verdicts are skipped");
    }

    #[test]
    fn problem_text_roundtrip() {
        let p = rt1(2, 3).unwrap();
        let lines = p.to_lines();
        let q = FiniteProblem::from_lines(&lines).unwrap();
        assert_eq!(q.name(), p.name());
        assert_eq!((q.universe(), q.code_bound()), (p.universe(), p.code_bound()));
        assert_eq!(q.instances(), p.instances());
        for &i in p.instances() {
            assert_eq!(q.solutions_of(i), p.solutions_of(i));
        }
        // Hand-written file with comments and an empty-set field.
        let text = [
            "# toy",
            "problem custom",
            "universe 3",
            "codes 3",
            "instance 0,2",
            "solution -",
            "solution 1",
        ];
        let c = FiniteProblem::from_lines(&text).unwrap();
        assert_eq!(c.solutions_of(SmallSet::from_slice(&[0, 2])).unwrap().len(), 2);
        // Bad inputs.
        for bad in [
            vec!["universe 3", "codes 3"],
            vec!["problem x", "universe 3", "codes 3", "solution 1"],
            vec!["problem x", "universe y", "codes 3"],
            vec!["problem x", "universe 3", "codes 3", "frobnicate 1"],
            vec!["problem x", "universe 3", "codes 3", "instance 0,zebra"],
        ] {
            assert!(FiniteProblem::from_lines(&bad).is_err(), "{bad:?}");
        }
    }
}
