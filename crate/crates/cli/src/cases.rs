//! Shared case runners and replayable case records.
//!
//! Every check the CLI performs — one forest search, one limit-map
//! diagnosis, one machine run, one reduction test — is a *case* with a
//! small verdict vocabulary. `verify`, `simulate`, `sweep`, and `check`
//! all call the same runners; failing cases serialize to self-contained
//! record files that `replay` re-runs against the recorded verdict.

use std::fs;
use std::path::Path;

use finram::coh::{build_e_run, coh_verify_run, CohRun, CohVerdict};
use finram::coloring::{derive_stability, is_limit_homogeneous, PairColoring, UnaryColoring};
use finram::fincomb::{
    generated_subtree, is_phi_tree, parse_predicate, GeneratedTree, PhiCheck, Predicate,
};
use finram::forcing_c::{run_nscred, NscredConfig, NscredRun, StageParams};
use finram::forcing_p::{
    complete_all_zero, diagonal_check, nured_chain, pair_hit_predicate, ChainExit, NuredError,
    PCondition,
};
use finram::forest::{
    build_psi_sequence, canonical_search, check_forest, combcore_witness, finseq_probe,
    BuildOutcome, Forest, ProbeOutcome, SearchBudget, SearchOutcome,
};
use finram::functional::TableFunctional;
use finram::reduct::{
    check_computable, check_uniform, CandidateSpace, ComputableOutcome, FiniteProblem, Mode,
    ReductionCandidate, UniformOutcome,
};
use finram::set::{str_display, str_ran, SmallSet};
use finram::Stage;

use crate::report::{usage, CliError, REPORT_VERSION};

// ---------------------------------------------------------------------------
// Outcomes
// ---------------------------------------------------------------------------

/// The verdict of one finished case. `verdict` is a stable token; `detail`
/// is extra `key=value` material for the case line.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub pass: bool,
    pub verdict: &'static str,
    pub detail: String,
}

impl CaseOutcome {
    pub fn pass(verdict: &'static str, detail: impl Into<String>) -> CaseOutcome {
        CaseOutcome { pass: true, verdict, detail: detail.into() }
    }

    pub fn fail(verdict: &'static str, detail: impl Into<String>) -> CaseOutcome {
        CaseOutcome { pass: false, verdict, detail: detail.into() }
    }

    /// `verdict=… …detail…` for report case lines.
    pub fn line(&self) -> String {
        if self.detail.is_empty() {
            format!("verdict={}", self.verdict)
        } else {
            format!("verdict={} {}", self.verdict, self.detail)
        }
    }
}

// ---------------------------------------------------------------------------
// File loading
// ---------------------------------------------------------------------------

/// Read a text file, dropping blank lines and `#` comments.
pub fn read_payload_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(str::to_string)
        .collect())
}

pub fn load_table(path: &Path) -> Result<TableFunctional, CliError> {
    let lines = read_payload_lines(path)?;
    TableFunctional::from_lines(&mut lines.iter().map(String::as_str))
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_pairs(path: &Path) -> Result<PairColoring, CliError> {
    let lines = read_payload_lines(path)?;
    PairColoring::from_lines(&mut lines.iter().map(String::as_str))
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_unary(path: &Path) -> Result<UnaryColoring, CliError> {
    let lines = read_payload_lines(path)?;
    UnaryColoring::from_lines(&mut lines.iter().map(String::as_str))
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_problem(path: &Path) -> Result<FiniteProblem, CliError> {
    let lines = read_payload_lines(path)?;
    FiniteProblem::from_lines(&lines)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_pred(spec: &str) -> Result<Predicate, CliError> {
    parse_predicate(spec).map_err(|e| CliError::Usage(format!("bad predicate {spec:?}: {e}")))
}

pub fn parse_color_list(text: &str) -> Result<Vec<u32>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Usage(format!("bad color {t:?} in list {text:?}")))
        })
        .collect()
}

pub fn color_list(colors: &[u32]) -> String {
    colors.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

// ---------------------------------------------------------------------------
// Limit-map plumbing
// ---------------------------------------------------------------------------

/// Extend a partial limit assignment (positions → colors) to a full vector
/// of length `len` in which every color below `k` occurs at least
/// `min_count` times: free positions are filled ascending, each taking the
/// least still-deficient color (0 once no color is deficient). `None` when
/// the free positions cannot cover the remaining deficits.
pub fn complete_admissibly(
    assignment: &std::collections::BTreeMap<u32, u32>,
    len: usize,
    k: u32,
    min_count: u32,
) -> Option<Vec<u32>> {
    let mut out = vec![u32::MAX; len];
    let mut counts = vec![0u32; k as usize];
    for (&pos, &color) in assignment {
        if pos as usize >= len || color >= k {
            return None;
        }
        out[pos as usize] = color;
        counts[color as usize] += 1;
    }
    for slot in out.iter_mut() {
        if *slot != u32::MAX {
            continue;
        }
        let color = (0..k).find(|&c| counts[c as usize] < min_count).unwrap_or(0);
        counts[color as usize] += 1;
        *slot = color;
    }
    if counts.iter().all(|&c| c >= min_count) {
        Some(out)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Forest-family cases
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SearchParams {
    pub universe: u32,
    pub stage: Stage,
    pub trees: usize,
}

impl SearchParams {
    pub fn budget(&self) -> Result<SearchBudget, CliError> {
        if self.universe < 2 || self.universe > 22 {
            return usage(format!(
                "universe {} is outside the supported scan range [2, 22]",
                self.universe
            ));
        }
        if self.stage == 0 || self.trees == 0 {
            return usage("stage horizon and tree budget must be positive");
        }
        Ok(SearchBudget::new(self.stage, self.universe - 1, self.trees))
    }

    pub fn set(&self) -> SmallSet {
        SmallSet::below(self.universe)
    }
}

/// One exhaustive-coloring check of one search: every coloring of the found
/// forest's range (or the one supplied) must yield a level-monochromatic
/// terminal. Returns the outcome plus the first failing coloring, if any.
pub fn run_combcore_case(
    phi_spec: &str,
    k: u32,
    sp: &SearchParams,
    coloring: Option<&[u32]>,
) -> Result<(CaseOutcome, Option<Vec<u32>>), CliError> {
    if k == 0 || k > 3 {
        return usage(format!("level count {k} is outside the supported range [1, 3]"));
    }
    let phi = parse_pred(phi_spec)?;
    let budget = sp.budget()?;
    let phis = vec![phi; k as usize];
    let forest = match canonical_search(phis.clone(), sp.set(), budget) {
        SearchOutcome::Forest(f) => f,
        SearchOutcome::Exhausted { reason, .. } => {
            return Ok((
                CaseOutcome::pass("no-forest", format!("reason=\"{reason:?}\"")),
                None,
            ));
        }
    };
    if let Err(v) = check_forest(&forest, &phis) {
        let mut dump = forest.to_lines();
        dump.push(format!("violation {v}"));
        return Err(CliError::Invariant {
            message: "a canonically found forest fails the structural re-derivation".into(),
            dump,
        });
    }
    let ran = forest.ran().to_vec();
    let check_one = |colors: &[u32]| -> bool {
        let l = |x: u32| {
            let pos = ran.iter().position(|&y| y == x).expect("coloring covers the range");
            colors[pos]
        };
        combcore_witness(&forest, l).is_ok()
    };
    if let Some(colors) = coloring {
        if colors.len() != ran.len() {
            return usage(format!(
                "coloring lists {} colors but the range has {} points",
                colors.len(),
                ran.len()
            ));
        }
        if colors.iter().any(|&c| c >= k) {
            return usage("coloring uses a color at or above the level count");
        }
        return Ok(if check_one(colors) {
            (
                CaseOutcome::pass("pass", format!("ran={} colorings=1", forest.ran())),
                None,
            )
        } else {
            (
                CaseOutcome::fail(
                    "no-witness",
                    format!("ran={} coloring={}", forest.ran(), color_list(colors)),
                ),
                Some(colors.to_vec()),
            )
        });
    }
    let space = (k as u128).saturating_pow(ran.len() as u32);
    if space > 1 << 26 {
        return usage(format!(
            "exhaustive coloring space {space} exceeds the supported bound 2^26"
        ));
    }
    let mut colors = vec![0u32; ran.len()];
    let mut checked: u64 = 0;
    loop {
        checked += 1;
        if !check_one(&colors) {
            return Ok((
                CaseOutcome::fail(
                    "no-witness",
                    format!("ran={} coloring={}", forest.ran(), color_list(&colors)),
                ),
                Some(colors),
            ));
        }
        // Next mixed-radix word, least-significant position first.
        let mut i = 0;
        loop {
            if i == colors.len() {
                return Ok((
                    CaseOutcome::pass(
                        "pass",
                        format!("ran={} colorings={checked}", forest.ran()),
                    ),
                    None,
                ));
            }
            colors[i] += 1;
            if colors[i] < k {
                break;
            }
            colors[i] = 0;
            i += 1;
        }
    }
}

/// One search re-validated by the independent structural checker.
pub fn run_forest_case(
    phi_specs: &[String],
    sp: &SearchParams,
) -> Result<CaseOutcome, CliError> {
    let phis: Vec<Predicate> =
        phi_specs.iter().map(|s| parse_pred(s)).collect::<Result<_, _>>()?;
    if phis.is_empty() {
        return usage("at least one level predicate is required");
    }
    let budget = sp.budget()?;
    match canonical_search(phis.clone(), sp.set(), budget) {
        SearchOutcome::Forest(f) => {
            let ran = f.ran();
            match check_forest(&f, &phis) {
                Ok(()) => Ok(CaseOutcome::pass(
                    "forest-ok",
                    format!("levels={} ran={ran}", phis.len()),
                )),
                Err(v) => Ok(CaseOutcome::fail(
                    "violation",
                    format!("levels={} ran={ran} violation=\"{v}\"", phis.len()),
                )),
            }
        }
        SearchOutcome::Exhausted { reason, .. } => {
            Ok(CaseOutcome::pass("no-forest", format!("reason=\"{reason:?}\"")))
        }
    }
}

/// One probe dichotomy check: a found sequence re-certifies tree by tree; an
/// empty-tail certificate is re-verified by full powerset scan.
pub fn run_finseq_case(phi_spec: &str, sp: &SearchParams) -> Result<CaseOutcome, CliError> {
    let phi = parse_pred(phi_spec)?;
    let budget = sp.budget()?;
    match finseq_probe(&phi, sp.set(), &budget) {
        ProbeOutcome::SequenceFound(seq) => {
            if seq.len() != sp.trees {
                return Ok(CaseOutcome::fail(
                    "bad-sequence",
                    format!("trees={} requested={}", seq.len(), sp.trees),
                ));
            }
            let mut last_max: Option<u32> = None;
            for t in seq.trees() {
                if let PhiCheck::FailsAt(node) = is_phi_tree(&t.tree, &phi, sp.stage) {
                    return Ok(CaseOutcome::fail(
                        "bad-sequence",
                        format!("unwitnessed-terminal={}", str_display(&node)),
                    ));
                }
                let ran = t.tree.ran();
                if let (Some(prev), Some(lo)) = (last_max, ran.min()) {
                    if lo <= prev {
                        return Ok(CaseOutcome::fail(
                            "bad-sequence",
                            format!("overlap at {lo} (previous max {prev})"),
                        ));
                    }
                }
                last_max = ran.max().or(last_max);
            }
            Ok(CaseOutcome::pass("sequence", format!("trees={}", seq.len())))
        }
        ProbeOutcome::TailEmpty { z } => {
            let window = SmallSet::interval(z + 1, sp.universe);
            let offender = window
                .subsets_in_witness_order()
                .find(|f| !f.is_empty() && phi.holds_by(*f, sp.stage));
            match offender {
                None => Ok(CaseOutcome::pass("tail-empty", format!("z={z}"))),
                Some(f) => Ok(CaseOutcome::fail(
                    "bad-certificate",
                    format!("z={z} witness={f}"),
                )),
            }
        }
        ProbeOutcome::Exhausted => Ok(CaseOutcome::fail(
            "exhausted",
            "the saturating budget returned neither certificate".to_string(),
        )),
    }
}

/// One second-order build re-validated against the generating rule: each
/// built tree must equal the generated subtree of its block run and carry
/// witnesses for every terminal.
pub fn run_twoseq_case(
    phi_spec: &str,
    psi_spec: &str,
    sp: &SearchParams,
    count: usize,
) -> Result<CaseOutcome, CliError> {
    let phi = parse_pred(phi_spec)?;
    let psi = parse_pred(psi_spec)?;
    let budget = sp.budget()?;
    let seq = match finseq_probe(&phi, sp.set(), &budget) {
        ProbeOutcome::SequenceFound(s) => s,
        ProbeOutcome::TailEmpty { z } => {
            return Ok(CaseOutcome::pass("no-phi-sequence", format!("z={z}")));
        }
        ProbeOutcome::Exhausted => {
            return Ok(CaseOutcome::fail(
                "exhausted",
                "the base probe returned neither certificate".to_string(),
            ));
        }
    };
    match build_psi_sequence(&seq, &psi, sp.stage, count) {
        BuildOutcome::Built(us) => {
            let mut s = 0usize;
            let mut heights = Vec::new();
            for u in us.trees() {
                let h = u.tree.height() as usize;
                heights.push(h.to_string());
                let blocks: Vec<_> =
                    seq.trees()[s..s + h].iter().map(|t| &t.tree).collect();
                let g = generated_subtree(&blocks, &psi, sp.stage, h as u32);
                let agrees = g.alive.is_empty()
                    && g.tree.node_count() == u.tree.node_count()
                    && g.tree.nodes().all(|nd| u.tree.contains(nd))
                    && matches!(is_phi_tree(&u.tree, &psi, sp.stage), PhiCheck::Holds(_));
                if !agrees {
                    return Ok(CaseOutcome::fail(
                        "mismatch",
                        format!("index={} blocks={s}..{}", heights.len() - 1, s + h),
                    ));
                }
                s += h;
            }
            Ok(CaseOutcome::pass(
                "built",
                format!("trees={count} heights={}", heights.join(",")),
            ))
        }
        BuildOutcome::Stuck(n) => Ok(CaseOutcome::pass("stuck", format!("index={n}"))),
    }
}

// ---------------------------------------------------------------------------
// Pair-diagonalization cases
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NuredParams {
    pub k: u32,
    pub universe: u32,
    pub stage: Stage,
    pub trees: usize,
    pub rounds: u32,
}

/// A finished condition chain: the conditions, the forest behind each
/// extension, and how the machine stopped.
pub struct NuredMachine {
    pub conditions: Vec<PCondition>,
    pub forests: Vec<Forest>,
    pub exit: ChainExit,
}

impl NuredMachine {
    pub fn exit_token(&self) -> &'static str {
        match self.exit {
            ChainExit::Blocked1 { .. } => "blocked1",
            ChainExit::Blocked2 { .. } => "blocked2",
            ChainExit::RoundsExhausted => "rounds-exhausted",
            ChainExit::Failed(_) => "failed",
        }
    }
}

pub fn run_nured_machine(
    psi: &TableFunctional,
    np: &NuredParams,
) -> Result<NuredMachine, CliError> {
    if np.k == 0 || np.k > 3 {
        return usage(format!("level count {} is outside the supported range [1, 3]", np.k));
    }
    let sp = SearchParams { universe: np.universe, stage: np.stage, trees: np.trees };
    let budget = sp.budget()?;
    if np.rounds == 0 {
        return usage("at least one extension round is required");
    }
    let (conditions, forests, exit) = nured_chain(psi, np.k, &budget, np.rounds);
    Ok(NuredMachine { conditions, forests, exit })
}

/// Verify an empty-tail exit: no subset of the window above `z` makes the
/// pair predicate fire by the stage horizon.
pub fn verify_tail_empty(
    psi: &TableFunctional,
    n_low: u32,
    z: u32,
    universe: u32,
    stage: Stage,
) -> Result<(), String> {
    let phi = pair_hit_predicate(psi, n_low);
    let window = SmallSet::interval(z + 1, universe);
    match window
        .subsets_in_witness_order()
        .find(|f| !f.is_empty() && phi.holds_by(*f, stage))
    {
        None => Ok(()),
        Some(f) => Err(format!("window subset {f} satisfies the pair predicate")),
    }
}

/// Verify a surviving-tree exit: the frontier is alive and no live node's
/// range carries a satisfied subset.
pub fn verify_refuting_tree(
    tree: &GeneratedTree,
    psi: &TableFunctional,
    n_low: u32,
    stage: Stage,
) -> Result<(), String> {
    if tree.alive.is_empty() {
        return Err("the surviving tree has no live frontier".to_string());
    }
    let phi = pair_hit_predicate(psi, n_low);
    for alpha in &tree.alive {
        let ran = str_ran(alpha);
        if let Some(f) = ran.least_subset_where(|f| phi.holds_by(f, stage)) {
            return Err(format!(
                "live node {} carries satisfied subset {f}",
                str_display(alpha)
            ));
        }
    }
    Ok(())
}

/// Diagnose one limit map against a found condition/forest pair: the
/// diagonal certificate must name a pair colored 0 whose first coordinate
/// is locked to 1, with a limit-homogeneous extension.
pub fn diagnose_limit_map(
    psi: &TableFunctional,
    p: &PCondition,
    forest: &Forest,
    limits: &[u32],
    k: u32,
) -> Result<CaseOutcome, CliError> {
    for x in forest.ran().iter() {
        if x as usize >= limits.len() {
            return usage(format!(
                "limit map covers {} rows but the forest range reaches {x}",
                limits.len()
            ));
        }
    }
    if limits.iter().any(|&c| c >= k) {
        return usage("limit map uses a color at or above the level count");
    }
    let d = PairColoring::canonical_stable(limits, k);
    let cert = derive_stability(&d);
    match diagonal_check(p, forest, &d, &cert, psi) {
        Ok(c) => {
            let sound = p.value(c.x0, c.x1) == 0
                && matches!(p.lock(c.x0), Some((1, _)))
                && is_limit_homogeneous(c.l, &d, &cert, c.level);
            if !sound {
                let mut dump = p.to_lines();
                dump.extend(forest.to_lines());
                dump.push(format!("limits {}", color_list(limits)));
                dump.push(format!(
                    "certificate x0={} x1={} level={} l={}",
                    c.x0, c.x1, c.level, c.l
                ));
                return Err(CliError::Invariant {
                    message: "a diagonal certificate fails its own re-validation".into(),
                    dump,
                });
            }
            Ok(CaseOutcome::pass(
                "diagonal",
                format!("x0={} x1={} level={} use={} l={}", c.x0, c.x1, c.level, c.use_point, c.l),
            ))
        }
        Err(NuredError::NoWitness) => {
            let mut dump = forest.to_lines();
            dump.push(format!("limits {}", color_list(limits)));
            Err(CliError::Invariant {
                message: "no level-monochromatic terminal on a re-checked forest".into(),
                dump,
            })
        }
        Err(e) => Ok(CaseOutcome::fail("bad-diagonal", format!("reason=\"{e}\""))),
    }
}

/// Route one (functional, limit map) case through a finished machine:
/// blocked exits verify their certificates, productive exits diagnose the
/// final condition/forest pair. Also asserts the completed coloring prefix
/// is fully locked (stable).
pub fn nured_route(
    psi: &TableFunctional,
    m: &NuredMachine,
    limits: &[u32],
    np: &NuredParams,
) -> Result<CaseOutcome, CliError> {
    let last = m.conditions.last().expect("chains always hold the root");
    let completed = complete_all_zero(last, np.universe);
    if !completed.fully_locked() {
        return Err(CliError::Invariant {
            message: "the completed coloring prefix is not fully locked".into(),
            dump: completed.to_lines(),
        });
    }
    let rounds_run = m.forests.len();
    match &m.exit {
        ChainExit::Blocked1 { z } => {
            match verify_tail_empty(psi, last.n(), *z, np.universe, np.stage) {
                Ok(()) => Ok(CaseOutcome::pass(
                    "blocked1",
                    format!("z={z} rounds={rounds_run}"),
                )),
                Err(why) => Ok(CaseOutcome::fail(
                    "bad-certificate",
                    format!("z={z} reason=\"{why}\""),
                )),
            }
        }
        ChainExit::Blocked2 { tree } => {
            match verify_refuting_tree(tree, psi, last.n(), np.stage) {
                Ok(()) => Ok(CaseOutcome::pass(
                    "blocked2",
                    format!("height={} alive={} rounds={rounds_run}", tree.tree.height(), tree.alive.len()),
                )),
                Err(why) => Ok(CaseOutcome::fail("bad-certificate", format!("reason=\"{why}\""))),
            }
        }
        ChainExit::RoundsExhausted | ChainExit::Failed(_) => {
            if m.forests.is_empty() {
                let reason = match &m.exit {
                    ChainExit::Failed(e) => format!("reason=\"{e}\""),
                    _ => "reason=\"no extension round completed\"".to_string(),
                };
                return Ok(CaseOutcome::fail("stalled", reason));
            }
            let forest = m.forests.last().expect("checked non-empty");
            let phis = vec![
                pair_hit_predicate(
                    psi,
                    m.conditions[m.conditions.len() - 2].n()
                );
                np.k as usize
            ];
            if let Err(v) = check_forest(forest, &phis) {
                let mut dump = forest.to_lines();
                dump.push(format!("violation {v}"));
                return Err(CliError::Invariant {
                    message: "the final chain forest fails the structural re-derivation".into(),
                    dump,
                });
            }
            let mut out = diagnose_limit_map(psi, last, forest, limits, np.k)?;
            out.detail = format!("{} exit={} rounds={rounds_run}", out.detail, m.exit_token());
            Ok(out)
        }
    }
}

/// Full single-case path: run the machine, then route one limit map.
pub fn run_nured_case(
    psi: &TableFunctional,
    np: &NuredParams,
    limits: &[u32],
) -> Result<CaseOutcome, CliError> {
    let m = run_nured_machine(psi, np)?;
    nured_route(psi, &m, limits, np)
}

// ---------------------------------------------------------------------------
// Chain-of-blocks assembly cases
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CohCase {
    pub k: u32,
    pub stages: Stage,
    pub theta: u32,
}

/// Build the assembled coloring for `(k, d, psi)`, treat any machine-state
/// violation as a broken invariant, and verify the run at width `theta`.
/// Returns the assembled coloring and the full run so callers can dump logs.
pub fn run_coh_case(
    psi: &TableFunctional,
    d: &PairColoring,
    case: &CohCase,
) -> Result<(UnaryColoring, CohRun, CaseOutcome), CliError> {
    if case.theta == 0 {
        return usage("the width threshold must be positive");
    }
    let (e, run) =
        build_e_run(case.k, d, psi, case.stages).map_err(|err| CliError::Usage(err.to_string()))?;
    let violations = run.total_violations();
    if violations > 0 {
        let mut dump = vec![format!("violations {violations}")];
        dump.extend(run.events.iter().map(|ev| ev.to_string()));
        return Err(CliError::Invariant {
            message: format!("{violations} machine-state violation(s) during assembly"),
            dump,
        });
    }
    let outcome = match coh_verify_run(&run, &e, d, psi, case.theta) {
        CohVerdict::Pass { h, color, reason, theta } => CaseOutcome::pass(
            "pass",
            format!("h={h} color={color} reason={reason:?} theta={theta}"),
        ),
        CohVerdict::Fail { trace, theta } => {
            CaseOutcome::fail("fail", format!("theta={theta} trace=\"{trace}\""))
        }
    };
    Ok((e, run, outcome))
}

// ---------------------------------------------------------------------------
// Requirement-ledger cases
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NscredCase {
    pub universe: u32,
    pub theta: u32,
    pub stages: u32,
    pub cols: usize,
    pub len: usize,
    pub depth: usize,
    pub budget: u64,
}

impl NscredCase {
    pub fn config(&self) -> NscredConfig {
        NscredConfig {
            universe: self.universe,
            theta: self.theta,
            stages: self.stages,
            params: StageParams {
                max_cols: self.cols,
                max_len: self.len,
                max_depth: self.depth,
                budget: self.budget,
            },
        }
    }
}

pub fn run_nscred_case(
    phi: &TableFunctional,
    psi: &TableFunctional,
    case: &NscredCase,
) -> Result<(NscredRun, CaseOutcome), CliError> {
    let run = run_nscred(phi, psi, &case.config())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let violations = run.total_violations();
    if violations > 0 {
        return Err(CliError::Invariant {
            message: format!("{violations} ledger violation(s) across the run"),
            dump: run.dump(),
        });
    }
    let final_action = run
        .reports
        .last()
        .map(|r| format!("{}", r.action))
        .unwrap_or_else(|| "none".to_string());
    let outcome = CaseOutcome::pass(
        "clean",
        format!("stages={} final=\"{final_action}\"", run.reports.len()),
    );
    Ok((run, outcome))
}

// ---------------------------------------------------------------------------
// Reduction cases
// ---------------------------------------------------------------------------

pub fn run_reduction_case(
    q: &FiniteProblem,
    p: &FiniteProblem,
    mode: Mode,
    forwards: &[TableFunctional],
    backwards: &[TableFunctional],
) -> Result<CaseOutcome, CliError> {
    if mode.is_uniform() {
        if forwards.len() != 1 || backwards.len() != 1 {
            return usage(format!(
                "mode {mode} takes exactly one --forward and one --backward table \
                 (got {} and {})",
                forwards.len(),
                backwards.len()
            ));
        }
        let cand = ReductionCandidate {
            forward: forwards[0].clone(),
            backward: backwards[0].clone(),
            mode,
        };
        match check_uniform(q, p, &cand).map_err(|e| CliError::Usage(e.to_string()))? {
            UniformOutcome::Holds => Ok(CaseOutcome::pass(
                "holds",
                format!("instances={}", q.instances().len()),
            )),
            UniformOutcome::Counterexample { x, y_hat, failure } => {
                let y = y_hat.map(|s| s.to_string()).unwrap_or_else(|| "-".to_string());
                Ok(CaseOutcome::fail(
                    "counterexample",
                    format!("x={x} y-hat={y} failure=\"{failure}\""),
                ))
            }
        }
    } else {
        let space = CandidateSpace {
            forwards: forwards.to_vec(),
            backwards: backwards.to_vec(),
        };
        match check_computable(q, p, mode.is_strong(), &space)
            .map_err(|e| CliError::Usage(e.to_string()))?
        {
            ComputableOutcome::Holds(witnesses) => Ok(CaseOutcome::pass(
                "holds",
                format!("instances={} witnesses={}", q.instances().len(), witnesses.len()),
            )),
            ComputableOutcome::RefutedAtScale { forwards, backwards, failed_instance } => {
                Ok(CaseOutcome::fail(
                    "refuted",
                    format!(
                        "forwards={forwards} backwards={backwards} instance={failed_instance}"
                    ),
                ))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Case records (persisted artifacts)
// ---------------------------------------------------------------------------

/// A self-contained, replayable description of one case: its kind, the
/// verdict recorded when it ran, scalar parameters, and embedded data
/// blocks (tables, problems) in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub kind: String,
    pub verdict: String,
    pub params: Vec<(String, String)>,
    pub blocks: Vec<(String, Vec<String>)>,
}

impl CaseRecord {
    pub fn new(kind: &str, verdict: &str) -> CaseRecord {
        CaseRecord {
            kind: kind.to_string(),
            verdict: verdict.to_string(),
            params: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn block(&mut self, tag: &str, lines: Vec<String>) -> &mut Self {
        self.blocks.push((tag.to_string(), lines));
        self
    }

    pub fn get(&self, key: &str) -> Result<&str, CliError> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CliError::Usage(format!("case record is missing parameter {key:?}")))
    }

    pub fn get_u32(&self, key: &str) -> Result<u32, CliError> {
        self.get(key)?
            .parse()
            .map_err(|_| CliError::Usage(format!("case parameter {key:?} is not a number")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, CliError> {
        self.get(key)?
            .parse()
            .map_err(|_| CliError::Usage(format!("case parameter {key:?} is not a number")))
    }

    pub fn tagged(&self, tag: &str) -> Vec<&[String]> {
        self.blocks
            .iter()
            .filter(|(t, _)| t == tag)
            .map(|(_, lines)| lines.as_slice())
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = format!("finram-case v{REPORT_VERSION}\n");
        out.push_str(&format!("kind {}\n", self.kind));
        out.push_str(&format!("verdict {}\n", self.verdict));
        for (k, v) in &self.params {
            out.push_str(&format!("param {k}={v}\n"));
        }
        for (tag, lines) in &self.blocks {
            out.push_str(&format!("block {tag}\n"));
            for l in lines {
                out.push_str(l);
                out.push('\n');
            }
            out.push_str("endblock\n");
        }
        out.push_str("endcase\n");
        out
    }

    pub fn parse(text: &str) -> Result<CaseRecord, CliError> {
        let mut lines = text.lines().map(str::trim);
        let header = lines.next().unwrap_or_default();
        if header != format!("finram-case v{REPORT_VERSION}") {
            return usage(format!("unrecognized case record header {header:?}"));
        }
        let kind_line = lines.next().unwrap_or_default();
        let kind = kind_line
            .strip_prefix("kind ")
            .ok_or_else(|| CliError::Usage(format!("expected `kind …`, got {kind_line:?}")))?;
        let verdict_line = lines.next().unwrap_or_default();
        let verdict = verdict_line.strip_prefix("verdict ").ok_or_else(|| {
            CliError::Usage(format!("expected `verdict …`, got {verdict_line:?}"))
        })?;
        let mut rec = CaseRecord::new(kind, verdict);
        let mut in_block: Option<(String, Vec<String>)> = None;
        for line in lines {
            if let Some((tag, content)) = in_block.as_mut() {
                if line == "endblock" {
                    rec.blocks.push((tag.clone(), content.clone()));
                    in_block = None;
                } else {
                    content.push(line.to_string());
                }
                continue;
            }
            if line == "endcase" {
                return Ok(rec);
            }
            if let Some(rest) = line.strip_prefix("param ") {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("bad parameter line {line:?}")))?;
                rec.params.push((k.to_string(), v.to_string()));
            } else if let Some(tag) = line.strip_prefix("block ") {
                in_block = Some((tag.to_string(), Vec::new()));
            } else if !line.is_empty() {
                return usage(format!("unexpected case record line {line:?}"));
            }
        }
        usage("case record is missing its `endcase` terminator")
    }
}

/// Persist a record under `out/<name>.case`; the returned note line says
/// where it went (or that persisting was skipped without an --out directory).
pub fn persist_record(
    out: Option<&Path>,
    name: &str,
    rec: &CaseRecord,
) -> Result<String, CliError> {
    let Some(dir) = out else {
        return Ok(format!("artifact skipped (no --out directory): {name}.case"));
    };
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{name}.case"));
    fs::write(&path, rec.render())
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(format!("artifact {}", path.display()))
}

fn table_from_block(lines: &[String]) -> Result<TableFunctional, CliError> {
    TableFunctional::from_lines(&mut lines.iter().map(String::as_str))
        .map_err(|e| CliError::Usage(format!("embedded table: {e}")))
}

fn problem_from_block(lines: &[String]) -> Result<FiniteProblem, CliError> {
    FiniteProblem::from_lines(lines).map_err(|e| CliError::Usage(format!("embedded problem: {e}")))
}

fn one_tagged<'a>(rec: &'a CaseRecord, tag: &str) -> Result<&'a [String], CliError> {
    let found = rec.tagged(tag);
    match found.as_slice() {
        [only] => Ok(only),
        _ => usage(format!(
            "case record needs exactly one `{tag}` block, found {}",
            found.len()
        )),
    }
}

/// Re-run the case a record describes and return the fresh outcome.
pub fn replay_record(rec: &CaseRecord) -> Result<CaseOutcome, CliError> {
    match rec.kind.as_str() {
        "combcore" => {
            let sp = SearchParams {
                universe: rec.get_u32("universe")?,
                stage: rec.get_u32("stage")?,
                trees: rec.get_u32("trees")? as usize,
            };
            let coloring = match rec.get("coloring") {
                Ok(text) => Some(parse_color_list(text)?),
                Err(_) => None,
            };
            let (outcome, _) =
                run_combcore_case(rec.get("phi")?, rec.get_u32("k")?, &sp, coloring.as_deref())?;
            Ok(outcome)
        }
        "forest" => {
            let k = rec.get_u32("k")?;
            let specs: Vec<String> = (0..k)
                .map(|i| rec.get(&format!("phi{i}")).map(str::to_string))
                .collect::<Result<_, _>>()?;
            let sp = SearchParams {
                universe: rec.get_u32("universe")?,
                stage: rec.get_u32("stage")?,
                trees: rec.get_u32("trees")? as usize,
            };
            run_forest_case(&specs, &sp)
        }
        "finseq" => {
            let sp = SearchParams {
                universe: rec.get_u32("universe")?,
                stage: rec.get_u32("stage")?,
                trees: rec.get_u32("trees")? as usize,
            };
            run_finseq_case(rec.get("phi")?, &sp)
        }
        "twoseq" => {
            let sp = SearchParams {
                universe: rec.get_u32("universe")?,
                stage: rec.get_u32("stage")?,
                trees: rec.get_u32("trees")? as usize,
            };
            run_twoseq_case(
                rec.get("phi")?,
                rec.get("psi")?,
                &sp,
                rec.get_u32("count")? as usize,
            )
        }
        "nured" => {
            let np = NuredParams {
                k: rec.get_u32("k")?,
                universe: rec.get_u32("universe")?,
                stage: rec.get_u32("stage")?,
                trees: rec.get_u32("trees")? as usize,
                rounds: rec.get_u32("rounds")?,
            };
            let limits = parse_color_list(rec.get("limits")?)?;
            let psi = table_from_block(one_tagged(rec, "table")?)?;
            run_nured_case(&psi, &np, &limits)
        }
        "coh" => {
            let case = CohCase {
                k: rec.get_u32("k")?,
                stages: rec.get_u32("stages")?,
                theta: rec.get_u32("theta")?,
            };
            let psi = table_from_block(one_tagged(rec, "table")?)?;
            let d_lines = one_tagged(rec, "pairs")?;
            let d = PairColoring::from_lines(&mut d_lines.iter().map(String::as_str))
                .map_err(|e| CliError::Usage(format!("embedded pair coloring: {e}")))?;
            run_coh_case(&psi, &d, &case).map(|(_, _, outcome)| outcome)
        }
        "nscred" => {
            let case = NscredCase {
                universe: rec.get_u32("universe")?,
                theta: rec.get_u32("theta")?,
                stages: rec.get_u32("stages")?,
                cols: rec.get_u32("cols")? as usize,
                len: rec.get_u32("len")? as usize,
                depth: rec.get_u32("depth")? as usize,
                budget: rec.get_u64("budget")?,
            };
            let phi = table_from_block(one_tagged(rec, "phi-table")?)?;
            let psi = table_from_block(one_tagged(rec, "psi-table")?)?;
            run_nscred_case(&phi, &psi, &case).map(|(_, outcome)| outcome)
        }
        "reduction" => {
            let mode = Mode::parse(rec.get("mode")?)
                .ok_or_else(|| CliError::Usage("bad mode in case record".into()))?;
            let q = problem_from_block(one_tagged(rec, "q-problem")?)?;
            let p = problem_from_block(one_tagged(rec, "p-problem")?)?;
            let forwards: Vec<TableFunctional> = rec
                .tagged("forward-table")
                .into_iter()
                .map(table_from_block)
                .collect::<Result<_, _>>()?;
            let backwards: Vec<TableFunctional> = rec
                .tagged("backward-table")
                .into_iter()
                .map(table_from_block)
                .collect::<Result<_, _>>()?;
            run_reduction_case(&q, &p, mode, &forwards, &backwards)
        }
        other => usage(format!("unknown case kind {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_roundtrip_and_replay_of_a_finseq_case() {
        let mut rec = CaseRecord::new("finseq", "tail-empty");
        rec.param("phi", "contains 0")
            .param("universe", 8)
            .param("stage", 16)
            .param("trees", 4);
        let text = rec.render();
        let back = CaseRecord::parse(&text).unwrap();
        assert_eq!(back, rec);
        let outcome = replay_record(&back).unwrap();
        assert_eq!(outcome.verdict, "tail-empty");
        assert!(outcome.pass);
    }

    #[test]
    fn record_parse_rejects_malformed_input() {
        assert!(CaseRecord::parse("nonsense").is_err());
        assert!(CaseRecord::parse("finram-case v1\nkind x\n").is_err());
        let unterminated = "finram-case v1\nkind finseq\nverdict ok\nblock table\n";
        assert!(CaseRecord::parse(unterminated).is_err());
    }

    #[test]
    fn admissible_completion_fills_deficits_in_order() {
        use std::collections::BTreeMap;
        let assignment: BTreeMap<u32, u32> = [(0, 1), (3, 1)].into();
        let full = complete_admissibly(&assignment, 6, 2, 2).unwrap();
        assert_eq!(full[0], 1);
        assert_eq!(full[3], 1);
        // Free slots went to the deficient color first, then defaulted to 0.
        assert_eq!(full, vec![1, 0, 0, 1, 0, 0]);
        // Impossible deficits are refused.
        let too_tight: BTreeMap<u32, u32> = [(0, 0), (1, 0), (2, 0)].into();
        assert!(complete_admissibly(&too_tight, 3, 2, 1).is_none());
    }
}
