//! `verify` subcommands: exhaustive or randomized re-derivations of the
//! engine's structural laws, one report case per checked instance.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use finram::fincomb::sample_family;

use crate::cases::{
    color_list, persist_record, run_combcore_case, run_finseq_case, run_forest_case,
    run_twoseq_case, CaseRecord, SearchParams,
};
use crate::context::Ctx;
use crate::report::{CliError, Report};

/// Deterministic spec list for the whole sample family over `[0, n)`.
fn family_specs(n: u32) -> Vec<String> {
    sample_family(n)
        .iter()
        .map(|p| p.spec().expect("sample predicates carry specs").to_string())
        .collect()
}

/// Every coloring of every forest found for the sample family must carry a
/// level-monochromatic terminal.
pub fn combcore(
    k: u32,
    universe: u32,
    budget: usize,
    stage: u32,
    ctx: &Ctx,
) -> Result<Report, CliError> {
    let mut report = Report::new("verify combcore");
    report
        .param("k", k)
        .param("universe", universe)
        .param("budget", budget)
        .param("stage", stage);
    let sp = SearchParams { universe, stage, trees: budget };
    let mut failures = 0usize;
    let mut forests = 0usize;
    let specs = family_specs(universe);
    for spec in &specs {
        let (outcome, witnessless) = run_combcore_case(spec, k, &sp, None)?;
        if outcome.verdict == "pass" {
            forests += 1;
        }
        report.case(format!("phi=\"{spec}\" {}", outcome.line()));
        if !outcome.pass {
            failures += 1;
            report.fail();
            let mut rec = CaseRecord::new("combcore", outcome.verdict);
            rec.param("phi", spec)
                .param("k", k)
                .param("universe", universe)
                .param("stage", stage)
                .param("trees", budget);
            if let Some(colors) = &witnessless {
                rec.param("coloring", color_list(colors));
            }
            let note = persist_record(ctx.out.as_deref(), &format!("combcore-{spec}"), &rec)?;
            report.note(note);
        }
    }
    report
        .summary("cases", specs.len())
        .summary("forests", forests)
        .summary("failures", failures);
    Ok(report)
}

/// Randomized searches re-validated by the independent structural checker.
pub fn forest(
    count: u32,
    k: Option<u32>,
    universe: u32,
    stage: u32,
    ctx: &Ctx,
) -> Result<Report, CliError> {
    if universe < 4 {
        return Err(CliError::Usage("the largest universe must be at least 4".into()));
    }
    if let Some(k) = k {
        if k == 0 || k > 3 {
            return Err(CliError::Usage(format!(
                "level count {k} is outside the supported range [1, 3]"
            )));
        }
    }
    let mut report = Report::new("verify forest");
    report
        .param("count", count)
        .param("k", k.map(|v| v.to_string()).unwrap_or_else(|| "random".into()))
        .param("universe", universe)
        .param("stage", stage)
        .param("seed", ctx.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut failures = 0usize;
    let mut found = 0usize;
    for index in 0..count {
        let case_k = k.unwrap_or_else(|| rng.gen_range(1..=3));
        let case_universe = rng.gen_range(4..=universe);
        let trees = rng.gen_range(4..=16usize);
        let pool = family_specs(case_universe);
        let specs: Vec<String> = (0..case_k)
            .map(|_| pool[rng.gen_range(0..pool.len())].clone())
            .collect();
        let sp = SearchParams { universe: case_universe, stage, trees };
        let outcome = run_forest_case(&specs, &sp)?;
        if outcome.verdict == "forest-ok" {
            found += 1;
        }
        if !outcome.pass {
            failures += 1;
            report.fail();
            report.case(format!(
                "index={index} universe={case_universe} trees={trees} phis=\"{}\" {}",
                specs.join("; "),
                outcome.line()
            ));
            let mut rec = CaseRecord::new("forest", outcome.verdict);
            rec.param("k", case_k)
                .param("universe", case_universe)
                .param("stage", stage)
                .param("trees", trees);
            for (i, s) in specs.iter().enumerate() {
                rec.param(&format!("phi{i}"), s);
            }
            let note = persist_record(ctx.out.as_deref(), &format!("forest-{index}"), &rec)?;
            report.note(note);
        }
    }
    report
        .summary("cases", count)
        .summary("forests", found)
        .summary("failures", failures);
    Ok(report)
}

/// Probe dichotomy across the sample family: every found sequence
/// re-certifies, every empty-tail certificate survives the powerset scan.
pub fn finseq(universe: u32, stage: u32, trees: usize, ctx: &Ctx) -> Result<Report, CliError> {
    let mut report = Report::new("verify finseq");
    report
        .param("universe", universe)
        .param("stage", stage)
        .param("trees", trees);
    let sp = SearchParams { universe, stage, trees };
    let mut failures = 0usize;
    let mut sequences = 0usize;
    let mut empty_tails = 0usize;
    let specs = family_specs(universe);
    for spec in &specs {
        let outcome = run_finseq_case(spec, &sp)?;
        match outcome.verdict {
            "sequence" => sequences += 1,
            "tail-empty" => empty_tails += 1,
            _ => {}
        }
        report.case(format!("phi=\"{spec}\" {}", outcome.line()));
        if !outcome.pass {
            failures += 1;
            report.fail();
            let mut rec = CaseRecord::new("finseq", outcome.verdict);
            rec.param("phi", spec)
                .param("universe", universe)
                .param("stage", stage)
                .param("trees", trees);
            let note = persist_record(ctx.out.as_deref(), &format!("finseq-{spec}"), &rec)?;
            report.note(note);
        }
    }
    report
        .summary("cases", specs.len())
        .summary("sequences", sequences)
        .summary("empty-tails", empty_tails)
        .summary("failures", failures);
    Ok(report)
}

/// Second-order builds over every ordered pair of sample predicates must
/// re-validate against the generating rule.
pub fn twoseq(
    universe: u32,
    stage: u32,
    count: usize,
    trees: usize,
    ctx: &Ctx,
) -> Result<Report, CliError> {
    let mut report = Report::new("verify twoseq");
    report
        .param("universe", universe)
        .param("stage", stage)
        .param("count", count)
        .param("trees", trees);
    let sp = SearchParams { universe, stage, trees };
    let mut failures = 0usize;
    let mut built = 0usize;
    let specs = family_specs(universe);
    for phi in &specs {
        for psi in &specs {
            let outcome = run_twoseq_case(phi, psi, &sp, count)?;
            if outcome.verdict == "built" {
                built += 1;
                report.case(format!("phi=\"{phi}\" psi=\"{psi}\" {}", outcome.line()));
            }
            if !outcome.pass {
                failures += 1;
                report.fail();
                report.case(format!("phi=\"{phi}\" psi=\"{psi}\" {}", outcome.line()));
                let mut rec = CaseRecord::new("twoseq", outcome.verdict);
                rec.param("phi", phi)
                    .param("psi", psi)
                    .param("universe", universe)
                    .param("stage", stage)
                    .param("count", count)
                    .param("trees", trees);
                let note =
                    persist_record(ctx.out.as_deref(), &format!("twoseq-{phi}-{psi}"), &rec)?;
                report.note(note);
            }
        }
    }
    report
        .summary("cases", specs.len() * specs.len())
        .summary("built", built)
        .summary("failures", failures);
    Ok(report)
}
