//! Versioned report assembly and command error channel.
//!
//! Reports render to two formats from one body of lines:
//! - `structured`: a stable line schema (`finram-report v1`) meant for
//!   golden-file comparison and machine consumption;
//! - `text`: a human summary carrying the same content.
//!
//! Both renderings are fully deterministic: no timestamps, no absolute
//! paths beyond what the invocation supplied, no map-iteration ambiguity.

use std::fmt::Display;

/// Pinned schema version for every emitted report and case record.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Structured,
}

/// Process exit codes: 0 pass, 1 findings, 2 usage, 3 broken invariant.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Errors that abort a command instead of producing a verdict.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or unparsable files, out-of-scale parameters.
    Usage(String),
    /// An internal law the engine vouches for was observed broken; the dump
    /// carries the offending state.
    Invariant { message: String, dump: Vec<String> },
}

pub fn usage<T>(message: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(message.into()))
}

/// One report under assembly. Lines are appended in order; `render`
/// serializes them for the chosen format.
#[derive(Debug, Clone)]
pub struct Report {
    command: String,
    params: Vec<(String, String)>,
    cases: Vec<String>,
    notes: Vec<String>,
    summary: Vec<(String, String)>,
    pass: bool,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Report {
        Report {
            command: command.into(),
            params: Vec::new(),
            cases: Vec::new(),
            notes: Vec::new(),
            summary: Vec::new(),
            pass: true,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    /// One finished case, already formatted as `key=value` tokens.
    pub fn case(&mut self, line: impl Into<String>) -> &mut Self {
        self.cases.push(line.into());
        self
    }

    /// Free-form information line (artifact locations, block dumps).
    pub fn note(&mut self, line: impl Into<String>) -> &mut Self {
        self.notes.push(line.into());
        self
    }

    /// Emit a whole pre-rendered block (serialized state) as notes.
    pub fn block(&mut self, lines: &[String]) -> &mut Self {
        for l in lines {
            self.notes.push(l.clone());
        }
        self
    }

    pub fn summary(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.summary.push((key.to_string(), value.to_string()));
        self
    }

    pub fn fail(&mut self) -> &mut Self {
        self.pass = false;
        self
    }

    pub fn passed(&self) -> bool {
        self.pass
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Structured => {
                out.push_str(&format!("finram-report v{REPORT_VERSION}\n"));
                out.push_str(&format!("command {}\n", self.command));
                for (k, v) in &self.params {
                    out.push_str(&format!("param {k}={v}\n"));
                }
                for c in &self.cases {
                    out.push_str(&format!("case {c}\n"));
                }
                for n in &self.notes {
                    out.push_str(&format!("note {n}\n"));
                }
                if !self.summary.is_empty() {
                    let pairs: Vec<String> =
                        self.summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    out.push_str(&format!("summary {}\n", pairs.join(" ")));
                }
                out.push_str(&format!(
                    "status {}\n",
                    if self.pass { "pass" } else { "fail" }
                ));
            }
            Format::Text => {
                out.push_str(&format!(
                    "{} (finram report v{REPORT_VERSION})\n",
                    self.command
                ));
                for (k, v) in &self.params {
                    out.push_str(&format!("  {k}: {v}\n"));
                }
                for c in &self.cases {
                    out.push_str(&format!("- {c}\n"));
                }
                for n in &self.notes {
                    out.push_str(&format!("{n}\n"));
                }
                if !self.summary.is_empty() {
                    let pairs: Vec<String> =
                        self.summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    out.push_str(&format!("summary: {}\n", pairs.join(" ")));
                }
                out.push_str(&format!(
                    "status: {}\n",
                    if self.pass { "pass" } else { "fail" }
                ));
            }
        }
        out
    }
}

/// Global run configuration shared by every subcommand: scale bounds, the
/// seed feeding sampled enumerations, the artifact directory, and the
/// pinned schema version.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub universe: u32,
    pub stage_limit: u32,
    pub theta: u32,
    pub depth: u32,
    pub seed: u64,
    pub out_dir: Option<std::path::PathBuf>,
    pub format: Format,
    pub version: u32,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.universe == 0 {
            return usage("universe bound must be positive");
        }
        if self.stage_limit == 0 {
            return usage("stage limit must be positive");
        }
        if self.theta == 0 {
            return usage("width threshold must be positive");
        }
        if self.depth == 0 {
            return usage("recursion depth must be positive");
        }
        if self.version != REPORT_VERSION {
            return usage(format!(
                "report schema version {} is not supported (this build emits v{REPORT_VERSION})",
                self.version
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_formats_deterministically() {
        let mut r = Report::new("verify combcore");
        r.param("k", 2).param("universe", 12);
        r.case("phi=\"card-ge 2\" verdict=pass");
        r.note("no artifacts persisted");
        r.summary("cases", 1).summary("failures", 0);
        let s = r.render(Format::Structured);
        assert_eq!(
            s,
            "finram-report v1\ncommand verify combcore\nparam k=2\nparam universe=12\n\
             case phi=\"card-ge 2\" verdict=pass\nnote no artifacts persisted\n\
             summary cases=1 failures=0\nstatus pass\n"
        );
        assert_eq!(s, r.render(Format::Structured));
        let t = r.render(Format::Text);
        assert!(t.starts_with("verify combcore (finram report v1)\n"));
        assert!(t.contains("- phi=\"card-ge 2\" verdict=pass\n"));
        assert!(t.ends_with("status: pass\n"));
        r.fail();
        assert!(r.render(Format::Structured).ends_with("status fail\n"));
    }

    #[test]
    fn run_config_rejects_zero_bounds() {
        let ok = RunConfig {
            universe: 12,
            stage_limit: 64,
            theta: 3,
            depth: 3,
            seed: 0,
            out_dir: None,
            format: Format::Text,
            version: REPORT_VERSION,
        };
        assert!(ok.validate().is_ok());
        for field in 0..4 {
            let mut bad = ok.clone();
            match field {
                0 => bad.universe = 0,
                1 => bad.stage_limit = 0,
                2 => bad.theta = 0,
                _ => bad.depth = 0,
            }
            assert!(matches!(bad.validate(), Err(CliError::Usage(_))));
        }
        let mut wrong_version = ok;
        wrong_version.version = 99;
        assert!(wrong_version.validate().is_err());
    }
}
