//! Benchmark runner: per-case three-phase pipeline, metrics and reports.

mod corpus;
mod metrics;
mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::device::open_session;
use crate::navigator::{navigate, NavConfig, NavTraceEvent};
use crate::oracle::{capture_pre_post, evaluate, Decision, Phase, Verdict};
use crate::scorer::{OracleError, Scorer};
use crate::trigger::{iterate_until_complete, ExecConfig};

pub use corpus::{BenchCase, Corpus, CorpusError, LoadedCase};
pub use metrics::{compute_metrics, group_by, percent, ConfusionMatrix, GroupRow, Metrics, Rate};
pub use report::{BatchReport, ReportConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub nav: NavConfig,
    pub exec: ExecConfig,
    /// Number of sub-oracles requested.
    pub eta: usize,
    /// Directory receiving one JSON-lines trace per case.
    pub trace_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            nav: NavConfig::default(),
            exec: ExecConfig::default(),
            eta: 3,
            trace_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Timings {
    pub phase1: Duration,
    pub phase2: Duration,
    pub phase3: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub app_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub correct: bool,
    pub phase1_ok: bool,
    pub phase2_ok: bool,
    pub phase3_ok: bool,
    pub verdict: Decision,
    /// The phase that failed, or `none` for a pass.
    pub failed_phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_phase: Option<Phase>,
    pub steps_used: usize,
    pub rounds: usize,
    pub executed_ops: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    /// Wall-clock times; kept out of JSON so reports stay reproducible.
    #[serde(skip)]
    pub timings: Timings,
}

impl CaseResult {
    fn new(case: &LoadedCase) -> Self {
        Self {
            case_id: case.case.case_id.clone(),
            app_id: case.app.app_id.clone(),
            category: case.case.category.clone(),
            correct: case.case.correct,
            phase1_ok: false,
            phase2_ok: false,
            phase3_ok: false,
            verdict: Decision::Fail,
            failed_phase: Phase::Phase1,
            expected_phase: case.case.expected_phase,
            steps_used: 0,
            rounds: 0,
            executed_ops: 0,
            error: None,
            oracle: None,
            trace_path: None,
            timings: Timings::default(),
        }
    }

    fn fail(mut self, phase: Phase, error: Option<String>) -> Self {
        self.failed_phase = phase;
        self.verdict = Decision::Fail;
        self.error = error;
        self
    }
}

struct TraceLog {
    out: Option<BufWriter<File>>,
}

impl TraceLog {
    fn open(dir: Option<&PathBuf>, case_id: &str) -> (Self, Option<String>) {
        let Some(dir) = dir else {
            return (Self { out: None }, None);
        };
        let path = dir.join(format!("{case_id}.jsonl"));
        match std::fs::create_dir_all(dir).and_then(|_| File::create(&path)) {
            Ok(f) => (
                Self {
                    out: Some(BufWriter::new(f)),
                },
                Some(path.display().to_string()),
            ),
            Err(e) => {
                log::warn!("cannot write trace {}: {e}", path.display());
                (Self { out: None }, None)
            }
        }
    }

    fn line(&mut self, value: &impl Serialize) {
        if let Some(out) = &mut self.out {
            let ok = serde_json::to_writer(&mut *out, value).is_ok() && out.write_all(b"\n").is_ok();
            if !ok {
                log::warn!("trace write failed");
                self.out = None;
            }
        }
    }

    fn navigation(&mut self, events: &[NavTraceEvent]) {
        for e in events {
            self.line(&json!({ "phase": "phase1", "event": e }));
        }
    }
}

/// Run one case through navigation, triggering and oracle evaluation,
/// stopping at the first failing phase.
pub fn run_case(case: &LoadedCase, scorer: &dyn Scorer, config: &BenchConfig) -> CaseResult {
    let mut result = CaseResult::new(case);
    let (mut trace, trace_path) = TraceLog::open(config.trace_dir.as_ref(), &case.case.case_id);
    result.trace_path = trace_path;
    let requirement = case.case.requirement.as_str();
    let mut session = open_session(case.app.clone());

    let started = Instant::now();
    let nav = navigate(requirement, &mut session, scorer, config.nav);
    result.timings.phase1 = started.elapsed();
    let nav = match nav {
        Ok(n) => n,
        Err(e) => return result.fail(Phase::Phase1, Some(e.to_string())),
    };
    trace.navigation(&nav.trace);
    result.steps_used = nav.steps_used;
    let (Some(entry), Some(trigger_ops)) = (&nav.entry, &nav.trigger_ops) else {
        return result.fail(Phase::Phase1, Some("no entry state found".into()));
    };
    result.phase1_ok = true;

    let started = Instant::now();
    let outcome = iterate_until_complete(requirement, &mut session, scorer, trigger_ops, config.exec);
    result.timings.phase2 = started.elapsed();
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return result.fail(Phase::Phase2, Some(e.to_string())),
    };
    trace.line(&json!({ "phase": "phase2", "outcome": outcome }));
    result.rounds = outcome.rounds;
    result.executed_ops = outcome.executed_ops.len();
    if !outcome.confirmed() {
        let why = match &outcome.presence {
            crate::trigger::Presence::Absent(m) => m.clone(),
            crate::trigger::Presence::Confirmed => unreachable!(),
        };
        return result.fail(Phase::Phase2, Some(why));
    }
    result.phase2_ok = true;

    let started = Instant::now();
    let entry_digest = entry.digest();
    let pair = match capture_pre_post(&mut session, &nav.history, entry_digest, &outcome.executed_ops) {
        Ok(p) => p,
        Err(e) => {
            result.timings.phase3 = started.elapsed();
            return result.fail(Phase::Phase3, Some(e.to_string()));
        }
    };
    trace.line(&json!({
        "phase": "phase3",
        "entry": pair.entry,
        "pre": pair.pre.digest(),
        "post": pair.post.digest(),
    }));
    let oracles = scorer.derive_oracle(requirement, &pair, config.eta);
    let oracles = match oracles {
        Ok(o) => o,
        Err(e) => {
            result.timings.phase3 = started.elapsed();
            let msg = match e {
                OracleError::NoDiffDerivable => "execution changed nothing; no oracle derivable".into(),
                other => other.to_string(),
            };
            return result.fail(Phase::Phase3, Some(msg));
        }
    };
    let verdict = evaluate(&oracles, &pair);
    result.timings.phase3 = started.elapsed();
    trace.line(&json!({ "phase": "phase3", "verdict": verdict }));
    let pass = verdict.decision == Decision::Pass;
    result.oracle = Some(verdict);
    if !pass {
        return result.fail(Phase::Phase3, None);
    }
    result.phase3_ok = true;
    result.verdict = Decision::Pass;
    result.failed_phase = Phase::None;
    result
}

/// Run `cases` in parallel; results keep the input order.
pub fn run_batch(cases: &[LoadedCase], scorer: &dyn Scorer, config: &BenchConfig) -> Vec<CaseResult> {
    cases.par_iter().map(|c| run_case(c, scorer, config)).collect()
}
