use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, group_by, percent, GroupRow, Metrics, Rate};
use super::CaseResult;
use crate::oracle::{Decision, Phase};

/// Run parameters echoed in the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub scorer: String,
    pub max_steps: usize,
    pub candidates: usize,
    pub eta: usize,
    pub max_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub config: ReportConfig,
    pub verdict_rule: String,
    pub summary: Metrics,
    pub per_app: Vec<GroupRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_category: Vec<GroupRow>,
    pub cases: Vec<CaseResult>,
}

const VERDICT_RULE: &str = "a case passes only if every phase succeeds and every sub-oracle holds";

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Phase1 => "1",
        Phase::Phase2 => "2",
        Phase::Phase3 => "3",
        Phase::None => "-",
    }
}

fn rate(r: Rate) -> String {
    format!("{}/{} ({})", r.num, r.den, percent(r.value()))
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

impl BatchReport {
    pub fn new(config: ReportConfig, cases: Vec<CaseResult>) -> Self {
        Self {
            config,
            verdict_rule: VERDICT_RULE.into(),
            summary: compute_metrics(&cases),
            per_app: group_by(&cases, |r| Some(r.app_id.clone())),
            per_category: group_by(&cases, |r| r.category.clone()),
            cases,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Human-readable report. Timings vary between runs and can be left out.
    pub fn to_markdown(&self, with_timings: bool) -> String {
        let mut md = String::new();
        let c = &self.config;
        let m = &self.summary;
        let _ = writeln!(md, "# Benchmark report\n");
        let _ = writeln!(
            md,
            "Scorer `{}`, max steps {}, candidates {}, eta {}, max rounds {}.\n",
            c.scorer, c.max_steps, c.candidates, c.eta, c.max_rounds
        );
        let _ = writeln!(md, "Verdict rule: {}.\n", self.verdict_rule);

        let _ = writeln!(md, "## Discrimination\n");
        let _ = writeln!(md, "| Precision | Recall | Specificity |");
        let _ = writeln!(md, "|---|---|---|");
        let _ = writeln!(
            md,
            "| {} | {} | {} |\n",
            percent(m.precision),
            percent(m.recall),
            percent(m.specificity)
        );
        let cm = &m.confusion;
        let _ = writeln!(md, "| | judged pass | judged fail |");
        let _ = writeln!(md, "|---|---|---|");
        let _ = writeln!(md, "| correct | TP {} | FN {} |", cm.tp, cm.fn_);
        let _ = writeln!(md, "| faulty | FP {} | TN {} |\n", cm.fp, cm.tn);

        let _ = writeln!(md, "## Success rate on correct cases\n");
        let _ = writeln!(md, "| Phase 1 | Phase 2 | Phase 3 | End-to-end |");
        let _ = writeln!(md, "|---|---|---|---|");
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |\n",
            rate(m.phase1),
            rate(m.phase2),
            rate(m.phase3),
            rate(m.end_to_end)
        );

        group_table(&mut md, "Per app", "App", &self.per_app);
        if !self.per_category.is_empty() {
            group_table(&mut md, "Per category", "Category", &self.per_category);
        }

        let _ = writeln!(md, "## Cases\n");
        let mut header = "| Case | App | Correct | Verdict | Failed phase | Steps | Rounds | Note |".to_string();
        let mut rule = "|---|---|---|---|---|---|---|---|".to_string();
        if with_timings {
            header.push_str(" P1 ms | P2 ms | P3 ms |");
            rule.push_str("---|---|---|");
        }
        let _ = writeln!(md, "{header}\n{rule}");
        for r in &self.cases {
            let verdict = match r.verdict {
                Decision::Pass => "pass",
                Decision::Fail => "fail",
            };
            let _ = write!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                cell(&r.case_id),
                cell(&r.app_id),
                if r.correct { "yes" } else { "no" },
                verdict,
                phase_name(r.failed_phase),
                r.steps_used,
                r.rounds,
                cell(r.error.as_deref().unwrap_or("")),
            );
            if with_timings {
                let t = r.timings;
                let _ = write!(
                    md,
                    " {} | {} | {} |",
                    t.phase1.as_millis(),
                    t.phase2.as_millis(),
                    t.phase3.as_millis()
                );
            }
            md.push('\n');
        }
        md
    }

    /// Write the JSON report to `path` and the markdown report next to it.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json())?;
        std::fs::write(path.with_extension("md"), self.to_markdown(true))
    }
}

fn group_table(md: &mut String, title: &str, label: &str, rows: &[GroupRow]) {
    let _ = writeln!(md, "## {title}\n");
    let _ = writeln!(
        md,
        "| {label} | Cases | TP | FN | TN | FP | Precision | Recall | Specificity |"
    );
    let _ = writeln!(md, "|---|---|---|---|---|---|---|---|---|");
    for r in rows {
        let c = &r.confusion;
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            cell(&r.group),
            r.cases,
            c.tp,
            c.fn_,
            c.tn,
            c.fp,
            percent(r.precision),
            percent(r.recall),
            percent(r.specificity)
        );
    }
    md.push('\n');
}
