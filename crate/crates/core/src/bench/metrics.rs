use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CaseResult;
use crate::oracle::Decision;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, tn: usize, fp: usize) -> Self {
        Self { tp, fn_, tn, fp }
    }

    /// A pass on a correct app is a true positive, a fail on a faulty app a
    /// true negative.
    pub fn add(&mut self, correct: bool, pass: bool) {
        match (correct, pass) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

/// `num` of `den` cases succeeded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub num: usize,
    pub den: usize,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        ratio(self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: ConfusionMatrix,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    /// Stage-wise success over correct cases: phase 1 over all, phase 2 over
    /// phase-1 successes, phase 3 over phase-2 successes.
    pub phase1: Rate,
    pub phase2: Rate,
    pub phase3: Rate,
    /// Passing correct cases over all correct cases.
    pub end_to_end: Rate,
}

impl Metrics {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        Self {
            precision: confusion.precision(),
            recall: confusion.recall(),
            specificity: confusion.specificity(),
            confusion,
            phase1: Rate::default(),
            phase2: Rate::default(),
            phase3: Rate::default(),
            end_to_end: Rate::default(),
        }
    }
}

pub fn compute_metrics(results: &[CaseResult]) -> Metrics {
    let mut cm = ConfusionMatrix::default();
    for r in results {
        cm.add(r.correct, r.verdict == Decision::Pass);
    }
    let mut m = Metrics::from_confusion(cm);
    for r in results.iter().filter(|r| r.correct) {
        m.phase1.den += 1;
        m.end_to_end.den += 1;
        if r.phase1_ok {
            m.phase1.num += 1;
            m.phase2.den += 1;
        }
        if r.phase2_ok {
            m.phase2.num += 1;
            m.phase3.den += 1;
        }
        if r.phase3_ok {
            m.phase3.num += 1;
        }
        if r.verdict == Decision::Pass {
            m.end_to_end.num += 1;
        }
    }
    m
}

/// Confusion counts and rates for one slice of the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub cases: usize,
    pub confusion: ConfusionMatrix,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
}

pub fn group_by(results: &[CaseResult], key: impl Fn(&CaseResult) -> Option<String>) -> Vec<GroupRow> {
    let mut groups: BTreeMap<String, ConfusionMatrix> = BTreeMap::new();
    for r in results {
        if let Some(k) = key(r) {
            groups.entry(k).or_default().add(r.correct, r.verdict == Decision::Pass);
        }
    }
    groups
        .into_iter()
        .map(|(group, cm)| GroupRow {
            group,
            cases: cm.total(),
            precision: cm.precision(),
            recall: cm.recall(),
            specificity: cm.specificity(),
            confusion: cm,
        })
        .collect()
}

/// Percentage with one decimal, or `n/a` when undefined.
pub fn percent(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}%", x * 100.0),
        None => "n/a".into(),
    }
}
