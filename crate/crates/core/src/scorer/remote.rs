//! Scorer delegating to an HTTP service.
//!
//! Endpoints take JSON and reply JSON:
//!
//! * `POST /v1/explore` `{requirement, page, prompt, k}` replies
//!   `{is_entry, candidates: [{selector, action, level, rationale}]}`
//! * `POST /v1/script` `{requirement, page, prompt, trigger_ops, actuated}`
//!   replies `{steps: [{"assert": ...} | {"act": ...}]}`
//! * `POST /v1/oracle` `{requirement, pre, post, ops, eta}` replies
//!   `{sub_oracles: [{selector, mode, target, message}]}`
//!
//! `page`, `pre` and `post` are compressed UI trees in node JSON form.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use super::lexicon::{tokenize, COMMIT_WORDS};
use super::{CandidateOp, ExploreResult, OracleError, PlanError, RelevanceLevel, Scorer, ScorerError};
use crate::oracle::{StatePair, SubOracle, Target};
use crate::refine::{refine, selector_for};
use crate::trigger::{element_label, validate_script, AssertMode, ScriptStep};
use crate::ui::{compress_tree, serialize_for_prompt, Action, Operation, Selector, UiState};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Base delay before the first retry; doubled each attempt.
    pub backoff: Duration,
    /// Seeds the retry jitter.
    pub seed: u64,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(200),
            seed: 0,
            max_in_flight: 4,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteScorer {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    jitter: Mutex<ChaCha8Rng>,
    gate: Gate,
}

#[derive(Deserialize)]
struct WireCandidate {
    selector: Selector,
    action: Action,
    level: i64,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct ExploreReply {
    is_entry: bool,
    #[serde(default)]
    candidates: Vec<WireCandidate>,
}

#[derive(Deserialize)]
struct ScriptReply {
    steps: Vec<ScriptStep>,
}

#[derive(Deserialize)]
struct OracleReply {
    sub_oracles: Vec<SubOracle>,
}

fn malformed(detail: impl std::fmt::Display) -> ScorerError {
    ScorerError::MalformedReply(detail.to_string())
}

fn page_json(state: &UiState) -> Value {
    serde_json::to_value(compress_tree(state).root()).expect("tree serializes")
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Result<Self, ScorerError> {
        if !config.endpoint.starts_with("http://") && !config.endpoint.starts_with("https://") {
            return Err(ScorerError::Config(format!(
                "endpoint {:?} is not an http(s) URL",
                config.endpoint
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ScorerError::Config(e.to_string()))?;
        Ok(Self {
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed)),
            gate: Gate::new(config.max_in_flight),
            client,
            config,
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ScorerError> {
        let _permit = self.gate.acquire();
        let url = format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path);
        let attempts = self.config.retries + 1;
        let mut detail = String::new();
        for attempt in 1..=attempts {
            match self.client.post(&url).json(body).send() {
                Ok(resp) if resp.status().is_success() => {
                    let text = resp.text().map_err(|e| ScorerError::Unavailable {
                        attempts: attempt,
                        detail: e.to_string(),
                    })?;
                    return serde_json::from_str(&text).map_err(malformed);
                }
                Ok(resp) => {
                    let status = resp.status();
                    detail = format!("{url} answered {status}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        return Err(ScorerError::Unavailable {
                            attempts: attempt,
                            detail,
                        });
                    }
                }
                Err(e) => detail = format!("{url}: {e}"),
            }
            if attempt < attempts {
                std::thread::sleep(self.delay(attempt));
            }
            log::warn!("scorer request failed (attempt {attempt}/{attempts}): {detail}");
        }
        Err(ScorerError::Unavailable { attempts, detail })
    }

    fn delay(&self, attempt: u32) -> Duration {
        let base = self.config.backoff.saturating_mul(1 << (attempt - 1).min(16));
        let spread = (self.config.backoff.as_millis() as u64 / 2).max(1);
        let jitter = self.jitter.lock().expect("rng lock").gen_range(0..spread);
        base + Duration::from_millis(jitter)
    }

    fn explore_raw(&self, requirement: &str, state: &UiState, k: usize) -> Result<ExploreResult, ScorerError> {
        let body = json!({
            "requirement": requirement,
            "page": page_json(state),
            "prompt": serialize_for_prompt(state),
            "k": k,
        });
        let reply: ExploreReply = serde_json::from_value(self.post("v1/explore", &body)?).map_err(malformed)?;
        let mut candidates = Vec::new();
        for (i, c) in reply.candidates.into_iter().enumerate() {
            let atomic = RelevanceLevel::new(c.level).map_err(|e| malformed(format!("candidate {i}: {e}")))?;
            let op = Operation::new(c.selector, c.action);
            op.validate().map_err(|e| malformed(format!("candidate {i}: {e}")))?;
            let Some(op) = repaired(op, state) else {
                log::warn!("dropping candidate {i}: selector cannot be repaired");
                continue;
            };
            candidates.push(CandidateOp {
                op,
                atomic,
                rationale: c.rationale,
            });
        }
        candidates.sort_by_key(|c| std::cmp::Reverse(c.atomic));
        candidates.truncate(k);
        Ok(ExploreResult {
            is_entry: reply.is_entry && !candidates.is_empty(),
            candidates,
        })
    }
}

/// Keep `op` if its selector resolves uniquely, repairing it otherwise.
fn repaired(mut op: Operation, state: &UiState) -> Option<Operation> {
    if op.selector.root {
        return Some(op);
    }
    let r = refine(&op.selector, state).ok()?;
    op.selector = r.selector;
    Some(op)
}

impl Scorer for RemoteScorer {
    fn page_explore(&self, requirement: &str, state: &UiState, k: usize) -> Result<ExploreResult, ScorerError> {
        self.explore_raw(requirement, state, k)
    }

    fn plan_script(
        &self,
        requirement: &str,
        state: &UiState,
        trigger_ops: &[Operation],
        actuated: &[String],
    ) -> Result<Vec<ScriptStep>, PlanError> {
        let body = json!({
            "requirement": requirement,
            "page": page_json(state),
            "prompt": serialize_for_prompt(state),
            "trigger_ops": trigger_ops,
            "actuated": actuated,
        });
        let reply: ScriptReply = serde_json::from_value(self.post("v1/script", &body)?).map_err(malformed)?;
        let mut steps = reply.steps;
        validate_script(&steps).map_err(malformed)?;
        // steps up to the first action run on `state`; repair those now
        for step in steps.iter_mut() {
            if let ScriptStep::Act(op) = step {
                if let Some(fixed) = repaired(op.clone(), state) {
                    *op = fixed;
                }
                break;
            }
        }
        Ok(steps)
    }

    fn continue_with(
        &self,
        requirement: &str,
        state: &UiState,
        actuated: &[String],
    ) -> Result<Option<Vec<Operation>>, ScorerError> {
        let explored = self.explore_raw(requirement, state, usize::MAX)?;
        let done: Vec<String> = actuated.iter().flat_map(|a| tokenize(a)).collect();
        let words = |op: &Operation| {
            let label = state
                .resolve(&op.selector)
                .ok()
                .and_then(|p| p.into_iter().next())
                .and_then(|p| state.element(&p).map(element_label))
                .unwrap_or_default();
            tokenize(&label)
        };
        let fresh = |w: &[String]| !w.is_empty() && !w.iter().all(|x| done.contains(x));
        if explored.is_entry {
            if let Some(op) = explored
                .candidates
                .into_iter()
                .map(|c| c.op)
                .find(|op| fresh(&words(op)))
            {
                return Ok(Some(vec![op]));
            }
        }
        // no trigger left, but a pending confirmation still needs its commit button
        let commit = state.root().walk().into_iter().find_map(|(path, e)| {
            let w = tokenize(&element_label(e));
            let ok = e.flag("clickable")
                && e.is_enabled()
                && fresh(&w)
                && w.iter().any(|x| COMMIT_WORDS.contains(&x.as_str()));
            ok.then(|| selector_for(state, &path)).flatten().map(Operation::click)
        });
        Ok(commit.map(|op| vec![op]))
    }

    fn derive_oracle(&self, requirement: &str, pair: &StatePair, eta: usize) -> Result<Vec<SubOracle>, OracleError> {
        let body = json!({
            "requirement": requirement,
            "pre": page_json(&pair.pre),
            "post": page_json(&pair.post),
            "ops": pair.ops,
            "eta": eta,
        });
        let reply: OracleReply = serde_json::from_value(self.post("v1/oracle", &body)?).map_err(malformed)?;
        if reply.sub_oracles.is_empty() {
            return Err(malformed("reply holds no sub-oracle").into());
        }
        let mut out = Vec::new();
        for (i, mut o) in reply.sub_oracles.into_iter().enumerate() {
            o.assertion
                .validate()
                .map_err(|e| malformed(format!("sub-oracle {i}: {e}")))?;
            let state = match o.target {
                Target::Pre => &pair.pre,
                Target::Post => &pair.post,
            };
            // an absent assertion is expected not to resolve
            if o.assertion.mode != AssertMode::Absent && !o.assertion.selector.root {
                if let Ok(r) = refine(&o.assertion.selector, state) {
                    o.assertion.selector = r.selector;
                }
            }
            out.push(o);
        }
        out.truncate(eta.max(1));
        Ok(out)
    }
}
