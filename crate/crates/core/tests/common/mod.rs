#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;

use reqnav_core::bench::{BenchConfig, Corpus, LoadedCase};
use reqnav_core::device::{load_app, open_session, AppSpec, Device};
use reqnav_core::refine::selector_for;
use reqnav_core::scorer::{LexicalScorer, Scorer};
use reqnav_core::ui::{Action, Direction, Operation, StateDigest, UiState};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus() -> Corpus {
    Corpus::load(fixtures().join("corpus")).expect("bundled corpus loads")
}

pub fn app(name: &str) -> Arc<AppSpec> {
    Arc::new(load_app(fixtures().join("corpus/apps").join(format!("{name}.json"))).unwrap())
}

pub const APPS: [&str; 6] = ["notes", "browser", "news", "camera", "health", "social"];

pub fn scorer_for(corpus: &Corpus) -> LexicalScorer {
    LexicalScorer::new(corpus.lexicon.clone().unwrap_or_default())
}

pub fn lexical() -> LexicalScorer {
    LexicalScorer::new(Default::default())
}

pub fn correct_cases(corpus: &Corpus) -> Vec<&LoadedCase> {
    corpus.cases.iter().filter(|c| c.case.correct).collect()
}

pub fn bench_config() -> BenchConfig {
    BenchConfig::default()
}

/// Every click and scroll applicable to `state`, with uniquely resolving selectors.
pub fn all_ops(state: &UiState) -> Vec<Operation> {
    let mut ops = Vec::new();
    for (path, e) in state.root().walk() {
        if path.0.is_empty() || !e.is_enabled() {
            continue;
        }
        let Some(sel) = selector_for(state, &path) else {
            continue;
        };
        if e.flag("clickable") {
            ops.push(Operation::click(sel.clone()));
        }
        if e.flag("scrollable") {
            ops.push(Operation::new(
                sel,
                Action::Scroll {
                    direction: Direction::Down,
                },
            ));
        }
    }
    ops
}

#[derive(Debug)]
pub struct Reached {
    pub depth: usize,
    pub path: Vec<Operation>,
    pub state: UiState,
}

/// Exhaustive breadth-first enumeration of rendered states up to `max_depth`,
/// replaying each path on a fresh session.
pub fn bfs(app: &Arc<AppSpec>, max_depth: usize) -> BTreeMap<StateDigest, Reached> {
    let mut seen = BTreeMap::new();
    let mut session = open_session(app.clone());
    let s0 = session.reset();
    let mut queue = VecDeque::new();
    seen.insert(
        s0.digest(),
        Reached {
            depth: 0,
            path: Vec::new(),
            state: s0.clone(),
        },
    );
    queue.push_back((Vec::<Operation>::new(), s0));
    while let Some((path, state)) = queue.pop_front() {
        if path.len() >= max_depth {
            continue;
        }
        for op in all_ops(&state) {
            let mut s = open_session(app.clone());
            for p in &path {
                s.perform(p).expect("replayed path performs");
            }
            let Ok(next) = s.perform(&op) else { continue };
            let d = next.digest();
            if seen.contains_key(&d) {
                continue;
            }
            let mut p = path.clone();
            p.push(op);
            seen.insert(
                d,
                Reached {
                    depth: p.len(),
                    path: p.clone(),
                    state: next.clone(),
                },
            );
            queue.push_back((p, next));
        }
    }
    seen
}

/// States the scorer judges to be entry states, with their BFS depth.
pub fn entry_states(
    app: &Arc<AppSpec>,
    requirement: &str,
    scorer: &dyn Scorer,
    max_depth: usize,
) -> BTreeMap<StateDigest, usize> {
    bfs(app, max_depth)
        .into_iter()
        .filter(|(_, r)| scorer.page_explore(requirement, &r.state, 3).unwrap().is_entry)
        .map(|(d, r)| (d, r.depth))
        .collect()
}

pub const GAMMAS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const EPS: f64 = 1e-12;

/// Check geometric-mean monotonicity and damping on `n` random paths.
/// Returns a description of each violation.
pub fn gamma_property_violations(n: usize, seed: u64) -> Vec<String> {
    use rand::{Rng, SeedableRng};
    use reqnav_core::scorer::path_score;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for _ in 0..n {
        let len = rng.gen_range(1..=12);
        let path: Vec<f64> = (0..len).map(|_| GAMMAS[rng.gen_range(0..5)]).collect();
        let g = path_score(&path).unwrap();
        if !(0.2 - EPS..=1.0 + EPS).contains(&g) {
            bad.push(format!("{path:?} scored {g} outside [0.2, 1]"));
        }
        // appending
        let next = GAMMAS[rng.gen_range(0..5)];
        let mut longer = path.clone();
        longer.push(next);
        let g2 = path_score(&longer).unwrap();
        let ok = if (next - g).abs() <= EPS {
            (g2 - g).abs() <= EPS
        } else if next < g {
            g2 < g
        } else {
            g2 > g
        };
        if !ok {
            bad.push(format!("appending {next} to {path:?}: {g} -> {g2}"));
        }
        // damping: lowering one coordinate strictly lowers the score
        let i = rng.gen_range(0..len);
        if let Some(&lower) = GAMMAS.iter().rfind(|&&x| x < path[i]) {
            let mut damped = path.clone();
            damped[i] = lower;
            let g3 = path_score(&damped).unwrap();
            if g3 >= g {
                bad.push(format!("lowering {path:?}[{i}] to {lower}: {g} -> {g3}"));
            }
        }
    }
    bad
}

/// One correct case checked against the BFS oracle.
#[derive(Debug)]
pub struct NavCheck {
    pub case_id: String,
    pub oracle_depth: Option<usize>,
    pub found: bool,
    pub steps_used: usize,
}

/// Navigate every correct case with M=5, k=3 and confirm the entry reached is
/// one the exhaustive search also judges an entry, at depth at most 3.
pub fn navigation_checks(corpus: &Corpus) -> Vec<NavCheck> {
    use reqnav_core::navigator::{navigate, NavConfig};
    let scorer = scorer_for(corpus);
    let mut out = Vec::new();
    for case in correct_cases(corpus) {
        let req = &case.case.requirement;
        let entries = entry_states(&case.app, req, &scorer, 3);
        let oracle_depth = entries.values().min().copied();
        let mut session = open_session(case.app.clone());
        let nav = navigate(req, &mut session, &scorer, NavConfig { max_steps: 5, k: 3 }).unwrap();
        let found = nav.entry_digest().is_some_and(|d| entries.contains_key(&d));
        out.push(NavCheck {
            case_id: case.case.case_id.clone(),
            oracle_depth,
            found,
            steps_used: nav.steps_used,
        });
    }
    out
}

/// Problems found in one navigation: repeated history appends, replay
/// mismatches and priority-order violations.
pub fn navigation_audit(nav: &reqnav_core::navigator::NavResult, app: &Arc<AppSpec>, max_steps: usize) -> Vec<String> {
    use reqnav_core::navigator::replay;
    let mut bad = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for pair in nav.history.appended() {
        if !seen.insert(*pair) {
            bad.push(format!("appended twice: {pair:?}"));
        }
    }
    if nav.steps_used > max_steps {
        bad.push(format!("used {} of {max_steps} steps", nav.steps_used));
    }
    let mut session = open_session(app.clone());
    for (digest, _) in nav.history.nodes() {
        match replay(&mut session, &nav.history, *digest) {
            Ok(s) if s.digest() == *digest => {}
            Ok(s) => bad.push(format!("replay to {digest} reached {}", s.digest())),
            Err(e) => bad.push(format!("replay to {digest}: {e}")),
        }
    }
    for e in &nav.trace {
        if let (Some(r), false) = (e.replayed, e.popped.op.is_none() && e.step == 1) {
            if r != e.popped.base {
                bad.push(format!("step {} replayed to {r}, wanted {}", e.step, e.popped.base));
            }
        }
    }
    // rebuild the queue from the trace: every pop must beat what is left
    let mut queued: BTreeMap<u64, f64> = BTreeMap::new();
    queued.insert(0, 1.0);
    for e in &nav.trace {
        let Some(score) = queued.remove(&e.popped.seq) else {
            bad.push(format!("step {} popped unknown entry {}", e.step, e.popped.seq));
            continue;
        };
        for (&seq, &other) in &queued {
            if other > score || (other == score && seq < e.popped.seq) {
                bad.push(format!("step {} popped {score} before {other}", e.step));
            }
        }
        for p in &e.pushed {
            queued.insert(p.seq, p.score);
        }
    }
    bad
}

/// Run phases 1 and 2 on `case` and capture the state pair phase 3 judges.
/// `None` when either phase fails.
pub fn state_pair(case: &LoadedCase, scorer: &dyn Scorer) -> Option<reqnav_core::oracle::StatePair> {
    use reqnav_core::navigator::{navigate, NavConfig};
    use reqnav_core::oracle::capture_pre_post;
    use reqnav_core::trigger::{iterate_until_complete, ExecConfig};
    let req = &case.case.requirement;
    let mut s = open_session(case.app.clone());
    let nav = navigate(req, &mut s, scorer, NavConfig::default()).ok()?;
    let entry = nav.entry.as_ref()?.digest();
    let out = iterate_until_complete(req, &mut s, scorer, nav.trigger_ops.as_ref()?, ExecConfig::default()).ok()?;
    if !out.confirmed() {
        return None;
    }
    capture_pre_post(&mut s, &nav.history, entry, &out.executed_ops).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Corruption {
    /// Correct value with a wrong extra predicate.
    StalePredicate,
    TruncatedResourceId,
    /// The value lives under content-desc but the selector asks for text,
    /// or the other way round.
    MovedAttribute,
    MultiMatch,
}

#[derive(Debug, Clone)]
pub struct RefineFixture {
    pub name: String,
    pub state: UiState,
    pub broken: reqnav_core::ui::Selector,
    pub target: reqnav_core::ui::ElementPath,
    pub corruption: Corruption,
}

const KEYS: [&str; 3] = ["resource-id", "text", "content-desc"];

/// Elements of `state` carrying `value` under any key attribute, exactly or
/// as a substring.
fn holders(state: &UiState, value: &str, exact: bool) -> Vec<reqnav_core::ui::ElementPath> {
    state
        .root()
        .walk()
        .into_iter()
        .filter(|(_, e)| {
            KEYS.iter().any(|k| {
                e.attr(k).is_some_and(|v| {
                    let (v, w) = (v.trim().to_lowercase(), value.trim().to_lowercase());
                    if exact {
                        v == w
                    } else {
                        v.contains(&w)
                    }
                })
            })
        })
        .map(|(p, _)| p)
        .collect()
}

/// Corrupted selectors over every bundled state, kept only when the
/// corruption leaves exactly one element that a repair could mean.
pub fn refine_suite() -> Vec<RefineFixture> {
    use reqnav_core::ui::Selector;
    let mut out = Vec::new();
    for name in APPS {
        let app = app(name);
        for (sid, root) in &app.states {
            let state = UiState::new(root.clone());
            for (path, e) in state.root().walk() {
                if path.0.is_empty() {
                    continue;
                }
                let mut push = |broken: Selector, corruption, target: &reqnav_core::ui::ElementPath| {
                    out.push(RefineFixture {
                        name: format!("{name}/{sid}/{broken}"),
                        state: state.clone(),
                        broken,
                        target: target.clone(),
                        corruption,
                    })
                };
                if let Some(t) = e.attr("text").filter(|t| !t.trim().is_empty()) {
                    if holders(&state, t, true) == [path.clone()] {
                        let mut sel = Selector::text(t);
                        sel.class = Some("no.such.Widget".into());
                        push(sel, Corruption::StalePredicate, &path);
                    }
                }
                if let Some(r) = e.attr("resource-id").filter(|r| r.chars().count() >= 6) {
                    let chars: Vec<char> = r.chars().collect();
                    for cut in [
                        chars[2..].iter().collect::<String>(),
                        chars[..chars.len() - 2].iter().collect(),
                    ] {
                        if holders(&state, &cut, true).is_empty() && holders(&state, &cut, false) == [path.clone()] {
                            push(Selector::resource_id(cut), Corruption::TruncatedResourceId, &path);
                        }
                    }
                }
                for (from, to) in [("content-desc", "text"), ("text", "content-desc")] {
                    let Some(v) = e.attr(from).filter(|v| !v.trim().is_empty()) else {
                        continue;
                    };
                    if e.attr(to).is_some_and(|w| w.trim() == v.trim()) {
                        continue;
                    }
                    let exact = holders(&state, v, true);
                    let nobody_has_it_as_to = state
                        .root()
                        .walk()
                        .iter()
                        .all(|(_, x)| x.attr(to).is_none_or(|w| w.trim() != v.trim()));
                    if exact == [path.clone()] && nobody_has_it_as_to {
                        let sel = if to == "text" {
                            Selector::text(v)
                        } else {
                            Selector::content_desc(v)
                        };
                        push(sel, Corruption::MovedAttribute, &path);
                    }
                }
            }
            // shared classes and shared labels
            let walk = state.root().walk();
            let mut seen = std::collections::BTreeSet::new();
            for (_, e) in &walk {
                for (k, sel) in [
                    ("class", e.attr("class").map(Selector::class)),
                    ("text", e.attr("text").map(Selector::text)),
                ] {
                    let Some(sel) = sel else { continue };
                    let hits = state.resolve(&sel).unwrap();
                    if hits.len() > 1 && seen.insert((k, sel.to_string())) {
                        let first = hits[0].clone();
                        push_multi(&mut out, name, sid, &state, sel, first);
                    }
                }
            }
        }
    }
    out
}

fn push_multi(
    out: &mut Vec<RefineFixture>,
    app: &str,
    sid: &str,
    state: &UiState,
    broken: reqnav_core::ui::Selector,
    target: reqnav_core::ui::ElementPath,
) {
    out.push(RefineFixture {
        name: format!("{app}/{sid}/{broken}"),
        state: state.clone(),
        broken,
        target,
        corruption: Corruption::MultiMatch,
    });
}

/// Run the suite; returns the fixture count per corruption and one line per
/// fixture that was not repaired to a unique selector for its element, or
/// whose probed tiers were out of order.
pub fn refine_suite_problems() -> (BTreeMap<Corruption, usize>, Vec<String>) {
    use reqnav_core::refine::{refine_probed, RepairKind, Tier};
    const ORDER: [Tier; 4] = [Tier::Exact, Tier::CrossAttribute, Tier::Fuzzy, Tier::ClassOnly];
    let mut counts = BTreeMap::new();
    let mut bad = Vec::new();
    for f in refine_suite() {
        *counts.entry(f.corruption).or_insert(0) += 1;
        let mut probed = Vec::new();
        let r = match refine_probed(&f.broken, &f.state, |t| probed.push(t)) {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("{}: {e}", f.name));
                continue;
            }
        };
        if !ORDER.starts_with(&probed) {
            bad.push(format!("{}: tiers probed as {probed:?}", f.name));
        }
        let want = match f.corruption {
            Corruption::StalePredicate => RepairKind::Repaired(Tier::Exact),
            Corruption::MovedAttribute => RepairKind::Repaired(Tier::CrossAttribute),
            Corruption::TruncatedResourceId => RepairKind::Repaired(Tier::Fuzzy),
            Corruption::MultiMatch => RepairKind::Disambiguated,
        };
        if r.kind != want {
            bad.push(format!("{}: repaired as {:?}, wanted {want:?}", f.name, r.kind));
        }
        if let RepairKind::Repaired(t) = r.kind {
            if probed.last() != Some(&t) {
                bad.push(format!("{}: stopped at {t:?} after probing {probed:?}", f.name));
            }
        }
        match f.state.resolve(&r.selector) {
            Ok(hits) if hits == [f.target.clone()] => {}
            other => bad.push(format!("{}: {} resolves to {other:?}", f.name, r.selector)),
        }
    }
    (counts, bad)
}

pub fn report_config(config: &BenchConfig) -> reqnav_core::bench::ReportConfig {
    reqnav_core::bench::ReportConfig {
        scorer: "lexical".into(),
        max_steps: config.nav.max_steps,
        candidates: config.nav.k,
        eta: config.eta,
        max_rounds: config.exec.max_rounds,
    }
}

/// Full lexical batch over `corpus`, as a report.
pub fn batch_report(corpus: &Corpus) -> reqnav_core::bench::BatchReport {
    let config = bench_config();
    let scorer = scorer_for(corpus);
    let cases = reqnav_core::bench::run_batch(&corpus.cases, &scorer, &config);
    reqnav_core::bench::BatchReport::new(report_config(&config), cases)
}

/// Compare `actual` with the checked-in golden file, or rewrite it when
/// `REQNAV_BLESS` is set.
pub fn assert_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("REQNAV_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, want, "{name} differs from golden copy");
}

type Handler = dyn Fn(&str, &serde_json::Value) -> (u16, String) + Send + Sync;

/// Local HTTP server answering scorer requests through `handler`.
pub struct Stub {
    pub url: String,
    pub hits: Arc<std::sync::Mutex<Vec<String>>>,
    server: Arc<tiny_http::Server>,
    worker: Option<std::thread::JoinHandle<()>>,
}

impl Stub {
    pub fn new(handler: impl Fn(&str, &serde_json::Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub"));
        let port = server.server_addr().to_ip().unwrap().port();
        let hits = Arc::new(std::sync::Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (srv, log) = (server.clone(), hits.clone());
        let worker = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let mut body = String::new();
                let _ = std::io::Read::read_to_string(req.as_reader(), &mut body);
                let path = req.url().to_string();
                log.lock().unwrap().push(path.clone());
                let (code, reply) = match serde_json::from_str(&body) {
                    Ok(v) => handler(&path, &v),
                    Err(e) => (400, e.to_string()),
                };
                let _ = req.respond(tiny_http::Response::from_string(reply).with_status_code(code));
            }
        });
        Self {
            url: format!("http://127.0.0.1:{port}"),
            hits,
            server,
            worker: Some(worker),
        }
    }

    /// Serve `reply` on `path` with status 200; anything else is a 404.
    pub fn canned(path: &'static str, reply: serde_json::Value) -> Self {
        Self::new(move |p, _| {
            if p == path {
                (200, reply.to_string())
            } else {
                (404, String::new())
            }
        })
    }

    pub fn scorer(&self) -> reqnav_core::scorer::RemoteScorer {
        let mut c = reqnav_core::scorer::RemoteConfig::new(self.url.clone());
        c.retries = 1;
        c.backoff = std::time::Duration::from_millis(1);
        c.timeout = std::time::Duration::from_secs(10);
        reqnav_core::scorer::RemoteScorer::new(c).unwrap()
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn page(v: &serde_json::Value) -> UiState {
    UiState::new(serde_json::from_value(v.clone()).expect("page is a node tree"))
}

/// A stub service that answers every endpoint with the lexical scorer's
/// own judgement of the posted pages.
pub fn lexical_service(scorer: LexicalScorer) -> Stub {
    use serde_json::json;
    Stub::new(move |path, body| {
        let req = body["requirement"].as_str().unwrap_or_default();
        match path {
            "/v1/explore" => {
                let k = body["k"].as_u64().unwrap_or(3) as usize;
                let r = scorer.page_explore(req, &page(&body["page"]), k).unwrap();
                let candidates: Vec<_> = r
                    .candidates
                    .iter()
                    .map(|c| json!({"selector": c.op.selector, "action": c.op.action, "level": c.atomic.level(), "rationale": c.rationale}))
                    .collect();
                (
                    200,
                    json!({"is_entry": r.is_entry, "candidates": candidates}).to_string(),
                )
            }
            "/v1/script" => {
                let ops: Vec<Operation> = serde_json::from_value(body["trigger_ops"].clone()).unwrap();
                let actuated: Vec<String> = serde_json::from_value(body["actuated"].clone()).unwrap();
                match scorer.plan_script(req, &page(&body["page"]), &ops, &actuated) {
                    Ok(steps) => (200, json!({"steps": steps}).to_string()),
                    Err(e) => (422, e.to_string()),
                }
            }
            "/v1/oracle" => {
                let (pre, post) = (page(&body["pre"]), page(&body["post"]));
                let pair = reqnav_core::oracle::StatePair {
                    entry: pre.digest(),
                    ops: serde_json::from_value(body["ops"].clone()).unwrap(),
                    pre,
                    post,
                };
                let eta = body["eta"].as_u64().unwrap_or(3) as usize;
                match scorer.derive_oracle(req, &pair, eta) {
                    Ok(o) => (200, json!({"sub_oracles": o}).to_string()),
                    Err(e) => (422, e.to_string()),
                }
            }
            _ => (404, String::new()),
        }
    })
}
