mod common;

use common::Stub;
use reqnav_core::bench::{run_case, BenchConfig};
use reqnav_core::device::{open_session, Device};
use reqnav_core::navigator::{navigate, NavConfig, NavError};
use reqnav_core::oracle::{Phase, StatePair};
use reqnav_core::scorer::{OracleError, PlanError, Scorer, ScorerError};
use reqnav_core::trigger::{AssertMode, ScriptStep};
use reqnav_core::ui::{Operation, Selector, UiState};
use serde_json::json;

fn home() -> UiState {
    open_session(common::app("notes")).current()
}

fn explore_reply(candidates: serde_json::Value) -> serde_json::Value {
    json!({"is_entry": false, "candidates": candidates})
}

#[test]
fn remote_pipeline_agrees_with_the_local_scorer() {
    let corpus = common::corpus();
    let local = common::scorer_for(&corpus);
    let stub = common::lexical_service(local.clone());
    let remote = stub.scorer();
    let config = BenchConfig::default();
    for case in &corpus.cases {
        let id = &case.case.case_id;
        let a = run_case(case, &local, &config);
        let b = run_case(case, &remote, &config);
        assert_eq!(
            (a.verdict, a.failed_phase),
            (b.verdict, b.failed_phase),
            "{id}: {:?}",
            b.error
        );
        assert_eq!(a.steps_used, b.steps_used, "{id}");
        // the client may disambiguate a multi-match selector, so compare outcomes
        let flags = |r: &reqnav_core::bench::CaseResult| {
            r.oracle.as_ref().map(|v| {
                v.sub_results
                    .iter()
                    .map(|s| (s.oracle.assertion.mode.clone(), s.pass))
                    .collect::<Vec<_>>()
            })
        };
        assert_eq!(flags(&a), flags(&b), "{id}");
    }
    let hits = stub.hits.lock().unwrap();
    for path in ["/v1/explore", "/v1/script", "/v1/oracle"] {
        assert!(hits.iter().any(|h| h == path), "{path} never called");
    }
}

#[test]
fn truncated_resource_id_is_repaired_and_kept() {
    let stub = Stub::canned(
        "/v1/explore",
        explore_reply(json!([
            {"selector": {"resource-id": "open_setting"}, "action": {"kind": "click"}, "level": 3, "rationale": "gear"},
            {"selector": {"text": "Nothing like it"}, "action": {"kind": "click"}, "level": 5},
        ])),
    );
    let r = stub.scorer().page_explore("Change the theme", &home(), 3).unwrap();
    assert_eq!(r.candidates.len(), 1, "unrepairable candidate dropped");
    assert_eq!(
        r.candidates[0].op,
        Operation::click(Selector::resource_id("open_settings"))
    );
    assert_eq!(r.candidates[0].atomic.level(), 3);
    assert!(!r.is_entry);
}

#[test]
fn candidates_are_ranked_and_cut_to_k() {
    let stub = Stub::canned(
        "/v1/explore",
        explore_reply(json!([
            {"selector": {"text": "New note"}, "action": {"kind": "click"}, "level": 1},
            {"selector": {"content-desc": "Settings"}, "action": {"kind": "click"}, "level": 4},
            {"selector": {"text": "Notes"}, "action": {"kind": "click"}, "level": 2},
        ])),
    );
    let r = stub.scorer().page_explore("x", &home(), 2).unwrap();
    let levels: Vec<u8> = r.candidates.iter().map(|c| c.atomic.level()).collect();
    assert_eq!(levels, vec![4, 2]);
}

#[test]
fn out_of_range_level_is_a_malformed_reply() {
    let stub = Stub::canned(
        "/v1/explore",
        explore_reply(json!([{"selector": {"text": "Notes"}, "action": {"kind": "click"}, "level": 7}])),
    );
    let err = stub.scorer().page_explore("x", &home(), 3).unwrap_err();
    assert!(
        matches!(err, ScorerError::MalformedReply(ref m) if m.contains('7')),
        "{err}"
    );
}

#[test]
fn malformed_bodies_surface_as_typed_errors() {
    let bodies = [
        "not json at all",
        "{\"candidates\": []}",
        "{\"is_entry\": true, \"candidates\": [{\"selector\": {}, \"action\": {\"kind\": \"click\"}, \"level\": 3}]}",
        "{\"is_entry\": true, \"candidates\": [{\"selector\": {\"text\": \"a\"}, \"action\": {\"kind\": \"fly\"}, \"level\": 3}]}",
        "[]",
    ];
    for body in bodies {
        let stub = Stub::new(move |_, _| (200, body.to_string()));
        let err = stub.scorer().page_explore("x", &home(), 3).unwrap_err();
        assert!(matches!(err, ScorerError::MalformedReply(_)), "{body}: {err}");
    }
}

#[test]
fn malformed_replies_fail_navigation_without_panicking() {
    let stub = Stub::new(|_, _| (200, "{\"is_entry\": 3}".into()));
    let scorer = stub.scorer();
    let mut s = open_session(common::app("notes"));
    let err = navigate("Delete a note", &mut s, &scorer, NavConfig::default()).unwrap_err();
    assert!(matches!(err, NavError::Scorer(ScorerError::MalformedReply(_))));
    let corpus = common::corpus();
    let r = run_case(corpus.case("notes-delete").unwrap(), &scorer, &BenchConfig::default());
    assert_eq!(r.failed_phase, Phase::Phase1);
    assert!(r.error.unwrap().contains("malformed"));
}

#[test]
fn script_replies_are_validated_and_the_first_action_repaired() {
    let good = Stub::canned(
        "/v1/script",
        json!({"steps": [
            {"assert": {"selector": {"resource-id": "open_settings"}, "mode": "exists", "message": "gear"}},
            {"act": {"selector": {"resource-id": "open_setting"}, "action": {"kind": "click"}}},
            {"assert": {"selector": {"text": "Settings"}, "mode": "exists", "message": "opened"}},
        ]}),
    );
    let steps = good.scorer().plan_script("x", &home(), &[], &[]).unwrap();
    assert_eq!(
        steps[1],
        ScriptStep::Act(Operation::click(Selector::resource_id("open_settings")))
    );

    for reply in [
        json!({"steps": "click it"}),
        json!({"steps": [{"act": {"selector": {}, "action": {"kind": "click"}}}]}),
        json!({"plan": []}),
    ] {
        let stub = Stub::canned("/v1/script", reply.clone());
        let err = stub.scorer().plan_script("x", &home(), &[], &[]).unwrap_err();
        assert!(
            matches!(err, PlanError::Scorer(ScorerError::MalformedReply(_))),
            "{reply}: {err}"
        );
    }
}

#[test]
fn oracle_replies_are_repaired_truncated_and_checked() {
    let mut s = open_session(common::app("notes"));
    let pre = s.current();
    let post = s
        .perform(&Operation::click(Selector::content_desc("Settings")))
        .unwrap();
    let pair = StatePair {
        entry: pre.digest(),
        pre,
        post,
        ops: vec![Operation::click(Selector::content_desc("Settings"))],
    };
    let stub = Stub::canned(
        "/v1/oracle",
        json!({"sub_oracles": [
            {"selector": {"resource-id": "open_setting"}, "mode": "exists", "message": "gear was there", "target": "pre"},
            {"selector": {"text": "Groceries"}, "mode": "absent", "message": "list left", "target": "post"},
            {"selector": {"text": "Notes"}, "mode": "absent", "message": "extra", "target": "post"},
        ]}),
    );
    let o = stub.scorer().derive_oracle("x", &pair, 2).unwrap();
    assert_eq!(o.len(), 2);
    assert_eq!(o[0].assertion.selector, Selector::resource_id("open_settings"));
    // absence is not repaired into presence
    assert_eq!(o[1].assertion.selector, Selector::text("Groceries"));
    assert_eq!(o[1].assertion.mode, AssertMode::Absent);

    for reply in [
        json!({"sub_oracles": []}),
        json!({"sub_oracles": [{"selector": {"text": "a"}, "mode": "maybe", "target": "post"}]}),
    ] {
        let stub = Stub::canned("/v1/oracle", reply.clone());
        let err = stub.scorer().derive_oracle("x", &pair, 3).unwrap_err();
        assert!(
            matches!(err, OracleError::Scorer(ScorerError::MalformedReply(_))),
            "{reply}: {err}"
        );
    }
}

#[test]
fn server_errors_are_retried_and_client_errors_are_not() {
    let calls = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let c = calls.clone();
    let flaky = Stub::new(move |_, _| {
        if c.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
            (503, String::new())
        } else {
            (200, explore_reply(json!([])).to_string())
        }
    });
    assert!(flaky.scorer().page_explore("x", &home(), 3).is_ok());
    assert_eq!(flaky.hits.lock().unwrap().len(), 2);

    let missing = Stub::new(|_, _| (404, String::new()));
    let err = missing.scorer().page_explore("x", &home(), 3).unwrap_err();
    assert!(matches!(err, ScorerError::Unavailable { attempts: 1, .. }), "{err}");

    let down = Stub::new(|_, _| (500, String::new()));
    let err = down.scorer().page_explore("x", &home(), 3).unwrap_err();
    assert!(matches!(err, ScorerError::Unavailable { attempts: 2, .. }), "{err}");
}

#[test]
fn requests_carry_the_page_and_prompt() {
    let seen = std::sync::Arc::new(std::sync::Mutex::new(None));
    let s2 = seen.clone();
    let stub = Stub::new(move |_, body| {
        *s2.lock().unwrap() = Some(body.clone());
        (200, explore_reply(json!([])).to_string())
    });
    stub.scorer().page_explore("Delete a note", &home(), 3).unwrap();
    let body = seen.lock().unwrap().clone().unwrap();
    assert_eq!(body["requirement"], "Delete a note");
    assert_eq!(body["k"], 3);
    assert!(body["prompt"].as_str().unwrap().contains("Groceries"));
    let page: reqnav_core::ui::UiElement = serde_json::from_value(body["page"].clone()).unwrap();
    assert_eq!(UiState::new(page).digest(), home().digest());
}
