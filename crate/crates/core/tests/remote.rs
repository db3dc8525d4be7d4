mod common;

use common::{text_reply, tool_reply, MockServer};
use dxstream_core::env::{CandidateSet, Feedback, PresentedCase};
use dxstream_core::memory::{AgentState, CaseRecord, MemoryOp, OpKind};
use dxstream_core::policy::*;
use dxstream_core::transport::{ChatClient, ChatClientConfig, ChatMessage, TransportError};
use serde_json::json;

fn config(server: &MockServer) -> ChatClientConfig {
    ChatClientConfig {
        base_url: server.base_url.clone(),
        model: "test-model".into(),
        api_key_env: "DXSTREAM_TEST_UNSET_KEY".into(),
        backoff_ms: 1,
        max_backoff_ms: 2,
        max_retries: 2,
        timeout_secs: 5,
        ..ChatClientConfig::default()
    }
}

fn input(template: PromptTemplate, state: &AgentState) -> RoundInput {
    RoundInput {
        case: PresentedCase {
            id: "c1".into(),
            profile: "Swollen first toe overnight.".into(),
        },
        candidates: CandidateSet::new(vec!["Gout".into(), "Cellulitis".into()]).unwrap(),
        memory_view: state.list_memory(),
        round_index: 3,
        horizon: 10,
        template,
    }
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = MockServer::start(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        text_reply("hello"),
    ]);
    let client = ChatClient::new(config(&server)).unwrap();
    let reply = client.complete(&client.request(vec![ChatMessage::user("hi")])).unwrap();
    assert_eq!(reply.content.as_deref(), Some("hello"));
    let seen = server.finish();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|c| c.path == "/v1/chat/completions"));
    assert_eq!(seen[0].body["model"], "test-model");
    assert!(seen[0].authorization.is_none());
}

#[test]
fn gives_up_after_max_retries() {
    let server = MockServer::start(vec![(500, "a".into()), (500, "b".into()), (500, "c".into())]);
    let client = ChatClient::new(config(&server)).unwrap();
    let err = client.complete(&client.request(vec![ChatMessage::user("hi")])).unwrap_err();
    assert!(matches!(err, TransportError::Exhausted { attempts: 3, .. }), "{err}");
    server.finish();
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![(400, "bad request".into())]);
    let client = ChatClient::new(config(&server)).unwrap();
    let err = client.complete(&client.request(vec![ChatMessage::user("hi")])).unwrap_err();
    assert!(matches!(err, TransportError::Status { status: 400, .. }), "{err}");
    assert_eq!(server.finish().len(), 1);
}

#[test]
fn sends_bearer_token_from_env() {
    let server = MockServer::start(vec![text_reply("ok")]);
    std::env::set_var("DXSTREAM_TEST_TOKEN", "s3cret");
    let client = ChatClient::new(ChatClientConfig {
        api_key_env: "DXSTREAM_TEST_TOKEN".into(),
        ..config(&server)
    })
    .unwrap();
    client.complete(&client.request(vec![ChatMessage::user("hi")])).unwrap();
    assert_eq!(server.finish()[0].authorization.as_deref(), Some("Bearer s3cret"));
}

#[test]
fn connection_failures_exhaust_retries() {
    // bind then drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = ChatClient::new(ChatClientConfig {
        base_url: format!("http://127.0.0.1:{port}/v1"),
        backoff_ms: 1,
        max_backoff_ms: 1,
        max_retries: 1,
        ..ChatClientConfig::default()
    })
    .unwrap();
    let err = client.complete(&client.request(vec![ChatMessage::user("hi")])).unwrap_err();
    assert!(matches!(err, TransportError::Exhausted { attempts: 2, .. }), "{err}");
}

#[test]
fn tool_loop_applies_memory_ops_and_answers() {
    let server = MockServer::start(vec![
        tool_reply(&[("memory", json!({"action": "list"}))]),
        tool_reply(&[
            ("memory", json!({"action": "pop", "indices": [7]})),
            ("recall", json!({})),
        ]),
        text_reply("```json\n{\"reasoning\": \"classic podagra\", \"final_diagnosis\": \"Gout\"}\n```"),
        // feedback phase
        tool_reply(&[(
            "memory",
            json!({"action": "append", "case_record": {
                "case_summary": "toe swelling", "diagnosis": "Gout", "feedback": "Correct. Ground truth: Gout."
            }}),
        )]),
        text_reply("DONE"),
    ]);
    let policy = RemotePolicy::new(config(&server), 3).unwrap();
    let mut state = AgentState::new(3).unwrap();
    state.append_case(CaseRecord::new("old", "x", "Incorrect. Ground truth: y.")).unwrap();
    let inp = input(PromptTemplate::LongHorizon, &state);
    let ctx = ActContext { seed: 42, max_turns: 10 };

    let out = act(&policy, &inp, &mut state, &ctx).unwrap();
    assert_eq!(out.prediction, "Gout");
    assert_eq!(out.reasoning, "classic podagra");
    // the failing pop is not logged
    assert_eq!(out.memory_ops, vec![MemoryOp::List]);
    assert_eq!(out.turns_used, 6);

    let fb = Feedback::score(&out.prediction, "Gout");
    let ops = record_feedback(&policy, &inp, &out, &fb, &mut state, &ctx).unwrap();
    assert_eq!(ops.iter().map(MemoryOp::kind).collect::<Vec<_>>(), vec![OpKind::Append]);
    assert_eq!(state.occupancy(), 2);

    let seen = server.finish();
    let first = &seen[0].body;
    assert_eq!(first["seed"], 42);
    assert_eq!(first["tools"][0]["function"]["name"], "memory");
    assert_eq!(first["messages"][0]["role"], "system");
    assert!(first["messages"][1]["content"].as_str().unwrap().contains("Input (Round 3)"));
    // tool results come back in order, errors included
    let third = seen[2].body["messages"].as_array().unwrap();
    let results: Vec<&str> = third
        .iter()
        .filter(|m| m["role"] == "tool")
        .map(|m| m["content"].as_str().unwrap())
        .collect();
    assert_eq!(results.len(), 3);
    assert!(results[0].contains("\"ok\":true"));
    assert!(results[1].contains("out of range"));
    assert!(results[2].contains("unknown tool"));
    let feedback_msg = &seen[3].body["messages"].as_array().unwrap().last().unwrap()["content"];
    assert!(feedback_msg.as_str().unwrap().contains("Correct. Ground truth: Gout."));
}

#[test]
fn standard_template_sends_no_tools() {
    let server = MockServer::start(vec![text_reply(r#"{"final_diagnosis": "Cellulitis"}"#)]);
    let policy = RemotePolicy::new(config(&server), 3).unwrap();
    let mut state = AgentState::new(3).unwrap();
    let inp = input(PromptTemplate::Standard, &state);
    let out = act(&policy, &inp, &mut state, &ActContext::default()).unwrap();
    assert_eq!(out.prediction, "Cellulitis");
    let fb = Feedback::score(&out.prediction, "Gout");
    assert!(record_feedback(&policy, &inp, &out, &fb, &mut state, &ActContext::default())
        .unwrap()
        .is_empty());
    let seen = server.finish();
    assert!(seen[0].body.get("tools").is_none());
    assert_eq!(seen[0].body["messages"].as_array().unwrap().len(), 1);
}

#[test]
fn malformed_answer_gets_one_retry() {
    let server = MockServer::start(vec![text_reply("It is gout."), text_reply(r#"{"final_diagnosis":"Gout"}"#)]);
    let policy = RemotePolicy::new(config(&server), 3).unwrap();
    let mut state = AgentState::new(3).unwrap();
    let out = act(&policy, &input(PromptTemplate::Standard, &state), &mut state, &ActContext::default()).unwrap();
    assert_eq!(out.prediction, "Gout");
    assert_eq!(out.turns_used, 2);
    server.finish();

    let server = MockServer::start(vec![text_reply("gout"), text_reply("still gout")]);
    let policy = RemotePolicy::new(config(&server), 3).unwrap();
    let err = act(&policy, &input(PromptTemplate::Standard, &state), &mut state, &ActContext::default()).unwrap_err();
    assert!(matches!(err.error, PolicyError::MalformedOutput(_)));
    assert!(err.error.is_recoverable());
    server.finish();
}

#[test]
fn endless_tool_calls_exhaust_the_budget() {
    let list = || tool_reply(&[("memory", json!({"action": "list"}))]);
    let server = MockServer::start(vec![list(), list()]);
    let policy = RemotePolicy::new(config(&server), 3).unwrap();
    let mut state = AgentState::new(3).unwrap();
    let ctx = ActContext { seed: 0, max_turns: 4 };
    let err = act(&policy, &input(PromptTemplate::LongHorizon, &state), &mut state, &ctx).unwrap_err();
    assert!(matches!(err.error, PolicyError::TurnBudgetExhausted { max_turns: 4 }));
    assert_eq!(err.partial.memory_ops.len(), 2);
    assert_eq!(err.partial.turns_used, 4);
    server.finish();
}

#[test]
fn transport_failure_is_unrecoverable() {
    let server = MockServer::start(vec![(401, "no".into())]);
    let policy = RemotePolicy::new(config(&server), 3).unwrap();
    let mut state = AgentState::new(3).unwrap();
    let err = act(&policy, &input(PromptTemplate::Standard, &state), &mut state, &ActContext::default()).unwrap_err();
    assert!(!err.error.is_recoverable());
    server.finish();
}
