mod common;

use std::collections::HashMap;

use common::FixtureServer;
use mgtd_core::augment::{back_translate, HttpMt};
use mgtd_core::model::{Dataset, Label, TextSample};
use mgtd_core::scores::{load_scores, ScoreSource, SourceKind, Orientation};
use mgtd_core::support::{Demonstration, HttpLlmSupport, SupportProvider, DEFAULT_PROMPT_TEMPLATE, PROVIDER_ERROR};
use mgtd_core::ErrorKind;
use serde_json::json;

fn three() -> Dataset {
    Dataset::new(vec![
        TextSample::new("a", "你好"),
        TextSample::new("b", "今天天气很好。"),
        TextSample::new("c", "综上所述，这一问题值得关注。"),
    ])
    .unwrap()
}

#[test]
fn score_endpoint_contract() {
    let server = FixtureServer::start();
    let source = ScoreSource {
        detector_id: "remote".into(),
        kind: SourceKind::HttpEndpoint,
        location: server.url("/score"),
        orientation: Orientation::HigherIsLlm,
    };
    let scores = load_scores(&source, &three()).unwrap();
    let expected: HashMap<String, f64> = [("a", 0.2), ("b", 0.7), ("c", 1.4)].map(|(k, v)| (k.to_string(), v)).into();
    assert_eq!(scores, expected);
    let bodies = server.requests("/score");
    assert_eq!(
        bodies,
        vec![
            json!({"id": "a", "text": "你好"}),
            json!({"id": "b", "text": "今天天气很好。"}),
            json!({"id": "c", "text": "综上所述，这一问题值得关注。"}),
        ]
    );
}

#[test]
fn score_endpoint_failures_are_external() {
    let server = FixtureServer::start();
    let source = ScoreSource {
        detector_id: "remote".into(),
        kind: SourceKind::HttpEndpoint,
        location: server.url("/missing"),
        orientation: Orientation::HigherIsLlm,
    };
    let err = load_scores(&source, &three()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::External);
}

#[test]
fn support_endpoint_contract() {
    let server = FixtureServer::start();
    let demos = vec![Demonstration { text: "示例".into(), label: Label::Human }];
    let provider = HttpLlmSupport::new(server.url("/support"), DEFAULT_PROMPT_TEMPLATE, demos).unwrap();
    let signal = provider.query(&TextSample::new("x", "待判定文本"));
    assert_eq!(signal.value, 0.8);
    let bodies = server.requests("/support");
    assert_eq!(bodies.len(), 1);
    let prompt = bodies[0]["prompt"].as_str().unwrap();
    assert!(prompt.contains("Text: 示例\nAnswer: human\n\n"));
    assert!(prompt.ends_with("Text: 待判定文本\nAnswer:"));
    assert_eq!(bodies[0].as_object().unwrap().len(), 1);
}

#[test]
fn support_failures_are_neutral() {
    let server = FixtureServer::start();
    for path in ["/support-garbage", "/missing"] {
        let demos = vec![Demonstration { text: "示例".into(), label: Label::Llm }];
        let provider = HttpLlmSupport::new(server.url(path), DEFAULT_PROMPT_TEMPLATE, demos).unwrap();
        let signal = provider.query(&TextSample::new("x", "文本"));
        assert_eq!((signal.value, signal.rationale.as_deref()), (0.0, Some(PROVIDER_ERROR)));
    }
}

#[test]
fn translate_endpoint_contract() {
    let server = FixtureServer::start();
    let mt = HttpMt::new(server.url("/translate"));
    let s = TextSample::new("s1", "原文").with_label(Label::Llm);
    let out = back_translate(&s, "en", "zh", &mt).unwrap();
    assert_eq!((out.id(), out.text(), out.gold_label()), ("s1#bten", "原文", Some(Label::Llm)));
    assert_eq!(
        server.requests("/translate"),
        vec![
            json!({"text": "原文", "src": "zh", "tgt": "en"}),
            json!({"text": "[en]原文", "src": "en", "tgt": "zh"}),
        ]
    );
}

#[test]
fn cli_pipeline_over_http_adapters() {
    let server = FixtureServer::start();
    let dir = tempfile::tempdir().unwrap();
    let path = common::stage_fixtures(dir.path());
    common::edit_config(&path, |c| {
        c["detectors"].as_array_mut().unwrap().push(json!({
            "kind": "score", "id": "remote", "source": "http_endpoint", "location": server.url("/score")
        }));
        c["support"] = json!({ "kind": "http", "endpoint": server.url("/support"), "demonstrations": "demonstrations.jsonl" });
        c["augment"]["mt"] = json!({ "kind": "http", "endpoint": server.url("/translate") });
    });
    let cfg = mgtd_cli::RunConfig::load(&path).unwrap();
    for c in [mgtd_cli::Command::Fit, mgtd_cli::Command::Predict, mgtd_cli::Command::Augment] {
        mgtd_cli::run(c, &cfg).unwrap();
    }
    assert_eq!(server.requests("/score").len(), 240 + 240 + 120);
    assert!(!server.requests("/support").is_empty());
    assert_eq!(server.requests("/translate").len(), 2 * 120);
}
