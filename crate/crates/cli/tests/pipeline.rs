mod common;

use std::fs;
use std::process::Command as Process;

use common::{edit_config, stage_fixtures};
use mgtd_cli::{run, Command, RunConfig, AUDIT_FILE, AUGMENTED_FILE, PREDICTIONS_FILE, REPORT_JSON};
use mgtd_core::model::{load_dataset, load_predictions};
use mgtd_core::voting::VoteOutcome;
use serde_json::Value;

fn mgtd(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_mgtd")).args(args).output().unwrap()
}

#[test]
fn fit_predict_eval_is_byte_identical_across_runs() {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::load(&stage_fixtures(dir.path())).unwrap();
        for c in [Command::Fit, Command::Predict, Command::Eval] {
            run(c, &cfg).unwrap();
        }
        let read = |p: std::path::PathBuf| fs::read(p).unwrap();
        outputs.push((
            read(cfg.artifacts_dir.join("strategy_book.json")),
            read(cfg.artifacts_dir.join("common_token.tokens.json")),
            read(cfg.output_dir.join(PREDICTIONS_FILE)),
            read(cfg.output_dir.join(AUDIT_FILE)),
            read(cfg.output_dir.join(REPORT_JSON)),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn audit_scores_recompute_and_order_is_preserved() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&stage_fixtures(dir.path())).unwrap();
    run(Command::Fit, &cfg).unwrap();
    run(Command::Predict, &cfg).unwrap();
    let input = load_dataset(cfg.input.as_ref().unwrap()).unwrap();
    let preds = load_predictions(cfg.output_dir.join(PREDICTIONS_FILE)).unwrap();
    let ids: Vec<&str> = preds.iter().map(|(id, _)| id.as_str()).collect();
    let expected: Vec<&str> = input.iter().map(|s| s.id()).collect();
    assert_eq!(ids, expected);

    let audit = fs::read_to_string(cfg.output_dir.join(AUDIT_FILE)).unwrap();
    for line in audit.lines() {
        let o: VoteOutcome = serde_json::from_str(line).unwrap();
        let s: f64 = o.per_detector.iter().map(|c| c.weight * f64::from(c.vote)).sum();
        assert_eq!(s, o.score);
        assert!(o.per_detector.iter().all(|c| c.weight > 0.0));
    }
}

#[test]
fn eval_with_gold_predictions_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&stage_fixtures(dir.path())).unwrap();
    let input = load_dataset(cfg.input.as_ref().unwrap()).unwrap();
    fs::create_dir_all(&cfg.output_dir).unwrap();
    let gold = input.gold_labels().unwrap();
    mgtd_core::model::save_predictions(&input, &gold, cfg.output_dir.join(PREDICTIONS_FILE)).unwrap();
    let (report, table) = mgtd_cli::cmd_eval(&cfg).unwrap();
    assert_eq!(report.overall_macro_f1, 1.0);
    assert!(report.per_subset.values().all(|&v| v == 1.0));
    assert!(table.contains("ensemble"));
}

#[test]
fn empty_input_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = stage_fixtures(dir.path());
    let cfg = RunConfig::load(&path).unwrap();
    run(Command::Fit, &cfg).unwrap();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    edit_config(&path, |c| c["input"] = "empty.jsonl".into());
    let cfg = RunConfig::load(&path).unwrap();
    run(Command::Predict, &cfg).unwrap();
    assert_eq!(fs::read_to_string(cfg.output_dir.join(PREDICTIONS_FILE)).unwrap(), "");
}

#[test]
fn predict_without_artifacts_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&stage_fixtures(dir.path())).unwrap();
    let err = run(Command::Predict, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("artifacts"), "{err}");
}

#[test]
fn calibrate_on_separable_scores_reaches_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = stage_fixtures(dir.path());
    let train = load_dataset(dir.path().join("train.jsonl")).unwrap();
    let lines: String = train
        .iter()
        .map(|s| format!("{{\"id\":\"{}\",\"score\":{}}}\n", s.id(), if s.gold_label().unwrap().bit() == 1 { 5.0 } else { -5.0 }))
        .collect();
    fs::write(dir.path().join("sep.jsonl"), lines).unwrap();
    edit_config(&path, |c| {
        c["detectors"] = serde_json::json!([{ "kind": "score", "id": "sep", "source": "score_file", "location": "sep.jsonl" }]);
    });
    let cfg = RunConfig::load(&path).unwrap();
    run(Command::Calibrate, &cfg).unwrap();
    let profile = mgtd_core::scores::ThresholdProfile::load(cfg.artifacts_dir.join("sep.thresholds.json")).unwrap();
    for s in &train {
        let v = mgtd_core::scores::score_to_verdict(s, if s.gold_label().unwrap().bit() == 1 { 5.0 } else { -5.0 }, &profile);
        assert_eq!(Some(v.prediction()), s.gold_label());
    }
}

#[test]
fn augment_identity_keeps_texts_and_tags() {
    let dir = tempfile::tempdir().unwrap();
    let path = stage_fixtures(dir.path());
    edit_config(&path, |c| c["augment"]["transforms"] = serde_json::json!([{ "kind": "identity" }]));
    let cfg = RunConfig::load(&path).unwrap();
    run(Command::Augment, &cfg).unwrap();
    let input = load_dataset(cfg.input.as_ref().unwrap()).unwrap();
    let out = load_dataset(cfg.output_dir.join(AUGMENTED_FILE)).unwrap();
    assert_eq!(out.len(), input.len());
    for (a, b) in input.iter().zip(out.iter()) {
        assert_eq!((a.text(), a.gold_label()), (b.text(), b.gold_label()));
        assert_eq!(b.subset(), Some("identity"));
    }
}

#[test]
fn augment_reruns_are_identical_and_seed_flag_changes_excerpts() {
    let dir = tempfile::tempdir().unwrap();
    let path = stage_fixtures(dir.path());
    let cfg_arg = path.to_str().unwrap();
    let out = dir.path().join("out").join(AUGMENTED_FILE);
    assert!(mgtd(&["--config", cfg_arg, "augment"]).status.success());
    let first = fs::read(&out).unwrap();
    assert!(mgtd(&["--config", cfg_arg, "augment"]).status.success());
    assert_eq!(first, fs::read(&out).unwrap());
    assert!(mgtd(&["--config", cfg_arg, "--seed", "99", "augment"]).status.success());
    assert_ne!(first, fs::read(&out).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = mgtd(&["--config", dir.path().join("nope.json").to_str().unwrap(), "fit"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));

    let path = stage_fixtures(dir.path());
    fs::write(dir.path().join("unlabeled.jsonl"), "{\"id\":\"a\",\"text\":\"你好\"}\n").unwrap();
    edit_config(&path, |c| c["train"] = "unlabeled.jsonl".into());
    let out = mgtd(&["--config", path.to_str().unwrap(), "fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gold label"));

    let path = stage_fixtures(dir.path());
    edit_config(&path, |c| {
        c["detectors"] = serde_json::json!([{ "kind": "score", "id": "remote", "source": "http_endpoint", "location": "http://127.0.0.1:9/score" }]);
    });
    let out = mgtd(&["--config", path.to_str().unwrap(), "calibrate"]);
    assert_eq!(out.status.code(), Some(3));

    let usage = mgtd(&["frobnicate"]);
    assert_ne!(usage.status.code(), Some(0));
}

#[test]
fn cluster_mode_fits_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let path = stage_fixtures(dir.path());
    edit_config(&path, |c| {
        c["strategy"]["fit"] = serde_json::json!({ "mode": "clusters", "k": 3, "seed": 5 });
        c["strategy"]["perplexity_detector"] = "fast_detect_qwen".into();
    });
    let cfg = RunConfig::load(&path).unwrap();
    run(Command::Fit, &cfg).unwrap();
    run(Command::Predict, &cfg).unwrap();
    let book: Value = serde_json::from_str(&fs::read_to_string(cfg.artifacts_dir.join("strategy_book.json")).unwrap()).unwrap();
    assert_eq!(book["mode"], "clusters");
    assert_eq!(book["uses_perplexity"], true);
    assert_eq!(book["strategies"].as_array().unwrap().len(), 3);
}

#[test]
fn override_rules_force_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = stage_fixtures(dir.path());
    fs::write(
        dir.path().join("overrides.jsonl"),
        "{\"rule_id\":\"cats\",\"pattern\":\"猫\",\"forced_label\":0,\"enabled\":true}\n",
    )
    .unwrap();
    edit_config(&path, |c| c["overrides"] = "overrides.jsonl".into());
    let cfg = RunConfig::load(&path).unwrap();
    run(Command::Fit, &cfg).unwrap();
    run(Command::Predict, &cfg).unwrap();
    let audit = fs::read_to_string(cfg.output_dir.join(AUDIT_FILE)).unwrap();
    let input = load_dataset(cfg.input.as_ref().unwrap()).unwrap();
    for (line, s) in audit.lines().zip(input.iter()) {
        let o: VoteOutcome = serde_json::from_str(line).unwrap();
        if s.text().contains('猫') {
            assert_eq!((o.override_rule.as_deref(), o.decision.bit()), (Some("cats"), 0));
        } else {
            assert_eq!(o.override_rule, None);
        }
    }
}

#[test]
fn inverted_label_convention_flips_files_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = stage_fixtures(dir.path());
    let cfg = RunConfig::load(&path).unwrap();
    run(Command::Fit, &cfg).unwrap();
    run(Command::Predict, &cfg).unwrap();
    let normal = load_predictions(cfg.output_dir.join(PREDICTIONS_FILE)).unwrap();

    for name in ["train.jsonl", "test.jsonl"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        let flipped: String = text
            .lines()
            .map(|l| {
                let mut v: Value = serde_json::from_str(l).unwrap();
                v["label"] = (1 - v["label"].as_u64().unwrap()).into();
                format!("{v}\n")
            })
            .collect();
        fs::write(dir.path().join(format!("inv_{name}")), flipped).unwrap();
    }
    edit_config(&path, |c| {
        c["label_for_llm"] = 0.into();
        c["train"] = "inv_train.jsonl".into();
        c["input"] = "inv_test.jsonl".into();
        c["output_dir"] = "out_inv".into();
        c["artifacts_dir"] = "artifacts_inv".into();
    });
    let cfg = RunConfig::load(&path).unwrap();
    run(Command::Fit, &cfg).unwrap();
    run(Command::Predict, &cfg).unwrap();
    let inverted = load_predictions(cfg.output_dir.join(PREDICTIONS_FILE)).unwrap();
    assert_eq!(normal.len(), inverted.len());
    for ((a, la), (b, lb)) in normal.iter().zip(&inverted) {
        assert_eq!((a, la.flip()), (b, *lb));
    }
    let (report, _) = mgtd_cli::cmd_eval(&cfg).unwrap();
    assert!(report.overall_macro_f1 > 0.9);
}
