//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero on any failure.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command as Process, ExitCode};
use std::time::Instant;

use mgtd_core::augment::{excerpt, StubMt, Transform};
use mgtd_core::eval::{estimate_reliability, macro_f1, per_subset_report};
use mgtd_core::model::{Dataset, DetectorVerdict, Label, TextSample};
use mgtd_core::scores::{best_threshold, calibrate_thresholds, score_to_verdict, Orientation};
use mgtd_core::strategy::{
    default_strategy_book, fit_strategy_book, BookFitOptions, Predicate, SearchGrid, Strategy, StrategyBook,
    VerdictTable, STANDARD_REGISTRY,
};
use mgtd_core::support::{StubSupport, SupportProvider};
use mgtd_core::voting::{compute_score, final_decision, judge};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn label(bit: bool) -> Label {
    if bit {
        Label::Llm
    } else {
        Label::Human
    }
}

fn strategy(weights: BTreeMap<String, f64>, lambda: f64, tau: f64) -> Strategy {
    Strategy { strategy_id: "s".into(), weights, lambda, tau, predicate: Predicate::CATCH_ALL, support_band: None }
}

/// Brute-force decision: enumerate the signed sum term by term.
fn oracle_decision(weights: &[f64], pattern: u32, lambda: f64, tau: f64, d: f64) -> Label {
    let mut s = 0.0;
    for (i, w) in weights.iter().enumerate() {
        s += if pattern >> i & 1 == 1 { *w } else { -*w };
    }
    label(s + lambda * d >= tau)
}

fn voting_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ids = ["d1", "d2", "d3", "d4", "d5"];
    let draws = 200;
    let mut checked = 0;
    for _ in 0..draws {
        let w: Vec<f64> = (0..5).map(|_| f64::from(rng.random_range(0..=100u32))).collect();
        for pattern in 0u32..32 {
            let verdicts: Vec<DetectorVerdict> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| DetectorVerdict::new(*id, label(pattern >> i & 1 == 1), None))
                .collect();
            for lambda in [0.0, 50.0] {
                for tau in [0.0, 50.0] {
                    let s = strategy(ids.iter().map(|k| k.to_string()).zip(w.iter().copied()).collect(), lambda, tau);
                    let score = compute_score(&verdicts, &s).map_err(|e| e.to_string())?;
                    for d in [-1.0, 0.0, 1.0] {
                        let got = final_decision(score, d, &s).map_err(|e| e.to_string())?;
                        let want = oracle_decision(&w, pattern, lambda, tau, d);
                        check(got == want, || format!("weights {w:?} pattern {pattern:05b} λ={lambda} τ={tau} d={d}"))?;
                        checked += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} decisions over {draws} weight draws x 32 patterns match exactly in {elapsed:.1?}"))
}

/// Hyper-parameter table transcribed by hand: weights 1..18 in registry order, then lambda, tau.
const TABLE: [(&str, [f64; 18], f64, f64); 4] = [
    ("ext_short", [0., 10., 0., 10., 10., 60., 60., 55., 60., 0., 0., 0., 0., 0., 95., 400., 10., 0.], 250., 0.),
    ("short", [0., 10., 0., 10., 40., 40., 40., 35., 40., 0., 0., 0., 0., 40., 95., 400., 40., 0.], 150., 0.),
    ("medium", [0., 10., 0., 10., 40., 40., 40., 35., 40., 0., 0., 0., 0., 100., 80., 90., 40., 0.], 0., 0.),
    ("general", [0., 10., 10., 10., 40., 70., 70., 70., 75., 50., 60., 0., 85., 400., 40., 60., 80., 0.], 0., 0.),
];

fn table_replication() -> Outcome {
    let book = default_strategy_book();
    check(book.strategies.len() == 4, || format!("{} strategies", book.strategies.len()))?;
    let mut cells = 0;
    for (id, weights, lambda, tau) in TABLE {
        let s = book.get(id).ok_or_else(|| format!("no strategy `{id}`"))?;
        for (i, w) in weights.iter().enumerate() {
            let got = s.weight(STANDARD_REGISTRY[i]);
            check(got == *w, || format!("{id} w{} = {got}, expected {w}", i + 1))?;
            cells += 1;
        }
        check(s.lambda == lambda && s.tau == tau, || format!("{id} λ/τ = {}/{}", s.lambda, s.tau))?;
        cells += 2;
        check(s.weights.len() == 18, || format!("{id} has {} weights", s.weights.len()))?;
    }
    let all_llm: Vec<DetectorVerdict> =
        STANDARD_REGISTRY.iter().map(|id| DetectorVerdict::new(*id, Label::Llm, None)).collect();
    let s = compute_score(&all_llm, book.get("general").unwrap()).map_err(|e| e.to_string())?;
    let expected: f64 = TABLE[3].1.iter().sum();
    check(s == 1130.0 && expected == 1130.0, || format!("general all-LLM score {s}"))?;
    Ok(format!("{cells} cells equal; general-row all-LLM score s = {s}"))
}

fn degenerate_baseline() -> Outcome {
    let samples: Vec<TextSample> = (0..1000)
        .map(|i| TextSample::new(format!("x{i}"), "文本").with_label(label(i % 2 == 0)))
        .collect();
    let dataset = Dataset::new(samples).map_err(|e| e.to_string())?;
    let book = StrategyBook::length_buckets(vec![strategy([("always".to_string(), 10.0)].into(), 0.0, 0.0)])
        .map_err(|e| e.to_string())?;
    let verdict = [DetectorVerdict::new("always", Label::Llm, None)];
    let preds: Vec<Label> = dataset
        .iter()
        .map(|s| judge(s, &verdict, &book, None, &[], None).map(|o| o.decision))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let f1 = per_subset_report(&dataset, &preds).map_err(|e| e.to_string())?.overall_macro_f1;
    check((f1 - 0.3333).abs() <= 0.0005, || format!("macro-F1 {f1}"))?;
    Ok(format!("always-LLM macro-F1 = {f1:.6} (target 0.3333 ± 0.0005)"))
}

/// Independent macro-F1 from the 2x2 confusion counts via the F1 = 2TP / (2TP + FP + FN) form.
fn oracle_macro_f1(pred: &[Label], gold: &[Label]) -> f64 {
    let mut m = [[0u32; 2]; 2];
    for (p, g) in pred.iter().zip(gold) {
        m[g.bit() as usize][p.bit() as usize] += 1;
    }
    let f1 = |c: usize| {
        let tp = f64::from(m[c][c]);
        let fp = f64::from(m[1 - c][c]);
        let fn_ = f64::from(m[c][1 - c]);
        let denom = 2.0 * tp + fp + fn_;
        if denom == 0.0 {
            0.0
        } else {
            2.0 * tp / denom
        }
    };
    (f1(0) + f1(1)) / 2.0
}

fn macro_f1_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        // vary the class balance so degenerate vectors also appear
        let p_gold: f64 = rng.random_range(0.0..=1.0);
        let p_pred: f64 = rng.random_range(0.0..=1.0);
        let gold: Vec<Label> = (0..200).map(|_| label(rng.random_bool(p_gold))).collect();
        let pred: Vec<Label> = (0..200).map(|_| label(rng.random_bool(p_pred))).collect();
        let got = macro_f1(&pred, &gold).map_err(|e| e.to_string())?;
        let diff = (got - oracle_macro_f1(&pred, &gold)).abs();
        worst = worst.max(diff);
        check(diff <= 1e-12, || format!("trial {trial}: differs by {diff:e}"))?;
    }
    Ok(format!("1000 vectors of n = 200 agree; max |diff| = {worst:e}"))
}

fn gaussian_set(rng: &mut ChaCha8Rng, llm: (f64, f64), human: (f64, f64)) -> (Dataset, std::collections::HashMap<String, f64>) {
    let nl = Normal::new(llm.0, llm.1).unwrap();
    let nh = Normal::new(human.0, human.1).unwrap();
    let mut samples = Vec::new();
    let mut scores = std::collections::HashMap::new();
    for i in 0..1000 {
        let is_llm = i < 500;
        let id = format!("g{i}");
        let x = if is_llm { nl.sample(rng) } else { nh.sample(rng) };
        samples.push(TextSample::new(id.clone(), "字".repeat(100)).with_label(label(is_llm)));
        scores.insert(id, x);
    }
    (Dataset::new(samples).unwrap(), scores)
}

fn calibrated_f1(dataset: &Dataset, scores: &std::collections::HashMap<String, f64>) -> Result<(f64, f64), String> {
    let profile = calibrate_thresholds("g", scores, dataset, &[], Orientation::HigherIsLlm).map_err(|e| e.to_string())?;
    let preds: Vec<Label> = dataset.iter().map(|s| score_to_verdict(s, scores[s.id()], &profile).prediction()).collect();
    let f1 = macro_f1(&preds, &dataset.gold_labels().unwrap()).map_err(|e| e.to_string())?;
    Ok((profile.buckets[0].threshold, f1))
}

fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (sep, sep_scores) = gaussian_set(&mut rng, (4.0, 1.0), (-4.0, 1.0));
    let max_h = sep.iter().filter(|s| s.gold_label() == Some(Label::Human)).map(|s| sep_scores[s.id()]).fold(f64::MIN, f64::max);
    let min_l = sep.iter().filter(|s| s.gold_label() == Some(Label::Llm)).map(|s| sep_scores[s.id()]).fold(f64::MAX, f64::min);
    check(max_h < min_l, || "separable fixture overlaps".into())?;
    let (t_sep, f_sep) = calibrated_f1(&sep, &sep_scores)?;
    check(f_sep == 1.0, || format!("separable F1 {f_sep} at threshold {t_sep}"))?;

    let (ovl, ovl_scores) = gaussian_set(&mut rng, (0.5, 1.0), (-0.5, 1.0));
    let (t_ovl, f_ovl) = calibrated_f1(&ovl, &ovl_scores)?;
    let gold = ovl.gold_labels().unwrap();
    let lo = ovl_scores.values().copied().fold(f64::MAX, f64::min);
    let hi = ovl_scores.values().copied().fold(f64::MIN, f64::max);
    let mut best_grid: f64 = 0.0;
    for k in 0..=100 {
        let t = lo + (hi - lo) * f64::from(k) / 100.0;
        let preds: Vec<Label> = ovl.iter().map(|s| label(ovl_scores[s.id()] >= t)).collect();
        best_grid = best_grid.max(oracle_macro_f1(&preds, &gold));
    }
    check(f_ovl >= best_grid, || format!("overlapping F1 {f_ovl} < grid best {best_grid}"))?;
    let pairs: Vec<(f64, Label)> = ovl.iter().map(|s| (ovl_scores[s.id()], s.gold_label().unwrap())).collect();
    let (_, sweep) = best_threshold(&pairs, Orientation::HigherIsLlm);
    check((sweep - f_ovl).abs() < 1e-12, || format!("reported {sweep} vs realized {f_ovl}"))?;
    Ok(format!(
        "separable F1 = {f_sep} (t = {t_sep:.3}); overlapping F1 = {f_ovl:.4} (t = {t_ovl:.3}) >= 101-grid best {best_grid:.4}"
    ))
}

/// Short texts: A exact, B a coin flip. Long texts: the reverse.
fn two_regime(rng: &mut ChaCha8Rng, n: usize, prefix: &str) -> (Dataset, VerdictTable) {
    let mut samples = Vec::with_capacity(n);
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let gold = label(rng.random_bool(0.5));
        let short = i % 2 == 0;
        let len = if short { rng.random_range(20..75) } else { rng.random_range(300..600) };
        samples.push(TextSample::new(format!("{prefix}{i}"), "字".repeat(len)).with_label(gold));
        let coin = label(rng.random_bool(0.5));
        let (pa, pb) = if short { (gold, coin) } else { (coin, gold) };
        a.push(DetectorVerdict::new("A", pa, None));
        b.push(DetectorVerdict::new("B", pb, None));
    }
    (Dataset::new(samples).unwrap(), [("A".to_string(), a), ("B".to_string(), b)].into())
}

fn ensemble_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (train, train_v) = two_regime(&mut rng, 800, "tr");
    let (test, test_v) = two_regime(&mut rng, 800, "te");
    let (book, _) = fit_strategy_book(
        &train,
        &train_v,
        &["A", "B"],
        &BookFitOptions::default(),
        &SearchGrid::default(),
        None,
        None,
    )
    .map_err(|e| e.to_string())?;
    let gold = test.gold_labels().unwrap();
    let column = |id: &str| test_v[id].iter().map(|v| v.prediction()).collect::<Vec<_>>();
    let f_a = macro_f1(&column("A"), &gold).unwrap();
    let f_b = macro_f1(&column("B"), &gold).unwrap();
    let preds: Vec<Label> = test
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let v = [test_v["A"][i].clone(), test_v["B"][i].clone()];
            judge(s, &v, &book, None, &[], None).map(|o| o.decision)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let f_e = macro_f1(&preds, &gold).unwrap();
    let margin = f_e - f_a.max(f_b);
    check(margin >= 0.05, || format!("ensemble {f_e:.4} vs A {f_a:.4}, B {f_b:.4}"))?;
    Ok(format!("held-out macro-F1: ensemble {f_e:.4}, A {f_a:.4}, B {f_b:.4}; margin {margin:.4} >= 0.05"))
}

fn homogeneity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut book = default_strategy_book();
    // a wide band so the support gate opens on many samples
    for s in &mut book.strategies {
        s.support_band = Some(300.0);
    }
    let scaled = book.scaled(7.0);
    let mut samples = Vec::new();
    let mut verdicts = Vec::new();
    let mut support = Vec::new();
    for i in 0..500 {
        let id = format!("h{i}");
        let len = rng.random_range(1..600);
        samples.push(TextSample::new(id.clone(), "字".repeat(len)));
        verdicts.push(
            STANDARD_REGISTRY.iter().map(|d| DetectorVerdict::new(*d, label(rng.random_bool(0.5)), None)).collect::<Vec<_>>(),
        );
        // quarter-steps keep every sum exact in binary floating point
        support.push((id, f64::from(rng.random_range(-4..=4)) / 4.0));
    }
    let provider = StubSupport::new(support).map_err(|e| e.to_string())?;
    let provider: &dyn SupportProvider = &provider;
    let mut consulted = 0;
    let mut flipped = 0;
    for (s, v) in samples.iter().zip(&verdicts) {
        let a = judge(s, v, &book, Some(provider), &[], None).map_err(|e| e.to_string())?;
        let b = judge(s, v, &scaled, Some(provider), &[], None).map_err(|e| e.to_string())?;
        check(a.decision == b.decision, || format!("{}: {:?} vs {:?}", s.id(), a.decision, b.decision))?;
        check(a.support_signal.is_some() == b.support_signal.is_some(), || format!("{}: gate differs", s.id()))?;
        consulted += usize::from(a.support_signal.is_some());
        let plain = judge(s, v, &book, None, &[], None).map_err(|e| e.to_string())?;
        flipped += usize::from(plain.decision != a.decision);
    }
    Ok(format!("500 decisions unchanged under x7 scaling ({consulted} consulted the support signal, {flipped} flipped by it)"))
}

fn reliability() -> Outcome {
    let texts = ["综上所述，这一问题值得关注。", "今天好累啊", "首先，我们需要分析。", "猫又打翻了花盆"];
    let d = Dataset::new(
        texts.iter().enumerate().map(|(i, t)| TextSample::new(format!("t{i}"), *t).with_label(label(i % 2 == 0))).collect(),
    )
    .unwrap();
    let transforms = [Transform::Identity, Transform::Excerpt { target_len: 4, seed: 3 }];
    let mt = StubMt::identity();
    // wrong exactly on t0 under both transforms
    let r = estimate_reliability(
        |s| Ok(if s.id().starts_with("t0#") { s.gold_label().unwrap().flip() } else { s.gold_label().unwrap() }),
        &d,
        &transforms,
        &mt,
    )
    .map_err(|e| e.to_string())?;
    check(r.value == 0.75 && r.correct == 6, || format!("value {} from {} correct", r.value, r.correct))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let big = Dataset::new(
        (0..200).map(|i| TextSample::new(format!("b{i}"), "字".repeat(rng.random_range(1..50))).with_label(label(i % 3 == 0))).collect(),
    )
    .unwrap();
    let system = |s: &TextSample| Ok(label(s.char_length().is_multiple_of(2)));
    let identity = estimate_reliability(system, &big, &[Transform::Identity], &mt).map_err(|e| e.to_string())?;
    let hits = big.iter().filter(|s| Some(label(s.char_length() % 2 == 0)) == s.gold_label()).count();
    let accuracy = hits as f64 / big.len() as f64;
    check(identity.value == accuracy, || format!("identity {} vs accuracy {accuracy}", identity.value))?;
    Ok(format!("4x2 fixture = {}; identity-only {} = plain accuracy {accuracy}", r.value, identity.value))
}

fn excerpt_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut alphabet: Vec<char> = "的一是不了人我在有他这中大来上国个到说们为子和你地出道也时年".chars().collect();
    let mut runs: Vec<Vec<String>> = Vec::new();
    let sources: Vec<TextSample> = (0..1000)
        .map(|i| {
            alphabet.shuffle(&mut rng);
            let text: String = (0..512).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            TextSample::new(format!("e{i}"), text).with_label(Label::Llm)
        })
        .collect();
    for _ in 0..2 {
        let mut run = Vec::with_capacity(1000);
        for (i, s) in sources.iter().enumerate() {
            let e = excerpt(s, 64, i as u64);
            check(e.char_length() == 64, || format!("{}: length {}", s.id(), e.char_length()))?;
            check(s.text().contains(e.text()), || format!("{}: not a contiguous substring", s.id()))?;
            check(e.gold_label() == s.gold_label(), || format!("{}: label changed", s.id()))?;
            run.push(e.text().to_string());
        }
        runs.push(run);
    }
    check(runs[0] == runs[1], || "reruns differ".into())?;
    let distinct_offsets = sources
        .iter()
        .zip(&runs[0])
        .map(|(s, e)| s.text().find(e.as_str()).unwrap())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(format!("1000 excerpts of 64 chars, all contiguous, identical across reruns ({distinct_offsets} distinct offsets)"))
}

fn run_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let cfg = common::stage_fixtures(dir);
    for cmd in ["fit", "predict", "eval"] {
        let out = Process::new(env!("CARGO_BIN_EXE_mgtd"))
            .args(["--config", cfg.to_str().unwrap(), cmd])
            .output()
            .map_err(|e| e.to_string())?;
        check(out.status.success(), || format!("`{cmd}` failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    }
    let mut files = Vec::new();
    for sub in ["artifacts", "out"] {
        let mut entries: Vec<_> = fs::read_dir(dir.join(sub)).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            files.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), fs::read(&p).unwrap()));
        }
    }
    Ok(files)
}

fn end_to_end() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    check(names.contains(&"out/predictions.jsonl") && names.contains(&"out/report.json"), || {
        format!("missing outputs: {names:?}")
    })?;
    check(first == second, || {
        let diff: Vec<&str> =
            first.iter().zip(&second).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
        format!("outputs differ: {diff:?}")
    })?;
    let bytes: usize = first.iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files ({bytes} bytes) byte-identical across two runs", first.len()))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("voting oracle equivalence", voting_oracle),
        ("default hyper-parameter table", table_replication),
        ("degenerate always-LLM baseline", degenerate_baseline),
        ("macro-F1 oracle", macro_f1_oracle),
        ("threshold calibration", calibration),
        ("ensemble dominance on two regimes", ensemble_dominance),
        ("homogeneity under scaling", homogeneity),
        ("reliability estimator", reliability),
        ("excerpt contract", excerpt_contract),
        ("end-to-end determinism", end_to_end),
    ];
    let total = criteria.len();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS [{}/{total}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}/{total}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", total - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
