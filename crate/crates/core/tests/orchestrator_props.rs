mod common;

use std::path::{Path, PathBuf};

use common::*;
use verimux::analyzer::{Outcome, Verdict};
use verimux::orchestrator::{
    cli_main, combine_verdicts, exit_code_for, render_report, run_problems, CompositeReport, ReportFormat, RunConfig,
    INCONSISTENT,
};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["verimux".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let code = cli_main(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

#[test]
fn parallelism_does_not_change_the_report() {
    let mut r = rng(70);
    let problems: Vec<_> = (0..12).map(|k| desk_problem(&mut r, k)).collect();
    let run = |jobs| {
        let cfg = RunConfig {
            engines: vec!["builtin-box".into(), "builtin-affine".into(), "mock-smt".into()],
            parallelism: jobs,
            ..RunConfig::default()
        };
        run_problems(&cfg, &problems).unwrap().without_timing()
    };
    let one = run(1);
    assert_eq!(one, run(8));
    assert_eq!(one.goals.len(), 12);
    assert!(one.goals.iter().all(|g| g.engines.len() == 3));
    assert_eq!(one.exit_code, exit_code_for(&one.goals));
}

#[test]
fn json_report_round_trips() {
    let (code, out, _) = cli(&["verify", "--spec", &fixture("robust.mls"), "--format", "json"]);
    let report: CompositeReport = serde_json::from_str(&out).unwrap();
    assert_eq!(report.exit_code, code);
    assert_eq!(render_report(&report, ReportFormat::Json), out);
}

#[test]
fn text_report_has_a_row_per_sample_and_engine() {
    let (code, out, err) =
        cli(&["verify", "--spec", &fixture("robust.mls"), "--engine", "builtin-affine", "--engine", "mock-smt"]);
    assert_eq!(code, 10, "{err}");
    for row in 0..5 {
        for engine in ["builtin-affine", "mock-smt", "combined"] {
            let prefix = format!("robust#{row} ");
            assert!(out.lines().any(|l| l.starts_with(&prefix) && l.contains(engine)), "row {row} {engine}\n{out}");
        }
    }
    assert!(out.contains("5 goals: 3 valid, 2 falsified, 0 unknown, 0 timeout, 0 error; exit 10"), "{out}");
}

#[test]
fn seed_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "spec = {:?}\nengines = [\"builtin-box\"]\nseed = 9\nformat = \"json\"\n\n[analyzer]\nsplit_budget = 64\n",
            fixture("robust.mls")
        ),
    )
    .unwrap();
    let (code, out, err) = cli(&["verify", "--config", &cfg.display().to_string()]);
    assert_eq!(code, 10, "{err}");
    let report: CompositeReport = serde_json::from_str(&out).unwrap();
    assert_eq!(report.seed, 9);
    assert_eq!(report.engines, ["builtin-box"]);
    let (_, out2, _) = cli(&["verify", "--config", &cfg.display().to_string(), "--seed", "3"]);
    let report2: CompositeReport = serde_json::from_str(&out2).unwrap();
    assert_eq!(report2.seed, 3);
    assert_ne!(report2.config_hash, report.config_hash);

    std::fs::write(&cfg, "spec = \"x.mls\"\nbogus = 1\n").unwrap();
    let (code, _, err) = cli(&["verify", "--config", &cfg.display().to_string()]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn emit_and_check_spec_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let (code, out, err) = cli(&["emit", "--spec", &fixture("robust.mls"), "--format", "vnnlib", "--out-dir", &out_dir]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 10, "{out}");
    assert!(dir.path().join("robust_0.vnnlib").exists());
    let (code, out, _) = cli(&["check-spec", "--spec", &fixture("robust.mls")]);
    assert_eq!(code, 0);
    assert!(out.starts_with("ok: 1 models, 1 datasets, 0 predicates, 1 goals"), "{out}");
    let bad = dir.path().join("bad.mls");
    std::fs::write(&bad, "goal g: forall x: vector 1. M(x)[0] <= 1").unwrap();
    let (code, _, err) = cli(&["check-spec", "--spec", &bad.display().to_string()]);
    assert_eq!(code, 1);
    assert!(err.contains("M"), "{err}");
}

#[test]
fn help_and_usage() {
    assert_eq!(cli(&["--help"]).0, 0);
    assert_eq!(cli(&["frobnicate"]).0, 2);
    assert_eq!(cli(&["verify", "--jobs", "many", "--spec", "x"]).0, 2);
    assert_eq!(cli(&["verify", "--spec", &fixture("robust.mls"), "--engine", "nope"]).0, 1);
}

#[test]
fn combination_is_order_independent() {
    let outcomes = [
        Outcome::Valid,
        Outcome::Falsified { witness: vec![0.25] },
        Outcome::Falsified { witness: vec![0.75] },
        Outcome::unknown("?"),
        Outcome::Timeout,
        Outcome::error("boom"),
    ];
    let engines = ["a", "b", "c"];
    let mut vs = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        vs.push(Verdict::new(o.clone(), engines[i % 3], i as f64, 1));
    }
    // every pair, both orders, and regrouping of triples
    for a in &vs {
        for b in &vs {
            let ab = combine_verdicts(&[a.clone(), b.clone()]).unwrap();
            assert_eq!(ab, combine_verdicts(&[b.clone(), a.clone()]).unwrap());
            for c in &vs {
                let left = combine_verdicts(&[ab.clone(), c.clone()]).unwrap();
                let bc = combine_verdicts(&[b.clone(), c.clone()]).unwrap();
                let right = combine_verdicts(&[a.clone(), bc]).unwrap();
                assert_eq!(left, right, "{a:?} {b:?} {c:?}");
            }
        }
    }
    let c = combine_verdicts(&vs[..2]).unwrap();
    assert_eq!(c.outcome, Outcome::error(INCONSISTENT));
}

#[test]
fn metamorphic_command() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.json");
    std::fs::write(&t, r#"{"kind":"noise","eps":0.0,"seed":1}"#).unwrap();
    let (code, out, err) = cli(&[
        "metamorphic",
        "--model",
        &fixture("svm.json"),
        "--dataset",
        &fixture("samples.csv"),
        "--transform",
        &t.display().to_string(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.lines().last().unwrap().ends_with("100.0"), "{out}");
}
