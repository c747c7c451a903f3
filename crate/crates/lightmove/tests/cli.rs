use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lightmove::manifest::read_manifest;
use lightmove::run::Run;
use lightmove::EvalReport;
use lightmove_core::data::parse_logs;
use lightmove_core::model::JumpKind;
use lightmove_core::odeint::Method;

fn lightmove(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lightmove"))
        .current_dir(dir)
        .args(args)
        .env_remove("LIGHTMOVE_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = lightmove(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY_MODEL: &[&str] = &[
    "--loc-dim",
    "6",
    "--time-dim",
    "2",
    "--user-dim",
    "3",
    "--horizon",
    "2",
    "--epochs",
    "3",
    "--sliding",
];

/// synth -> prepare -> train in `dir`, returning nothing; outputs live in
/// `s/`, `d/` and `t/`.
fn pipeline(dir: &Path, variant: &str) {
    ok(
        dir,
        &[
            "synth", "--grid", "4x4", "--cabs", "4", "--steps", "300", "--seed", "7", "--out", "s",
        ],
    );
    ok(dir, &["prepare", "--input", "s/logs.tsv", "--out", "d"]);
    let mut args = vec!["train", "--data", "d", "--out", "t", "--variant", variant];
    args.extend_from_slice(TINY_MODEL);
    ok(dir, &args);
}

#[test]
fn synth_is_deterministic_and_parses() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for out in ["a", "b"] {
        ok(
            p,
            &[
                "synth", "--grid", "4x4", "--cabs", "5", "--steps", "200", "--seed", "7", "--out",
                out,
            ],
        );
    }
    let a = fs::read(p.join("a/logs.tsv")).unwrap();
    assert_eq!(a, fs::read(p.join("b/logs.tsv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let logs = parse_logs(text.lines()).unwrap();
    assert_eq!(logs.records.len(), 1000);
    assert_eq!(logs.users.len(), 5);

    ok(
        p,
        &[
            "synth", "--grid", "4x4", "--steps", "200", "--seed", "8", "--out", "c",
        ],
    );
    assert_ne!(fs::read(p.join("c/logs.tsv")).unwrap(), text.as_bytes());
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = lightmove(p, &["synth", "--cabs", "5", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--grid"));
    let out = lightmove(p, &["synth", "--grid", "four", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = lightmove(p, &["synth", "--grid", "1x1", "--out", "x"]);
    assert!(!out.status.success());
    let out = lightmove(p, &["prepare", "--input", "missing.tsv", "--out", "d"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing.tsv"));
}

#[test]
fn unknown_variant_lists_valid_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = lightmove(
        dir.path(),
        &["train", "--data", "d", "--out", "t", "--variant", "X9Z"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("X9Z"), "{err}");
    for code in ["G0E", "G2E", "L2E", "G2EF"] {
        assert!(err.contains(code), "{err}");
    }
}

fn train_config(dir: &Path) -> lightmove::run::TrainRun {
    match read_manifest(&dir.join("t/manifest.json")).unwrap().config {
        Run::Train(t) => t,
        other => panic!("unexpected run {other:?}"),
    }
}

#[test]
fn variant_codes_expand_into_the_model_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "G2EF");
    let t = train_config(p);
    assert_eq!(t.variant, "G2EF");
    assert_eq!(t.model.jump_kind, JumpKind::Gru);
    assert_eq!(t.model.jumps, 2);
    assert_eq!(t.model.solver.method, Method::Euler);
    assert!(t.model.fine_tune);

    let mut args = vec!["train", "--data", "d", "--out", "t", "--variant", "L0R"];
    args.extend_from_slice(TINY_MODEL);
    ok(p, &args);
    let t = train_config(p);
    assert_eq!(t.model.jump_kind, JumpKind::Fc);
    assert_eq!(t.model.jumps, 0);
    assert_eq!(t.model.solver.method, Method::Rk4);
    assert!(!t.model.fine_tune);
}

#[test]
fn eval_reproduces_the_recorded_validation_score() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "G2E");
    let ckpt = lightmove::checkpoint::load(&p.join("t/model.ckpt")).unwrap();
    ok(
        p,
        &[
            "eval",
            "--data",
            "d",
            "--checkpoint",
            "t/model.ckpt",
            "--out",
            "e",
            "--split",
            "valid",
            "--sliding",
        ],
    );
    let reports: Vec<EvalReport> =
        serde_json::from_str(&fs::read_to_string(p.join("e/report.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].metrics(), ckpt.meta.valid);

    let log = fs::read_to_string(p.join("t/train_log.tsv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch\tlr\ttrain_loss\tvalid_hits1\tvalid_mrr");
    assert_eq!(lines.len(), 4);
    let best: Vec<&str> = lines[ckpt.meta.epoch].split('\t').collect();
    assert_eq!(best[4].parse::<f64>().unwrap(), ckpt.meta.valid.mrr);
}

#[test]
fn baselines_add_rows_and_reports_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "G2E");
    ok(
        p,
        &[
            "eval",
            "--data",
            "d",
            "--checkpoint",
            "t/model.ckpt",
            "--out",
            "e",
            "--baselines",
            "frequency,markov1",
        ],
    );
    let table = fs::read_to_string(p.join("e/comparison.tsv")).unwrap();
    let names: Vec<&str> = table
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(names, ["lightmove", "frequency", "markov1"]);
    let reports: Vec<EvalReport> =
        serde_json::from_str(&fs::read_to_string(p.join("e/report.json")).unwrap()).unwrap();
    for r in &reports {
        assert!(r.hits_at[&1] <= r.hits_at[&5] && r.hits_at[&5] <= r.hits_at[&10]);
        assert!(r.mrr >= r.hits_at[&1] && r.mrr <= 1.0);
    }
    let tsv = fs::read_to_string(p.join("e/report.tsv")).unwrap();
    assert!(
        tsv.contains("name\tlightmove\n")
            && tsv.contains("hits@10\t")
            && tsv.contains("inference_seconds\t")
    );

    let out = lightmove(
        p,
        &[
            "eval",
            "--data",
            "d",
            "--checkpoint",
            "t/model.ckpt",
            "--out",
            "e",
            "--baselines",
            "lstm",
        ],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("lstm"));
}

#[test]
fn thread_count_does_not_change_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "G2E");
    for (threads, out) in [("1", "e1"), ("3", "e3")] {
        ok(
            p,
            &[
                "--threads",
                threads,
                "eval",
                "--data",
                "d",
                "--checkpoint",
                "t/model.ckpt",
                "--out",
                out,
                "--sliding",
            ],
        );
    }
    let read = |d: &str| -> Vec<EvalReport> {
        serde_json::from_str(&fs::read_to_string(p.join(d).join("report.json")).unwrap()).unwrap()
    };
    let (a, b) = (read("e1"), read("e3"));
    assert_eq!((a[0].threads, b[0].threads), (1, 3));
    assert_eq!(a[0].metrics(), b[0].metrics());
}

#[test]
fn tampered_checkpoints_and_foreign_datasets_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "G2E");
    let path = p.join("t/model.ckpt");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 3;
    bytes[last] ^= 0x40;
    fs::write(p.join("bad.ckpt"), &bytes).unwrap();
    let out = lightmove(
        p,
        &[
            "eval",
            "--data",
            "d",
            "--checkpoint",
            "bad.ckpt",
            "--out",
            "e",
        ],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("hash mismatch"), "{}", stderr(&out));

    ok(
        p,
        &[
            "synth", "--grid", "3x3", "--cabs", "4", "--steps", "300", "--out", "s2",
        ],
    );
    ok(p, &["prepare", "--input", "s2/logs.tsv", "--out", "d2"]);
    let out = lightmove(
        p,
        &[
            "eval",
            "--data",
            "d2",
            "--checkpoint",
            "t/model.ckpt",
            "--out",
            "e",
        ],
    );
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("different") || stderr(&out).contains("digest"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn predict_writes_ranked_locations() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "G2E");
    ok(
        p,
        &[
            "predict",
            "--data",
            "d",
            "--checkpoint",
            "t/model.ckpt",
            "--out",
            "p",
            "--top-k",
            "3",
        ],
    );
    let text = fs::read_to_string(p.join("p/predictions.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    // 4 users, 2 steps, 3 ranks.
    assert_eq!(rows.len(), 4 * 2 * 3);
    for group in rows.chunks(3) {
        let probs: Vec<f64> = group.iter().map(|r| r[5].parse().unwrap()).collect();
        assert!(probs.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(
            group.iter().map(|r| r[3]).collect::<Vec<_>>(),
            ["1", "2", "3"]
        );
    }
}

#[test]
fn manifests_record_and_replay_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p, "G2E");
    let m = read_manifest(&p.join("t/manifest.json")).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.seed, Some(0));
    assert_eq!(m.inputs.len(), 4);
    assert_eq!(m.outputs.len(), 2);
    let prep = read_manifest(&p.join("d/manifest.json")).unwrap();
    assert_eq!(prep.command, "prepare");

    ok(p, &["replay", "t/manifest.json", "--out", "t2"]);
    for f in ["model.ckpt", "train_log.tsv"] {
        assert_eq!(
            fs::read(p.join("t").join(f)).unwrap(),
            fs::read(p.join("t2").join(f)).unwrap(),
            "{f}"
        );
    }
    ok(p, &["replay", "s/manifest.json", "--out", "s2"]);

    // Changing an input makes replay refuse.
    fs::write(p.join("d/test.tsv"), "").unwrap();
    assert!(!lightmove(p, &["replay", "t/manifest.json", "--out", "t3"])
        .status
        .success());
}

#[test]
fn seed_comes_from_the_environment_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_lightmove"))
        .current_dir(p)
        .args(["synth", "--grid", "4x4", "--steps", "50", "--out", "s"])
        .env("LIGHTMOVE_SEED", "41")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        read_manifest(&p.join("s/manifest.json")).unwrap().seed,
        Some(41)
    );
}
