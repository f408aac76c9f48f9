use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use glocal::clustering::parse_partition;
use glocal::dataset::{parse_gml, parse_hidden};
use glocal::model::load_model;

fn glocal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glocal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn glocal")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = glocal(dir, args);
    assert!(
        out.status.success(),
        "glocal {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn synth_train_predict_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "synth",
            "--l",
            "6",
            "--n",
            "80",
            "--d",
            "5",
            "--k-true",
            "2",
            "--noise",
            "0.1",
            "--rho",
            "40",
            "--seed",
            "3",
            "--out-full",
            "full.gml",
            "--out-masked",
            "masked.gml",
            "--out-hidden",
            "hidden.txt",
        ],
    );
    let masked = parse_gml(&read(d, "masked.gml")).unwrap();
    assert_eq!(masked.labels.observed_count(), 192); // round(0.4 * 6 * 80)
    assert!(read(d, "masked.gml").contains("seed=3"));

    ok(
        d,
        &[
            "cluster",
            "--data",
            "masked.gml",
            "--groups",
            "3",
            "--seed",
            "1",
            "--out",
            "part.txt",
        ],
    );
    let part = parse_partition(&read(d, "part.txt"), &masked.features).unwrap();
    assert_eq!(part.g(), 3);

    let summary = ok(
        d,
        &[
            "train",
            "--data",
            "masked.gml",
            "--model",
            "model.txt",
            "--partition",
            "part.txt",
            "--latent-k",
            "2",
            "--lambda3",
            "0.1",
            "--lambda4",
            "0.1",
            "--outer-iters",
            "10",
            "--seed",
            "5",
            "--trace",
            "trace.csv",
        ],
    );
    assert!(summary.contains("objective="));
    let model = load_model(&read(d, "model.txt")).unwrap();
    assert_eq!((model.l(), model.d(), model.k(), model.g()), (6, 5, 2, 3));
    let trace = read(d, "trace.csv");
    assert!(trace.lines().any(|l| l == "iter,objective"));
    assert!(trace.contains("seed=5"));

    ok(
        d,
        &[
            "predict",
            "--data",
            "full.gml",
            "--model",
            "model.txt",
            "--scores",
            "scores.txt",
            "--labels",
            "pred.txt",
        ],
    );
    let pred = read(d, "pred.txt");
    assert!(pred
        .lines()
        .skip_while(|l| l.starts_with('#'))
        .skip(1)
        .flat_map(|l| l.split_whitespace())
        .all(|t| t == "1" || t == "-1"));

    ok(
        d,
        &[
            "eval",
            "--scores",
            "scores.txt",
            "--truth",
            "full.gml",
            "--out",
            "report.csv",
        ],
    );
    let report = read(d, "report.csv");
    assert!(report.contains("rkl,auc,cvg,ap,skipped_instances,skipped_labels"));

    let hidden_report = ok(
        d,
        &["eval", "--scores", "scores.txt", "--hidden", "hidden.txt"],
    );
    let row = hidden_report.lines().last().unwrap();
    let auc: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(auc > 0.7, "hidden-entry auc {auc}");
    assert!(!parse_hidden(&read(d, "hidden.txt")).unwrap().is_empty());

    ok(
        d,
        &["correlation", "--data", "full.gml", "--out", "corr.csv"],
    );
    assert_eq!(
        read(d, "corr.csv")
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        6
    );
}

#[test]
fn same_flags_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let synth = |tag: &str| {
        ok(
            d,
            &[
                "synth",
                "--l",
                "4",
                "--n",
                "30",
                "--d",
                "3",
                "--k-true",
                "2",
                "--rho",
                "50",
                "--seed",
                "9",
                "--out-full",
                &format!("f{tag}.gml"),
                "--out-masked",
                &format!("m{tag}.gml"),
                "--out-hidden",
                &format!("h{tag}.txt"),
            ],
        );
        ok(
            d,
            &[
                "train",
                "--data",
                &format!("m{tag}.gml"),
                "--model",
                &format!("model{tag}.txt"),
                "--latent-k",
                "2",
                "--groups",
                "2",
                "--outer-iters",
                "5",
            ],
        );
    };
    synth("a");
    synth("b");
    for (a, b) in [
        ("fa.gml", "fb.gml"),
        ("ma.gml", "mb.gml"),
        ("ha.txt", "hb.txt"),
        ("modela.txt", "modelb.txt"),
    ] {
        assert_eq!(read(d, a), read(d, b), "{a} vs {b}");
    }
}

#[test]
fn perfect_scores_give_zero_ranking_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("truth.gml"),
        "2 1 3\n+:1,3|-:2|1:0.5\n+:2,3|-:1|1:1.0\n",
    )
    .unwrap();
    fs::write(d.join("scores.txt"), "3 2\n0.9 0.1\n0.2 0.8\n0.7 0.6\n").unwrap();
    let out = ok(
        d,
        &["eval", "--scores", "scores.txt", "--truth", "truth.gml"],
    );
    assert!(out.lines().last().unwrap().starts_with("0,"), "{out}");
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = glocal(d, &["train", "--data", "missing.gml", "--model", "m.txt"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));

    // partition that misses an instance
    ok(
        d,
        &[
            "synth",
            "--l",
            "3",
            "--n",
            "10",
            "--d",
            "2",
            "--k-true",
            "1",
            "--out-full",
            "f.gml",
            "--out-masked",
            "m.gml",
            "--out-hidden",
            "h.txt",
        ],
    );
    fs::write(d.join("part.txt"), "1 1\n2 2\n").unwrap();
    let out = glocal(
        d,
        &[
            "train",
            "--data",
            "m.gml",
            "--model",
            "m.txt",
            "--partition",
            "part.txt",
            "--latent-k",
            "1",
        ],
    );
    assert!(!out.status.success());
    assert!(!d.join("m.txt").exists());
}

#[test]
fn usage_errors_are_one_line_too() {
    let tmp = tempfile::tempdir().unwrap();
    let out = glocal(tmp.path(), &["eval", "--scores", "s.txt"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"), "{err}");
}
