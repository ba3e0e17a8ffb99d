use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tactics(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tactics"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tactics(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn setup(tmp: &Path) -> PathBuf {
    let data = tmp.join("data");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--n-learners",
        "30",
        "--seed",
        "11",
    ]);
    for f in [
        "traces.csv",
        "processes.csv",
        "scores.csv",
        "ground_truth.json",
    ] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let cfg = data.join("config.json");
    fs::write(
        &cfg,
        r#"{
            "input": {"mode": "events", "path": "traces.csv", "scores": "scores.csv"},
            "preprocess": {"genai_filter": false},
            "hmm": {"min_states": 2, "max_states": 3, "restarts": 2, "max_iter": 40},
            "cluster": {"k_max": 4},
            "seed": 9
        }"#,
    )
    .unwrap();
    cfg
}

#[test]
fn stage_subcommands_reproduce_the_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let runs = tmp.path().join("runs");
    let run_dir = PathBuf::from(ok(&["run", "--config", s(&cfg), "--out", s(&runs)]).trim());
    assert!(run_dir.join("manifest.json").is_file());

    let st = tmp.path().join("stages");
    ok(&["ingest", "--config", s(&cfg), "--out", s(&st)]);
    let cohort = st.join("cohort.csv");
    ok(&[
        "fit-hmm",
        "--cohort",
        s(&cohort),
        "--config",
        s(&cfg),
        "--out",
        s(&st),
    ]);
    ok(&[
        "decode",
        "--model",
        s(&st.join("model.json")),
        "--cohort",
        s(&cohort),
        "--out",
        s(&st),
    ]);
    ok(&[
        "cluster",
        "--sequences",
        s(&st.join("tactics.csv")),
        "--config",
        s(&cfg),
        "--out",
        s(&st),
    ]);
    let scores = cfg.with_file_name("scores.csv");
    ok(&[
        "stats",
        "--labels",
        s(&st.join("labels.csv")),
        "--scores",
        s(&scores),
        "--out",
        s(&st),
    ]);

    for f in [
        "cohort.csv",
        "model_selection.csv",
        "model.json",
        "tactics.csv",
        "features.csv",
        "labels.csv",
        "phase_distribution.csv",
        "group_stats.json",
    ] {
        assert_eq!(
            fs::read(st.join(f)).unwrap(),
            fs::read(run_dir.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn benchmark_compare_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let out = tmp.path().join("runs");
    let stdout = ok(&[
        "--threads",
        "2",
        "compare",
        "--benchmark",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("v-measure"));
    let lines: Vec<&str> = stdout.lines().collect();
    let cmp = Path::new(lines[2]);
    for f in [
        "contingency.csv",
        "sankey.json",
        "sankey.svg",
        "agreement.json",
        "drilldown.csv",
    ] {
        assert!(cmp.join(f).is_file(), "{f}");
    }
    assert!(Path::new(lines[1]).join("manifest.json").is_file());

    let again = tmp.path().join("again");
    ok(&["compare", lines[0], lines[1], "--out", s(&again)]);
    assert_eq!(
        fs::read(again.join("agreement.json")).unwrap(),
        fs::read(cmp.join("agreement.json")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tactics(&["run", "--config", s(&tmp.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(2));

    let cfg = setup(tmp.path());
    fs::write(
        cfg.with_file_name("typo.json"),
        r#"{"input": {"mode": "events", "path": "traces.csv"}, "clusterr": {}}"#,
    )
    .unwrap();
    let typo = tactics(&["run", "--config", s(&cfg.with_file_name("typo.json"))]);
    assert_eq!(typo.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&typo.stderr).contains("clusterr"));

    // raw codes still hold unrecognized actions: rejected as input
    let raw = cfg.with_file_name("processes.csv");
    let out = tmp.path().join("o");
    let unclean = tactics(&["cluster", "--sequences", s(&raw), "--out", s(&out)]);
    assert_eq!(unclean.status.code(), Some(2));

    ok(&["ingest", "--config", s(&cfg), "--out", s(&out)]);
    let cohort = out.join("cohort.csv");
    let bad_k = tactics(&[
        "cluster",
        "--sequences",
        s(&cohort),
        "--k",
        "500",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad_k.status.code(), Some(3));

    assert_eq!(tactics(&["compare"]).status.code(), Some(2));
}
