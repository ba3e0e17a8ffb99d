use std::fs;
use std::path::Path;

use tactic_core::pipeline::{
    compare_runs, run_pipeline, PipelineConfig, BENCHMARK_STAGES, RED_STAGES,
};
use tactic_core::synth::{generate_cohort, CohortSpec};

fn small_cohort(dir: &Path) {
    let mut spec = CohortSpec::paperlike();
    spec.n_learners = 40;
    spec.length.min = 30;
    spec.length.max = 60;
    generate_cohort(&spec).unwrap().write(dir).unwrap();
}

fn config(dir: &Path, benchmark: bool) -> PipelineConfig {
    let json = format!(
        r#"{{
            "input": {{"mode": "events", "path": "traces.csv", "scores": "scores.csv"}},
            "preprocess": {{"genai_filter": false}},
            "hmm": {{"min_states": 2, "max_states": 3, "restarts": 2, "max_iter": 50}},
            "cluster": {{"k_max": 5}},
            "benchmark_mode": {benchmark},
            "seed": 5
        }}"#
    );
    let path = dir.join(if benchmark { "bench.json" } else { "red.json" });
    fs::write(&path, json).unwrap();
    PipelineConfig::from_path(&path).unwrap()
}

#[test]
fn red_and_benchmark_paths_then_compare() {
    let tmp = tempfile::tempdir().unwrap();
    small_cohort(tmp.path());
    let red = run_pipeline(&config(tmp.path(), false)).unwrap();
    let names: Vec<&str> = red.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, RED_STAGES);
    for f in [
        "emission_matrix.csv",
        "transition_matrix.csv",
        "elbow.csv",
        "phase_distribution.csv",
        "group_stats.json",
    ] {
        assert!(red.artifact_names().contains(&f), "{f}");
        assert!(red.run_dir.join(f).is_file());
    }
    assert!(!red.run_dir.join("STALE").exists());

    let bench = run_pipeline(&config(tmp.path(), true)).unwrap();
    assert_eq!(bench.stages.len(), BENCHMARK_STAGES.len());
    assert!(!bench
        .artifact_names()
        .iter()
        .any(|f| f.contains("model") || f.contains("tactics")));
    assert_ne!(red.run_id, bench.run_id);

    let same = compare_runs(&red.run_dir, &red.run_dir, &tmp.path().join("self")).unwrap();
    assert_eq!(
        (
            same.scores.homogeneity,
            same.scores.completeness,
            same.scores.v_measure
        ),
        (1.0, 1.0, 1.0)
    );
    let cmp = compare_runs(&red.run_dir, &bench.run_dir, &tmp.path().join("cmp")).unwrap();
    assert_eq!(cmp.n_learners, 40);
    for g in &cmp.drilldown {
        let s: f64 = g.process_distribution.values().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(g.tactic_distribution.is_some());
    }
    for f in [
        "contingency.csv",
        "agreement.json",
        "sankey.json",
        "sankey.svg",
        "drilldown.csv",
    ] {
        assert!(tmp.path().join("cmp").join(f).is_file(), "{f}");
    }
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    small_cohort(tmp.path());
    let cfg = config(tmp.path(), false);
    let a = run_pipeline(&cfg).unwrap();
    let first = fs::read(a.run_dir.join("manifest.json")).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    assert_eq!(first, fs::read(b.run_dir.join("manifest.json")).unwrap());
}

#[test]
fn failing_stage_leaves_stale_marker() {
    let tmp = tempfile::tempdir().unwrap();
    small_cohort(tmp.path());
    let mut cfg = config(tmp.path(), true);
    cfg.cluster.k = Some(500);
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("cluster"), "{err}");
    assert!(!err.is_validation());
    let run = fs::read_dir(&cfg.output.dir)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    assert!(run.join("STALE").is_file());
    assert!(!run.join("manifest.json").exists());
}
