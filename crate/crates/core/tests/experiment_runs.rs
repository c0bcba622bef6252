use std::fs;
use std::path::{Path, PathBuf};

use acess_core::corpus::SecurityClass;
use acess_core::experiment::{
    compare_runs, run_experiment, ExperimentConfig, ExperimentError, Level, Method, RunManifest,
    RUN_SCHEMA,
};
use acess_core::metrics::EvalReport;
use acess_core::models::GridSpec;
use acess_core::synth::SyntheticSpec;

fn tiny(method: Method, data_seed: u64) -> ExperimentConfig {
    let spec = SyntheticSpec::planted_clusters(80, data_seed);
    let mut c = ExperimentConfig::synthetic(method, spec, 3, 11);
    c.baseline.grid = GridSpec { max_features: vec![Some(300)], ..GridSpec::default() };
    c
}

fn run(dir: &Path, name: &str, config: &ExperimentConfig) -> PathBuf {
    let out = dir.join(name);
    run_experiment(config, &out).unwrap();
    out
}

fn report(dir: &Path) -> EvalReport {
    serde_json::from_str(&fs::read_to_string(dir.join("eval_paragraph.json")).unwrap()).unwrap()
}

#[test]
fn naive_bayes_smoke_run_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "nb", &tiny(Method::BaselineNb, 1));
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.schema, RUN_SCHEMA);
    for f in &manifest.files {
        assert!(out.join(f).is_file(), "{f}");
    }
    let r = report(&out);
    assert!((0.0..=1.0).contains(&r.macro_f1));
    for m in r.per_class.values() {
        assert!((0.0..=1.0).contains(&m.f1));
    }
    let snapshot = fs::read_to_string(out.join("config.toml")).unwrap();
    let again = ExperimentConfig::from_toml_str(&snapshot).unwrap();
    assert_eq!(again.snapshot().unwrap(), snapshot);
}

#[test]
fn acess_with_one_cluster_matches_global_svm() {
    let tmp = tempfile::tempdir().unwrap();
    let mut acess = tiny(Method::Acess, 2);
    acess.acess.k_override = Some(1);
    let mut svm = tiny(Method::BaselineSvm, 2);
    svm.baseline.features = acess.acess.security_features.clone();
    svm.baseline.grid = acess.acess.grid.clone();
    let a = report(&run(tmp.path(), "acess", &acess));
    let b = report(&run(tmp.path(), "svm", &svm));
    assert_eq!(a.confusion, b.confusion);
    assert_eq!(a.per_class, b.per_class);
    assert_eq!(a.macro_f1, b.macro_f1);
}

#[test]
fn identical_configs_give_identical_reports_in_any_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tiny(Method::PruneLogreg, 3);
    let a = run(tmp.path(), "first", &c);
    let b = run(&tmp.path().join("nested"), "second", &c);
    for f in ["manifest.json", "eval_paragraph.json", "eval_document.csv", "predictions.csv", "seeds.json", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn comparing_a_run_with_itself_ties_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run(tmp.path(), "nb", &tiny(Method::BaselineNb, 4));
    let t = compare_runs(&[a.clone(), a], Level::Paragraph).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[0].values, t.rows[1].values);
    assert!(t.rows.iter().all(|r| r.best == [true; 4]));
}

#[test]
fn best_flags_match_recomputed_argmax() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = [Method::BaselineNb, Method::BaselineLogreg, Method::Acess]
        .into_iter()
        .map(|m| run(tmp.path(), m.name(), &tiny(m, 5)))
        .collect();
    for level in [Level::Paragraph, Level::Document] {
        let t = compare_runs(&dirs, level).unwrap();
        assert_eq!(t.rows.len(), 3);
        let raw: Vec<EvalReport> = dirs
            .iter()
            .map(|d| serde_json::from_str(&fs::read_to_string(d.join(level.file_name())).unwrap()).unwrap())
            .collect();
        let column = |r: &EvalReport, i: usize| match i {
            0 => r.f1(SecurityClass::S),
            1 => r.f1(SecurityClass::C),
            2 => r.f1(SecurityClass::U),
            _ => r.macro_f1,
        };
        for i in 0..4 {
            let max = raw.iter().map(|r| column(r, i)).fold(f64::MIN, f64::max);
            for (row, r) in t.rows.iter().zip(&raw) {
                assert_eq!(row.values[i], column(r, i));
                assert_eq!(row.best[i], column(r, i) == max);
            }
        }
        assert_eq!(t.to_csv().lines().count(), 4);
        assert_eq!(t.to_table().lines().count(), 4);
    }
}

#[test]
fn different_test_sets_are_a_split_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run(tmp.path(), "a", &tiny(Method::BaselineNb, 6));
    let b = run(tmp.path(), "b", &tiny(Method::BaselineNb, 7));
    match compare_runs(&[a.clone(), b], Level::Document) {
        Err(ExperimentError::SplitMismatch { .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(compare_runs(&[a], Level::Paragraph).is_err());
}

#[test]
fn seeds_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "acess", &tiny(Method::Acess, 8));
    let seeds: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("seeds.json")).unwrap()).unwrap();
    assert_eq!(seeds["run_seed"], 11);
    assert_eq!(seeds["split_seed"], 3);
    assert_eq!(seeds["synthetic_seed"], 8);
    let k = seeds["cluster_seeds"].as_array().unwrap().len();
    assert!(k >= 1);
    for i in 0..k {
        assert!(out.join(format!("models/cluster_{i}.json")).is_file());
        assert!(out.join(format!("partitions/cluster_{i}.test.jsonl")).is_file());
    }
}
