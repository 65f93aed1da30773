use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use biosession::clustering::{fit_cluster_model, ClusterConfig};
use biosession::synth::gen_blobs;
use biosession_cli::analysis::{Clustering, TestRow};
use biosession_cli::bundle::{self, BundleWriter, Manifest};
use biosession_cli::config::PipelineConfig;
use biosession_cli::report;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biosession")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap(), "--duration", "300"];
    args.extend(extra);
    let o = bin(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn ingest_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["ingest", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("0 sessions"), "{}", stdout(&o));
}

#[test]
fn ingest_corpus_then_malformed_file() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--subjects", "10", "--sessions", "3"]);
    let sessions = dir.path().join("sessions");
    let o = bin(&["ingest", sessions.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("30 sessions"), "{}", stdout(&o));

    std::fs::write(sessions.join("broken.json"), "{\"schema\": \"biosession/1\", ").unwrap();
    let o = bin(&["ingest", sessions.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("broken.json: error"), "{}", stdout(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.json"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bin(&["run", "--out", "/tmp/x"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha": 2.0}"#).unwrap();
    assert_eq!(bin(&["ingest", "--config", cfg.to_str().unwrap(), dir.path().to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&cfg, r#"{"clustering": {"k_mni": 2}}"#).unwrap();
    let o = bin(&["ingest", "--config", cfg.to_str().unwrap(), dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("k_mni"));
    assert_eq!(bin(&["--version"]).status.code(), Some(0));
}

#[test]
fn run_writes_a_complete_bundle() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--subjects", "4", "--sessions", "3", "--heavy-dropouts", "1"]);
    let out = dir.path().join("bundle");
    let o = bin(&["run", dir.path().join("sessions").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in bundle::REQUIRED {
        assert!(out.join(f).is_file(), "{f}");
    }
    // k range 2..=8 gives seven score rows.
    let scores = bundle::read_csv(&out.join(bundle::SCORES)).unwrap();
    assert_eq!(scores.iter().map(|r| r["k"].as_str()).collect::<Vec<_>>(), ["2", "3", "4", "5", "6", "7", "8"]);
    assert_eq!(scores.iter().filter(|r| r["selected"] == "true").count(), 1);

    // The first session carries a 60% HR dropout: logged, and no HR features.
    let log = bundle::read_csv(&out.join(bundle::DROP_LOG)).unwrap();
    let dropped: Vec<_> = log.iter().filter(|r| r["action"] == "dropped").collect();
    assert_eq!(dropped.len(), 1);
    assert_eq!((dropped[0]["subject_id"].as_str(), dropped[0]["session_index"].as_str(), dropped[0]["signal"].as_str()), ("SYN01", "1", "HR"));
    let features = bundle::read_csv(&out.join(bundle::FEATURES)).unwrap();
    for r in &features {
        let dropped_row = r["subject_id"] == "SYN01" && r["session_index"] == "1";
        assert_eq!(r["HR_mean"].is_empty(), dropped_row, "{r:?}");
        assert!(!r["RR_sdnn"].is_empty());
    }
    // 12 sessions: one Session row each plus 1, 2 or 3 scenarios.
    assert_eq!(features.len(), 12 + 4 * (1 + 2 + 3));

    let manifest: Manifest = serde_json::from_str(&read(&out.join(bundle::MANIFEST))).unwrap();
    assert_eq!(manifest.config_sha256, PipelineConfig::default().resolve().unwrap().hash());
    assert_eq!((manifest.sessions_total, manifest.sessions_processed, manifest.traces_dropped), (12, 12, 1));
    assert_eq!(manifest.inputs.len(), 12);
    for e in &manifest.outputs {
        assert!(out.join(&e.file).is_file());
    }

    let md = report::render(&out, None).unwrap();
    assert!(md.contains("## Clusters"));
    assert!(md.contains("clusters selected"));
}

#[test]
fn too_many_failed_sessions_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--subjects", "2", "--sessions", "2", "--gaps", "0"]);
    let sessions = dir.path().join("sessions");
    std::fs::write(sessions.join("zz_bad.json"), "[]").unwrap();
    // 1 of 5 failed: exactly 20%, tolerated.
    let out = dir.path().join("b1");
    let o = bin(&["features", sessions.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::remove_file(sessions.join("SYN02_2.json")).unwrap();
    // 1 of 4: above the threshold, but the bundle is still written.
    let out = dir.path().join("b2");
    let o = bin(&["features", sessions.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let log = read(&out.join(bundle::DROP_LOG));
    assert!(log.lines().any(|l| l.starts_with("zz_bad.json,") && l.contains(",failed,\"parse:")), "{log}");
    assert_eq!(bundle::read_csv(&out.join(bundle::FEATURES)).unwrap().iter().filter(|r| r["segment"] == "Session").count(), 3);
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--subjects", "3", "--sessions", "2"]);
    let sessions = dir.path().join("sessions");
    let mut bundles = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("b{jobs}"));
        let o = bin(&["analyze", sessions.to_str().unwrap(), "--jobs", jobs, "--out", out.to_str().unwrap(), "--seed", "11"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        bundles.push(out);
    }
    for f in [bundle::MANIFEST, bundle::FEATURES, bundle::TESTS, bundle::GLM, bundle::DROP_LOG] {
        assert_eq!(read(&bundles[0].join(f)), read(&bundles[1].join(f)), "{f}");
    }
}

#[test]
fn preprocess_writes_normalized_sessions() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--subjects", "1", "--sessions", "1"]);
    let out = dir.path().join("pre");
    let o = bin(&["preprocess", dir.path().join("sessions").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = biosession::session::parse_session(read(&out.join("preprocessed/SYN01_1.json")).as_bytes()).unwrap();
    assert!(s.traces.iter().all(|t| t.rate_hz() == 1.0 && t.is_fully_valid()));
}

/// A bundle holding only a clustering result and the given tests.
fn fixture_bundle(dir: &Path, clustering: Option<Clustering>, tests: &[TestRow]) {
    let cfg = PipelineConfig::default();
    let mut w = BundleWriter::create(dir).unwrap();
    w.write(bundle::DROP_LOG, &bundle::drop_log_csv(&[], &[], 0.5)).unwrap();
    w.write(bundle::FEATURES, &bundle::features_csv(&[])).unwrap();
    w.write(bundle::TESTS, &bundle::tests_csv(tests)).unwrap();
    w.write(bundle::GLM, "[]\n").unwrap();
    let c = clustering.unwrap_or(Clustering { keys: vec![], columns: vec![], model: Err("none".into()), validation: vec![], profile: BTreeMap::new() });
    w.write(bundle::CLUSTERS, &bundle::clusters_csv(&c)).unwrap();
    w.write(bundle::SCORES, &bundle::scores_csv(&c)).unwrap();
    w.write(bundle::MANIFEST, &serde_json::to_string(&Manifest::new("run", &cfg)).unwrap()).unwrap();
}

fn row(feature: &str, p: f64) -> TestRow {
    TestRow {
        analysis_id: "scenario_wilcoxon".into(),
        subgroup: "Adolescent".into(),
        feature: feature.into(),
        group_a: "Coin".into(),
        group_b: "Station".into(),
        statistic_name: "W".into(),
        statistic: 3.0,
        z: Some(-2.1),
        p,
        n: 10,
        method: "exact".into(),
        mean_a: Some(1.0),
        mean_b: Some(2.0),
    }
}

#[test]
fn report_on_three_blob_fixture_names_three_clusters() {
    let blobs = gen_blobs(3, 30, 10.0, 3, 4).unwrap();
    let model = fit_cluster_model(&blobs.rows, &ClusterConfig { include_subject_id: false, variance_percentile: 0.0, ..ClusterConfig::default() }).unwrap();
    assert_eq!(model.k, 3);
    let keys = (0..90).map(|i| (format!("B{i:02}"), 1)).collect();
    let c = Clustering { keys, columns: vec![], model: Ok(model), validation: vec![], profile: BTreeMap::new() };
    let dir = tempfile::tempdir().unwrap();
    fixture_bundle(dir.path(), Some(c), &[]);
    let md = report::render(dir.path(), None).unwrap();
    assert!(md.contains("3 clusters selected"), "{md}");
    assert!(md.contains("cluster0 = 30, cluster1 = 30, cluster2 = 30"), "{md}");
}

#[test]
fn report_without_tests_says_so() {
    let dir = tempfile::tempdir().unwrap();
    fixture_bundle(dir.path(), None, &[]);
    let md = report::render(dir.path(), None).unwrap();
    assert!(md.contains("No significant results."));
    assert!(md.contains("No clustering result."));
}

#[test]
fn report_significance_filter() {
    let dir = tempfile::tempdir().unwrap();
    fixture_bundle(dir.path(), None, &[row("HR_mean", 0.01), row("HR_sd", 0.2), row("BF_cv", 0.049)]);
    let md = report::render(dir.path(), None).unwrap();
    let (significant, appendix) = md.split_once("## Appendix").unwrap();
    assert!(significant.contains("| HR_mean |") && significant.contains("| BF_cv |"));
    assert!(!significant.contains("| HR_sd |"));
    assert!(significant.contains("Coin (M=1) < Station (M=2)"));
    for f in ["HR_mean", "HR_sd", "BF_cv"] {
        assert!(appendix.contains(&format!("| {f} |")));
    }
    // A stricter alpha from the command line.
    let o = bin(&["report", dir.path().to_str().unwrap(), "--alpha", "0.02"]);
    assert_eq!(o.status.code(), Some(0));
    let (significant, _) = stdout(&o).split_once("## Appendix").map(|(a, b)| (a.to_string(), b.to_string())).unwrap();
    assert!(significant.contains("| HR_mean |") && !significant.contains("| BF_cv |"));
}

#[test]
fn report_rejects_incomplete_bundle() {
    let dir = tempfile::tempdir().unwrap();
    fixture_bundle(dir.path(), None, &[]);
    std::fs::remove_file(dir.path().join(bundle::GLM)).unwrap();
    let o = bin(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("incomplete bundle: missing glm.json"));
}
