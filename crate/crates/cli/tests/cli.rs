use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn carepath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carepath")).args(args).output().unwrap()
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_accepts_the_shipped_guideline() {
    let o = carepath(&["validate", &fixture("guidelines/chest_pain.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("ok"));
}

#[test]
fn canonical_output_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let first = carepath(&["validate", "--canonical", &fixture("guidelines/chest_pain.json")]);
    assert_eq!(first.status.code(), Some(0));
    let path = dir.path().join("canonical.json");
    std::fs::write(&path, &first.stdout).unwrap();
    let second = carepath(&["validate", "--canonical", path.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"guideline\": {").unwrap();
    let o = carepath(&["validate", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at 1:16"), "{}", String::from_utf8_lossy(&o.stderr));

    let invalid = dir.path().join("invalid.json");
    let text = std::fs::read_to_string(fixture("guidelines/chest_pain.json")).unwrap();
    std::fs::write(&invalid, text.replace("\"entry_task\": \"chest_pain_survey\"", "\"entry_task\": \"nowhere\"")).unwrap();
    assert_ne!(std::fs::read_to_string(&invalid).unwrap(), text);
    assert_eq!(carepath(&["validate", invalid.to_str().unwrap()]).status.code(), Some(1));

    let missing = dir.path().join("missing.json");
    assert_eq!(carepath(&["validate", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn run_scenario_exit_codes() {
    for name in ["good_good", "bad_results", "low_risk", "mid_pathway"] {
        let o = carepath(&["run-scenario", &fixture(&format!("scenarios/{name}.json"))]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        assert!(stdout(&o).trim_end().ends_with(": PASS"));
    }
    let o = carepath(&["run-scenario", &fixture("scenarios/early_timer.json")]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("divergence at line"), "{out}");
    assert!(out.trim_end().ends_with(": FAIL"));

    assert_eq!(carepath(&["run-scenario", "/nonexistent/scenario.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\"}").unwrap();
    assert_eq!(carepath(&["run-scenario", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn run_scenario_json_report() {
    let o = carepath(&["run-scenario", "--json", &fixture("scenarios/good_good.json")]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["scene_transitions"], 3);
    assert_eq!(v["trace"].as_array().unwrap().len(), 20);
    assert_eq!(v["divergence"], serde_json::Value::Null);
}

#[test]
fn export_reads_a_log_written_by_another_process() {
    use carepath_core::eventlog::EventLog;
    use carepath_core::runtime::{Actor, Runtime, RuntimeConfig};
    use carepath_core::time::Instant;

    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("events.log");
    let (id, count) = {
        let mut config = RuntimeConfig::virtual_at(Instant::parse_rfc3339("2025-03-01T08:00:00Z").unwrap());
        config.log = EventLog::open(&store).unwrap();
        let rt = Runtime::new(config);
        rt.deploy_text(&std::fs::read_to_string(fixture("guidelines/chest_pain.json")).unwrap()).unwrap();
        let doctor = Actor::doctor();
        let case = rt.start_case("chest-pain", "PAT-1", &doctor).unwrap().case_id;
        rt.answer_scene(&case, "localization", "Apex", &doctor).unwrap();
        let count = rt.case_entries(&case).len();
        (case, count)
    };
    let store = store.to_str().unwrap();

    let csv = carepath(&["export", "--store", store, "--case", id.as_str(), "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0), "{}", String::from_utf8_lossy(&csv.stderr));
    assert_eq!(stdout(&csv).lines().count(), count + 1);

    let out = dir.path().join("case.xes");
    let xes = carepath(&["export", "--store", store, "--case", id.as_str(), "--format", "xes", "--out", out.to_str().unwrap()]);
    assert_eq!(xes.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap().matches("<event>").count(), count);

    let json = carepath(&["export", "--store", store, "--case", id.as_str()]);
    let v: Vec<serde_json::Value> = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v.len(), count);

    assert_eq!(carepath(&["export", "--store", store, "--case", "case-999"]).status.code(), Some(2));
    let foreign = dir.path().join("foreign.bin");
    std::fs::write(&foreign, "definitely not a log").unwrap();
    assert_eq!(carepath(&["export", "--store", foreign.to_str().unwrap(), "--case", "x"]).status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(carepath(&["frobnicate"]).status.code(), Some(2));
}
