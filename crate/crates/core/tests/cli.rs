//! End-to-end tests of the `rolescan` binary: exit codes, output files,
//! and the one-line summary contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/lawfirm")
        .join(name)
}

fn rolescan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rolescan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process not killed by signal")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr is UTF-8")
}

#[test]
fn validate_accepts_the_bundled_factory() {
    let factory = fixture("factory.json");
    let policy = fixture("policy.json");
    let out = rolescan(&[
        "validate",
        factory.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), "");
}

#[test]
fn validate_reports_missing_file_as_error() {
    let out = rolescan(&["validate", "/nonexistent/factory.json"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.starts_with("error:"), "stderr: {err}");
    assert!(err.contains("/nonexistent/factory.json"), "stderr: {err}");
}

#[test]
fn validate_names_the_broken_node_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(
        &path,
        r#"{
  "format_version": 1,
  "name": "broken",
  "roles": ["Admin", "Anonymous"],
  "default_roles": ["Anonymous"],
  "entities": [],
  "modules": [
    {
      "name": "M",
      "screens": [
        {
          "name": "S",
          "allowed_roles": ["Admin"],
          "cfg": {
            "nodes": [
              {"id": "start", "kind": "start"},
              {"id": "end", "kind": "end"}
            ],
            "edges": [{"from": "start", "to": "nowhere"}]
          }
        }
      ],
      "actions": []
    }
  ]
}
"#,
    )
    .unwrap();
    let out = rolescan(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let text = stdout(&out);
    assert!(
        text.contains("modules.M.screens.S.cfg"),
        "violation must carry the full path, got: {text}"
    );
    assert!(text.contains("nowhere"), "got: {text}");
}

#[test]
fn validate_checks_policy_role_names() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    std::fs::write(
        &path,
        r#"{
  "format_version": 1,
  "rules": [{"entity": "LegalCase", "read": ["NoSuchRole"], "write": ["Admin"]}]
}
"#,
    )
    .unwrap();
    let factory = fixture("factory.json");
    let out = rolescan(&[
        "validate",
        factory.to_str().unwrap(),
        "--policy",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("NoSuchRole"), "got: {}", stderr(&out));
}

fn analyze_fixture(extra: &[&str], out_name: &str, dir: &Path) -> (Output, PathBuf) {
    let factory = fixture("factory.json");
    let policy = fixture("policy.json");
    let report = dir.join(out_name);
    let mut args = vec![
        "analyze",
        "--factory",
        factory.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    (rolescan(&args), report)
}

#[test]
fn analyze_exits_one_and_prints_the_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report_path) = analyze_fixture(&[], "report.json", dir.path());
    assert_eq!(code(&out), 1, "findings must exit 1; stderr: {}", stderr(&out));

    let text = stdout(&out);
    let line = text.lines().last().expect("summary line printed");
    let mut fields = line.split(' ');
    assert_eq!(fields.next(), Some("modules=2"));
    assert_eq!(fields.next(), Some("screens=25"));
    assert_eq!(fields.next(), Some("findings=3"));
    let elapsed = fields.next().expect("elapsed field");
    assert!(elapsed.starts_with("elapsed_ms="));
    elapsed["elapsed_ms=".len()..]
        .parse::<u64>()
        .expect("elapsed is a number");
    assert_eq!(fields.next(), None);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["format_version"], 1);
    assert_eq!(report["summary"]["total_findings"], 3);
    assert!(
        report.get("generated_at").is_none(),
        "no timestamp without --timestamp"
    );
}

#[test]
fn analyze_exits_zero_when_every_access_is_guarded() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("strict.json");
    // Every LegalCase access in the fixture sits behind an Admin check
    // reachable only from Admin screens, so this rule has no violations.
    std::fs::write(
        &policy,
        r#"{
  "format_version": 1,
  "rules": [{"entity": "LegalCase", "read": ["Admin", "Lawyer"], "write": ["Admin"]}]
}
"#,
    )
    .unwrap();
    let factory = fixture("factory.json");
    let report = dir.path().join("report.json");
    let out = rolescan(&[
        "analyze",
        "--factory",
        factory.to_str().unwrap(),
        "--policy",
        policy.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("findings=0"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["summary"]["total_findings"], 0);
}

#[test]
fn analyze_missing_policy_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let factory = fixture("factory.json");
    let out = rolescan(&[
        "analyze",
        "--factory",
        factory.to_str().unwrap(),
        "--policy",
        "/nonexistent/policy.json",
        "--out",
        dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn analyze_job_count_does_not_change_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (out1, path1) = analyze_fixture(&["--jobs", "1"], "r1.json", dir.path());
    let (out8, path8) = analyze_fixture(&["--jobs", "8"], "r8.json", dir.path());
    assert_eq!(code(&out1), 1);
    assert_eq!(code(&out8), 1);
    assert_eq!(
        std::fs::read(&path1).unwrap(),
        std::fs::read(&path8).unwrap(),
        "--jobs must not change report bytes"
    );
}

#[test]
fn analyze_timestamp_flag_stamps_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = analyze_fixture(&["--timestamp"], "stamped.json", dir.path());
    assert_eq!(code(&out), 1);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let stamp = report["generated_at"].as_str().expect("generated_at set");
    // RFC 3339, second precision: 2026-01-02T03:04:05Z.
    assert_eq!(stamp.len(), 20, "unexpected stamp shape: {stamp}");
    assert!(stamp.ends_with('Z'), "unexpected stamp shape: {stamp}");
    assert_eq!(&stamp[4..5], "-");
    assert_eq!(&stamp[10..11], "T");
}

#[test]
fn analyze_writes_html_and_graph_dumps_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let html = dir.path().join("report.html");
    let graph = dir.path().join("graph.json");
    let (out, _) = analyze_fixture(
        &[
            "--html",
            html.to_str().unwrap(),
            "--dump-graph",
            graph.to_str().unwrap(),
        ],
        "report.json",
        dir.path(),
    );
    assert_eq!(code(&out), 1);

    let html = std::fs::read_to_string(&html).unwrap();
    assert!(html.contains("<html"), "HTML report is a full page");
    assert!(html.contains("SecretAdminPage"), "findings are rendered");

    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&graph).unwrap()).unwrap();
    assert_eq!(graph["nodes"].as_array().unwrap().len(), 83);
    assert_eq!(graph["edges"].as_array().unwrap().len(), 220);
}

#[test]
fn gen_writes_three_files_and_repeats_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "gen".to_string(),
            "--seed".into(),
            "5".into(),
            "--modules".into(),
            "3".into(),
            "--screens-per-module".into(),
            "2".into(),
            "--actions-per-module".into(),
            "4".into(),
            "--entities".into(),
            "5".into(),
            "--roles".into(),
            "6".into(),
            "--plant-flaws".into(),
            "2".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let args = args(&out_dir);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = rolescan(&args);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    for name in ["factory.json", "policy.json", "planted.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(!a.is_empty(), "{name} must not be empty");
        assert_eq!(a, b, "{name} differs between identical invocations");
    }
}

#[test]
fn gen_mockup_reproduces_the_bundled_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = rolescan(&[
        "gen",
        "--preset",
        "mockup",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for name in ["factory.json", "policy.json", "planted.json"] {
        assert_eq!(
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(fixture(name)).unwrap(),
            "{name} drifted from the bundled fixture"
        );
    }
}

#[test]
fn gen_mockup_rejects_parameter_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = rolescan(&[
        "gen",
        "--preset",
        "mockup",
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("fixed blueprint"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn gen_rejects_contradictory_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let out = rolescan(&[
        "gen",
        "--access-probability",
        "0.9",
        "--grant-probability",
        "0.9",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error:"), "stderr: {}", stderr(&out));
}

#[test]
fn generated_output_feeds_straight_back_into_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let gen_dir = dir.path().join("gen");
    let out = rolescan(&[
        "gen",
        "--seed",
        "11",
        "--modules",
        "2",
        "--screens-per-module",
        "2",
        "--actions-per-module",
        "3",
        "--entities",
        "4",
        "--roles",
        "5",
        "--plant-flaws",
        "3",
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let report = dir.path().join("report.json");
    let out = rolescan(&[
        "analyze",
        "--factory",
        gen_dir.join("factory.json").to_str().unwrap(),
        "--policy",
        gen_dir.join("policy.json").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "planted flaws must be found");

    // Every planted tuple appears in the report.
    let planted: Vec<serde_json::Value> = serde_json::from_str(
        &std::fs::read_to_string(gen_dir.join("planted.json")).unwrap(),
    )
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let mut reported = std::collections::BTreeSet::new();
    for module in report["modules"].as_array().unwrap() {
        for screen in module["screens"].as_array().unwrap() {
            for finding in screen["findings"].as_array().unwrap() {
                for role in finding["violating_roles"].as_array().unwrap() {
                    reported.insert((
                        format!(
                            "{}.{}",
                            module["name"].as_str().unwrap(),
                            screen["name"].as_str().unwrap()
                        ),
                        finding["entity"].as_str().unwrap().to_string(),
                        finding["mode"].as_str().unwrap().to_string(),
                        role.as_str().unwrap().to_string(),
                    ));
                }
            }
        }
    }
    for tuple in &planted {
        let key = (
            tuple["screen"].as_str().unwrap().to_string(),
            tuple["entity"].as_str().unwrap().to_string(),
            tuple["mode"].as_str().unwrap().to_string(),
            tuple["role"].as_str().unwrap().to_string(),
        );
        assert!(reported.contains(&key), "planted flaw missing: {key:?}");
    }
}
