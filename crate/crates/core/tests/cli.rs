use std::path::Path;
use std::process::{Command, Output};

fn prem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prem")).current_dir(dir).args(args).output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("h.json"),
        r#"{"domain_size": 8, "weights": [300, 200, 0, 500, 100, 50, 0, 250]}"#,
    )
    .unwrap();
    let out = prem(
        dir.path(),
        &["workload", "--kind", "random-binary", "--count", "6", "--domain-size", "8", "--seed", "1", "--output", "w.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn generate_then_evaluate_within_certified_alpha() {
    let dir = setup();
    let base = ["--input", "h.json", "--workload", "w.json", "--epsilon", "1e6", "--seed", "3"];
    for engine in ["prem", "prem-pure"] {
        let mut args = vec!["generate", "--engine", engine, "--output", "s.json"];
        args.extend(base);
        let out = prem(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let summary = json(&out);
        assert_eq!(summary["within_budget"], true);
        let alpha = summary["certified_alpha"].as_f64().unwrap();

        let out = prem(
            dir.path(),
            &["evaluate", "--synthetic", "s.json", "--input", "h.json", "--workload", "w.json", "--zeta", "0.25"],
        );
        assert_eq!(out.status.code(), Some(0));
        assert!(json(&out)["measured_alpha"].as_f64().unwrap() <= alpha);
    }
}

#[test]
fn laplace_release_is_evaluated_from_estimates() {
    let dir = setup();
    let out = prem(
        dir.path(),
        &["generate", "--engine", "laplace", "--input", "h.json", "--workload", "w.json", "--epsilon", "1e6", "--seed", "0", "--output", "e.json"],
    );
    assert_eq!(out.status.code(), Some(0));
    let out = prem(
        dir.path(),
        &["evaluate", "--synthetic", "e.json", "--input", "h.json", "--workload", "w.json", "--zeta", "0", "--format", "csv"],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("query_id,truth,estimate,upper_slack,lower_slack"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = setup();
    let missing_seed = prem(dir.path(), &["generate", "--input", "h.json", "--workload", "w.json", "--epsilon", "1"]);
    assert_eq!(missing_seed.status.code(), Some(2));

    let bad_zeta = prem(
        dir.path(),
        &["generate", "--input", "h.json", "--workload", "w.json", "--epsilon", "1", "--zeta", "0.7", "--seed", "1"],
    );
    assert_eq!(bad_zeta.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_zeta.stderr).contains("zeta"));
    assert!(String::from_utf8_lossy(&bad_zeta.stderr).contains("(0, 1/2)"));

    let no_eps = prem(dir.path(), &["generate", "--input", "h.json", "--workload", "w.json", "--seed", "1"]);
    assert_eq!(no_eps.status.code(), Some(2));

    let engine = prem(
        dir.path(),
        &["generate", "--engine", "mwem", "--input", "h.json", "--workload", "w.json", "--epsilon", "1", "--seed", "1"],
    );
    assert_eq!(engine.status.code(), Some(2));

    let missing_file = prem(
        dir.path(),
        &["generate", "--input", "nope.json", "--workload", "w.json", "--epsilon", "1", "--seed", "1"],
    );
    assert_eq!(missing_file.status.code(), Some(1));
}

#[test]
fn config_file_supplies_parameters() {
    let dir = setup();
    std::fs::write(dir.path().join("p.toml"), "epsilon = 1e6\nzeta = 0.3\n").unwrap();
    let out = prem(
        dir.path(),
        &["generate", "--config", "p.toml", "--input", "h.json", "--workload", "w.json", "--seed", "2", "--trace", "t.json", "--output", "s.json"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(trace["engine"], "prem");
    assert!(trace["ledger"]["entries"].as_array().unwrap().len() >= 2);

    std::fs::write(dir.path().join("bad.toml"), "epsilon = 1\nbogus = 3\n").unwrap();
    let out = prem(
        dir.path(),
        &["generate", "--config", "bad.toml", "--input", "h.json", "--workload", "w.json", "--seed", "2"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_are_byte_identical_for_a_seed() {
    let dir = setup();
    let run = |name: &str| {
        let out = prem(
            dir.path(),
            &["generate", "--input", "h.json", "--workload", "w.json", "--epsilon", "1e12", "--seed", "9", "--output", name],
        );
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));

    let bench = |name: &str| {
        let out = prem(
            dir.path(),
            &["bench", "--engine", "laplace", "--epsilon", "1", "--seed", "4", "--domain-size", "16", "--n-grid", "100,1000", "--trials", "3", "--format", "csv", "--output", name],
        );
        assert_eq!(out.status.code(), Some(0));
        // runtimes differ between runs; compare everything else
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(5);
                f.join(",")
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(bench("x.csv"), bench("y.csv"));
}

#[test]
fn csv_records_flow_through_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("schema.json"),
        r#"{"attributes": [{"name": "sex", "categories": ["f", "m"]}, {"name": "age", "categories": ["y", "o"]}]}"#,
    )
    .unwrap();
    let mut rows = String::from("sex,age\n");
    for i in 0..400 {
        rows.push_str(if i % 3 == 0 { "f,y\n" } else { "m,o\n" });
    }
    std::fs::write(p.join("d.csv"), rows).unwrap();
    let out = prem(p, &["workload", "--kind", "marginal", "--arity", "1", "--schema", "schema.json", "--seed", "0", "--output", "w.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = prem(
        p,
        &["generate", "--input", "d.csv", "--schema", "schema.json", "--workload", "w.json", "--epsilon", "1e12", "--seed", "5", "--output", "s.json"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(p.join("r.json"), r#"{"domain_size": 4, "weights": [1.5, 0, 0, 2.5]}"#).unwrap();
    let out = prem(p, &["sample", "--synthetic", "r.json", "--count", "10", "--seed", "1", "--schema", "schema.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sex,age"));
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 10);
    assert!(body.iter().all(|l| *l == "f,y" || *l == "m,o"));
}
