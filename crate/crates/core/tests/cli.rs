use std::process::{Command, Output};

fn lacomp(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lacomp"));
    c.args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .env_remove("LACOMP_MAX_NODES");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const GWAS: &str = "examples/gwas.prob";

#[test]
fn default_report_has_algorithms_and_cost() {
    let o = lacomp(&["--input", GWAS, "--top", "2"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with("== algorithms (2) ==\n"));
    assert!(s.contains("alg01: [scal-add, potrf, trsm, syrk, potrf, trsv, gemv, trsv, trsv]"));
    assert!(s.contains("== cost =="));
    assert!(s.contains("  2D      O(t n^3 + m t p n^2)"));
    assert!(!s.contains("== code =="));
}

#[test]
fn reports_are_deterministic() {
    let args = ["--input", GWAS, "--emit", "algorithms", "--emit", "cost,code,json"];
    let a = lacomp(&args, &[]);
    let b = lacomp(&args, &[]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn json_carries_schema() {
    let o = lacomp(&["--input", GWAS, "--emit", "json", "--top", "1"], &[]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["algorithms"].as_array().unwrap().len(), 1);
    assert_eq!(v["algorithms"][0]["cost"][2]["scenario"], "2D");
    assert!(v["algorithms"][0]["code"].as_str().unwrap().contains("for i in 1..m:"));
}

#[test]
fn validate_reports_agreement() {
    let o = lacomp(
        &[
            "--input",
            GWAS,
            "--emit",
            "algorithms",
            "--top",
            "5",
            "--validate",
            "n=16,p=3,m=2,t=2,seed=4",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).ends_with("all 5 algorithms match oracle\n"));
    let o = lacomp(&["--input", GWAS, "--emit", "cost", "--top", "2", "--validate"], &[]);
    assert!(stdout(&o).ends_with("all 2 algorithms match oracle\n"));
}

#[test]
fn exit_codes() {
    assert_eq!(lacomp(&[], &[]).status.code(), Some(2));
    assert_eq!(
        lacomp(&["--input", "tests/data/syntax_error.prob"], &[]).status.code(),
        Some(2)
    );
    assert_eq!(
        lacomp(&["--input", "tests/data/missing.prob"], &[]).status.code(),
        Some(2)
    );
    assert_eq!(
        lacomp(&["--input", GWAS, "--emit", "nonsense"], &[]).status.code(),
        Some(2)
    );
    assert_eq!(
        lacomp(&["--input", GWAS, "--emit", "code", "--target", "c"], &[])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lacomp(&["--input", GWAS, "--max-nodes", "0"], &[]).status.code(),
        Some(3)
    );
    assert_eq!(
        lacomp(&["--input", GWAS], &[("LACOMP_MAX_NODES", "0")]).status.code(),
        Some(3)
    );
    let o = lacomp(
        &["--input", "tests/data/indefinite.prob", "--validate", "n=6,seed=3"],
        &[],
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn parse_errors_name_the_line() {
    let o = lacomp(&["--input", "tests/data/syntax_error.prob"], &[]);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}
