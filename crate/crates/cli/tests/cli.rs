use std::path::Path;
use std::process::{Command, Output};

use ipsplit::diagnostics::CSV_HEADER;

fn ipsplit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipsplit"))
        .args(args)
        .current_dir(dir)
        .env_remove("PS_SEED")
        .output()
        .expect("spawn ipsplit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const EXAMPLE: &[&str] = &[
    "solve",
    "--problem",
    "lasso",
    "--rows",
    "8",
    "--cols",
    "4",
    "--mu",
    "0.5",
    "--variant",
    "fb",
    "--sigma",
    "0.5",
    "--alpha",
    "0.3",
    "--beta0",
    "1.0",
    "--gamma",
    "1.0",
    "--rho",
    "1e-8",
    "--max-iter",
    "20000",
    "--trace",
    "out.csv",
];

fn summary(dir: &Path, trace: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{trace}.summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn example_solve_then_audit_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let o = ipsplit(EXAMPLE, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));

    let s = summary(dir.path(), "out.csv");
    assert_eq!(s["variant"], "fb");
    assert_eq!(s["config"]["sigma"], 0.5);
    assert_eq!(s["iterations"], csv.lines().count() - 1);
    let d0 = s["d0"].as_f64().unwrap();

    let o = ipsplit(&["audit", "--trace", "out.csv", "--d0", &d0.to_string()], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("flags: 0"), "{}", stdout(&o));
}

#[test]
fn identical_runs_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let o = ipsplit(
            &[
                "solve",
                "--problem",
                "fused",
                "--inexact",
                "--parallel",
                "--max-iter",
                "300",
                "--trace",
                name,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(dir.path().join(name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn forward_backward_on_skew_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = ipsplit(
        &["solve", "--problem", "skew", "--variant", "fb", "--trace", "s.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("s.csv").exists());
    // The declared regularity still rules it out.
    let o = ipsplit(
        &[
            "solve",
            "--problem",
            "skew",
            "--variant",
            "fb",
            "--force",
            "--trace",
            "s.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    std::fs::write(dir.path().join("bad.csv"), "k,phi\n1,2\n").unwrap();
    let runs: &[&[&str]] = &[
        &["solve", "--instance", "bad.json", "--trace", "x.csv"],
        &["solve", "--instance", "missing.json", "--trace", "x.csv"],
        &["audit", "--trace", "bad.csv"],
        &["solve", "--problem", "lasso", "--bogus", "--trace", "x.csv"],
        &["solve", "--problem", "lasso", "--sigma", "1.5", "--trace", "x.csv"],
        &["gen", "--problem", "lasso", "--instance", "bad.json"],
    ];
    for args in runs {
        assert_eq!(ipsplit(args, dir.path()).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn generated_instance_round_trips_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let o = ipsplit(
        &[
            "gen",
            "--problem",
            "skew",
            "--dim",
            "4",
            "--seed",
            "7",
            "--out",
            "skew.json",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let common = ["--variant", "tseng", "--max-iter", "200"];
    let mut a = vec!["solve", "--instance", "skew.json", "--trace", "a.csv"];
    let mut b = vec![
        "solve",
        "--problem",
        "skew",
        "--dim",
        "4",
        "--seed",
        "7",
        "--trace",
        "b.csv",
    ];
    a.extend(common);
    b.extend(common);
    assert!(ipsplit(&a, dir.path()).status.success());
    assert!(ipsplit(&b, dir.path()).status.success());
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn ps_seed_overrides_the_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |seed_flag: &str, env: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ipsplit"));
        c.args(["gen", "--problem", "lasso", "--seed", seed_flag, "--out", out])
            .current_dir(dir.path());
        match env {
            Some(v) => c.env("PS_SEED", v),
            None => c.env_remove("PS_SEED"),
        };
        assert!(c.status().unwrap().success());
        std::fs::read_to_string(dir.path().join(out)).unwrap()
    };
    assert_eq!(gen("1", Some("5"), "a.json"), gen("5", None, "b.json"));
    assert_ne!(gen("1", None, "c.json"), gen("5", None, "d.json"));
}

#[test]
fn verify_passes_on_the_default_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = ipsplit(&["verify", "--max-iter", "300"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
