use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conenorm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing_ms");
    v
}

#[test]
fn seminorm_of_x_on_interval_is_one() {
    let out = run(&["seminorm", "--poly", "x1", "--gens", "1 - x1^2", "--degree", "2", "--samples", "100"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["command"], "seminorm");
    let lb = r["result"]["lb"].as_f64().unwrap();
    let ub = r["result"]["ub"].as_f64().unwrap();
    assert!((lb - 1.0).abs() <= 1e-6 && (ub - 1.0).abs() <= 1e-6, "{lb} {ub}");
    assert!(r["versions"]["tool"].as_str().unwrap().starts_with("conenorm"));
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let args = ["seminorm", "--poly", "x1^2 - x1", "--gens", "1 - x1^2", "--degree", "4", "--samples", "50", "--seed", "7"];
    let a = without_timing(report(&run(&args)));
    let b = without_timing(report(&run(&args)));
    assert_eq!(a, b);
}

#[test]
fn non_archimedean_module_exits_3_with_pointer_to_dlimit() {
    let out = run(&["seminorm", "--poly", "x1", "--gens", "x1", "--degree", "2"]);
    assert_eq!(code(&out), 3);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dlimit"));
}

#[test]
fn parse_errors_exit_2_without_a_report() {
    let out = run(&["member", "--poly", "x1 +", "--gens", "1 - x1^2", "--degree", "2"]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());
    let out = run(&["member", "--poly", "x1^5", "--gens", "1 - x1^2", "--degree", "2"]);
    assert_eq!(code(&out), 2);
    let out = run(&["dlimit", "--poly", "x1", "--gens", "x1", "--box", "2,1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn member_unknown_exits_1() {
    let out = run(&["member", "--poly", "x1", "--gens", "1 - x1^2", "--degree", "4"]);
    assert_eq!(code(&out), 1);
    assert_eq!(report(&out)["result"]["status"], "Unknown");
}

#[test]
fn certificate_round_trip_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let cert_s = cert.to_str().unwrap();
    let out = run(&["member", "--poly", "2 - x1^2 + x2", "--gens", "1 - x1^2", "--gens", "1 - x2^2", "--preordering",
        "--degree", "2", "--cert-out", cert_s]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["result"]["status"], "Certified");

    let out = run(&["verify", "--cert", cert_s, "--poly", "2 - x1^2 + x2", "--gens", "1 - x1^2", "--gens", "1 - x2^2"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["result"]["passes"], true);
    assert!(r["result"]["residual"].as_f64().unwrap() <= 1e-8);

    // Same certificate, different target polynomial.
    let out = run(&["verify", "--cert", cert_s, "--poly", "3 - x1^2 + x2", "--gens", "1 - x1^2", "--gens", "1 - x2^2"]);
    assert_eq!(code(&out), 1);
    assert_eq!(report(&out)["result"]["passes"], false);

    // Perturbed Gram entry.
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    let q = &mut v["blocks"][0]["Q"][0];
    *q = Value::from(q.as_f64().unwrap() + 0.01);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&v).unwrap()).unwrap();
    let out = run(&["verify", "--cert", tampered.to_str().unwrap(), "--poly", "2 - x1^2 + x2", "--gens", "1 - x1^2",
        "--gens", "1 - x2^2"]);
    assert_eq!(code(&out), 1);

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{\"blocks\": 3}").unwrap();
    let out = run(&["verify", "--cert", garbage.to_str().unwrap(), "--poly", "1", "--gens", "1 - x1^2"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn closure_verdicts_and_exit_codes() {
    let out = run(&["closure", "--poly", "x1", "--gens-m", "1 - x1^2", "--samples", "100"]);
    assert_eq!(code(&out), 1);
    let r = report(&out);
    assert_eq!(r["result"]["verdict"], "NotInClosure");
    assert!(r["result"]["witness"]["value"].as_f64().unwrap() < 0.0);

    let dir = tempfile::tempdir().unwrap();
    let out = run(&["closure", "--poly", "x1^2", "--gens-m", "1 - x1^2", "--samples", "100", "--cert-dir",
        dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["result"]["verdict"], "InClosure");
    let files = r["result"]["certificate_files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let poly = format!("--poly={}", f["poly"].as_str().unwrap());
        let out = run(&["verify", "--cert", f["file"].as_str().unwrap(), &poly, "--gens", "1 - x1^2"]);
        assert_eq!(code(&out), 0);
    }
}

#[test]
fn closure_without_enough_degree_is_unknown() {
    // Positive on K, but no degree below deg f is searched.
    let out = run(&["closure", "--poly", "x1^4 + 1", "--gens-m", "1 - x1^2", "--dmax", "2", "--samples", "50"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(&out)["result"]["verdict"], "Unknown");
}

#[test]
fn empty_sample_exits_5() {
    let out = run(&["dlimit", "--poly", "x1", "--gens=-1 - x1^2"]);
    assert_eq!(code(&out), 5);
    let out = run(&["closure", "--poly", "x1", "--gens-m=-1 - x1^2"]);
    assert_eq!(code(&out), 5);
}

#[test]
fn dlimit_on_half_line() {
    let out = run(&["dlimit", "--poly", "x1", "--gens", "x1", "--box", "0,4"]);
    assert_eq!(code(&out), 0);
    assert_eq!(report(&out)["result"]["lb"].as_f64().unwrap(), 4.0);
}

#[test]
fn seminorm_cert_dir_files_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["seminorm", "--poly", "x1^2", "--gens", "1 - x1^2", "--degree", "2", "--samples", "20",
        "--cert-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let files = report(&out)["result"]["certificate_files"].as_array().unwrap().clone();
    assert_eq!(files.len(), 2);
    for f in files {
        let path = f["file"].as_str().unwrap();
        assert!(Path::new(path).exists());
        let poly = format!("--poly={}", f["poly"].as_str().unwrap());
        let out = run(&["verify", "--cert", path, &poly, "--gens", "1 - x1^2"]);
        assert_eq!(code(&out), 0);
    }
}
