//! End-to-end checks of the binary: generate, solve, verify, and the
//! usage-error contract.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iddp"))
}

fn tmp(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("iddp-cli-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn gen_run_verify_round_trip() {
    let prob = tmp("chain.prob");
    let trace = tmp("trace.csv");
    let status = bin()
        .args(["gen", "--family", "chain", "--out"])
        .arg(&prob)
        .status()
        .unwrap();
    assert!(status.success());

    let status = bin()
        .args(["run", "--algo", "eddp-fast", "--instance"])
        .arg(&prob)
        .args(["--T", "6", "--epsilon", "0.05", "--out"])
        .arg(&trace)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("iter,lb_root"));

    let status = bin()
        .args(["verify", "--instance"])
        .arg(&prob)
        .args(["--trace"])
        .arg(&trace)
        .args(["--oracle-horizon", "20", "--T", "6", "--epsilon", "0.05"])
        .status()
        .unwrap();
    assert!(status.success(), "verify should pass on a converged run");
}

#[test]
fn sddp_requires_seed() {
    let prob = tmp("chain2.prob");
    bin().args(["gen", "--family", "chain", "--out"]).arg(&prob).status().unwrap();
    let status = bin()
        .args(["run", "--algo", "sddp", "--instance"])
        .arg(&prob)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_flag_rejected() {
    let status = bin().args(["run", "--algo", "eddp", "--frobnicate"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn traces_reproduce_byte_for_byte_without_timing() {
    let prob = tmp("chain3.prob");
    let t1 = tmp("t1.csv");
    let t2 = tmp("t2.csv");
    bin().args(["gen", "--family", "chain", "--out"]).arg(&prob).status().unwrap();
    for out in [&t1, &t2] {
        let status = bin()
            .args(["run", "--algo", "sddp", "--instance"])
            .arg(&prob)
            .args(["--T", "4", "--seed", "9", "--max-iters", "40", "--no-timing", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&t1).unwrap();
    let b = std::fs::read(&t2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_with_flag_override() {
    let prob = tmp("chain4.prob");
    let cfgf = tmp("run.cfg");
    let trace = tmp("t4.csv");
    bin().args(["gen", "--family", "chain", "--out"]).arg(&prob).status().unwrap();
    std::fs::write(&cfgf, "T = 4\nepsilon = 0.1\nmax_iters = 500\nno_timing = true\n").unwrap();
    // flag overrides the config's T
    let out = bin()
        .args(["run", "--algo", "eddp", "--instance"])
        .arg(&prob)
        .args(["--config"])
        .arg(&cfgf)
        .args(["--T", "6", "--out"])
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("eps_5"), "schedule should reflect T = 6: {err}");
}

#[test]
fn oracle_prints_value_and_bound() {
    let prob = tmp("chain5.prob");
    bin().args(["gen", "--family", "chain", "--out"]).arg(&prob).status().unwrap();
    let out = bin()
        .args(["oracle", "--instance"])
        .arg(&prob)
        .args(["--oracle-horizon", "12"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("value 0.666"), "{text}");
    assert!(text.contains("error_bound"));
}
