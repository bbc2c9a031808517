use std::process::{Command, Output};

fn chronoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chronoflow")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

const SMALL: [&str; 6] = [
    "--override",
    "model.clock_grid.n=48",
    "--override",
    "model.system_grid.n=96",
    "--override",
    "propagation.n_steps=100",
];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(SMALL).collect()
}

#[test]
fn stage_subcommand_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = chronoflow(&with_small(&["propagate", "--out", out]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("manifest.json"));
    assert!(dir.path().join("observables.csv").is_file());
    assert!(!dir.path().join("adiabaticity.csv").exists());

    // plotting afterwards renders only what the manifest holds
    let o = chronoflow(&["plot", "--out", out, "--only", "potentials"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("plots/potentials.svg").is_file());
    let o = chronoflow(&["plot", "--out", out, "--only", "residuals"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [plot]"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for bad in ["propagation.dt=-1", "propagation.no_such_key=1", "model.clock_grid.n=3"] {
        let o = chronoflow(&["bo", "--out", out, "--override", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [config]"), "{bad}");
    }
    let o = chronoflow(&["bo", "--out", out, "--config", "/nonexistent/run.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_failure_is_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = with_small(&["factorize", "--out", out]);
    args.extend(["--override", "factorization.rho_floor=1000"]);
    let o = chronoflow(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [factorize]"));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"incomplete\""));
}
