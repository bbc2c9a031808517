use std::path::Path;

use chronoflow_cli::manifest::{Manifest, Stage, Status};
use chronoflow_cli::pipeline::{run_pipeline, stages_through};
use chronoflow_cli::plot::{emit_plots, PlotKind};
use chronoflow_cli::tables::Table;
use chronoflow_cli::RunConfig;

/// Coarse grids and a short schedule so the whole pipeline runs in seconds.
fn small(extra: &[&str]) -> RunConfig {
    let mut o: Vec<String> = [
        "model.clock_grid.n=64",
        "model.system_grid.n=96",
        "propagation.n_steps=400",
        "propagation.snapshot_stride=100",
        "trajectories.clock_count=4",
        "trajectories.bohmian_count=40",
        "trajectories.l1_block=4",
        "residuals.every=2",
        "output.render_times=[0, 20, 40]",
        "output.max_pixels=48",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::with_overrides(&o).unwrap()
}

fn names(m: &Manifest) -> Vec<&str> {
    m.artifacts.iter().map(|a| a.name.as_str()).collect()
}

#[test]
fn full_run_lists_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&small(&[]), dir.path(), &stages_through(Stage::Plot)).unwrap();
    assert_eq!(m.status, Status::Complete);
    assert_eq!(m.stages, Stage::ALL.to_vec());
    assert_eq!(m.derived.n_steps, Some(400));
    assert_eq!(m.derived.snapshot_count, Some(5));
    let dt = m.derived.dt.unwrap();
    assert!(dt > 0.0 && dt <= 0.1);
    let n = names(&m);
    for want in ["bo_surfaces", "observables", "adiabaticity", "residuals", "trajectories_clock", "trajectories_bohmian"] {
        assert!(n.contains(&want), "{want} missing from {n:?}");
    }
    assert_eq!(n.iter().filter(|s| s.starts_with("plot_panel_")).count(), 3);
    assert!(n.contains(&"plot_potentials") && n.contains(&"plot_residuals") && n.contains(&"plot_trajectories"));
    m.verify(dir.path()).unwrap();
    // the manifest on disk matches the returned one and lists only existing files
    let back = Manifest::read(dir.path()).unwrap();
    assert_eq!(back, m);
    for a in &m.artifacts {
        assert!(dir.path().join(&a.path).is_file(), "{}", a.name);
    }
    // CSV headers carry units
    let t = Table::read(&dir.path().join("observables.csv")).unwrap();
    assert_eq!(t.header[0], "t [au]");
    assert!(m.get_metric("norm_drift_max").unwrap() < 1e-7);
}

#[test]
fn zero_steps_gives_initial_state_only() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&small(&["propagation.n_steps=0"]), dir.path(), &stages_through(Stage::Plot)).unwrap();
    assert_eq!(m.status, Status::Complete);
    let n = names(&m);
    assert!(n.contains(&"bo_surfaces"));
    assert!(n.contains(&"snapshot_0000"));
    assert!(n.contains(&"factorized_0000"));
    assert!(!n.iter().any(|s| s.starts_with("trajectories")));
    let t = Table::read(&dir.path().join("residuals.csv")).unwrap();
    assert!(t.f64s("t").unwrap().iter().all(|&x| x == 0.0));
    assert!(!t.rows.is_empty());
    assert_eq!(m.derived.t_end, Some(0.0));
}

#[test]
fn rerun_reproduces_checksums() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small(&[]);
    let ma = run_pipeline(&cfg, a.path(), &stages_through(Stage::Plot)).unwrap();
    let mb = run_pipeline(&cfg, b.path(), &stages_through(Stage::Plot)).unwrap();
    assert_eq!(ma.checksums(), mb.checksums());
    assert_eq!(
        std::fs::read(a.path().join("manifest.json")).unwrap(),
        std::fs::read(b.path().join("manifest.json")).unwrap()
    );
}

#[test]
fn failing_stage_leaves_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(&small(&["factorization.rho_floor=1000"]), dir.path(), &stages_through(Stage::Plot)).unwrap_err();
    assert_eq!(err.stage, Stage::Factorize);
    assert!(err.to_string().starts_with("[factorize]"));
    let m = Manifest::read(dir.path()).unwrap();
    assert_eq!(m.status, Status::Incomplete);
    assert_eq!(m.failure.as_ref().unwrap().stage, Stage::Factorize);
    assert_eq!(m.stages, vec![Stage::Bo, Stage::Propagate]);
    assert!(names(&m).contains(&"observables"));
    m.verify(dir.path()).unwrap();
}

#[test]
fn subcommand_stages_stop_early() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&small(&[]), dir.path(), &stages_through(Stage::Bo)).unwrap();
    assert_eq!(m.stages, vec![Stage::Bo]);
    assert!(m.derived.dt.is_none());
    assert_eq!(PlotKind::available(&m), vec![PlotKind::Potentials]);
}

#[test]
fn plots_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut m = run_pipeline(&small(&[]), out, &stages_through(Stage::Trajectories)).unwrap();
    assert!(!m.artifacts.iter().any(|a| a.stage == Stage::Plot));
    let written = emit_plots(&mut m, out, &[PlotKind::Potentials, PlotKind::Snapshots]).unwrap();
    assert_eq!(written, vec!["plot_potentials", "plot_panel_0", "plot_panel_1", "plot_panel_2"]);
    let svg = std::fs::read_to_string(out.join("plots/panel_1.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<path") && svg.contains("<polyline"));

    // residuals were not computed in this run
    let err = emit_plots(&mut m, out, &[PlotKind::Residuals]).unwrap_err();
    assert!(format!("{err:#}").contains("residuals"));

    // an artifact deleted after the run is reported by name
    std::fs::remove_file(out.join("bo_surfaces.csv")).unwrap();
    let err = emit_plots(&mut m, out, &[PlotKind::Potentials]).unwrap_err();
    assert!(format!("{err:#}").contains("bo_surfaces"));
}

#[test]
fn empty_manifest_emits_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::new(RunConfig::default());
    let kinds = PlotKind::available(&m);
    assert!(kinds.is_empty());
    assert!(emit_plots(&mut m, dir.path(), &kinds).unwrap().is_empty());
    assert!(!Path::new(&dir.path().join("plots")).exists());
}
