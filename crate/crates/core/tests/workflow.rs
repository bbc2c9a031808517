#![allow(non_snake_case)]

use std::fs::File;
use std::io::{BufReader, BufWriter};

use chronoflow::factorization::{factorize, DEFAULT_RHO_FLOOR};
use chronoflow::hydro::{cdce_residual, cdhje_residual, Region};
use chronoflow::io::{read_factorized, read_snapshot, write_factorized, write_snapshot, FactorizedRecord};
use chronoflow::model::{bo_solve, initial_state, ModelParams};
use chronoflow::numgrid::Grid1D;
use chronoflow::propagator::{run, Hamiltonian, PropagationSchedule};
use chronoflow::trajectories::{bohmian_trajectories, clock_trajectories_streaming, sample_initial, IntegrationSettings, TrajectoryMode};

fn coarse_model() -> ModelParams {
    ModelParams {
        clock_grid: Grid1D { min: -9.0, max: 9.0, n: 64 },
        system_grid: Grid1D { min: -26.0, max: 26.0, n: 128 },
        ..ModelParams::default()
    }
}

#[test]
fn snapshots_survive_the_disk() {
    let p = coarse_model();
    let bo = bo_solve(&p, 1).unwrap();
    let ham = Hamiltonian::from_params(&p).unwrap();
    let st = initial_state(&p, &bo).unwrap();
    let store = run(&st, &PropagationSchedule { dt: 0.1, n_steps: 100, snapshot_stride: 50 }, &ham).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let path = dir.path().join("s.bin");
    write_snapshot(&mut BufWriter::new(File::create(&path).unwrap()), store.last()).unwrap();
    let back = read_snapshot(&mut BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(back.t, store.last().t);
    assert_eq!(back.psi, store.last().psi);

    let fs = factorize(&back, &ham, DEFAULT_RHO_FLOOR).unwrap();
    let rec = FactorizedRecord::from_state(&fs);
    let path = dir.path().join("f.bin");
    write_factorized(&mut BufWriter::new(File::create(&path).unwrap()), &rec).unwrap();
    let rec2 = read_factorized(&mut BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(rec2.mask, rec.mask);
    assert_eq!(rec2.t, rec.t);
    for (a, b) in rec.phi.iter().zip(rec2.phi.iter()) {
        assert!(a == b || (a.re.is_nan() && b.re.is_nan()));
    }
}

#[test]
fn short_model_run_is_consistent() {
    let p = coarse_model();
    let bo = bo_solve(&p, 2).unwrap();
    let ham = Hamiltonian::from_params(&p).unwrap();
    let st = initial_state(&p, &bo).unwrap();
    let store = run(&st, &PropagationSchedule { dt: 0.1, n_steps: 200, snapshot_stride: 20 }, &ham).unwrap();
    assert_eq!(store.snapshots.len(), 11);
    for o in &store.observables {
        assert!((o.norm - 1.0).abs() < 1e-9);
    }
    // the nucleus starts at rest and accelerates towards the barrier
    let first = store.observables.first().unwrap();
    let last = store.observables.last().unwrap();
    assert!(last.mean_R < first.mean_R);

    let fs = factorize(store.last(), &ham, DEFAULT_RHO_FLOOR).unwrap();
    assert!(fs.partial_normalization_error() < 1e-8);
    let region = Region::default();
    let dpsi = ham.time_derivative(&store.last().psi.values);
    for rep in [cdce_residual(&fs, Some(&dpsi), &region).unwrap(), cdhje_residual(&fs, &ham, Some(&dpsi), &region).unwrap()] {
        assert!(rep.region_size > 0);
        assert!(rep.relative_rms.is_finite() && rep.relative_rms < 1.0, "{} {}", rep.equation, rep.relative_rms);
    }

    // trajectories are reproducible for a fixed seed
    let seeds = sample_initial(&st, 50, 3).unwrap();
    let settings = IntegrationSettings::default();
    let a = bohmian_trajectories(&store.snapshots, &ham, &seeds, &settings).unwrap();
    let b = bohmian_trajectories(&store.snapshots, &ham, &seeds, &settings).unwrap();
    assert_eq!(a, b);
    let c = clock_trajectories_streaming(&store.snapshots, &ham, DEFAULT_RHO_FLOOR, &seeds[..5], TrajectoryMode::ClockFull, &settings).unwrap();
    assert_eq!(c.trajectories.len(), 5);
    assert!(c.trajectories.iter().all(|t| t.samples.len() == store.snapshots.len()));
}
