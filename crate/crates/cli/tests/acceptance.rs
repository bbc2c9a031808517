//! Acceptance checks for the library and the pipeline, one line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 3 8`.
#![allow(non_snake_case)]

use std::f64::consts::PI;
use std::time::Instant;

use chronoflow::factorization::{factorize, FactorizedState, GaugePhase, DEFAULT_RHO_FLOOR};
use chronoflow::hydro::{cdce_residual, cdhje_residual, cdse_residual, tdqhd_residuals, Region, ResidualReport};
use chronoflow::model::{bo_solve, initial_state, JointState, ModelParams, PotentialKind};
use chronoflow::numgrid::{trapezoid, Axis, Field2D, Grid1D, ProductGrid2D};
use chronoflow::propagator::{run, run_until, Hamiltonian, PropagationSchedule, SnapshotStore, SplitOperator, StopRule};
use chronoflow::trajectories::{
    binned_l1, bohmian_trajectories, clock_trajectories, first_crossing, sample_initial, sample_significant, IntegrationSettings,
    TrajectoryMode, TrajectorySet,
};
use chronoflow_cli::manifest::{Manifest, Status};
use chronoflow_cli::pipeline::{refinement_study, resolve_dt, run_pipeline, stages_through, BO_TABLE};
use chronoflow_cli::tables::Table;
use chronoflow_cli::{RunConfig, Stage};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

/// Criteria known not to hold for the default model; they still run and report.
const OPEN: &[usize] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Outputs shared between criteria, computed on first use.
#[derive(Default)]
struct Shared {
    pipeline: Option<(tempfile::TempDir, Manifest)>,
    model: Option<(Hamiltonian, SnapshotStore)>,
}

impl Shared {
    fn pipeline(&mut self) -> &(tempfile::TempDir, Manifest) {
        self.pipeline.get_or_insert_with(|| {
            let dir = tempfile::tempdir().unwrap();
            let m = run_pipeline(&RunConfig::default(), dir.path(), &stages_through(Stage::Plot)).unwrap();
            (dir, m)
        })
    }

    /// The default model run with every snapshot kept in memory.
    fn model(&mut self) -> &(Hamiltonian, SnapshotStore) {
        self.model.get_or_insert_with(|| {
            let cfg = RunConfig::default();
            let p = &cfg.model;
            let ham = Hamiltonian::from_params(p).unwrap();
            let bo = bo_solve(p, 1).unwrap();
            let st = initial_state(p, &bo).unwrap();
            let dt = resolve_dt(&cfg, &ham, &st);
            let pc = &cfg.propagation;
            let stop = StopRule { marginal_peak_below: pc.stop_marginal_peak_below, t_max: pc.t_max };
            let store = run_until(&st, dt, pc.snapshot_stride, &stop, &ham).unwrap();
            (ham, store)
        })
    }
}

fn grid1(min: f64, max: f64, n: usize) -> Grid1D {
    Grid1D::new(min, max, n).unwrap()
}

fn gaussian(grid: ProductGrid2D, center: (f64, f64), width: (f64, f64), k: (f64, f64)) -> JointState {
    let psi = Field2D::from_fn(grid, |R, r| {
        let a = -(R - center.0).powi(2) / (4.0 * width.0 * width.0) - (r - center.1).powi(2) / (4.0 * width.1 * width.1);
        Complex64::from_polar(a.exp(), k.0 * R + k.1 * r)
    });
    let mut st = JointState { psi, t: 0.0 };
    st.normalize().unwrap();
    st
}

fn l2_distance(a: &JointState, b: &JointState) -> f64 {
    let area = a.psi.grid.cell_area();
    (a.psi.values.iter().zip(b.psi.values.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * area).sqrt()
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn criterion_1(sh: &mut Shared) -> Outcome {
    // free spreading: σ(t) = σ0 √(1 + (t/2σ0²)²) doubles at t = 2√3 σ0²
    let s0 = 1.0;
    let grid = ProductGrid2D::new(grid1(-4.0, 4.0, 16), grid1(-60.0, 60.0, 1024)).unwrap();
    let ham = Hamiltonian::new(grid, 1e9, 1.0, Array2::zeros(grid.shape())).unwrap();
    let st = gaussian(grid, (0.0, 0.0), (0.5, s0), (0.0, 0.0));
    let t_double = 2.0 * 3f64.sqrt() * s0 * s0;
    let n = 500;
    let store = run(&st, &PropagationSchedule { dt: t_double / n as f64, n_steps: n, snapshot_stride: n }, &ham).unwrap();
    let end = store.last();
    let h = grid.system.spacing();
    let dens: Vec<f64> = (0..grid.system.n).map(|j| end.psi.values.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>()).collect();
    let r = grid.system.points();
    let m0 = trapezoid(&dens, h);
    let m1 = trapezoid(&dens.iter().zip(r.iter()).map(|(d, r)| d * r).collect::<Vec<_>>(), h) / m0;
    let m2 = trapezoid(&dens.iter().zip(r.iter()).map(|(d, r)| d * r * r).collect::<Vec<_>>(), h) / m0;
    let width = (m2 - m1 * m1).sqrt();
    let width_err = (width - 2.0 * s0).abs() / (2.0 * s0);

    // Strang splitting: global error O(dt²), so halving dt divides it by 4
    let grid = ProductGrid2D::new(grid1(-6.0, 6.0, 48), grid1(-8.0, 8.0, 64)).unwrap();
    let pot = Field2D::from_fn(grid, |R, r| 0.1 * R * R + 0.3 * (r - 0.2 * R).powi(2) + 0.05 * r.powi(3).sin()).values;
    let ham = Hamiltonian::new(grid, 3.0, 1.0, pot).unwrap();
    let st = gaussian(grid, (1.0, -0.5), (0.7, 0.9), (0.4, -0.3));
    let t_end = 2.0;
    let evolve = |dt: f64| {
        let prop = SplitOperator::new(&ham, dt).unwrap();
        let mut s = st.clone();
        for _ in 0..(t_end / dt).round() as usize {
            prop.step(&mut s);
        }
        s
    };
    let reference = evolve(0.01 / 64.0);
    let (e1, e2) = (l2_distance(&evolve(0.02), &reference), l2_distance(&evolve(0.01), &reference));
    let factor = e1 / e2;

    let (_, m) = sh.pipeline();
    let drift = m.get_metric("norm_drift_max").unwrap_or(f64::NAN);
    outcome(
        width_err <= 1e-6 && (3.5..=4.5).contains(&factor) && drift <= 1e-9,
        format!(
            "free width at doubling time rel err {width_err:.1e} (<= 1e-6); Strang factor {factor:.3} (in [3.5, 4.5]); model norm drift {drift:.1e} (<= 1e-9)"
        ),
    )
}

fn box_params(n: usize) -> ModelParams {
    ModelParams {
        potential: PotentialKind::Free,
        clock_grid: Grid1D { min: 0.0, max: 1.0, n: 8 },
        system_grid: Grid1D { min: 0.0, max: 1.0, n },
        ..ModelParams::default()
    }
}

fn harmonic_params(n: usize) -> ModelParams {
    ModelParams {
        potential: PotentialKind::Harmonic { omega_clock: 0.0, omega_system: 1.0, center_clock: 0.0 },
        clock_grid: Grid1D { min: -1.0, max: 1.0, n: 8 },
        system_grid: Grid1D { min: -10.0, max: 10.0, n },
        ..ModelParams::default()
    }
}

/// Observed orders of the lowest `k` levels over three node counts `n, 2n−1, 4n−3`.
fn spectrum_orders(params: impl Fn(usize) -> ModelParams, n: usize, k: usize, exact: impl Fn(usize) -> f64) -> Vec<f64> {
    let errs: Vec<Vec<f64>> = [n, 2 * n - 1, 4 * n - 3]
        .iter()
        .map(|&m| {
            let bo = bo_solve(&params(m), k).unwrap();
            (0..k).map(|s| (bo.epsilon[s][0] - exact(s)).abs()).collect()
        })
        .collect();
    (0..k).flat_map(|s| [order(errs[0][s], errs[1][s]), order(errs[1][s], errs[2][s])]).collect()
}

fn criterion_2(sh: &mut Shared) -> Outcome {
    let box_orders = spectrum_orders(box_params, 65, 3, |s| ((s + 1) as f64 * PI).powi(2) / 2.0);
    let osc_orders = spectrum_orders(harmonic_params, 101, 3, |s| s as f64 + 0.5);
    let all: Vec<f64> = box_orders.iter().chain(&osc_orders).copied().collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let (dir, m) = sh.pipeline();
    let gap = m.get_metric("bo_min_gap").unwrap_or(f64::NAN);
    let t = Table::read(&dir.path().join(format!("{BO_TABLE}.csv"))).unwrap();
    let R = t.f64s("R").unwrap();
    let e0 = t.f64s("epsilon_0").unwrap();
    // barrier: highest ε0 within |R| < 1.5; wells: lowest ε0 on either side of it
    let (ib, barrier) = (0..R.len()).filter(|&i| R[i].abs() < 1.5).map(|i| (i, e0[i])).fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let well = |range: std::ops::Range<usize>| range.filter(|&i| R[i].abs() < 7.0).map(|i| e0[i]).fold(f64::INFINITY, f64::min);
    let (left, right) = (well(0..ib), well(ib + 1..R.len()));
    let depth = barrier - left.max(right);
    let plotted = m.artifact("plot_potentials").is_some();
    outcome(
        lo >= 1.8 && hi <= 2.2 && gap > 0.0 && depth > 0.0 && R[ib].abs() < 1.0 && plotted,
        format!(
            "box and oscillator level orders in [{lo:.3}, {hi:.3}] (in [1.8, 2.2]); min gap {gap:.4} Ha (> 0); eps_0 barrier at R = {:.2}, {depth:.4} Ha above the higher well; potentials plot {}",
            R[ib],
            if plotted { "emitted" } else { "missing" }
        ),
    )
}

/// Eigenstate of a tilted harmonic channel with free motion along it; separable in
/// mass-scaled rotated coordinates with a nontrivial phase.
fn tilted_eigenstate(n: usize) -> (JointState, Array2<Complex64>, Hamiltonian) {
    let g = ProductGrid2D::new(grid1(-2.0, 2.0, n), grid1(-7.0, 7.0, 2 * n - 1)).unwrap();
    let (M, omega, alpha, k) = (2.0f64, 1.0, 0.3f64, 1.2);
    let sM = M.sqrt();
    let u = |R: f64, r: f64| sM * R * alpha.cos() + r * alpha.sin();
    let v = |R: f64, r: f64| -sM * R * alpha.sin() + r * alpha.cos();
    let psi = Field2D::from_fn(g, |R, r| Complex64::from_polar((-omega * v(R, r).powi(2) / 2.0).exp(), k * u(R, r)));
    let pot = Field2D::from_fn(g, |R, r| 0.5 * omega * omega * v(R, r).powi(2)).values;
    let energy = k * k / 2.0 + omega / 2.0;
    let dpsi = psi.values.mapv(|z| Complex64::new(0.0, -energy) * z);
    (JointState { psi, t: 0.0 }, dpsi, Hamiltonian::new(g, M, 1.0, pot).unwrap())
}

/// RMS of a residual field over finite nodes at least 0.5 from the clock edges
/// of the oracle grid, which spans [−2, 2].
fn interior_rms(rep: &ResidualReport) -> f64 {
    let (sum, count) = rep
        .field
        .indexed_iter()
        .filter(|((i, _), v)| v.is_finite() && (-2.0 + *i as f64 * rep.spacing_clock).abs() <= 1.5)
        .fold((0.0, 0usize), |(s, c), (_, v)| (s + v * v, c + 1));
    (sum / count as f64).sqrt()
}

fn criterion_3() -> Outcome {
    let region = Region::default();
    let levels = [65, 129, 257];
    let names = ["tdhje", "tdce", "cdse", "cdhje", "cdce"];
    let reports: Vec<Vec<ResidualReport>> = levels
        .iter()
        .map(|&n| {
            let (st, dpsi, ham) = tilted_eigenstate(n);
            let fs = factorize(&st, &ham, DEFAULT_RHO_FLOOR).unwrap();
            let td = tdqhd_residuals(&st, &dpsi, &ham, &region).unwrap();
            vec![
                td.tdhje,
                td.tdce,
                cdse_residual(&fs, &ham, None, &region).unwrap(),
                cdhje_residual(&fs, &ham, None, &region).unwrap(),
                cdce_residual(&fs, None, &region).unwrap(),
            ]
        })
        .collect();
    let mut parts = Vec::new();
    let (mut worst, mut worst_inner) = (f64::INFINITY, f64::INFINITY);
    for (e, name) in names.iter().enumerate() {
        let rms: Vec<f64> = reports.iter().map(|r| r[e].rms).collect();
        let inner: Vec<f64> = reports.iter().map(|r| interior_rms(&r[e])).collect();
        let (o1, o2) = (order(rms[0], rms[1]), order(rms[1], rms[2]));
        worst = worst.min(o1).min(o2);
        worst_inner = worst_inner.min(order(inner[0], inner[1])).min(order(inner[1], inner[2]));
        parts.push(format!("{name} {:.1e}->{:.1e} ({o1:.2}, {o2:.2})", rms[0], rms[2]));
    }
    outcome(
        worst >= 3.5,
        format!("min order {worst:.2} (>= 3.5), {worst_inner:.2} away from the clock edges; {}", parts.join("; ")),
    )
}

fn criterion_4(sh: &mut Shared) -> Outcome {
    let cfg = RunConfig::default();
    let r = &cfg.residuals;
    let equations: Vec<String> = ["cdse", "cdhje", "cdce"].iter().map(|s| s.to_string()).collect();
    // same dt on every grid, fine enough that splitting error stays below the spatial error
    let dt = r.refinement_dt.unwrap_or(sh.model().1.dt / 2.0);
    let study = refinement_study(&cfg.model, &[1.0, 1.5, 2.0], &r.refinement_times, dt, cfg.factorization.rho_floor, &equations, r.form, &r.region).unwrap();
    let fmt = |eq: &str| {
        study
            .times()
            .iter()
            .map(|&t| {
                let s: Vec<String> = study.series(eq, t).iter().map(|(_, v)| format!("{v:.2e}")).collect();
                format!("t={t}: {}", s.join(" > "))
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    // the stationary equation without the explicit time derivative, on the default grid
    let (ham, store) = sh.model();
    let stationary: Vec<f64> = r
        .refinement_times
        .iter()
        .map(|&t| {
            let snap = &store.snapshots[store.nearest(t)];
            let fs = factorize(snap, ham, cfg.factorization.rho_floor).unwrap();
            cdse_residual(&fs, ham, None, &r.region).unwrap().relative_rms
        })
        .collect();
    let cdse_fine = r.refinement_times.iter().flat_map(|&t| study.series("cdse", t).last().map(|x| x.1)).fold(0.0, f64::max);
    let small = stationary.iter().all(|&v| v <= 0.05);
    outcome(
        study.monotone("cdhje") && study.monotone("cdce") && small,
        format!(
            "grids x1, x1.5, x2 at dt {dt}; cdhje {}; cdce {}; cdse {}; finest cdse {cdse_fine:.1e}; stationary cdse without d/dt on the default grid {:?} (<= 0.05)",
            fmt("cdhje"),
            fmt("cdce"),
            fmt("cdse"),
            stationary.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_5(sh: &mut Shared) -> Outcome {
    let (_, m) = sh.pipeline();
    let sup = m.get_metric("adiabatic_sup_l1").unwrap_or(f64::NAN);
    let t = m.get_metric("adiabatic_sup_t").unwrap_or(f64::NAN);
    let R = m.get_metric("adiabatic_sup_R").unwrap_or(f64::NAN);
    outcome(sup <= 0.05, format!("sup L1 distance to the BO ground-state density {sup:.4} at t = {t}, R = {R:.3} (<= 0.05)"))
}

fn criterion_6(sh: &mut Shared) -> Outcome {
    let (ham, store) = sh.model();
    let seeds = sample_initial(&store.snapshots[0], 10_000, 7).unwrap();
    let set = bohmian_trajectories(&store.snapshots, ham, &seeds, &IntegrationSettings::default()).unwrap();
    let times = [300.0, 600.0, store.last().t];
    let l1: Vec<f64> = times.iter().map(|&t| binned_l1(&set, &store.snapshots[store.nearest(t)], 16).unwrap()).collect();

    // two colliding packets in the system coordinate; the clock factor is inert
    let g = ProductGrid2D::new(grid1(-2.0, 2.0, 9), grid1(-30.0, 30.0, 512)).unwrap();
    let ham1 = Hamiltonian::new(g, 1e9, 1.0, Array2::zeros(g.shape())).unwrap();
    let psi = Field2D::from_fn(g, |R, r| {
        let a = Complex64::from_polar((-(r + 5.0).powi(2) / 2.0).exp(), 1.5 * r);
        let b = Complex64::from_polar((-(r - 5.0).powi(2) / 2.0).exp(), -1.5 * r);
        (a + b) * (-R * R / 2.0).exp()
    });
    let mut st = JointState { psi, t: 0.0 };
    st.normalize().unwrap();
    let store1 = run(&st, &PropagationSchedule { dt: 0.01, n_steps: 600, snapshot_stride: 5 }, &ham1).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let seeds1: Vec<_> = sample_initial(&st, 200, 4).unwrap().into_iter().map(|mut s| {
        s.R0 = rng.gen_range(-0.5..0.5);
        s
    }).collect();
    let set1 = bohmian_trajectories(&store1.snapshots, &ham1, &seeds1, &IntegrationSettings { substeps: 4, ..Default::default() }).unwrap();
    let crossing = first_crossing(&set1, Axis::System);
    let pairs = seeds1.len() * (seeds1.len() - 1) / 2;
    outcome(
        l1.iter().all(|&v| v <= 0.05) && crossing.is_none() && set1.terminated_count() == 0,
        format!(
            "10^4 trajectories, 16x16-cell blocks: L1 {} at t = {:?} (<= 0.05); 1D non-crossing over {pairs} pairs through t = {}: {}",
            l1.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", "),
            times,
            store1.last().t,
            match crossing {
                None => "holds".to_string(),
                Some(t) => format!("violated at t = {t}"),
            }
        ),
    )
}

fn criterion_7(sh: &mut Shared) -> Outcome {
    let (_, m) = sh.pipeline();
    let mut pass = true;
    let mut parts = Vec::new();
    for mode in [TrajectoryMode::ClockFull, TrajectoryMode::ClockSimplified] {
        let l = mode.label();
        let follow = m.get_metric(&format!("{l}_follow_fraction")).unwrap_or(f64::NAN);
        let (a, b) = (m.get_metric(&format!("{l}_mean_R_start")).unwrap_or(f64::NAN), m.get_metric(&format!("{l}_mean_R_end")).unwrap_or(f64::NAN));
        pass &= follow >= 0.95 && b < 0.0 && b < a;
        parts.push(format!("{l}: follow fraction {follow:.3} (>= 0.95), mean R {a:.2} -> {b:.2} (< 0)"));
    }
    outcome(pass, parts.join("; "))
}

/// Random smooth phase: a few low Fourier modes across the clock domain.
fn random_gauge(grid: &ProductGrid2D, rng: &mut impl Rng) -> GaugePhase {
    let c = &grid.clock;
    let modes: Vec<(f64, f64)> = (1..=4).map(|m| (rng.gen_range(-2.0..2.0) / m as f64, rng.gen_range(0.0..2.0 * PI))).collect();
    let slope = rng.gen_range(-1.0..1.0);
    let theta = Array1::from_shape_fn(c.n, |i| {
        let x = (c.point(i) - c.min) / c.length();
        slope * c.point(i) + modes.iter().enumerate().map(|(m, (a, p))| a * ((m + 1) as f64 * PI * x + p).sin()).sum::<f64>()
    });
    GaugePhase::from_values(grid, theta).unwrap()
}

fn max_field_diff(a: &ResidualReport, b: &ResidualReport) -> f64 {
    a.field.iter().zip(b.field.iter()).filter(|(x, _)| x.is_finite()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_trajectory_diff(a: &TrajectorySet, b: &TrajectorySet) -> f64 {
    let mut d: f64 = 0.0;
    for (x, y) in a.trajectories.iter().zip(&b.trajectories) {
        if x.samples.len() != y.samples.len() {
            return f64::INFINITY;
        }
        for (s, t) in x.samples.iter().zip(&y.samples) {
            d = d.max((s.R - t.R).abs()).max((s.r - t.r).abs());
            if s.S.is_finite() || t.S.is_finite() {
                d = d.max((s.S - t.S).abs());
            }
            if s.clamped != t.clamped || s.terminated != t.terminated {
                return f64::INFINITY;
            }
        }
    }
    d
}

fn criterion_8(sh: &mut Shared) -> Outcome {
    let (ham, store) = sh.model();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let region = Region::default();

    let snap = &store.snapshots[store.nearest(600.0)];
    let fs = factorize(snap, ham, DEFAULT_RHO_FLOOR).unwrap();
    let gt = fs.gauge_transform(&random_gauge(&fs.grid, &mut rng)).unwrap();
    let dpsi = ham.time_derivative(&snap.psi.values);
    let mut cdce = 0.0f64;
    for d in [None, Some(&dpsi)] {
        cdce = cdce.max(max_field_diff(&cdce_residual(&fs, d, &region).unwrap(), &cdce_residual(&gt, d, &region).unwrap()));
    }
    let (a, b) = (fs.reconstruct(), gt.reconstruct());
    let recon = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);

    // a different random gauge at every snapshot over the first 100 time units
    let window = &store.snapshots[..=store.nearest(100.0)];
    let plain: Vec<FactorizedState> = window.iter().map(|s| factorize(s, ham, DEFAULT_RHO_FLOOR).unwrap()).collect();
    let gauged: Vec<FactorizedState> = plain.iter().map(|f| f.gauge_transform(&random_gauge(&f.grid, &mut rng)).unwrap()).collect();
    let seeds = sample_significant(&window[0], 20, 0.1, 9).unwrap();
    let settings = IntegrationSettings::default();
    let mut traj = 0.0f64;
    for mode in [TrajectoryMode::ClockFull, TrajectoryMode::ClockSimplified] {
        let x = clock_trajectories(window, &plain, ham, &seeds, mode, &settings).unwrap();
        let y = clock_trajectories(window, &gauged, ham, &seeds, mode, &settings).unwrap();
        traj = traj.max(max_trajectory_diff(&x, &y));
    }
    outcome(
        cdce <= 1e-8 && recon <= 1e-8 && traj <= 1e-8,
        format!("max change under a random smooth gauge: cdce residual {cdce:.1e}, reconstruction {recon:.1e}, clock trajectories {traj:.1e} (each <= 1e-8)"),
    )
}

fn criterion_9(sh: &mut Shared) -> Outcome {
    let (dir_a, a) = sh.pipeline();
    let dir_b = tempfile::tempdir().unwrap();
    let b = run_pipeline(&RunConfig::default(), dir_b.path(), &stages_through(Stage::Plot)).unwrap();
    let same_manifest = std::fs::read(dir_a.path().join("manifest.json")).unwrap() == std::fs::read(dir_b.path().join("manifest.json")).unwrap();
    let (ca, cb) = (a.checksums(), b.checksums());
    let mismatched: Vec<&String> = ca.keys().filter(|k| ca.get(*k) != cb.get(*k)).collect();
    let verified = a.verify(dir_a.path()).is_ok() && b.verify(dir_b.path()).is_ok();
    outcome(
        mismatched.is_empty() && ca.len() == cb.len() && same_manifest && verified && a.status == Status::Complete,
        format!("{} artifacts rerun, {} checksum mismatches {:?}; manifests identical: {same_manifest}", ca.len(), mismatched.len(), mismatched),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let mut sh = Shared::default();
    let checks: [(usize, &str, &dyn Fn(&mut Shared) -> Outcome); 9] = [
        (1, "propagator", &criterion_1),
        (2, "BO solver", &criterion_2),
        (3, "oracle identities", &|_| criterion_3()),
        (4, "model residual refinement", &criterion_4),
        (5, "adiabaticity", &criterion_5),
        (6, "Bohmian transport", &criterion_6),
        (7, "clock trajectories", &criterion_7),
        (8, "gauge invariance", &criterion_8),
        (9, "determinism", &criterion_9),
    ];
    let mut unexpected = Vec::new();
    for (k, name, check) in checks {
        if !wanted(k) {
            continue;
        }
        let start = Instant::now();
        let o = check(&mut sh);
        let tag = match (o.pass, OPEN.contains(&k)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (open)",
            (false, false) => {
                unexpected.push(k);
                "FAIL"
            }
        };
        println!("criterion {k} [{name}] {tag}: {} [{:.0} s]", o.detail, start.elapsed().as_secs_f64());
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
