//! Stage runner: Born-Oppenheimer surfaces, propagation, factorization,
#![allow(non_snake_case)]
//! residuals, trajectories and plots, each writing its artifacts as it goes.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chronoflow::factorization::{factorize, FactorizedState};
use chronoflow::hydro::{
    cdce_residual, cdce_secondary_residual, cdhje_residual, cdse_residual, tdqhd_residuals, Form, Region, ResidualReport,
};
use chronoflow::io::{write_factorized, write_snapshot, FactorizedRecord};
use chronoflow::model::{bo_solve, initial_state, BoSurface, JointState, ModelParams};
use chronoflow::numgrid::Grid1D;
use chronoflow::propagator::{default_dt, run, run_until, Hamiltonian, PropagationSchedule, SnapshotStore, StopRule};
use chronoflow::trajectories::{
    binned_l1, bohmian_trajectories, clock_trajectories_streaming, conditional_following, endpoint_deviation,
    mean_clock_path, sample_initial, sample_significant, TrajectorySet,
};
use serde::Serialize;

use crate::config::{RunConfig, Seeding};
use crate::manifest::{ArtifactKind, Manifest, RenderTime, Stage, Status, StageFailure};
use crate::plot::{emit_plots, PlotKind};
use crate::tables::{num, write_csv};

pub const BO_TABLE: &str = "bo_surfaces";
pub const OBSERVABLES_TABLE: &str = "observables";
pub const ADIABATIC_TABLE: &str = "adiabaticity";
pub const RESIDUAL_TABLE: &str = "residuals";
pub const REFINEMENT_TABLE: &str = "residual_refinement";
pub const CLOCK_TRAJECTORY_TABLE: &str = "trajectories_clock";
pub const BOHMIAN_TRAJECTORY_TABLE: &str = "trajectories_bohmian";

/// Name of the binary snapshot artifact for stored snapshot `index`.
pub fn snapshot_artifact(index: usize) -> String {
    format!("snapshot_{index:04}")
}

pub fn factorized_artifact(index: usize) -> String {
    format!("factorized_{index:04}")
}

/// A stage failure, tagged with the stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

/// Stages a subcommand runs, in pipeline order.
pub fn stages_through(last: Stage) -> Vec<Stage> {
    match last {
        Stage::Bo => vec![Stage::Bo],
        Stage::Propagate => vec![Stage::Bo, Stage::Propagate],
        Stage::Factorize => vec![Stage::Bo, Stage::Propagate, Stage::Factorize],
        Stage::Residuals => vec![Stage::Bo, Stage::Propagate, Stage::Residuals],
        Stage::Trajectories => vec![Stage::Bo, Stage::Propagate, Stage::Trajectories],
        Stage::Plot => Stage::ALL.to_vec(),
    }
}

struct RunState {
    out: PathBuf,
    cfg: RunConfig,
    ham: Option<Hamiltonian>,
    bo: Option<BoSurface>,
    state0: Option<JointState>,
    store: Option<SnapshotStore>,
}

impl RunState {
    fn ham(&self) -> &Hamiltonian {
        self.ham.as_ref().expect("bo stage runs first")
    }

    fn store(&self) -> anyhow::Result<&SnapshotStore> {
        self.store.as_ref().ok_or_else(|| anyhow!("no propagated snapshots"))
    }

    /// Stored snapshot indices to write: the first one plus every render time.
    fn kept_indices(&self, m: &Manifest) -> Vec<usize> {
        let mut v: Vec<usize> = std::iter::once(0).chain(m.derived.render_times.iter().map(|r| r.index)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Runs `stages` with `out` as the output directory and writes the manifest,
/// also when a stage fails.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, stages: &[Stage]) -> Result<Manifest, StageError> {
    let setup = |e: anyhow::Error| StageError { stage: stages.first().copied().unwrap_or(Stage::Bo), source: e };
    cfg.validate().map_err(setup)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(setup)?;
    let mut m = Manifest::new(cfg.clone());
    let mut ctx =
        RunState { out: out.to_path_buf(), cfg: cfg.clone(), ham: None, bo: None, state0: None, store: None };
    let mut failure = None;
    for &stage in stages {
        log::info!("stage {stage}");
        let r = match stage {
            Stage::Bo => stage_bo(&mut ctx, &mut m),
            Stage::Propagate => stage_propagate(&mut ctx, &mut m),
            Stage::Factorize => stage_factorize(&ctx, &mut m),
            Stage::Residuals => stage_residuals(&ctx, &mut m),
            Stage::Trajectories => stage_trajectories(&ctx, &mut m),
            Stage::Plot => {
                let kinds = PlotKind::available(&m);
                emit_plots(&mut m, out, &kinds).map(|_| ())
            }
        };
        match r {
            Ok(()) => m.stages.push(stage),
            Err(e) => {
                failure = Some(StageError { stage, source: e });
                break;
            }
        }
    }
    m.status = if failure.is_none() { Status::Complete } else { Status::Incomplete };
    m.failure = failure.as_ref().map(|f| StageFailure { stage: f.stage, message: format!("{:#}", f.source) });
    let written = m.write(out);
    match (failure, written) {
        (Some(f), _) => Err(f),
        (None, Err(e)) => Err(StageError { stage: stages.last().copied().unwrap_or(Stage::Bo), source: e }),
        (None, Ok(())) => Ok(m),
    }
}

fn write_binary(out: &Path, rel: &str, f: impl FnOnce(&mut BufWriter<File>) -> chronoflow::Result<()>) -> anyhow::Result<PathBuf> {
    let rel = PathBuf::from(rel);
    if let Some(dir) = rel.parent() {
        std::fs::create_dir_all(out.join(dir))?;
    }
    let mut w = BufWriter::new(File::create(out.join(&rel)).with_context(|| format!("creating {}", rel.display()))?);
    f(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(rel)
}

fn csv_artifact(
    ctx: &RunState,
    m: &mut Manifest,
    stage: Stage,
    name: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> anyhow::Result<()> {
    let rel = PathBuf::from(format!("{name}.csv"));
    write_csv(&ctx.out.join(&rel), header, rows)?;
    m.register(&ctx.out, name, ArtifactKind::Csv, stage, &rel)
}

fn stage_bo(ctx: &mut RunState, m: &mut Manifest) -> anyhow::Result<()> {
    let p = &ctx.cfg.model;
    let bo = bo_solve(p, ctx.cfg.output.bo_states)?;
    let state0 = initial_state(p, &bo)?;
    let ham = Hamiltonian::from_params(p)?;
    let marginal = state0.marginal();
    let mut header: Vec<String> = vec!["R [a0]".into()];
    header.extend((0..bo.n_states).map(|n| format!("epsilon_{n} [Ha]")));
    header.push("chi0_density [1/a0]".into());
    let rows = (0..p.clock_grid.n).map(|i| {
        let mut row = vec![num(p.clock_grid.point(i))];
        row.extend(bo.epsilon.iter().map(|e| num(e[i])));
        row.push(num(marginal[i]));
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_artifact(ctx, m, Stage::Bo, BO_TABLE, &header, rows)?;
    if let Some((gap, at)) = bo.min_gap() {
        m.metric("bo_min_gap", gap);
        m.metric("bo_min_gap_R", at);
    }
    let name = snapshot_artifact(0);
    let rel = write_binary(&ctx.out, &format!("snapshots/{name}.bin"), |w| write_snapshot(w, &state0))?;
    m.register(&ctx.out, &name, ArtifactKind::Snapshot, Stage::Bo, &rel)?;
    ctx.bo = Some(bo);
    ctx.state0 = Some(state0);
    ctx.ham = Some(ham);
    Ok(())
}

/// Time step used for `cfg`: the configured one or the kinetic-band rule.
pub fn resolve_dt(cfg: &RunConfig, ham: &Hamiltonian, state0: &JointState) -> f64 {
    let p = &cfg.propagation;
    p.dt.unwrap_or_else(|| default_dt(ham, &state0.psi.values, p.band_threshold, p.dt_max))
}

fn stage_propagate(ctx: &mut RunState, m: &mut Manifest) -> anyhow::Result<()> {
    let p = &ctx.cfg.propagation;
    let state0 = ctx.state0.as_ref().expect("bo stage runs first");
    let dt = resolve_dt(&ctx.cfg, ctx.ham(), state0);
    let store = match p.n_steps {
        Some(n) => run(state0, &PropagationSchedule { dt, n_steps: n, snapshot_stride: p.snapshot_stride }, ctx.ham())?,
        None => run_until(
            state0,
            dt,
            p.snapshot_stride,
            &StopRule { marginal_peak_below: p.stop_marginal_peak_below, t_max: p.t_max },
            ctx.ham(),
        )?,
    };
    m.derived.dt = Some(dt);
    m.derived.n_steps = Some(store.n_steps);
    m.derived.t_end = Some(store.last().t);
    m.derived.snapshot_count = Some(store.snapshots.len());
    m.derived.render_times = ctx
        .cfg
        .output
        .render_times
        .iter()
        .map(|&t| {
            let index = store.nearest(t);
            RenderTime { requested: t, t: store.snapshots[index].t, index }
        })
        .collect();

    let header = ["t [au]", "norm", "energy [Ha]", "mean_R [a0]", "mean_r [a0]", "edge_density [1/a0^2]"];
    let rows = store
        .observables
        .iter()
        .map(|o| vec![num(o.t), num(o.norm), num(o.energy), num(o.mean_R), num(o.mean_r), num(o.edge_density)]);
    csv_artifact(ctx, m, Stage::Propagate, OBSERVABLES_TABLE, &header, rows)?;
    let drift = store.observables.iter().map(|o| (o.norm - 1.0).abs()).fold(0.0, f64::max);
    let e0 = store.observables[0].energy;
    let edrift = store.observables.iter().map(|o| (o.energy - e0).abs()).fold(0.0, f64::max);
    m.metric("norm_drift_max", drift);
    m.metric("energy_drift_max", edrift);
    m.metric("edge_warnings", store.edge_warnings as f64);

    for k in ctx.kept_indices(m) {
        let name = snapshot_artifact(k);
        let snap = &store.snapshots[k];
        let rel = write_binary(&ctx.out, &format!("snapshots/{name}.bin"), |w| write_snapshot(w, snap))?;
        m.register(&ctx.out, &name, ArtifactKind::Snapshot, Stage::Propagate, &rel)?;
    }
    ctx.store = Some(store);
    Ok(())
}

fn stage_factorize(ctx: &RunState, m: &mut Manifest) -> anyhow::Result<()> {
    let store = ctx.store()?;
    let bo = ctx.bo.as_ref().expect("bo stage runs first");
    let f = &ctx.cfg.factorization;
    let kept = ctx.kept_indices(m);
    let mut rows = Vec::with_capacity(store.snapshots.len());
    let (mut sup, mut sup_t, mut sup_R) = (0.0f64, f64::NAN, f64::NAN);
    for (k, snap) in store.snapshots.iter().enumerate() {
        let fs = factorize(snap, ctx.ham(), f.rho_floor).with_context(|| format!("snapshot at t = {}", snap.t))?;
        let d = fs.adiabatic_distance(&bo.phi[0], f.report_threshold)?;
        let (mut row_sup, mut row_R) = (f64::NAN, f64::NAN);
        for (i, v) in d.iter().enumerate() {
            if v.is_finite() && !(row_sup >= *v) {
                row_sup = *v;
                row_R = fs.grid.clock.point(i);
            }
        }
        if row_sup > sup {
            (sup, sup_t, sup_R) = (row_sup, snap.t, row_R);
        }
        let reported = d.iter().filter(|v| v.is_finite()).count();
        rows.push(vec![num(snap.t), num(row_sup), num(row_R), num(fs.partial_normalization_error()), reported.to_string()]);
        if kept.contains(&k) {
            write_factorized_artifact(ctx, m, k, &fs)?;
        }
    }
    let header = ["t [au]", "sup_l1", "R_at_sup [a0]", "partial_norm_error", "reported_points"];
    csv_artifact(ctx, m, Stage::Factorize, ADIABATIC_TABLE, &header, rows)?;
    m.metric("adiabatic_sup_l1", sup);
    m.metric("adiabatic_sup_t", sup_t);
    m.metric("adiabatic_sup_R", sup_R);
    Ok(())
}

fn write_factorized_artifact(ctx: &RunState, m: &mut Manifest, k: usize, fs: &FactorizedState) -> anyhow::Result<()> {
    let name = factorized_artifact(k);
    let rec = FactorizedRecord::from_state(fs);
    let rel = write_binary(&ctx.out, &format!("snapshots/{name}.bin"), |w| write_factorized(w, &rec))?;
    m.register(&ctx.out, &name, ArtifactKind::Factorized, Stage::Factorize, &rel)
}

/// Reports for the named equations at one snapshot.
pub fn residuals_at(
    snap: &JointState,
    ham: &Hamiltonian,
    rho_floor: f64,
    equations: &[String],
    form: Form,
    region: &Region,
) -> anyhow::Result<Vec<ResidualReport>> {
    let fs = factorize(snap, ham, rho_floor)?;
    let dpsi = ham.time_derivative(&snap.psi.values);
    let clock_dt = (form == Form::TimeClock).then_some(&dpsi);
    let wants = |e: &str| equations.iter().any(|x| x == e);
    let mut out = Vec::new();
    if wants("cdse") {
        out.push(cdse_residual(&fs, ham, clock_dt, region)?);
    }
    if wants("cdhje") {
        out.push(cdhje_residual(&fs, ham, clock_dt, region)?);
    }
    if wants("cdce") {
        out.push(cdce_residual(&fs, clock_dt, region)?);
    }
    if wants("cdce_flux") {
        out.push(cdce_secondary_residual(&fs, clock_dt, region)?);
    }
    if wants("tdhje") || wants("tdce") || wants("tdce1") {
        let tr = tdqhd_residuals(snap, &dpsi, ham, region)?;
        for r in [tr.tdhje, tr.tdce, tr.tdce1] {
            if wants(&r.equation) {
                out.push(r);
            }
        }
    }
    Ok(out)
}

fn residual_row(r: &ResidualReport) -> Vec<String> {
    vec![
        num(r.t),
        r.equation.clone(),
        r.form.label().to_string(),
        r.region_size.to_string(),
        r.excluded.to_string(),
        num(r.rms),
        num(r.max_abs),
        r.largest_term.clone(),
        num(r.largest_term_rms),
        num(r.relative_rms),
    ]
}

const RESIDUAL_HEADER: [&str; 10] = [
    "t [au]",
    "equation",
    "form",
    "region_size",
    "excluded",
    "rms [au]",
    "max_abs [au]",
    "largest_term",
    "largest_term_rms [au]",
    "relative_rms",
];

fn stage_residuals(ctx: &RunState, m: &mut Manifest) -> anyhow::Result<()> {
    let store = ctx.store()?;
    let rc = &ctx.cfg.residuals;
    let n = store.snapshots.len();
    let mut idx: Vec<usize> = (0..n).step_by(rc.every).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    let mut rows = Vec::new();
    let mut worst = std::collections::BTreeMap::<String, f64>::new();
    for k in idx {
        let snap = &store.snapshots[k];
        let reports = residuals_at(snap, ctx.ham(), ctx.cfg.factorization.rho_floor, &rc.equations, rc.form, &rc.region)
            .with_context(|| format!("snapshot at t = {}", snap.t))?;
        for r in &reports {
            if r.relative_rms.is_finite() {
                let w = worst.entry(r.equation.clone()).or_insert(0.0);
                *w = w.max(r.relative_rms);
            }
            rows.push(residual_row(r));
        }
    }
    csv_artifact(ctx, m, Stage::Residuals, RESIDUAL_TABLE, &RESIDUAL_HEADER, rows)?;
    for (eq, w) in worst {
        m.metric(&format!("residual_max_relative_{eq}"), w);
    }
    if !rc.refinements.is_empty() {
        let dt = rc.refinement_dt.unwrap_or_else(|| {
            m.derived.dt.unwrap_or(ctx.cfg.propagation.dt_max) / rc.refinements.iter().copied().fold(1.0, f64::max)
        });
        let study = refinement_study(
            &ctx.cfg.model,
            &rc.refinements,
            &rc.refinement_times,
            dt,
            ctx.cfg.factorization.rho_floor,
            &rc.equations,
            rc.form,
            &rc.region,
        )?;
        let header = ["scale", "n_clock", "n_system", "dt [au]", "t [au]", "equation", "rms [au]", "relative_rms"];
        let rows: Vec<Vec<String>> = study
            .rows
            .iter()
            .map(|r| {
                vec![
                    num(r.scale),
                    r.n_clock.to_string(),
                    r.n_system.to_string(),
                    num(dt),
                    num(r.t),
                    r.equation.clone(),
                    num(r.rms),
                    num(r.relative_rms),
                ]
            })
            .collect();
        csv_artifact(ctx, m, Stage::Residuals, REFINEMENT_TABLE, &header, rows)?;
        for eq in study.equations() {
            m.metric(&format!("refinement_monotone_{eq}"), if study.monotone(&eq) { 1.0 } else { 0.0 });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementRow {
    pub scale: f64,
    pub n_clock: usize,
    pub n_system: usize,
    pub t: f64,
    pub equation: String,
    pub rms: f64,
    pub relative_rms: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RefinementStudy {
    pub rows: Vec<RefinementRow>,
}

impl RefinementStudy {
    pub fn equations(&self) -> Vec<String> {
        let mut v: Vec<String> = self.rows.iter().map(|r| r.equation.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Relative residuals of `equation` at time `t`, ordered by scale.
    pub fn series(&self, equation: &str, t: f64) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.equation == equation && (r.t - t).abs() < 1e-9 * t.abs().max(1.0))
            .map(|r| (r.scale, r.relative_rms))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    pub fn times(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Strictly decreasing relative residual with scale at every time.
    pub fn monotone(&self, equation: &str) -> bool {
        self.times().iter().all(|&t| self.series(equation, t).windows(2).all(|w| w[1].1 < w[0].1))
    }
}

/// Propagates the model on grids with node counts scaled by each factor, over
/// the same domains and with the same `dt`, and evaluates residuals at the
/// stored snapshots nearest to `times`.
#[allow(clippy::too_many_arguments)]
pub fn refinement_study(
    model: &ModelParams,
    scales: &[f64],
    times: &[f64],
    dt: f64,
    rho_floor: f64,
    equations: &[String],
    form: Form,
    region: &Region,
) -> anyhow::Result<RefinementStudy> {
    let steps: Vec<usize> = times.iter().map(|t| (t / dt).round() as usize).collect();
    let stride = steps.iter().copied().filter(|&n| n > 0).fold(0, gcd).max(1);
    let n_steps = steps.iter().copied().max().unwrap_or(0);
    let mut study = RefinementStudy::default();
    for &s in scales {
        let scale_grid = |g: &Grid1D| Grid1D { n: (g.n as f64 * s).round() as usize, ..*g };
        let p = ModelParams { clock_grid: scale_grid(&model.clock_grid), system_grid: scale_grid(&model.system_grid), ..model.clone() };
        let bo = bo_solve(&p, 1)?;
        let st = initial_state(&p, &bo)?;
        let ham = Hamiltonian::from_params(&p)?;
        let store = run(&st, &PropagationSchedule { dt, n_steps, snapshot_stride: stride }, &ham)
            .with_context(|| format!("refinement scale {s}"))?;
        for &n in &steps {
            let snap = &store.snapshots[n / stride];
            for r in residuals_at(snap, &ham, rho_floor, equations, form, region)? {
                if r.equation.starts_with("td") {
                    continue;
                }
                study.rows.push(RefinementRow {
                    scale: s,
                    n_clock: p.clock_grid.n,
                    n_system: p.system_grid.n,
                    t: snap.t,
                    equation: r.equation,
                    rms: r.rms,
                    relative_rms: r.relative_rms,
                });
            }
        }
    }
    Ok(study)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

const TRAJECTORY_HEADER: [&str; 8] = ["id", "mode", "tau [au]", "R [a0]", "r [a0]", "S [au]", "clamped", "terminated"];

fn trajectory_rows(sets: &[TrajectorySet]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for set in sets {
        for t in &set.trajectories {
            for s in &t.samples {
                rows.push(vec![
                    t.id.to_string(),
                    t.mode.label().to_string(),
                    num(s.tau),
                    num(s.R),
                    num(s.r),
                    num(s.S),
                    (s.clamped as u8).to_string(),
                    (s.terminated as u8).to_string(),
                ]);
            }
        }
    }
    rows
}

fn stage_trajectories(ctx: &RunState, m: &mut Manifest) -> anyhow::Result<()> {
    let store = ctx.store()?;
    if store.snapshots.len() < 2 {
        log::info!("single snapshot; no trajectories");
        return Ok(());
    }
    let tc = &ctx.cfg.trajectories;
    let state0 = &store.snapshots[0];
    let mut sets = Vec::new();
    if tc.clock_count > 0 && !tc.clock_modes.is_empty() {
        let seeds = match tc.seeding {
            Seeding::Significant => sample_significant(state0, tc.clock_count, tc.significance, tc.seed)?,
            Seeding::Random => sample_initial(state0, tc.clock_count, tc.seed)?,
        };
        for &mode in &tc.clock_modes {
            let set = clock_trajectories_streaming(
                &store.snapshots,
                ctx.ham(),
                ctx.cfg.factorization.rho_floor,
                &seeds,
                mode,
                &tc.integration,
            )
            .with_context(|| format!("{} trajectories", mode.label()))?;
            let label = mode.label();
            let follow = conditional_following(&set, &store.snapshots, tc.follow_threshold)?;
            m.metric(&format!("{label}_follow_fraction"), follow.fraction);
            m.metric(&format!("{label}_clamped_fraction"), set.clamped_fraction());
            m.metric(&format!("{label}_terminated"), set.terminated_count() as f64);
            let path = mean_clock_path(&set);
            if let (Some(a), Some(b)) = (path.first(), path.last()) {
                m.metric(&format!("{label}_mean_R_start"), a.1);
                m.metric(&format!("{label}_mean_R_end"), b.1);
            }
            sets.push(set);
        }
        if sets.len() == 2 {
            m.metric("clock_endpoint_deviation", endpoint_deviation(&sets[0], &sets[1]));
        }
        csv_artifact(ctx, m, Stage::Trajectories, CLOCK_TRAJECTORY_TABLE, &TRAJECTORY_HEADER, trajectory_rows(&sets))?;
    }
    if tc.bohmian_count > 0 {
        let seeds = sample_initial(state0, tc.bohmian_count, tc.seed.wrapping_add(1))?;
        let set = bohmian_trajectories(&store.snapshots, ctx.ham(), &seeds, &tc.integration)?;
        let mut worst: f64 = 0.0;
        for r in m.derived.render_times.clone() {
            if r.index == 0 {
                continue;
            }
            let l1 = binned_l1(&set, &store.snapshots[r.index], tc.l1_block)?;
            m.metric(&format!("bohmian_l1_t{}", r.t), l1);
            worst = worst.max(l1);
        }
        m.metric("bohmian_l1_max", worst);
        m.metric("bohmian_clamped_fraction", set.clamped_fraction());
        csv_artifact(
            ctx,
            m,
            Stage::Trajectories,
            BOHMIAN_TRAJECTORY_TABLE,
            &TRAJECTORY_HEADER,
            trajectory_rows(std::slice::from_ref(&set)),
        )?;
    }
    Ok(())
}
