//! Trajectories along momentum fields.
//!
//! Bohmian paths integrate `(Ṙ, ṙ) = (P/M, p/m)` of the joint state. Clock paths
//! advance `R` first along `P[ψ]/M` (or `P[χ,A]/M` in the simplified mode) and then
//! `r` along `p[φ]/m` at the new `R`. The parameter τ is the snapshot time.
//! Fields are Hermite-interpolated in space and linear in time between snapshots.
//! Gradients of `ψ` are taken spectrally, matching the propagator; the conditional
//! field `p[φ]` uses the finite-difference derivatives of the factorization.
#![allow(non_snake_case)]

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::factorization::FactorizedState;
use crate::hydro::{conditional_momentum, joint_fields, JOINT_FIELD_FLOOR};
use crate::model::{JointState, HBAR};
use crate::numgrid::{derivative_array, interpolate_array, Axis, DerivOrder, Field2D, Grid1D, ProductGrid2D};
use crate::propagator::Hamiltonian;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeed {
    pub R0: f64,
    pub r0: f64,
    pub weight: f64,
    pub rng_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    Bohmian,
    ClockFull,
    ClockSimplified,
}

impl TrajectoryMode {
    pub fn label(self) -> &'static str {
        match self {
            TrajectoryMode::Bohmian => "bohmian",
            TrajectoryMode::ClockFull => "clock_full",
            TrajectoryMode::ClockSimplified => "clock_simplified",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tau: f64,
    pub R: f64,
    pub r: f64,
    /// Action `S = ħs`; NaN when not tracked.
    pub S: f64,
    /// A velocity was clamped since the previous sample.
    pub clamped: bool,
    /// The trajectory left the domain right after this sample.
    pub terminated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub mode: TrajectoryMode,
    pub weight: f64,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn terminated(&self) -> bool {
        self.samples.last().is_some_and(|s| s.terminated)
    }

    /// Position at `t`, linear between recorded samples.
    pub fn position_at(&self, t: f64) -> Option<(f64, f64)> {
        let tol = 1e-9 * t.abs().max(1.0);
        let k = self.samples.partition_point(|s| s.tau < t - tol);
        let s = self.samples.get(k)?;
        if (s.tau - t).abs() <= tol {
            return Some((s.R, s.r));
        }
        let p = self.samples.get(k.checked_sub(1)?)?;
        let w = (t - p.tau) / (s.tau - p.tau);
        Some((p.R + w * (s.R - p.R), p.r + w * (s.r - p.r)))
    }

    fn sample_at(&self, t: f64) -> Option<&Sample> {
        let tol = 1e-9 * t.abs().max(1.0);
        let k = self.samples.partition_point(|s| s.tau < t - tol);
        self.samples.get(k).filter(|s| (s.tau - t).abs() <= tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub mode: TrajectoryMode,
    /// Velocity limits `(|Ṙ|, |ṙ|)` in effect.
    pub v_max: [f64; 2],
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn terminated_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.terminated()).count()
    }

    /// Fraction of recorded steps (after the first sample) with a clamped velocity.
    pub fn clamped_fraction(&self) -> f64 {
        let (c, n) = self.trajectories.iter().flat_map(|t| t.samples.iter().skip(1)).fold((0, 0), |(c, n), s| (c + s.clamped as usize, n + 1));
        if n == 0 { 0.0 } else { c as f64 / n as f64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSettings {
    /// RK4 steps per snapshot interval.
    pub substeps: usize,
    /// Velocity limit as a multiple of the RMS field velocity over the high-density region.
    pub clamp_factor: f64,
    /// Joint density fraction of the maximum that defines the high-density region.
    pub high_density_fraction: f64,
    /// Explicit limits `(|Ṙ|, |ṙ|)`, overriding the RMS rule.
    pub v_max: Option<[f64; 2]>,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings { substeps: 2, clamp_factor: 10.0, high_density_fraction: 0.1, v_max: None }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        if !(self.clamp_factor > 0.0) || !(self.high_density_fraction > 0.0 && self.high_density_fraction <= 1.0) {
            return Err(Error::InvalidParameter("clamp_factor must be positive and high_density_fraction in (0, 1]".into()));
        }
        if let Some(v) = self.v_max {
            if v.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::InvalidParameter("v_max entries must be positive".into()));
            }
        }
        Ok(())
    }
}

fn cell_weights(state: &JointState) -> (ProductGrid2D, Vec<f64>) {
    let g = state.psi.grid;
    let w = state.psi.values.indexed_iter().map(|((i, j), z)| z.norm_sqr() * g.clock.weight(i) * g.system.weight(j)).collect();
    (g, w)
}

/// Stratified inverse-CDF draws over cell masses, jittered uniformly inside the cell.
fn sample_cells(grid: &ProductGrid2D, weights: &[f64], n: usize, rng_seed: u64) -> Result<Vec<TrajectorySeed>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    if !(acc > 0.0) || !acc.is_finite() {
        return Err(Error::EmptyField("sampling density has no mass".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let ns = grid.system.n;
    let (hc, hs) = (grid.clock.spacing(), grid.system.spacing());
    let mut seeds = Vec::with_capacity(n);
    for k in 0..n {
        let u = (k as f64 + rng.gen::<f64>()) / n as f64 * acc;
        let mut cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        while weights[cell] == 0.0 && cell > 0 {
            cell -= 1;
        }
        let (i, j) = (cell / ns, cell % ns);
        let R = (grid.clock.point(i) + (rng.gen::<f64>() - 0.5) * hc).clamp(grid.clock.min, grid.clock.max);
        let r = (grid.system.point(j) + (rng.gen::<f64>() - 0.5) * hs).clamp(grid.system.min, grid.system.max);
        seeds.push(TrajectorySeed { R0: R, r0: r, weight: 1.0 / n as f64, rng_seed });
    }
    Ok(seeds)
}

/// `n` equally weighted seeds distributed as `|ψ0|²`.
pub fn sample_initial(state: &JointState, n: usize, rng_seed: u64) -> Result<Vec<TrajectorySeed>> {
    let (g, w) = cell_weights(state);
    sample_cells(&g, &w, n, rng_seed)
}

/// Seeds drawn as `|ψ0|²` restricted to points where it is at least `fraction` of its maximum.
pub fn sample_significant(state: &JointState, n: usize, fraction: f64, rng_seed: u64) -> Result<Vec<TrajectorySeed>> {
    let (g, mut w) = cell_weights(state);
    let peak = state.psi.values.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    for (w, z) in w.iter_mut().zip(state.psi.values.iter()) {
        if z.norm_sqr() < fraction * peak {
            *w = 0.0;
        }
    }
    sample_cells(&g, &w, n, rng_seed)
}

/// Bicubic Hermite patch data: values and their `R`, `r` and mixed derivatives.
struct Patch {
    grid: ProductGrid2D,
    f: Array2<f64>,
    fR: Array2<f64>,
    fr: Array2<f64>,
    fRr: Array2<f64>,
}

fn basis(t: f64) -> [f64; 4] {
    let (t2, t3) = (t * t, t * t * t);
    [2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2, t3 - 2.0 * t2 + t, t3 - t2]
}

impl Patch {
    fn new(grid: ProductGrid2D, f: Array2<f64>) -> Patch {
        let fR = derivative_array(&f, &grid, Axis::Clock, DerivOrder::First);
        let fr = derivative_array(&f, &grid, Axis::System, DerivOrder::First);
        let fRr = derivative_array(&fr, &grid, Axis::Clock, DerivOrder::First);
        Patch { grid, f, fR, fr, fRr }
    }

    /// Same result as [`interpolate_array`], evaluated from cached derivatives.
    fn eval(&self, R: f64, r: f64) -> Result<f64> {
        let locate = |g: &Grid1D, x: f64, axis| -> Result<(usize, f64)> {
            let (k, t) = g.locate(x, axis)?;
            Ok(if k + 1 == g.n { (k - 1, 1.0) } else { (k, t) })
        };
        let (i, tc) = locate(&self.grid.clock, R, Axis::Clock)?;
        let (j, ts) = locate(&self.grid.system, r, Axis::System)?;
        let (hc, hs) = (self.grid.clock.spacing(), self.grid.system.spacing());
        let (bc, bs) = (basis(tc), basis(ts));
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let ij = [i + a, j + b];
                acc += bc[a] * bs[b] * self.f[ij]
                    + hc * bc[a + 2] * bs[b] * self.fR[ij]
                    + hs * bc[a] * bs[b + 2] * self.fr[ij]
                    + hc * hs * bc[a + 2] * bs[b + 2] * self.fRr[ij];
            }
        }
        Ok(acc)
    }
}

/// Velocity fields (and optionally the action rate) at one snapshot time.
struct Frame {
    t: f64,
    v_clock: Patch,
    v_system: Patch,
    lagrangian: Option<Patch>,
}

/// `ħ Im(ψ̄∂ψ)/|ψ|²/mass` with the derivative taken spectrally, consistent with the
/// propagator; NaN below the joint floor.
fn spectral_velocity(psi: &Array2<Complex64>, ham: &Hamiltonian, axis: Axis) -> Array2<f64> {
    let mass = if axis == Axis::Clock { ham.clock_mass } else { ham.system_mass };
    let d = ham.spectral_gradient(psi, axis);
    Zip::from(psi).and(&d).map_collect(|z, dz| {
        let rho = z.norm_sqr();
        if rho > JOINT_FIELD_FLOOR { HBAR * (z.conj() * dz).im / rho / mass } else { f64::NAN }
    })
}

fn bohmian_frame(state: &JointState, ham: &Hamiltonian) -> Frame {
    let g = state.psi.grid;
    let (M, m) = (ham.clock_mass, ham.system_mass);
    let psi = &state.psi.values;
    let vR = spectral_velocity(psi, ham, Axis::Clock);
    let vr = spectral_velocity(psi, ham, Axis::System);
    let (_, q) = joint_fields(psi, &g, M, m);
    // dS/dt = P·Ṙ + p·ṙ − H along the path
    let mut lag = Zip::from(&vR).and(&vr).and(&q).map_collect(|vR, vr, q| M * vR * vR / 2.0 + m * vr * vr / 2.0 - q);
    lag -= &ham.potential;
    Frame { t: state.t, v_clock: Patch::new(g, vR), v_system: Patch::new(g, vr), lagrangian: Some(Patch::new(g, lag)) }
}

fn clock_frame(state: &JointState, fs: &FactorizedState, ham: &Hamiltonian, mode: TrajectoryMode) -> Frame {
    let g = fs.grid;
    let (M, m) = (fs.clock_mass, fs.system_mass);
    let (phi, chi_P, _) = conditional_momentum(fs);
    let vR = match mode {
        TrajectoryMode::ClockSimplified => Array2::from_shape_fn(g.shape(), |(i, _)| chi_P[i] / M),
        _ => spectral_velocity(&state.psi.values, ham, Axis::Clock),
    };
    let vr = phi.p_cl.mapv(|p| p / m);
    Frame { t: fs.t, v_clock: Patch::new(g, vR), v_system: Patch::new(g, vr), lagrangian: None }
}

/// Clamps a velocity component; undefined fields stop the motion along that axis.
fn limit(v: f64, vmax: f64, clamped: &mut bool) -> f64 {
    if !v.is_finite() {
        *clamped = true;
        0.0
    } else if v.abs() > vmax {
        *clamped = true;
        vmax.copysign(v)
    } else {
        v
    }
}

fn rms_limits(frame: &Frame, density: &Array2<f64>, settings: &IntegrationSettings) -> [f64; 2] {
    if let Some(v) = settings.v_max {
        return v;
    }
    let peak = density.iter().cloned().fold(0.0, f64::max);
    let cut = settings.high_density_fraction * peak;
    let rms = |a: &Array2<f64>| {
        let (s, n) = Zip::from(a).and(density).fold((0.0, 0usize), |(s, n), v, d| if *d >= cut && v.is_finite() { (s + v * v, n + 1) } else { (s, n) });
        if n == 0 { 0.0 } else { (s / n as f64).sqrt() }
    };
    [rms(&frame.v_clock.f), rms(&frame.v_system.f)].map(|r| if r > 1e-12 { settings.clamp_factor * r } else { f64::INFINITY })
}

struct Live {
    R: f64,
    r: f64,
    S: f64,
    clamped: bool,
    done: bool,
}

/// Interpolated field between two frames; `None` outside the domain.
fn field_at(a: &Patch, b: &Patch, w: f64, R: f64, r: f64) -> Option<f64> {
    let va = a.eval(R, r).ok()?;
    let vb = b.eval(R, r).ok()?;
    Some((1.0 - w) * va + w * vb)
}

/// One RK4 step of the joint system; `None` if a stage leaves the domain.
fn joint_step(f0: &Frame, f1: &Frame, t: f64, h: f64, p: &Live, vmax: [f64; 2]) -> Option<(f64, f64, f64, bool)> {
    let span = f1.t - f0.t;
    let mut clamped = false;
    let mut rate = |t: f64, R: f64, r: f64| -> Option<(f64, f64, f64)> {
        let w = (t - f0.t) / span;
        let vR = limit(field_at(&f0.v_clock, &f1.v_clock, w, R, r)?, vmax[0], &mut clamped);
        let vr = limit(field_at(&f0.v_system, &f1.v_system, w, R, r)?, vmax[1], &mut clamped);
        let l = match (&f0.lagrangian, &f1.lagrangian) {
            (Some(a), Some(b)) => field_at(a, b, w, R, r)?,
            _ => f64::NAN,
        };
        Some((vR, vr, l))
    };
    let k1 = rate(t, p.R, p.r)?;
    let k2 = rate(t + h / 2.0, p.R + h / 2.0 * k1.0, p.r + h / 2.0 * k1.1)?;
    let k3 = rate(t + h / 2.0, p.R + h / 2.0 * k2.0, p.r + h / 2.0 * k2.1)?;
    let k4 = rate(t + h, p.R + h * k3.0, p.r + h * k3.1)?;
    let R = p.R + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    let r = p.r + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    let S = p.S + h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
    f0.v_clock.grid.contains(R, r).then_some((R, r, S, clamped))
}

/// RK4 in one coordinate with the other held fixed.
fn axis_step(a: &Patch, b: &Patch, t0: f64, span: f64, t: f64, h: f64, x: f64, along_clock: bool, other: f64, vmax: f64, clamped: &mut bool) -> Option<f64> {
    let mut rate = |t: f64, x: f64| -> Option<f64> {
        let w = (t - t0) / span;
        let v = if along_clock { field_at(a, b, w, x, other)? } else { field_at(a, b, w, other, x)? };
        Some(limit(v, vmax, clamped))
    };
    let k1 = rate(t, x)?;
    let k2 = rate(t + h / 2.0, x + h / 2.0 * k1)?;
    let k3 = rate(t + h / 2.0, x + h / 2.0 * k2)?;
    let k4 = rate(t + h, x + h * k3)?;
    let x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let g = &a.grid;
    let inside = if along_clock { g.clock.contains(x) } else { g.system.contains(x) };
    inside.then_some(x)
}

fn clock_step(f0: &Frame, f1: &Frame, t: f64, h: f64, p: &Live, vmax: [f64; 2]) -> Option<(f64, f64, f64, bool)> {
    let span = f1.t - f0.t;
    let mut clamped = false;
    let R = axis_step(&f0.v_clock, &f1.v_clock, f0.t, span, t, h, p.R, true, p.r, vmax[0], &mut clamped)?;
    let r = axis_step(&f0.v_system, &f1.v_system, f0.t, span, t, h, p.r, false, R, vmax[1], &mut clamped)?;
    Some((R, r, f64::NAN, clamped))
}

fn integrate(
    seeds: &[TrajectorySeed],
    mode: TrajectoryMode,
    times: &[f64],
    density0: &Array2<f64>,
    settings: &IntegrationSettings,
    mut frame_at: impl FnMut(usize) -> Result<Frame>,
) -> Result<TrajectorySet> {
    settings.validate()?;
    if times.len() < 2 {
        return Err(Error::InvalidParameter("trajectories need at least two snapshots".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("snapshot times must increase strictly".into()));
    }
    let mut f0 = frame_at(0)?;
    let vmax = rms_limits(&f0, density0, settings);
    let track_action = f0.lagrangian.is_some();
    let g = f0.v_clock.grid;
    let mut live: Vec<Live> = seeds
        .iter()
        .map(|s| Live { R: s.R0, r: s.r0, S: if track_action { 0.0 } else { f64::NAN }, clamped: false, done: !g.contains(s.R0, s.r0) })
        .collect();
    let mut out: Vec<Trajectory> = seeds
        .iter()
        .zip(&live)
        .enumerate()
        .map(|(id, (s, p))| Trajectory {
            id,
            mode,
            weight: s.weight,
            samples: vec![Sample { tau: times[0], R: s.R0, r: s.r0, S: p.S, clamped: false, terminated: p.done }],
        })
        .collect();
    let step = if mode == TrajectoryMode::Bohmian { joint_step } else { clock_step };
    for k in 1..times.len() {
        let f1 = frame_at(k)?;
        let h = (f1.t - f0.t) / settings.substeps as f64;
        for (p, traj) in live.iter_mut().zip(out.iter_mut()) {
            if p.done {
                continue;
            }
            for s in 0..settings.substeps {
                let t = f0.t + s as f64 * h;
                match step(&f0, &f1, t, h, p, vmax) {
                    Some((R, r, S, c)) => {
                        p.R = R;
                        p.r = r;
                        p.S = S;
                        p.clamped |= c;
                    }
                    None => {
                        p.done = true;
                        break;
                    }
                }
            }
            if p.done {
                // keep the last in-domain position; record it if it lies past the last sample
                let t_stop = traj.samples.last().map_or(f0.t, |s| s.tau);
                let last = traj.samples.last_mut().expect("seeded with a sample");
                if (last.R, last.r) == (p.R, p.r) {
                    last.terminated = true;
                } else {
                    let tau = t_stop + 0.5 * (f1.t - t_stop);
                    traj.samples.push(Sample { tau, R: p.R, r: p.r, S: p.S, clamped: p.clamped, terminated: true });
                }
                continue;
            }
            traj.samples.push(Sample { tau: f1.t, R: p.R, r: p.r, S: p.S, clamped: p.clamped, terminated: false });
            p.clamped = false;
        }
        f0 = f1;
    }
    Ok(TrajectorySet { mode, v_max: vmax, trajectories: out })
}

fn check_snapshots(snapshots: &[JointState]) -> Result<ProductGrid2D> {
    let first = snapshots.first().ok_or_else(|| Error::InvalidParameter("no snapshots".into()))?;
    for s in snapshots {
        s.psi.grid.ensure_same(&first.psi.grid)?;
    }
    Ok(first.psi.grid)
}

/// Bohmian trajectories of the joint state with action `S = ħs`.
pub fn bohmian_trajectories(snapshots: &[JointState], ham: &Hamiltonian, seeds: &[TrajectorySeed], settings: &IntegrationSettings) -> Result<TrajectorySet> {
    let g = check_snapshots(snapshots)?;
    g.ensure_same(&ham.grid)?;
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let density0 = snapshots[0].density().values;
    integrate(seeds, TrajectoryMode::Bohmian, &times, &density0, settings, |k| Ok(bohmian_frame(&snapshots[k], ham)))
}

/// Clock-conditioned trajectories; `factorized[k]` must belong to `snapshots[k]`.
pub fn clock_trajectories(
    snapshots: &[JointState],
    factorized: &[FactorizedState],
    ham: &Hamiltonian,
    seeds: &[TrajectorySeed],
    mode: TrajectoryMode,
    settings: &IntegrationSettings,
) -> Result<TrajectorySet> {
    if mode == TrajectoryMode::Bohmian {
        return Err(Error::InvalidParameter("clock trajectories need a clock mode".into()));
    }
    let g = check_snapshots(snapshots)?;
    g.ensure_same(&ham.grid)?;
    if factorized.len() != snapshots.len() {
        return Err(Error::Dimension(format!("{} factorized states for {} snapshots", factorized.len(), snapshots.len())));
    }
    for (s, f) in snapshots.iter().zip(factorized) {
        f.grid.ensure_same(&g)?;
        if (s.t - f.t).abs() > 1e-9 * s.t.abs().max(1.0) {
            return Err(Error::InvalidParameter(format!("factorized state at t = {} paired with snapshot at t = {}", f.t, s.t)));
        }
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let density0 = snapshots[0].density().values;
    integrate(seeds, mode, &times, &density0, settings, |k| Ok(clock_frame(&snapshots[k], &factorized[k], ham, mode)))
}

/// Same as [`clock_trajectories`] but factorizes each snapshot on demand, holding
/// only two factorized states at a time.
pub fn clock_trajectories_streaming(
    snapshots: &[JointState],
    ham: &Hamiltonian,
    rho_floor: f64,
    seeds: &[TrajectorySeed],
    mode: TrajectoryMode,
    settings: &IntegrationSettings,
) -> Result<TrajectorySet> {
    if mode == TrajectoryMode::Bohmian {
        return Err(Error::InvalidParameter("clock trajectories need a clock mode".into()));
    }
    let g = check_snapshots(snapshots)?;
    g.ensure_same(&ham.grid)?;
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let density0 = snapshots[0].density().values;
    integrate(seeds, mode, &times, &density0, settings, |k| {
        let fs = crate::factorization::factorize(&snapshots[k], ham, rho_floor)?;
        Ok(clock_frame(&snapshots[k], &fs, ham, mode))
    })
}

/// Weighted histogram of trajectory positions at `at_time`, per unit area.
pub fn ensemble_density(set: &TrajectorySet, grid: &ProductGrid2D, at_time: f64) -> Result<Field2D<f64>> {
    let mut values = Array2::zeros(grid.shape());
    let area = grid.cell_area();
    let mut covered = 0;
    for t in &set.trajectories {
        if let Some((R, r)) = t.position_at(at_time) {
            covered += 1;
            if grid.contains(R, r) {
                values[[grid.clock.nearest(R), grid.system.nearest(r)]] += t.weight / area;
            }
        }
    }
    if covered == 0 {
        return Err(Error::EmptyField(format!("no trajectory covers t = {at_time}")));
    }
    Field2D::new(*grid, values)
}

/// L1 distance between trajectory mass and grid mass of `state` at `state.t`, both
/// binned into blocks of `block × block` grid cells. Positions are assigned to the
/// cell of their nearest node, so seeds drawn from `|ψ|²` land in the block that
/// holds their mass on the grid.
pub fn binned_l1(set: &TrajectorySet, state: &JointState, block: usize) -> Result<f64> {
    if block == 0 {
        return Err(Error::InvalidParameter("block size must be positive".into()));
    }
    let g = state.psi.grid;
    let shape = (g.clock.n.div_ceil(block), g.system.n.div_ceil(block));
    let mut grid_mass = Array2::<f64>::zeros(shape);
    for ((i, j), z) in state.psi.values.indexed_iter() {
        grid_mass[[i / block, j / block]] += z.norm_sqr() * g.clock.weight(i) * g.system.weight(j);
    }
    let mut traj_mass = Array2::<f64>::zeros(shape);
    let mut covered = 0;
    for t in &set.trajectories {
        if let Some((R, r)) = t.position_at(state.t) {
            covered += 1;
            if g.contains(R, r) {
                traj_mass[[g.clock.nearest(R) / block, g.system.nearest(r) / block]] += t.weight;
            }
        }
    }
    if covered == 0 {
        return Err(Error::EmptyField(format!("no trajectory covers t = {}", state.t)));
    }
    Ok(Zip::from(&traj_mass).and(&grid_mass).fold(0.0, |acc, a, b| acc + (a - b).abs()))
}

/// Time of the first reordering of trajectories along `axis`, if any.
/// Only trajectories alive at a sample time take part in that comparison.
pub fn first_crossing(set: &TrajectorySet, axis: Axis) -> Option<f64> {
    let coord = |s: &Sample| if axis == Axis::Clock { s.R } else { s.r };
    let mut order: Vec<&Trajectory> = set.trajectories.iter().filter(|t| !t.samples.is_empty()).collect();
    order.sort_by(|a, b| coord(&a.samples[0]).total_cmp(&coord(&b.samples[0])));
    let n_samples = order.iter().map(|t| t.samples.len()).max().unwrap_or(0);
    for k in 0..n_samples {
        let mut prev: Option<f64> = None;
        for t in &order {
            let Some(s) = t.samples.get(k) else { continue };
            if s.terminated {
                continue;
            }
            let x = coord(s);
            if let Some(p) = prev {
                if x < p {
                    return Some(s.tau);
                }
            }
            prev = Some(x);
        }
    }
    None
}

/// How closely clock trajectories stay in the populated part of `ρ(r|R,t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FollowStats {
    pub steps: usize,
    pub satisfied: usize,
    pub fraction: f64,
}

/// Counts samples with `ρ(r_t|R_t,t) ≥ threshold·max_r ρ(r|R_t,t)`; samples are matched
/// to snapshots by time and the conditional density is interpolated from `|ψ|²`.
pub fn conditional_following(set: &TrajectorySet, snapshots: &[JointState], threshold: f64) -> Result<FollowStats> {
    let mut steps = 0;
    let mut satisfied = 0;
    for snap in snapshots {
        let g = snap.psi.grid;
        let dens = snap.density().values;
        for t in &set.trajectories {
            let Some(s) = t.sample_at(snap.t) else { continue };
            if s.terminated {
                continue;
            }
            let here = interpolate_array(&dens, &g, s.R, s.r)?;
            let mut peak: f64 = 0.0;
            for j in 0..g.system.n {
                peak = peak.max(interpolate_array(&dens, &g, s.R, g.system.point(j))?);
            }
            steps += 1;
            if here >= threshold * peak {
                satisfied += 1;
            }
        }
    }
    let fraction = if steps == 0 { f64::NAN } else { satisfied as f64 / steps as f64 };
    Ok(FollowStats { steps, satisfied, fraction })
}

/// Relative mismatch between the rate of change of the momentum field along
/// clamp-free Bohmian trajectories and the force `−∇(V + Q)`.
pub fn momentum_balance(set: &TrajectorySet, snapshots: &[JointState], ham: &Hamiltonian) -> Result<f64> {
    let g = check_snapshots(snapshots)?;
    let (M, m) = (ham.clock_mass, ham.system_mass);
    // per snapshot: P, p and the two force components
    let fields: Vec<[Array2<f64>; 4]> = snapshots
        .iter()
        .map(|s| {
            let (f, q) = joint_fields(&s.psi.values, &g, M, m);
            let w = &q + &ham.potential;
            let fR = derivative_array(&w, &g, Axis::Clock, DerivOrder::First).mapv(|v| -v);
            let fr = derivative_array(&w, &g, Axis::System, DerivOrder::First).mapv(|v| -v);
            [f.P_cl, f.p_cl, fR, fr]
        })
        .collect();
    let eval = |k: usize, c: usize, R: f64, r: f64| interpolate_array(&fields[k][c], &g, R, r);
    let (mut num, mut den) = (0.0, 0.0);
    for t in &set.trajectories {
        for w in t.samples.windows(3) {
            if w.iter().any(|s| s.clamped || s.terminated) {
                continue;
            }
            let idx = |s: &Sample| snapshots.iter().position(|x| (x.t - s.tau).abs() <= 1e-9 * s.tau.abs().max(1.0));
            let (Some(a), Some(b), Some(c)) = (idx(&w[0]), idx(&w[1]), idx(&w[2])) else { continue };
            let dt = w[2].tau - w[0].tau;
            for comp in 0..2 {
                let rate = (eval(c, comp, w[2].R, w[2].r)? - eval(a, comp, w[0].R, w[0].r)?) / dt;
                let force = eval(b, comp + 2, w[1].R, w[1].r)?;
                if rate.is_finite() && force.is_finite() {
                    num += (rate - force).powi(2);
                    den += force * force;
                }
            }
        }
    }
    if den == 0.0 {
        return Err(Error::EmptyField("no clamp-free trajectory segments".into()));
    }
    Ok((num / den).sqrt())
}

/// Mean end-point difference in `R` between two runs from the same seeds, relative
/// to the mean distance travelled in the first.
pub fn endpoint_deviation(a: &TrajectorySet, b: &TrajectorySet) -> f64 {
    let (mut diff, mut travel, mut n) = (0.0, 0.0, 0);
    for (x, y) in a.trajectories.iter().zip(&b.trajectories) {
        if let (Some(xs), Some(ys), Some(x0)) = (x.samples.last(), y.samples.last(), x.samples.first()) {
            diff += (xs.R - ys.R).abs();
            travel += (xs.R - x0.R).abs();
            n += 1;
        }
    }
    if n == 0 || travel == 0.0 { f64::NAN } else { diff / travel }
}

/// Mean clock coordinate of the alive trajectories at each recorded sample index.
pub fn mean_clock_path(set: &TrajectorySet) -> Vec<(f64, f64)> {
    let n = set.trajectories.iter().map(|t| t.samples.len()).max().unwrap_or(0);
    (0..n)
        .filter_map(|k| {
            let alive: Vec<&Sample> = set.trajectories.iter().filter_map(|t| t.samples.get(k)).filter(|s| !s.terminated).collect();
            (!alive.is_empty()).then(|| (alive[0].tau, alive.iter().map(|s| s.R).sum::<f64>() / alive.len() as f64))
        })
        .collect()
}
