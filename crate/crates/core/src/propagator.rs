//! Strang split-operator propagation of `ψ(R, r, t)` with FFT kinetics.
#![allow(non_snake_case)]

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::model::{potential_grid, JointState, ModelParams, HBAR, SYSTEM_MASS};
use crate::numgrid::{Axis, Field2D, ProductGrid2D};
use crate::{Error, Result};

/// Edge density above which a run logs a warning.
pub const EDGE_DENSITY_WARN: f64 = 1e-10;
/// Norm deviation that aborts a run.
pub const NORM_DRIFT_ABORT: f64 = 1e-6;

/// Angular wavenumbers in FFT order for `n` samples spaced by `h`.
pub fn wavenumbers(n: usize, h: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |k| {
        let signed = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
        2.0 * PI * signed / (n as f64 * h)
    })
}

/// Forward/inverse 2D FFT over the product grid (rows, then columns via transpose).
#[derive(Clone)]
pub struct Fft2 {
    n_clock: usize,
    n_system: usize,
    rows_fwd: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_fwd: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(grid: &ProductGrid2D) -> Self {
        let (n_clock, n_system) = grid.shape();
        let mut planner = FftPlanner::new();
        Fft2 {
            n_clock,
            n_system,
            rows_fwd: planner.plan_fft_forward(n_system),
            rows_inv: planner.plan_fft_inverse(n_system),
            cols_fwd: planner.plan_fft_forward(n_clock),
            cols_inv: planner.plan_fft_inverse(n_clock),
        }
    }

    fn transform(&self, data: &mut Array2<Complex64>, inverse: bool) {
        let (rows, cols) = if inverse { (&self.rows_inv, &self.cols_inv) } else { (&self.rows_fwd, &self.cols_fwd) };
        let buf = data.as_slice_mut().expect("row-major field storage");
        rows.process(buf);
        let mut t = vec![Complex64::default(); buf.len()];
        transpose(buf, &mut t, self.n_clock, self.n_system);
        cols.process(&mut t);
        transpose(&t, buf, self.n_system, self.n_clock);
        if inverse {
            let s = 1.0 / buf.len() as f64;
            buf.iter_mut().for_each(|z| *z *= s);
        }
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.transform(data, false);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.transform(data, true);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 32;
    for i0 in (0..rows).step_by(B) {
        for j0 in (0..cols).step_by(B) {
            for i in i0..(i0 + B).min(rows) {
                for j in j0..(j0 + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

/// `H = −(ħ²/2M)∂_R² − (ħ²/2m)∂_r² + V` on a periodic product grid.
#[derive(Clone)]
pub struct Hamiltonian {
    pub grid: ProductGrid2D,
    pub clock_mass: f64,
    pub system_mass: f64,
    pub potential: Array2<f64>,
    /// Kinetic symbol `ħ²k_R²/2M + ħ²k_r²/2m` in FFT order.
    pub kinetic: Array2<f64>,
    fft: Fft2,
}

impl Hamiltonian {
    pub fn new(grid: ProductGrid2D, clock_mass: f64, system_mass: f64, potential: Array2<f64>) -> Result<Self> {
        if potential.dim() != grid.shape() {
            return Err(Error::Dimension(format!(
                "potential shape {:?} does not match grid {:?}",
                potential.dim(),
                grid.shape()
            )));
        }
        if !(clock_mass > 0.0 && system_mass > 0.0) {
            return Err(Error::InvalidParameter("masses must be positive".into()));
        }
        let kR = wavenumbers(grid.clock.n, grid.clock.spacing());
        let kr = wavenumbers(grid.system.n, grid.system.spacing());
        let kinetic = Array2::from_shape_fn(grid.shape(), |(i, j)| {
            HBAR * HBAR * (kR[i] * kR[i] / (2.0 * clock_mass) + kr[j] * kr[j] / (2.0 * system_mass))
        });
        Ok(Hamiltonian { grid, clock_mass, system_mass, potential, kinetic, fft: Fft2::new(&grid) })
    }

    pub fn from_params(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        Self::new(params.grid(), params.clock_mass(), SYSTEM_MASS, potential_grid(params))
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// `∂ψ` along `axis`, evaluated spectrally on the periodic grid (Nyquist mode dropped).
    pub fn spectral_gradient(&self, psi: &Array2<Complex64>, axis: Axis) -> Array2<Complex64> {
        let g = self.grid.axis(axis);
        let mut k = wavenumbers(g.n, g.spacing());
        if g.n % 2 == 0 {
            k[g.n / 2] = 0.0;
        }
        let mut work = psi.clone();
        self.fft.forward(&mut work);
        for ((i, j), z) in work.indexed_iter_mut() {
            let kk = if axis == Axis::Clock { k[i] } else { k[j] };
            *z *= Complex64::new(0.0, kk);
        }
        self.fft.inverse(&mut work);
        work
    }

    /// Kinetic part `T̂ψ`, evaluated spectrally.
    pub fn apply_kinetic(&self, psi: &Array2<Complex64>) -> Array2<Complex64> {
        let mut work = psi.clone();
        self.fft.forward(&mut work);
        work.zip_mut_with(&self.kinetic, |z, t| *z *= t);
        self.fft.inverse(&mut work);
        work
    }

    /// `Ĥψ`.
    pub fn apply(&self, psi: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = self.apply_kinetic(psi);
        ndarray::Zip::from(&mut out).and(psi).and(&self.potential).for_each(|o, p, v| *o += p * v);
        out
    }

    /// `∂_tψ = −iĤψ/ħ`.
    pub fn time_derivative(&self, psi: &Array2<Complex64>) -> Array2<Complex64> {
        let i_over_hbar = Complex64::new(0.0, -1.0 / HBAR);
        self.apply(psi).mapv(|z| z * i_over_hbar)
    }

    /// Largest kinetic energy `T(k)` over wavenumbers whose spectral weight
    /// exceeds `threshold` times the peak.
    pub fn populated_kinetic_max(&self, psi: &Array2<Complex64>, threshold: f64) -> f64 {
        let mut spec = psi.clone();
        self.fft.forward(&mut spec);
        let peak = spec.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        spec.iter()
            .zip(self.kinetic.iter())
            .filter(|(z, _)| z.norm_sqr() >= threshold * peak)
            .map(|(_, t)| *t)
            .fold(0.0, f64::max)
    }
}

/// Time step keeping the kinetic phase over the populated band `≤ π/4`,
/// capped at `dt_max`.
pub fn default_dt(ham: &Hamiltonian, psi0: &Array2<Complex64>, band_threshold: f64, dt_max: f64) -> f64 {
    let tmax = ham.populated_kinetic_max(psi0, band_threshold);
    if tmax <= 0.0 {
        return dt_max;
    }
    (0.25 * PI * HBAR / tmax).min(dt_max)
}

/// Strang factors for one fixed `dt`.
#[derive(Clone)]
pub struct SplitOperator {
    pub dt: f64,
    half_potential: Array2<Complex64>,
    kinetic: Array2<Complex64>,
    fft: Fft2,
}

impl SplitOperator {
    pub fn new(ham: &Hamiltonian, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be finite and non-zero, got {dt}")));
        }
        let phase = |x: f64| Complex64::from_polar(1.0, -x * dt / HBAR);
        Ok(SplitOperator {
            dt,
            half_potential: ham.potential.mapv(|v| phase(0.5 * v)),
            kinetic: ham.kinetic.mapv(phase),
            fft: ham.fft.clone(),
        })
    }

    /// `e^{−iVdt/2} e^{−iTdt} e^{−iVdt/2}` in place; advances `t` by `dt`.
    pub fn step(&self, state: &mut JointState) {
        let psi = &mut state.psi.values;
        psi.zip_mut_with(&self.half_potential, |z, p| *z *= p);
        self.fft.forward(psi);
        psi.zip_mut_with(&self.kinetic, |z, p| *z *= p);
        self.fft.inverse(psi);
        psi.zip_mut_with(&self.half_potential, |z, p| *z *= p);
        state.t += self.dt;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationSchedule {
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_stride: usize,
}

impl PropagationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.snapshot_stride == 0 || self.n_steps % self.snapshot_stride != 0 {
            return Err(Error::InvalidParameter(format!(
                "snapshot stride {} must divide step count {}",
                self.snapshot_stride, self.n_steps
            )));
        }
        Ok(())
    }
}

/// When an open-ended run stops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once the marginal density peaks at or below this clock coordinate.
    pub marginal_peak_below: f64,
    /// Hard limit on external time.
    pub t_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub mean_R: f64,
    pub mean_r: f64,
    /// Largest `|ψ|²` on the outermost grid lines.
    pub edge_density: f64,
}

pub fn observables(state: &JointState, ham: &Hamiltonian) -> Observables {
    let grid = state.psi.grid;
    let psi = &state.psi.values;
    let rho = state.density();
    let norm = rho.integrate_all();
    let h_psi = ham.apply(psi);
    let integrand = Field2D { grid, values: ndarray::Zip::from(psi).and(&h_psi).map_collect(|p, hp| (p.conj() * hp).re) };
    let weighted = |f: &dyn Fn(f64, f64) -> f64| {
        Field2D::from_fn(grid, f).values * &rho.values
    };
    let mean = |axis: Axis| {
        let vals = weighted(&|R, r| if axis == Axis::Clock { R } else { r });
        Field2D { grid, values: vals }.integrate_all() / norm
    };
    let (nc, ns) = grid.shape();
    let mut edge: f64 = 0.0;
    for i in 0..nc {
        edge = edge.max(rho.values[[i, 0]]).max(rho.values[[i, ns - 1]]);
    }
    for j in 0..ns {
        edge = edge.max(rho.values[[0, j]]).max(rho.values[[nc - 1, j]]);
    }
    Observables {
        t: state.t,
        norm,
        energy: integrand.integrate_all() / norm,
        mean_R: mean(Axis::Clock),
        mean_r: mean(Axis::System),
        edge_density: edge,
    }
}

/// Ordered snapshots of a run plus their observables.
#[derive(Clone, Debug)]
pub struct SnapshotStore {
    pub grid: ProductGrid2D,
    pub dt: f64,
    pub snapshot_stride: usize,
    pub n_steps: usize,
    pub snapshots: Vec<JointState>,
    pub observables: Vec<Observables>,
    pub edge_warnings: usize,
}

impl SnapshotStore {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &JointState {
        self.snapshots.last().expect("store always holds the initial state")
    }

    /// Index of the snapshot closest in time to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        self.snapshots
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.t - t).abs().total_cmp(&(b.1.t - t).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }
}

struct Recorder<'a> {
    ham: &'a Hamiltonian,
    store: SnapshotStore,
}

impl Recorder<'_> {
    fn record(&mut self, state: &JointState) -> Result<()> {
        let obs = observables(state, self.ham);
        if (obs.norm - 1.0).abs() > NORM_DRIFT_ABORT || !obs.norm.is_finite() {
            return Err(Error::NormDrift { norm: obs.norm, t: state.t });
        }
        if obs.edge_density > EDGE_DENSITY_WARN {
            if self.store.edge_warnings == 0 {
                log::warn!("edge density {:.2e} at t = {:.3}; further crossings logged at debug level", obs.edge_density, state.t);
            } else {
                log::debug!("edge density {:.2e} at t = {:.3}", obs.edge_density, state.t);
            }
            self.store.edge_warnings += 1;
        }
        self.store.snapshots.push(state.clone());
        self.store.observables.push(obs);
        Ok(())
    }
}

fn start<'a>(state0: &JointState, ham: &'a Hamiltonian, dt: f64, stride: usize) -> Result<Recorder<'a>> {
    ham.grid.ensure_same(&state0.psi.grid)?;
    let mut rec = Recorder {
        ham,
        store: SnapshotStore {
            grid: ham.grid,
            dt,
            snapshot_stride: stride,
            n_steps: 0,
            snapshots: Vec::new(),
            observables: Vec::new(),
            edge_warnings: 0,
        },
    };
    rec.record(state0)?;
    Ok(rec)
}

/// Propagates for a fixed schedule, storing every `snapshot_stride`-th state.
pub fn run(state0: &JointState, schedule: &PropagationSchedule, ham: &Hamiltonian) -> Result<SnapshotStore> {
    schedule.validate()?;
    let split = SplitOperator::new(ham, schedule.dt)?;
    let mut rec = start(state0, ham, schedule.dt, schedule.snapshot_stride)?;
    let mut state = state0.clone();
    let t0 = state0.t;
    for n in 1..=schedule.n_steps {
        split.step(&mut state);
        if n % schedule.snapshot_stride == 0 {
            state.t = t0 + n as f64 * schedule.dt;
            rec.record(&state)?;
        }
    }
    rec.store.n_steps = schedule.n_steps;
    Ok(rec.store)
}

/// Propagates until `stop` is met at a snapshot; the step count is then a
/// multiple of `snapshot_stride`.
pub fn run_until(
    state0: &JointState,
    dt: f64,
    snapshot_stride: usize,
    stop: &StopRule,
    ham: &Hamiltonian,
) -> Result<SnapshotStore> {
    PropagationSchedule { dt, n_steps: snapshot_stride, snapshot_stride }.validate()?;
    if !(stop.t_max > 0.0) {
        return Err(Error::InvalidParameter(format!("t_max must be positive, got {}", stop.t_max)));
    }
    let split = SplitOperator::new(ham, dt)?;
    let mut rec = start(state0, ham, dt, snapshot_stride)?;
    let mut state = state0.clone();
    let t0 = state0.t;
    let mut n = 0usize;
    loop {
        split.step(&mut state);
        n += 1;
        if n % snapshot_stride != 0 {
            continue;
        }
        state.t = t0 + n as f64 * dt;
        rec.record(&state)?;
        let marginal = state.marginal();
        let peak = marginal.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        if ham.grid.clock.point(peak) <= stop.marginal_peak_below || state.t - t0 >= stop.t_max - 0.5 * dt {
            break;
        }
    }
    rec.store.n_steps = n;
    Ok(rec.store)
}
