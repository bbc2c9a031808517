//! Proton-coupled electron-transfer model: potential, Born-Oppenheimer
//! surfaces and the initial wavepacket.
#![allow(non_snake_case)]

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numgrid::{trapezoid, ComplexField2D, Field2D, Grid1D, ProductGrid2D};
use crate::tridiag::lowest_eigenpairs;
use crate::{Error, Result};

pub const HBAR: f64 = 1.0;
pub const SYSTEM_MASS: f64 = 1.0;

/// Which interaction potential `V(R, r)` to use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// Five-term softened-Coulomb model.
    #[default]
    Model,
    Free,
    /// Separable oscillator `½Mω_R²(R−R_eq)² + ½mω_r²r²`.
    Harmonic { omega_clock: f64, omega_system: f64, center_clock: f64 },
    /// `½ω²v²` with `v = −√M R sin α + √m r cos α`; a tilted channel in
    /// mass-scaled coordinates.
    Valley { omega: f64, angle: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "L")]
    pub L: f64,
    #[serde(rename = "R_c")]
    pub R_c: f64,
    #[serde(rename = "R_r")]
    pub R_r: f64,
    #[serde(rename = "R_l")]
    pub R_l: f64,
    pub mu: f64,
    #[serde(rename = "R0")]
    pub R0: f64,
    pub sigma: f64,
    #[serde(rename = "V_cap")]
    pub V_cap: f64,
    pub clock_grid: Grid1D,
    pub system_grid: Grid1D,
    pub potential: PotentialKind,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            L: 19.0,
            R_c: 4.0,
            R_r: 3.5,
            R_l: 3.5,
            mu: 1.0 / 900.0,
            R0: 5.0,
            sigma: 0.183,
            V_cap: 10.0,
            clock_grid: Grid1D { min: -9.0, max: 9.0, n: 192 },
            system_grid: Grid1D { min: -26.0, max: 26.0, n: 256 },
            potential: PotentialKind::Model,
        }
    }
}

impl ModelParams {
    /// Clock mass `M = 1/μ`.
    pub fn clock_mass(&self) -> f64 {
        1.0 / self.mu
    }

    pub fn grid(&self) -> ProductGrid2D {
        ProductGrid2D { clock: self.clock_grid, system: self.system_grid }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        for (name, v) in [("L", self.L), ("R_c", self.R_c), ("R_r", self.R_r), ("R_l", self.R_l), ("V_cap", self.V_cap), ("sigma", self.sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad(format!("mu must lie in (0, 1), got {}", self.mu));
        }
        if !self.R0.is_finite() {
            return bad(format!("R0 must be finite, got {}", self.R0));
        }
        self.clock_grid.validate()?;
        self.system_grid.validate()?;
        if self.potential == PotentialKind::Model {
            let half = 0.5 * self.L;
            if self.clock_grid.min <= -half || self.clock_grid.max >= half {
                return bad(format!(
                    "clock grid [{}, {}] must lie strictly inside (−L/2, L/2) = ({}, {})",
                    self.clock_grid.min, self.clock_grid.max, -half, half
                ));
            }
        }
        match self.potential {
            PotentialKind::Harmonic { omega_clock, omega_system, center_clock } => {
                if !(omega_clock >= 0.0 && omega_system >= 0.0 && center_clock.is_finite()) {
                    return bad("harmonic frequencies must be non-negative".into());
                }
            }
            PotentialKind::Valley { omega, angle } => {
                if !(omega > 0.0 && angle.is_finite()) {
                    return bad("valley frequency must be positive".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// `erf(|x|/a)/|x|`, switching to its Taylor series near the origin.
fn softened_coulomb(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x < 1e-4 * a {
        2.0 / (PI.sqrt() * a) * (1.0 - x * x / (3.0 * a * a))
    } else {
        libm::erf(x / a) / x
    }
}

fn model_potential(R: f64, r: f64, p: &ModelParams) -> f64 {
    let half = 0.5 * p.L;
    let v = 1.0 / (R - half).abs() + 1.0 / (R + half).abs()
        - softened_coulomb(r - R, p.R_c)
        - softened_coulomb(r - half, p.R_r)
        - softened_coulomb(r + half, p.R_l);
    if v.is_nan() { p.V_cap } else { v.min(p.V_cap) }
}

/// Interaction potential `V(R, r)` in hartree.
pub fn potential_value(R: f64, r: f64, params: &ModelParams) -> f64 {
    match params.potential {
        PotentialKind::Model => model_potential(R, r, params),
        PotentialKind::Free => 0.0,
        PotentialKind::Harmonic { omega_clock, omega_system, center_clock } => {
            0.5 * params.clock_mass() * omega_clock.powi(2) * (R - center_clock).powi(2)
                + 0.5 * SYSTEM_MASS * omega_system.powi(2) * r * r
        }
        PotentialKind::Valley { omega, angle } => {
            let v = -params.clock_mass().sqrt() * R * angle.sin() + SYSTEM_MASS.sqrt() * r * angle.cos();
            0.5 * omega * omega * v * v
        }
    }
}

/// Potential sampled on the product grid.
pub fn potential_grid(params: &ModelParams) -> Array2<f64> {
    let grid = params.grid();
    Array2::from_shape_fn(grid.shape(), |(i, j)| {
        potential_value(grid.clock.point(i), grid.system.point(j), params)
    })
}

/// Born-Oppenheimer surfaces `ε_n(R)` and real eigenfunctions `φ_n(r|R)`.
#[derive(Clone, Debug)]
pub struct BoSurface {
    pub grid: ProductGrid2D,
    pub n_states: usize,
    /// `epsilon[n][i]` is `ε_n(R_i)`.
    pub epsilon: Vec<Array1<f64>>,
    /// `phi[n][[i, j]]` is `φ_n(r_j | R_i)`.
    pub phi: Vec<Array2<f64>>,
}

impl BoSurface {
    /// Smallest `ε_1 − ε_0` over the clock grid and where it occurs.
    pub fn min_gap(&self) -> Option<(f64, f64)> {
        if self.n_states < 2 {
            return None;
        }
        self.epsilon[1]
            .iter()
            .zip(&self.epsilon[0])
            .enumerate()
            .map(|(i, (e1, e0))| (e1 - e0, self.grid.clock.point(i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// Diagonalizes `−½∂_r² + V(R, ·)` at every clock point.
pub fn bo_solve(params: &ModelParams, n_states: usize) -> Result<BoSurface> {
    params.validate()?;
    let grid = params.grid();
    let (n_clock, n_sys) = grid.shape();
    let interior = n_sys - 2;
    if n_states == 0 || n_states > interior {
        return Err(Error::InvalidParameter(format!(
            "n_states must lie in 1..={interior}, got {n_states}"
        )));
    }
    let h = grid.system.spacing();
    let kinetic = HBAR * HBAR / (2.0 * SYSTEM_MASS * h * h);
    let off = vec![-kinetic; interior - 1];

    let mut epsilon = vec![Array1::zeros(n_clock); n_states];
    let mut phi = vec![Array2::zeros((n_clock, n_sys)); n_states];
    for i in 0..n_clock {
        let R = grid.clock.point(i);
        let diag: Vec<f64> = (1..n_sys - 1)
            .map(|j| 2.0 * kinetic + potential_value(R, grid.system.point(j), params))
            .collect();
        let (vals, vecs) = lowest_eigenpairs(&diag, &off, n_states)
            .map_err(|e| Error::EigenNonConvergence { index: i, reason: e.to_string() })?;
        for n in 0..n_states {
            let mut full = vec![0.0; n_sys];
            full[1..n_sys - 1].copy_from_slice(&vecs[n]);
            let norm = trapezoid(&full.iter().map(|v| v * v).collect::<Vec<_>>(), h).sqrt();
            let sign = if i == 0 {
                if full.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 }
            } else {
                let prev = phi[n].row(i - 1);
                let overlap: f64 = prev.iter().zip(&full).map(|(a, b)| a * b).sum();
                if overlap < 0.0 { -1.0 } else { 1.0 }
            };
            for (dst, v) in phi[n].row_mut(i).iter_mut().zip(&full) {
                *dst = sign * v / norm;
            }
            epsilon[n][i] = vals[n];
        }
    }
    Ok(BoSurface { grid, n_states, epsilon, phi })
}

/// Wavefunction `ψ(R, r)` at external time `t`.
#[derive(Clone, Debug)]
pub struct JointState {
    pub psi: ComplexField2D,
    pub t: f64,
}

impl JointState {
    pub fn norm_squared(&self) -> f64 {
        self.density().integrate_all()
    }

    pub fn density(&self) -> Field2D<f64> {
        Field2D { grid: self.psi.grid, values: self.psi.values.mapv(|z| z.norm_sqr()) }
    }

    /// Marginal density `∫|ψ|² dr` on the clock axis.
    pub fn marginal(&self) -> Array1<f64> {
        self.density().integrate_over(crate::numgrid::Axis::System).values
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n2 = self.norm_squared();
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(Error::DegenerateState(format!("cannot normalize state with norm² {n2}")));
        }
        let s = 1.0 / n2.sqrt();
        self.psi.values.mapv_inplace(|z| z * s);
        Ok(())
    }
}

/// Gaussian clock packet times the ground BO state, normalized, at `t = 0`.
pub fn initial_state(params: &ModelParams, bo: &BoSurface) -> Result<JointState> {
    let grid = params.grid();
    if bo.grid != grid {
        return Err(Error::Dimension(format!(
            "BO surface grid {:?} differs from parameter grid {:?}",
            bo.grid, grid
        )));
    }
    let chi: Vec<f64> = grid
        .clock
        .points()
        .iter()
        .map(|&R| (-(R - params.R0).powi(2) / (4.0 * params.sigma * params.sigma)).exp())
        .collect();
    let chi_norm = trapezoid(&chi.iter().map(|c| c * c).collect::<Vec<_>>(), grid.clock.spacing()).sqrt();
    if !(chi_norm > 0.0) {
        return Err(Error::DegenerateState(format!(
            "initial clock packet at R0 = {} has no weight on the grid",
            params.R0
        )));
    }
    let phi0 = &bo.phi[0];
    let values = Array2::from_shape_fn(grid.shape(), |(i, j)| Complex64::new(chi[i] / chi_norm * phi0[[i, j]], 0.0));
    let mut state = JointState { psi: Field2D::new(grid, values)?, t: 0.0 };
    state.normalize()?;
    Ok(state)
}
