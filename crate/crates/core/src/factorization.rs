//! Exact factorization `ψ(R, r) = χ(R) φ(r|R)` of a snapshot.
//!
//! States are stored in the density gauge (`χ₀ ≥ 0` real) together with a gauge
//! phase `θ(R)` and its first two derivatives. Every quantity in another gauge is
//! assembled from the density-gauge data with the chain rule, so a gauge change
//! only moves roundoff around.
#![allow(non_snake_case)]

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;

use crate::model::{JointState, HBAR};
use crate::numgrid::{derivative_array_masked, diff_line, diff_line_masked, trapezoid, Axis, DerivOrder, ProductGrid2D};
use crate::propagator::Hamiltonian;
use crate::{Error, Result};

/// Marginal density below which `φ` is left undefined.
pub const DEFAULT_RHO_FLOOR: f64 = 1e-14;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn absent() -> Complex64 {
    Complex64::new(f64::NAN, f64::NAN)
}

/// Gauge phase `θ(R)` with its first and second derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugePhase {
    pub theta: Array1<f64>,
    pub d1: Array1<f64>,
    pub d2: Array1<f64>,
}

impl GaugePhase {
    pub fn zero(n: usize) -> Self {
        GaugePhase { theta: Array1::zeros(n), d1: Array1::zeros(n), d2: Array1::zeros(n) }
    }

    /// Phase sampled on the clock grid; derivatives by finite differences.
    pub fn from_values(grid: &ProductGrid2D, theta: Array1<f64>) -> Result<Self> {
        let n = grid.clock.n;
        if theta.len() != n {
            return Err(Error::Dimension(format!("gauge phase has {} values, clock grid has {n}", theta.len())));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("gauge phase must be finite".into()));
        }
        let h = grid.clock.spacing();
        let t = theta.to_vec();
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        diff_line(&t, h, DerivOrder::First, &mut d1);
        diff_line(&t, h, DerivOrder::Second, &mut d2);
        Ok(GaugePhase { theta, d1: d1.into(), d2: d2.into() })
    }

    /// Phase with analytically known derivatives.
    pub fn from_fn(
        grid: &ProductGrid2D,
        theta: impl Fn(f64) -> f64,
        d1: impl Fn(f64) -> f64,
        d2: impl Fn(f64) -> f64,
    ) -> Self {
        let pts = grid.clock.points();
        GaugePhase { theta: pts.mapv(&theta), d1: pts.mapv(&d1), d2: pts.mapv(&d2) }
    }

    fn compose(&self, other: &GaugePhase) -> GaugePhase {
        GaugePhase { theta: &self.theta + &other.theta, d1: &self.d1 + &other.d1, d2: &self.d2 + &other.d2 }
    }
}

/// Marginal amplitude and its clock derivatives in the current gauge.
#[derive(Clone, Debug)]
pub struct MarginalParts {
    pub chi: Array1<Complex64>,
    pub chi_R: Array1<Complex64>,
    pub chi_RR: Array1<Complex64>,
    /// Vector potential and its derivative; NaN where absent.
    pub a: Array1<f64>,
    pub a_R: Array1<f64>,
}

/// Conditional amplitude and its derivatives in the current gauge.
#[derive(Clone, Debug)]
pub struct ConditionalParts {
    pub phi: Array2<Complex64>,
    pub phi_R: Array2<Complex64>,
    pub phi_RR: Array2<Complex64>,
    pub phi_r: Array2<Complex64>,
    pub phi_rr: Array2<Complex64>,
    /// Where `φ` and all the derivatives above are available.
    pub defined: Array2<bool>,
}

/// Pointwise actions `T̂_r φ`, `Ûφ` and `Ĉφ` on the conditional amplitude.
#[derive(Clone, Debug)]
pub struct ConditionalOperators {
    pub kinetic: Array2<Complex64>,
    pub u_hat: Array2<Complex64>,
    pub c_hat: Array2<Complex64>,
    pub defined: Array2<bool>,
}

#[derive(Clone, Debug)]
pub struct FactorizedState {
    pub grid: ProductGrid2D,
    pub t: f64,
    pub rho_floor: f64,
    pub clock_mass: f64,
    pub system_mass: f64,
    /// Density-gauge marginal amplitude `√⟨ψ|ψ⟩_r`.
    pub chi0: Array1<f64>,
    /// Density-gauge conditional amplitude; NaN where undefined.
    pub phi0: Array2<Complex64>,
    /// `|χ|² > rho_floor`.
    pub defined: Array1<bool>,
    pub gauge: GaugePhase,
    /// Density-gauge vector potential; NaN where absent.
    pub a0: Array1<f64>,
    /// Scalar potential (gauge invariant); NaN where absent.
    pub epsilon: Array1<f64>,
    /// Imaginary part of the ε expectation value, kept as a diagnostic.
    pub epsilon_imag: Array1<f64>,
}

/// Splits `state` into marginal and conditional parts in the density gauge and
/// evaluates `A` and `ε`.
pub fn factorize(state: &JointState, ham: &Hamiltonian, rho_floor: f64) -> Result<FactorizedState> {
    let grid = state.psi.grid;
    grid.ensure_same(&ham.grid)?;
    if !(rho_floor >= 0.0 && rho_floor.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho_floor must be non-negative, got {rho_floor}")));
    }
    let marginal = state.marginal();
    if marginal.iter().all(|&m| m <= 0.0) {
        return Err(Error::DegenerateState("marginal density vanishes everywhere".into()));
    }
    let defined = marginal.mapv(|m| m > rho_floor);
    if !defined.iter().any(|&d| d) {
        return Err(Error::DegenerateState(format!("marginal density nowhere above floor {rho_floor:e}")));
    }
    let chi0 = marginal.mapv(|m| m.max(0.0).sqrt());
    let phi0 = Array2::from_shape_fn(grid.shape(), |(i, j)| {
        if defined[i] {
            state.psi.values[[i, j]] / chi0[i]
        } else {
            absent()
        }
    });
    let mut fs = FactorizedState {
        grid,
        t: state.t,
        rho_floor,
        clock_mass: ham.clock_mass,
        system_mass: ham.system_mass,
        chi0,
        phi0,
        defined,
        gauge: GaugePhase::zero(grid.clock.n),
        a0: Array1::from_elem(grid.clock.n, f64::NAN),
        epsilon: Array1::from_elem(grid.clock.n, f64::NAN),
        epsilon_imag: Array1::from_elem(grid.clock.n, f64::NAN),
    };
    fs.a0 = fs.compute_vector_potential();
    let (re, im) = fs.scalar_epsilon(&ham.potential);
    fs.epsilon = re;
    fs.epsilon_imag = im;
    Ok(fs)
}

impl FactorizedState {
    fn phase(&self, i: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.gauge.theta[i])
    }

    /// Marginal amplitude `χ = χ₀e^{−iθ}`.
    pub fn chi(&self) -> Array1<Complex64> {
        Array1::from_shape_fn(self.chi0.len(), |i| self.chi0[i] * self.phase(i).conj())
    }

    /// Conditional amplitude `φ = φ₀e^{iθ}`; NaN where undefined.
    pub fn phi(&self) -> Array2<Complex64> {
        Array2::from_shape_fn(self.phi0.dim(), |(i, j)| self.phi0[[i, j]] * self.phase(i))
    }

    pub fn marginal_density(&self) -> Array1<f64> {
        self.chi0.mapv(|c| c * c)
    }

    /// `|φ(r|R)|²`; NaN where undefined.
    pub fn conditional_density(&self) -> Array2<f64> {
        self.phi0.mapv(|z| z.norm_sqr())
    }

    /// Vector potential `A = A₀ + θ'`; NaN where absent.
    pub fn vector_potential(&self) -> Array1<f64> {
        &self.a0 + &self.gauge.d1
    }

    /// `χφ`, with zeros where `φ` is undefined.
    pub fn reconstruct(&self) -> Array2<Complex64> {
        let chi = self.chi();
        let phi = self.phi();
        Array2::from_shape_fn(self.phi0.dim(), |(i, j)| {
            if self.defined[i] {
                chi[i] * phi[[i, j]]
            } else {
                Complex64::default()
            }
        })
    }

    /// `χ' = χ₀e^{−iθ}`, `φ' = φ₀e^{iθ}`, `A' = A + θ'`, composed with any earlier gauge.
    pub fn gauge_transform(&self, theta: &GaugePhase) -> Result<FactorizedState> {
        if theta.theta.len() != self.grid.clock.n || theta.d1.len() != self.grid.clock.n || theta.d2.len() != self.grid.clock.n {
            return Err(Error::Dimension("gauge phase does not match the clock grid".into()));
        }
        let mut out = self.clone();
        out.gauge = self.gauge.compose(theta);
        Ok(out)
    }

    /// Rows as a 2D availability mask.
    fn row_mask(&self) -> Array2<bool> {
        Array2::from_shape_fn(self.phi0.dim(), |(i, _)| self.defined[i])
    }

    /// Density-gauge derivatives of `φ₀`.
    fn phi0_derivatives(&self) -> [(Array2<Complex64>, Array2<bool>); 4] {
        let mask = self.row_mask();
        let filled = Zip::from(&self.phi0).and(&mask).map_collect(|z, &d| if d { *z } else { Complex64::default() });
        let g = &self.grid;
        [
            derivative_array_masked(&filled, &mask, g, Axis::Clock, DerivOrder::First),
            derivative_array_masked(&filled, &mask, g, Axis::Clock, DerivOrder::Second),
            derivative_array_masked(&filled, &mask, g, Axis::System, DerivOrder::First),
            derivative_array_masked(&filled, &mask, g, Axis::System, DerivOrder::Second),
        ]
    }

    fn compute_vector_potential(&self) -> Array1<f64> {
        let [(d_R, def_R), ..] = self.phi0_derivatives();
        let h = self.grid.system.spacing();
        let n = self.grid.clock.n;
        Array1::from_shape_fn(n, |i| {
            if !self.defined[i] || !def_R.row(i).iter().all(|&d| d) {
                return f64::NAN;
            }
            let integrand: Vec<f64> =
                self.phi0.row(i).iter().zip(d_R.row(i)).map(|(p, dp)| (p.conj() * dp).im).collect();
            HBAR * trapezoid(&integrand, h)
        })
    }

    /// Clock-derivative data for `χ` and `A` in the current gauge.
    pub fn marginal_parts(&self) -> MarginalParts {
        let n = self.grid.clock.n;
        let h = self.grid.clock.spacing();
        let c = self.chi0.to_vec();
        let mut c1 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        diff_line(&c, h, DerivOrder::First, &mut c1);
        diff_line(&c, h, DerivOrder::Second, &mut c2);
        let (th, t1, t2) = (&self.gauge.theta, &self.gauge.d1, &self.gauge.d2);
        let chi = Array1::from_shape_fn(n, |i| c[i] * Complex64::from_polar(1.0, -th[i]));
        let chi_R = Array1::from_shape_fn(n, |i| Complex64::from_polar(1.0, -th[i]) * (c1[i] - I * t1[i] * c[i]));
        let chi_RR = Array1::from_shape_fn(n, |i| {
            Complex64::from_polar(1.0, -th[i]) * (c2[i] - 2.0 * I * t1[i] * c1[i] - I * t2[i] * c[i] - t1[i] * t1[i] * c[i])
        });
        let a0_def: Vec<bool> = self.a0.iter().map(|v| v.is_finite()).collect();
        let a0_vals: Vec<f64> = self.a0.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect();
        let mut a0_R = vec![0.0; n];
        let mut a0_R_def = vec![false; n];
        diff_line_masked(&a0_vals, &a0_def, h, DerivOrder::First, &mut a0_R, &mut a0_R_def);
        let a = self.vector_potential();
        let a_R = Array1::from_shape_fn(n, |i| if a0_R_def[i] { a0_R[i] + t2[i] } else { f64::NAN });
        MarginalParts { chi, chi_R, chi_RR, a, a_R }
    }

    /// Conditional amplitude and its derivatives in the current gauge.
    pub fn conditional_parts(&self) -> ConditionalParts {
        let [(d_R, m_R), (d_RR, m_RR), (d_r, m_r), (d_rr, m_rr)] = self.phi0_derivatives();
        let dim = self.phi0.dim();
        let (th, t1, t2) = (&self.gauge.theta, &self.gauge.d1, &self.gauge.d2);
        let defined = Array2::from_shape_fn(dim, |ij| m_R[ij] && m_RR[ij] && m_r[ij] && m_rr[ij]);
        let mut phi = Array2::from_elem(dim, absent());
        let mut phi_R = phi.clone();
        let mut phi_RR = phi.clone();
        let mut phi_r = phi.clone();
        let mut phi_rr = phi.clone();
        for ((i, j), &ok) in defined.indexed_iter() {
            if !ok {
                continue;
            }
            let e = Complex64::from_polar(1.0, th[i]);
            let p = self.phi0[[i, j]];
            phi[[i, j]] = e * p;
            phi_R[[i, j]] = e * (d_R[[i, j]] + I * t1[i] * p);
            phi_RR[[i, j]] = e * (d_RR[[i, j]] + 2.0 * I * t1[i] * d_R[[i, j]] + I * t2[i] * p - t1[i] * t1[i] * p);
            phi_r[[i, j]] = e * d_r[[i, j]];
            phi_rr[[i, j]] = e * d_rr[[i, j]];
        }
        ConditionalParts { phi, phi_R, phi_RR, phi_r, phi_rr, defined }
    }

    /// `T̂_r φ`, `Ûφ = (P̂−A)²φ/2M` and `Ĉφ = −(1/M)[(P̂+A)χ/χ]·(P̂−A)φ`.
    pub fn conditional_operators(&self) -> ConditionalOperators {
        let cp = self.conditional_parts();
        let mp = self.marginal_parts();
        let (M, m) = (self.clock_mass, self.system_mass);
        let dim = cp.phi.dim();
        let defined = Array2::from_shape_fn(dim, |(i, j)| {
            cp.defined[[i, j]] && mp.a[i].is_finite() && mp.a_R[i].is_finite() && mp.chi[i].norm() > 0.0
        });
        let mut kinetic = Array2::from_elem(dim, absent());
        let mut u_hat = kinetic.clone();
        let mut c_hat = kinetic.clone();
        for ((i, j), &ok) in defined.indexed_iter() {
            if !ok {
                continue;
            }
            let (a, a_R) = (mp.a[i], mp.a_R[i]);
            let (p, p_R, p_RR) = (cp.phi[[i, j]], cp.phi_R[[i, j]], cp.phi_RR[[i, j]]);
            kinetic[[i, j]] = -HBAR * HBAR / (2.0 * m) * cp.phi_rr[[i, j]];
            u_hat[[i, j]] = (-HBAR * HBAR * p_RR + I * HBAR * a_R * p + 2.0 * I * HBAR * a * p_R + a * a * p) / (2.0 * M);
            let clock_factor = (-I * HBAR * mp.chi_R[i] + a * mp.chi[i]) / mp.chi[i];
            c_hat[[i, j]] = -clock_factor * (-I * HBAR * p_R - a * p) / M;
        }
        ConditionalOperators { kinetic, u_hat, c_hat, defined }
    }

    /// `⟨φ|p̂²/2m + V + Û − Ĉ|φ⟩_r`, real and imaginary parts; NaN where absent.
    pub fn scalar_epsilon(&self, potential: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
        let ops = self.conditional_operators();
        let phi = self.phi();
        let n = self.grid.clock.n;
        let h = self.grid.system.spacing();
        let mut re = Array1::from_elem(n, f64::NAN);
        let mut im = Array1::from_elem(n, f64::NAN);
        for i in 0..n {
            if !ops.defined.row(i).iter().all(|&d| d) {
                continue;
            }
            let integrand: Vec<Complex64> = (0..self.grid.system.n)
                .map(|j| {
                    let p = phi[[i, j]];
                    let hp = ops.kinetic[[i, j]] + potential[[i, j]] * p + ops.u_hat[[i, j]] - ops.c_hat[[i, j]];
                    p.conj() * hp
                })
                .collect();
            let e = trapezoid(&integrand, h);
            re[i] = e.re;
            im[i] = e.im;
        }
        (re, im)
    }

    /// `|⟨φ|φ⟩_r − 1|` maximized over defined clock points.
    pub fn partial_normalization_error(&self) -> f64 {
        let h = self.grid.system.spacing();
        self.defined
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(i, _)| {
                let dens: Vec<f64> = self.phi0.row(i).iter().map(|z| z.norm_sqr()).collect();
                (trapezoid(&dens, h) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `∫ |ρ(r|R) − φ_ref(r|R)²| dr` at each clock point with `|χ|² > threshold`,
    /// NaN elsewhere.
    pub fn adiabatic_distance(&self, reference: &Array2<f64>, threshold: f64) -> Result<Array1<f64>> {
        if reference.dim() != self.grid.shape() {
            return Err(Error::Dimension(format!("reference has shape {:?}, grid {:?}", reference.dim(), self.grid.shape())));
        }
        let h = self.grid.system.spacing();
        let cond = self.conditional_density();
        let marg = self.marginal_density();
        Ok(Array1::from_shape_fn(self.grid.clock.n, |i| {
            if !(self.defined[i] && marg[i] > threshold) {
                return f64::NAN;
            }
            let d: Vec<f64> = cond.row(i).iter().zip(reference.row(i)).map(|(c, p)| (c - p * p).abs()).collect();
            trapezoid(&d, h)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bo_solve, initial_state, ModelParams};
    use crate::numgrid::{Field2D, Grid1D};
    use rand::{Rng, SeedableRng};

    fn grid(nc: usize, ns: usize) -> ProductGrid2D {
        ProductGrid2D::new(Grid1D::new(-5.0, 5.0, nc).unwrap(), Grid1D::new(-6.0, 6.0, ns).unwrap()).unwrap()
    }

    fn free_ham(g: ProductGrid2D) -> Hamiltonian {
        Hamiltonian::new(g, 4.0, 1.0, Array2::zeros(g.shape())).unwrap()
    }

    fn state_from(g: ProductGrid2D, f: impl Fn(f64, f64) -> Complex64) -> JointState {
        let mut st = JointState { psi: Field2D::from_fn(g, f), t: 0.0 };
        st.normalize().unwrap();
        st
    }

    fn gauss(x: f64, c: f64, s: f64) -> f64 {
        (-(x - c).powi(2) / (4.0 * s * s)).exp()
    }

    #[test]
    fn separable_state_gives_row_independent_conditional() {
        let g = grid(64, 80);
        let st = state_from(g, |R, r| Complex64::new(gauss(R, 0.3, 0.8) * gauss(r, -0.5, 1.1), 0.0));
        let fs = factorize(&st, &free_ham(g), DEFAULT_RHO_FLOOR).unwrap();
        let h = g.system.spacing();
        let norm_g = trapezoid(&g.system.points().mapv(|r| gauss(r, -0.5, 1.1).powi(2)).to_vec(), h).sqrt();
        for i in 0..g.clock.n {
            if !fs.defined[i] {
                continue;
            }
            for j in 0..g.system.n {
                let expected = gauss(g.system.point(j), -0.5, 1.1) / norm_g;
                assert!((fs.phi0[[i, j]].re - expected).abs() < 1e-10);
            }
        }
        let a = fs.vector_potential();
        assert!(a.iter().filter(|v| v.is_finite()).all(|v| v.abs() < 1e-12));
        assert!(fs.partial_normalization_error() < 1e-8);
    }

    #[test]
    fn pure_clock_phase_gives_constant_vector_potential() {
        // φ(r|R) = g(r)e^{ikR} lives entirely in the conditional in the density gauge
        let g = grid(256, 80);
        let k = 0.7;
        let st = state_from(g, |R, r| Complex64::from_polar(gauss(R, 0.0, 0.9) * gauss(r, 0.2, 1.0), k * R));
        let fs = factorize(&st, &free_ham(g), DEFAULT_RHO_FLOOR).unwrap();
        for v in fs.vector_potential().iter().filter(|v| v.is_finite()) {
            assert!((v - HBAR * k).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn random_state_reconstructs() {
        let g = grid(24, 20);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values = Array2::from_shape_simple_fn(g.shape(), || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut st = JointState { psi: Field2D::new(g, values).unwrap(), t: 0.0 };
        st.normalize().unwrap();
        let fs = factorize(&st, &free_ham(g), DEFAULT_RHO_FLOOR).unwrap();
        let rec = fs.reconstruct();
        for (a, b) in rec.iter().zip(st.psi.values.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let direct = st.marginal();
        for (a, b) in fs.marginal_density().iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let chi2: Vec<f64> = fs.marginal_density().to_vec();
        assert!((trapezoid(&chi2, g.clock.spacing()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_state_is_degenerate() {
        let g = grid(16, 16);
        let st = JointState { psi: Field2D::from_fn(g, |_, _| Complex64::default()), t: 0.0 };
        assert!(matches!(factorize(&st, &free_ham(g), DEFAULT_RHO_FLOOR), Err(Error::DegenerateState(_))));
    }

    #[test]
    fn undefined_region_is_absent() {
        // clock packet confined to R < 0
        let g = grid(64, 40);
        let st = state_from(g, |R, r| Complex64::new(if R < 0.0 { gauss(R, -2.5, 0.5) } else { 0.0 } * gauss(r, 0.0, 1.0), 0.0));
        let fs = factorize(&st, &free_ham(g), DEFAULT_RHO_FLOOR).unwrap();
        for i in 0..g.clock.n {
            if g.clock.point(i) > 0.0 {
                assert!(!fs.defined[i]);
                assert!(fs.epsilon[i].is_nan() && fs.a0[i].is_nan());
                assert!(fs.phi0.row(i).iter().all(|z| z.re.is_nan()));
            }
        }
    }

    #[test]
    fn linear_gauge_shifts_vector_potential() {
        let g = grid(48, 40);
        let st = state_from(g, |R, r| Complex64::from_polar(gauss(R, 0.0, 1.0) * gauss(r, 0.0, 1.0), 0.3 * R * r));
        let fs = factorize(&st, &free_ham(g), DEFAULT_RHO_FLOOR).unwrap();
        let c = 0.8;
        let theta = GaugePhase::from_values(&g, g.clock.points().mapv(|R| c * R)).unwrap();
        let gt = fs.gauge_transform(&theta).unwrap();
        let (a, b) = (fs.vector_potential(), gt.vector_potential());
        for (x, y) in a.iter().zip(b.iter()).filter(|(x, _)| x.is_finite()) {
            assert!((y - x - c).abs() < 1e-13);
        }
        let identity = fs.gauge_transform(&GaugePhase::zero(g.clock.n)).unwrap();
        assert_eq!(identity.chi(), fs.chi());
        for (x, y) in gt.reconstruct().iter().zip(st.psi.values.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn epsilon_gauge_invariant() {
        let g = grid(48, 40);
        let ham = Hamiltonian::new(g, 3.0, 1.0, Field2D::from_fn(g, |R, r| 0.2 * (r - 0.3 * R).powi(2) + 0.05 * R * R).values).unwrap();
        let st = state_from(g, |R, r| Complex64::from_polar(gauss(R, 0.4, 0.9) * gauss(r, 0.1 * R, 1.0), 0.5 * R * r + 0.2 * R));
        let fs = factorize(&st, &ham, DEFAULT_RHO_FLOOR).unwrap();
        let theta = GaugePhase::from_fn(&g, |R| (1.3 * R).sin(), |R| 1.3 * (1.3 * R).cos(), |R| -1.69 * (1.3 * R).sin());
        let gt = fs.gauge_transform(&theta).unwrap();
        let (e1, _) = gt.scalar_epsilon(&ham.potential);
        for (a, b) in fs.epsilon.iter().zip(e1.iter()).filter(|(a, _)| a.is_finite()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn adiabatic_distance_of_shifted_gaussian() {
        let g = grid(64, 240);
        let st = state_from(g, |R, r| Complex64::new(gauss(R, 0.3, 0.8) * gauss(r, -0.5, 1.1), 0.0));
        let fs = factorize(&st, &free_ham(g), DEFAULT_RHO_FLOOR).unwrap();
        let norm = (2.0 * std::f64::consts::PI * 1.1f64.powi(2)).powf(-0.25);
        let reference = Array2::from_shape_fn(g.shape(), |(_, j)| norm * gauss(g.system.point(j), 0.5, 1.1));
        let d = fs.adiabatic_distance(&reference, 1e-8).unwrap();
        // two unit-variance-scaled normals a distance 1 apart
        let exact = 2.0 * libm::erf(1.0 / (2.0 * 2f64.sqrt() * 1.1));
        let marg = st.marginal();
        for i in 0..g.clock.n {
            if marg[i] > 1e-8 {
                assert!((d[i] - exact).abs() < 1e-3, "{} vs {exact}", d[i]);
            } else {
                assert!(d[i].is_nan());
            }
        }
        let own = fs.conditional_density().mapv(f64::sqrt);
        assert!(fs.adiabatic_distance(&own, 1e-8).unwrap().iter().all(|v| v.is_nan() || *v < 1e-12));
    }

    #[test]
    fn model_initial_state_factorizes() {
        let p = ModelParams {
            clock_grid: Grid1D { min: -9.0, max: 9.0, n: 96 },
            ..ModelParams::default()
        };
        let bo = bo_solve(&p, 1).unwrap();
        let st = initial_state(&p, &bo).unwrap();
        let ham = Hamiltonian::from_params(&p).unwrap();
        let fs = factorize(&st, &ham, DEFAULT_RHO_FLOOR).unwrap();
        let chi2 = st.marginal();
        for i in 0..p.clock_grid.n {
            if chi2[i] <= 1e-14 {
                continue;
            }
            assert!((fs.chi0[i] - chi2[i].sqrt()).abs() < 1e-10);
            assert!(fs.a0[i].is_nan() || fs.a0[i].abs() < 1e-12);
            for j in 0..p.system_grid.n {
                assert!((fs.phi0[[i, j]].re - bo.phi[0][[i, j]]).abs() < 1e-10);
                assert_eq!(fs.phi0[[i, j]].im, 0.0);
            }
        }
        // real χ, real φ, A = 0: Ĉ reduces to a product of real factors and its
        // expectation vanishes by partial normalization
        let ops = fs.conditional_operators();
        let h = p.system_grid.spacing();
        for i in 0..p.clock_grid.n {
            if !fs.epsilon[i].is_finite() || chi2[i] < 1e-8 {
                continue;
            }
            let phi = fs.phi0.row(i);
            let c: Vec<f64> = (0..p.system_grid.n).map(|j| (phi[j].conj() * ops.c_hat[[i, j]]).re).collect();
            assert!(trapezoid(&c, h).abs() < 1e-6);
            // ε ≈ ε₀(R) + ⟨φ₀|Û|φ₀⟩, an O(μ) correction
            let u: Vec<f64> = (0..p.system_grid.n).map(|j| (phi[j].conj() * ops.u_hat[[i, j]]).re).collect();
            let corr = trapezoid(&u, h);
            assert!(corr >= 0.0 && corr < 1e-2);
            // 2nd-order FD BO energies versus the 4th-order stencil used here
            assert!((fs.epsilon[i] - bo.epsilon[0][i] - corr).abs() < 5e-4, "R={}", p.clock_grid.point(i));
        }
    }
}
