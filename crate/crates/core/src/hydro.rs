//! Momentum fields, quantum potentials and residuals of the hydrodynamic equations.
//!
//! Every phase gradient is formed from Im/Re ratios of the amplitude and its
//! derivatives; nothing is unwrapped. Residuals come in two forms: `Clock` is the
//! stationary clock-dependent equation as written for an energy eigenstate, and
//! `TimeClock` adds the terms a time-dependent snapshot carries, using a supplied
//! `∂_tψ`. Both coincide on eigenstates.
#![allow(non_snake_case)]

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::factorization::{ConditionalParts, FactorizedState, MarginalParts};
use crate::model::{JointState, HBAR};
use crate::numgrid::{derivative_array, derivative_array_masked, diff_line_masked, trapezoid, Axis, DerivOrder, ProductGrid2D};
use crate::propagator::Hamiltonian;
use crate::{Error, Result};

/// `|φ|²` below which conditional ratio fields are not formed.
pub const CONDITIONAL_FIELD_FLOOR: f64 = 1e-12;
/// `|ψ|²` below which joint ratio fields are not formed.
pub const JOINT_FIELD_FLOOR: f64 = 1e-20;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Term RMS at or below which an equation is treated as trivially satisfied
/// and no relative residual is formed.
pub const TERM_FLOOR: f64 = 1e-12;

/// Points where residuals are reported: `|χ|²` and `ρ(r|R)` above thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub marginal_threshold: f64,
    /// Fraction of `|χ|²` below which `|ψ|²` is treated as tail; quotient
    /// fields there are dominated by propagation error.
    pub conditional_threshold: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region { marginal_threshold: 1e-8, conditional_threshold: 1e-4 }
    }
}

impl Region {
    pub fn mask(&self, psi: &Array2<Complex64>, grid: &ProductGrid2D) -> Array2<bool> {
        let h = grid.system.spacing();
        let marginal: Vec<f64> = psi
            .rows()
            .into_iter()
            .map(|row| trapezoid(&row.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>(), h))
            .collect();
        Array2::from_shape_fn(psi.dim(), |(i, j)| {
            marginal[i] > self.marginal_threshold && psi[[i, j]].norm_sqr() > self.conditional_threshold * marginal[i]
        })
    }
}

/// Which version of a clock-dependent equation to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// Stationary equation, exact for energy eigenstates.
    Clock,
    /// Stationary equation plus the explicit time-dependence of the snapshot.
    TimeClock,
    /// Time-dependent equation in the joint configuration space.
    Time,
}

impl Form {
    pub fn label(self) -> &'static str {
        match self {
            Form::Clock => "clock",
            Form::TimeClock => "time_clock",
            Form::Time => "time",
        }
    }
}

/// NaN-padded derivative of a real field on its defined set.
fn masked_derivative(values: &Array2<f64>, defined: &Array2<bool>, grid: &ProductGrid2D, axis: Axis, order: DerivOrder) -> Array2<f64> {
    let filled = Zip::from(values).and(defined).map_collect(|v, &d| if d && v.is_finite() { *v } else { 0.0 });
    let mask = Zip::from(values).and(defined).map_collect(|v, &d| d && v.is_finite());
    let (d, ok) = derivative_array_masked(&filled, &mask, grid, axis, order);
    Zip::from(&d).and(&ok).map_collect(|v, &o| if o { *v } else { f64::NAN })
}

fn masked_derivative_1d(values: &Array1<f64>, h: f64, order: DerivOrder) -> Array1<f64> {
    let def: Vec<bool> = values.iter().map(|v| v.is_finite()).collect();
    let vals: Vec<f64> = values.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect();
    let mut out = vec![0.0; vals.len()];
    let mut ok = vec![false; vals.len()];
    diff_line_masked(&vals, &def, h, order, &mut out, &mut ok);
    Array1::from_shape_fn(out.len(), |i| if ok[i] { out[i] } else { f64::NAN })
}

/// Classical and quantum momentum fields of a complex amplitude along both axes.
#[derive(Clone, Debug)]
pub struct MomentumFieldSet {
    /// `ħ Im(f̄∂_R f)/|f|² + sign·A`.
    pub P_cl: Array2<f64>,
    /// `ħ Re(f̄∂_R f)/|f|²`.
    pub Pi_q: Array2<f64>,
    pub p_cl: Array2<f64>,
    pub pi_q: Array2<f64>,
    /// `|f|² P_cl / M`.
    pub J: Array2<f64>,
    /// `|f|² p_cl / m`.
    pub j: Array2<f64>,
    pub defined: Array2<bool>,
}

fn fields_from_parts(
    f: &Array2<Complex64>,
    f_R: &Array2<Complex64>,
    f_r: &Array2<Complex64>,
    defined: &Array2<bool>,
    a_signed: Option<&Array1<f64>>,
    clock_mass: f64,
    system_mass: f64,
) -> MomentumFieldSet {
    let dim = f.dim();
    let nan = || Array2::from_elem(dim, f64::NAN);
    let (mut P, mut Pi, mut p, mut pi, mut J, mut j) = (nan(), nan(), nan(), nan(), nan(), nan());
    let mut ok = defined.clone();
    for ((i, jj), d) in ok.indexed_iter_mut() {
        let a = a_signed.map_or(0.0, |a| a[i]);
        if !*d || !a.is_finite() {
            *d = false;
            continue;
        }
        let z = f[[i, jj]];
        let rho = z.norm_sqr();
        let gR = z.conj() * f_R[[i, jj]] / rho;
        let gr = z.conj() * f_r[[i, jj]] / rho;
        P[[i, jj]] = HBAR * gR.im + a;
        Pi[[i, jj]] = HBAR * gR.re;
        p[[i, jj]] = HBAR * gr.im;
        pi[[i, jj]] = HBAR * gr.re;
        J[[i, jj]] = rho * P[[i, jj]] / clock_mass;
        j[[i, jj]] = rho * p[[i, jj]] / system_mass;
    }
    MomentumFieldSet { P_cl: P, Pi_q: Pi, p_cl: p, pi_q: pi, J, j, defined: ok }
}

/// Momentum fields of `field` where `|field|² > floor`. `a`, if given, is added
/// to the clock field with the caller's sign (`+A` for χ, `−A` for φ).
pub fn momentum_fields(
    field: &Array2<Complex64>,
    grid: &ProductGrid2D,
    a: Option<(&Array1<f64>, f64)>,
    clock_mass: f64,
    system_mass: f64,
    floor: f64,
) -> MomentumFieldSet {
    let f_R = derivative_array(field, grid, Axis::Clock, DerivOrder::First);
    let f_r = derivative_array(field, grid, Axis::System, DerivOrder::First);
    let defined = field.mapv(|z| z.norm_sqr() > floor);
    let signed = a.map(|(a, s)| a.mapv(|v| s * v));
    fields_from_parts(field, &f_R, &f_r, &defined, signed.as_ref(), clock_mass, system_mass)
}

/// `−(1/2m)(ħ∂π + π²)` along `axis` from the quantum momentum field; NaN where undefined.
pub fn quantum_potential(field: &Array2<Complex64>, grid: &ProductGrid2D, axis: Axis, mass: f64, floor: f64) -> Array2<f64> {
    let fs = momentum_fields(field, grid, None, 1.0, 1.0, floor);
    let pi = if axis == Axis::Clock { fs.Pi_q } else { fs.pi_q };
    potential_from_pi(&pi, &fs.defined, grid, axis, mass)
}

/// Fields of `ψ` used along trajectories: momentum fields and the total quantum
/// potential `U + u`, with the joint floor.
pub fn joint_fields(psi: &Array2<Complex64>, grid: &ProductGrid2D, clock_mass: f64, system_mass: f64) -> (MomentumFieldSet, Array2<f64>) {
    let f = momentum_fields(psi, grid, None, clock_mass, system_mass, JOINT_FIELD_FLOOR);
    let U = potential_from_pi(&f.Pi_q, &f.defined, grid, Axis::Clock, clock_mass);
    let u = potential_from_pi(&f.pi_q, &f.defined, grid, Axis::System, system_mass);
    (f, U + u)
}

fn potential_from_pi(pi: &Array2<f64>, defined: &Array2<bool>, grid: &ProductGrid2D, axis: Axis, mass: f64) -> Array2<f64> {
    let dpi = masked_derivative(pi, defined, grid, axis, DerivOrder::First);
    Zip::from(pi).and(&dpi).map_collect(|p, d| -(HBAR * d + p * p) / (2.0 * mass))
}

/// `−(ħ²/2m)∂²|f|/|f|` along `axis`; the textbook form of the quantum potential.
pub fn quantum_potential_amplitude_form(field: &Array2<Complex64>, grid: &ProductGrid2D, axis: Axis, mass: f64, floor: f64) -> Array2<f64> {
    let amp = field.mapv(|z| z.norm());
    let defined = field.mapv(|z| z.norm_sqr() > floor);
    let d2 = masked_derivative(&amp, &defined, grid, axis, DerivOrder::Second);
    Zip::from(&amp).and(&d2).map_collect(|a, d| -HBAR * HBAR / (2.0 * mass) * d / a)
}

/// Terms of the clock-dependent hydrodynamic equations for one factorized snapshot.
#[derive(Clone, Debug)]
pub struct ClockFields {
    /// Conditional fields with `P_cl = P[φ,−A]`.
    pub phi: MomentumFieldSet,
    /// `P[χ,A]` and `Π[χ]` on the clock grid.
    pub chi_P: Array1<f64>,
    pub chi_Pi: Array1<f64>,
    /// Conditional density `ρ(r|R)`; NaN where undefined.
    pub rho: Array2<f64>,
    pub u: Array2<f64>,
    pub U: Array2<f64>,
    pub H_S: Array2<f64>,
    pub H_SC: Array2<f64>,
    pub d_r_p: Array2<f64>,
    pub d_R_P: Array2<f64>,
}

pub fn clock_fields(fs: &FactorizedState, potential: &Array2<f64>) -> ClockFields {
    let cp: ConditionalParts = fs.conditional_parts();
    let mp: MarginalParts = fs.marginal_parts();
    clock_fields_from_parts(fs, &cp, &mp, potential)
}

/// Conditional momentum fields (`P_cl = P[φ,−A]`) and the marginal pair `P[χ,A]`, `Π[χ]`.
pub fn conditional_momentum(fs: &FactorizedState) -> (MomentumFieldSet, Array1<f64>, Array1<f64>) {
    conditional_momentum_from_parts(fs, &fs.conditional_parts(), &fs.marginal_parts())
}

fn conditional_momentum_from_parts(fs: &FactorizedState, cp: &ConditionalParts, mp: &MarginalParts) -> (MomentumFieldSet, Array1<f64>, Array1<f64>) {
    let defined = Zip::from(&cp.defined).and(&cp.phi).map_collect(|&d, z| d && z.norm_sqr() > CONDITIONAL_FIELD_FLOOR);
    let minus_a = mp.a.mapv(|v| -v);
    let phi = fields_from_parts(&cp.phi, &cp.phi_R, &cp.phi_r, &defined, Some(&minus_a), fs.clock_mass, fs.system_mass);
    let n = fs.grid.clock.n;
    let mut chi_P = Array1::from_elem(n, f64::NAN);
    let mut chi_Pi = Array1::from_elem(n, f64::NAN);
    for i in 0..n {
        let c = mp.chi[i];
        if fs.defined[i] && mp.a[i].is_finite() {
            let ratio = c.conj() * mp.chi_R[i] / c.norm_sqr();
            chi_P[i] = HBAR * ratio.im + mp.a[i];
            chi_Pi[i] = HBAR * ratio.re;
        }
    }
    (phi, chi_P, chi_Pi)
}

fn clock_fields_from_parts(fs: &FactorizedState, cp: &ConditionalParts, mp: &MarginalParts, potential: &Array2<f64>) -> ClockFields {
    let (M, m) = (fs.clock_mass, fs.system_mass);
    let g = &fs.grid;
    let (phi, chi_P, chi_Pi) = conditional_momentum_from_parts(fs, cp, mp);
    let u = potential_from_pi(&phi.pi_q, &phi.defined, g, Axis::System, m);
    let U = potential_from_pi(&phi.Pi_q, &phi.defined, g, Axis::Clock, M);
    let H_S = Zip::from(&phi.p_cl).and(&u).and(potential).map_collect(|p, u, v| p * p / (2.0 * m) + u + v);
    let H_SC = Zip::from(&phi.P_cl).and(&U).map_collect(|P, U| P * P / (2.0 * M) + U);
    let d_r_p = masked_derivative(&phi.p_cl, &phi.defined, g, Axis::System, DerivOrder::First);
    let d_R_P = masked_derivative(&phi.P_cl, &phi.defined, g, Axis::Clock, DerivOrder::First);
    let rho = cp.phi.mapv(|z| z.norm_sqr());
    ClockFields { phi, chi_P, chi_Pi, rho, u, U, H_S, H_SC, d_r_p, d_R_P }
}

/// Named RMS of one constituent term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRms {
    pub name: String,
    pub rms: f64,
}

/// Residual of one equation over the report region.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub equation: String,
    pub form: Form,
    pub t: f64,
    /// Region points where the residual could be evaluated.
    pub region_size: usize,
    /// Region points skipped because a derivative was unavailable.
    pub excluded: usize,
    pub rms: f64,
    pub max_abs: f64,
    pub largest_term: String,
    pub largest_term_rms: f64,
    pub relative_rms: f64,
    pub spacing_clock: f64,
    pub spacing_system: f64,
    pub terms: Vec<TermRms>,
    /// `|residual|` on the grid, NaN outside the evaluated region.
    #[serde(skip)]
    pub field: Array2<f64>,
}

fn rms_over(values: &Array2<f64>, mask: &Array2<bool>) -> f64 {
    let (s, n) = Zip::from(values).and(mask).fold((0.0, 0usize), |(s, n), v, &m| if m { (s + v * v, n + 1) } else { (s, n) });
    if n == 0 { f64::NAN } else { (s / n as f64).sqrt() }
}

struct Assembly<'a> {
    equation: &'a str,
    form: Form,
    t: f64,
    grid: &'a ProductGrid2D,
    region: &'a Array2<bool>,
}

impl Assembly<'_> {
    /// `residual` holds magnitudes; `terms` are magnitudes of the constituents.
    fn finish(self, residual: Array2<f64>, terms: Vec<(&str, Array2<f64>)>) -> ResidualReport {
        let mut usable = Zip::from(self.region).and(&residual).map_collect(|&r, v| r && v.is_finite());
        for (_, t) in &terms {
            Zip::from(&mut usable).and(t).for_each(|u, v| *u = *u && v.is_finite());
        }
        let region_size = usable.iter().filter(|&&u| u).count();
        let excluded = self.region.iter().filter(|&&r| r).count() - region_size;
        let rms = rms_over(&residual, &usable);
        let max_abs = Zip::from(&residual).and(&usable).fold(0.0f64, |m, v, &u| if u { m.max(v.abs()) } else { m });
        let terms: Vec<TermRms> = terms.iter().map(|(n, t)| TermRms { name: n.to_string(), rms: rms_over(t, &usable) }).collect();
        let largest = terms.iter().max_by(|a, b| a.rms.total_cmp(&b.rms)).cloned().unwrap_or(TermRms { name: String::new(), rms: f64::NAN });
        let field = Zip::from(&residual).and(&usable).map_collect(|v, &u| if u { v.abs() } else { f64::NAN });
        ResidualReport {
            equation: self.equation.to_string(),
            form: self.form,
            t: self.t,
            region_size,
            excluded,
            rms,
            max_abs,
            largest_term: largest.name,
            largest_term_rms: largest.rms,
            relative_rms: if largest.rms > TERM_FLOOR { rms / largest.rms } else { f64::NAN },
            spacing_clock: self.grid.clock.spacing(),
            spacing_system: self.grid.system.spacing(),
            terms,
            field,
        }
    }
}

fn check_time_derivative(dpsi_dt: Option<&Array2<Complex64>>, grid: &ProductGrid2D) -> Result<()> {
    if let Some(d) = dpsi_dt {
        if d.dim() != grid.shape() {
            return Err(Error::Dimension(format!("time derivative shape {:?} does not match grid {:?}", d.dim(), grid.shape())));
        }
    }
    Ok(())
}

fn form_of(dpsi_dt: Option<&Array2<Complex64>>) -> Form {
    if dpsi_dt.is_some() { Form::TimeClock } else { Form::Clock }
}

/// `(1/2M)(P̂+A)²χ / χ` per clock point.
fn clock_kinetic_ratio(mp: &MarginalParts, M: f64) -> Array1<Complex64> {
    Array1::from_shape_fn(mp.chi.len(), |i| {
        let (c, c1, c2, a, a1) = (mp.chi[i], mp.chi_R[i], mp.chi_RR[i], mp.a[i], mp.a_R[i]);
        (-HBAR * HBAR * c2 - I * HBAR * a1 * c - 2.0 * I * HBAR * a * c1 + a * a * c) / (2.0 * M * c)
    })
}

/// `ħ Re(∂_tψ/ψ) − ħ Re⟨ψ|∂_tψ⟩_r/|χ|²`, the rate of change of the conditional log-amplitude.
fn conditional_log_amplitude_rate(psi: &Array2<Complex64>, dpsi: &Array2<Complex64>, grid: &ProductGrid2D) -> Array2<f64> {
    let h = grid.system.spacing();
    let n = grid.clock.n;
    let mut marginal_rate = vec![0.0; n];
    for i in 0..n {
        let num: Vec<f64> = psi.row(i).iter().zip(dpsi.row(i)).map(|(p, d)| (p.conj() * d).re).collect();
        let den: Vec<f64> = psi.row(i).iter().map(|p| p.norm_sqr()).collect();
        marginal_rate[i] = trapezoid(&num, h) / trapezoid(&den, h);
    }
    Array2::from_shape_fn(psi.dim(), |(i, j)| HBAR * ((dpsi[[i, j]] / psi[[i, j]]).re - marginal_rate[i]))
}

/// Residual of the conditional equation `Ĉφ − (p̂²/2m + V + Û − ε)φ`.
pub fn cdse_residual(fs: &FactorizedState, ham: &Hamiltonian, dpsi_dt: Option<&Array2<Complex64>>, region: &Region) -> Result<ResidualReport> {
    check_time_derivative(dpsi_dt, &fs.grid)?;
    let ops = fs.conditional_operators();
    let cp = fs.conditional_parts();
    let mp = fs.marginal_parts();
    let psi = fs.reconstruct();
    let mask = region.mask(&psi, &fs.grid);
    let dim = psi.dim();
    let eps = &fs.epsilon;
    let mut res = Array2::from_elem(dim, Complex64::new(f64::NAN, 0.0));
    let mut terms: Vec<(&str, Array2<Complex64>)> = vec![
        ("C_phi", ops.c_hat.clone()),
        ("T_r_phi", ops.kinetic.clone()),
        ("V_phi", Array2::from_shape_fn(dim, |(i, j)| ham.potential[[i, j]] * cp.phi[[i, j]])),
        ("U_phi", ops.u_hat.clone()),
        ("eps_phi", Array2::from_shape_fn(dim, |(i, j)| eps[i] * cp.phi[[i, j]])),
    ];
    for ((i, j), r) in res.indexed_iter_mut() {
        if ops.defined[[i, j]] {
            *r = terms[0].1[[i, j]] - (terms[1].1[[i, j]] + terms[2].1[[i, j]] + terms[3].1[[i, j]] - terms[4].1[[i, j]]);
        }
    }
    if let Some(dpsi) = dpsi_dt {
        let kin = clock_kinetic_ratio(&mp, fs.clock_mass);
        let drive = Array2::from_shape_fn(dim, |(i, j)| I * HBAR * dpsi[[i, j]] / mp.chi[i]);
        let clock = Array2::from_shape_fn(dim, |(i, j)| cp.phi[[i, j]] * kin[i]);
        Zip::indexed(&mut res).for_each(|(i, j), r| *r += drive[[i, j]] - clock[[i, j]] - terms[4].1[[i, j]]);
        terms.push(("i_dt_psi_over_chi", drive));
        terms.push(("phi_T_chi_over_chi", clock));
    }
    let terms_abs: Vec<(&str, Array2<f64>)> = terms.iter().map(|(n, t)| (*n, t.mapv(|z| z.norm()))).collect();
    Ok(Assembly { equation: "cdse", form: form_of(dpsi_dt), t: fs.t, grid: &fs.grid, region: &mask }.finish(res.mapv(|z| z.norm()), terms_abs))
}

/// Residual of the clock-dependent Hamilton-Jacobi equation.
pub fn cdhje_residual(fs: &FactorizedState, ham: &Hamiltonian, dpsi_dt: Option<&Array2<Complex64>>, region: &Region) -> Result<ResidualReport> {
    check_time_derivative(dpsi_dt, &fs.grid)?;
    let cp = fs.conditional_parts();
    let mp = fs.marginal_parts();
    let cf = clock_fields_from_parts(fs, &cp, &mp, &ham.potential);
    let psi = fs.reconstruct();
    let mask = region.mask(&psi, &fs.grid);
    let M = fs.clock_mass;
    let dim = psi.dim();
    let classical = Array2::from_shape_fn(dim, |(i, j)| cf.chi_P[i] * cf.phi.P_cl[[i, j]] / M);
    let quantum = Array2::from_shape_fn(dim, |(i, j)| -cf.chi_Pi[i] * cf.phi.Pi_q[[i, j]] / M);
    let eps = Array2::from_shape_fn(dim, |(i, _)| -fs.epsilon[i]);
    let mut res = Zip::from(&classical).and(&quantum).and(&eps).and(&cf.H_S).map_collect(|a, b, c, d| a + b + c + d);
    res += &cf.H_SC;
    let mut terms = vec![("P_chi_P_phi", classical), ("Pi_chi_Pi_phi", quantum), ("epsilon", eps), ("H_S", cf.H_S.clone()), ("H_SC", cf.H_SC.clone())];
    if let Some(dpsi) = dpsi_dt {
        let ds = Zip::from(&psi).and(dpsi).map_collect(|p, d| HBAR * (d / p).im);
        let h = fs.grid.clock.spacing();
        let dPi_chi = masked_derivative_1d(&cf.chi_Pi, h, DerivOrder::First);
        let clock_energy = Array2::from_shape_fn(dim, |(i, _)| {
            let (P, Pi) = (cf.chi_P[i], cf.chi_Pi[i]);
            P * P / (2.0 * M) - (HBAR * dPi_chi[i] + Pi * Pi) / (2.0 * M) + fs.epsilon[i]
        });
        res = res + &ds + &clock_energy;
        terms.push(("dt_s", ds));
        terms.push(("clock_energy", clock_energy));
    }
    Ok(Assembly { equation: "cdhje", form: form_of(dpsi_dt), t: fs.t, grid: &fs.grid, region: &mask }.finish(res, terms))
}

/// Residual of the clock-dependent continuity equation in momentum-field form.
pub fn cdce_residual(fs: &FactorizedState, dpsi_dt: Option<&Array2<Complex64>>, region: &Region) -> Result<ResidualReport> {
    let (report, _) = cdce_both(fs, dpsi_dt, region)?;
    Ok(report)
}

/// Continuity equation assembled from densities and fluxes:
/// `(1/M)P[χ,A]∂_Rρ + ∂_r j_C + ∂_R J_C + (2/ħ)Π[χ]J_C`, reported for comparison.
pub fn cdce_secondary_residual(fs: &FactorizedState, dpsi_dt: Option<&Array2<Complex64>>, region: &Region) -> Result<ResidualReport> {
    let (_, report) = cdce_both(fs, dpsi_dt, region)?;
    Ok(report)
}

fn cdce_both(fs: &FactorizedState, dpsi_dt: Option<&Array2<Complex64>>, region: &Region) -> Result<(ResidualReport, ResidualReport)> {
    check_time_derivative(dpsi_dt, &fs.grid)?;
    let cp = fs.conditional_parts();
    let mp = fs.marginal_parts();
    let zero = Array2::zeros(fs.grid.shape());
    let cf = clock_fields_from_parts(fs, &cp, &mp, &zero);
    let psi = fs.reconstruct();
    let mask = region.mask(&psi, &fs.grid);
    let (M, m) = (fs.clock_mass, fs.system_mass);
    let dim = psi.dim();
    let g = &fs.grid;
    let ph = &cf.phi;

    let cross = Array2::from_shape_fn(dim, |(i, j)| (cf.chi_P[i] * ph.Pi_q[[i, j]] + cf.chi_Pi[i] * ph.P_cl[[i, j]]) / M);
    let system = Array2::from_shape_fn(dim, |ij| (ph.pi_q[ij] * ph.p_cl[ij] + HBAR * cf.d_r_p[ij] / 2.0) / m);
    let clock = Array2::from_shape_fn(dim, |ij| (ph.Pi_q[ij] * ph.P_cl[ij] + HBAR * cf.d_R_P[ij] / 2.0) / M);
    let mut res = &cross + &system + &clock;
    let mut terms = vec![("chi_phi_cross", cross), ("system_flux", system), ("clock_flux", clock)];

    let d_rho = masked_derivative(&cf.rho, &ph.defined, g, Axis::Clock, DerivOrder::First);
    let div_j = masked_derivative(&ph.j, &ph.defined, g, Axis::System, DerivOrder::First);
    let div_J = masked_derivative(&ph.J, &ph.defined, g, Axis::Clock, DerivOrder::First);
    let advect = Array2::from_shape_fn(dim, |(i, j)| cf.chi_P[i] * d_rho[[i, j]] / M);
    let coupling = Array2::from_shape_fn(dim, |(i, j)| 2.0 / HBAR * cf.chi_Pi[i] * ph.J[[i, j]]);
    let mut res2 = &advect + &div_j + &div_J + &coupling;
    let mut terms2 = vec![("P_chi_grad_rho", advect), ("div_r_jC", div_j), ("div_R_JC", div_J), ("Pi_chi_JC", coupling)];

    if let Some(dpsi) = dpsi_dt {
        let dw = conditional_log_amplitude_rate(&psi, dpsi, g);
        let drho = Zip::from(&dw).and(&cf.rho).map_collect(|w, r| 2.0 * r * w / HBAR);
        res = res + &dw;
        res2 = res2 + &drho;
        terms.push(("dt_w_phi", dw));
        terms2.push(("dt_rho", drho));
    }
    let form = form_of(dpsi_dt);
    let primary = Assembly { equation: "cdce", form, t: fs.t, grid: g, region: &mask }.finish(res, terms);
    let secondary = Assembly { equation: "cdce_flux", form, t: fs.t, grid: g, region: &mask }.finish(res2, terms2);
    Ok((primary, secondary))
}

/// Residuals of the time-dependent Hamilton-Jacobi and continuity equations
/// (density-flux and momentum-field forms) on the joint configuration space.
pub struct TimeResiduals {
    pub tdhje: ResidualReport,
    pub tdce: ResidualReport,
    pub tdce1: ResidualReport,
}

pub fn tdqhd_residuals(state: &JointState, dpsi_dt: &Array2<Complex64>, ham: &Hamiltonian, region: &Region) -> Result<TimeResiduals> {
    let g = state.psi.grid;
    g.ensure_same(&ham.grid)?;
    check_time_derivative(Some(dpsi_dt), &g)?;
    let psi = &state.psi.values;
    let (M, m) = (ham.clock_mass, ham.system_mass);
    let mask = region.mask(psi, &g);
    let f = momentum_fields(psi, &g, None, M, m, JOINT_FIELD_FLOOR);
    let U = potential_from_pi(&f.Pi_q, &f.defined, &g, Axis::Clock, M);
    let u = potential_from_pi(&f.pi_q, &f.defined, &g, Axis::System, m);

    let ds = Zip::from(psi).and(dpsi_dt).map_collect(|p, d| HBAR * (d / p).im);
    let kinetic = Zip::from(&f.P_cl).and(&f.p_cl).map_collect(|P, p| P * P / (2.0 * M) + p * p / (2.0 * m));
    let quantum = &U + &u;
    let hj = &ds + &kinetic + &ham.potential + &quantum;
    let asm = |eq| Assembly { equation: eq, form: Form::Time, t: state.t, grid: &g, region: &mask };
    let tdhje = asm("tdhje").finish(hj, vec![("dt_s", ds), ("kinetic", kinetic), ("V", ham.potential.clone()), ("quantum_potential", quantum)]);

    // density-flux form, with fluxes built without division by |ψ|²
    let psi_R = derivative_array(psi, &g, Axis::Clock, DerivOrder::First);
    let psi_r = derivative_array(psi, &g, Axis::System, DerivOrder::First);
    let J = Zip::from(psi).and(&psi_R).map_collect(|p, d| HBAR * (p.conj() * d).im / M);
    let j = Zip::from(psi).and(&psi_r).map_collect(|p, d| HBAR * (p.conj() * d).im / m);
    let drho = Zip::from(psi).and(dpsi_dt).map_collect(|p, d| 2.0 * (p.conj() * d).re);
    let div_J = derivative_array(&J, &g, Axis::Clock, DerivOrder::First);
    let div_j = derivative_array(&j, &g, Axis::System, DerivOrder::First);
    let ce = &drho + &div_J + &div_j;
    let tdce = asm("tdce").finish(ce, vec![("dt_rho", drho), ("div_R_J", div_J), ("div_r_j", div_j)]);

    let dw = Zip::from(psi).and(dpsi_dt).map_collect(|p, d| HBAR * (d / p).re);
    let dP = masked_derivative(&f.P_cl, &f.defined, &g, Axis::Clock, DerivOrder::First);
    let dp = masked_derivative(&f.p_cl, &f.defined, &g, Axis::System, DerivOrder::First);
    let sys = Zip::from(&f.pi_q).and(&f.p_cl).and(&dp).map_collect(|pi, p, d| (pi * p + HBAR * d / 2.0) / m);
    let clk = Zip::from(&f.Pi_q).and(&f.P_cl).and(&dP).map_collect(|pi, p, d| (pi * p + HBAR * d / 2.0) / M);
    let ce1 = &dw + &sys + &clk;
    let tdce1 = asm("tdce1").finish(ce1, vec![("dt_w", dw), ("system_flux", sys), ("clock_flux", clk)]);
    Ok(TimeResiduals { tdhje, tdce, tdce1 })
}

/// `∂_tψ` at snapshot `k` by central differences between neighbouring snapshots
/// (one-sided at the ends); for states without a known Hamiltonian.
pub fn finite_difference_time_derivative(snapshots: &[JointState], k: usize) -> Result<Array2<Complex64>> {
    if snapshots.len() < 2 || k >= snapshots.len() {
        return Err(Error::InvalidParameter(format!(
            "need at least two snapshots and a valid index, got {} snapshots and index {k}",
            snapshots.len()
        )));
    }
    let (a, b) = if k == 0 {
        (0, 1)
    } else if k + 1 == snapshots.len() {
        (k - 1, k)
    } else {
        (k - 1, k + 1)
    };
    let (sa, sb) = (&snapshots[a], &snapshots[b]);
    sa.psi.grid.ensure_same(&sb.psi.grid)?;
    let dt = sb.t - sa.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("snapshot times must increase".into()));
    }
    Ok((&sb.psi.values - &sa.psi.values).mapv(|z| z / dt))
}
