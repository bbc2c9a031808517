//! Uniform grids and the fields that live on them.
//!
//! Everything downstream works on a product grid over the clock coordinate `R`
//! (outer, slow index) and the system coordinate `r` (inner, contiguous index),
//! so a conditional slice `f(·|R_i)` is one contiguous row of the backing array.
//!
//! Derivatives use 4th-order finite differences: the central five-point stencil
//! in the interior and one-sided stencils of the same order within two points of
//! either end. Quadrature is the trapezoid rule. Interpolation is a cubic Hermite
//! spline per axis whose nodal slopes come from the same 4th-order stencils, so it
//! is C¹, passes through the nodes and converges at 4th order.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use ndarray::{Array1, Array2, Axis as NdAxis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of grid points along an axis.
pub const MIN_POINTS: usize = 8;

/// Coordinate axis of the two-dimensional configuration space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Clock coordinate `R` (heavy particle).
    Clock,
    /// System coordinate `r` (light particle).
    System,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Clock => f.write_str("R"),
            Axis::System => f.write_str("r"),
        }
    }
}

/// Order of a finite-difference derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivOrder {
    First,
    Second,
}

impl DerivOrder {
    /// Shortest line on which the one-sided stencils fit.
    pub fn min_points(self) -> usize {
        match self {
            DerivOrder::First => 6,
            DerivOrder::Second => 7,
        }
    }
}

/// Uniform one-dimensional grid `min + k·spacing`, `k = 0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        let grid = Grid1D { min, max, n };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid extents must be finite, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.n < MIN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_POINTS} points, got {}",
                self.n
            )));
        }
        if self.max <= self.min {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.min + k as f64 * self.spacing()
    }

    pub fn points(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.n, |k| self.point(k))
    }

    pub fn length(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    /// Index of the node nearest to `x`, clamped into the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x - self.min) / self.spacing()).round();
        s.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Cell `k` and offset `t ∈ [0, 1)` such that `x = point(k) + t·spacing`.
    /// Coordinates within 1e-9 spacings of a node snap to that node.
    pub(crate) fn locate(&self, x: f64, axis: Axis) -> Result<(usize, f64)> {
        if !self.contains(x) || !x.is_finite() {
            return Err(Error::OutOfDomain { axis, coordinate: x });
        }
        let s = (x - self.min) / self.spacing();
        let nearest = s.round();
        if (s - nearest).abs() < 1e-9 {
            let k = (nearest as usize).min(self.n - 1);
            return Ok((k, 0.0));
        }
        let k = (s.floor() as usize).min(self.n - 2);
        Ok((k, s - k as f64))
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.n {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    /// Same extents with `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Grid1D {
        Grid1D { min: self.min, max: self.max, n: (self.n - 1) * factor + 1 }
    }
}

/// Product grid over `(R, r)`, stored with `R` outer and `r` inner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductGrid2D {
    pub clock: Grid1D,
    pub system: Grid1D,
}

impl ProductGrid2D {
    pub fn new(clock: Grid1D, system: Grid1D) -> Result<Self> {
        clock.validate()?;
        system.validate()?;
        Ok(ProductGrid2D { clock, system })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.clock.n, self.system.n)
    }

    pub fn len(&self) -> usize {
        self.clock.n * self.system.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, axis: Axis) -> &Grid1D {
        match axis {
            Axis::Clock => &self.clock,
            Axis::System => &self.system,
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.clock.spacing() * self.system.spacing()
    }

    pub fn contains(&self, clock: f64, system: f64) -> bool {
        self.clock.contains(clock) && self.system.contains(system)
    }

    pub fn ensure_same(&self, other: &ProductGrid2D) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!("grid mismatch: {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Values that finite-difference stencils and quadrature can act on.
pub trait GridValue:
    Copy + Default + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn is_finite_value(&self) -> bool;
}

impl GridValue for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl GridValue for Complex64 {
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

fn dot<T: GridValue>(coefs: &[f64], values: &[T]) -> T {
    coefs.iter().zip(values).fold(T::default(), |acc, (&c, &v)| acc + v * c)
}

// Edge stencils are one order higher than the interior ones so that a derivative
// of a derived field keeps fourth order next to the boundary.
const D1_EDGE0: [f64; 6] = [-137.0, 300.0, -300.0, 200.0, -75.0, 12.0];
const D1_EDGE1: [f64; 6] = [-12.0, -65.0, 120.0, -60.0, 20.0, -3.0];
const D1_CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D2_EDGE0: [f64; 7] = [812.0, -3132.0, 5265.0, -5080.0, 2970.0, -972.0, 137.0];
const D2_EDGE1: [f64; 7] = [137.0, -147.0, -255.0, 470.0, -285.0, 93.0, -13.0];
const D2_CENTRAL: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

/// `f[start..start + N]` in reverse order.
fn reversed<T: GridValue, const N: usize>(f: &[T], start: usize) -> [T; N] {
    std::array::from_fn(|k| f[start + N - 1 - k])
}

/// First derivative at node `i` of a line sampled with spacing `h`.
fn d1_at<T: GridValue>(f: &[T], i: usize, h: f64) -> T {
    let n = f.len();
    let edge = 1.0 / (60.0 * h);
    if i == 0 {
        dot(&D1_EDGE0, &f[0..6]) * edge
    } else if i == 1 {
        dot(&D1_EDGE1, &f[0..6]) * edge
    } else if i + 2 == n {
        dot(&D1_EDGE1, &reversed::<T, 6>(f, n - 6)) * -edge
    } else if i + 1 == n {
        dot(&D1_EDGE0, &reversed::<T, 6>(f, n - 6)) * -edge
    } else {
        dot(&D1_CENTRAL, &f[i - 2..i + 3]) * (1.0 / (12.0 * h))
    }
}

fn d2_at<T: GridValue>(f: &[T], i: usize, h: f64) -> T {
    let n = f.len();
    let edge = 1.0 / (180.0 * h * h);
    if i == 0 {
        dot(&D2_EDGE0, &f[0..7]) * edge
    } else if i == 1 {
        dot(&D2_EDGE1, &f[0..7]) * edge
    } else if i + 2 == n {
        dot(&D2_EDGE1, &reversed::<T, 7>(f, n - 7)) * edge
    } else if i + 1 == n {
        dot(&D2_EDGE0, &reversed::<T, 7>(f, n - 7)) * edge
    } else {
        dot(&D2_CENTRAL, &f[i - 2..i + 3]) * (1.0 / (12.0 * h * h))
    }
}

/// Differentiates a full line. The line must hold at least `order.min_points()` values.
pub fn diff_line<T: GridValue>(f: &[T], h: f64, order: DerivOrder, out: &mut [T]) {
    debug_assert!(f.len() >= order.min_points());
    debug_assert_eq!(f.len(), out.len());
    for (i, o) in out.iter_mut().enumerate() {
        *o = match order {
            DerivOrder::First => d1_at(f, i, h),
            DerivOrder::Second => d2_at(f, i, h),
        };
    }
}

/// Differentiates a line on which only some nodes carry data. Each contiguous run of
/// defined nodes is treated as its own line (one-sided stencils at its ends); runs too
/// short for the stencil yield undefined output.
pub fn diff_line_masked<T: GridValue>(
    f: &[T],
    defined: &[bool],
    h: f64,
    order: DerivOrder,
    out: &mut [T],
    out_defined: &mut [bool],
) {
    let n = f.len();
    let mut start = 0;
    while start < n {
        if !defined[start] {
            out[start] = T::default();
            out_defined[start] = false;
            start += 1;
            continue;
        }
        let mut end = start;
        while end < n && defined[end] {
            end += 1;
        }
        if end - start >= order.min_points() {
            diff_line(&f[start..end], h, order, &mut out[start..end]);
            out_defined[start..end].iter_mut().for_each(|d| *d = true);
        } else {
            out[start..end].iter_mut().for_each(|o| *o = T::default());
            out_defined[start..end].iter_mut().for_each(|d| *d = false);
        }
        start = end;
    }
}

/// Trapezoid rule over a full line.
pub fn trapezoid<T: GridValue>(f: &[T], h: f64) -> T {
    let n = f.len();
    if n == 0 {
        return T::default();
    }
    if n == 1 {
        return T::default();
    }
    let inner = f[1..n - 1].iter().fold(T::default(), |acc, &v| acc + v);
    (inner + (f[0] + f[n - 1]) * 0.5) * h
}

/// Cubic Hermite interpolation on a uniform line with 4th-order nodal slopes.
/// `value(k)` returns the sample at node `k`; only the nodes the stencils need are read.
fn hermite<T: GridValue>(n: usize, h: f64, k: usize, t: f64, value: impl Fn(usize) -> T) -> T {
    if t == 0.0 {
        return value(k);
    }
    let slope = |j: usize| -> T {
        // Gather the samples the first-derivative stencil at `j` uses.
        let (lo, coefs, scale, mirrored): (usize, &[f64], f64, bool) = if j == 0 {
            (0, &D1_EDGE0, 1.0 / (60.0 * h), false)
        } else if j == 1 {
            (0, &D1_EDGE1, 1.0 / (60.0 * h), false)
        } else if j + 2 == n {
            (n - 6, &D1_EDGE1, -1.0 / (60.0 * h), true)
        } else if j + 1 == n {
            (n - 6, &D1_EDGE0, -1.0 / (60.0 * h), true)
        } else {
            (j - 2, &D1_CENTRAL, 1.0 / (12.0 * h), false)
        };
        let last = lo + coefs.len() - 1;
        let mut acc = T::default();
        for (q, &c) in coefs.iter().enumerate() {
            let idx = if mirrored { last - q } else { lo + q };
            acc = acc + value(idx) * c;
        }
        acc * scale
    };
    let f0 = value(k);
    let f1 = value(k + 1);
    let m0 = slope(k);
    let m1 = slope(k + 1);
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    f0 * h00 + m0 * (h10 * h) + f1 * h01 + m1 * (h11 * h)
}

/// A field on a one-dimensional grid along a named axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Field1D<T> {
    pub grid: Grid1D,
    pub axis: Axis,
    pub values: Array1<T>,
}

pub type ScalarField1D = Field1D<f64>;
pub type ComplexField1D = Field1D<Complex64>;

impl<T: GridValue> Field1D<T> {
    pub fn new(grid: Grid1D, axis: Axis, values: Array1<T>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n {
            return Err(Error::Dimension(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n
            )));
        }
        Ok(Field1D { grid, axis, values })
    }

    pub fn from_fn(grid: Grid1D, axis: Axis, f: impl Fn(f64) -> T) -> Self {
        let values = Array1::from_shape_fn(grid.n, |k| f(grid.point(k)));
        Field1D { grid, axis, values }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite_value())
    }

    fn check_axis(&self, axis: Axis) -> Result<()> {
        if axis != self.axis {
            return Err(Error::Dimension(format!(
                "field lives on the {} axis, not {axis}",
                self.axis
            )));
        }
        Ok(())
    }

    pub fn derivative(&self, axis: Axis, order: DerivOrder) -> Result<Self> {
        self.check_axis(axis)?;
        let f = self.values.to_vec();
        let mut out = vec![T::default(); f.len()];
        diff_line(&f, self.grid.spacing(), order, &mut out);
        Ok(Field1D { grid: self.grid, axis: self.axis, values: Array1::from(out) })
    }

    pub fn integrate(&self, axis: Axis) -> Result<T> {
        self.check_axis(axis)?;
        let f = self.values.to_vec();
        Ok(trapezoid(&f, self.grid.spacing()))
    }

    pub fn interpolate(&self, x: f64) -> Result<T> {
        let (k, t) = self.grid.locate(x, self.axis)?;
        Ok(hermite(self.grid.n, self.grid.spacing(), k, t, |j| self.values[j]))
    }
}

/// A field on the product grid, row-major with `R` outer.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D<T> {
    pub grid: ProductGrid2D,
    pub values: Array2<T>,
}

pub type ScalarField2D = Field2D<f64>;
pub type ComplexField2D = Field2D<Complex64>;

fn nd_axis(axis: Axis) -> NdAxis {
    match axis {
        Axis::Clock => NdAxis(0),
        Axis::System => NdAxis(1),
    }
}

impl<T: GridValue> Field2D<T> {
    pub fn new(grid: ProductGrid2D, values: Array2<T>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::Dimension(format!(
                "value shape {:?} does not match grid shape {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        Ok(Field2D { grid, values })
    }

    pub fn from_fn(grid: ProductGrid2D, f: impl Fn(f64, f64) -> T) -> Self {
        let values = Array2::from_shape_fn(grid.shape(), |(i, j)| {
            f(grid.clock.point(i), grid.system.point(j))
        });
        Field2D { grid, values }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite_value())
    }

    pub fn derivative(&self, axis: Axis, order: DerivOrder) -> Self {
        Field2D { grid: self.grid, values: derivative_array(&self.values, &self.grid, axis, order) }
    }

    /// Trapezoid integral along `axis`; the result lives on the other axis.
    pub fn integrate_over(&self, axis: Axis) -> Field1D<T> {
        let h = self.grid.axis(axis).spacing();
        let (keep, keep_axis) = match axis {
            Axis::Clock => (self.grid.system, Axis::System),
            Axis::System => (self.grid.clock, Axis::Clock),
        };
        let values: Array1<T> = self
            .values
            .lanes(nd_axis(axis))
            .into_iter()
            .map(|lane| trapezoid(&lane.to_vec(), h))
            .collect();
        Field1D { grid: keep, axis: keep_axis, values }
    }

    pub fn integrate_all(&self) -> T {
        let marginal = self.integrate_over(Axis::System);
        trapezoid(&marginal.values.to_vec(), self.grid.clock.spacing())
    }

    pub fn interpolate(&self, clock: f64, system: f64) -> Result<T> {
        interpolate_array(&self.values, &self.grid, clock, system)
    }
}

/// Applies the 4th-order derivative along `axis` to every lane of `values`.
pub fn derivative_array<T: GridValue>(
    values: &Array2<T>,
    grid: &ProductGrid2D,
    axis: Axis,
    order: DerivOrder,
) -> Array2<T> {
    let h = grid.axis(axis).spacing();
    let mut out = Array2::from_elem(values.dim(), T::default());
    let mut buf_in = Vec::new();
    let mut buf_out = Vec::new();
    for (lane, mut out_lane) in values.lanes(nd_axis(axis)).into_iter().zip(out.lanes_mut(nd_axis(axis))) {
        buf_in.clear();
        buf_in.extend(lane.iter().copied());
        buf_out.resize(buf_in.len(), T::default());
        diff_line(&buf_in, h, order, &mut buf_out);
        for (o, v) in out_lane.iter_mut().zip(&buf_out) {
            *o = *v;
        }
    }
    out
}

/// Masked variant of [`derivative_array`]: returns derivative values and their availability.
pub fn derivative_array_masked<T: GridValue>(
    values: &Array2<T>,
    defined: &Array2<bool>,
    grid: &ProductGrid2D,
    axis: Axis,
    order: DerivOrder,
) -> (Array2<T>, Array2<bool>) {
    let h = grid.axis(axis).spacing();
    let mut out = Array2::from_elem(values.dim(), T::default());
    let mut out_def = Array2::from_elem(values.dim(), false);
    let ax = nd_axis(axis);
    let mut f = Vec::new();
    let mut d = Vec::new();
    let mut o = Vec::new();
    let mut od = Vec::new();
    for (((lane, dlane), mut out_lane), mut out_dlane) in values
        .lanes(ax)
        .into_iter()
        .zip(defined.lanes(ax))
        .zip(out.lanes_mut(ax))
        .zip(out_def.lanes_mut(ax))
    {
        f.clear();
        f.extend(lane.iter().copied());
        d.clear();
        d.extend(dlane.iter().copied());
        o.resize(f.len(), T::default());
        od.resize(f.len(), false);
        diff_line_masked(&f, &d, h, order, &mut o, &mut od);
        for (dst, src) in out_lane.iter_mut().zip(&o) {
            *dst = *src;
        }
        for (dst, src) in out_dlane.iter_mut().zip(&od) {
            *dst = *src;
        }
    }
    (out, out_def)
}

/// Tensor-product Hermite interpolation of a 2D array on `grid`.
pub fn interpolate_array<T: GridValue>(
    values: &Array2<T>,
    grid: &ProductGrid2D,
    clock: f64,
    system: f64,
) -> Result<T> {
    let (kc, tc) = grid.clock.locate(clock, Axis::Clock)?;
    let (ks, ts) = grid.system.locate(system, Axis::System)?;
    let ns = grid.system.n;
    let hs = grid.system.spacing();
    let along_system = |row: usize| hermite(ns, hs, ks, ts, |j| values[[row, j]]);
    Ok(hermite(grid.clock.n, grid.clock.spacing(), kc, tc, along_system))
}

/// Evaluates a field between two snapshots: Hermite in space, linear in time.
pub fn interpolate_in_time<T: GridValue>(
    earlier: (&Field2D<T>, f64),
    later: (&Field2D<T>, f64),
    t: f64,
    clock: f64,
    system: f64,
) -> Result<T> {
    let (a, ta) = earlier;
    let (b, tb) = later;
    a.grid.ensure_same(&b.grid)?;
    if tb <= ta || t < ta || t > tb {
        return Err(Error::InvalidParameter(format!(
            "time {t} not inside snapshot bracket [{ta}, {tb}]"
        )));
    }
    let va = a.interpolate(clock, system)?;
    let vb = b.interpolate(clock, system)?;
    let w = (t - ta) / (tb - ta);
    Ok(va * (1.0 - w) + vb * w)
}
