//! SVG figures built from the artifacts listed in a manifest.
#![allow(non_snake_case)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chronoflow::io::read_snapshot;
use chronoflow::model::{potential_grid, JointState};
use chronoflow::numgrid::Grid1D;
use ndarray::Array2;

use crate::manifest::{ArtifactKind, Manifest, RenderTime, Stage};
use crate::pipeline::{snapshot_artifact, BO_TABLE, CLOCK_TRAJECTORY_TABLE, RESIDUAL_TABLE};
use crate::svg::{contour, Canvas, Frame, PALETTE};
use crate::tables::Table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PlotKind {
    Potentials,
    Snapshots,
    Trajectories,
    Residuals,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::Potentials, PlotKind::Snapshots, PlotKind::Trajectories, PlotKind::Residuals];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Potentials => "potentials",
            PlotKind::Snapshots => "snapshots",
            PlotKind::Trajectories => "trajectories",
            PlotKind::Residuals => "residuals",
        }
    }

    pub fn parse(s: &str) -> anyhow::Result<Self> {
        match PlotKind::ALL.iter().find(|k| k.name() == s) {
            Some(k) => Ok(*k),
            None => bail!("unknown plot kind {s:?}"),
        }
    }

    /// Kinds whose input artifacts the manifest lists.
    pub fn available(m: &Manifest) -> Vec<PlotKind> {
        let has = |n: &str| m.artifact(n).is_some();
        let mut v = Vec::new();
        if has(BO_TABLE) {
            v.push(PlotKind::Potentials);
        }
        if !m.derived.render_times.is_empty() && m.derived.render_times.iter().all(|r| has(&snapshot_artifact(r.index))) {
            v.push(PlotKind::Snapshots);
        }
        if has(CLOCK_TRAJECTORY_TABLE) {
            v.push(PlotKind::Trajectories);
        }
        if has(RESIDUAL_TABLE) {
            v.push(PlotKind::Residuals);
        }
        v
    }
}

/// Writes the requested figures under `out/plots`, registers them in `m` and
/// returns their artifact names.
pub fn emit_plots(m: &mut Manifest, out: &Path, kinds: &[PlotKind]) -> anyhow::Result<Vec<String>> {
    let mut written = Vec::new();
    let mut kinds = kinds.to_vec();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        let figures: Vec<(String, String)> = match kind {
            PlotKind::Potentials => vec![("plot_potentials".into(), potentials(m, out)?)],
            PlotKind::Snapshots => {
                if m.derived.render_times.is_empty() {
                    bail!("no render times in the manifest");
                }
                let mut v = Vec::new();
                for (k, r) in m.derived.render_times.iter().enumerate() {
                    v.push((format!("plot_panel_{k}"), panel(m, out, r)?));
                }
                v
            }
            PlotKind::Trajectories => vec![("plot_trajectories".into(), trajectories(m, out)?)],
            PlotKind::Residuals => vec![("plot_residuals".into(), residuals(m, out)?)],
        };
        std::fs::create_dir_all(out.join("plots"))?;
        for (name, svg) in figures {
            let rel = PathBuf::from(format!("plots/{}.svg", name.trim_start_matches("plot_")));
            std::fs::write(out.join(&rel), svg).with_context(|| format!("writing {}", rel.display()))?;
            m.register(out, &name, ArtifactKind::Svg, Stage::Plot, &rel)?;
            written.push(name);
        }
    }
    Ok(written)
}

fn range(v: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.into_iter().filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !(hi > lo) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        return (c - 1.0, c + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn potentials(m: &Manifest, out: &Path) -> anyhow::Result<String> {
    let t = Table::read(&m.require(out, BO_TABLE)?)?;
    let R = t.f64s("R")?;
    let surfaces: Vec<Vec<f64>> = (0..).map_while(|n| t.f64s(&format!("epsilon_{n}")).ok()).collect();
    let chi = t.f64s("chi0_density")?;
    // the walls at the grid ends would flatten the interior; scale to the central part
    let (R0, R1) = (R[0], R[R.len() - 1]);
    let central = |x: f64| (x - 0.5 * (R0 + R1)).abs() <= 0.35 * (R1 - R0);
    let (ylo, yhi) = range(surfaces.iter().flat_map(|e| R.iter().zip(e).filter(|(x, _)| central(**x)).map(|(_, v)| *v)));
    let mut c = Canvas::new(640.0, 440.0);
    let f = Frame { left: 80.0, top: 40.0, width: 480.0, height: 320.0, x: (R0, R1), y: (ylo, yhi), log_y: false };
    f.axes(&mut c, "Born-Oppenheimer surfaces", "R [a0]", "energy [Ha]");
    for (n, e) in surfaces.iter().enumerate() {
        let pts: Vec<(f64, f64)> = R.iter().copied().zip(e.iter().copied()).collect();
        f.polyline(&mut c, &pts, PALETTE[n % PALETTE.len()], 2.0);
        if let Some(&(x, y)) = pts.iter().rev().find(|p| p.1 <= yhi) {
            c.text(f.px(x) + 4.0, f.py(y) + 4.0, 11.0, "start", &format!("ε{n}"));
        }
    }
    let cmax = chi.iter().copied().fold(0.0, f64::max);
    if cmax > 0.0 {
        let pts: Vec<(f64, f64)> = R.iter().zip(&chi).map(|(&x, &v)| (x, ylo + 0.8 * (yhi - ylo) * v / cmax)).collect();
        f.polyline(&mut c, &pts, "#555555", 1.5);
        c.text(f.left + 8.0, f.top + 16.0, 11.0, "start", &format!("grey: |χ0|² (peak {:.3} 1/a0, scaled)", cmax));
    }
    Ok(c.finish())
}

fn load_snapshot(m: &Manifest, out: &Path, index: usize) -> anyhow::Result<JointState> {
    let name = snapshot_artifact(index);
    let p = m.require(out, &name)?;
    let mut r = BufReader::new(File::open(&p)?);
    read_snapshot(&mut r).with_context(|| format!("artifact {name}"))
}

/// Node indices of `g` inside `[lo, hi]`.
fn window(g: &Grid1D, view: Option<[f64; 2]>) -> (usize, usize) {
    match view {
        None => (0, g.n),
        Some([lo, hi]) => {
            let a = (0..g.n).find(|&k| g.point(k) >= lo).unwrap_or(0);
            let b = (0..g.n).rev().find(|&k| g.point(k) <= hi).map_or(g.n, |k| k + 1);
            if b > a { (a, b) } else { (0, g.n) }
        }
    }
}

/// Block-averages `values` over `[i0, i1) × [j0, j1)` to at most `max` cells
/// per axis, skipping `None` entries. Returns node coordinates and cell values.
fn coarsen(
    values: &Array2<Option<f64>>,
    xs: &Grid1D,
    ys: &Grid1D,
    (i0, i1): (usize, usize),
    (j0, j1): (usize, usize),
    max: usize,
) -> (Vec<f64>, Vec<f64>, Array2<Option<f64>>) {
    let bi = (i1 - i0).div_ceil(max);
    let bj = (j1 - j0).div_ceil(max);
    let ni = (i1 - i0).div_ceil(bi);
    let nj = (j1 - j0).div_ceil(bj);
    let centre = |g: &Grid1D, a: usize, b: usize| 0.5 * (g.point(a) + g.point(b - 1));
    let cx: Vec<f64> = (0..ni).map(|p| centre(xs, i0 + p * bi, (i0 + (p + 1) * bi).min(i1))).collect();
    let cy: Vec<f64> = (0..nj).map(|q| centre(ys, j0 + q * bj, (j0 + (q + 1) * bj).min(j1))).collect();
    let out = Array2::from_shape_fn((ni, nj), |(p, q)| {
        let (mut s, mut n) = (0.0, 0);
        for i in i0 + p * bi..(i0 + (p + 1) * bi).min(i1) {
            for j in j0 + q * bj..(j0 + (q + 1) * bj).min(j1) {
                if let Some(v) = values[[i, j]] {
                    s += v;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| s / n as f64)
    });
    (cx, cy, out)
}

/// Clock trajectory samples `(τ, R, r)` keyed by mode and id.
fn clock_paths(m: &Manifest, out: &Path) -> anyhow::Result<BTreeMap<(String, u64), Vec<(f64, f64, f64)>>> {
    let t = Table::read(&m.require(out, CLOCK_TRAJECTORY_TABLE)?)?;
    let (ids, modes) = (t.f64s("id")?, t.strings("mode")?);
    let (tau, R, r) = (t.f64s("tau")?, t.f64s("R")?, t.f64s("r")?);
    let mut paths: BTreeMap<(String, u64), Vec<(f64, f64, f64)>> = BTreeMap::new();
    for k in 0..ids.len() {
        paths.entry((modes[k].clone(), ids[k] as u64)).or_default().push((tau[k], R[k], r[k]));
    }
    Ok(paths)
}

fn panel(m: &Manifest, out: &Path, rt: &RenderTime) -> anyhow::Result<String> {
    let st = load_snapshot(m, out, rt.index)?;
    let g = st.psi.grid;
    let cfg = &m.config;
    let dens = st.density().values;
    let marg = st.marginal();
    let thr = cfg.factorization.display_threshold;
    let iw = (0, g.clock.n);
    let jw = window(&g.system, cfg.output.view_system);
    let max = cfg.output.max_pixels;

    let joint = dens.mapv(Some);
    let cond = Array2::from_shape_fn(dens.dim(), |(i, j)| (marg[i] > thr).then(|| dens[[i, j]] / marg[i]));
    let (xs, ys, joint_c) = coarsen(&joint, &g.clock, &g.system, iw, jw, max);
    let (_, _, cond_c) = coarsen(&cond, &g.clock, &g.system, iw, jw, max);
    let v = potential_grid(&cfg.model).mapv(Some);
    let (_, _, v_c) = coarsen(&v, &g.clock, &g.system, iw, jw, max);
    let v_c = v_c.mapv(|x| x.unwrap_or(f64::NAN));

    let xr = (g.clock.min, g.clock.max);
    let yr = (g.system.point(jw.0), g.system.point(jw.1 - 1));
    let mut c = Canvas::new(640.0, 1000.0);
    let top = Frame { left: 80.0, top: 40.0, width: 460.0, height: 260.0, x: xr, y: yr, log_y: false };
    let mid = Frame { top: 370.0, height: 200.0, y: (0.0, 1.0), ..top };
    let bot = Frame { top: 640.0, ..top };

    let jmax = joint_c.iter().flatten().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    top.heatmap(&mut c, &xs, &ys, &joint_c, jmax);
    top.colorbar(&mut c, jmax, "|ψ|² [1/a0²]");
    let (vlo, vhi) = v_c.iter().filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    for k in 1..=10 {
        let level = vlo + (vhi - vlo) * k as f64 / 11.0;
        top.segments(&mut c, &contour(&xs, &ys, &v_c, level), "#ffffff", 0.6);
    }
    top.axes(&mut c, &format!("joint density, t = {} au", rt.t), "R [a0]", "r [a0]");

    let mmax = marg.iter().copied().fold(0.0, f64::max);
    let mid = Frame { y: (0.0, 1.1 * mmax.max(f64::MIN_POSITIVE)), ..mid };
    let pts: Vec<(f64, f64)> = (0..g.clock.n).map(|i| (g.clock.point(i), marg[i])).collect();
    mid.polyline(&mut c, &pts, PALETTE[0], 1.5);
    mid.axes(&mut c, "marginal density", "R [a0]", "|χ|² [1/a0]");

    let cmax = cond_c.iter().flatten().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    bot.heatmap(&mut c, &xs, &ys, &cond_c, cmax);
    bot.colorbar(&mut c, cmax, "|φ|² [1/a0]");
    if m.artifact(CLOCK_TRAJECTORY_TABLE).is_some() {
        let paths = clock_paths(m, out)?;
        let first = paths.keys().next().map(|k| k.0.clone());
        for ((mode, _), p) in &paths {
            if Some(mode) != first.as_ref() {
                continue;
            }
            let seen: Vec<(f64, f64)> = p.iter().filter(|s| s.0 <= rt.t + 1e-9).map(|s| (s.1, s.2)).collect();
            bot.polyline(&mut c, &seen, "#ffffff", 0.8);
            if let Some(&(x, y)) = seen.last() {
                bot.dot(&mut c, x, y, 2.5, "#d62728");
            }
        }
    }
    bot.axes(&mut c, &format!("conditional density where |χ|² > {thr:e}"), "R [a0]", "r [a0]");
    Ok(c.finish())
}

fn trajectories(m: &Manifest, out: &Path) -> anyhow::Result<String> {
    let paths = clock_paths(m, out)?;
    let all = || paths.values().flatten();
    let tr = range(all().map(|s| s.0));
    let mut c = Canvas::new(640.0, 720.0);
    let fr = Frame { left: 80.0, top: 40.0, width: 480.0, height: 260.0, x: (0.0f64.max(tr.0), tr.1), y: range(all().map(|s| s.1)), log_y: false };
    let fs = Frame { top: 380.0, y: range(all().map(|s| s.2)), ..fr };
    let modes: Vec<String> = {
        let mut v: Vec<String> = paths.keys().map(|k| k.0.clone()).collect();
        v.dedup();
        v
    };
    for ((mode, _), p) in &paths {
        let color = PALETTE[modes.iter().position(|x| x == mode).unwrap_or(0) % PALETTE.len()];
        fr.polyline(&mut c, &p.iter().map(|s| (s.0, s.1)).collect::<Vec<_>>(), color, 1.0);
        fs.polyline(&mut c, &p.iter().map(|s| (s.0, s.2)).collect::<Vec<_>>(), color, 1.0);
    }
    for (k, mode) in modes.iter().enumerate() {
        c.swatch(fr.left + fr.width - 120.0, fr.top + 8.0 + 14.0 * k as f64, PALETTE[k % PALETTE.len()]);
        c.text(fr.left + fr.width - 106.0, fr.top + 17.0 + 14.0 * k as f64, 11.0, "start", mode);
    }
    fr.axes(&mut c, "clock-dependent trajectories", "t [au]", "R [a0]");
    fs.axes(&mut c, "", "t [au]", "r [a0]");
    Ok(c.finish())
}

fn residuals(m: &Manifest, out: &Path) -> anyhow::Result<String> {
    let t = Table::read(&m.require(out, RESIDUAL_TABLE)?)?;
    let (time, eq, rel) = (t.f64s("t")?, t.strings("equation")?, t.f64s("relative_rms")?);
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for k in 0..time.len() {
        series.entry(eq[k].as_str()).or_default().push((time[k], rel[k]));
    }
    let positive = rel.iter().copied().filter(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if hi > 0.0 { (10f64.powf(lo.log10().floor()), 10f64.powf(hi.log10().ceil())) } else { (1e-3, 1.0) };
    let hi = if hi > lo { hi } else { lo * 10.0 };
    let xr = range(time.iter().copied());
    let mut c = Canvas::new(640.0, 440.0);
    let f = Frame { left: 80.0, top: 40.0, width: 420.0, height: 320.0, x: (xr.0.max(0.0), xr.1), y: (lo, hi), log_y: true };
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        f.polyline(&mut c, pts, color, 1.5);
        for &(x, y) in pts {
            f.dot(&mut c, x, y, 2.0, color);
        }
        c.swatch(f.left + f.width + 12.0, f.top + 8.0 + 16.0 * k as f64, color);
        c.text(f.left + f.width + 28.0, f.top + 16.0 + 16.0 * k as f64, 11.0, "start", name);
    }
    f.axes(&mut c, "relative residuals", "t [au]", "relative RMS");
    Ok(c.finish())
}
