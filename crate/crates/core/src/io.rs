//! CSV tables and SVG polyline plots.
//!
//! Every table has a header row, `,` separators and `.` decimals; numbers use
//! the shortest round-trip representation so output is byte-reproducible.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::bilayer::{BilayerState, Diagnostic};
use crate::error::{Error, Result};
use crate::field::{Field1D, Field2D};
use crate::grid::{LevelGrid, SpatialGrid};
use crate::harness::SweepResult;
use crate::hyperbolicity::Atlas;
use crate::refined::ResidualSample;
use crate::stratified::{StratifiedDiagnostic, StratifiedProfile, StratifiedState};

fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// Writes named columns of equal length.
pub fn write_columns<W: Write>(out: W, columns: &[(&str, &[f64])]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.1.len());
    if let Some(c) = columns.iter().find(|c| c.1.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            got: c.1.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns.iter().map(|c| c.0))?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| num(c.1[i])))?;
    }
    w.flush()?;
    Ok(())
}

/// `branch_id, p_s, p_b`; curve pieces first, then one branch per line.
pub fn write_atlas(path: &Path, atlas: &Atlas) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["branch_id", "p_s", "p_b"])?;
    for line in atlas.curve.iter().chain(atlas.lines.iter().map(|l| &l.1)) {
        for &(ps, pb) in &line.points {
            w.write_record([line.id.clone(), num(ps), num(pb)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, x, H_s, H_b, U_s, U_b` for every sample.
pub fn write_trajectory(path: &Path, grid: &SpatialGrid, samples: &[BilayerState]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "x", "H_s", "H_b", "U_s", "U_b"])?;
    let xs = grid.points();
    for s in samples {
        for (j, x) in xs.iter().enumerate() {
            w.write_record([s.t, *x, s.h_s[j], s.h_b[j], s.u_s[j], s.u_b[j]].map(num))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics(path: &Path, diagnostics: &[Diagnostic]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "mass_s", "mass_b", "hs_norm", "margin"])?;
    for d in diagnostics {
        w.write_record([d.t, d.mass_s, d.mass_b, d.hs_norm, d.margin].map(num))?;
    }
    w.flush()?;
    Ok(())
}

/// `t, min_depth, hs_norm, mass_0, …` with one mass column per level.
pub fn write_stratified_diagnostics(path: &Path, diagnostics: &[StratifiedDiagnostic]) -> Result<()> {
    let mut w = writer(path)?;
    let n_r = diagnostics.first().map_or(0, |d| d.level_masses.len());
    let mut header = vec!["t".to_string(), "min_depth".into(), "hs_norm".into()];
    header.extend((0..n_r).map(|i| format!("mass_{i}")));
    w.write_record(&header)?;
    for d in diagnostics {
        let mut row = vec![num(d.t), num(d.min_depth), num(d.hs_norm)];
        row.extend(d.level_masses.iter().map(|&m| num(m)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `r, rho, ubar` at level midpoints, bottom first.
pub fn write_profile(path: &Path, profile: &StratifiedProfile) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["r", "rho", "ubar"])?;
    for ((r, rho), u) in profile.levels().mids().iter().zip(profile.rho()).zip(profile.ubar()) {
        w.write_record([*r, *rho, *u].map(num))?;
    }
    w.flush()?;
    Ok(())
}

fn records<R: Read>(input: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Parse(format!("expected columns {header:?}, found {found:?}")));
    }
    rdr.records()
        .enumerate()
        .map(|(line, rec)| {
            rec?.iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: `{v}`: {e}", line + 1)))
                })
                .collect()
        })
        .collect()
}

/// Reads `r, rho, ubar` with midpoints in increasing order. Cell edges are
/// recovered from the midpoints starting at `r = -1`; the last edge must
/// land on `0`.
pub fn read_profile<R: Read>(input: R) -> Result<StratifiedProfile> {
    let rows = records(input, &["r", "rho", "ubar"])?;
    if rows.is_empty() {
        return Err(Error::Parse("empty profile".into()));
    }
    let mut edges = vec![-1.0];
    for row in &rows {
        let last = *edges.last().unwrap();
        edges.push(2.0 * row[0] - last);
    }
    let top = *edges.last().unwrap();
    if top.abs() > 1e-9 {
        return Err(Error::Parse(format!("midpoints do not tile (-1, 0): last edge {top}")));
    }
    *edges.last_mut().unwrap() = 0.0;
    let levels = LevelGrid::from_edges(edges)?;
    StratifiedProfile::new(levels, rows.iter().map(|r| r[1]).collect(), rows.iter().map(|r| r[2]).collect())
}

/// `x, r, h, u`, level by level from the bottom.
pub fn write_state(path: &Path, grid: &SpatialGrid, levels: &LevelGrid, state: &StratifiedState) -> Result<()> {
    state.h.check_shape(grid.len(), levels.n_r())?;
    let mut w = writer(path)?;
    w.write_record(["x", "r", "h", "u"])?;
    let xs = grid.points();
    for (i, r) in levels.mids().iter().enumerate() {
        for (j, x) in xs.iter().enumerate() {
            w.write_record([*x, *r, state.h.levels[i][j], state.u.levels[i][j]].map(num))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a state written by [`write_state`] on the same grids.
pub fn read_state<R: Read>(input: R, grid: &SpatialGrid, levels: &LevelGrid) -> Result<StratifiedState> {
    let rows = records(input, &["x", "r", "h", "u"])?;
    let (n_x, n_r) = (grid.len(), levels.n_r());
    if rows.len() != n_x * n_r {
        return Err(Error::LengthMismatch {
            expected: n_x * n_r,
            got: rows.len(),
        });
    }
    let xs = grid.points();
    let tol = 1e-9;
    let mut state = StratifiedState::rest(n_x, n_r);
    for (k, row) in rows.iter().enumerate() {
        let (i, j) = (k / n_x, k % n_x);
        if (row[0] - xs[j]).abs() > tol || (row[1] - levels.mids()[i]).abs() > tol {
            return Err(Error::Parse(format!("row {}: point ({}, {}) is off the grid", k + 1, row[0], row[1])));
        }
        state.h.levels[i][j] = row[2];
        state.u.levels[i][j] = row[3];
    }
    state.h.check_finite()?;
    state.u.check_finite()?;
    Ok(state)
}

/// Reads bilayer deviations `x, H_s, H_b, U_s, U_b` sampled on `grid`.
pub fn read_bilayer_initial<R: Read>(input: R, grid: &SpatialGrid) -> Result<BilayerState> {
    let rows = records(input, &["x", "H_s", "H_b", "U_s", "U_b"])?;
    if rows.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: rows.len(),
        });
    }
    for (j, (row, x)) in rows.iter().zip(grid.points()).enumerate() {
        if (row[0] - x).abs() > 1e-9 {
            return Err(Error::Parse(format!("row {}: x = {} but the grid has {x}", j + 1, row[0])));
        }
    }
    let col = |c: usize| Field1D(rows.iter().map(|r| r[c]).collect());
    BilayerState::new(0.0, col(1), col(2), col(3), col(4))
}

/// `t, r, residual_hs, bound, ratio`; `residual_hs` is the per-level norm.
pub fn write_residuals(path: &Path, levels: &LevelGrid, samples: &[ResidualSample]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "r", "residual_hs", "bound", "ratio"])?;
    for s in samples {
        for (r, res) in levels.mids().iter().zip(&s.per_level) {
            w.write_record([s.t, *r, *res, s.bound, s.ratio].map(num))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Raw per-point table of a sweep: abscissa, error, then extra columns.
pub fn write_sweep(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut cols: Vec<(&str, &[f64])> = vec![(&sweep.abscissa, &sweep.abscissae), ("error", &sweep.errors)];
    cols.extend(sweep.columns.iter().map(|(n, v)| (n.as_str(), v.as_slice())));
    write_columns(std::fs::File::create(path)?, &cols)
}

/// Columns of a level-resolved field at one time: `x, r, value`.
pub fn write_field2d(path: &Path, grid: &SpatialGrid, levels: &LevelGrid, name: &str, f: &Field2D) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["x", "r", name])?;
    let xs = grid.points();
    for (i, r) in levels.mids().iter().enumerate() {
        for (j, x) in xs.iter().enumerate() {
            w.write_record([*x, *r, f.levels[i][j]].map(num))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Linear,
    Log,
}

/// One named polyline of a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders polylines into a plain SVG document. Non-finite points, and
/// non-positive ones on log axes, break the line.
pub fn svg_plot(title: &str, series: &[Series], x_axis: Axis, y_axis: Axis) -> String {
    let (w, h, m) = (640.0, 480.0, 50.0);
    let tx = |v: f64| if x_axis == Axis::Log { v.log10() } else { v };
    let ty = |v: f64| if y_axis == Axis::Log { v.log10() } else { v };
    let usable = |&(x, y): &(f64, f64)| {
        let (a, b) = (tx(x), ty(y));
        a.is_finite() && b.is_finite()
    };
    let mut bounds = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in series.iter().flat_map(|s| &s.points).filter(|p| usable(p)) {
        bounds.0 = bounds.0.min(tx(p.0));
        bounds.1 = bounds.1.max(tx(p.0));
        bounds.2 = bounds.2.min(ty(p.1));
        bounds.3 = bounds.3.max(ty(p.1));
    }
    if !bounds.0.is_finite() {
        bounds = (0.0, 1.0, 0.0, 1.0);
    }
    if bounds.1 == bounds.0 {
        bounds.1 += 1.0;
    }
    if bounds.3 == bounds.2 {
        bounds.3 += 1.0;
    }
    let px = |v: f64| m + (tx(v) - bounds.0) / (bounds.1 - bounds.0) * (w - 2.0 * m);
    let py = |v: f64| h - m - (ty(v) - bounds.2) / (bounds.3 - bounds.2) * (h - 2.0 * m);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    let _ = writeln!(out, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let label = |axis: Axis, lo: f64, hi: f64| match axis {
        Axis::Linear => (format!("{lo:.3}"), format!("{hi:.3}")),
        Axis::Log => (format!("1e{lo:.2}"), format!("1e{hi:.2}")),
    };
    let (xl, xh) = label(x_axis, bounds.0, bounds.1);
    let (yl, yh) = label(y_axis, bounds.2, bounds.3);
    let _ = writeln!(out, r#"<text x="{m}" y="{}" font-size="11">{xl}</text>"#, h - m + 15.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{xh}</text>"#, w - m, h - m + 15.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{yl}</text>"#, m - 4.0, h - m);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{yh}</text>"#, m - 4.0, m + 10.0);
    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for p in &s.points {
            if usable(p) {
                runs.last_mut().unwrap().push((px(p.0), py(p.1)));
            } else if !runs.last().unwrap().is_empty() {
                runs.push(Vec::new());
            }
        }
        for run in runs.iter().filter(|r| r.len() > 1) {
            let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{}</text>"#,
            m + 8.0,
            m + 14.0 * (k as f64 + 1.0),
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
