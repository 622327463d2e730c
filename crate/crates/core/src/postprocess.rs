//! Torque from the Maxwell stress tensor, relative energy-seminorm errors
//! and field export.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polar, Subdomain};
use crate::magnetostatics::{FieldView, MU0};
use crate::sparse::CsrMatrix;
use crate::spline::gauss_rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueResult {
    /// N m, for the full machine.
    pub torque: f64,
    pub radius: f64,
    pub length: f64,
    pub n_quadrature: usize,
}

/// `(r^2 L / mu0) int B_r B_phi dphi` over `[theta0, theta1]` for a field
/// given as `theta -> (B_x, B_y)` on the circle of radius `r`. The interval
/// is split at `breaks` (where the field may jump) and each piece gets
/// composite 4-point Gauss with segments of about `4 / n` of the interval.
pub fn maxwell_torque(
    field: impl Fn(f64) -> Result<[f64; 2]>,
    r: f64,
    length: f64,
    (theta0, theta1): (f64, f64),
    breaks: &[f64],
    n_quadrature: usize,
) -> Result<(f64, usize)> {
    let rule = gauss_rule(4)?;
    let target = (theta1 - theta0) / n_quadrature.div_ceil(4).max(1) as f64;
    let mut nodes = vec![theta0];
    nodes.extend(breaks.iter().copied().filter(|&b| b > theta0 && b < theta1));
    nodes.push(theta1);
    let mut sum = 0.0;
    let mut count = 0;
    for piece in nodes.windows(2) {
        let segments = ((piece[1] - piece[0]) / target).ceil().max(1.0) as usize;
        let h = (piece[1] - piece[0]) / segments as f64;
        for s in 0..segments {
            let a = piece[0] + s as f64 * h;
            for (theta, w) in rule.mapped(a, a + h) {
                let b = field(theta)?;
                let (sn, cs) = theta.sin_cos();
                let br = b[0] * cs + b[1] * sn;
                let bphi = -b[0] * sn + b[1] * cs;
                sum += w * br * bphi;
                count += 1;
            }
        }
    }
    Ok((r * r * length / MU0 * sum, count))
}

/// Angles in `(theta0, theta1)` where the circle of radius `r` crosses from
/// one element of `side` to the next, located by scanning and bisection.
pub fn element_crossings(
    view: &FieldView<'_>,
    r: f64,
    side: Subdomain,
    (theta0, theta1): (f64, f64),
    n_scan: usize,
) -> Vec<f64> {
    let hint = std::cell::Cell::new(None);
    let element_at = |theta: f64| -> Option<(usize, usize, usize)> {
        let (k, xi) = view.model.locate_near(polar(r, theta), Some(side), hint.get())?;
        hint.set(Some(k));
        let p = &view.model.patches[k];
        Some((k, p.kv_u.find_span(xi.0).ok()?, p.kv_v.find_span(xi.1).ok()?))
    };
    let mut out = Vec::new();
    let h = (theta1 - theta0) / n_scan as f64;
    let mut prev = element_at(theta0 + 0.5 * h);
    for i in 1..n_scan {
        let t = theta0 + (i as f64 + 0.5) * h;
        let cur = element_at(t);
        if cur != prev {
            let (mut a, mut b) = (t - h, t);
            for _ in 0..48 {
                let m = 0.5 * (a + b);
                if element_at(m) == prev {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        prev = cur;
    }
    out
}

/// Electromagnetic torque of the full machine: the stress integral over
/// one sector (on the rotor side below the coupling circle, the stator
/// side above it) scaled by `2 p`.
pub fn torque(view: &FieldView<'_>, r: f64, length: f64, n_quadrature: usize) -> Result<TorqueResult> {
    let gap = view
        .model
        .airgap
        .ok_or_else(|| Error::Input("torque needs a model with a circular air gap".into()))?;
    if !(r > gap.r_rotor && r < gap.r_stator) {
        return Err(Error::Domain(format!(
            "integration radius {r} outside the air gap ({}, {})",
            gap.r_rotor, gap.r_stator
        )));
    }
    let pp = view.model.pole_pairs;
    let side = if r < gap.r_interface { Subdomain::Rotor } else { Subdomain::Stator };
    let start = match side {
        Subdomain::Rotor => gap.sector_start + gap.rotor_angle,
        Subdomain::Stator => gap.sector_start,
    };
    let range = (start, start + view.model.sector_angle);
    let breaks = element_crossings(view, r, side, range, 720);
    let field = |theta: f64| {
        view.evaluate_polar(r, theta, side)
            .map(|s| s.b)
            .ok_or_else(|| Error::Domain(format!("no {side:?} patch at r = {r}, theta = {theta}")))
    };
    let (t, n) = maxwell_torque(field, r, length, range, &breaks, n_quadrature)?;
    Ok(TorqueResult {
        torque: 2.0 * pp as f64 * t,
        radius: r,
        length,
        n_quadrature: n,
    })
}

/// Relative error `sqrt((u-v)^T K (u-v) / u^T K u)`.
pub fn seminorm_error(u: &[f64], v: &[f64], k: &CsrMatrix) -> Result<f64> {
    if u.len() != v.len() || u.len() != k.nrows() {
        return Err(Error::Input(format!(
            "length mismatch: u {}, v {}, K {}",
            u.len(),
            v.len(),
            k.nrows()
        )));
    }
    let den = k.quad_form(u);
    if !(den > 0.0) {
        return Err(Error::UndefinedReference(format!("reference seminorm squared is {den:e}")));
    }
    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    Ok((k.quad_form(&d).max(0.0) / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    /// Per-patch parameter grid, one row per sample.
    Csv,
    /// Legacy VTK structured points over the bounding box.
    Vtk,
}

/// One exported sample: `x, y, A_z, B_x, B_y, |B|`.
pub type FieldRow = [f64; 6];

pub const CSV_HEADER: &str = "x,y,A_z,B_x,B_y,B_mag";

fn grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Samples every patch on an `n_u x n_v` grid of reference points.
pub fn sample_field(view: &FieldView<'_>, resolution: (usize, usize)) -> Result<Vec<FieldRow>> {
    let mut rows = Vec::new();
    for (k, patch) in view.model.patches.iter().enumerate() {
        for &v in &grid(resolution.1) {
            for &u in &grid(resolution.0) {
                let x = patch.map_point((u, v))?;
                let s = view.evaluate(k, (u, v))?;
                rows.push([x[0], x[1], s.a_z, s.b[0], s.b[1], s.b[0].hypot(s.b[1])]);
            }
        }
    }
    Ok(rows)
}

/// Writes the field to `path`; returns the number of samples written.
pub fn export_field(
    view: &FieldView<'_>,
    resolution: (usize, usize),
    format: ExportFormat,
    path: &Path,
) -> Result<usize> {
    let (text, n) = match format {
        ExportFormat::Csv => {
            let rows = sample_field(view, resolution)?;
            let mut s = String::with_capacity(rows.len() * 150);
            s.push_str(CSV_HEADER);
            s.push('\n');
            for r in &rows {
                let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            (s, rows.len())
        }
        ExportFormat::Vtk => structured_points(view, resolution)?,
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(n)
}

fn structured_points(view: &FieldView<'_>, (nx, ny): (usize, usize)) -> Result<(String, usize)> {
    if nx < 2 || ny < 2 {
        return Err(Error::Input("VTK export needs at least 2 x 2 points".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &view.model.patches {
        let (a, b) = p.bounding_box();
        for d in 0..2 {
            lo[d] = lo[d].min(a[d]);
            hi[d] = hi[d].max(b[d]);
        }
    }
    let dx = (hi[0] - lo[0]) / (nx - 1) as f64;
    let dy = (hi[1] - lo[1]) / (ny - 1) as f64;
    let mut a = Vec::with_capacity(nx * ny);
    let mut b = Vec::with_capacity(nx * ny);
    let mut inside = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = [lo[0] + i as f64 * dx, lo[1] + j as f64 * dy];
            match view.evaluate_at(x, None) {
                Some(s) => {
                    a.push(s.a_z);
                    b.push(s.b);
                    inside.push(1);
                }
                None => {
                    a.push(0.0);
                    b.push([0.0; 2]);
                    inside.push(0);
                }
            }
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nmagnetostatic field\nASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {nx} {ny} 1\nORIGIN {:.16e} {:.16e} 0\nSPACING {dx:.16e} {dy:.16e} 1", lo[0], lo[1]);
    let _ = writeln!(s, "POINT_DATA {}\nSCALARS A_z double 1\nLOOKUP_TABLE default", nx * ny);
    for v in &a {
        let _ = writeln!(s, "{v:.16e}");
    }
    let _ = writeln!(s, "SCALARS inside int 1\nLOOKUP_TABLE default");
    for v in &inside {
        let _ = writeln!(s, "{v}");
    }
    let _ = writeln!(s, "VECTORS B double");
    for v in &b {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", v[0], v[1]);
    }
    Ok((s, nx * ny))
}

/// Reads a CSV written by [`export_field`].
pub fn read_field_csv(path: &Path) -> Result<Vec<FieldRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Format(format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", n + 2)))?;
        let row: FieldRow = vals
            .try_into()
            .map_err(|_| Error::Format(format!("line {}: expected 6 columns", n + 2)))?;
        rows.push(row);
    }
    Ok(rows)
}
