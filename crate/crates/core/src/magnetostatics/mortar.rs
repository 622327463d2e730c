use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, Edge, EdgeRef, Patch, Subdomain};
use crate::spline::gauss_rule;

use super::assembly::Discretization;

/// Multiplier space on the rotor/stator interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MultiplierSpace {
    /// `cos(k theta), sin(k theta)` for the listed harmonic orders.
    Harmonic { orders: Vec<usize> },
    /// Traces of the listed free rotor functions (flat interfaces).
    Trace { rotor_dofs: Vec<usize> },
}

impl MultiplierSpace {
    pub fn len(&self) -> usize {
        match self {
            MultiplierSpace::Harmonic { orders } => 2 * orders.len(),
            MultiplierSpace::Trace { rotor_dofs } => rotor_dofs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Coupling blocks: `G_rt` (rotor frame) and `G_st`, one column per
/// multiplier.
#[derive(Debug, Clone)]
pub struct Mortar {
    pub space: MultiplierSpace,
    pub g_rt: DMatrix<f64>,
    pub g_st: DMatrix<f64>,
}

impl Mortar {
    pub fn rotation(&self, alpha: f64) -> DMatrix<f64> {
        match &self.space {
            MultiplierSpace::Harmonic { orders } => rotation_matrix(alpha, orders),
            MultiplierSpace::Trace { rotor_dofs } => DMatrix::identity(rotor_dofs.len(), rotor_dofs.len()),
        }
    }
}

/// Odd multiples of the pole-pair count: `p, 3p, 5p, ...` (`h` of them).
pub fn harmonic_orders(pole_pairs: usize, h: usize) -> Vec<usize> {
    (0..h).map(|i| pole_pairs * (2 * i + 1)).collect()
}

/// Block-diagonal rotation with blocks `[[cos ka, -sin ka], [sin ka, cos ka]]`.
pub fn rotation_matrix(alpha: f64, orders: &[usize]) -> DMatrix<f64> {
    let n = 2 * orders.len();
    let mut r = DMatrix::zeros(n, n);
    for (l, &k) in orders.iter().enumerate() {
        let (s, c) = (k as f64 * alpha).sin_cos();
        r[(2 * l, 2 * l)] = c;
        r[(2 * l, 2 * l + 1)] = -s;
        r[(2 * l + 1, 2 * l)] = s;
        r[(2 * l + 1, 2 * l + 1)] = c;
    }
    r
}

/// Quadrature points along one edge: parameter on the reference square,
/// physical point and arc-length weight.
fn edge_quadrature(patch: &Patch, edge: Edge, n_points: usize) -> Result<Vec<((f64, f64), [f64; 2], f64)>> {
    let rule = gauss_rule(n_points)?;
    let mut out = Vec::new();
    for (_, a, b) in patch.edge_knots(edge).elements() {
        for (t, w) in rule.mapped(a, b) {
            let xi = Patch::edge_point(edge, t);
            let basis = patch.basis(xi)?;
            let j = patch.jacobian_with(&basis);
            let col = match edge {
                Edge::South | Edge::North => 0,
                Edge::West | Edge::East => 1,
            };
            let ds = j[0][col].hypot(j[1][col]);
            out.push((xi, patch.map_with(&basis), w * ds));
        }
    }
    Ok(out)
}

fn airgap_edges(disc: &Discretization, side: Subdomain) -> Vec<EdgeRef> {
    disc.model
        .edges_tagged(BoundaryTag::Airgap)
        .into_iter()
        .filter(|e| disc.model.patches[e.patch].subdomain == side)
        .collect()
}

/// Accumulates `int B_i * mu(x) ds` over the air-gap edges of one side.
fn integrate_side(
    disc: &Discretization,
    side: Subdomain,
    n_points: usize,
    n_rows: usize,
    row_offset: usize,
    n_cols: usize,
    mut mu: impl FnMut([f64; 2], &mut Vec<f64>) -> Result<()>,
) -> Result<DMatrix<f64>> {
    let mut g = DMatrix::zeros(n_rows, n_cols);
    let mut vals = vec![0.0; n_cols];
    for e in airgap_edges(disc, side) {
        let patch = &disc.model.patches[e.patch];
        for (xi, x, w) in edge_quadrature(patch, e.edge, n_points)? {
            let basis = patch.basis(xi)?;
            vals.iter_mut().for_each(|v| *v = 0.0);
            mu(x, &mut vals)?;
            for (a, &loc) in basis.indices.iter().enumerate() {
                let Some(gd) = disc.dofs.global(e.patch, loc) else { continue };
                let f = gd.sign * basis.values[a] * w;
                if f == 0.0 {
                    continue;
                }
                let row = gd.index - row_offset;
                for (c, v) in vals.iter().enumerate() {
                    g[(row, c)] += f * v;
                }
            }
        }
    }
    Ok(g)
}

/// Harmonic coupling blocks for `h` harmonic orders on a circular air gap.
pub fn assemble_mortar(disc: &Discretization, h: usize, n_points: usize) -> Result<Mortar> {
    if h < 1 {
        return Err(Error::Config("the mortar needs at least one harmonic".into()));
    }
    let gap = disc
        .model
        .airgap
        .ok_or_else(|| Error::Config("harmonic mortar requires a circular air gap".into()))?;
    let orders = harmonic_orders(disc.model.pole_pairs, h);
    let (nr, ns) = (disc.dofs.n_rotor(), disc.dofs.n_stator());
    let fill = |shift: f64| {
        let orders = orders.clone();
        move |x: [f64; 2], out: &mut Vec<f64>| {
            let theta = x[1].atan2(x[0]) - shift;
            for (l, &k) in orders.iter().enumerate() {
                let (s, c) = (k as f64 * theta).sin_cos();
                out[2 * l] = c;
                out[2 * l + 1] = s;
            }
            Ok(())
        }
    };
    let m = 2 * h;
    let g_rt = integrate_side(disc, Subdomain::Rotor, n_points, nr, 0, m, fill(gap.rotor_angle))?;
    let g_st = integrate_side(disc, Subdomain::Stator, n_points, ns, nr, m, fill(0.0))?;
    Ok(Mortar { space: MultiplierSpace::Harmonic { orders }, g_rt, g_st })
}

/// Trace-space coupling for a flat rotor/stator interface: the multipliers
/// are the free rotor functions living on the interface.
pub fn assemble_trace_mortar(disc: &Discretization, n_points: usize) -> Result<Mortar> {
    let edges = airgap_edges(disc, Subdomain::Rotor);
    let mut rotor_dofs = Vec::new();
    for e in &edges {
        for loc in disc.model.patches[e.patch].edge_dofs(e.edge) {
            if let Some(g) = disc.dofs.global(e.patch, loc) {
                rotor_dofs.push(g.index);
            }
        }
    }
    rotor_dofs.sort_unstable();
    rotor_dofs.dedup();
    let column: BTreeMap<usize, usize> = rotor_dofs.iter().enumerate().map(|(c, &d)| (d, c)).collect();
    let (nr, ns, m) = (disc.dofs.n_rotor(), disc.dofs.n_stator(), rotor_dofs.len());

    let eval_rotor_trace = |x: [f64; 2], out: &mut Vec<f64>| -> Result<()> {
        let found = edges.iter().find_map(|e| {
            disc.model.patches[e.patch].inverse_map(x).map(|xi| (e.patch, xi))
        });
        let (k, xi) = found.ok_or_else(|| {
            Error::Assembly(format!("interface point {x:?} not covered by the rotor side"))
        })?;
        let basis = disc.model.patches[k].basis(xi)?;
        for (a, &loc) in basis.indices.iter().enumerate() {
            if let Some(g) = disc.dofs.global(k, loc) {
                if let Some(&c) = column.get(&g.index) {
                    out[c] += g.sign * basis.values[a];
                }
            }
        }
        Ok(())
    };
    let g_rt = integrate_side(disc, Subdomain::Rotor, n_points, nr, 0, m, eval_rotor_trace)?;
    let g_st = integrate_side(disc, Subdomain::Stator, n_points, ns, nr, m, eval_rotor_trace)?;
    Ok(Mortar { space: MultiplierSpace::Trace { rotor_dofs }, g_rt, g_st })
}
