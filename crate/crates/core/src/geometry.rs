//! Multi-patch NURBS geometry: patch maps from the reference square,
//! Jacobians, conforming interfaces and boundary tags, and the built-in
//! parametric machine sector.
//!
//! Edge convention: `South` is `v = 0`, `North` is `v = 1`, `West` is
//! `u = 0`, `East` is `u = 1`. South/North edges run along `u`, West/East
//! edges along `v`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{eval_tensor_2d, gauss_rule, insert_knot, KnotVector, TensorBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialTag {
    Iron,
    Air,
    Magnet,
    Coil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subdomain {
    Rotor,
    Stator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    South,
    East,
    North,
    West,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::South, Edge::East, Edge::North, Edge::West];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Dirichlet,
    AntiperiodicMaster,
    AntiperiodicSlave,
    Airgap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeRef {
    pub patch: usize,
    pub edge: Edge,
}

impl EdgeRef {
    pub fn new(patch: usize, edge: Edge) -> Self {
        Self { patch, edge }
    }
}

/// Two edges sharing their control points; `reversed` flips the order of
/// the second edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub a: EdgeRef,
    pub b: EdgeRef,
    pub reversed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeTag {
    pub edge: EdgeRef,
    pub tag: BoundaryTag,
}

/// Anti-periodic edge pairing: slave coefficients equal minus the matching
/// master coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPair {
    pub master: EdgeRef,
    pub slave: EdgeRef,
    pub reversed: bool,
}

/// Circular rotor/stator interface of a machine model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirGap {
    /// Rotor surface radius.
    pub r_rotor: f64,
    /// Radius of the coupling circle.
    pub r_interface: f64,
    /// Stator bore radius.
    pub r_stator: f64,
    /// Rigid rotor rotation in radians.
    pub rotor_angle: f64,
    /// Physical start angle of the stator sector.
    pub sector_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub name: String,
    pub kv_u: KnotVector,
    pub kv_v: KnotVector,
    pub weights: Vec<f64>,
    pub control_points: Vec<[f64; 2]>,
    pub material: MaterialTag,
    pub subdomain: Subdomain,
    /// Electrical slot position (0, 1, 2) of coil patches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<usize>,
}

/// One element of a patch: knot spans and parameter intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchElement {
    pub u: (f64, f64),
    pub v: (f64, f64),
}

impl Patch {
    pub fn new(
        name: impl Into<String>,
        kv_u: KnotVector,
        kv_v: KnotVector,
        control_points: Vec<[f64; 2]>,
        weights: Vec<f64>,
        material: MaterialTag,
        subdomain: Subdomain,
    ) -> Result<Self> {
        let n = kv_u.num_basis() * kv_v.num_basis();
        if control_points.len() != n || weights.len() != n {
            return Err(Error::Input(format!(
                "patch needs {n} control points and weights, got {} and {}",
                control_points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Input("patch weights must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            kv_u,
            kv_v,
            weights,
            control_points,
            material,
            subdomain,
            phase: None,
        })
    }

    /// Single-element patch of degree 1 through four corners
    /// (south-west, south-east, north-west, north-east), elevated to
    /// `degree` and refined to `elements` per direction.
    pub fn bilinear(
        corners: [[f64; 2]; 4],
        degree: usize,
        elements: (usize, usize),
        material: MaterialTag,
        subdomain: Subdomain,
    ) -> Self {
        let coarse = Self::bezier("bilinear", 1, 1, corners.to_vec(), vec![1.0; 4], material, subdomain);
        coarse.elevated(degree.max(1), degree.max(1)).refined_uniform(elements.0, elements.1)
    }

    fn bezier(
        name: &str,
        pu: usize,
        pv: usize,
        points: Vec<[f64; 2]>,
        weights: Vec<f64>,
        material: MaterialTag,
        subdomain: Subdomain,
    ) -> Self {
        Self::new(
            name,
            KnotVector::open_uniform(pu, 1),
            KnotVector::open_uniform(pv, 1),
            points,
            weights,
            material,
            subdomain,
        )
        .expect("consistent Bezier patch")
    }

    pub fn n_u(&self) -> usize {
        self.kv_u.num_basis()
    }

    pub fn n_v(&self) -> usize {
        self.kv_v.num_basis()
    }

    pub fn num_basis(&self) -> usize {
        self.n_u() * self.n_v()
    }

    pub fn basis(&self, xi: (f64, f64)) -> Result<TensorBasis> {
        eval_tensor_2d(&self.kv_u, &self.kv_v, Some(&self.weights), xi)
    }

    pub fn map_point(&self, xi: (f64, f64)) -> Result<[f64; 2]> {
        let b = self.basis(xi)?;
        Ok(self.map_with(&b))
    }

    pub(crate) fn map_with(&self, b: &TensorBasis) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (k, &i) in b.indices.iter().enumerate() {
            x[0] += b.values[k] * self.control_points[i][0];
            x[1] += b.values[k] * self.control_points[i][1];
        }
        x
    }

    /// `[[dx/du, dx/dv], [dy/du, dy/dv]]`.
    pub fn jacobian(&self, xi: (f64, f64)) -> Result<[[f64; 2]; 2]> {
        let b = self.basis(xi)?;
        Ok(self.jacobian_with(&b))
    }

    pub(crate) fn jacobian_with(&self, b: &TensorBasis) -> [[f64; 2]; 2] {
        let mut j = [[0.0; 2]; 2];
        for (k, &i) in b.indices.iter().enumerate() {
            let p = self.control_points[i];
            for d in 0..2 {
                j[d][0] += b.d_u[k] * p[d];
                j[d][1] += b.d_v[k] * p[d];
            }
        }
        j
    }

    /// Local indices of the functions on an edge, in edge-parameter order.
    pub fn edge_dofs(&self, edge: Edge) -> Vec<usize> {
        let (nu, nv) = (self.n_u(), self.n_v());
        match edge {
            Edge::South => (0..nu).collect(),
            Edge::North => (0..nu).map(|i| i + nu * (nv - 1)).collect(),
            Edge::West => (0..nv).map(|j| nu * j).collect(),
            Edge::East => (0..nv).map(|j| nu - 1 + nu * j).collect(),
        }
    }

    pub fn edge_knots(&self, edge: Edge) -> &KnotVector {
        match edge {
            Edge::South | Edge::North => &self.kv_u,
            Edge::West | Edge::East => &self.kv_v,
        }
    }

    /// Reference point on an edge at edge parameter `t`.
    pub fn edge_point(edge: Edge, t: f64) -> (f64, f64) {
        match edge {
            Edge::South => (t, 0.0),
            Edge::North => (t, 1.0),
            Edge::West => (0.0, t),
            Edge::East => (1.0, t),
        }
    }

    pub fn elements(&self) -> Vec<PatchElement> {
        let eu = self.kv_u.elements();
        let ev = self.kv_v.elements();
        let mut out = Vec::with_capacity(eu.len() * ev.len());
        for &(_, c, d) in &ev {
            for &(_, a, b) in &eu {
                out.push(PatchElement { u: (a, b), v: (c, d) });
            }
        }
        out
    }

    fn homogeneous(&self) -> Vec<[f64; 3]> {
        self.control_points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| [w * p[0], w * p[1], w])
            .collect()
    }

    fn from_homogeneous(&self, kv_u: KnotVector, kv_v: KnotVector, h: Vec<[f64; 3]>) -> Self {
        Self {
            kv_u,
            kv_v,
            weights: h.iter().map(|q| q[2]).collect(),
            control_points: h.iter().map(|q| [q[0] / q[2], q[1] / q[2]]).collect(),
            ..self.clone()
        }
    }

    /// Inserts knot `x` in the `u` (`dir = 0`) or `v` (`dir = 1`) direction.
    pub fn with_knot(&self, dir: usize, x: f64) -> Result<Self> {
        let (nu, nv) = (self.n_u(), self.n_v());
        let h = self.homogeneous();
        if dir == 0 {
            let mut rows = Vec::with_capacity(nv);
            let mut new_kv = self.kv_u.clone();
            for j in 0..nv {
                let (kv, row) = insert_knot(&self.kv_u, &h[nu * j..nu * (j + 1)], x)?;
                new_kv = kv;
                rows.push(row);
            }
            let out: Vec<[f64; 3]> = rows.into_iter().flatten().collect();
            Ok(self.from_homogeneous(new_kv, self.kv_v.clone(), out))
        } else {
            let mut new_kv = self.kv_v.clone();
            let mut cols = Vec::with_capacity(nu);
            for i in 0..nu {
                let col: Vec<[f64; 3]> = (0..nv).map(|j| h[i + nu * j]).collect();
                let (kv, c) = insert_knot(&self.kv_v, &col, x)?;
                new_kv = kv;
                cols.push(c);
            }
            let nv2 = nv + 1;
            let mut out = vec![[0.0; 3]; nu * nv2];
            for (i, c) in cols.iter().enumerate() {
                for j in 0..nv2 {
                    out[i + nu * j] = c[j];
                }
            }
            Ok(self.from_homogeneous(self.kv_u.clone(), new_kv, out))
        }
    }

    /// Splits every element at its midpoint in both directions.
    pub fn bisected(&self) -> Self {
        let mut p = self.clone();
        for (_, a, b) in self.kv_u.elements() {
            p = p.with_knot(0, 0.5 * (a + b)).expect("midpoint inside [0,1]");
        }
        for (_, a, b) in self.kv_v.elements() {
            p = p.with_knot(1, 0.5 * (a + b)).expect("midpoint inside [0,1]");
        }
        p
    }

    /// Inserts the interior knots `i / n` of a uniform partition; intended
    /// for single-element patches.
    pub fn refined_uniform(&self, n_u: usize, n_v: usize) -> Self {
        let mut p = self.clone();
        for i in 1..n_u {
            p = p.with_knot(0, i as f64 / n_u as f64).expect("uniform knot");
        }
        for j in 1..n_v {
            p = p.with_knot(1, j as f64 / n_v as f64).expect("uniform knot");
        }
        p
    }

    /// Inserts the given interior knots in each direction; intended for
    /// single-element patches.
    pub fn refined_with(&self, knots_u: &[f64], knots_v: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        for &x in knots_u {
            p = p.with_knot(0, x)?;
        }
        for &x in knots_v {
            p = p.with_knot(1, x)?;
        }
        Ok(p)
    }

    /// Degree elevation of a single-element (Bezier) patch.
    pub fn elevated(&self, pu: usize, pv: usize) -> Self {
        assert!(
            self.kv_u.num_elements() == 1 && self.kv_v.num_elements() == 1,
            "degree elevation is only implemented for Bezier patches"
        );
        let mut h = self.homogeneous();
        let (mut du, mut dv) = (self.kv_u.degree(), self.kv_v.degree());
        while du < pu {
            let nv = dv + 1;
            let mut out = Vec::with_capacity((du + 2) * nv);
            for j in 0..nv {
                let row = &h[(du + 1) * j..(du + 1) * (j + 1)];
                out.extend(elevate_bezier(row));
            }
            h = out;
            du += 1;
        }
        while dv < pv {
            let nu = du + 1;
            let cols: Vec<Vec<[f64; 3]>> = (0..nu)
                .map(|i| elevate_bezier(&(0..=dv).map(|j| h[i + nu * j]).collect::<Vec<_>>()))
                .collect();
            let mut out = vec![[0.0; 3]; nu * (dv + 2)];
            for (i, c) in cols.iter().enumerate() {
                for (j, q) in c.iter().enumerate() {
                    out[i + nu * j] = *q;
                }
            }
            h = out;
            dv += 1;
        }
        self.from_homogeneous(KnotVector::open_uniform(du, 1), KnotVector::open_uniform(dv, 1), h)
    }

    pub fn transformed(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        Self {
            control_points: self.control_points.iter().map(|&p| f(p)).collect(),
            ..self.clone()
        }
    }

    /// Axis-aligned box around the control net (contains the patch).
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.control_points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Newton inversion of the patch map. Returns `None` when `x` lies
    /// outside the patch.
    pub fn inverse_map(&self, x: [f64; 2]) -> Option<(f64, f64)> {
        let (lo, hi) = self.bounding_box();
        let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let tol = 1e-9 * scale;
        if (0..2).any(|d| x[d] < lo[d] - tol || x[d] > hi[d] + tol) {
            return None;
        }
        let mut best: Option<((f64, f64), f64)> = None;
        for start in [(0.5, 0.5), (0.25, 0.25), (0.75, 0.75), (0.25, 0.75), (0.75, 0.25)] {
            let mut xi = start;
            for _ in 0..60 {
                let b = self.basis(xi).ok()?;
                let y = self.map_with(&b);
                let j = self.jacobian_with(&b);
                let r = [x[0] - y[0], x[1] - y[1]];
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det.abs() < 1e-300 {
                    break;
                }
                let du = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
                let dv = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
                let next = ((xi.0 + du).clamp(0.0, 1.0), (xi.1 + dv).clamp(0.0, 1.0));
                let stalled = next == xi;
                xi = next;
                if stalled || (du.abs() < 1e-15 && dv.abs() < 1e-15) {
                    break;
                }
            }
            let y = self.map_point(xi).ok()?;
            let res = (x[0] - y[0]).hypot(x[1] - y[1]);
            if best.is_none_or(|(_, r)| res < r) {
                best = Some((xi, res));
            }
            if res <= 1e-12 * scale {
                break;
            }
        }
        best.filter(|&(_, r)| r <= 1e-10 * scale).map(|(xi, _)| xi)
    }
}

fn elevate_bezier(p: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let n = p.len() - 1;
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..=n + 1 {
        let a = i as f64 / (n + 1) as f64;
        let mut q = [0.0; 3];
        for d in 0..3 {
            let prev = if i > 0 { p[i - 1][d] } else { 0.0 };
            let cur = if i <= n { p[i][d] } else { 0.0 };
            q[d] = a * prev + (1.0 - a) * cur;
        }
        out.push(q);
    }
    out
}

/// Quadratic rational curve: three control points and weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCurve {
    pub points: [[f64; 2]; 3],
    pub weights: [f64; 3],
}

impl QuadraticCurve {
    pub fn line(a: [f64; 2], b: [f64; 2]) -> Self {
        Self {
            points: [a, [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])], b],
            weights: [1.0; 3],
        }
    }

    /// Circular arc of radius `r` from angle `a0` to `a1` (|a1 - a0| < pi).
    pub fn arc(r: f64, a0: f64, a1: f64) -> Self {
        let half = 0.5 * (a1 - a0).abs();
        let mid = 0.5 * (a0 + a1);
        let rm = r / half.cos();
        Self {
            points: [polar(r, a0), polar(rm, mid), polar(r, a1)],
            weights: [1.0, half.cos(), 1.0],
        }
    }
}

pub fn polar(r: f64, angle: f64) -> [f64; 2] {
    [r * angle.cos(), r * angle.sin()]
}

/// Biquadratic patch spanned by four boundary curves (south/north along
/// `u`, west/east along `v`); the centre point is the bilinearly blended
/// Coons value in homogeneous coordinates.
pub fn coons_patch(
    south: QuadraticCurve,
    north: QuadraticCurve,
    west: QuadraticCurve,
    east: QuadraticCurve,
    material: MaterialTag,
    subdomain: Subdomain,
) -> Patch {
    let h = |c: &QuadraticCurve, k: usize| {
        let w = c.weights[k];
        [w * c.points[k][0], w * c.points[k][1], w]
    };
    let mut net = [[0.0f64; 3]; 9];
    for a in 0..3 {
        net[a] = h(&south, a);
        net[a + 6] = h(&north, a);
    }
    net[3] = h(&west, 1);
    net[5] = h(&east, 1);
    for d in 0..3 {
        net[4][d] = 0.5 * (net[1][d] + net[7][d] + net[3][d] + net[5][d])
            - 0.25 * (net[0][d] + net[2][d] + net[6][d] + net[8][d]);
    }
    let weights: Vec<f64> = net.iter().map(|q| q[2]).collect();
    let points: Vec<[f64; 2]> = net.iter().map(|q| [q[0] / q[2], q[1] / q[2]]).collect();
    Patch::bezier("coons", 2, 2, points, weights, material, subdomain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPatchModel {
    pub patches: Vec<Patch>,
    pub interfaces: Vec<Interface>,
    pub boundary_tags: Vec<EdgeTag>,
    pub antiperiodic_pairs: Vec<PeriodicPair>,
    pub pole_pairs: usize,
    pub sector_angle: f64,
    pub airgap: Option<AirGap>,
}

impl MultiPatchModel {
    pub fn tag_of(&self, e: EdgeRef) -> Vec<BoundaryTag> {
        self.boundary_tags.iter().filter(|t| t.edge == e).map(|t| t.tag).collect()
    }

    pub fn is_interface_edge(&self, e: EdgeRef) -> bool {
        self.interfaces.iter().any(|i| i.a == e || i.b == e)
    }

    pub fn edges_tagged(&self, tag: BoundaryTag) -> Vec<EdgeRef> {
        self.boundary_tags.iter().filter(|t| t.tag == tag).map(|t| t.edge).collect()
    }

    /// Finds the patch (optionally restricted to one subdomain) containing
    /// `x` and its reference coordinates.
    pub fn locate(&self, x: [f64; 2], subdomain: Option<Subdomain>) -> Option<(usize, (f64, f64))> {
        self.patches
            .iter()
            .enumerate()
            .filter(|(_, p)| subdomain.is_none_or(|s| p.subdomain == s))
            .find_map(|(k, p)| p.inverse_map(x).map(|xi| (k, xi)))
    }

    /// [`locate`](Self::locate) trying the patch `hint` first.
    pub fn locate_near(
        &self,
        x: [f64; 2],
        subdomain: Option<Subdomain>,
        hint: Option<usize>,
    ) -> Option<(usize, (f64, f64))> {
        hint.filter(|&k| k < self.patches.len() && subdomain.is_none_or(|s| self.patches[k].subdomain == s))
            .and_then(|k| self.patches[k].inverse_map(x).map(|xi| (k, xi)))
            .or_else(|| self.locate(x, subdomain))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Uniform midpoint refinement, `levels` times.
pub fn refine(model: &MultiPatchModel, levels: usize) -> MultiPatchModel {
    let mut out = model.clone();
    for _ in 0..levels {
        out.patches = out.patches.iter().map(Patch::bisected).collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationIssue {
    NonPositiveJacobian { patch: usize, xi: (f64, f64), det: f64 },
    NonConformingInterface { interface: usize, detail: String },
    UntaggedEdge { patch: usize, edge: Edge },
    MultiplyTaggedEdge { patch: usize, edge: Edge, tags: Vec<BoundaryTag> },
    UnpairedPeriodicEdge { patch: usize, edge: Edge },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub min_jacobian: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Jacobian positivity at the `(p+1)`-point Gauss nodes of every element,
/// interface conformity and tag completeness.
pub fn validate_geometry(model: &MultiPatchModel) -> ValidationReport {
    let mut report = ValidationReport {
        issues: Vec::new(),
        min_jacobian: f64::INFINITY,
    };
    for (k, patch) in model.patches.iter().enumerate() {
        let gu = gauss_rule(patch.kv_u.degree() + 1).expect("degree within rule table");
        let gv = gauss_rule(patch.kv_v.degree() + 1).expect("degree within rule table");
        for el in patch.elements() {
            for (v, _) in gv.mapped(el.v.0, el.v.1) {
                for (u, _) in gu.mapped(el.u.0, el.u.1) {
                    let j = patch.jacobian((u, v)).expect("Gauss node inside [0,1]");
                    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                    report.min_jacobian = report.min_jacobian.min(det);
                    if !(det > 0.0) {
                        report.issues.push(ValidationIssue::NonPositiveJacobian {
                            patch: k,
                            xi: (u, v),
                            det,
                        });
                    }
                }
            }
        }
    }

    for (n, itf) in model.interfaces.iter().enumerate() {
        let (pa, pb) = (&model.patches[itf.a.patch], &model.patches[itf.b.patch]);
        let (ka, kb) = (pa.edge_knots(itf.a.edge), pb.edge_knots(itf.b.edge));
        let kb_knots: Vec<f64> = if itf.reversed {
            kb.knots().iter().rev().map(|k| 1.0 - k).collect()
        } else {
            kb.knots().to_vec()
        };
        let same_knots = ka.degree() == kb.degree()
            && ka.knots().len() == kb_knots.len()
            && ka.knots().iter().zip(&kb_knots).all(|(x, y)| (x - y).abs() <= 1e-14);
        if !same_knots {
            report.issues.push(ValidationIssue::NonConformingInterface {
                interface: n,
                detail: "edge knot vectors differ".into(),
            });
            continue;
        }
        let da = pa.edge_dofs(itf.a.edge);
        let mut db = pb.edge_dofs(itf.b.edge);
        if itf.reversed {
            db.reverse();
        }
        for (&i, &j) in da.iter().zip(&db) {
            let (p, q) = (pa.control_points[i], pb.control_points[j]);
            let gap = (p[0] - q[0]).hypot(p[1] - q[1]);
            let dw = (pa.weights[i] - pb.weights[j]).abs();
            if gap > 1e-12 || dw > 1e-12 {
                report.issues.push(ValidationIssue::NonConformingInterface {
                    interface: n,
                    detail: format!("control points differ by {gap:e} (weights by {dw:e})"),
                });
                break;
            }
        }
    }

    for (k, _) in model.patches.iter().enumerate() {
        for edge in Edge::ALL {
            let e = EdgeRef::new(k, edge);
            if model.is_interface_edge(e) {
                continue;
            }
            let tags = model.tag_of(e);
            match tags.len() {
                0 => report.issues.push(ValidationIssue::UntaggedEdge { patch: k, edge }),
                1 => {
                    let periodic = matches!(
                        tags[0],
                        BoundaryTag::AntiperiodicMaster | BoundaryTag::AntiperiodicSlave
                    );
                    let paired = model
                        .antiperiodic_pairs
                        .iter()
                        .any(|p| p.master == e || p.slave == e);
                    if periodic && !paired {
                        report.issues.push(ValidationIssue::UnpairedPeriodicEdge { patch: k, edge });
                    }
                }
                _ => report.issues.push(ValidationIssue::MultiplyTaggedEdge {
                    patch: k,
                    edge,
                    tags,
                }),
            }
        }
    }
    report
}

/// Design and operating parameters: magnet burial depth, height and width
/// (meters) and rotor angle (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub mag: f64,
    pub mh: f64,
    pub mw: f64,
    pub alpha_deg: f64,
}

impl ParamVector {
    pub const NAMES: [&'static str; 4] = ["MAG", "MH", "MW", "alpha"];

    pub fn new(mag: f64, mh: f64, mw: f64, alpha_deg: f64) -> Self {
        Self { mag, mh, mw, alpha_deg }
    }

    /// Lengths given in millimetres.
    pub fn from_mm(mag: f64, mh: f64, mw: f64, alpha_deg: f64) -> Self {
        Self::new(mag * 1e-3, mh * 1e-3, mw * 1e-3, alpha_deg)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.mag, self.mh, self.mw, self.alpha_deg]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn alpha_rad(&self) -> f64 {
        self.alpha_deg.to_radians()
    }
}

/// Box bounds of the parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub mag: [f64; 2],
    pub mh: [f64; 2],
    pub mw: [f64; 2],
    pub alpha_deg: [f64; 2],
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            mag: [5e-3, 15e-3],
            mh: [1.5e-3, 12e-3],
            mw: [7e-3, 23e-3],
            alpha_deg: [0.0, 20.0],
        }
    }
}

impl ParamRanges {
    pub fn bounds(&self) -> [[f64; 2]; 4] {
        [self.mag, self.mh, self.mw, self.alpha_deg]
    }

    pub fn midpoint(&self) -> ParamVector {
        let b = self.bounds();
        ParamVector::from_array(std::array::from_fn(|k| 0.5 * (b[k][0] + b[k][1])))
    }

    pub fn contains(&self, p: &ParamVector) -> bool {
        self.bounds().iter().zip(p.to_array()).all(|(b, x)| x >= b[0] && x <= b[1])
    }

    /// Affine map of a unit-cube point into the box.
    pub fn scale(&self, unit: [f64; 4]) -> ParamVector {
        let b = self.bounds();
        ParamVector::from_array(std::array::from_fn(|k| b[k][0] + unit[k] * (b[k][1] - b[k][0])))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in ParamVector::NAMES.iter().zip(self.bounds()) {
            if !(b[0] < b[1]) {
                return Err(Error::Config(format!("degenerate range for {name}: {b:?}")));
            }
        }
        Ok(())
    }
}

/// Built-in machine sector: radii in meters, element counts per patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineConfig {
    pub pole_pairs: usize,
    pub r_shaft: f64,
    pub r_rotor: f64,
    pub airgap: f64,
    pub r_slot: f64,
    pub r_stator: f64,
    /// Slot width as a fraction of the slot pitch.
    pub slot_fraction: f64,
    pub degree: usize,
    /// Elements per rotor patch along `(u, v)`.
    pub rotor_elements: [usize; 2],
    /// Elements per stator patch along `(u, v)`.
    pub stator_elements: [usize; 2],
    /// Blend between uniform (0) and cosine-clustered (1) knots along the
    /// circumferential direction, refining towards patch corners.
    pub grading: f64,
    /// Minimum clearance between the magnet and other boundaries.
    pub margin: f64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            pole_pairs: 3,
            r_shaft: 0.020,
            r_rotor: 0.055,
            airgap: 0.001,
            r_slot: 0.070,
            r_stator: 0.085,
            slot_fraction: 0.5,
            degree: 2,
            rotor_elements: [10, 3],
            stator_elements: [6, 3],
            grading: 0.5,
            margin: 0.5e-3,
        }
    }
}

impl MachineConfig {
    pub fn r_interface(&self) -> f64 {
        self.r_rotor + 0.5 * self.airgap
    }

    pub fn r_bore(&self) -> f64 {
        self.r_rotor + self.airgap
    }

    pub fn half_pitch(&self) -> f64 {
        PI / (2 * self.pole_pairs) as f64
    }

    /// Interior circumferential knots for `n` elements.
    pub fn circumferential_knots(&self, n: usize) -> Vec<f64> {
        (1..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                (1.0 - self.grading) * t + self.grading * 0.5 * (1.0 - (PI * t).cos())
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        let ok = self.pole_pairs >= 1
            && self.r_shaft > 0.0
            && self.r_rotor > self.r_shaft
            && self.airgap > 0.0
            && self.r_slot > self.r_bore()
            && self.r_stator > self.r_slot
            && self.slot_fraction > 0.0
            && self.slot_fraction < 1.0
            && (0.0..=1.0).contains(&self.grading)
            && self.degree >= 2
            && self.rotor_elements.iter().chain(&self.stator_elements).all(|&n| n >= 1);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent machine configuration: {self:?}")))
        }
    }

    /// Magnet corner checks; returns the magnet bottom and top heights.
    pub fn check_params(&self, p: &ParamVector) -> Result<(f64, f64)> {
        let fail = |constraint, detail: String| Err(Error::Parameter { constraint, detail });
        if !(p.mag > 0.0 && p.mh > 0.0 && p.mw > 0.0) || !p.alpha_deg.is_finite() {
            return fail("positive_magnet_dimensions", format!("{p:?}"));
        }
        let y_top = self.r_rotor - p.mag;
        let y_bot = y_top - p.mh;
        let hw = 0.5 * p.mw;
        let corner = hw.hypot(y_top);
        if corner > self.r_rotor - self.margin {
            return fail(
                "magnet_inside_rotor",
                format!("top corner radius {corner:.6} m exceeds {:.6} m", self.r_rotor - self.margin),
            );
        }
        if y_bot < self.r_shaft + self.margin {
            return fail(
                "magnet_above_shaft",
                format!("magnet bottom {y_bot:.6} m below {:.6} m", self.r_shaft + self.margin),
            );
        }
        let h = self.half_pitch();
        let clearance = y_bot * h.sin() - hw * h.cos();
        if clearance < self.margin {
            return fail(
                "magnet_within_pole",
                format!("clearance to the pole boundary {clearance:.6} m below {:.6} m", self.margin),
            );
        }
        Ok((y_bot, y_top))
    }
}

/// Machine sector with the built-in dimensions.
pub fn build_machine_geometry(p: &ParamVector) -> Result<MultiPatchModel> {
    build_machine_geometry_with(&MachineConfig::default(), p)
}

/// One-pole sector. Rotor: iron yoke on the shaft, magnet under an iron
/// pole piece, air flux barriers on both sides, rotor-side air gap ring.
/// Stator: stator-side air gap ring, three coil slots between teeth, yoke.
/// The pole axis sits at the centre of the sector `[pi/(2p), 3pi/(2p)]`;
/// the rotor is turned by alpha.
pub fn build_machine_geometry_with(cfg: &MachineConfig, p: &ParamVector) -> Result<MultiPatchModel> {
    cfg.check()?;
    let (y_bot, y_top) = cfg.check_params(p)?;
    let h = cfg.half_pitch();
    let (left, right) = (PI / 2.0 + h, PI / 2.0 - h);
    let hw = 0.5 * p.mw;
    let frame = PI / cfg.pole_pairs as f64 - PI / 2.0;
    let alpha = p.alpha_rad();

    // rotor: column lines i = 0..4 (left cut, magnet sides, right cut),
    // row lines j = 0..5 (shaft, magnet bottom, magnet top, rotor surface, interface)
    let a_bot = y_bot.atan2(-hw);
    let a_top = y_top.atan2(-hw);
    let (r_bot, r_top) = (hw.hypot(y_bot), hw.hypot(y_top));
    let row_angles = |j: usize| -> [f64; 4] {
        match j {
            0 | 1 => [left, a_bot, PI - a_bot, right],
            _ => [left, a_top, PI - a_top, right],
        }
    };
    let vertex = |i: usize, j: usize| -> [f64; 2] {
        let ang = row_angles(j)[i];
        match j {
            0 => polar(cfg.r_shaft, ang),
            1 if i == 1 || i == 2 => [if i == 1 { -hw } else { hw }, y_bot],
            1 => polar(r_bot, ang),
            2 if i == 1 || i == 2 => [if i == 1 { -hw } else { hw }, y_top],
            2 => polar(r_top, ang),
            3 => polar(cfg.r_rotor, ang),
            _ => polar(cfg.r_interface(), ang),
        }
    };
    let row_curve = |i: usize, j: usize| -> QuadraticCurve {
        let ang = row_angles(j);
        match j {
            0 => QuadraticCurve::arc(cfg.r_shaft, ang[i], ang[i + 1]),
            3 => QuadraticCurve::arc(cfg.r_rotor, ang[i], ang[i + 1]),
            4 => QuadraticCurve::arc(cfg.r_interface(), ang[i], ang[i + 1]),
            _ => QuadraticCurve::line(vertex(i, j), vertex(i + 1, j)),
        }
    };
    let col_curve = |i: usize, j: usize| QuadraticCurve::line(vertex(i, j), vertex(i, j + 1));

    let rot_rotor = frame + alpha;
    let (cr, sr) = (rot_rotor.cos(), rot_rotor.sin());
    let (cs, ss) = (frame.cos(), frame.sin());
    let uniform = |n: usize| (1..n).map(|i| i as f64 / n as f64).collect::<Vec<_>>();
    let rotor_knots = (
        cfg.circumferential_knots(cfg.rotor_elements[0]),
        uniform(cfg.rotor_elements[1]),
    );
    let stator_knots = (
        cfg.circumferential_knots(cfg.stator_elements[0]),
        uniform(cfg.stator_elements[1]),
    );
    let mut patches = Vec::new();
    let mut rotor_ids = [[0usize; 4]; 3];
    for j in 0..4 {
        for i in 0..3 {
            let material = match (i, j) {
                (1, 1) => MaterialTag::Magnet,
                (_, 0) | (1, 2) => MaterialTag::Iron,
                _ => MaterialTag::Air,
            };
            let coarse = coons_patch(
                row_curve(i, j),
                row_curve(i, j + 1),
                col_curve(i, j),
                col_curve(i + 1, j),
                material,
                Subdomain::Rotor,
            );
            let mut patch = coarse
                .elevated(cfg.degree, cfg.degree)
                .refined_with(&rotor_knots.0, &rotor_knots.1)?
                .transformed(|q| [cr * q[0] - sr * q[1], sr * q[0] + cr * q[1]]);
            patch.name = format!("rotor_r{j}c{i}");
            rotor_ids[i][j] = patches.len();
            patches.push(patch);
        }
    }

    // stator: 7 columns (tooth, slot, tooth, slot, tooth, slot, tooth), 3 rows
    let slot_pitch = 2.0 * h / 3.0;
    let slot_half = 0.5 * cfg.slot_fraction * slot_pitch;
    let mut col_angles = vec![left];
    for k in 0..3 {
        let centre = left - (k as f64 + 0.5) * slot_pitch;
        col_angles.push(centre + slot_half);
        col_angles.push(centre - slot_half);
    }
    col_angles.push(right);
    let radii = [cfg.r_interface(), cfg.r_bore(), cfg.r_slot, cfg.r_stator];
    let mut stator_ids = [[0usize; 3]; 7];
    for j in 0..3 {
        for i in 0..7 {
            let (a0, a1) = (col_angles[i], col_angles[i + 1]);
            let (r0, r1) = (radii[j], radii[j + 1]);
            let (material, phase) = match (i, j) {
                (_, 0) => (MaterialTag::Air, None),
                (1 | 3 | 5, 1) => (MaterialTag::Coil, Some((5 - i) / 2)),
                _ => (MaterialTag::Iron, None),
            };
            let coarse = coons_patch(
                QuadraticCurve::arc(r0, a0, a1),
                QuadraticCurve::arc(r1, a0, a1),
                QuadraticCurve::line(polar(r0, a0), polar(r1, a0)),
                QuadraticCurve::line(polar(r0, a1), polar(r1, a1)),
                material,
                Subdomain::Stator,
            );
            let mut patch = coarse
                .elevated(cfg.degree, cfg.degree)
                .refined_with(&stator_knots.0, &stator_knots.1)?
                .transformed(|q| [cs * q[0] - ss * q[1], ss * q[0] + cs * q[1]]);
            patch.name = format!("stator_r{j}c{i}");
            patch.phase = phase;
            stator_ids[i][j] = patches.len();
            patches.push(patch);
        }
    }

    let mut interfaces = Vec::new();
    let mut tags = Vec::new();
    let mut pairs = Vec::new();
    let mut grid = |ids: &dyn Fn(usize, usize) -> usize, ncol: usize, nrow: usize, rotor: bool| {
        for j in 0..nrow {
            for i in 0..ncol {
                let k = ids(i, j);
                if i + 1 < ncol {
                    interfaces.push(Interface {
                        a: EdgeRef::new(k, Edge::East),
                        b: EdgeRef::new(ids(i + 1, j), Edge::West),
                        reversed: false,
                    });
                }
                if j + 1 < nrow {
                    interfaces.push(Interface {
                        a: EdgeRef::new(k, Edge::North),
                        b: EdgeRef::new(ids(i, j + 1), Edge::South),
                        reversed: false,
                    });
                }
                if j == 0 {
                    let tag = if rotor { BoundaryTag::Dirichlet } else { BoundaryTag::Airgap };
                    tags.push(EdgeTag { edge: EdgeRef::new(k, Edge::South), tag });
                }
                if j + 1 == nrow {
                    let tag = if rotor { BoundaryTag::Airgap } else { BoundaryTag::Dirichlet };
                    tags.push(EdgeTag { edge: EdgeRef::new(k, Edge::North), tag });
                }
            }
            let master = EdgeRef::new(ids(ncol - 1, j), Edge::East);
            let slave = EdgeRef::new(ids(0, j), Edge::West);
            tags.push(EdgeTag { edge: master, tag: BoundaryTag::AntiperiodicMaster });
            tags.push(EdgeTag { edge: slave, tag: BoundaryTag::AntiperiodicSlave });
            pairs.push(PeriodicPair { master, slave, reversed: false });
        }
    };
    grid(&|i, j| rotor_ids[i][j], 3, 4, true);
    grid(&|i, j| stator_ids[i][j], 7, 3, false);

    Ok(MultiPatchModel {
        patches,
        interfaces,
        boundary_tags: tags,
        antiperiodic_pairs: pairs,
        pole_pairs: cfg.pole_pairs,
        sector_angle: 2.0 * h,
        airgap: Some(AirGap {
            r_rotor: cfg.r_rotor,
            r_interface: cfg.r_interface(),
            r_stator: cfg.r_bore(),
            rotor_angle: alpha,
            sector_start: right + frame,
        }),
    })
}

/// Quarter annulus `r_in <= |x| <= r_out`, first quadrant, as one NURBS
/// patch: `u` runs along the arcs, `v` radially.
pub fn quarter_annulus(r_in: f64, r_out: f64, degree: usize, elements: (usize, usize)) -> Patch {
    coons_patch(
        QuadraticCurve::arc(r_in, 0.0, PI / 2.0),
        QuadraticCurve::arc(r_out, 0.0, PI / 2.0),
        QuadraticCurve::line([r_in, 0.0], [r_out, 0.0]),
        QuadraticCurve::line([0.0, r_in], [0.0, r_out]),
        MaterialTag::Air,
        Subdomain::Rotor,
    )
    .elevated(degree.max(2), degree.max(2))
    .refined_uniform(elements.0, elements.1)
}

/// Single-patch model on the axis-aligned rectangle `[x0,x1] x [y0,y1]`
/// with homogeneous Dirichlet conditions on all edges.
pub fn rectangle_model(x: (f64, f64), y: (f64, f64), degree: usize, elements: usize) -> MultiPatchModel {
    let patch = Patch::bilinear(
        [[x.0, y.0], [x.1, y.0], [x.0, y.1], [x.1, y.1]],
        degree,
        (elements, elements),
        MaterialTag::Air,
        Subdomain::Rotor,
    );
    MultiPatchModel {
        patches: vec![patch],
        interfaces: vec![],
        boundary_tags: Edge::ALL
            .iter()
            .map(|&e| EdgeTag { edge: EdgeRef::new(0, e), tag: BoundaryTag::Dirichlet })
            .collect(),
        antiperiodic_pairs: vec![],
        pole_pairs: 1,
        sector_angle: 2.0 * PI,
        airgap: None,
    }
}

/// Two stacked squares `[0,1] x [0,1]` and `[0,1] x [1,2]`, Dirichlet on
/// the outer boundary. With `mortar` the lower square is the rotor and the
/// upper the stator, coupled weakly across the flat edge `y = 1`; otherwise
/// both belong to the rotor and share the edge conformingly.
pub fn stacked_squares(degree: usize, elements: usize, mortar: bool) -> MultiPatchModel {
    let lower = Patch::bilinear(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        degree,
        (elements, elements),
        MaterialTag::Air,
        Subdomain::Rotor,
    );
    let mut upper = Patch::bilinear(
        [[0.0, 1.0], [1.0, 1.0], [0.0, 2.0], [1.0, 2.0]],
        degree,
        (elements, elements),
        MaterialTag::Air,
        Subdomain::Rotor,
    );
    let d = |p, e| EdgeTag { edge: EdgeRef::new(p, e), tag: BoundaryTag::Dirichlet };
    let mut tags = vec![d(0, Edge::South), d(0, Edge::East), d(0, Edge::West)];
    tags.extend([d(1, Edge::North), d(1, Edge::East), d(1, Edge::West)]);
    let mut interfaces = vec![];
    if mortar {
        upper.subdomain = Subdomain::Stator;
        tags.push(EdgeTag { edge: EdgeRef::new(0, Edge::North), tag: BoundaryTag::Airgap });
        tags.push(EdgeTag { edge: EdgeRef::new(1, Edge::South), tag: BoundaryTag::Airgap });
    } else {
        interfaces.push(Interface {
            a: EdgeRef::new(0, Edge::North),
            b: EdgeRef::new(1, Edge::South),
            reversed: false,
        });
    }
    MultiPatchModel {
        patches: vec![lower, upper],
        interfaces,
        boundary_tags: tags,
        antiperiodic_pairs: vec![],
        pole_pairs: 1,
        sector_angle: 2.0 * PI,
        airgap: None,
    }
}

/// Two concentric annular sectors over `[theta0, theta0 + pi/p]`: rotor
/// `[r_in, r_mid]`, stator `[r_mid, r_out]`, each a single patch row with
/// `n_u` angular elements and anti-periodic radial cuts.
pub fn concentric_sectors(
    pole_pairs: usize,
    radii: (f64, f64, f64),
    n_u: usize,
    n_v: usize,
    alpha: f64,
) -> MultiPatchModel {
    let h = PI / (2 * pole_pairs) as f64;
    let (left, right) = (PI / 2.0 + h, PI / 2.0 - h);
    let frame = PI / pole_pairs as f64 - PI / 2.0;
    let ring = |r0: f64, r1: f64, sub: Subdomain, rot: f64| {
        coons_patch(
            QuadraticCurve::arc(r0, left, right),
            QuadraticCurve::arc(r1, left, right),
            QuadraticCurve::line(polar(r0, left), polar(r1, left)),
            QuadraticCurve::line(polar(r0, right), polar(r1, right)),
            MaterialTag::Air,
            sub,
        )
        .refined_uniform(n_u, n_v)
        .transformed(|q| [rot.cos() * q[0] - rot.sin() * q[1], rot.sin() * q[0] + rot.cos() * q[1]])
    };
    let rotor = ring(radii.0, radii.1, Subdomain::Rotor, frame + alpha);
    let stator = ring(radii.1, radii.2, Subdomain::Stator, frame);
    let t = |p, e, tag| EdgeTag { edge: EdgeRef::new(p, e), tag };
    let tags = vec![
        t(0, Edge::South, BoundaryTag::Dirichlet),
        t(0, Edge::North, BoundaryTag::Airgap),
        t(1, Edge::South, BoundaryTag::Airgap),
        t(1, Edge::North, BoundaryTag::Dirichlet),
        t(0, Edge::East, BoundaryTag::AntiperiodicMaster),
        t(0, Edge::West, BoundaryTag::AntiperiodicSlave),
        t(1, Edge::East, BoundaryTag::AntiperiodicMaster),
        t(1, Edge::West, BoundaryTag::AntiperiodicSlave),
    ];
    let pair = |p| PeriodicPair {
        master: EdgeRef::new(p, Edge::East),
        slave: EdgeRef::new(p, Edge::West),
        reversed: false,
    };
    MultiPatchModel {
        patches: vec![rotor, stator],
        interfaces: vec![],
        boundary_tags: tags,
        antiperiodic_pairs: vec![pair(0), pair(1)],
        pole_pairs,
        sector_angle: 2.0 * h,
        airgap: Some(AirGap {
            r_rotor: radii.1,
            r_interface: radii.1,
            r_stator: radii.1,
            rotor_angle: alpha,
            sector_start: right + frame,
        }),
    }
}
