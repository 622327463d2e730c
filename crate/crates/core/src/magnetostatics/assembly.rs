use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{MultiPatchModel, Patch};
use crate::sparse::CsrMatrix;
use crate::spline::gauss_rule;

use super::dofmap::DofMap;
use super::material::Material;

/// Quadrature data of one patch: points, weights including the Jacobian
/// determinant, and the nonzero basis functions with physical gradients.
#[derive(Debug, Clone)]
pub struct PatchQuadrature {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Nonzero functions per point.
    pub n_loc: usize,
    /// Patch-local indices, `n_loc` per point.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl PatchQuadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn range(&self, q: usize) -> std::ops::Range<usize> {
        q * self.n_loc..(q + 1) * self.n_loc
    }

    /// Physical gradient of the field with patch coefficients `c` at point `q`.
    pub fn gradient(&self, q: usize, c: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in self.range(q) {
            let v = c[self.indices[k]];
            g[0] += v * self.grads[k][0];
            g[1] += v * self.grads[k][1];
        }
        g
    }
}

/// Inverse-transposed Jacobian applied to reference derivatives.
pub(crate) fn physical_gradient(j: &[[f64; 2]; 2], det: f64, du: f64, dv: f64) -> [f64; 2] {
    [
        (j[1][1] * du - j[1][0] * dv) / det,
        (-j[0][1] * du + j[0][0] * dv) / det,
    ]
}

fn patch_quadrature(k: usize, patch: &Patch, n_gauss: Option<usize>) -> Result<PatchQuadrature> {
    let gu = gauss_rule(n_gauss.unwrap_or(patch.kv_u.degree() + 1))?;
    let gv = gauss_rule(n_gauss.unwrap_or(patch.kv_v.degree() + 1))?;
    let n_loc = (patch.kv_u.degree() + 1) * (patch.kv_v.degree() + 1);
    let elements = patch.elements();
    let cap = elements.len() * gu.points.len() * gv.points.len();
    let mut out = PatchQuadrature {
        points: Vec::with_capacity(cap),
        weights: Vec::with_capacity(cap),
        n_loc,
        indices: Vec::with_capacity(cap * n_loc),
        values: Vec::with_capacity(cap * n_loc),
        grads: Vec::with_capacity(cap * n_loc),
    };
    for el in elements {
        for (v, wv) in gv.mapped(el.v.0, el.v.1) {
            for (u, wu) in gu.mapped(el.u.0, el.u.1) {
                let b = patch.basis((u, v))?;
                let j = patch.jacobian_with(&b);
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if !(det > 0.0) {
                    return Err(Error::Assembly(format!(
                        "non-positive Jacobian {det:e} in patch {k} ({}) at xi = ({u:.6}, {v:.6})",
                        patch.name
                    )));
                }
                out.points.push(patch.map_with(&b));
                out.weights.push(wu * wv * det);
                for a in 0..n_loc {
                    out.indices.push(b.indices[a]);
                    out.values.push(b.values[a]);
                    out.grads.push(physical_gradient(&j, det, b.d_u[a], b.d_v[a]));
                }
            }
        }
    }
    Ok(out)
}

/// Geometry, numbering and quadrature cache of one model.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub model: MultiPatchModel,
    pub dofs: DofMap,
    pub quadrature: Vec<PatchQuadrature>,
}

impl Discretization {
    /// `n_gauss = None` uses `p + 1` points per direction.
    pub fn new(model: MultiPatchModel, n_gauss: Option<usize>) -> Result<Self> {
        let dofs = DofMap::new(&model)?;
        let quadrature = model
            .patches
            .par_iter()
            .enumerate()
            .map(|(k, p)| patch_quadrature(k, p, n_gauss))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, dofs, quadrature })
    }

    pub fn n_free(&self) -> usize {
        self.dofs.n_free()
    }

    /// Total number of quadrature points over all patches.
    pub fn n_points(&self) -> usize {
        self.quadrature.iter().map(PatchQuadrature::len).sum()
    }

    /// Field gradient `grad A` at every quadrature point, patch by patch.
    pub fn gradients(&self, u: &[f64]) -> Vec<Vec<[f64; 2]>> {
        self.quadrature
            .par_iter()
            .enumerate()
            .map(|(k, q)| {
                let c = self.dofs.patch_coefficients(k, u);
                (0..q.len()).map(|i| q.gradient(i, &c)).collect()
            })
            .collect()
    }

    /// Squared flux density `|B|^2 = |grad A|^2` at every quadrature point,
    /// patch by patch.
    pub fn b_squared(&self, u: &[f64]) -> Vec<Vec<f64>> {
        self.gradients(u)
            .into_iter()
            .map(|g| g.into_iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect())
            .collect()
    }

    /// Reluctivity and its derivative `d nu / d(B^2)` at every quadrature
    /// point for the field gradients `grads`.
    pub fn reluctivity_and_derivative(
        &self,
        materials: &[Material],
        grads: &[Vec<[f64; 2]>],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        grads
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let m = &materials[k].reluctivity;
                g.iter().map(|g| g[0] * g[0] + g[1] * g[1]).map(|b2| (m.nu(b2), m.dnu(b2))).unzip()
            })
            .unzip()
    }

    /// Magnetic energy `sum_k int W_k(|B|^2)` of the field `u`.
    pub fn energy(&self, materials: &[Material], u: &[f64]) -> f64 {
        self.b_squared(u)
            .iter()
            .zip(&self.quadrature)
            .enumerate()
            .map(|(k, (b2, q))| {
                let m = &materials[k].reluctivity;
                b2.iter().zip(&q.weights).map(|(&b, w)| w * m.energy_density(b)).sum::<f64>()
            })
            .sum()
    }

    /// Reluctivity per quadrature point from the current field
    /// (`None` evaluates every model at `B = 0`).
    pub fn reluctivity(&self, materials: &[Material], u: Option<&[f64]>) -> Vec<Vec<f64>> {
        let b2 = u.map(|u| self.b_squared(u));
        self.quadrature
            .iter()
            .enumerate()
            .map(|(k, q)| {
                let m = &materials[k].reluctivity;
                (0..q.len())
                    .map(|i| m.nu(b2.as_ref().map_or(0.0, |b| b[k][i])))
                    .collect()
            })
            .collect()
    }

    fn scatter<F>(&self, nu: &[Vec<f64>], local: F) -> Vec<(usize, usize, f64)>
    where
        F: Fn(usize, &PatchQuadrature, usize, usize, usize) -> f64 + Sync,
    {
        let parts: Vec<Vec<(usize, usize, f64)>> = self
            .quadrature
            .par_iter()
            .enumerate()
            .map(|(k, q)| {
                let mut t = Vec::with_capacity(q.len() * q.n_loc * q.n_loc);
                let global: Vec<_> = (0..q.indices.len())
                    .map(|s| self.dofs.global(k, q.indices[s]))
                    .collect();
                for i in 0..q.len() {
                    let w = q.weights[i] * nu[k][i];
                    for a in q.range(i) {
                        let Some(ga) = global[a] else { continue };
                        for b in q.range(i) {
                            let Some(gb) = global[b] else { continue };
                            let v = local(k, q, i, a, b);
                            t.push((ga.index, gb.index, ga.sign * gb.sign * w * v));
                        }
                    }
                }
                t
            })
            .collect();
        parts.concat()
    }

    /// Stiffness `K_ij = int nu grad B_i . grad B_j` on the free space for a
    /// given reluctivity per quadrature point; returns `(K_rt, K_st)`.
    pub fn stiffness_with(&self, nu: &[Vec<f64>]) -> (CsrMatrix, CsrMatrix) {
        let t = self.scatter(nu, |_, q, _, a, b| {
            q.grads[a][0] * q.grads[b][0] + q.grads[a][1] * q.grads[b][1]
        });
        self.split(&t)
    }

    /// Tangent stiffness of the nonlinear problem at the field with
    /// gradients `grads`: `int nu grad B_i . grad B_j + 2 nu' (g . grad B_i)(g . grad B_j)`
    /// with `nu` and `dnu = d nu / d(B^2)` given per quadrature point.
    pub fn tangent_with(&self, nu: &[Vec<f64>], dnu: &[Vec<f64>], grads: &[Vec<[f64; 2]>]) -> (CsrMatrix, CsrMatrix) {
        let t = self.scatter(nu, |k, q, i, a, b| {
            let (ga, gb, g) = (q.grads[a], q.grads[b], grads[k][i]);
            let iso = ga[0] * gb[0] + ga[1] * gb[1];
            let ratio = dnu[k][i] / nu[k][i];
            if ratio == 0.0 {
                iso
            } else {
                iso + 2.0 * ratio * (g[0] * ga[0] + g[1] * ga[1]) * (g[0] * gb[0] + g[1] * gb[1])
            }
        });
        self.split(&t)
    }

    /// Mass matrix `int B_i B_j` on the free space (single block).
    pub fn mass(&self) -> CsrMatrix {
        let ones: Vec<Vec<f64>> = self.quadrature.iter().map(|q| vec![1.0; q.len()]).collect();
        let t = self.scatter(&ones, |_, q, _, a, b| q.values[a] * q.values[b]);
        let n = self.n_free();
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn split(&self, t: &[(usize, usize, f64)]) -> (CsrMatrix, CsrMatrix) {
        let nr = self.dofs.n_rotor();
        let ns = self.dofs.n_stator();
        let (mut rt, mut st) = (Vec::new(), Vec::new());
        for &(i, j, v) in t {
            match (i < nr, j < nr) {
                (true, true) => rt.push((i, j, v)),
                (false, false) => st.push((i - nr, j - nr, v)),
                _ => unreachable!("rotor and stator blocks are decoupled"),
            }
        }
        (CsrMatrix::from_triplets(nr, nr, &rt), CsrMatrix::from_triplets(ns, ns, &st))
    }

    /// Load vector of a volume source `int f v` over the free space.
    pub fn load(&self, f: impl Fn(usize, [f64; 2]) -> f64 + Sync) -> Vec<f64> {
        self.load_general(|k, q, i, a| f(k, q.points[i]) * q.values[a])
    }

    fn load_general<F>(&self, integrand: F) -> Vec<f64>
    where
        F: Fn(usize, &PatchQuadrature, usize, usize) -> f64 + Sync,
    {
        let parts: Vec<Vec<(usize, f64)>> = self
            .quadrature
            .par_iter()
            .enumerate()
            .map(|(k, q)| {
                let mut out = Vec::new();
                for i in 0..q.len() {
                    for a in q.range(i) {
                        if let Some(g) = self.dofs.global(k, q.indices[a]) {
                            let v = integrand(k, q, i, a);
                            if v != 0.0 {
                                out.push((g.index, g.sign * q.weights[i] * v));
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let mut b = vec![0.0; self.n_free()];
        for (i, v) in parts.into_iter().flatten() {
            b[i] += v;
        }
        b
    }

    /// L2 error `||A_h - exact||` of a free coefficient vector.
    pub fn l2_error(&self, u: &[f64], exact: impl Fn([f64; 2]) -> f64 + Sync) -> f64 {
        self.quadrature
            .par_iter()
            .enumerate()
            .map(|(k, q)| {
                let c = self.dofs.patch_coefficients(k, u);
                (0..q.len())
                    .map(|i| {
                        let a: f64 = q.range(i).map(|s| c[q.indices[s]] * q.values[s]).sum();
                        let e = a - exact(q.points[i]);
                        q.weights[i] * e * e
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Energy-type error `int nu |grad(A_h - exact)|^2` with unit `nu`.
    pub fn h1_seminorm_error(&self, u: &[f64], grad_exact: impl Fn([f64; 2]) -> [f64; 2] + Sync) -> f64 {
        self.quadrature
            .par_iter()
            .enumerate()
            .map(|(k, q)| {
                let c = self.dofs.patch_coefficients(k, u);
                (0..q.len())
                    .map(|i| {
                        let g = q.gradient(i, &c);
                        let e = grad_exact(q.points[i]);
                        q.weights[i] * ((g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2))
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Stiffness blocks `(K_rt, K_st)` linearized at `field` (free coefficient
/// vector); without a field every reluctivity is taken at `B = 0`.
pub fn assemble_stiffness(
    disc: &Discretization,
    materials: &[Material],
    field: Option<&[f64]>,
) -> (CsrMatrix, CsrMatrix) {
    disc.stiffness_with(&disc.reluctivity(materials, field))
}

/// Load blocks `(b_rt, b_st)`: uniform coil currents `int J v` and the
/// magnet term `int nu B_rem . (dv/dy, -dv/dx)`.
pub fn assemble_rhs(disc: &Discretization, materials: &[Material]) -> (Vec<f64>, Vec<f64>) {
    let b = disc.load_general(|k, q, _, a| {
        let m = &materials[k];
        let mut v = m.j_src * q.values[a];
        if m.b_rem != 0.0 {
            let br = m.b_rem_vector();
            let nu = m.reluctivity.nu(0.0);
            let g = q.grads[a];
            v += nu * (br[0] * g[1] - br[1] * g[0]);
        }
        v
    });
    let nr = disc.dofs.n_rotor();
    (b[..nr].to_vec(), b[nr..].to_vec())
}

/// Unit-reluctivity stiffness over the combined rotor and stator space.
pub fn assemble_k0(disc: &Discretization) -> CsrMatrix {
    let ones: Vec<Vec<f64>> = disc.quadrature.iter().map(|q| vec![1.0; q.len()]).collect();
    let (a, b) = disc.stiffness_with(&ones);
    CsrMatrix::block_diag(&a, &b)
}
