use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polar, MultiPatchModel, Subdomain};

use super::assembly::physical_gradient;
use super::dofmap::DofMap;

/// Potential and flux density at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    /// `A_z` in Wb/m.
    pub a_z: f64,
    /// `B = (dA/dy, -dA/dx)` in T.
    pub b: [f64; 2],
}

/// Read-only view of a solved field: model, numbering and free coefficients.
#[derive(Debug, Clone, Copy)]
pub struct FieldView<'a> {
    pub model: &'a MultiPatchModel,
    pub dofs: &'a DofMap,
    pub u: &'a [f64],
}

impl<'a> FieldView<'a> {
    pub fn new(model: &'a MultiPatchModel, dofs: &'a DofMap, u: &'a [f64]) -> Result<Self> {
        if u.len() != dofs.n_free() {
            return Err(Error::Input(format!(
                "coefficient vector has length {}, model has {} free coefficients",
                u.len(),
                dofs.n_free()
            )));
        }
        Ok(Self { model, dofs, u })
    }

    pub fn evaluate(&self, patch: usize, xi: (f64, f64)) -> Result<FieldSample> {
        evaluate_field(self.model, self.dofs, self.u, patch, xi)
    }

    /// Field at a physical point, searching the given subdomain.
    pub fn evaluate_at(&self, x: [f64; 2], subdomain: Option<Subdomain>) -> Option<FieldSample> {
        let (k, xi) = self.model.locate(x, subdomain)?;
        self.evaluate(k, xi).ok()
    }

    /// Field at polar position `(r, theta)` in one subdomain, using the
    /// anti-periodic continuation when `theta` falls outside that
    /// subdomain's sector.
    pub fn evaluate_polar(&self, r: f64, theta: f64, side: Subdomain) -> Option<FieldSample> {
        let gap = self.model.airgap?;
        let pitch = PI / self.model.pole_pairs as f64;
        let start = match side {
            Subdomain::Rotor => gap.sector_start + gap.rotor_angle,
            Subdomain::Stator => gap.sector_start,
        };
        let shifts = ((theta - start) / pitch).floor();
        let t = theta - shifts * pitch;
        let sign = if (shifts as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let s = self.evaluate_at(polar(r, t), Some(side))?;
        // rotate B back by the same shift
        let (sn, cs) = (shifts * pitch).sin_cos();
        let b = [cs * s.b[0] - sn * s.b[1], sn * s.b[0] + cs * s.b[1]];
        Some(FieldSample { a_z: sign * s.a_z, b: [sign * b[0], sign * b[1]] })
    }
}

/// Pointwise `A_z` and `B` from the free coefficient vector.
pub fn evaluate_field(
    model: &MultiPatchModel,
    dofs: &DofMap,
    u: &[f64],
    patch: usize,
    xi: (f64, f64),
) -> Result<FieldSample> {
    let p = model
        .patches
        .get(patch)
        .ok_or_else(|| Error::Input(format!("no patch {patch}")))?;
    let basis = p.basis(xi)?;
    let j = p.jacobian_with(&basis);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let mut a = 0.0;
    let mut g = [0.0; 2];
    for (k, &loc) in basis.indices.iter().enumerate() {
        let Some(gd) = dofs.global(patch, loc) else { continue };
        let c = gd.sign * u[gd.index];
        a += c * basis.values[k];
        let d = physical_gradient(&j, det, basis.d_u[k], basis.d_v[k]);
        g[0] += c * d[0];
        g[1] += c * d[1];
    }
    Ok(FieldSample { a_z: a, b: [g[1], -g[0]] })
}

/// Root-mean-square jump of `A_z` across the coupling circle, sampled at
/// `n` angles over the stator sector.
pub fn airgap_jump(view: &FieldView<'_>, n: usize) -> Result<f64> {
    let gap = view
        .model
        .airgap
        .ok_or_else(|| Error::Input("model has no circular air gap".into()))?;
    let pitch = PI / view.model.pole_pairs as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let theta = gap.sector_start + (i as f64 + 0.5) / n as f64 * pitch;
        let r = gap.r_interface;
        let a = view
            .evaluate_polar(r, theta, Subdomain::Rotor)
            .ok_or_else(|| Error::Domain(format!("rotor side not found at theta = {theta}")))?;
        let b = view
            .evaluate_polar(r, theta, Subdomain::Stator)
            .ok_or_else(|| Error::Domain(format!("stator side not found at theta = {theta}")))?;
        sum += (a.a_z - b.a_z).powi(2);
    }
    Ok((sum / n as f64).sqrt())
}
