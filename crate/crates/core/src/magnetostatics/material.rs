use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MaterialTag, MultiPatchModel, ParamVector};

/// Vacuum permeability in H/m.
pub const MU0: f64 = 4.0e-7 * PI;
/// Vacuum reluctivity in m/H.
pub const NU0: f64 = 1.0 / MU0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Reluctivity {
    Constant { nu: f64 },
    /// `nu(B^2) = k1 * exp(k2 * B^2) + k3`, capped at the vacuum value.
    Analytic { k1: f64, k2: f64, k3: f64 },
}

impl Reluctivity {
    pub fn nu(&self, b2: f64) -> f64 {
        match *self {
            Reluctivity::Constant { nu } => nu,
            Reluctivity::Analytic { k1, k2, k3 } => (k1 * (k2 * b2).exp() + k3).min(NU0.max(k1 + k3)),
        }
    }

    /// Derivative `d nu / d(B^2)`; zero on the capped branch.
    pub fn dnu(&self, b2: f64) -> f64 {
        match *self {
            Reluctivity::Constant { .. } => 0.0,
            Reluctivity::Analytic { k1, k2, k3 } => {
                let e = k1 * (k2 * b2).exp();
                if e + k3 < NU0.max(k1 + k3) {
                    k1 * k2 * (k2 * b2).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Magnetic energy density `1/2 * int_0^{B^2} nu(t) dt`.
    pub fn energy_density(&self, b2: f64) -> f64 {
        let integral = match *self {
            Reluctivity::Constant { nu } => nu * b2,
            Reluctivity::Analytic { k1, k2, k3 } => {
                let cap = NU0.max(k1 + k3);
                let free = |s: f64| if k2 == 0.0 { (k1 + k3) * s } else { k1 / k2 * (k2 * s).exp_m1() + k3 * s };
                let knee = if k1 > 0.0 && k2 > 0.0 && cap > k1 + k3 {
                    ((cap - k3) / k1).ln() / k2
                } else {
                    f64::INFINITY
                };
                if b2 <= knee {
                    free(b2)
                } else {
                    free(knee) + cap * (b2 - knee)
                }
            }
        };
        0.5 * integral
    }

    pub fn is_linear(&self) -> bool {
        match *self {
            Reluctivity::Constant { .. } => true,
            Reluctivity::Analytic { k1, k2, .. } => k1 == 0.0 || k2 == 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Reluctivity::Constant { nu } => nu > 0.0 && nu.is_finite(),
            Reluctivity::Analytic { k1, k2, k3 } => {
                k1 >= 0.0 && k2 >= 0.0 && k3 >= 0.0 && k1 + k3 > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid reluctivity model {self:?}")))
        }
    }
}

/// Material state of one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub reluctivity: Reluctivity,
    /// Remanent flux density magnitude in T.
    pub b_rem: f64,
    /// Magnetization angle: `B_rem = b_rem * (-sin beta, cos beta)`.
    pub beta: f64,
    /// Source current density in A/m^2.
    pub j_src: f64,
}

impl Material {
    pub fn passive(reluctivity: Reluctivity) -> Self {
        Self { reluctivity, b_rem: 0.0, beta: 0.0, j_src: 0.0 }
    }

    pub fn air() -> Self {
        Self::passive(Reluctivity::Constant { nu: NU0 })
    }

    pub fn b_rem_vector(&self) -> [f64; 2] {
        [-self.b_rem * self.beta.sin(), self.b_rem * self.beta.cos()]
    }
}

/// Material settings of the machine model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialConfig {
    pub iron: Reluctivity,
    pub magnet_mu_r: f64,
    /// Remanence in T.
    pub b_rem: f64,
    /// Peak slot current density in A/m^2.
    pub j_peak: f64,
    /// Electrical offset added to `pole_pairs * alpha`, degrees.
    pub current_angle_deg: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            iron: Reluctivity::Analytic { k1: 49.4, k2: 1.46, k3: 520.6 },
            magnet_mu_r: 1.05,
            b_rem: 1.0,
            j_peak: 4.0e6,
            current_angle_deg: 0.0,
        }
    }
}

impl MaterialConfig {
    pub fn linear_iron(nu: f64) -> Self {
        Self { iron: Reluctivity::Constant { nu }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.iron.validate()?;
        if !(self.magnet_mu_r > 0.0) || !self.b_rem.is_finite() || !self.j_peak.is_finite() {
            return Err(Error::Config("invalid magnet or coil settings".into()));
        }
        Ok(())
    }

    /// Per-patch materials for the machine model at parameter `p`.
    pub fn assign(&self, model: &MultiPatchModel, p: &ParamVector) -> Vec<Material> {
        let pp = model.pole_pairs as f64;
        let alpha = p.alpha_rad();
        let phi_e = pp * alpha + self.current_angle_deg.to_radians();
        let pole_axis = model
            .airgap
            .map_or(PI / 2.0, |g| g.sector_start + 0.5 * model.sector_angle);
        model
            .patches
            .iter()
            .map(|patch| match patch.material {
                MaterialTag::Iron => Material::passive(self.iron),
                MaterialTag::Air => Material::air(),
                MaterialTag::Magnet => Material {
                    reluctivity: Reluctivity::Constant { nu: NU0 / self.magnet_mu_r },
                    b_rem: self.b_rem,
                    beta: pole_axis - PI / 2.0 + alpha,
                    j_src: 0.0,
                },
                MaterialTag::Coil => {
                    let m = patch.phase.unwrap_or(0) as f64;
                    Material {
                        j_src: self.j_peak * (phi_e - m * PI / 3.0).sin(),
                        ..Material::air()
                    }
                }
            })
            .collect()
    }
}

/// Every patch with the same constant reluctivity and no sources.
pub fn uniform_materials(model: &MultiPatchModel, nu: f64) -> Vec<Material> {
    vec![Material::passive(Reluctivity::Constant { nu }); model.patches.len()]
}
