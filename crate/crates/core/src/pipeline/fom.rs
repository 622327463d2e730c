//! Full-order model of one parameter realization.

use crate::error::{Error, Result};
use crate::geometry::{build_machine_geometry_with, BoundaryTag, MultiPatchModel, ParamVector};
use crate::magnetostatics::{assemble_k0, DofMap, FieldView, Problem, SaddleSolution};
use crate::postprocess::torque;
use crate::sparse::CsrMatrix;

use super::config::{EvalWeighting, FieldRegion, PipelineConfig};

/// Geometry, materials and coupling of the machine at one parameter point.
#[derive(Debug, Clone)]
pub struct FullOrder {
    pub params: ParamVector,
    pub problem: Problem,
}

impl FullOrder {
    pub fn build(cfg: &PipelineConfig, p: &ParamVector) -> Result<Self> {
        let model = build_machine_geometry_with(&cfg.machine, p)?;
        let materials = cfg.materials.assign(&model, p);
        let problem = Problem::new(model, materials, &cfg.solver)?;
        Ok(Self { params: *p, problem })
    }

    pub fn solve(&self, cfg: &PipelineConfig) -> Result<SaddleSolution> {
        self.problem.solve(&cfg.solver)
    }

    pub fn model(&self) -> &MultiPatchModel {
        &self.problem.disc.model
    }

    pub fn dofs(&self) -> &DofMap {
        &self.problem.disc.dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs().n_free()
    }

    /// Evaluation weighting on this realization's own geometry.
    pub fn weighting(&self, kind: EvalWeighting, u: &[f64]) -> CsrMatrix {
        match kind {
            EvalWeighting::SampleMaterial => {
                let nu = self.problem.disc.reluctivity(&self.problem.materials, Some(u));
                let (a, b) = self.problem.disc.stiffness_with(&nu);
                CsrMatrix::block_diag(&a, &b)
            }
            _ => assemble_k0(&self.problem.disc),
        }
    }

    /// Torque of the full machine for the free coefficients `u`.
    pub fn torque(&self, cfg: &PipelineConfig, u: &[f64]) -> Result<f64> {
        machine_torque(cfg, self.model(), self.dofs(), u)
    }
}

/// Default integration radius: middle of the rotor-side air-gap ring.
pub fn torque_radius(cfg: &PipelineConfig) -> f64 {
    cfg.evaluation
        .torque
        .radius
        .unwrap_or(cfg.machine.r_rotor + 0.25 * cfg.machine.airgap)
}

pub fn machine_torque(cfg: &PipelineConfig, model: &MultiPatchModel, dofs: &DofMap, u: &[f64]) -> Result<f64> {
    let t = &cfg.evaluation.torque;
    let view = FieldView::new(model, dofs, u)?;
    Ok(torque(&view, torque_radius(cfg), t.length, t.n_quadrature)?.torque)
}

/// Selection of free coefficients used by POD and training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub n_full: usize,
    /// Sorted indices of the kept coefficients; `None` keeps all.
    pub indices: Option<Vec<usize>>,
}

impl Extraction {
    /// For the air-gap region: every coefficient whose basis function is
    /// supported on a patch with an air-gap edge.
    pub fn new(region: FieldRegion, model: &MultiPatchModel, dofs: &DofMap) -> Self {
        let indices = match region {
            FieldRegion::Full => None,
            FieldRegion::Airgap => {
                let mut patches: Vec<usize> = model.edges_tagged(BoundaryTag::Airgap).iter().map(|e| e.patch).collect();
                patches.sort_unstable();
                patches.dedup();
                Some(dofs.free_dofs_of(&patches))
            }
        };
        Self { n_full: dofs.n_free(), indices }
    }

    pub fn len(&self) -> usize {
        self.indices.as_ref().map_or(self.n_full, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn restrict(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n_full {
            return Err(Error::Input(format!("expected {} coefficients, got {}", self.n_full, u.len())));
        }
        Ok(match &self.indices {
            None => u.to_vec(),
            Some(idx) => idx.iter().map(|&i| u[i]).collect(),
        })
    }

    /// Full-length vector with zeros outside the selection.
    pub fn expand(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.len() {
            return Err(Error::Input(format!("expected {} coefficients, got {}", self.len(), r.len())));
        }
        Ok(match &self.indices {
            None => r.to_vec(),
            Some(idx) => {
                let mut u = vec![0.0; self.n_full];
                for (&i, &v) in idx.iter().zip(r) {
                    u[i] = v;
                }
                u
            }
        })
    }

    pub fn restrict_matrix(&self, k: &CsrMatrix) -> CsrMatrix {
        match &self.indices {
            None => k.clone(),
            Some(idx) => k.principal_submatrix(idx),
        }
    }
}

/// Reference weighting: unit-reluctivity stiffness at the centre of the
/// parameter ranges, restricted to the configured region.
pub fn reference_weighting(cfg: &PipelineConfig) -> Result<(CsrMatrix, Extraction)> {
    let fom = FullOrder::build(cfg, &cfg.ranges.midpoint())?;
    let ext = Extraction::new(cfg.region, fom.model(), fom.dofs());
    let w = ext.restrict_matrix(&assemble_k0(&fom.problem.disc));
    Ok((w, ext))
}
