//! Galerkin discretization of the 2D magnetostatic problem on multi-patch
//! geometries: numbering with Dirichlet and anti-periodic constraints,
//! stiffness and load assembly, harmonic mortar coupling of rotor and
//! stator, linear and Picard solvers, and field evaluation.

mod assembly;
mod dofmap;
mod field;
mod material;
mod mortar;
mod solver;

pub use assembly::{assemble_k0, assemble_rhs, assemble_stiffness, Discretization, PatchQuadrature};
pub use dofmap::{DofMap, GlobalDof};
pub use field::{airgap_jump, evaluate_field, FieldSample, FieldView};
pub use material::{uniform_materials, Material, MaterialConfig, Reluctivity, MU0, NU0};
pub use mortar::{
    assemble_mortar, assemble_trace_mortar, harmonic_orders, rotation_matrix, Mortar, MultiplierSpace,
};
pub use solver::{solve_linear, solve_nonlinear, Problem, SaddleSolution, SaddleSystem, SolverConfig};
