use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MultiPatchModel;
use crate::sparse::{norm, CsrMatrix, EnvelopeCholesky};

use super::assembly::{assemble_rhs, Discretization};
use super::material::Material;
use super::mortar::{assemble_mortar, assemble_trace_mortar, Mortar};

/// `[[K_rt, 0, C_rt], [0, K_st, -C_st], [C_rt^T, -C_st^T, 0]]` with
/// `C_rt = G_rt R_alpha^T` and `C_st = G_st`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub k_rt: CsrMatrix,
    pub k_st: CsrMatrix,
    pub g_rt: DMatrix<f64>,
    pub g_st: DMatrix<f64>,
    pub r_alpha: DMatrix<f64>,
    pub b_rt: Vec<f64>,
    pub b_st: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub u_rt: Vec<f64>,
    pub u_st: Vec<f64>,
    pub lambda: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Relative coefficient update of each fixed-point iteration.
    pub update_history: Vec<f64>,
}

impl SaddleSolution {
    /// Stacked `(u_rt, u_st)`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut u = self.u_rt.clone();
        u.extend_from_slice(&self.u_st);
        u
    }
}

impl SaddleSystem {
    pub fn n_multipliers(&self) -> usize {
        self.g_st.ncols()
    }

    pub fn coupling_rt(&self) -> DMatrix<f64> {
        &self.g_rt * self.r_alpha.transpose()
    }

    /// Residual blocks of `(u_rt, u_st, lambda)` against the load.
    fn residual(&self, c_rt: &DMatrix<f64>, u_r: &[f64], u_s: &[f64], lam: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let l = DVector::from_column_slice(lam);
        let cr_l = c_rt * &l;
        let cs_l = &self.g_st * &l;
        let kr = self.k_rt.mul_vec(u_r);
        let ks = self.k_st.mul_vec(u_s);
        let r1: Vec<f64> = (0..u_r.len()).map(|i| self.b_rt[i] - kr[i] - cr_l[i]).collect();
        let r2: Vec<f64> = (0..u_s.len()).map(|i| self.b_st[i] - ks[i] + cs_l[i]).collect();
        let t = c_rt.tr_mul(&DVector::from_column_slice(u_r)) - self.g_st.tr_mul(&DVector::from_column_slice(u_s));
        let r3: Vec<f64> = t.iter().map(|v| -v).collect();
        (r1, r2, r3)
    }
}

fn factor(k: &CsrMatrix, what: &str) -> Result<Option<EnvelopeCholesky>> {
    if k.nrows() == 0 {
        return Ok(None);
    }
    EnvelopeCholesky::factor(k)
        .map(Some)
        .map_err(|e| Error::Solver(format!("{what} stiffness block: {e}")))
}

fn solve_opt(f: &Option<EnvelopeCholesky>, b: &[f64]) -> Vec<f64> {
    f.as_ref().map_or_else(Vec::new, |f| f.solve(b))
}

fn solve_columns(f: &Option<EnvelopeCholesky>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(c.nrows(), c.ncols());
    if let Some(f) = f {
        for j in 0..c.ncols() {
            let col = f.solve(c.column(j).as_slice());
            x.column_mut(j).copy_from_slice(&col);
        }
    }
    x
}

/// Schur-complement solve with iterative refinement to a relative residual
/// of at most `1e-10`.
pub fn solve_linear(sys: &SaddleSystem) -> Result<SaddleSolution> {
    let (nr, ns, m) = (sys.k_rt.nrows(), sys.k_st.nrows(), sys.n_multipliers());
    let fr = factor(&sys.k_rt, "rotor")?;
    let fs = factor(&sys.k_st, "stator")?;
    let c_rt = sys.coupling_rt();

    let schur = if m > 0 {
        let xr = solve_columns(&fr, &c_rt);
        let xs = solve_columns(&fs, &sys.g_st);
        let mut s = c_rt.tr_mul(&xr) + sys.g_st.tr_mul(&xs);
        s = 0.5 * (&s + s.transpose());
        let eig = SymmetricEigen::new(s.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 1e-12 * max) {
            return Err(Error::Solver(format!(
                "mortar coupling is rank deficient (Schur eigenvalue ratio {:e}); reduce the number of harmonics",
                min / max
            )));
        }
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Solver("Schur complement is not positive definite".into()))?;
        Some((xr, xs, chol))
    } else {
        None
    };

    let apply = |b1: &[f64], b2: &[f64], b3: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let yr = solve_opt(&fr, b1);
        let ys = solve_opt(&fs, b2);
        match &schur {
            None => (yr, ys, Vec::new()),
            Some((xr, xs, chol)) => {
                let g = c_rt.tr_mul(&DVector::from_column_slice(&yr))
                    - sys.g_st.tr_mul(&DVector::from_column_slice(&ys))
                    - DVector::from_column_slice(b3);
                let lam = chol.solve(&g);
                let ur = DVector::from_column_slice(&yr) - xr * &lam;
                let us = DVector::from_column_slice(&ys) + xs * &lam;
                (ur.as_slice().to_vec(), us.as_slice().to_vec(), lam.as_slice().to_vec())
            }
        }
    };

    let rhs_norm = (norm(&sys.b_rt).powi(2) + norm(&sys.b_st).powi(2)).sqrt();
    let (mut ur, mut us, mut lam) = apply(&sys.b_rt, &sys.b_st, &vec![0.0; m]);
    let mut rel = f64::INFINITY;
    for _ in 0..6 {
        let (r1, r2, r3) = sys.residual(&c_rt, &ur, &us, &lam);
        let rn = (norm(&r1).powi(2) + norm(&r2).powi(2) + norm(&r3).powi(2)).sqrt();
        rel = if rhs_norm > 0.0 { rn / rhs_norm } else { rn };
        if rel <= 1e-13 || rhs_norm == 0.0 {
            break;
        }
        let (dr, ds, dl) = apply(&r1, &r2, &r3);
        ur.iter_mut().zip(&dr).for_each(|(a, b)| *a += b);
        us.iter_mut().zip(&ds).for_each(|(a, b)| *a += b);
        lam.iter_mut().zip(&dl).for_each(|(a, b)| *a += b);
    }
    if rel > 1e-10 {
        return Err(Error::Solver(format!("relative residual {rel:e} above 1e-10")));
    }
    debug_assert_eq!((ur.len(), us.len()), (nr, ns));
    Ok(SaddleSolution {
        u_rt: ur,
        u_st: us,
        lambda: lam,
        residual_norm: rel,
        iterations: 1,
        update_history: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Harmonic orders of the air-gap multiplier.
    pub harmonics: usize,
    /// Gauss points per element and direction (`None`: degree + 1).
    pub n_gauss: Option<usize>,
    /// Gauss points per interface element for the coupling integrals.
    pub mortar_points: usize,
    pub tol_fp: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    /// Newton steps taken from the last Picard iterate when Picard has not
    /// converged after `max_iter` solves; 0 disables the fallback.
    pub newton_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            harmonics: 8,
            n_gauss: None,
            mortar_points: 10,
            tol_fp: 1e-6,
            max_iter: 50,
            relaxation: 0.7,
            newton_iter: 30,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.harmonics < 1 || self.max_iter < 1 || !(self.tol_fp > 0.0) {
            return Err(Error::Config(format!("invalid solver settings {self:?}")));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::Config("relaxation must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Discretized model with materials and interface coupling.
#[derive(Debug, Clone)]
pub struct Problem {
    pub disc: Discretization,
    pub materials: Vec<Material>,
    pub mortar: Option<Mortar>,
    pub alpha: f64,
}

impl Problem {
    /// Picks the harmonic mortar on circular air gaps, the trace mortar on
    /// flat interfaces tagged `Airgap`, and no coupling otherwise.
    pub fn new(model: MultiPatchModel, materials: Vec<Material>, cfg: &SolverConfig) -> Result<Self> {
        if materials.len() != model.patches.len() {
            return Err(Error::Input(format!(
                "{} materials for {} patches",
                materials.len(),
                model.patches.len()
            )));
        }
        let disc = Discretization::new(model, cfg.n_gauss)?;
        let has_gap = !disc.model.edges_tagged(crate::geometry::BoundaryTag::Airgap).is_empty();
        let (mortar, alpha) = match disc.model.airgap {
            Some(g) => (Some(assemble_mortar(&disc, cfg.harmonics, cfg.mortar_points)?), g.rotor_angle),
            None if has_gap => (Some(assemble_trace_mortar(&disc, cfg.mortar_points)?), 0.0),
            None => (None, 0.0),
        };
        Ok(Self { disc, materials, mortar, alpha })
    }

    pub fn is_linear(&self) -> bool {
        self.materials.iter().all(|m| m.reluctivity.is_linear())
    }

    pub fn system(&self, nu: &[Vec<f64>]) -> SaddleSystem {
        let (k_rt, k_st) = self.disc.stiffness_with(nu);
        let (b_rt, b_st) = assemble_rhs(&self.disc, &self.materials);
        self.coupled(k_rt, k_st, b_rt, b_st)
    }

    fn coupled(&self, k_rt: CsrMatrix, k_st: CsrMatrix, b_rt: Vec<f64>, b_st: Vec<f64>) -> SaddleSystem {
        let (g_rt, g_st, r_alpha) = match &self.mortar {
            Some(m) => (m.g_rt.clone(), m.g_st.clone(), m.rotation(self.alpha)),
            None => (
                DMatrix::zeros(k_rt.nrows(), 0),
                DMatrix::zeros(k_st.nrows(), 0),
                DMatrix::zeros(0, 0),
            ),
        };
        SaddleSystem { k_rt, k_st, g_rt, g_st, r_alpha, b_rt, b_st }
    }

    /// Picard iterations, continued by Newton steps when Picard has not
    /// converged after `max_iter` solves and `newton_iter > 0`.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<SaddleSolution> {
        match picard(self, cfg.tol_fp, cfg.max_iter, cfg.relaxation)? {
            Picard::Converged(sol) => Ok(sol),
            Picard::Stalled { u, history } if cfg.newton_iter > 0 => {
                newton(self, u, history, cfg.tol_fp, cfg.newton_iter)
            }
            Picard::Stalled { history, .. } => Err(Error::NonConvergence { history }),
        }
    }
}

/// Picard iteration on the reluctivity with under-relaxation. Converges
/// after one solve when every material is linear. The factor starts at
/// `relaxation`, is halved whenever the coefficient update grows and
/// recovers while it shrinks.
pub fn solve_nonlinear(problem: &Problem, tol_fp: f64, max_iter: usize, relaxation: f64) -> Result<SaddleSolution> {
    match picard(problem, tol_fp, max_iter, relaxation)? {
        Picard::Converged(sol) => Ok(sol),
        Picard::Stalled { history, .. } => Err(Error::NonConvergence { history }),
    }
}

enum Picard {
    Converged(SaddleSolution),
    /// Last iterate and update history after `max_iter` solves.
    Stalled { u: Vec<f64>, history: Vec<f64> },
}

fn picard(problem: &Problem, tol_fp: f64, max_iter: usize, relaxation: f64) -> Result<Picard> {
    let mut nu = problem.disc.reluctivity(&problem.materials, None);
    let mut omega = relaxation;
    let mut history = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    for it in 1..=max_iter {
        let mut sol = solve_linear(&problem.system(&nu))?;
        let u = sol.coefficients();
        if let Some(p) = &prev {
            let du: Vec<f64> = u.iter().zip(p).map(|(a, b)| a - b).collect();
            let un = norm(&u);
            history.push(if un > 0.0 { norm(&du) / un } else { norm(&du) });
        }
        if let [.., a, b] = history[..] {
            omega = if b > a { (0.5 * omega).max(relaxation / 64.0) } else { (1.5 * omega).min(relaxation) };
        }
        let target = problem.disc.reluctivity(&problem.materials, Some(&u));
        let mut change = 0.0f64;
        for (row, trow) in nu.iter_mut().zip(&target) {
            for (n, t) in row.iter_mut().zip(trow) {
                change = change.max((t - *n).abs() / n.abs());
                *n += omega * (t - *n);
            }
        }
        let converged = change <= 1e-14 || history.last().is_some_and(|&d| d < tol_fp);
        if converged {
            sol.iterations = it;
            sol.update_history = history;
            return Ok(Picard::Converged(sol));
        }
        if history.last().is_some_and(|d| !d.is_finite()) {
            return Err(Error::NonConvergence { history });
        }
        prev = Some(u);
    }
    match prev {
        Some(u) => Ok(Picard::Stalled { u, history }),
        None => Err(Error::NonConvergence { history }),
    }
}

/// Damped Newton iteration from `u`. The step is the solution of the
/// saddle system with the tangent stiffness, shortened by backtracking
/// until the energy `W(u) - b.u` decreases sufficiently. The energy is
/// convex for nondecreasing reluctivities, so the iteration converges from
/// any start.
fn newton(problem: &Problem, mut u: Vec<f64>, mut history: Vec<f64>, tol: f64, max_iter: usize) -> Result<SaddleSolution> {
    let disc = &problem.disc;
    let mats = &problem.materials;
    let nr = disc.dofs.n_rotor();
    let (b_rt, b_st) = assemble_rhs(disc, mats);
    let b: Vec<f64> = b_rt.iter().chain(&b_st).copied().collect();
    let energy = |u: &[f64]| disc.energy(mats, u) - dot(&b, u);
    let picard_iterations = history.len() + 1;
    for it in 1..=max_iter {
        let grads = disc.gradients(&u);
        let (nu, dnu) = disc.reluctivity_and_derivative(mats, &grads);
        let (k_rt, k_st) = disc.stiffness_with(&nu);
        let (t_rt, t_st) = disc.tangent_with(&nu, &dnu, &grads);
        let (u_rt, u_st) = u.split_at(nr);
        let ku: Vec<f64> = k_rt.mul_vec(u_rt).into_iter().chain(k_st.mul_vec(u_st)).collect();
        let tu: Vec<f64> = t_rt.mul_vec(u_rt).into_iter().chain(t_st.mul_vec(u_st)).collect();
        let rhs: Vec<f64> = (0..u.len()).map(|i| b[i] + tu[i] - ku[i]).collect();
        let (r_rt, r_st) = rhs.split_at(nr);
        let mut sol = solve_linear(&problem.coupled(t_rt, t_st, r_rt.to_vec(), r_st.to_vec()))?;
        let d: Vec<f64> = sol.coefficients().iter().zip(&u).map(|(a, b)| a - b).collect();

        let gradient: Vec<f64> = ku.iter().zip(&b).map(|(k, b)| k - b).collect();
        let slope = dot(&gradient, &d);
        let e0 = energy(&u);
        let mut step = 1.0;
        // below this the energy difference is lost in rounding and the full step is taken
        if slope < -1e-13 * e0.abs().max(f64::MIN_POSITIVE) {
            while step > 1e-6 {
                let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                if energy(&trial) <= e0 + 1e-4 * step * slope {
                    break;
                }
                step *= 0.5;
            }
        }
        for (a, b) in u.iter_mut().zip(&d) {
            *a += step * b;
        }
        let un = norm(&u);
        let update = step * norm(&d) / if un > 0.0 { un } else { 1.0 };
        history.push(update);
        if !update.is_finite() {
            break;
        }
        if update < tol {
            sol.u_rt = u[..nr].to_vec();
            sol.u_st = u[nr..].to_vec();
            sol.iterations = picard_iterations + it;
            sol.update_history = history;
            return Ok(sol);
        }
    }
    Err(Error::NonConvergence { history })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
