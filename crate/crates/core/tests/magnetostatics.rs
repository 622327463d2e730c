use std::f64::consts::PI;

use approx::assert_relative_eq;
use igapod::geometry::{
    build_machine_geometry, concentric_sectors, rectangle_model, stacked_squares, BoundaryTag, Edge, MaterialTag,
    MultiPatchModel, ParamRanges, Patch, Subdomain,
};
use igapod::magnetostatics::*;
use igapod::sparse::{CsrMatrix, EnvelopeCholesky};
use igapod::Error;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unconstrained_square(degree: usize, elements: usize) -> MultiPatchModel {
    let mut m = rectangle_model((0.0, 1.0), (0.0, 1.0), degree, elements);
    m.boundary_tags.clear();
    m
}

fn free_sectors(radius_scale: f64) -> MultiPatchModel {
    let mut m = concentric_sectors(2, (radius_scale, 1.5 * radius_scale, 2.0 * radius_scale), 6, 2, 0.0);
    m.antiperiodic_pairs.clear();
    m.boundary_tags.retain(|t| {
        !matches!(t.tag, BoundaryTag::AntiperiodicMaster | BoundaryTag::AntiperiodicSlave)
    });
    m
}

fn linear_machine() -> (Problem, SaddleSolution) {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let materials = MaterialConfig::linear_iron(NU0 / 1000.0).assign(&model, &p);
    let cfg = SolverConfig::default();
    let prob = Problem::new(model, materials, &cfg).unwrap();
    let sol = prob.solve(&cfg).unwrap();
    (prob, sol)
}

#[test]
fn bilinear_element_matches_laplace_stencil() {
    let disc = Discretization::new(unconstrained_square(1, 1), None).unwrap();
    let (k, _) = assemble_stiffness(&disc, &uniform_materials(&disc.model, 1.0), None);
    // local order: (0,0), (1,0), (0,1), (1,1)
    let expected = [
        [4.0, -1.0, -1.0, -2.0],
        [-1.0, 4.0, -2.0, -1.0],
        [-1.0, -2.0, 4.0, -1.0],
        [-2.0, -1.0, -1.0, 4.0],
    ];
    for (i, row) in expected.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert_relative_eq!(k.get(i, j), v / 6.0, epsilon = 1e-14);
        }
    }
}

#[test]
fn stiffness_is_linear_in_nu_symmetric_and_annihilates_constants() {
    let disc = Discretization::new(unconstrained_square(2, 3), None).unwrap();
    let (k1, _) = assemble_stiffness(&disc, &uniform_materials(&disc.model, 1.0), None);
    let (k2, _) = assemble_stiffness(&disc, &uniform_materials(&disc.model, 2.0), None);
    assert!(k1.is_symmetric(1e-10));
    let d = (k2.to_dense() - k1.to_dense() * 2.0).abs().max();
    assert_eq!(d, 0.0);
    let ones = vec![1.0; k1.nrows()];
    let row_sums = k1.mul_vec(&ones);
    assert!(row_sums.iter().all(|s| s.abs() < 1e-12));
}

#[test]
fn machine_stiffness_blocks_are_symmetric() {
    let (prob, sol) = linear_machine();
    let (kr, ks) = assemble_stiffness(&prob.disc, &prob.materials, Some(&sol.coefficients()));
    assert!(kr.is_symmetric(1e-10));
    assert!(ks.is_symmetric(1e-10));
}

#[test]
fn rhs_vanishes_without_sources() {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let disc = Discretization::new(model, None).unwrap();
    let (br, bs) = assemble_rhs(&disc, &uniform_materials(&disc.model, NU0));
    assert!(br.iter().chain(&bs).all(|&v| v == 0.0));
}

#[test]
fn coil_load_sums_to_current_times_area() {
    let model = unconstrained_square(2, 4);
    let disc = Discretization::new(model, None).unwrap();
    let mut materials = uniform_materials(&disc.model, 1.0);
    materials[0].j_src = 3.5;
    let (b, _) = assemble_rhs(&disc, &materials);
    assert_relative_eq!(b.iter().sum::<f64>(), 3.5, epsilon = 1e-10);

    // a curved coil: the stator ring of concentric sectors, no constraints
    let mut model = free_sectors(1.0);
    model.boundary_tags.retain(|t| t.tag != BoundaryTag::Dirichlet);
    let disc = Discretization::new(model, Some(8)).unwrap();
    let mut materials = uniform_materials(&disc.model, 1.0);
    materials[1].j_src = 2.0;
    let (_, bs) = assemble_rhs(&disc, &materials);
    let area = 0.5 * (4.0 - 2.25) * PI / 2.0;
    assert_relative_eq!(bs.iter().sum::<f64>(), 2.0 * area, max_relative = 1e-10);
}

#[test]
fn flipping_magnetization_flips_the_magnet_load() {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let disc = Discretization::new(model, None).unwrap();
    let mut cfg = MaterialConfig::default();
    cfg.j_peak = 0.0;
    let materials = cfg.assign(&disc.model, &p);
    let flipped: Vec<Material> = materials
        .iter()
        .map(|m| Material { beta: m.beta + PI, ..*m })
        .collect();
    let (a, _) = assemble_rhs(&disc, &materials);
    let (b, _) = assemble_rhs(&disc, &flipped);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 0.0);
    for (x, y) in a.iter().zip(&b) {
        assert!((x + y).abs() <= 1e-12 * scale);
    }
}

#[test]
fn mortar_rejects_zero_harmonics() {
    let disc = Discretization::new(concentric_sectors(2, (1.0, 1.5, 2.0), 4, 1, 0.0), None).unwrap();
    assert!(matches!(assemble_mortar(&disc, 0, 6), Err(Error::Config(_))));
}

#[test]
fn constant_trace_is_orthogonal_to_sines() {
    let disc = Discretization::new(free_sectors(1.0), None).unwrap();
    let m = assemble_mortar(&disc, 5, 8).unwrap();
    let ones = DMatrix::from_element(1, m.g_rt.nrows(), 1.0);
    let row = ones * &m.g_rt;
    for l in 0..5 {
        assert!(row[2 * l + 1].abs() < 1e-12, "sin column {l}: {}", row[2 * l + 1]);
    }
}

#[test]
fn coupling_scales_with_radius() {
    let a = assemble_mortar(&Discretization::new(free_sectors(1.0), None).unwrap(), 4, 8).unwrap();
    let b = assemble_mortar(&Discretization::new(free_sectors(2.0), None).unwrap(), 4, 8).unwrap();
    assert!((&b.g_rt - &a.g_rt * 2.0).abs().max() < 1e-12);
    assert!((&b.g_st - &a.g_st * 2.0).abs().max() < 1e-12);
}

#[test]
fn matching_interfaces_give_equal_coupling_blocks() {
    let disc = Discretization::new(concentric_sectors(2, (1.0, 1.5, 2.0), 6, 2, 0.0), None).unwrap();
    let m = assemble_mortar(&disc, 6, 8).unwrap();
    let rows = |patch: usize, edge: Edge| -> Vec<(usize, f64)> {
        disc.model.patches[patch]
            .edge_dofs(edge)
            .into_iter()
            .filter_map(|l| disc.dofs.global(patch, l))
            .map(|g| (g.index, g.sign))
            .collect()
    };
    let r = rows(0, Edge::North);
    let s = rows(1, Edge::South);
    assert_eq!(r.len(), s.len());
    let nr = disc.dofs.n_rotor();
    let mut compared = 0;
    for ((ir, sr), (is, ss)) in r.iter().zip(&s) {
        if sr != ss {
            continue;
        }
        for c in 0..m.g_rt.ncols() {
            assert!((m.g_rt[(*ir, c)] - m.g_st[(is - nr, c)]).abs() < 1e-10);
        }
        compared += 1;
    }
    assert!(compared > 0);
}

#[test]
fn rotation_matrices_form_a_group() {
    let orders = harmonic_orders(3, 6);
    assert_eq!(orders, vec![3, 9, 15, 21, 27, 33]);
    let id = DMatrix::<f64>::identity(12, 12);
    assert_eq!(rotation_matrix(0.0, &orders), id);
    let (a, b) = (0.31, -1.17);
    let ra = rotation_matrix(a, &orders);
    let rb = rotation_matrix(b, &orders);
    assert!((&ra * &rb - rotation_matrix(a + b, &orders)).abs().max() < 1e-12);
    assert!((ra.transpose() - rotation_matrix(-a, &orders)).abs().max() < 1e-12);
    assert!((ra.transpose() * &ra - id).abs().max() < 1e-12);
}

#[test]
fn zero_load_gives_zero_solution() {
    let model = concentric_sectors(2, (1.0, 1.5, 2.0), 6, 2, 0.2);
    let cfg = SolverConfig { harmonics: 3, ..Default::default() };
    let prob = Problem::new(model.clone(), uniform_materials(&model, 1.0), &cfg).unwrap();
    let sol = solve_linear(&prob.system(&prob.disc.reluctivity(&prob.materials, None))).unwrap();
    assert!(sol.coefficients().iter().all(|&v| v == 0.0));
    assert!(sol.lambda.iter().all(|&v| v == 0.0));
}

#[test]
fn too_many_harmonics_is_a_solver_error() {
    let model = concentric_sectors(2, (1.0, 1.5, 2.0), 2, 1, 0.0);
    let mut mats = uniform_materials(&model, 1.0);
    mats[0].j_src = 1.0;
    let cfg = SolverConfig { harmonics: 20, ..Default::default() };
    let prob = Problem::new(model, mats, &cfg).unwrap();
    match prob.solve(&cfg) {
        Err(Error::Solver(msg)) => assert!(msg.contains("harmonics"), "{msg}"),
        other => panic!("expected a solver error, got {other:?}"),
    }
}

fn manufactured(degree: usize, elements: usize) -> (Discretization, Vec<f64>) {
    let disc = Discretization::new(rectangle_model((0.0, 1.0), (0.0, 1.0), degree, elements), Some(degree + 2)).unwrap();
    let (k, _) = assemble_stiffness(&disc, &uniform_materials(&disc.model, 1.0), None);
    let b = disc.load(|_, x| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin());
    let u = EnvelopeCholesky::factor(&k).unwrap().solve(&b);
    (disc, u)
}

fn exact(x: [f64; 2]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin()
}

fn exact_grad(x: [f64; 2]) -> [f64; 2] {
    [PI * (PI * x[0]).cos() * (PI * x[1]).sin(), PI * (PI * x[0]).sin() * (PI * x[1]).cos()]
}

#[test]
fn manufactured_solution_converges_at_order_p_plus_one() {
    for degree in [1, 2] {
        let errs: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| {
                let (disc, u) = manufactured(degree, n);
                disc.l2_error(&u, exact)
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((rate - (degree + 1) as f64).abs() < 0.2, "p = {degree}: rate {rate}, errors {errs:?}");
        }
    }
}

#[test]
fn galerkin_solution_beats_the_l2_projection_in_energy() {
    let (disc, u) = manufactured(2, 6);
    let m = disc.mass();
    let f = disc.load(|_, x| exact(x));
    let proj = EnvelopeCholesky::factor(&m).unwrap().solve(&f);
    let e_galerkin = disc.h1_seminorm_error(&u, exact_grad);
    let e_proj = disc.h1_seminorm_error(&proj, exact_grad);
    assert!(e_galerkin <= 1.01 * e_proj, "{e_galerkin} vs {e_proj}");
}

fn solve_stacked(mortar: bool) -> (MultiPatchModel, DofMap, Vec<f64>) {
    let model = stacked_squares(2, 3, mortar);
    let mut mats = uniform_materials(&model, 1.0);
    mats[0].j_src = 1.0;
    mats[1].j_src = -0.5;
    let cfg = SolverConfig::default();
    let prob = Problem::new(model, mats, &cfg).unwrap();
    let u = prob.solve(&cfg).unwrap().coefficients();
    (prob.disc.model, prob.disc.dofs, u)
}

#[test]
fn flat_mortar_reproduces_the_conforming_solve() {
    let (ma, da, ua) = solve_stacked(true);
    let (mb, db, ub) = solve_stacked(false);
    let va = FieldView::new(&ma, &da, &ua).unwrap();
    let vb = FieldView::new(&mb, &db, &ub).unwrap();
    let mut max_a = 0.0f64;
    for i in 0..=10 {
        for j in 0..=20 {
            let x = [i as f64 / 10.0, j as f64 / 10.0];
            let a = va.evaluate_at(x, None).unwrap().a_z;
            let b = vb.evaluate_at(x, None).unwrap().a_z;
            max_a = max_a.max(b.abs());
            assert!((a - b).abs() < 1e-8, "at {x:?}: {a} vs {b}");
        }
    }
    assert!(max_a > 1e-3);
}

#[test]
fn picard_stops_after_one_iteration_for_linear_materials() {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let cfg = SolverConfig::default();
    let mats = MaterialConfig::linear_iron(600.0).assign(&model, &p);
    let prob = Problem::new(model.clone(), mats, &cfg).unwrap();
    let sol = prob.solve(&cfg).unwrap();
    assert_eq!(sol.iterations, 1);
    let direct = solve_linear(&prob.system(&prob.disc.reluctivity(&prob.materials, None))).unwrap();
    assert_eq!(sol.coefficients(), direct.coefficients());

    let flat = MaterialConfig {
        iron: Reluctivity::Analytic { k1: 49.4, k2: 0.0, k3: 550.6 },
        ..MaterialConfig::default()
    };
    let prob2 = Problem::new(model, flat.assign(&prob.disc.model, &p), &cfg).unwrap();
    let sol2 = prob2.solve(&cfg).unwrap();
    assert_eq!(sol2.iterations, 1);
    for (a, b) in sol2.coefficients().iter().zip(sol.coefficients()) {
        assert_relative_eq!(*a, b, max_relative = 1e-9, epsilon = 1e-15);
    }
}

#[test]
fn mild_nonlinearity_gives_monotone_updates() {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let cfg = SolverConfig::default();
    let mats = MaterialConfig {
        iron: Reluctivity::Analytic { k1: 49.4, k2: 0.3, k3: 520.6 },
        ..MaterialConfig::default()
    }
    .assign(&model, &p);
    let sol = Problem::new(model, mats, &cfg).unwrap().solve(&cfg).unwrap();
    assert!(sol.iterations > 1);
    let h = &sol.update_history;
    assert!(h.windows(2).all(|w| w[1] < w[0]), "{h:?}");
    assert!(*h.last().unwrap() < cfg.tol_fp);
}

#[test]
fn nonconvergence_carries_the_history() {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let cfg = SolverConfig { max_iter: 3, newton_iter: 0, ..Default::default() };
    let mats = MaterialConfig::default().assign(&model, &p);
    match Problem::new(model, mats, &cfg).unwrap().solve(&cfg) {
        Err(Error::NonConvergence { history }) => assert_eq!(history.len(), 2),
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn reluctivity_derivative_and_energy_match_finite_differences() {
    let laws = [
        Reluctivity::Analytic { k1: 49.4, k2: 1.46, k3: 520.6 },
        Reluctivity::Analytic { k1: 0.0, k2: 1.0, k3: 300.0 },
        Reluctivity::Constant { nu: 700.0 },
    ];
    let h = 1e-6;
    for law in laws {
        for b2 in [0.0, 0.3, 1.7, 4.0, 9.0, 40.0] {
            let x = b2 + 2.0 * h;
            let fd = (law.nu(x + h) - law.nu(x - h)) / (2.0 * h);
            assert_relative_eq!(law.dnu(x), fd, max_relative = 1e-6, epsilon = 1e-6);
            let fd = (law.energy_density(x + h) - law.energy_density(x - h)) / (2.0 * h);
            assert_relative_eq!(0.5 * law.nu(x), fd, max_relative = 1e-7);
        }
        assert_eq!(law.energy_density(0.0), 0.0);
    }
    let capped = Reluctivity::Analytic { k1: 49.4, k2: 1.46, k3: 520.6 };
    assert_eq!(capped.nu(60.0), NU0);
    assert_eq!(capped.dnu(60.0), 0.0);
}

fn nonlinear_machine() -> (Problem, Vec<f64>) {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let cfg = SolverConfig { max_iter: 4, newton_iter: 0, ..Default::default() };
    let prob = Problem::new(model, MaterialConfig::default().assign(&build_machine_geometry(&p).unwrap(), &p), &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = prob.solve(&SolverConfig { tol_fp: 1e-3, ..cfg }).unwrap().coefficients();
    let u = u.iter().map(|v| v * (1.0 + 0.05 * rng.random_range(-1.0..1.0))).collect();
    (prob, u)
}

#[test]
fn energy_gradient_is_the_nonlinear_residual() {
    let (prob, u) = nonlinear_machine();
    let disc = &prob.disc;
    let nu = disc.reluctivity(&prob.materials, Some(&u));
    let k = { let (a, b) = disc.stiffness_with(&nu); CsrMatrix::block_diag(&a, &b) };
    let ku = k.mul_vec(&u);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let v: Vec<f64> = u.iter().map(|x| x * rng.random_range(-1.0..1.0)).collect();
    let h = 1e-4;
    let at = |s: f64| disc.energy(&prob.materials, &u.iter().zip(&v).map(|(a, b)| a + s * b).collect::<Vec<_>>());
    let fd = (at(h) - at(-h)) / (2.0 * h);
    let exact: f64 = ku.iter().zip(&v).map(|(a, b)| a * b).sum();
    assert_relative_eq!(fd, exact, max_relative = 1e-6);
}

#[test]
fn tangent_matches_finite_differences_of_the_residual() {
    let (prob, u) = nonlinear_machine();
    let disc = &prob.disc;
    let residual = |u: &[f64]| {
        let (a, b) = disc.stiffness_with(&disc.reluctivity(&prob.materials, Some(u)));
        CsrMatrix::block_diag(&a, &b).mul_vec(u)
    };
    let grads = disc.gradients(&u);
    let (nu, dnu) = disc.reluctivity_and_derivative(&prob.materials, &grads);
    let t = { let (a, b) = disc.tangent_with(&nu, &dnu, &grads); CsrMatrix::block_diag(&a, &b) };
    assert!(t.is_symmetric(1e-12));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let v: Vec<f64> = u.iter().map(|x| x * rng.random_range(-1.0..1.0)).collect();
    let h = 1e-5;
    let shifted = |s: f64| residual(&u.iter().zip(&v).map(|(a, b)| a + s * b).collect::<Vec<_>>());
    let (up, down) = (shifted(h), shifted(-h));
    let fd: Vec<f64> = up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let tv = t.mul_vec(&v);
    let err: f64 = fd.iter().zip(&tv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = tv.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(err < 1e-5 * scale, "tangent mismatch {err} vs {scale}");
}

#[test]
fn newton_fallback_reaches_the_picard_fixed_point() {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let mats = MaterialConfig::default().assign(&model, &p);
    let short = SolverConfig { max_iter: 3, ..Default::default() };
    let prob = Problem::new(model, mats, &short).unwrap();
    let fast = prob.solve(&short).unwrap();
    assert!(fast.iterations > 3 && fast.iterations < 3 + short.newton_iter);
    assert!(*fast.update_history.last().unwrap() < short.tol_fp);
    let tight = SolverConfig { tol_fp: 1e-10, max_iter: 400, newton_iter: 0, ..Default::default() };
    let reference = prob.solve(&tight).unwrap().coefficients();
    let u = fast.coefficients();
    let err: f64 = u.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let n: f64 = reference.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(err < 1e-7 * n, "relative difference {}", err / n);
}

#[test]
fn field_of_constant_coefficients_is_constant() {
    let model = unconstrained_square(2, 3);
    let dofs = DofMap::new(&model).unwrap();
    let u = vec![0.37; dofs.n_free()];
    for xi in [(0.0, 0.0), (0.3, 0.8), (1.0, 0.5)] {
        let s = evaluate_field(&model, &dofs, &u, 0, xi).unwrap();
        assert_relative_eq!(s.a_z, 0.37, epsilon = 1e-14);
        assert!(s.b[0].abs() < 1e-12 && s.b[1].abs() < 1e-12);
    }
}

#[test]
fn interpolant_of_y_has_unit_horizontal_flux() {
    let model = unconstrained_square(2, 3);
    let dofs = DofMap::new(&model).unwrap();
    let patch: &Patch = &model.patches[0];
    let mut u = vec![0.0; dofs.n_free()];
    for (loc, cp) in patch.control_points.iter().enumerate() {
        let g = dofs.global(0, loc).unwrap();
        u[g.index] = g.sign * cp[1];
    }
    for xi in [(0.1, 0.2), (0.5, 0.5), (0.9, 0.7)] {
        let s = evaluate_field(&model, &dofs, &u, 0, xi).unwrap();
        assert_relative_eq!(s.b[0], 1.0, epsilon = 1e-12);
        assert!(s.b[1].abs() < 1e-12);
    }
}

#[test]
fn flux_density_matches_finite_differences() {
    let (prob, sol) = linear_machine();
    let u = sol.coefficients();
    let view = FieldView::new(&prob.disc.model, &prob.disc.dofs, &u).unwrap();
    let h = 1e-7;
    for (k, patch) in prob.disc.model.patches.iter().enumerate().step_by(5) {
        let x = patch.map_point((0.37, 0.61)).unwrap();
        let sub = Some(patch.subdomain);
        let b = view.evaluate(k, (0.37, 0.61)).unwrap().b;
        let a = |dx: f64, dy: f64| view.evaluate_at([x[0] + dx, x[1] + dy], sub).unwrap().a_z;
        let day = (a(0.0, h) - a(0.0, -h)) / (2.0 * h);
        let dax = (a(h, 0.0) - a(-h, 0.0)) / (2.0 * h);
        let scale = b[0].hypot(b[1]).max(1e-3);
        assert!((b[0] - day).abs() < 1e-5 * scale.max(1.0), "patch {k}: {} vs {day}", b[0]);
        assert!((b[1] + dax).abs() < 1e-5 * scale.max(1.0), "patch {k}: {} vs {}", b[1], -dax);
    }
}

#[test]
fn k0_matches_unit_stiffness_and_is_positive_definite() {
    let model = concentric_sectors(2, (1.0, 1.5, 2.0), 4, 2, 0.1);
    let disc = Discretization::new(model, None).unwrap();
    let k0 = assemble_k0(&disc);
    let (a, b) = assemble_stiffness(&disc, &uniform_materials(&disc.model, 1.0), None);
    let reference = CsrMatrix::block_diag(&a, &b);
    assert!((k0.to_dense() - reference.to_dense()).abs().max() <= 1e-14);
    assert!(k0.is_symmetric(1e-12));
    let eig = SymmetricEigen::new(k0.to_dense()).eigenvalues;
    assert!(eig.min() > 0.0, "smallest eigenvalue {}", eig.min());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let x: Vec<f64> = (0..k0.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(k0.quad_form(&x) >= 0.0);
    }
}

#[test]
fn solved_fields_are_antiperiodic() {
    let (prob, sol) = linear_machine();
    let u = sol.coefficients();
    let model = &prob.disc.model;
    let view = FieldView::new(model, &prob.disc.dofs, &u).unwrap();
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for pair in &model.antiperiodic_pairs {
        for i in 0..=8 {
            let t = i as f64 / 8.0;
            let ts = if pair.reversed { 1.0 - t } else { t };
            let a = view.evaluate(pair.master.patch, Patch::edge_point(pair.master.edge, t)).unwrap().a_z;
            let b = view.evaluate(pair.slave.patch, Patch::edge_point(pair.slave.edge, ts)).unwrap().a_z;
            assert!((a + b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn airgap_jump_shrinks_with_more_harmonics() {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let mats = MaterialConfig::linear_iron(NU0 / 1000.0).assign(&model, &p);
    let jumps: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&h| {
            let cfg = SolverConfig { harmonics: h, ..Default::default() };
            let prob = Problem::new(model.clone(), mats.clone(), &cfg).unwrap();
            let u = prob.solve(&cfg).unwrap().coefficients();
            let view = FieldView::new(&prob.disc.model, &prob.disc.dofs, &u).unwrap();
            airgap_jump(&view, 50).unwrap()
        })
        .collect();
    assert!(jumps.windows(2).all(|w| w[1] < w[0]), "{jumps:?}");
}

#[test]
fn energy_balance_holds_for_the_linear_machine() {
    let (prob, sol) = linear_machine();
    let sys = prob.system(&prob.disc.reluctivity(&prob.materials, None));
    let uk = sys.k_rt.quad_form(&sol.u_rt) + sys.k_st.quad_form(&sol.u_st);
    let ub: f64 = sol.u_rt.iter().zip(&sys.b_rt).chain(sol.u_st.iter().zip(&sys.b_st)).map(|(a, b)| a * b).sum();
    assert_relative_eq!(uk, ub, max_relative = 1e-8);
    assert!(sol.residual_norm <= 1e-10);
}

#[test]
fn machine_materials_follow_patch_tags() {
    let p = ParamRanges::default().midpoint();
    let model = build_machine_geometry(&p).unwrap();
    let mats = MaterialConfig::default().assign(&model, &p);
    for (patch, m) in model.patches.iter().zip(&mats) {
        match patch.material {
            MaterialTag::Magnet => {
                assert_eq!(m.b_rem, 1.0);
                assert_eq!(patch.subdomain, Subdomain::Rotor);
            }
            MaterialTag::Coil => assert!(m.b_rem == 0.0 && patch.subdomain == Subdomain::Stator),
            _ => assert!(m.j_src == 0.0 && m.b_rem == 0.0),
        }
        assert!(m.reluctivity.nu(4.0) > 0.0);
    }
}
