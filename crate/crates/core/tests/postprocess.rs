use std::f64::consts::PI;
use std::sync::OnceLock;

use approx::assert_relative_eq;
use igapod::geometry::{build_machine_geometry, ParamRanges};
use igapod::magnetostatics::*;
use igapod::postprocess::*;
use igapod::sparse::CsrMatrix;
use igapod::Error;
use proptest::prelude::*;

struct Solved {
    problem: Problem,
    u: Vec<f64>,
}

fn machine() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut p = ParamRanges::default().midpoint();
        p.alpha_deg = 7.0;
        let model = build_machine_geometry(&p).unwrap();
        let cfg = SolverConfig::default();
        let problem = Problem::new(model.clone(), MaterialConfig::default().assign(&model, &p), &cfg).unwrap();
        let u = problem.solve(&cfg).unwrap().coefficients();
        Solved { problem, u }
    })
}

fn view(s: &Solved) -> FieldView<'_> {
    FieldView::new(&s.problem.disc.model, &s.problem.disc.dofs, &s.u).unwrap()
}

fn from_polar(theta: f64, br: f64, bphi: f64) -> [f64; 2] {
    let (sn, cs) = theta.sin_cos();
    [br * cs - bphi * sn, br * sn + bphi * cs]
}

#[test]
fn radial_field_produces_no_torque() {
    let (t, n) = maxwell_torque(|th| Ok(from_polar(th, 0.8, 0.0)), 0.05, 0.1, (0.0, 2.0 * PI), &[], 64).unwrap();
    assert!(t.abs() < 1e-10);
    assert_eq!(n, 64);
}

#[test]
fn constant_polar_field_matches_closed_form() {
    let (t, _) = maxwell_torque(|th| Ok(from_polar(th, 1.0, 1.0)), 1.0, 1.0, (0.0, 2.0 * PI), &[], 40).unwrap();
    assert_relative_eq!(t, 2.0 * PI / MU0, max_relative = 1e-10);
    let (t, _) = maxwell_torque(|th| Ok(from_polar(th, 0.5, -0.3)), 0.04, 0.2, (0.0, 2.0 * PI), &[1.0, 2.5], 40)
        .unwrap();
    assert_relative_eq!(t, 2.0 * PI * 0.04 * 0.04 * 0.2 * 0.5 * -0.3 / MU0, max_relative = 1e-10);
}

#[test]
fn torque_rejects_radii_outside_the_gap() {
    let s = machine();
    let gap = s.problem.disc.model.airgap.unwrap();
    for r in [gap.r_rotor, gap.r_stator, 0.5 * gap.r_rotor, 1.1 * gap.r_stator] {
        assert!(matches!(torque(&view(s), r, 0.1, 200), Err(Error::Domain(_))));
    }
}

#[test]
fn torque_quadrature_is_converged() {
    let s = machine();
    let r = s.problem.disc.model.airgap.unwrap().r_interface + 0.2e-3;
    let a = torque(&view(s), r, 0.1, 360).unwrap();
    let b = torque(&view(s), r, 0.1, 720).unwrap();
    assert!(a.torque.abs() > 1e-3);
    assert!(((a.torque - b.torque) / b.torque).abs() < 1e-3, "{} vs {}", a.torque, b.torque);
    assert!(b.n_quadrature >= 720);
    assert_eq!(b.radius, r);
}

#[test]
fn torque_agrees_on_both_sides_of_the_coupling_circle() {
    let s = machine();
    let ri = s.problem.disc.model.airgap.unwrap().r_interface;
    let lo = torque(&view(s), ri - 0.25e-3, 0.1, 720).unwrap().torque;
    let hi = torque(&view(s), ri + 0.25e-3, 0.1, 720).unwrap().torque;
    assert!(((lo - hi) / hi).abs() <= 0.02, "{lo} vs {hi}");
}

fn spd() -> CsrMatrix {
    CsrMatrix::from_triplets(
        3,
        3,
        &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)],
    )
}

#[test]
fn seminorm_error_examples() {
    let k = spd();
    let u = [0.3, -1.2, 0.7];
    assert_eq!(seminorm_error(&u, &u, &k).unwrap(), 0.0);
    assert_relative_eq!(seminorm_error(&u, &[0.0; 3], &k).unwrap(), 1.0, epsilon = 1e-15);
    let v: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
    assert_relative_eq!(seminorm_error(&u, &v, &k).unwrap(), 1.0, epsilon = 1e-15);
    assert!(matches!(seminorm_error(&[0.0; 3], &u, &k), Err(Error::UndefinedReference(_))));
    assert!(matches!(seminorm_error(&u[..2], &u[..2], &k), Err(Error::Input(_))));
}

proptest! {
    #[test]
    fn seminorm_error_is_symmetric_about_the_reference(
        u in prop::array::uniform3(-5.0f64..5.0),
        v in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let k = spd();
        prop_assume!(k.quad_form(&u) > 1e-6);
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - b).collect();
        let e1 = seminorm_error(&u, &v, &k).unwrap();
        let e2 = seminorm_error(&u, &w, &k).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-12 * e1.max(1.0));
        prop_assert!(e1 >= 0.0);
    }

    #[test]
    fn polar_decomposition_preserves_magnitude(
        theta in -10.0f64..10.0,
        bx in -3.0f64..3.0,
        by in -3.0f64..3.0,
    ) {
        let (sn, cs) = theta.sin_cos();
        let br = bx * cs + by * sn;
        let bphi = -bx * sn + by * cs;
        prop_assert!((br * br + bphi * bphi - bx * bx - by * by).abs() <= 1e-12);
    }
}

#[test]
fn csv_export_counts_and_round_trips() {
    let s = machine();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.csv");
    let n = export_field(&view(s), (2, 2), ExportFormat::Csv, &path).unwrap();
    assert_eq!(n, 4 * s.problem.disc.model.patches.len());
    let rows = read_field_csv(&path).unwrap();
    let expected = sample_field(&view(s), (2, 2)).unwrap();
    assert_eq!(rows.len(), n);
    for (a, b) in rows.iter().zip(&expected) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!((a[5] - a[3].hypot(a[4])).abs() <= 1e-12);
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
}

#[test]
fn vtk_export_writes_structured_points() {
    let s = machine();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.vtk");
    let n = export_field(&view(s), (20, 15), ExportFormat::Vtk, &path).unwrap();
    assert_eq!(n, 300);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("DIMENSIONS 20 15 1"));
    assert!(text.contains("VECTORS B double"));
    assert!(matches!(
        export_field(&view(s), (1, 1), ExportFormat::Vtk, &path),
        Err(Error::Input(_))
    ));
}

#[test]
fn export_reports_the_failing_path() {
    let s = machine();
    let path = std::path::Path::new("/nonexistent-dir/field.csv");
    match export_field(&view(s), (2, 2), ExportFormat::Csv, path) {
        Err(e @ Error::Io { .. }) => assert!(e.to_string().contains("nonexistent-dir")),
        other => panic!("expected an I/O error, got {other:?}"),
    }
}
