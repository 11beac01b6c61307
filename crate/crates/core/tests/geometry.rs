use std::f64::consts::PI;
use std::sync::Arc;

use iiblab_core::chern::{ChernPackage, METRIC_VALENCE};
use iiblab_core::deriv::{DerivativeScheme, Differentiator, Direction};
use iiblab_core::endo::relative_endomorphism;
use iiblab_core::error::LabError;
use iiblab_core::grid::{ScalarField, TorusGrid, C64};
use iiblab_core::metric::{self, form_to_metric, metric_to_form, volume_norm, FourierSeries, RandomMetricSpec, VolumeForm};
use proptest::prelude::*;

fn setup(res: usize) -> (Arc<TorusGrid>, Differentiator) {
    let grid = Arc::new(TorusGrid::planar(3, res).unwrap());
    let d = Differentiator::new(grid.clone(), DerivativeScheme::Spectral);
    (grid, d)
}

fn kahler(grid: &Arc<TorusGrid>) -> metric::HermitianMetricField {
    let a: Vec<f64> = (0..grid.node_count())
        .map(|i| 1.0 + 0.3 * (2.0 * PI * grid.coordinates(i)[0]).sin())
        .collect();
    metric::kahler_diagonal(grid.clone(), &a).unwrap()
}

#[test]
fn flat_metric_has_trivial_geometry() {
    let (grid, d) = setup(8);
    let pkg = ChernPackage::new(&metric::flat(grid), &d).unwrap();
    for t in [&pkg.gamma, &pkg.torsion, &pkg.tau, &pkg.curvature, &pkg.ricci_tilde] {
        assert_eq!(t.max_abs(), 0.0);
    }
    assert_eq!(pkg.scalar.max_abs(), 0.0);
}

#[test]
fn kahler_diagonal_closed_forms() {
    let (grid, d) = setup(32);
    let g = kahler(&grid);
    let pkg = ChernPackage::new(&g, &d).unwrap();
    let n = 3;
    for i in 0..grid.node_count() {
        let x = grid.coordinates(i)[0];
        let (s, c) = (2.0 * PI * x).sin_cos();
        let a = 1.0 + 0.3 * s;
        // u = d_1 a / a with d_1 = (d_x - i d_y)/2
        let u = 0.3 * PI * c / a;
        let du_dx = (-0.6 * PI * PI * s * a - 0.3 * PI * c * 0.6 * PI * c) / (a * a);
        for p in 0..n {
            for j in 0..n {
                for q in 0..n {
                    let expected = if (p, j, q) == (0, 0, 0) { u } else { 0.0 };
                    assert!((pkg.gamma.get(&[p, j, q], i) - expected).norm() < 1e-10);
                    // Kähler: the connection is symmetric and torsion free
                    assert!((pkg.gamma.get(&[p, j, q], i) - pkg.gamma.get(&[p, q, j], i)).norm() < 1e-10);
                    assert!(pkg.torsion.get(&[p, j, q], i).norm() < 1e-9);
                    for k in 0..n {
                        let expected = if (k, j, p, q) == (0, 0, 0, 0) { -0.5 * du_dx } else { 0.0 };
                        assert!((pkg.curvature.get(&[k, j, p, q], i) - expected).norm() < 1e-9);
                    }
                }
            }
        }
    }
}

#[test]
fn balanced_family_torsion_closed_form() {
    let (grid, d) = setup(32);
    let amp = 0.3;
    let f = FourierSeries::sin_x_cos_y(amp).evaluate(&grid).unwrap();
    let g = metric::balanced(grid.clone(), 1.7, &f).unwrap();
    let pkg = ChernPackage::new(&g, &d).unwrap();
    let norm = volume_norm(&g, &VolumeForm::unit()).unwrap();
    for i in 0..grid.node_count() {
        let xy = grid.coordinates(i);
        let (x, y) = (2.0 * PI * xy[0], 2.0 * PI * xy[1]);
        let df = C64::new(amp * PI * x.cos() * y.cos(), amp * PI * x.sin() * y.sin());
        assert!((pkg.torsion.get(&[1, 0, 1], i) - df).norm() < 1e-9);
        assert!((pkg.torsion.get(&[2, 0, 2], i) - df).norm() < 1e-9);
        assert!((pkg.tau.get(&[0], i) + 2.0 * df).norm() < 1e-9);
        assert!(pkg.tau.get(&[1], i).norm() < 1e-12);
        assert!(pkg.tau.get(&[2], i).norm() < 1e-12);
        let expected = (-2.0 * f[i]).exp() / 1.7;
        assert!((norm.values()[i].re - expected).abs() < 1e-13);
    }
}

#[test]
fn flat_laplacian_of_a_sine() {
    let (grid, d) = setup(16);
    let pkg = ChernPackage::new(&metric::flat(grid.clone()), &d).unwrap();
    let f = ScalarField::from_fn(grid.clone(), |x| C64::new((2.0 * PI * x[0]).sin(), 0.0));
    let lap = pkg.scalar_laplacian(f.values());
    for (l, v) in lap.iter().zip(f.values()) {
        assert!((l + PI * PI * v).norm() < 1e-11);
    }
}

#[test]
fn volume_norm_homogeneity() {
    let (grid, _) = setup(8);
    let g = metric::random(grid, &RandomMetricSpec::new(5)).unwrap();
    let vol = VolumeForm::unit();
    let a = volume_norm(&g, &vol).unwrap();
    let b = volume_norm(&g.scale(4.0), &vol).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((y.re - x.re / 8.0).abs() < 1e-15);
    }
}

#[test]
fn non_positive_form_reports_worst_node() {
    let (grid, _) = setup(8);
    let mut m = nalgebra::DMatrix::<C64>::identity(3, 3);
    m[(2, 2)] = C64::new(-0.5, 0.0);
    let bad = metric::HermitianMetricField::constant(grid, &m);
    assert!(matches!(form_to_metric(&metric_to_form(&bad), 0.0), Err(LabError::Positivity { .. })));
}

#[test]
fn constant_multiple_of_reference() {
    let (grid, d) = setup(16);
    let ghat = metric::random(grid, &RandomMetricSpec::new(9)).unwrap();
    let e = relative_endomorphism(&ghat, &ghat, &d).unwrap();
    assert!(e.trace.iter().all(|t| (t - 3.0).abs() < 1e-13));
    assert!(e.s.iter().all(|s| s.abs() < 1e-24));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn form_round_trip(seed in 0u64..10_000) {
        let (grid, _) = setup(8);
        let g = metric::random(grid, &RandomMetricSpec::new(seed)).unwrap();
        let back = form_to_metric(&metric_to_form(&g), 0.0).unwrap();
        prop_assert!(back.tensor().sub(g.tensor()).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn random_metric_invariants(seed in 0u64..10_000) {
        let (grid, d) = setup(32);
        let g = metric::random(grid.clone(), &RandomMetricSpec::new(seed)).unwrap();
        let pkg = ChernPackage::new(&g, &d).unwrap();
        prop_assert!(pkg.ricci_tilde.skew_max() < 1e-10);
        let n = 3;
        for m in 0..n {
            for j in 0..n {
                for p in 0..n {
                    let a = pkg.torsion.at(&[m, j, p]);
                    let b = pkg.torsion.at(&[m, p, j]);
                    prop_assert!(a.iter().zip(b).all(|(x, y)| (x + y).norm() == 0.0));
                }
            }
        }
        for dir in [Direction::Holo, Direction::Anti] {
            let ng = pkg.covariant_derivative(g.tensor(), &METRIC_VALENCE, dir).unwrap();
            prop_assert!(ng.max_abs() < 1e-8, "{:e}", ng.max_abs());
        }
        let ghat = metric::random(grid, &RandomMetricSpec::new(seed + 1)).unwrap();
        let e = relative_endomorphism(&g, &ghat, &d).unwrap();
        prop_assert!(e.s.iter().all(|&s| s >= 0.0));
        prop_assert!(e.trace.iter().all(|&t| t > 0.0));
        for ev in g.relative_eigenvalues(&ghat).unwrap() {
            prop_assert!(ev.iter().all(|&v| v > 0.0));
        }
    }
}
