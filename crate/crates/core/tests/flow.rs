use std::sync::Arc;

use iiblab_core::deriv::{DerivativeScheme, Differentiator};
use iiblab_core::error::LabError;
use iiblab_core::flow::*;
use iiblab_core::forms::{pointwise_wedge_matrix, sigma};
use iiblab_core::grid::{TorusGrid, C64};
use iiblab_core::linalg::inverse_with_condition;
use iiblab_core::metric::{self, FourierSeries, HermitianMetricField, RandomMetricSpec, VolumeForm};
use nalgebra::DMatrix;

fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn setup(res: usize) -> (Arc<TorusGrid>, Differentiator) {
    let grid = Arc::new(TorusGrid::planar(3, res).unwrap());
    let d = Differentiator::new(grid.clone(), DerivativeScheme::Spectral);
    (grid, d)
}

fn balanced(grid: &Arc<TorusGrid>, amp: f64) -> HermitianMetricField {
    let f = FourierSeries::sin_x_cos_y(amp).evaluate(grid).unwrap();
    metric::balanced(grid.clone(), 1.0, &f).unwrap()
}

fn random_hermitian_pd(seed: u64, n: usize) -> DMatrix<C64> {
    let grid = Arc::new(TorusGrid::planar(n, 4).unwrap());
    metric::random(grid, &RandomMetricSpec { seed, amplitude: 0.5, bandwidth: 1 }).unwrap().matrix(3)
}

fn max_diff(a: &iiblab_core::tensor::TensorField, b: &iiblab_core::tensor::TensorField) -> f64 {
    a.sub(b).unwrap().max_abs()
}

#[test]
fn forward_map_matches_monomial_expansion() {
    for n in 3..=4 {
        let g = random_hermitian_pd(1, n);
        let x = random_hermitian_pd(2, n) - DMatrix::identity(n, n);
        let (ginv, _) = inverse_with_condition(&g).unwrap();
        let det = iiblab_core::linalg::determinant(&g).re;
        let norm = 0.7;
        // ||Omega|| [x ^ omega^{n-2}/(n-2)! - 1/2 tr(g^-1 x) omega^{n-1}/(n-1)!]
        let wedge = pointwise_wedge_matrix(&g, &x);
        // omega ^ omega^{n-2}/(n-2)! = (n-1) omega^{n-1}/(n-1)!
        let power = pointwise_wedge_matrix(&g, &g) * c(1.0 / (n - 1) as f64);
        let tr = (&ginv * &x).trace();
        let expected = (wedge - power * (tr * 0.5)) * c(norm);
        let got = omega_forward(&ginv, det, norm, &x);
        assert!((got - expected).norm() < 1e-12, "n = {n}");
    }
}

#[test]
fn pointwise_solve_matches_closed_form() {
    let n = 3;
    let g = random_hermitian_pd(5, n);
    let b = random_hermitian_pd(6, n) * c(0.3);
    let (ginv, _) = inverse_with_condition(&g).unwrap();
    let det = iiblab_core::linalg::determinant(&g).re;
    let norm = 1.3;
    let s = solve_pointwise(&ginv, det, norm, &b).unwrap();
    assert!(s.residual < 1e-12);
    // with C = -B / (||Omega|| det G): tr(YG) = tr(CG) / (1 - n/2),
    // Y = C + 1/2 tr(YG) G^-1, gdot = G Y G
    let cm = &b * c(-1.0 / (norm * det));
    let tr_yg = (&cm * &g).trace() / (1.0 - n as f64 / 2.0);
    let y = &cm + &ginv * (tr_yg * 0.5);
    let closed = &g * y * &g;
    assert!((s.x - closed).norm() < 1e-12);
}

#[test]
fn flat_is_stationary_in_both_forms() {
    let (grid, d) = setup(16);
    let g = metric::flat(grid.clone());
    let vol = VolumeForm::unit();
    assert_eq!(omega_rhs(&g, &vol, &SourceSpec::None, &d).unwrap().max_abs(), 0.0);
    assert_eq!(eta_rhs(&g, &SourceSpec::None, &d).unwrap().max_abs(), 0.0);
}

#[test]
fn flat_with_constant_source() {
    let (grid, d) = setup(8);
    let eps = 0.25;
    let psi = sigma(grid.clone(), 0, 0).unwrap().scale(c(eps));
    let g = metric::flat(grid.clone());
    let gdot = omega_rhs(&g, &VolumeForm::unit(), &SourceSpec::Psi(psi.clone()), &d).unwrap();
    let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0), c(-eps), c(-eps)]));
    for i in 0..grid.node_count() {
        assert!((gdot.node_matrix(i) - &expected).norm() < 1e-14);
    }
    let phi = derive_phi(Some(&psi), &g, &VolumeForm::unit(), &d).unwrap();
    // flat eta: Phi = -eta_dot = -(gdot - 1/2 tr(gdot) I) = diag(-eps, 0, 0)
    let phi_expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-eps), c(0.0), c(0.0)]));
    for i in 0..grid.node_count() {
        assert!((phi.node_matrix(i) - &phi_expected).norm() < 1e-14);
    }
}

#[test]
fn conversions_round_trip() {
    let (grid, _) = setup(32);
    let vol = VolumeForm::unit();
    let g = balanced(&grid, 0.3);
    let eta = eta_of(&g, &vol).unwrap();
    let back = omega_of(&eta, &vol).unwrap();
    assert!(max_diff(g.tensor(), back.tensor()) < 1e-13);
    // ||Omega||_eta^2 ||Omega||_g^{n-2} = 1
    let ne = iiblab_core::metric::volume_norm(&eta, &vol).unwrap();
    let ng = iiblab_core::metric::volume_norm(&g, &vol).unwrap();
    for (a, b) in ne.values().iter().zip(ng.values()) {
        assert!((a.re * a.re * b.re - 1.0).abs() < 1e-13);
    }
    // lambda = 1: eta = diag(1, e^-f, e^-f)
    let f = FourierSeries::sin_x_cos_y(0.3).evaluate(&grid).unwrap();
    for i in 0..grid.node_count() {
        let m = eta.matrix(i);
        assert!((m[(0, 0)].re - 1.0).abs() < 1e-13);
        assert!((m[(1, 1)].re - (-f[i]).exp()).abs() < 1e-13);
    }
}

#[test]
fn two_dimensional_conversion_is_degenerate() {
    let err = TorusGrid::new(2, vec![iiblab_core::grid::Axis(0)], 8).unwrap_err();
    assert!(matches!(err, LabError::Degenerate { n: 2, .. }));
}

#[test]
fn omega_and_eta_rates_agree() {
    let (grid, d) = setup(32);
    let vol = VolumeForm::unit();
    let g = balanced(&grid, 0.3);
    let gdot = omega_rhs(&g, &vol, &SourceSpec::None, &d).unwrap();
    let via_omega = eta_rate_from_omega_rate(&g, &gdot, &vol).unwrap();
    let eta = eta_of(&g, &vol).unwrap();
    let direct = eta_rhs(&eta, &SourceSpec::None, &d).unwrap();
    let diff = max_diff(&via_omega, &direct);
    assert!(diff < 1e-7, "{diff:e}");
    let phi = derive_phi(None, &eta, &vol, &d).unwrap();
    assert!(phi.max_abs() < 1e-9, "{:e}", phi.max_abs());
}
