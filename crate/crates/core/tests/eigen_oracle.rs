mod common;

use interfere_core::contrast::{lambda_max_centered, zcat_interval, zcat_with_lambda};
use interfere_core::design::{EffectiveTreatment, ExposureDesign};
use interfere_core::exposure::exact_pairwise;
use interfere_core::linalg::DenseMatrix;
use interfere_core::normal;
use interfere_core::sim::{synthetic_layout, LayoutKind};
use nalgebra::DMatrix;
use rand::Rng;

/// Top eigenvalue of C A C from a full dense decomposition.
fn dense_oracle(a: &DenseMatrix) -> f64 {
    let n = a.dim();
    let m = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
    let c = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let centered = &c * m * &c;
    centered.symmetric_eigenvalues().max()
}

#[test]
fn random_psd_matrices() {
    let mut r = common::rng_for(31);
    for _ in 0..25 {
        let b = DMatrix::from_fn(8, 8, |_, _| r.random_range(-1.0..1.0));
        let psd = &b * b.transpose();
        let a = DenseMatrix::from_fn(8, |i, j| psd[(i, j)]);
        let got = lambda_max_centered(&a, 3).unwrap();
        let want = dense_oracle(&a);
        assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
    }
}

#[test]
fn design_profiles_match_dense_oracle() {
    for (kind, n, d_min, d) in [
        (LayoutKind::Line, 200, 2, 3),
        (LayoutKind::UniformSquare, 200, 2, 3),
        (LayoutKind::UniformSquare, 150, 3, 6),
        (LayoutKind::TwoCluster, 120, 4, 10),
    ] {
        let layout = synthetic_layout(kind, n, 4).unwrap();
        let design = ExposureDesign::knn_threshold(&layout.coords, d_min, d, 0.5).unwrap();
        let profile = exact_pairwise(&design);
        let got = lambda_max_centered(&profile, 17).unwrap();
        let want = dense_oracle(&profile.dense_joint());
        assert!((got - want).abs() <= 1e-8 * want, "{kind:?}: {got} vs {want}");
    }
}

#[test]
fn independent_design_half_width() {
    let n = 50;
    let coords: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let p = 0.3;
    let design = ExposureDesign::knn_threshold(&coords, 1, 1, p).unwrap();
    let profile = exact_pairwise(&design);
    let mut r = common::rng_for(32);
    let x: Vec<bool> = (0..n).map(|_| r.random_bool(p)).collect();
    let y: Vec<f64> = (0..n).map(|_| r.random_bool(0.4) as u8 as f64).collect();
    let z = design.evaluate(&x).unwrap();
    let rep = zcat_interval(&y, &z, &profile, 0.05).unwrap();
    let hw = normal::upper_critical(0.025) / (2.0 * (n as f64 * p * (1.0 - p)).sqrt());
    assert!((rep.two_sided.width() / 2.0 - hw).abs() < 1e-10);
}

#[test]
fn zcat_half_width_ignores_outcomes() {
    let z = EffectiveTreatment::new(vec![true, false, false, true, true, false]);
    let a = zcat_with_lambda(&[1.0, 0.0, 1.0, 1.0, 0.0, 0.0], &z, 0.4, 0.3, 0.1).unwrap();
    let b = zcat_with_lambda(&[0.0, 1.0, 1.0, 0.0, 0.0, 1.0], &z, 0.4, 0.3, 0.1).unwrap();
    assert_eq!(a.two_sided.width(), b.two_sided.width());
    assert_eq!(a.delta, 2.0 / 3.0 - 1.0 / 3.0);
    assert_eq!(a, zcat_with_lambda(&[1.0, 0.0, 1.0, 1.0, 0.0, 0.0], &z, 0.4, 0.3, 0.1).unwrap());
}
