use super::*;
use crate::oracle;
use crate::rng::rng_from_seed;
use crate::testutil::*;
use nalgebra::DVector;
use std::f64::consts::TAU;

fn steer(k: usize, df: f64, tau: f64) -> DVector<C64> {
    DVector::from_fn(k, |i, _| C64::from_polar(1.0, -TAU * i as f64 * df * tau))
}

#[test]
fn evd_identity() {
    let r = DMatrix::<C64>::identity(3, 3);
    let e = hermitian_evd(&r).unwrap();
    for v in &e.values {
        assert!((v - 1.0).abs() < 1e-12);
    }
    let g = e.vectors.adjoint() * &e.vectors - DMatrix::identity(3, 3);
    assert!(max_abs(&g) < 1e-12);
}

#[test]
fn evd_rotated_diagonal() {
    let mut rng = rng_from_seed(11);
    let q = random_matrix(&mut rng, 2, 2).qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(3.0, 0.0), C64::new(1.0, 0.0)]));
    let r = &q * d * q.adjoint();
    let e = hermitian_evd(&r).unwrap();
    assert!((e.values[0] - 3.0).abs() < 1e-12);
    assert!((e.values[1] - 1.0).abs() < 1e-12);
}

#[test]
fn evd_rank_one() {
    let mut rng = rng_from_seed(12);
    let v = random_vector(&mut rng, 6);
    let r = &v * v.adjoint();
    let e = hermitian_evd(&r).unwrap();
    assert!((e.values[0] - v.norm_squared()).abs() < 1e-10 * v.norm_squared());
    for &l in &e.values[1..] {
        assert!(l.abs() <= 1e-10 * e.values[0]);
    }
}

#[test]
fn evd_invariants_on_random_hermitian() {
    let mut rng = rng_from_seed(13);
    for n in [1, 4, 17, 32] {
        let r = random_hermitian_psd(&mut rng, n);
        let e = hermitian_evd(&r).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let orth = e.vectors.adjoint() * &e.vectors - DMatrix::identity(n, n);
        assert!(max_abs(&orth) <= 1e-10);
        let lam = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            e.values.iter().map(|&l| C64::new(l, 0.0)),
        ));
        let rec = &e.vectors * lam * e.vectors.adjoint() - &r;
        assert!(max_abs(&rec) <= 1e-8 * max_abs(&r));
    }
}

#[test]
fn evd_of_projector_is_binary() {
    let mut rng = rng_from_seed(14);
    let q = random_matrix(&mut rng, 8, 3).qr().q();
    let p = &q * q.adjoint();
    for l in hermitian_evd(&p).unwrap().values {
        assert!(l.abs() < 1e-8 || (l - 1.0).abs() < 1e-8, "{l}");
    }
}

#[test]
fn evd_rejects_non_finite() {
    let mut r = DMatrix::<C64>::identity(2, 2);
    r[(0, 1)] = C64::new(f64::NAN, 0.0);
    assert!(matches!(hermitian_evd(&r), Err(Error::NonFinite(_))));
}

#[test]
fn pinv_examples() {
    let mut rng = rng_from_seed(15);
    let q = random_matrix(&mut rng, 6, 2).qr().q();
    let p = pseudo_inverse(&q).unwrap();
    assert!(max_abs(&(p.matrix - q.adjoint())) < 1e-12);

    let two = DMatrix::from_element(1, 1, C64::new(2.0, 0.0));
    assert!((pseudo_inverse(&two).unwrap().matrix[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);

    let a = random_matrix(&mut rng, 8, 3);
    let p = pseudo_inverse(&a).unwrap();
    assert!(!p.rank_deficient);
    let x = &p.matrix;
    assert!(max_abs(&(x * &a - DMatrix::identity(3, 3))) <= 1e-8);
    // Moore-Penrose axioms
    let scale = max_abs(&a);
    assert!(max_abs(&(&a * x * &a - &a)) <= 1e-8 * scale);
    assert!(max_abs(&(x * &a * x - x)) <= 1e-8 * max_abs(x));
    let ax = &a * x;
    assert!(max_abs(&(&ax - ax.adjoint())) <= 1e-8);
}

#[test]
fn pinv_flags_rank_deficiency() {
    let mut rng = rng_from_seed(16);
    let c = random_vector(&mut rng, 5);
    let a = DMatrix::from_columns(&[c.clone(), c]);
    let p = pseudo_inverse(&a).unwrap();
    assert!(p.rank_deficient);
    assert!(p.condition > 1e12);
}

#[test]
fn nullspace_examples() {
    let e1 = DMatrix::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let n = orthonormal_nullspace(&e1).unwrap();
    assert!(n[(0, 0)].norm() < 1e-12 && (n[(1, 0)].norm() - 1.0).abs() < 1e-12);

    let a = DMatrix::from_columns(&[steer(8, 2.5e6, 37e-9)]);
    let n = orthonormal_nullspace(&a).unwrap();
    assert_eq!(n.shape(), (8, 7));
    assert!(max_abs(&(n.adjoint() * &a)) < 1e-9);
    assert!(max_abs(&(n.adjoint() * &n - DMatrix::identity(7, 7))) < 1e-9);

    let mut rng = rng_from_seed(17);
    let a = random_matrix(&mut rng, 9, 4).qr().q();
    let n = orthonormal_nullspace(&a).unwrap();
    let mut full = DMatrix::zeros(9, 9);
    full.columns_mut(0, 4).copy_from(&a);
    full.columns_mut(4, 5).copy_from(&n);
    assert!(max_abs(&(full.adjoint() * &full - DMatrix::identity(9, 9))) < 1e-9);
}

#[test]
fn nullspace_rejects_rank_deficiency() {
    let c = steer(6, 2.5e6, 10e-9);
    let a = DMatrix::from_columns(&[c.clone(), c]);
    assert!(matches!(orthonormal_nullspace(&a), Err(Error::RankDeficient(_))));
}

#[test]
fn grid_validation() {
    assert!(matches!(SearchGrid::new(400e-9, 1000, 32), Err(Error::GridNotPowerOfTwo(1000))));
    assert!(SearchGrid::new(400e-9, 128, 32).is_err());
    let g = SearchGrid::new(400e-9, 4096, 32).unwrap();
    assert!((g.step() - 400e-9 / 4096.0).abs() < 1e-24);
}

#[test]
fn fft_spectrum_identity_factor_peaks_at_delay() {
    let (k, df) = (16, 2.5e6);
    let grid = SearchGrid::new(1.0 / df, 512, k).unwrap();
    let tau0 = 100.0 * grid.step();
    let h = steer(k, df, tau0);
    // F = I gives the constant ‖h‖²; the single all-ones column gives
    // |Σ_k e^{jωk(τ0 − τ_n)}|², peaking at K² when τ_n = τ0.
    let flat = fft_spectrum(&h, &DMatrix::identity(k, k), &grid).unwrap();
    assert!(flat.iter().all(|v| (v - k as f64).abs() < 1e-9));
    let s = fft_spectrum(&h, &DMatrix::from_element(k, 1, C64::new(1.0, 0.0)), &grid).unwrap();
    assert_eq!(argmax(&s), 100);
    assert!((s[100] - (k * k) as f64).abs() < 1e-9);
}

#[test]
fn fft_spectrum_of_zero_is_zero() {
    let grid = SearchGrid::new(400e-9, 64, 8).unwrap();
    let s = fft_spectrum(&DVector::zeros(8), &DMatrix::identity(8, 8), &grid).unwrap();
    assert!(s.iter().all(|&v| v == 0.0));
}

#[test]
fn fft_spectrum_matches_direct_form_exhaustively() {
    let mut rng = rng_from_seed(18);
    for &(k, m, n, r) in &[(2, 1, 16, 1), (4, 1, 32, 3), (8, 2, 64, 5), (16, 1, 1024, 7), (16, 3, 256, 4)] {
        let grid = SearchGrid::new(400e-9, n, k).unwrap().with_origin(-37e-9);
        let h = random_vector(&mut rng, m * k);
        let f = random_matrix(&mut rng, m * k, r);
        let fast = fft_spectrum(&h, &f, &grid).unwrap();
        let direct = oracle::to_objective_grid(&h, &(&f * f.adjoint()), &grid);
        for (a, b) in fast.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }
}

#[test]
fn lag_route_matches_direct_form() {
    let mut rng = rng_from_seed(19);
    for &(k, m, cols) in &[(4, 1, 1), (8, 2, 3), (16, 3, 1)] {
        let grid = SearchGrid::new(400e-9, 16 * k, k).unwrap().with_origin(5e-9);
        let h = random_matrix(&mut rng, m * k, cols);
        let p = random_hermitian_psd(&mut rng, m * k);
        let fast = lag_transform(&quadratic_form_lags(&h, &p, k).unwrap(), &grid).unwrap();
        let direct = oracle::to_objective_sum_grid(&h, &p, &grid);
        let scale = direct.iter().cloned().fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-11 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn steering_lags_match_direct_form() {
    let mut rng = rng_from_seed(20);
    let (k, m) = (8, 3);
    let grid = SearchGrid::new(400e-9, 128, k).unwrap();
    let p = random_hermitian_psd(&mut rng, m * k);
    let lags = SteeringLags::new(&p, m, k).unwrap();
    for theta in [-1.0f64, 0.0, 0.4] {
        let spatial: Vec<C64> = (0..m).map(|i| C64::from_polar(1.0, std::f64::consts::PI * i as f64 * theta.sin())).collect();
        let fast = lag_transform(&lags.lags(&spatial), &grid).unwrap();
        let scale = fast.iter().cloned().fold(0.0, f64::max);
        for (n, &v) in fast.iter().enumerate() {
            let d = oracle::steering_form(&p, &spatial, k, 2.5e6, grid.delay(n as f64));
            assert!((v - d).abs() <= 1e-11 * scale);
        }
    }
}

#[test]
fn parabolic_refinement_is_exact_on_parabolas() {
    let f = |x: f64| 3.0 * (x - 0.3) * (x - 0.3) + 1.0;
    assert!((parabolic_offset(f(-1.0), f(0.0), f(1.0)) - 0.3).abs() < 1e-12);
    let vals: Vec<f64> = (0..8).map(|i| f(i as f64 - 5.0)).collect();
    assert!((refine_min(&vals, 5) - 5.3).abs() < 1e-12);
    let g: Vec<f64> = (0..8).map(|i| (-(i as f64 - 2.2).powi(2)).exp()).collect();
    assert!((refine_max_log(&g, 2) - 2.2).abs() < 1e-12);
    assert_eq!(parabolic_offset(1.0, 1.0, 1.0), 0.0);
}
