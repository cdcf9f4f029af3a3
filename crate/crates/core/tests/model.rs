mod common;

use common::{random_xy, rel_err, rng};
use loocv_core::data::RawDataset;
use loocv_core::loocv::loocv_loss;
use loocv_core::model::{pcr_truncate, reduce_frame, standardize, LeastSquaresFit, Tolerances};
use proptest::prelude::*;

fn dataset(seed: u64, n: usize, d: usize) -> loocv_core::model::StandardizedDataset {
    let (x, y) = random_xy(&mut rng(seed), n, d);
    standardize(&RawDataset::from_matrix(x, y).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn standardized_data_meets_its_conditions(seed in any::<u64>(), n in 6usize..60, d in 1usize..5) {
        let ds = dataset(seed, n, d);
        ds.check_condition(&Tolerances::default()).unwrap();
        let x = ds.svd.reconstruct();
        prop_assert!((&x - &ds.x).norm() <= 1e-10 * ds.x.norm());
        prop_assert!((ds.svd.nu.sum() - d as f64).abs() < 1e-10);
        prop_assert!(ds.svd.nu.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn reduced_frame_rescales_the_loss(seed in any::<u64>(), k in -3.0f64..3.0) {
        let ds = dataset(seed, 20, 4);
        let red = reduce_frame(&ds).unwrap();
        red.check_centered(&Tolerances::default()).unwrap();
        let lambda = 10f64.powf(k);
        let a = loocv_loss(&ds.svd, &ds.y, lambda).unwrap();
        let b = loocv_loss(&red.svd, &red.y, lambda).unwrap();
        prop_assert!(rel_err(b, a / ds.y.norm_squared(), 0.0) < 1e-10);
    }

    #[test]
    fn least_squares_decomposes_the_response(seed in any::<u64>()) {
        let ds = dataset(seed, 25, 3);
        let fit = LeastSquaresFit::compute(&ds.svd, &ds.y);
        prop_assert!((ds.svd.u.transpose() * &fit.residuals).amax() < 1e-10);
        let total = fit.fitted.norm_squared() + fit.residuals.norm_squared();
        prop_assert!(rel_err(total, ds.y.norm_squared(), 0.0) < 1e-10);
        let direct = &ds.x * &fit.theta_hat;
        prop_assert!((direct - &fit.fitted).amax() < 1e-9);
    }
}

#[test]
fn full_rank_truncation_is_the_identity_for_the_loss() {
    let ds = dataset(4, 30, 5);
    let pcr = pcr_truncate(&ds, 5).unwrap();
    pcr.check_centered(&Tolerances::default()).unwrap();
    for &l in &[1e-2, 1.0, 1e2] {
        let a = loocv_loss(&ds.svd, &ds.y, l).unwrap();
        let b = loocv_loss(&pcr.svd, &pcr.y, l).unwrap();
        assert!(rel_err(a, b, 0.0) < 1e-10);
    }
    let low = pcr_truncate(&ds, 2).unwrap();
    assert_eq!(low.d(), 2);
    assert_eq!(low.svd.s.as_slice(), &ds.svd.s.as_slice()[..2]);
}
