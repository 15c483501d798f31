mod common;

use common::texture;
use proptest::prelude::*;
use sparse_sr::metrics::psnr_from_mse;
use sparse_sr::{mse, psnr, ssim, GrayImage, MetricReport};

// Values from skimage.metrics.structural_similarity with
// gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
// data_range=255.
#[test]
fn ssim_matches_reference_values() {
    let a = texture(24, 30, 1);
    let b = texture(24, 30, 2);
    assert!((ssim(&a, &b).unwrap() - 0.7088475389573583).abs() < 1e-10);
    let noisy = GrayImage::from_fn(24, 30, |r, c| {
        let i = r * 30 + c;
        (a.get(r, c) + ((i * 7) % 11) as f64 - 5.0).clamp(0.0, 255.0)
    })
    .unwrap();
    assert!((ssim(&a, &noisy).unwrap() - 0.9908512235687291).abs() < 1e-10);
}

#[test]
fn psnr_identities() {
    assert!((psnr_from_mse(1.0) - 48.1308).abs() < 1e-3);
    let a = GrayImage::new(2, 2, vec![0.0; 4]).unwrap();
    let b = GrayImage::new(2, 2, vec![3.0, 4.0, 0.0, 0.0]).unwrap();
    assert_eq!(mse(&a, &b).unwrap(), 6.25);
    assert!((psnr(&a, &b).unwrap() - (20.0 * 255f64.log10() - 10.0 * 6.25f64.log10())).abs() < 1e-12);
}

#[test]
fn report_shaves_border() {
    let a = texture(30, 30, 0);
    let mut b = a.clone();
    b.set(0, 0, 255.0 - a.get(0, 0));
    let full = MetricReport::compute(&a, &b, 0).unwrap();
    let shaved = MetricReport::compute(&a, &b, 2).unwrap();
    assert!(full.mse > 0.0);
    assert_eq!(shaved.mse, 0.0);
    assert_eq!(shaved.psnr_db, f64::INFINITY);
    assert_eq!(shaved.ssim, 1.0);
}

proptest! {
    #[test]
    fn metric_symmetry(seed_a in 0usize..20, seed_b in 0usize..20) {
        let a = texture(16, 18, seed_a);
        let b = texture(16, 18, seed_b);
        prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ssim(&a, &b).unwrap() <= 1.0 + 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}
