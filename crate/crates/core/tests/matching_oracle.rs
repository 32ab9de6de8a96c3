mod common;

use common::{oracle_counts, random_mask};
use osteoforge::detect::{evaluate_masks, format_percent, DetectionCounts};
use osteoforge::{generate_phantom, perturb_predictions, Connectivity3D, PerturbMode, PhantomSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matching_equals_pairwise_intersections(seed in any::<u64>(), n in 2usize..=16, dg in 0.02f64..0.3, dp in 0.02f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_mask(&mut rng, [n, n, n], dg);
        let pred = random_mask(&mut rng, [n, n, n], dp);
        for conn in [Connectivity3D::Six, Connectivity3D::TwentySix] {
            let r = evaluate_masks(&gt, &pred, conn, 0.0).unwrap();
            prop_assert_eq!((r.tp, r.fp, r.fn_), oracle_counts(&gt, &pred, conn));
            prop_assert_eq!(r.tp + r.fn_, r.n_gt);
        }
    }

    #[test]
    fn overlap_fraction_only_removes_matches(seed in any::<u64>(), f in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_mask(&mut rng, [8, 8, 8], 0.15);
        let pred = random_mask(&mut rng, [8, 8, 8], 0.15);
        let loose = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.0).unwrap();
        let strict = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, f).unwrap();
        prop_assert!(strict.tp <= loose.tp);
        prop_assert!(strict.fp >= loose.fp);
    }
}

#[test]
fn published_count_rows() {
    let after = DetectionCounts::new(375, 13, 418);
    assert_eq!(format_percent(after.precision()), "96.6");
    assert_eq!(format_percent(after.recall()), "47.3");
    let before = DetectionCounts::new(99, 289, 98);
    assert_eq!(format_percent(before.precision()), "25.5");
    assert_eq!(format_percent(before.recall()), "50.3");
}

#[test]
fn perturbation_deltas() {
    let phantom = generate_phantom(&PhantomSpec::default()).unwrap();
    let gt_masks = phantom.lesion_masks();
    let gt = phantom.all_lesions();
    let n = gt_masks.len();
    let eval = |mode| {
        let pred = perturb_predictions(&gt_masks, mode, 99).unwrap();
        let r = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.0).unwrap();
        (r.tp, r.fp, r.fn_)
    };
    assert_eq!(eval(PerturbMode::Perfect), (n, 0, 0));
    assert_eq!(eval(PerturbMode::Dilate), (n, 0, 0));
    for k in 1..=3 {
        assert_eq!(eval(PerturbMode::Drop(k)), (n - k, 0, k));
        assert_eq!(eval(PerturbMode::AddSpurious(k)), (n, k, 0));
    }
}
