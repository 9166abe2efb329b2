use fgmae::data::{decode_tensor, encode_tensor, StoredTensor};
use fgmae::eval::{average_precision, metric_miou, metric_oa_aa};
use fgmae::features::{compute_hog, normalize_rows, normalized_difference, HogParams};
use fgmae::model::{keep_count, MaskPlan};
use fgmae::{SeedRng, Tensor};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 0..4)
}

proptest! {
    #[test]
    fn fgmr_roundtrip_is_bitwise(dims in dims(), seed in any::<u64>()) {
        let mut rng = SeedRng::new(seed);
        let t = Tensor::<f64>::from_fn(dims.clone(), |_| rng.standard_normal() * 1e3);
        let bytes = encode_tensor(&t);
        let StoredTensor::F64(back) = decode_tensor(&bytes, "mem".as_ref()).unwrap() else {
            panic!("dtype changed");
        };
        prop_assert_eq!(back.dims(), t.dims());
        prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(encode_tensor(&back), bytes);
    }

    #[test]
    fn truncated_fgmr_is_rejected(dims in dims(), cut in 1usize..16) {
        let t = Tensor::<f32>::zeros(dims);
        let bytes = encode_tensor(&t);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_tensor(&bytes[..keep], "mem".as_ref()).is_err());
    }

    #[test]
    fn keep_count_bounds(l in 1usize..2000, ratio in 0.0f64..0.99) {
        let k = keep_count(l, ratio);
        prop_assert!(k <= l);
        prop_assert!((k as f64) <= l as f64 * (1.0 - ratio) + 1e-6);
        prop_assert!((k as f64) > l as f64 * (1.0 - ratio) - 1.0 - 1e-6);
    }

    #[test]
    fn mask_plan_partitions_patches(l in 1usize..300, ratio in 0.0f64..0.95, seed in any::<u64>()) {
        let plan = MaskPlan::random(3, l, ratio, &mut SeedRng::new(seed)).unwrap();
        for b in 0..3 {
            let mut all: Vec<usize> = plan.ids_keep[b].iter().chain(&plan.ids_mask[b]).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..l).collect::<Vec<_>>());
            // restore inverts the shuffle
            let order: Vec<usize> = plan.ids_keep[b].iter().chain(&plan.ids_mask[b]).copied().collect();
            for (p, &r) in plan.ids_restore[b].iter().enumerate() {
                prop_assert_eq!(order[r], p);
            }
        }
    }

    #[test]
    fn normalized_rows_have_zero_mean_unit_scale(rows in 1usize..5, k in 2usize..20, seed in any::<u64>()) {
        let mut rng = SeedRng::new(seed);
        let mut t = Tensor::<f64>::from_fn([rows, k], |_| rng.uniform() * 10.0 - 3.0);
        normalize_rows(&mut t);
        for row in t.data().chunks(k) {
            let mean = row.iter().sum::<f64>() / k as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn normalized_difference_is_bounded_and_antisymmetric(x in 0.0f64..1e6, y in 0.0f64..1e6) {
        let v = normalized_difference(x, y);
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert_eq!(v, -normalized_difference(y, x));
    }

    #[test]
    fn hog_cells_are_unit_or_zero(seed in any::<u64>(), scale in 0.0f64..5.0) {
        let mut rng = SeedRng::new(seed);
        let img = Tensor::<f64>::from_fn([1, 1, 16, 16], |_| rng.uniform() * scale);
        let hog = compute_hog(&img, &HogParams::default()).unwrap();
        for cell in hog.data().chunks(9) {
            prop_assert!(cell.iter().all(|&v| v >= 0.0));
            let n = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(n < 1e-12 || (n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn accuracy_ignores_sample_order(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40),
        seed in any::<u64>(),
    ) {
        let perm = SeedRng::new(seed).permutation(pairs.len());
        let (p, l): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let (pp, lp): (Vec<_>, Vec<_>) = perm.iter().map(|&i| pairs[i]).unzip();
        let a = metric_oa_aa(&p, &l).unwrap();
        let b = metric_oa_aa(&pp, &lp).unwrap();
        prop_assert_eq!(a.oa, b.oa);
        prop_assert!((a.aa - b.aa).abs() < 1e-12);
        let m1 = metric_miou(&p, &l, 4, None).unwrap();
        let m2 = metric_miou(&pp, &lp, 4, None).unwrap();
        prop_assert_eq!(m1.iou, m2.iou);
        prop_assert!((0.0..=1.0).contains(&m1.miou));
    }

    #[test]
    fn ap_is_in_unit_interval_and_perfect_when_separated(
        labels in prop::collection::vec(0u8..2, 1..30),
        seed in any::<u64>(),
    ) {
        let mut rng = SeedRng::new(seed);
        let scores: Vec<f64> = labels.iter().map(|_| rng.uniform()).collect();
        if let Some(ap) = average_precision(&scores, &labels) {
            prop_assert!(ap > 0.0 && ap <= 1.0);
        }
        let separated: Vec<f64> = labels.iter().zip(&scores).map(|(&y, s)| f64::from(y) + s * 0.5).collect();
        if let Some(ap) = average_precision(&separated, &labels) {
            prop_assert!((ap - 1.0).abs() < 1e-12);
        }
    }
}
