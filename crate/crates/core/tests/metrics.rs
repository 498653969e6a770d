mod common;

use common::*;
use msdnn::metrics::*;
use msdnn::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn precision_recall_matches_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (m, g) = random_pair(&mut rng, 8, 8, false);
        let pred = binarize(&m, 0.5);
        let (p, r) = precision_recall(&pred, &g.mask).unwrap();
        assert_eq!((p, r), oracle_pr(m.values.data(), g.mask.data(), 0.5));
    }
}

#[test]
fn pr_curve_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = MetricsConfig::default();
    for _ in 0..34 {
        let (maps, gts): (Vec<_>, Vec<_>) = (0..3).map(|_| random_pair(&mut rng, 8, 8, false)).unzip();
        let curve = pr_curve(&maps, &gts, &cfg).unwrap();
        assert_eq!(curve.len(), 52);
        for (k, level) in (0..=255).step_by(5).enumerate() {
            let t = level as f64 / 255.0;
            let (mut sp, mut sr) = (0.0, 0.0);
            for (m, g) in maps.iter().zip(&gts) {
                let (p, r) = oracle_pr(m.values.data(), g.mask.data(), t);
                sp += p;
                sr += r;
            }
            assert_eq!(curve[k].threshold, t);
            assert!((curve[k].mean_precision - sp / 3.0).abs() <= 1e-12);
            assert!((curve[k].mean_recall - sr / 3.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn adaptive_f_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = MetricsConfig::default();
    for _ in 0..100 {
        let (m, g) = random_pair(&mut rng, 8, 8, false);
        let v = m.values.data();
        let t = (2.0 * v.iter().sum::<f64>() / v.len() as f64).min(1.0);
        let (p, r) = oracle_pr(v, g.mask.data(), t);
        let f = if p == 0.0 && r == 0.0 { 0.0 } else { 1.3 * p * r / (0.3 * p + r) };
        let got = adaptive_fmeasure(&m, &g, &cfg).unwrap();
        assert!((got.threshold - t).abs() <= 1e-12);
        assert!((got.fmeasure - f).abs() <= 1e-12);
    }
}

#[test]
fn mae_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let (m, g) = random_pair(&mut rng, 8, 8, false);
        let mut s = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                s += (m.values.data()[y * 8 + x] - g.mask.data()[y * 8 + x]).abs();
            }
        }
        assert!((mae(&m, &g).unwrap() - s / 64.0).abs() <= 1e-15);
    }
}

#[test]
fn auc_matches_pairwise_and_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..200 {
        let (m, g) = random_pair(&mut rng, 8, 8, i % 2 == 0);
        let a = auc(&m, &g).unwrap();
        assert!((a - oracle_pairwise_auc(m.values.data(), g.mask.data())).abs() <= 1e-12);
        if i % 2 == 0 {
            assert!((a - oracle_sweep_auc(m.values.data(), g.mask.data())).abs() <= 1e-12);
        }
    }
}

#[test]
fn dataset_report_matches_per_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = MetricsConfig::default();
    let (maps, gts): (Vec<_>, Vec<_>) = (0..5).map(|_| random_pair(&mut rng, 4, 4, false)).unzip();
    let report = evaluate_dataset(&maps, &gts, &cfg).unwrap();
    let mut sums = [0.0; 5];
    for (i, (m, g)) in maps.iter().zip(&gts).enumerate() {
        let v = m.values.data();
        let t = (2.0 * v.iter().sum::<f64>() / v.len() as f64).min(1.0);
        let (p, r) = oracle_pr(v, g.mask.data(), t);
        let f = if p == 0.0 && r == 0.0 { 0.0 } else { 1.3 * p * r / (0.3 * p + r) };
        let e = v.iter().zip(g.mask.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 16.0;
        let a = oracle_pairwise_auc(v, g.mask.data());
        let row = &report.per_image[i];
        for (got, want) in [(row.precision, p), (row.recall, r), (row.fmeasure, f), (row.mae, e), (row.auc.unwrap(), a)] {
            assert!((got - want).abs() <= 1e-12);
        }
        for (s, x) in sums.iter_mut().zip([p, r, f, e, a]) {
            *s += x;
        }
    }
    let mean = &report.mean;
    for (got, s) in [mean.precision, mean.recall, mean.fmeasure, mean.mae, mean.auc.unwrap()].into_iter().zip(sums) {
        assert!((got - s / 5.0).abs() <= 1e-12);
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("id,adaptive_threshold,precision,recall,fmeasure,mae,auc\n"));
    assert_eq!(report.pr_curve_csv().lines().count(), 53);
}

#[test]
fn single_class_gt_has_no_auc() {
    let m = SaliencyMap::new(&Tensor::new(&[2, 2], 0.3).unwrap(), "a").unwrap();
    let g = GroundTruth::new(&Tensor::zeros(&[2, 2]).unwrap(), "a").unwrap();
    let r = evaluate_dataset(&[m], &[g], &MetricsConfig::default()).unwrap();
    assert_eq!(r.mean.auc, None);
    assert!(r.to_csv().trim_end().ends_with(",nan"));
}

#[test]
fn evaluation_rejects_unpaired_lists() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (m, g) = random_pair(&mut rng, 4, 4, false);
    assert!(evaluate_dataset(&[m.clone(), m], &[g], &MetricsConfig::default()).is_err());
}

fn pair_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (prop::collection::vec(0.0f64..=1.0, 36), prop::collection::vec(any::<bool>(), 36))
        .prop_filter("both classes", |(_, g)| g.iter().any(|&b| b) && g.iter().any(|&b| !b))
}

fn build(v: &[f64], g: &[bool]) -> (SaliencyMap, GroundTruth) {
    let mask = g.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    (
        SaliencyMap::new(&Tensor::from_vec(&[6, 6], v.to_vec()).unwrap(), "m").unwrap(),
        GroundTruth::new(&Tensor::from_vec(&[6, 6], mask).unwrap(), "g").unwrap(),
    )
}

proptest! {
    #[test]
    fn auc_invariant_under_monotone_maps((v, g) in pair_strategy(), k in 0.5f64..4.0) {
        let (m, gt) = build(&v, &g);
        let warped: Vec<f64> = v.iter().map(|x| x.powf(k) * 0.7 + 0.1).collect();
        let (m2, _) = build(&warped, &g);
        prop_assert!((auc(&m, &gt).unwrap() - auc(&m2, &gt).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn recall_never_increases_with_threshold((v, g) in pair_strategy()) {
        let (m, gt) = build(&v, &g);
        let curve = pr_curve(&[m], &[gt], &MetricsConfig::default()).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[1].mean_recall <= w[0].mean_recall));
    }

    #[test]
    fn f_beta_bounded(p in 0.0f64..=1.0, r in 0.0f64..=1.0, b2 in 0.01f64..10.0) {
        let f = f_beta(p, r, b2);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f == 0.0, p * r == 0.0);
    }

    #[test]
    fn mae_is_a_metric(
        a in prop::collection::vec(0.0f64..=1.0, 16),
        b in prop::collection::vec(0.0f64..=1.0, 16),
        c in prop::collection::vec(0.0f64..=1.0, 16),
    ) {
        let t = |v: &Vec<f64>| Tensor::from_vec(&[4, 4], v.clone()).unwrap();
        let d = |x: &Vec<f64>, y: &Vec<f64>| t(x).sub(&t(y)).unwrap().map(f64::abs).mean();
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b) == 0.0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-15);

        // mae itself on a binary second argument agrees with the distance
        let bin: Vec<f64> = b.iter().map(|x| x.round()).collect();
        let m = SaliencyMap::new(&t(&a), "a").unwrap();
        let g = GroundTruth::new(&t(&bin), "b").unwrap();
        prop_assert!((mae(&m, &g).unwrap() - d(&a, &bin)).abs() <= 1e-15);
    }

    #[test]
    fn adaptive_binarization_scales_with_map((v, g) in pair_strategy(), c in 0.05f64..=1.0) {
        let (m, gt) = build(&v, &g);
        prop_assume!(2.0 * m.mean() <= 1.0);
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let (ms, _) = build(&scaled, &g);
        let cfg = MetricsConfig::default();
        let t = adaptive_fmeasure(&m, &gt, &cfg).unwrap().threshold;
        let ts = adaptive_fmeasure(&ms, &gt, &cfg).unwrap().threshold;
        // compare away from rounding ties at the threshold
        prop_assume!(v.iter().all(|x| (x - t).abs() > 1e-9));
        prop_assert_eq!(binarize(&m, t), binarize(&ms, ts));
    }
}
