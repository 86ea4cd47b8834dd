use mivit::metrics::{argmax_rows, correlation_matrix, MetricsReport};
use mivit::model::{Conv, ModelConfig};
use mivit::params::{seeded_rng, Builder, ParamStore};
use mivit_autodiff::{Tape, Tensor};
use mivit_oracles as oracle;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn hand_case_is_reproduced_exactly() {
    let r = MetricsReport::from_predictions(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
    assert_eq!(r.oa, 0.75);
    assert_eq!(r.kappa, 0.5);
    assert!((r.aa - 5.0 / 6.0).abs() < 1e-15);
    assert_eq!(format!("{:.4}", r.aa), "0.8333");
    assert_eq!(r.confusion.counts, vec![vec![1, 0], vec![1, 2]]);
}

#[test]
fn random_prediction_sets_match_the_counting_oracle() {
    let mut rng = seeded_rng(17, 0);
    for case in 0..20 {
        let classes = rng.gen_range(2..7);
        let n = rng.gen_range(5..200);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let skill = rng.gen::<f64>();
        let pred: Vec<usize> =
            truth.iter().map(|&y| if rng.gen_bool(skill) { y } else { rng.gen_range(0..classes) }).collect();
        let r = MetricsReport::from_predictions(&pred, &truth, classes);
        let (oa, aa, kappa) = oracle::classification_scores(&pred, &truth, classes);
        assert!((r.oa - oa).abs() < 1e-9, "case {case}");
        assert!((r.aa - aa).abs() < 1e-9, "case {case}");
        assert!((r.kappa - kappa).abs() < 1e-9, "case {case}");
    }
}

#[test]
fn perfect_and_constant_predictors() {
    let y = [0, 1, 2, 1, 0];
    let r = MetricsReport::from_predictions(&y, &y, 3);
    assert_eq!((r.oa, r.aa, r.kappa), (1.0, 1.0, 1.0));
    let r = MetricsReport::from_predictions(&[1, 1, 1, 1], &[0, 1, 0, 1], 2);
    assert_eq!(r.kappa, 0.0);
    assert_eq!(r.oa, 0.5);
}

#[test]
fn argmax_ties_go_to_the_lowest_index() {
    assert_eq!(argmax_rows(&[0.25, 0.25, 0.25, 0.25, 0.1, 0.4, 0.4, 0.1], 4), vec![0, 1]);
}

#[test]
fn correlation_matches_the_covariance_formula() {
    let mut rng = seeded_rng(18, 0);
    for _ in 0..10 {
        let (n, da, db) = (rng.gen_range(3..30), rng.gen_range(1..6), rng.gen_range(1..6));
        let a: Vec<f64> = (0..n * da).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n * db).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = correlation_matrix(&a, &b, n, da, db);
        for i in 0..da {
            for j in 0..db {
                let ca: Vec<f64> = (0..n).map(|r| a[r * da + i]).collect();
                let cb: Vec<f64> = (0..n).map(|r| b[r * db + j]).collect();
                assert!((c.matrix[i][j] - oracle::pearson(&ca, &cb)).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn self_and_negated_correlation_diagonals() {
    let mut rng = seeded_rng(19, 0);
    let (n, d) = (12, 4);
    let a: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    let same = correlation_matrix(&a, &a, n, d, d);
    let flipped = correlation_matrix(&a, &neg, n, d, d);
    for i in 0..d {
        assert!((same.matrix[i][i] - 1.0).abs() < 1e-6);
        assert!((flipped.matrix[i][i] + 1.0).abs() < 1e-6);
    }
}

#[test]
fn constant_channel_is_flagged_undefined() {
    let a = [1.0, 5.0, 2.0, 5.0, 3.0, 5.0];
    let c = correlation_matrix(&a, &a, 3, 2, 2);
    assert!(!c.undefined[0][0]);
    assert!(c.undefined[1][1] && c.undefined[0][1] && c.undefined[1][0]);
    assert_eq!(c.matrix[1][1], 0.0);
}

#[test]
fn single_conv_has_ten_parameters_and_counted_macs() {
    let mut store = ParamStore::<f32>::default();
    let mut rng = seeded_rng(0, 0);
    let conv = Conv::new(&mut Builder::new(&mut store, &mut rng).scope("g"), "c", 1, 1, 3, 3);
    assert_eq!(store.count(|_| true), 10);

    let mut t = Tape::<f32>::new();
    let p = store.bind_frozen(&mut t);
    let x = t.constant(Tensor::zeros(&[1, 1, 4, 4]));
    conv.forward(&mut t, &p, x).unwrap();
    // One multiply-accumulate per output pixel per kernel tap, padded taps
    // included (dense evaluation).
    let mut want = 0u64;
    for _oy in 0..4 {
        for _ox in 0..4 {
            for _ky in 0..3 {
                for _kx in 0..3 {
                    want += 1;
                }
            }
        }
    }
    assert_eq!(t.macs(), want);
}

#[test]
fn default_config_counts_are_stable() {
    let cfg = ModelConfig::default();
    let (model, store) = mivit::model::Mivit::new(&cfg, 0).unwrap();
    for (path, params) in [
        (mivit::train::Path::Fused, 485_450),
        (mivit::train::Path::Shallow1, 194_087),
        (mivit::train::Path::Shallow2, 185_447),
    ] {
        let (n, macs) = mivit::train::count_params_flops(&model, &store, path).unwrap();
        assert_eq!(n, params, "{path:?}");
        assert!(macs > 0);
    }
}

proptest! {
    #[test]
    fn metrics_stay_in_range(seed in any::<u64>(), n in 1usize..60, classes in 2usize..6) {
        let mut rng = seeded_rng(seed, 0);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let r = MetricsReport::from_predictions(&pred, &truth, classes);
        prop_assert!((0.0..=1.0).contains(&r.oa));
        prop_assert!((0.0..=1.0).contains(&r.aa));
        prop_assert!(r.kappa <= 1.0);
        prop_assert_eq!(r.confusion.total(), n as u64);
    }
}
