use cdds_core::metrics::*;
use cdds_core::CoreError;
use proptest::prelude::*;

const EXACT: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXACT
}

#[test]
fn perfect_separation() {
    let r = classification_metrics(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
    assert_eq!(r.metrics(), vec![("auc", 1.0), ("aupr", 1.0), ("kappa", 1.0), ("f1", 1.0)]);
}

#[test]
fn tied_scores_give_half_auc() {
    assert_eq!(roc_auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
}

#[test]
fn balanced_confusion_kappa_zero() {
    // TP=1, FP=1, FN=1, TN=1
    let scores = [0.9, 0.8, 0.2, 0.1];
    let labels = [1, 0, 1, 0];
    assert_eq!(confusion(&scores, &labels, 0.5), (1, 1, 1, 1));
    let r = classification_metrics(&scores, &labels, 0.5).unwrap();
    let m = r.metrics();
    assert!(close(m[2].1, 0.0));
    assert!(close(m[3].1, 0.5));
}

#[test]
fn constant_predictor_on_balanced_set_has_zero_kappa() {
    let c = confusion(&[0.7; 6], &[1, 0, 1, 0, 1, 0], 0.5);
    assert_eq!(kappa_from_confusion(c), 0.0);
}

#[test]
fn regression_hand_values() {
    let r = regression_metrics(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
    let m = r.metrics();
    assert!(close(m[0].1, (14.0f64 / 3.0).sqrt()));
    assert!(close(m[1].1, 2.0));
    assert!(close(m[2].1, 1.0));
    let r = regression_metrics(&[5.0, 1.0, 3.0], &[5.0, 1.0, 3.0]).unwrap();
    for ((_, got), want) in r.metrics().into_iter().zip([0.0, 0.0, 1.0, 1.0]) {
        assert!(close(got, want));
    }
    let t = [1.0, 2.0, 6.0];
    let r = regression_metrics(&[3.0; 3], &t).unwrap();
    assert!(close(r.metrics()[3].1, 0.0));
    assert_eq!(r.metrics()[2].1, 0.0);
}

#[test]
fn average_precision_hand_value() {
    // Ranked: 0.9(1) 0.8(0) 0.7(1) 0.1(0): AP = 0.5·1 + 0.5·(2/3).
    let ap = average_precision(&[0.9, 0.8, 0.7, 0.1], &[1, 0, 1, 0]).unwrap();
    assert!(close(ap, 0.5 + 1.0 / 3.0));
}

#[test]
fn error_cases() {
    assert!(matches!(classification_metrics(&[0.1, 0.2], &[0, 0], 0.5), Err(CoreError::SingleClass)));
    assert!(matches!(classification_metrics(&[0.1, 0.2, 0.3], &[0, 1], 0.5), Err(CoreError::LengthMismatch(3, 2))));
    assert!(matches!(regression_metrics(&[0.1, 0.2], &[1.0, 1.0]), Err(CoreError::ZeroVariance)));
    assert!(matches!(regression_metrics(&[0.1], &[1.0, 2.0]), Err(CoreError::LengthMismatch(1, 2))));
}

#[test]
fn report_serializations() {
    let r = classification_metrics(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
    assert_eq!(r.to_csv(), "metric,value\nauc,1\naupr,1\nkappa,1\nf1,1\n");
    assert!(r.to_kv().contains("threshold = 0.5\n"));
    assert_eq!(r.n(), 2);
}

#[test]
fn summarize_mean_and_std() {
    let a = regression_metrics(&[1.0, 2.0], &[1.0, 3.0]).unwrap();
    let b = regression_metrics(&[1.0, 3.0], &[1.0, 3.0]).unwrap();
    let s = summarize(&[a, b]);
    assert_eq!(s[0].0, "rmse");
    assert!(close(s[0].1, 0.5f64.sqrt() / 2.0));
    assert!(close(s[0].2, 0.5f64.sqrt() / 2.0));
}

fn parse_list(s: &str) -> Vec<f64> {
    s.split_whitespace().map(|x| x.parse().unwrap()).collect()
}

#[test]
fn matches_sklearn_reference() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/metric_cases.csv");
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let scores = parse_list(&rec[2]);
        let targets = parse_list(&rec[3]);
        let expected: Vec<f64> = (4..8).map(|k| rec[k].parse().unwrap()).collect();
        let report = if &rec[1] == "classification" {
            let labels: Vec<u8> = targets.iter().map(|&t| t as u8).collect();
            classification_metrics(&scores, &labels, 0.5).unwrap()
        } else {
            regression_metrics(&scores, &targets).unwrap()
        };
        for ((name, got), want) in report.metrics().into_iter().zip(expected) {
            assert!(close(got, want), "case {} {name}: {got} vs {want}", &rec[0]);
        }
        n += 1;
    }
    assert_eq!(n, 70);
}

fn labelled(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    prop::collection::vec((0u8..20, 0u8..2), 2..max)
        .prop_map(|v| (v.iter().map(|(s, _)| *s as f64 / 20.0).collect::<Vec<_>>(), v.iter().map(|(_, l)| *l).collect::<Vec<_>>()))
        .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
}

proptest! {
    #[test]
    fn auc_invariant_under_monotone_transform((s, l) in labelled(30)) {
        let a = roc_auc(&s, &l).unwrap();
        let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
        prop_assert!((a - roc_auc(&t, &l).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_label_flip((s, l) in labelled(30)) {
        let a = roc_auc(&s, &l).unwrap();
        let fs: Vec<f64> = s.iter().map(|x| 1.0 - x).collect();
        let fl: Vec<u8> = l.iter().map(|x| 1 - x).collect();
        prop_assert!((a - roc_auc(&fs, &fl).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn classification_ranges((s, l) in labelled(30)) {
        let m = classification_metrics(&s, &l, 0.5).unwrap().metrics();
        prop_assert!((0.0..=1.0).contains(&m[0].1));
        prop_assert!((0.0..=1.0).contains(&m[1].1));
        prop_assert!((-1.0..=1.0).contains(&m[2].1));
        prop_assert!((0.0..=1.0).contains(&m[3].1));
    }

    #[test]
    fn rmse_bounds_mae_and_is_translation_invariant(
        v in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..25),
        shift in -100.0f64..100.0,
    ) {
        let p: Vec<f64> = v.iter().map(|x| x.0).collect();
        let t: Vec<f64> = v.iter().map(|x| x.1).collect();
        prop_assume!(t.iter().any(|&x| (x - t[0]).abs() > 1e-6));
        let m = regression_metrics(&p, &t).unwrap().metrics();
        prop_assert!(m[0].1 >= m[1].1 - 1e-12);
        prop_assert!((-1.0..=1.0).contains(&m[2].1));
        let ps: Vec<f64> = p.iter().map(|x| x + shift).collect();
        let ts: Vec<f64> = t.iter().map(|x| x + shift).collect();
        let ms = regression_metrics(&ps, &ts).unwrap().metrics();
        prop_assert!((m[0].1 - ms[0].1).abs() < 1e-9);
        prop_assert!((m[1].1 - ms[1].1).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictor_kappa_one((s, l) in labelled(30)) {
        let p: Vec<f64> = l.iter().map(|&x| x as f64).collect();
        let _ = s;
        prop_assert_eq!(kappa_from_confusion(confusion(&p, &l, 0.5)), 1.0);
    }
}
