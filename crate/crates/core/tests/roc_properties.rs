use num_rational::Ratio;
use proptest::prelude::*;
use scorpid_core::eval::{sweep_thresholds, EvalScope};
use scorpid_core::infer::ReferenceBackend;
use scorpid_core::metrics::roc_from_scores;
use scorpid_core::synth::DetectionFixture;
use scorpid_core::Exact;

const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Probability that a random positive outscores a random negative, ties half.
fn mann_whitney(samples: &[(f64, bool)]) -> Option<Exact> {
    let pos: Vec<f64> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
    let neg: Vec<f64> = samples.iter().filter(|s| !s.1).map(|s| s.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut twice = 0i64;
    for p in &pos {
        for n in &neg {
            twice += if p > n {
                2
            } else if p == n {
                1
            } else {
                0
            };
        }
    }
    Some(Ratio::new(twice, 2 * (pos.len() * neg.len()) as i64))
}

/// Every multiset of (level, label) pairs of size at most `max`.
fn multisets(max: usize) -> Vec<Vec<(f64, bool)>> {
    let kinds: Vec<(f64, bool)> = LEVELS.iter().flat_map(|&s| [(s, true), (s, false)]).collect();
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<(usize, Vec<(f64, bool)>)> = vec![(0, Vec::new())];
    for _ in 0..max {
        let mut next = Vec::new();
        for (start, set) in &frontier {
            for (k, kind) in kinds.iter().enumerate().skip(*start) {
                let mut grown = set.clone();
                grown.push(*kind);
                out.push(grown.clone());
                next.push((k, grown));
            }
        }
        frontier = next;
    }
    out
}

#[test]
fn auc_equals_mann_whitney_on_all_small_multisets() {
    let all = multisets(8);
    // Multisets of size <= 8 over 10 kinds: C(18, 8).
    assert_eq!(all.len(), 43_758);
    let mut checked = 0;
    for set in &all {
        match (mann_whitney(set), roc_from_scores::<Exact>(set)) {
            (Some(mw), Ok(curve)) => {
                assert_eq!(curve.auc(), mw, "{set:?}");
                checked += 1;
            }
            (None, Err(_)) => {}
            (mw, curve) => panic!("{set:?}: {mw:?} vs {curve:?}"),
        }
    }
    // Minus the single-class ones, C(13, 8) per class, sharing the empty set.
    assert_eq!(checked, 43_758 - 2 * 1_287 + 1);
}

#[test]
fn perfect_and_tied_fixtures() {
    let perfect = [(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
    assert_eq!(roc_from_scores::<Exact>(&perfect).unwrap().auc(), Ratio::from_integer(1));
    let tied = [(0.5, true), (0.5, true), (0.5, false), (0.5, false), (0.5, false)];
    assert_eq!(roc_from_scores::<Exact>(&tied).unwrap().auc(), Ratio::new(1, 2));
    let inverted = [(0.1, true), (0.9, false)];
    assert_eq!(roc_from_scores::<f64>(&inverted).unwrap().auc(), 0.0);
}

proptest! {
    #[test]
    fn auc_matches_mann_whitney_for_random_scores(
        samples in prop::collection::vec((0u32..1000, any::<bool>()), 2..60)
    ) {
        let samples: Vec<(f64, bool)> = samples.into_iter().map(|(s, l)| (f64::from(s) / 1000.0, l)).collect();
        if let Some(mw) = mann_whitney(&samples) {
            let exact = roc_from_scores::<Exact>(&samples).unwrap();
            prop_assert_eq!(exact.auc(), mw);
            let float = roc_from_scores::<f64>(&samples).unwrap();
            let mw_f = *mw.numer() as f64 / *mw.denom() as f64;
            prop_assert!((float.auc() - mw_f).abs() < 1e-12);
            let points = float.points();
            prop_assert!(points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
            prop_assert_eq!((points[0].fpr, points[0].tpr), (0.0, 0.0));
            prop_assert_eq!((points.last().unwrap().fpr, points.last().unwrap().tpr), (1.0, 1.0));
        }
    }
}

fn reference_auc(positives: usize, negatives: usize, eps: f64, seed: u64) -> f64 {
    let corpus = DetectionFixture::new(positives, negatives).with_seed(seed).build();
    let backend = ReferenceBackend::new(corpus.clone(), eps, seed).unwrap();
    let dets: Vec<_> = corpus.records().iter().flat_map(|r| backend.detect_record(r)).collect();
    sweep_thresholds::<f64>(&corpus, &dets, EvalScope::All).unwrap().curve.auc()
}

#[test]
fn reference_auc_is_non_increasing_in_noise() {
    for seed in [1, 2, 3] {
        let aucs: Vec<f64> = [0.0, 0.25, 0.5, 1.0].iter().map(|&e| reference_auc(100, 100, e, seed)).collect();
        assert_eq!(aucs[0], 1.0);
        assert!(aucs.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {aucs:?}");
    }
}

#[test]
fn full_noise_auc_tracks_the_closed_form() {
    // Positives score max(U1, maybe U2), negatives maybe U2 with probability
    // 1/2 each: AUC = 1/2 + 1/2 * (1/2 * 1/2 + 1/2 * 2/3) = 19/24.
    let auc = reference_auc(2000, 2000, 1.0, 9);
    assert!((auc - 19.0 / 24.0).abs() < 0.02, "{auc}");
}
