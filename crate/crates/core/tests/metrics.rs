mod common;

use swiftvad::metrics::{evaluate, macro_auc, micro_auc, roc_auc, ScoreSeries};
use swiftvad::Error;

#[test]
fn micro_and_macro_match_pair_counting() {
    for seed in 0..100 {
        let videos = common::random_videos(seed);
        let scores: Vec<f64> = videos.iter().flat_map(|v| v.scores.clone()).collect();
        let labels: Vec<u8> = videos.iter().flat_map(|v| v.labels.clone()).collect();
        let micro = micro_auc(&videos).unwrap().auc;
        assert!((micro - common::pair_count_auc(&scores, &labels)).abs() <= 1e-9, "seed {seed}");
        let per_video: Vec<f64> = videos.iter().map(|v| common::pair_count_auc(&v.scores, &v.labels)).collect();
        let oracle = per_video.iter().sum::<f64>() / per_video.len() as f64;
        assert!((macro_auc(&videos).unwrap().auc - oracle).abs() <= 1e-9, "seed {seed}");
    }
}

#[test]
fn separable_per_video_but_not_pooled() {
    let v = |id: &str, pos: f64, neg: f64| ScoreSeries {
        video_id: id.into(),
        scores: vec![pos, neg],
        labels: vec![1, 0],
    };
    let all = [v("v1", 0.9, 0.8), v("v2", 0.3, 0.1)];
    assert_eq!(micro_auc(&all).unwrap().auc, 0.75);
    assert_eq!(macro_auc(&all).unwrap().auc, 1.0);
}

#[test]
fn frozen_values() {
    assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap().auc, 0.75);
    assert_eq!(roc_auc(&[0.5, 0.5, 0.5], &[1, 0, 0]).unwrap().auc, 0.5);
    assert_eq!(roc_auc(&[3.0, 1.0, 2.0, 2.0], &[1, 0, 1, 0]).unwrap().auc, 0.875);
}

#[test]
fn single_class_inputs() {
    assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedAuc { .. })));
    let mixed = ScoreSeries {
        video_id: "a".into(),
        scores: vec![0.2, 0.9],
        labels: vec![0, 1],
    };
    let normal = ScoreSeries {
        video_id: "b".into(),
        scores: vec![0.95, 0.1],
        labels: vec![0, 0],
    };
    let m = macro_auc(&[mixed.clone(), normal.clone()]).unwrap();
    assert_eq!(m.auc, 1.0);
    assert_eq!(m.per_video.len(), 1);
    let report = evaluate(&[mixed, normal]).unwrap();
    assert!(report.to_csv().contains("b,excluded,2,0"));
    assert_eq!(report.micro.auc, 2.0 / 3.0);
}
