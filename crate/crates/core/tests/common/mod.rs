#![allow(dead_code)]

pub mod grad;

use rand::Rng as _;
use swiftvad::distill::{LrSchedule, TrainConfig};
use swiftvad::metrics::ScoreSeries;
use swiftvad::model::ModelConfig;
use swiftvad::pipeline::RunConfig;
use swiftvad::rng;

/// O(P·N) pair count with ties credited 1/2.
pub fn pair_count_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] == 0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            wins += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

/// Random multi-video instance; scores are drawn from a small grid so ties
/// occur. Every video holds both classes.
pub fn random_videos(seed: u64) -> Vec<ScoreSeries> {
    let mut r = rng::derive(seed, rng::label("videos"));
    let videos = r.random_range(2..6);
    (0..videos)
        .map(|v| {
            let n = r.random_range(4..40);
            let mut labels: Vec<u8> = (0..n).map(|_| r.random_bool(0.3) as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            let shift = r.random_range(-0.5..0.5);
            let scores = labels
                .iter()
                .map(|&l| (r.random_range(0..20) as f64 / 20.0 + 0.3 * l as f64 + shift) * 0.5)
                .collect();
            ScoreSeries {
                video_id: format!("v{v}"),
                scores,
                labels,
            }
        })
        .collect()
}

/// Reduced student used for desk-scale training runs.
pub fn desk_model() -> ModelConfig {
    ModelConfig {
        m: 1,
        s: 1,
        d: 16,
        c: 32,
        downsample_filters: vec![8, 16, 16, 32, 32],
        ..ModelConfig::default()
    }
}

pub fn desk_config(seed: u64) -> RunConfig {
    RunConfig {
        model: desk_model(),
        train: TrainConfig {
            epochs: 10,
            pretrain_epochs: 4,
            batch_size: 16,
            lr: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            max_samples_per_epoch: Some(1500),
            seed,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    }
}

/// A run small enough for per-test pipelines: 16×16 frames, a handful of
/// short clips, one epoch per phase.
pub fn tiny_json() -> &'static str {
    r#"{
  "model": {"m": 1, "s": 1, "d": 4, "c": 8, "input_resolution": [16, 16],
            "downsample_filters": [4, 8, 8], "head_resolutions": [[1, 1], [2, 2], [4, 4]]},
  "train": {"epochs": 1, "pretrain_epochs": 1, "batch_size": 8, "lr": 0.001, "seed": 3,
            "max_samples_per_epoch": 24},
  "scene": {"resolution": [16, 16], "clip_length": 12, "train_clips": 2, "distill_clips": 2,
            "test_clips": 2, "normal_size": [2, 3], "oversized_size": [6, 8], "anomaly_rate": 0.4,
            "distill_anomaly_rate": 0.4},
  "bench": {"variants": [{"ffn_kind": "pointwise", "m": 1, "s": 1}], "warmup_frames": 2,
            "measured_frames": 4, "repetitions": 1, "use_checkpoint": true},
  "ablate": {"axes": ["alpha"]}
}"#
}
