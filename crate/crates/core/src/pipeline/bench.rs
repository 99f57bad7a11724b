//! Eval-mode throughput measurement.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use super::config::{BenchConfig, BenchVariant};
use crate::distill::{gather_input, Sample};
use crate::error::{Error, Result};
use crate::metrics::frame_score;
use crate::model::{FfnKind, ModelConfig, StudentModel};
use crate::nn::ParamStore;
use crate::rng;
use crate::synthvid::{build_scene, render_clip, Clip, SceneConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub variant: BenchVariant,
    pub replicas: usize,
    pub batch_size: usize,
    pub frames: usize,
    /// End-to-end wall time of the measured frames.
    pub wall_time: f64,
    /// `frames / wall_time`.
    pub fps: f64,
    /// Frames per second of model forward time alone.
    pub model_fps: f64,
    /// Mean per-frame milliseconds for input assembly, forward and scoring.
    pub preprocess_ms: f64,
    pub forward_ms: f64,
    pub score_ms: f64,
}

impl BenchReport {
    pub fn id(&self) -> String {
        let kind = match self.variant.ffn_kind {
            FfnKind::Pointwise => "pointwise",
            FfnKind::Dense => "dense",
        };
        format!("{kind}_m{}_s{}", self.variant.m, self.variant.s)
    }
}

pub fn bench_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from(
        "variant,ffn_kind,m,s,replicas,batch_size,frames,wall_time_s,fps,model_fps,preprocess_ms,forward_ms,score_ms\n",
    );
    for r in reports {
        let kind = if r.variant.ffn_kind == FfnKind::Dense { "dense" } else { "pointwise" };
        writeln!(
            out,
            "{},{kind},{},{},{},{},{},{:.6},{:.3},{:.3},{:.4},{:.4},{:.4}",
            r.id(),
            r.variant.m,
            r.variant.s,
            r.replicas,
            r.batch_size,
            r.frames,
            r.wall_time,
            r.fps,
            r.model_fps,
            r.preprocess_ms,
            r.forward_ms,
            r.score_ms
        )
        .unwrap();
    }
    out
}

/// Pointwise and dense at the configured (m, s), then m over 3..=7.
pub fn default_variants(model: &ModelConfig) -> Vec<BenchVariant> {
    let mut v = vec![
        BenchVariant {
            ffn_kind: FfnKind::Pointwise,
            m: model.m,
            s: model.s,
        },
        BenchVariant {
            ffn_kind: FfnKind::Dense,
            m: model.m,
            s: model.s,
        },
    ];
    for m in 3..=7 {
        if m != model.m {
            v.push(BenchVariant {
                ffn_kind: FfnKind::Pointwise,
                m,
                s: model.s,
            });
        }
    }
    v
}

#[derive(Default, Clone, Copy)]
struct Timing {
    frames: usize,
    wall: Duration,
    pre: Duration,
    fwd: Duration,
    score: Duration,
}

fn run_frames(model: &StudentModel<f32>, clip: &Clip, t: usize, start: usize, frames: usize, batch: usize) -> Result<Timing> {
    let mut timing = Timing::default();
    let clips = std::slice::from_ref(clip);
    let begin = Instant::now();
    let mut done = 0;
    let mut next = start;
    while done < frames {
        let n = batch.min(frames - done);
        let samples: Vec<Sample> = (0..n)
            .map(|i| Sample {
                clip: 0,
                center: (next + i) % clip.len(),
            })
            .collect();
        let t0 = Instant::now();
        let x = gather_input(clips, &samples, model.cfg.input_frames, t)?;
        let t1 = Instant::now();
        let maps = model.predict(&x)?;
        let t2 = Instant::now();
        let mut sink = 0.0;
        for m in &maps {
            sink += frame_score(m)?;
        }
        std::hint::black_box(sink);
        let t3 = Instant::now();
        timing.pre += t1 - t0;
        timing.fwd += t2 - t1;
        timing.score += t3 - t2;
        done += n;
        next += n;
    }
    timing.wall = begin.elapsed();
    timing.frames = frames;
    Ok(timing)
}

/// One repetition, split across `replicas` threads sharing the model.
fn repetition(model: &StudentModel<f32>, clip: &Clip, t: usize, cfg: &BenchConfig) -> Result<Timing> {
    let per = cfg.measured_frames.div_ceil(cfg.replicas);
    let begin = Instant::now();
    let parts: Vec<Result<Timing>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.replicas)
            .map(|r| {
                let frames = per.min(cfg.measured_frames - (r * per).min(cfg.measured_frames));
                scope.spawn(move || run_frames(model, clip, t, r * 997, frames, cfg.batch_size))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
    });
    let mut total = Timing::default();
    for p in parts {
        let p = p?;
        total.frames += p.frames;
        total.pre += p.pre;
        total.fwd += p.fwd;
        total.score += p.score;
    }
    total.wall = begin.elapsed();
    Ok(total)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Source frames for the benchmark: one rendered clip of the scene.
pub fn bench_clip(scene: &SceneConfig, seed: u64) -> Clip {
    let mut r = rng::derive(seed, rng::label("bench"));
    let scene_state = build_scene(scene, &mut r, None, 0.0);
    render_clip("bench".into(), scene_state, scene.clip_length)
}

/// Measures one variant. `weights`, when given, is copied into the model by
/// name; the source store is only read.
pub fn bench_variant(
    base: &ModelConfig,
    variant: &BenchVariant,
    cfg: &BenchConfig,
    clip: &Clip,
    t: usize,
    seed: u64,
    weights: Option<&ParamStore<f32>>,
) -> Result<BenchReport> {
    if cfg.measured_frames == 0 || cfg.repetitions == 0 || cfg.replicas == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("bench needs positive frames, repetitions, replicas and batch size".into()));
    }
    let model_cfg = ModelConfig {
        ffn_kind: variant.ffn_kind,
        m: variant.m,
        s: variant.s,
        ..base.clone()
    };
    let mut model = StudentModel::<f32>::new(&model_cfg, seed)?;
    if let Some(w) = weights {
        model.store.load_from(w, "")?;
    }
    run_frames(&model, clip, t, 0, cfg.warmup_frames, cfg.batch_size)?;
    let mut fps = Vec::new();
    let mut reps = Vec::new();
    for _ in 0..cfg.repetitions {
        let timing = repetition(&model, clip, t, cfg)?;
        fps.push(timing.frames as f64 / timing.wall.as_secs_f64());
        reps.push(timing);
    }
    // Report the repetition whose end-to-end FPS is the median.
    let target = median(fps.clone());
    let (idx, _) = fps
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .expect("at least one repetition");
    let model_fps = median(
        reps.iter()
            .map(|r| r.frames as f64 * cfg.replicas as f64 / r.fwd.as_secs_f64())
            .collect(),
    );
    let r = reps[idx];
    let ms = |d: Duration| d.as_secs_f64() * 1e3 / r.frames as f64;
    Ok(BenchReport {
        variant: variant.clone(),
        replicas: cfg.replicas,
        batch_size: cfg.batch_size,
        frames: r.frames,
        wall_time: r.wall.as_secs_f64(),
        fps: r.frames as f64 / r.wall.as_secs_f64(),
        model_fps,
        preprocess_ms: ms(r.pre),
        forward_ms: ms(r.fwd),
        score_ms: ms(r.score),
    })
}
