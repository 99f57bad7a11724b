//! Synthetic surveillance-style clips: textured static backgrounds with
//! bouncing box sprites. Anomalous sprites move too fast, are too large or
//! have an unseen shape, and come with pixel masks.

mod io;

pub use io::{load_dataset, read_pgm, write_dataset, write_pgm};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    FastMover,
    Oversized,
    NovelShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// (height, width)
    pub resolution: [usize; 2],
    pub clip_length: usize,
    pub train_clips: usize,
    /// Mixed clips the teachers annotate for distillation.
    pub distill_clips: usize,
    pub test_clips: usize,
    /// Inclusive range of normal sprites per clip.
    pub sprites: [usize; 2],
    /// Pixels per frame.
    pub normal_speed: [f64; 2],
    pub normal_size: [usize; 2],
    pub fast_speed: [f64; 2],
    pub oversized_size: [usize; 2],
    pub anomaly_types: Vec<AnomalyKind>,
    /// Fraction of anomalous frames in each test clip.
    pub anomaly_rate: f64,
    pub distill_anomaly_rate: f64,
    /// Inclusive range of anomalous sprites per event.
    pub anomalies_per_event: [usize; 2],
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            resolution: [64, 64],
            clip_length: 60,
            train_clips: 50,
            distill_clips: 100,
            test_clips: 20,
            sprites: [2, 4],
            normal_speed: [0.5, 1.5],
            normal_size: [4, 7],
            fast_speed: [3.5, 5.0],
            oversized_size: [12, 16],
            anomaly_types: vec![AnomalyKind::FastMover, AnomalyKind::Oversized, AnomalyKind::NovelShape],
            anomaly_rate: 0.3,
            distill_anomaly_rate: 0.3,
            anomalies_per_event: [1, 2],
            seed: 7,
        }
    }
}

fn ordered<T: PartialOrd + std::fmt::Debug>(name: &str, r: &[T; 2]) -> Result<()> {
    if r[0] > r[1] {
        return Err(Error::Config(format!("{name} range {r:?} is reversed")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.resolution;
        if h < 8 || w < 8 {
            return Err(Error::Config("scene resolution must be at least 8x8".into()));
        }
        if self.clip_length < 3 {
            return Err(Error::Config("clip_length must be at least 3".into()));
        }
        ordered("sprites", &self.sprites)?;
        ordered("normal_speed", &self.normal_speed)?;
        ordered("normal_size", &self.normal_size)?;
        ordered("fast_speed", &self.fast_speed)?;
        ordered("oversized_size", &self.oversized_size)?;
        ordered("anomalies_per_event", &self.anomalies_per_event)?;
        if self.normal_speed[1] >= self.fast_speed[0] {
            return Err(Error::Config("fast_speed must lie strictly above normal_speed".into()));
        }
        if self.normal_size[1] >= self.oversized_size[0] {
            return Err(Error::Config("oversized_size must lie strictly above normal_size".into()));
        }
        if self.normal_size[0] == 0 || self.oversized_size[1] > h.min(w) {
            return Err(Error::Config("sprite sizes must be positive and fit the frame".into()));
        }
        if self.normal_speed[0] < 0.0 {
            return Err(Error::Config("speeds must be non-negative".into()));
        }
        for (name, rate) in [("anomaly_rate", self.anomaly_rate), ("distill_anomaly_rate", self.distill_anomaly_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.anomaly_types.is_empty() && (self.anomaly_rate > 0.0 || self.distill_anomaly_rate > 0.0) {
            return Err(Error::Config("anomaly_types is empty but an anomaly rate is positive".into()));
        }
        if self.anomalies_per_event[0] == 0 {
            return Err(Error::Config("anomalies_per_event must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Box,
    Cross,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub width: usize,
    pub height: usize,
    pub shape: Shape,
    pub intensity: f64,
    pub anomalous: bool,
    /// Frames `[start, end)` the sprite is on screen.
    pub start: usize,
    pub end: usize,
}

impl Sprite {
    fn visible(&self, frame: usize) -> bool {
        (self.start..self.end).contains(&frame)
    }

    /// Advances one frame, bouncing off the borders.
    fn step(&mut self, h: usize, w: usize) {
        fn bounce(p: &mut f64, v: &mut f64, extent: usize, size: usize) {
            let max = (extent - size) as f64;
            *p += *v;
            for _ in 0..4 {
                if *p < 0.0 {
                    *p = -*p;
                    *v = -*v;
                } else if *p > max {
                    *p = 2.0 * max - *p;
                    *v = -*v;
                } else {
                    break;
                }
            }
            *p = p.clamp(0.0, max);
        }
        bounce(&mut self.x, &mut self.vx, w, self.width);
        bounce(&mut self.y, &mut self.vy, h, self.height);
    }

    /// Pixel coordinates covered by the sprite, clipped to the frame.
    pub fn pixels(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        let (x0, y0) = (self.x.floor() as isize, self.y.floor() as isize);
        let thick = (self.width.min(self.height) / 3).max(2);
        let mut out = Vec::new();
        for dy in 0..self.height {
            for dx in 0..self.width {
                let inside = match self.shape {
                    Shape::Box => true,
                    Shape::Cross => {
                        let row = dy >= (self.height - thick) / 2 && dy < (self.height - thick) / 2 + thick;
                        let col = dx >= (self.width - thick) / 2 && dx < (self.width - thick) / 2 + thick;
                        row || col
                    }
                };
                let (px, py) = (x0 + dx as isize, y0 + dy as isize);
                if inside && px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    out.push((py as usize, px as usize));
                }
            }
        }
        out
    }
}

/// Scene contents for one clip; enough to re-render any frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub background: Vec<f64>,
    pub sprites: Vec<Sprite>,
}

/// Renders sprite state into an 8-bit frame. Anomalous sprites are drawn
/// last so they are never hidden.
pub fn render_frame(bg: &[f64], sprites: &[&Sprite], h: usize, w: usize) -> Vec<u8> {
    let mut img = bg.to_vec();
    let mut order: Vec<&&Sprite> = sprites.iter().collect();
    order.sort_by_key(|s| s.anomalous);
    for s in order {
        for (y, x) in s.pixels(h, w) {
            img[y * w + x] = s.intensity;
        }
    }
    img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Binary mask of the anomalous sprites' pixels.
pub fn gt_anomaly_map(sprites: &[&Sprite], h: usize, w: usize) -> Vec<u8> {
    let mut mask = vec![0u8; h * w];
    for s in sprites.iter().filter(|s| s.anomalous) {
        for (y, x) in s.pixels(h, w) {
            mask[y * w + x] = 1;
        }
    }
    mask
}

/// One rendered clip with frame-level ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub video_id: String,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Vec<u8>>,
    pub ground_truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<u8>,
    pub masks: Vec<Vec<u8>>,
}

impl GroundTruth {
    pub fn from_masks(masks: Vec<Vec<u8>>) -> Self {
        let labels = masks.iter().map(|m| m.iter().any(|&v| v > 0) as u8).collect();
        Self { labels, masks }
    }
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.ground_truth.labels
    }

    /// `[1, h, w]` frame in [0, 1].
    pub fn frame_tensor(&self, i: usize) -> Tensor<f32> {
        let data = self.frames[i].iter().map(|&v| v as f32 / 255.0).collect();
        Tensor::new(&[1, self.height, self.width], data).expect("frame size")
    }

    /// `[h, w]` mask with 1.0 on anomalous pixels.
    pub fn mask_tensor(&self, i: usize) -> Tensor<f32> {
        let data = self.ground_truth.masks[i].iter().map(|&v| v as f32).collect();
        Tensor::new(&[self.height, self.width], data).expect("mask size")
    }

    /// Input frame indices centred on `i` at stride `t`, clamped to the clip.
    pub fn window(&self, i: usize, frames: usize, t: usize) -> Vec<usize> {
        let half = (frames / 2) as isize;
        (-half..=half)
            .take(frames)
            .map(|o| (i as isize + o * t as isize).clamp(0, self.len() as isize - 1) as usize)
            .collect()
    }

    /// Centres whose whole window lies inside the clip.
    pub fn valid_centers(&self, frames: usize, t: usize) -> std::ops::Range<usize> {
        let reach = (frames / 2) * t;
        if self.len() <= 2 * reach {
            return 0..0;
        }
        reach..self.len() - reach
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Clip>,
    pub distill: Vec<Clip>,
    pub test: Vec<Clip>,
}

pub const SPLITS: [&str; 3] = ["train", "distill", "test"];

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[Clip]> {
        match name {
            "train" => Some(&self.train),
            "distill" => Some(&self.distill),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

fn range_f(r: &mut Rng, a: [f64; 2]) -> f64 {
    if a[0] == a[1] {
        a[0]
    } else {
        r.random_range(a[0]..=a[1])
    }
}

fn range_u(r: &mut Rng, a: [usize; 2]) -> usize {
    r.random_range(a[0]..=a[1])
}

fn background(r: &mut Rng, h: usize, w: usize) -> Vec<f64> {
    let base = r.random_range(0.15..0.3);
    let (fx, fy) = (r.random_range(0.05..0.3), r.random_range(0.05..0.3));
    let phase = r.random_range(0.0..std::f64::consts::TAU);
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            base + 0.05 * (fx * x + fy * y + phase).sin() + r.random_range(-0.02..0.02)
        })
        .collect()
}

fn sprite(r: &mut Rng, cfg: &SceneConfig, kind: Option<AnomalyKind>, start: usize, end: usize) -> Sprite {
    let [h, w] = cfg.resolution;
    let (speed, size, shape) = match kind {
        None => (cfg.normal_speed, cfg.normal_size, Shape::Box),
        Some(AnomalyKind::FastMover) => (cfg.fast_speed, cfg.normal_size, Shape::Box),
        Some(AnomalyKind::Oversized) => (cfg.normal_speed, cfg.oversized_size, Shape::Box),
        Some(AnomalyKind::NovelShape) => {
            // A thin-armed cross spanning just past the normal range; its
            // area stays close to a large normal box.
            let lo = cfg.normal_size[1] + 2;
            (cfg.normal_speed, [lo, cfg.oversized_size[0].saturating_sub(1).max(lo)], Shape::Cross)
        }
    };
    let (sh, sw) = (range_u(r, size).min(h), range_u(r, size).min(w));
    let v = range_f(r, speed);
    let angle = r.random_range(0.0..std::f64::consts::TAU);
    Sprite {
        x: r.random_range(0.0..=(w - sw) as f64),
        y: r.random_range(0.0..=(h - sh) as f64),
        vx: v * angle.cos(),
        vy: v * angle.sin(),
        width: sw,
        height: sh,
        shape,
        intensity: r.random_range(0.55..0.9),
        anomalous: kind.is_some(),
        start,
        end,
    }
}

/// Builds the scene of one clip. `kind` and `rate` describe its anomaly
/// event; `None` gives a normal-only clip.
///
/// During the event some normal sprites turn anomalous in place and revert
/// afterwards, so the number of objects on screen never changes.
pub fn build_scene(cfg: &SceneConfig, r: &mut Rng, kind: Option<AnomalyKind>, rate: f64) -> Scene {
    let [h, w] = cfg.resolution;
    let len = cfg.clip_length;
    let bg = background(r, h, w);
    let n = range_u(r, cfg.sprites);
    let mut sprites: Vec<Sprite> = (0..n).map(|_| sprite(r, cfg, None, 0, len)).collect();
    if let Some(kind) = kind {
        let event = ((rate * len as f64).round() as usize).min(len);
        if event > 0 && n > 0 {
            // Enter and exit mid-clip when there is room for it.
            let start = if event + 2 <= len { r.random_range(1..=len - event - 1) } else { len - event };
            let end = start + event;
            let count = range_u(r, cfg.anomalies_per_event).min(n);
            for i in 0..count {
                let mut moving = sprites[i].clone();
                for _ in 0..start {
                    moving.step(h, w);
                }
                sprites[i].end = start;
                let mut anomalous = sprite(r, cfg, Some(kind), start, end);
                anomalous.x = moving.x.min((w - anomalous.width) as f64);
                anomalous.y = moving.y.min((h - anomalous.height) as f64);
                anomalous.intensity = moving.intensity;
                let mut after = anomalous.clone();
                for _ in start..end {
                    after.step(h, w);
                }
                after.x = after.x.min((w - moving.width) as f64);
                after.y = after.y.min((h - moving.height) as f64);
                sprites.push(anomalous);
                if end < len {
                    sprites.push(Sprite {
                        x: after.x,
                        y: after.y,
                        start: end,
                        end: len,
                        ..moving
                    });
                }
            }
        }
    }
    Scene {
        height: h,
        width: w,
        background: bg,
        sprites,
    }
}

/// Renders every frame of a scene, advancing sprites between frames.
pub fn render_clip(video_id: String, mut scene: Scene, len: usize) -> Clip {
    let (h, w) = (scene.height, scene.width);
    let mut frames = Vec::with_capacity(len);
    let mut masks = Vec::with_capacity(len);
    for f in 0..len {
        let visible: Vec<&Sprite> = scene.sprites.iter().filter(|s| s.visible(f)).collect();
        frames.push(render_frame(&scene.background, &visible, h, w));
        masks.push(gt_anomaly_map(&visible, h, w));
        for s in &mut scene.sprites {
            if s.visible(f) {
                s.step(h, w);
            }
        }
    }
    Clip {
        video_id,
        height: h,
        width: w,
        frames,
        ground_truth: GroundTruth::from_masks(masks),
    }
}

fn gen_split(cfg: &SceneConfig, split: &str, count: usize, rate: Option<f64>) -> Vec<Clip> {
    // Anomaly kinds are balanced by cycling through a shuffled order.
    let mut order = cfg.anomaly_types.clone();
    order.shuffle(&mut rng::derive(cfg.seed, rng::label(split) ^ 0xA5));
    (0..count)
        .map(|i| {
            let mut r = rng::derive(cfg.seed, rng::mix(rng::label(split), i as u64));
            let kind = rate.filter(|&x| x > 0.0).map(|_| order[i % order.len()]);
            let scene = build_scene(cfg, &mut r, kind, rate.unwrap_or(0.0));
            render_clip(format!("{split}_{i:03}"), scene, cfg.clip_length)
        })
        .collect()
}

/// Normal-only train split, plus mixed distill and test splits.
pub fn generate_dataset(cfg: &SceneConfig) -> Result<Dataset> {
    cfg.validate()?;
    Ok(Dataset {
        train: gen_split(cfg, "train", cfg.train_clips, None),
        distill: gen_split(cfg, "distill", cfg.distill_clips, Some(cfg.distill_anomaly_rate)),
        test: gen_split(cfg, "test", cfg.test_clips, Some(cfg.anomaly_rate)),
    })
}
