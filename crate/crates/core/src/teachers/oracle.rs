//! Synthetic teacher built from ground-truth masks: blobs dropped at
//! `miss_rate`, box-blurred, perturbed with Gaussian noise and clamped.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Provenance, Teacher, TeacherOutput};
use crate::error::{Error, Result};
use crate::rng;
use crate::synthvid::Clip;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleTeacherConfig {
    pub noise_std: f64,
    pub blur_radius: usize,
    pub miss_rate: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct OracleTeacher {
    name: String,
    cfg: OracleTeacherConfig,
}

/// 4-connected components of the non-zero pixels, as a label image with
/// 0 for background and 1.. for blobs.
fn components(mask: &[f32], h: usize, w: usize) -> (Vec<usize>, usize) {
    let mut label = vec![0usize; h * w];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if mask[start] <= 0.0 || label[start] != 0 {
            continue;
        }
        count += 1;
        label[start] = count;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if mask[q] > 0.0 && label[q] == 0 {
                    label[q] = count;
                    stack.push(q);
                }
            };
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
        }
    }
    (label, count)
}

fn box_blur(src: &[f32], h: usize, w: usize, r: usize) -> Vec<f32> {
    if r == 0 {
        return src.to_vec();
    }
    let pass = |src: &[f32], along_x: bool| -> Vec<f32> {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (c, len) = if along_x { (x, w) } else { (y, h) };
                let (lo, hi) = (c.saturating_sub(r), (c + r).min(len - 1));
                let mut acc = 0.0;
                for k in lo..=hi {
                    acc += if along_x { src[y * w + k] } else { src[k * w + x] };
                }
                out[y * w + x] = acc / (hi - lo + 1) as f32;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

impl OracleTeacher {
    pub fn new(name: &str, cfg: OracleTeacherConfig) -> Result<Self> {
        if !(cfg.noise_std >= 0.0) || !(0.0..=1.0).contains(&cfg.miss_rate) {
            return Err(Error::Config(format!(
                "oracle teacher {name}: noise_std must be >= 0 and miss_rate in [0, 1]"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            cfg,
        })
    }

    pub fn config(&self) -> &OracleTeacherConfig {
        &self.cfg
    }

    /// Map for one `[h, w]` ground-truth mask; `key` identifies the frame so
    /// the perturbation is reproducible.
    pub fn perturb(&self, mask: &Tensor<f32>, key: u64) -> Tensor<f32> {
        let (h, w) = (mask.shape()[0], mask.shape()[1]);
        let (labels, count) = components(mask.data(), h, w);
        let mut drop_rng = rng::derive(self.cfg.seed, rng::mix(key, 1));
        let dropped: Vec<bool> = (0..count).map(|_| drop_rng.random_bool(self.cfg.miss_rate)).collect();
        let kept: Vec<f32> = mask
            .data()
            .iter()
            .zip(&labels)
            .map(|(&v, &l)| if l > 0 && dropped[l - 1] { 0.0 } else { v })
            .collect();
        let mut out = box_blur(&kept, h, w, self.cfg.blur_radius);
        if self.cfg.noise_std > 0.0 {
            let mut noise_rng = rng::derive(self.cfg.seed, rng::mix(key, 2));
            let normal = Normal::new(0.0, self.cfg.noise_std).expect("validated std");
            for v in &mut out {
                *v += normal.sample(&mut noise_rng) as f32;
            }
        }
        for v in &mut out {
            *v = v.clamp(0.0, 1.0);
        }
        Tensor::new(&[h, w], out).expect("mask shape")
    }
}

impl Teacher for OracleTeacher {
    fn name(&self) -> &str {
        &self.name
    }

    fn infer(&self, clip: &Clip, frame_index: usize) -> Result<TeacherOutput> {
        let key = rng::mix(rng::label(&clip.video_id), frame_index as u64);
        Ok(TeacherOutput {
            full_map: self.perturb(&clip.mask_tensor(frame_index), key),
            provenance: Provenance::Oracle,
        })
    }
}
