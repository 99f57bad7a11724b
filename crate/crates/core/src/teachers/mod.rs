//! Teachers produce full-resolution anomaly maps; `downsample_map` turns them
//! into per-head targets.

mod amap;
mod oracle;

pub use amap::{amap_path, decode_amap, encode_amap, load_precomputed, store_precomputed};
pub use oracle::{OracleTeacher, OracleTeacherConfig};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AnomalyMapSet;
use crate::synthvid::Clip;
use crate::tensor::{Element, Graph, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Oracle,
    Precomputed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherOutput {
    /// `[h, w]`, same resolution as the frame.
    pub full_map: Tensor<f32>,
    pub provenance: Provenance,
}

/// Frozen anomaly detector. Implementations are pure functions of the clip
/// and frame index.
pub trait Teacher: Send + Sync {
    fn name(&self) -> &str;
    fn infer(&self, clip: &Clip, frame_index: usize) -> Result<TeacherOutput>;
}

/// Reads maps another tool wrote in the AMAP layout.
#[derive(Clone, Debug)]
pub struct PrecomputedTeacher {
    pub name: String,
    pub dir: PathBuf,
}

impl Teacher for PrecomputedTeacher {
    fn name(&self) -> &str {
        &self.name
    }

    fn infer(&self, clip: &Clip, frame_index: usize) -> Result<TeacherOutput> {
        let out = load_precomputed(&self.dir, &clip.video_id, frame_index)?;
        if out.full_map.shape() != [clip.height, clip.width] {
            return Err(Error::shape(
                "precomputed teacher",
                format!(
                    "{} frame {frame_index}: map {:?} does not match frame {}x{}",
                    clip.video_id,
                    out.full_map.shape(),
                    clip.height,
                    clip.width
                ),
            ));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TeacherSpec {
    Oracle {
        name: String,
        #[serde(default = "default_noise")]
        noise_std: f64,
        #[serde(default = "default_blur")]
        blur_radius: usize,
        #[serde(default = "default_miss")]
        miss_rate: f64,
        seed: u64,
    },
    Precomputed {
        name: String,
        dir: PathBuf,
    },
}

fn default_noise() -> f64 {
    0.1
}
fn default_blur() -> usize {
    1
}
fn default_miss() -> f64 {
    0.1
}

impl TeacherSpec {
    pub fn name(&self) -> &str {
        match self {
            TeacherSpec::Oracle { name, .. } | TeacherSpec::Precomputed { name, .. } => name,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Teacher>> {
        Ok(match self {
            TeacherSpec::Oracle {
                name,
                noise_std,
                blur_radius,
                miss_rate,
                seed,
            } => Box::new(OracleTeacher::new(
                name,
                OracleTeacherConfig {
                    noise_std: *noise_std,
                    blur_radius: *blur_radius,
                    miss_rate: *miss_rate,
                    seed: *seed,
                },
            )?),
            TeacherSpec::Precomputed { name, dir } => Box::new(PrecomputedTeacher {
                name: name.clone(),
                dir: dir.clone(),
            }),
        })
    }
}

/// Adaptive max pooling of an `[h, w]` map to each resolution.
pub fn downsample_map<T: Element>(full_map: &Tensor<T>, resolutions: &[[usize; 2]]) -> Result<AnomalyMapSet<T>> {
    let &[h, w] = full_map.shape() else {
        return Err(Error::shape("downsample_map", format!("expected [h, w], got {:?}", full_map.shape())));
    };
    let g = Graph::new();
    let x = g.constant(full_map.reshaped(&[1, 1, h, w])?);
    let maps = resolutions
        .iter()
        .map(|&[rh, rw]| {
            let y = x.adaptive_max_pool2d(rh, rw)?;
            y.value().reshaped(&[rh, rw])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnomalyMapSet { maps })
}

/// Affine rescaling of teacher maps to [0, 1] using bounds fitted on the
/// distillation split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapNormalizer {
    pub min: f32,
    pub max: f32,
}

impl MapNormalizer {
    pub fn fit<'a>(maps: impl IntoIterator<Item = &'a Tensor<f32>>) -> Self {
        let (mut min, mut max) = (f32::INFINITY, f32::NEG_INFINITY);
        for m in maps {
            for &v in m.data() {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if !min.is_finite() {
            (min, max) = (0.0, 1.0);
        }
        Self { min, max }
    }

    pub fn apply(&self, map: &Tensor<f32>) -> Tensor<f32> {
        let span = self.max - self.min;
        if span <= 0.0 {
            return Tensor::zeros(map.shape());
        }
        map.map(|v| ((v - self.min) / span).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn pooled_maxima() {
        let mut m = Tensor::<f32>::zeros(&[64, 64]);
        m.data_mut()[37 * 64 + 5] = 1.0;
        let set = downsample_map(&m, &[[1, 1], [4, 4], [16, 16]]).unwrap();
        for map in &set.maps {
            assert_eq!(map.max_value(), 1.0);
        }
        assert!(downsample_map(&m, &[[65, 1]]).is_err());
    }

    #[test]
    fn matches_region_loop() {
        let mut r = crate::rng::seeded(4);
        let m = Tensor::<f64>::new(&[10, 7], (0..70).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let set = downsample_map(&m, &[[4, 4]]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let (y0, y1) = (i * 10 / 4, (i + 1) * 10 / 4);
                let (x0, x1) = (j * 7 / 4, (j + 1) * 7 / 4);
                let mut best = f64::NEG_INFINITY;
                for y in y0..y1 {
                    for x in x0..x1 {
                        best = best.max(m.data()[y * 7 + x]);
                    }
                }
                assert_eq!(set.maps[0].data()[i * 4 + j], best);
            }
        }
    }

    #[test]
    fn normalizer_maps_to_unit_range() {
        let a = Tensor::new(&[1, 2], vec![2.0f32, 6.0]).unwrap();
        let n = MapNormalizer::fit([&a]);
        assert_eq!(n.apply(&a).data(), &[0.0, 1.0]);
        let flat = MapNormalizer { min: 1.0, max: 1.0 };
        assert_eq!(flat.apply(&a).data(), &[0.0, 0.0]);
    }

    #[test]
    fn spec_json() {
        let s: TeacherSpec = serde_json::from_str(r#"{"kind":"oracle","name":"t1","seed":3}"#).unwrap();
        assert_eq!(s.name(), "t1");
        assert!(serde_json::from_str::<TeacherSpec>(r#"{"kind":"oracle","name":"t","seed":1,"x":0}"#).is_err());
    }
}
