//! Per-frame scores for the test split. Every frame is scored; windows near
//! clip boundaries repeat the edge frames.

use crate::distill::{gather_input, Sample};
use crate::error::Result;
use crate::metrics::{frame_score, ScoreSeries};
use crate::model::{Autoencoder, StudentModel};
use crate::synthvid::Clip;
use crate::teachers::{downsample_map, Teacher};
use crate::tensor::Tensor;

const EVAL_BATCH: usize = 32;

fn all_frames(clip_index: usize, clip: &Clip) -> Vec<Sample> {
    (0..clip.len()).map(|center| Sample { clip: clip_index, center }).collect()
}

fn per_clip<F>(clips: &[Clip], mut score_batch: F) -> Result<Vec<ScoreSeries>>
where
    F: FnMut(&[Sample]) -> Result<Vec<f64>>,
{
    clips
        .iter()
        .enumerate()
        .map(|(ci, clip)| {
            let mut scores = Vec::with_capacity(clip.len());
            for chunk in all_frames(ci, clip).chunks(EVAL_BATCH) {
                scores.extend(score_batch(chunk)?);
            }
            Ok(ScoreSeries {
                video_id: clip.video_id.clone(),
                scores,
                labels: clip.labels().to_vec(),
            })
        })
        .collect()
}

/// Mean of the per-head map maxima.
pub fn score_student(model: &StudentModel<f32>, clips: &[Clip], t: usize) -> Result<Vec<ScoreSeries>> {
    per_clip(clips, |batch| {
        let x = gather_input(clips, batch, model.cfg.input_frames, t)?;
        model.predict(&x)?.iter().map(frame_score).collect()
    })
}

/// Reconstruction error of the middle frame.
pub fn score_autoencoder(model: &Autoencoder<f32>, clips: &[Clip], t: usize) -> Result<Vec<ScoreSeries>> {
    per_clip(clips, |batch| {
        let x = gather_input(clips, batch, model.cfg.input_frames, t)?;
        let recon = model.reconstruct(&x)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(b, s)| {
                let target = clips[s.clip].frame_tensor(s.center);
                let n = target.len();
                let r = &recon.data()[b * n..(b + 1) * n];
                target.data().iter().zip(r).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum::<f64>() / n as f64
            })
            .collect())
    })
}

/// Teacher maps pooled to `resolutions`, scored like the student.
pub fn score_teacher(teacher: &dyn Teacher, clips: &[Clip], resolutions: &[[usize; 2]]) -> Result<Vec<ScoreSeries>> {
    per_clip(clips, |batch| {
        batch
            .iter()
            .map(|s| frame_score(&downsample_map(&teacher.infer(&clips[s.clip], s.center)?.full_map, resolutions)?))
            .collect()
    })
}

/// Ground-truth masks used directly as maps; the ceiling of the protocol.
pub fn score_ground_truth(clips: &[Clip]) -> Result<Vec<ScoreSeries>> {
    per_clip(clips, |batch| {
        Ok(batch
            .iter()
            .map(|s| {
                let m: Tensor<f32> = clips[s.clip].mask_tensor(s.center);
                m.max_value() as f64
            })
            .collect())
    })
}
