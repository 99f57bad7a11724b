//! Frame scores and the micro/macro ROC-AUC protocol.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::AnomalyMapSet;
use crate::tensor::Element;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSeries {
    pub video_id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocResult {
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Mean over heads of each map's maximum.
pub fn frame_score<T: Element>(maps: &AnomalyMapSet<T>) -> Result<f64> {
    if maps.maps.is_empty() {
        return Err(Error::shape("frame_score", "empty map set"));
    }
    Ok(maps.maps.iter().map(|m| m.max_value().as_f64()).sum::<f64>() / maps.maps.len() as f64)
}

/// Mann–Whitney AUC with ties credited 1/2.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            op: "roc_auc",
            axis: "frames",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "frame scores".into(),
        });
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_run = order[i..=j].iter().filter(|&&k| labels[k] != 0).count();
        rank_sum += avg * pos_in_run as f64;
        i = j + 1;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(RocResult {
        auc: u / (p * negatives as f64),
        positives,
        negatives,
    })
}

pub fn series_auc(s: &ScoreSeries) -> Result<RocResult> {
    roc_auc(&s.scores, &s.labels)
}

/// One AUC over all frames of all videos.
pub fn micro_auc(all: &[ScoreSeries]) -> Result<RocResult> {
    let scores: Vec<f64> = all.iter().flat_map(|s| s.scores.iter().copied()).collect();
    let labels: Vec<u8> = all.iter().flat_map(|s| s.labels.iter().copied()).collect();
    roc_auc(&scores, &labels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacroResult {
    pub auc: f64,
    pub per_video: Vec<(String, RocResult)>,
    /// Videos with a single class, left out of the mean.
    pub excluded: Vec<String>,
}

pub fn macro_auc(all: &[ScoreSeries]) -> Result<MacroResult> {
    let mut per_video = Vec::new();
    let mut excluded = Vec::new();
    for s in all {
        match series_auc(s) {
            Ok(r) => per_video.push((s.video_id.clone(), r)),
            Err(Error::UndefinedAuc { .. }) => excluded.push(s.video_id.clone()),
            Err(e) => return Err(e),
        }
    }
    if per_video.is_empty() {
        return Err(Error::UndefinedAuc {
            positives: all.iter().map(|s| s.labels.iter().filter(|&&l| l != 0).count()).sum(),
            negatives: all.iter().map(|s| s.labels.iter().filter(|&&l| l == 0).count()).sum(),
        });
    }
    let auc = per_video.iter().map(|(_, r)| r.auc).sum::<f64>() / per_video.len() as f64;
    Ok(MacroResult {
        auc,
        per_video,
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub micro: RocResult,
    pub macro_: MacroResult,
    pub frames: Vec<(String, usize, usize)>,
}

pub fn evaluate(all: &[ScoreSeries]) -> Result<EvalReport> {
    Ok(EvalReport {
        micro: micro_auc(all)?,
        macro_: macro_auc(all)?,
        frames: all
            .iter()
            .map(|s| {
                let pos = s.labels.iter().filter(|&&l| l != 0).count();
                (s.video_id.clone(), s.scores.len(), pos)
            })
            .collect(),
    })
}

impl EvalReport {
    /// `video_id,auc,frames,positives` rows (`excluded` for single-class
    /// videos), then `micro,<v>` and `macro,<v>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("video_id,auc,frames,positives\n");
        for (id, frames, pos) in &self.frames {
            match self.macro_.per_video.iter().find(|(v, _)| v == id) {
                Some((_, r)) => writeln!(out, "{id},{},{frames},{pos}", r.auc).unwrap(),
                None => writeln!(out, "{id},excluded,{frames},{pos}").unwrap(),
            }
        }
        writeln!(out, "micro,{}", self.micro.auc).unwrap();
        writeln!(out, "macro,{}", self.macro_.auc).unwrap();
        out
    }
}

/// `video_id,frame,score,label` rows.
pub fn frame_scores_csv(all: &[ScoreSeries]) -> String {
    let mut out = String::from("video_id,frame,score,label\n");
    for s in all {
        for (i, (score, label)) in s.scores.iter().zip(&s.labels).enumerate() {
            writeln!(out, "{},{i},{score},{label}", s.video_id).unwrap();
        }
    }
    out
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = String::from("frame_index,label\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(out, "{i},{l}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `frame_index,label` rows; indices must run 0, 1, 2, ...
pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, m: &str| Error::Format {
        path: path.display().to_string(),
        message: format!("line {line}: {m}"),
    };
    let mut labels = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("frame_index")) {
            continue;
        }
        let (idx, label) = line.split_once(',').ok_or_else(|| bad(n + 1, "expected two fields"))?;
        let idx: usize = idx.trim().parse().map_err(|_| bad(n + 1, "bad frame index"))?;
        if idx != labels.len() {
            return Err(bad(n + 1, "frame indices must be consecutive from 0"));
        }
        match label.trim() {
            "0" => labels.push(0),
            "1" => labels.push(1),
            _ => return Err(bad(n + 1, "label must be 0 or 1")),
        }
    }
    Ok(labels)
}
