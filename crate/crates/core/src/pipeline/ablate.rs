//! Ablation sweeps. Every row trains and evaluates under the run's shared
//! seed; pre-trained backbones are reused across rows with the same model.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{distill_clips, score, teacher_targets, train_autoencoder, train_student, RunConfig};
use crate::distill::{LossSwitches, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::model::{Autoencoder, FfnKind};
use crate::synthvid::Dataset;
use crate::teachers::TeacherSpec;

pub const AXES: [&str; 6] = ["losses", "teachers", "alpha", "heads", "frames", "ffn"];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub axis: String,
    pub config: String,
    pub micro_auc: f64,
    pub macro_auc: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("axis,config,micro_auc,macro_auc\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.axis, r.config, r.micro_auc, r.macro_auc).unwrap();
    }
    out
}

pub fn check_axes(axes: &[String]) -> Result<()> {
    match axes.iter().find(|a| !AXES.contains(&a.as_str())) {
        Some(a) => Err(Error::UnknownAxis(a.clone())),
        None => Ok(()),
    }
}

#[derive(Clone, Debug)]
enum Plan {
    /// Score the pre-trained autoencoder by reconstruction error.
    Reconstruction,
    Distill(Vec<TeacherSpec>),
}

struct Variant {
    label: String,
    cfg: RunConfig,
    plan: Plan,
}

fn switches(label: &str) -> LossSwitches {
    let parts: Vec<&str> = label.split('+').collect();
    LossSwitches {
        ae: parts.contains(&"AE"),
        kd: parts.contains(&"KD"),
        akd: parts.contains(&"AKD"),
    }
}

fn res_label(res: &[[usize; 2]]) -> String {
    res.iter().map(|[h, w]| format!("{h}x{w}")).collect::<Vec<_>>().join("+")
}

fn variants(base: &RunConfig, axis: &str) -> Vec<Variant> {
    let all = Plan::Distill(base.teachers.clone());
    let with = |label: String, f: &dyn Fn(&mut RunConfig)| {
        let mut cfg = base.clone();
        f(&mut cfg);
        Variant {
            label,
            cfg,
            plan: all.clone(),
        }
    };
    match axis {
        "losses" => ["AE", "KD", "AKD", "AE+KD", "AE+AKD", "KD+AKD", "AE+KD+AKD"]
            .into_iter()
            .map(|label| {
                let mut v = with(label.into(), &|c| c.train.losses = switches(label));
                if label == "AE" {
                    v.plan = Plan::Reconstruction;
                }
                v
            })
            .collect(),
        "teachers" => {
            let mut out: Vec<Variant> = base
                .teachers
                .iter()
                .map(|t| Variant {
                    label: t.name().to_string(),
                    cfg: RunConfig {
                        train: TrainConfig {
                            lambda: Vec::new(),
                            ..base.train.clone()
                        },
                        ..base.clone()
                    },
                    plan: Plan::Distill(vec![t.clone()]),
                })
                .collect();
            if base.teachers.len() > 1 {
                let label = base.teachers.iter().map(|t| t.name()).collect::<Vec<_>>().join("+");
                out.push(with(label, &|_| {}));
            }
            out
        }
        "alpha" => (0..=7)
            .map(|i| {
                let alpha = i as f64 / 10.0;
                with(format!("{alpha}"), &|c| c.train.alpha = alpha)
            })
            .collect(),
        "heads" => [vec![[1, 1]], vec![[1, 1], [4, 4]], vec![[1, 1], [4, 4], [16, 16]], vec![[4, 4], [16, 16]]]
            .into_iter()
            .map(|res| with(res_label(&res), &|c| c.model.head_resolutions = res.clone()))
            .collect(),
        "frames" => [1, 3, 5]
            .into_iter()
            .map(|n| with(format!("{n}"), &|c| c.model.input_frames = n))
            .collect(),
        "ffn" => [("pointwise", FfnKind::Pointwise), ("dense", FfnKind::Dense)]
            .into_iter()
            .map(|(label, kind)| with(label.into(), &|c| c.model.ffn_kind = kind))
            .collect(),
        _ => Vec::new(),
    }
}

/// Key identifying a pre-training run: the model plus the fields of the
/// training config that pre-training reads.
fn pretrain_key(cfg: &RunConfig) -> String {
    let t = &cfg.train;
    let relevant = TrainConfig {
        pretrain_epochs: t.pretrain_epochs,
        batch_size: t.batch_size,
        lr: t.lr,
        lr_schedule: t.lr_schedule,
        weight_decay: t.weight_decay,
        t: t.t,
        seed: t.seed,
        max_samples_per_epoch: t.max_samples_per_epoch,
        ..TrainConfig::default()
    };
    serde_json::to_string(&(&cfg.model, relevant)).expect("config serializes")
}

pub fn run_ablation(base: &RunConfig, ds: &Dataset, axes: &[String]) -> Result<Vec<AblationRow>> {
    check_axes(axes)?;
    let clips = distill_clips(ds);
    let mut pretrained: HashMap<String, Autoencoder<f32>> = HashMap::new();
    let mut rows = Vec::new();
    for axis in axes {
        for v in variants(base, axis) {
            v.cfg.validate()?;
            let needs_ae = matches!(v.plan, Plan::Reconstruction) || v.cfg.train.losses.ae;
            let key = pretrain_key(&v.cfg);
            if needs_ae && !pretrained.contains_key(&key) {
                let (trainer, _) = train_autoencoder(&v.cfg, ds)?;
                pretrained.insert(key.clone(), trainer.model);
            }
            let series = match &v.plan {
                Plan::Reconstruction => score::score_autoencoder(&pretrained[&key], &ds.test, v.cfg.train.t)?,
                Plan::Distill(teachers) => {
                    let targets = teacher_targets(&v.cfg, teachers, &clips)?;
                    let backbone = v.cfg.train.losses.ae.then(|| &pretrained[&key].store);
                    let (trainer, _) = train_student(&v.cfg, &clips, &targets, backbone)?;
                    score::score_student(&trainer.student, &ds.test, v.cfg.train.t)?
                }
            };
            let report = evaluate(&series)?;
            rows.push(AblationRow {
                axis: axis.clone(),
                config: v.label,
                micro_auc: report.micro.auc,
                macro_auc: report.macro_.auc,
            });
        }
    }
    Ok(rows)
}
