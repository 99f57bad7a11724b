//! Config-driven subcommands shared by the binary and the FFI layer.
//!
//! Files written below `paths.root`:
//!
//! | command  | outputs                                                        |
//! |----------|----------------------------------------------------------------|
//! | gen      | `data/` (frames, labels, masks)                                |
//! | pretrain | `checkpoints/{encoder,decoder,ae_optim}.ckpt`, `reports/pretrain_loss.csv` |
//! | distill  | `checkpoints/student.ckpt`, `disc{i}.ckpt`, optimizer files, `reports/distill_loss.csv` |
//! | eval     | `reports/eval_auc.csv`, `reports/frame_scores.csv`             |
//! | bench    | `reports/bench.csv`                                            |
//! | ablate   | `reports/ablation.csv`                                         |

pub mod ablate;
pub mod bench;
pub mod config;
pub mod score;

use std::fs;
use std::path::Path;

pub use ablate::{ablation_csv, run_ablation, AblationRow, AXES};
pub use bench::{bench_csv, bench_variant, default_variants, BenchReport};
pub use config::{AblateConfig, BenchConfig, BenchVariant, EvalConfig, Paths, RunConfig, Scorer};

use crate::checkpoint;
use crate::distill::{
    build_targets, AeTrainer, DistillTrainer, LossReport, TeacherTargets, DECODER_FILE, ENCODER_FILE, STUDENT_FILE,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, frame_scores_csv, EvalReport, ScoreSeries};
use crate::model::{Autoencoder, StudentModel};
use crate::nn::ParamStore;
use crate::synthvid::{generate_dataset, load_dataset, write_dataset, Clip, Dataset};
use crate::teachers::{Teacher, TeacherSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Gen,
    Pretrain,
    Distill,
    Eval,
    Bench,
    Ablate,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Gen,
        Command::Pretrain,
        Command::Distill,
        Command::Eval,
        Command::Bench,
        Command::Ablate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Pretrain => "pretrain",
            Command::Distill => "distill",
            Command::Eval => "eval",
            Command::Bench => "bench",
            Command::Ablate => "ablate",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

pub fn run_command(cmd: Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Gen => cmd_gen(cfg).map(drop),
        Command::Pretrain => cmd_pretrain(cfg).map(drop),
        Command::Distill => cmd_distill(cfg).map(drop),
        Command::Eval => cmd_eval(cfg).map(drop),
        Command::Bench => cmd_bench(cfg).map(drop),
        Command::Ablate => cmd_ablate(cfg).map(drop),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn build_teachers(specs: &[TeacherSpec]) -> Result<Vec<Box<dyn Teacher>>> {
    specs.iter().map(|s| s.build()).collect()
}

/// Train plus distill clips: the data distillation runs on.
pub fn distill_clips(ds: &Dataset) -> Vec<Clip> {
    ds.train.iter().chain(&ds.distill).cloned().collect()
}

/// Reconstruction pre-training on the normal-only train split.
pub fn train_autoencoder(cfg: &RunConfig, ds: &Dataset) -> Result<(AeTrainer, LossReport)> {
    if ds.train.is_empty() {
        return Err(Error::EmptyDataset("train split has no clips".into()));
    }
    let mut trainer = AeTrainer::new(&cfg.model, &cfg.train)?;
    let mut report = LossReport::default();
    for _ in 0..cfg.train.pretrain_epochs {
        trainer.run_epoch(&ds.train, &mut report)?;
    }
    Ok((trainer, report))
}

/// Teacher targets for the distillation clips.
pub fn teacher_targets(cfg: &RunConfig, specs: &[TeacherSpec], clips: &[Clip]) -> Result<TeacherTargets> {
    let teachers = build_teachers(specs)?;
    let refs: Vec<&dyn Teacher> = teachers.iter().map(|t| t.as_ref()).collect();
    build_targets(&refs, clips, &cfg.model.head_resolutions)
}

/// Distillation from precomputed targets, optionally starting from a
/// pre-trained backbone.
pub fn train_student(
    cfg: &RunConfig,
    clips: &[Clip],
    targets: &TeacherTargets,
    backbone: Option<&ParamStore<f32>>,
) -> Result<(DistillTrainer, LossReport)> {
    if clips.is_empty() {
        return Err(Error::EmptyDataset("no clips to distill on".into()));
    }
    let mut trainer = DistillTrainer::new(&cfg.model, &cfg.train, targets.teachers(), backbone)?;
    let mut report = LossReport::default();
    for _ in 0..cfg.train.epochs {
        trainer.run_epoch(clips, targets, &mut report)?;
    }
    Ok((trainer, report))
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<Dataset> {
    let ds = generate_dataset(&cfg.scene)?;
    write_dataset(&cfg.paths.data_dir(), &ds)?;
    Ok(ds)
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cfg.paths.data_dir();
    if !dir.exists() {
        return Err(Error::MissingFile(dir));
    }
    let ds = load_dataset(&dir)?;
    if let Some(c) = ds.train.iter().chain(&ds.distill).chain(&ds.test).next() {
        if [c.height, c.width] != cfg.model.input_resolution {
            return Err(Error::Config(format!(
                "dataset frames are {}x{}, model expects {:?}",
                c.height, c.width, cfg.model.input_resolution
            )));
        }
    }
    Ok(ds)
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<LossReport> {
    let ds = load_data(cfg)?;
    let (trainer, report) = train_autoencoder(cfg, &ds)?;
    trainer.save(&cfg.paths.checkpoint_dir())?;
    write_text(&cfg.paths.report_dir().join("pretrain_loss.csv"), &report.to_csv())?;
    Ok(report)
}

/// Encoder weights written by `pretrain`.
pub fn load_encoder(cfg: &RunConfig) -> Result<ParamStore<f32>> {
    Ok(checkpoint::to_store(checkpoint::read(&cfg.paths.checkpoint_dir().join(ENCODER_FILE))?))
}

pub fn cmd_distill(cfg: &RunConfig) -> Result<LossReport> {
    let ds = load_data(cfg)?;
    let backbone = if cfg.train.losses.ae { Some(load_encoder(cfg)?) } else { None };
    let clips = distill_clips(&ds);
    let targets = teacher_targets(cfg, &cfg.teachers, &clips)?;
    let (trainer, report) = train_student(cfg, &clips, &targets, backbone.as_ref())?;
    trainer.save(&cfg.paths.checkpoint_dir())?;
    write_text(&cfg.paths.report_dir().join("distill_loss.csv"), &report.to_csv())?;
    Ok(report)
}

pub fn load_student(cfg: &RunConfig) -> Result<StudentModel<f32>> {
    let mut model = StudentModel::new(&cfg.model, cfg.train.seed)?;
    let tensors = checkpoint::read(&cfg.paths.checkpoint_dir().join(STUDENT_FILE))?;
    checkpoint::load_into(&mut model.store, &tensors, true)?;
    Ok(model)
}

pub fn load_autoencoder(cfg: &RunConfig) -> Result<Autoencoder<f32>> {
    let mut model = Autoencoder::new(&cfg.model, cfg.train.seed)?;
    let dir = cfg.paths.checkpoint_dir();
    let mut tensors = checkpoint::read(&dir.join(ENCODER_FILE))?;
    tensors.extend(checkpoint::read(&dir.join(DECODER_FILE))?);
    checkpoint::load_into(&mut model.store, &tensors, true)?;
    Ok(model)
}

/// Test-split scores for the configured scorer.
pub fn score_test(cfg: &RunConfig, test: &[Clip]) -> Result<Vec<ScoreSeries>> {
    match &cfg.eval.scorer {
        Scorer::Student => score::score_student(&load_student(cfg)?, test, cfg.train.t),
        Scorer::Autoencoder => score::score_autoencoder(&load_autoencoder(cfg)?, test, cfg.train.t),
        Scorer::Teacher { name } => {
            let spec = cfg
                .teachers
                .iter()
                .find(|t| t.name() == name)
                .ok_or_else(|| Error::Config(format!("unknown teacher {name}")))?;
            score::score_teacher(spec.build()?.as_ref(), test, &cfg.model.head_resolutions)
        }
        Scorer::GroundTruth => score::score_ground_truth(test),
    }
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let ds = load_data(cfg)?;
    if ds.test.is_empty() {
        return Err(Error::EmptyDataset("test split has no clips".into()));
    }
    let series = score_test(cfg, &ds.test)?;
    let report = evaluate(&series)?;
    let dir = cfg.paths.report_dir();
    write_text(&dir.join("eval_auc.csv"), &report.to_csv())?;
    write_text(&dir.join("frame_scores.csv"), &frame_scores_csv(&series))?;
    Ok(report)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<BenchReport>> {
    let variants = if cfg.bench.variants.is_empty() {
        default_variants(&cfg.model)
    } else {
        cfg.bench.variants.clone()
    };
    let weights = if cfg.bench.use_checkpoint { Some(load_student(cfg)?) } else { None };
    let clip = bench::bench_clip(&cfg.scene, cfg.train.seed);
    let reports = variants
        .iter()
        .map(|v| {
            let matches = v.ffn_kind == cfg.model.ffn_kind && v.m == cfg.model.m && v.s == cfg.model.s;
            let w = weights.as_ref().filter(|_| matches).map(|m| &m.store);
            bench_variant(&cfg.model, v, &cfg.bench, &clip, cfg.train.t, cfg.train.seed, w)
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(&cfg.paths.report_dir().join("bench.csv"), &bench_csv(&reports))?;
    Ok(reports)
}

pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    ablate::check_axes(&cfg.ablate.axes)?;
    let ds = load_data(cfg)?;
    let rows = run_ablation(cfg, &ds, &cfg.ablate.axes)?;
    write_text(&cfg.paths.report_dir().join("ablation.csv"), &ablation_csv(&rows))?;
    Ok(rows)
}
