//! Training loops. Both trainers are resumable: `save` writes weights plus
//! optimizer moments, and the per-epoch sample order depends only on the seed
//! and epoch index.

use std::path::Path;

use rand::seq::SliceRandom as _;

use super::{
    loss_ae, loss_akd_single, loss_kd_total, loss_total, Discriminator, LossReport, LossRow, Side, TrainConfig,
};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::model::{stack_batch, AnomalyMapSet, Autoencoder, FrameSequence, ModelConfig, StudentModel};
use crate::nn::{Ctx, ParamStore};
use crate::optim::{AdamConfig, AdamState};
use crate::rng;
use crate::synthvid::Clip;
use crate::teachers::{downsample_map, MapNormalizer, Teacher};
use crate::tensor::{Graph, Tensor, Var};

/// One training sample: the window centred on `center` in clip `clip`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub clip: usize,
    pub center: usize,
}

/// Every centre whose full window fits inside its clip.
pub fn samples(clips: &[Clip], frames: usize, t: usize) -> Vec<Sample> {
    clips
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.valid_centers(frames, t).map(move |center| Sample { clip: i, center }))
        .collect()
}

/// `[n, frames·c, h, w]` batch for `batch`.
pub fn gather_input(clips: &[Clip], batch: &[Sample], frames: usize, t: usize) -> Result<Tensor<f32>> {
    let items = batch
        .iter()
        .map(|s| {
            let clip = &clips[s.clip];
            let seq = FrameSequence::new(clip.window(s.center, frames, t).into_iter().map(|i| clip.frame_tensor(i)).collect())?;
            Ok(seq.stacked())
        })
        .collect::<Result<Vec<_>>>()?;
    stack_batch(&items)
}

fn center_frames(clips: &[Clip], batch: &[Sample]) -> Result<Tensor<f32>> {
    let items: Vec<_> = batch.iter().map(|s| clips[s.clip].frame_tensor(s.center)).collect();
    stack_batch(&items)
}

fn epoch_order(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derive(cfg.seed, rng::mix(rng::label("order"), epoch as u64)));
    if let Some(cap) = cfg.max_samples_per_epoch {
        order.truncate(cap);
    }
    order
}

fn adam_config(cfg: &TrainConfig) -> AdamConfig {
    AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    }
}

fn training_samples(clips: &[Clip], model: &ModelConfig, cfg: &TrainConfig) -> Result<Vec<Sample>> {
    let s = samples(clips, model.input_frames, cfg.t);
    if s.is_empty() {
        return Err(Error::Config(format!(
            "no clip is long enough for {} frames at stride {}",
            model.input_frames, cfg.t
        )));
    }
    Ok(s)
}

fn non_finite(phase: &str, epoch: usize, batch: usize) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("{phase} epoch {epoch} batch {batch}: {context}"),
        },
        e => e,
    }
}

const EPOCH_KEY: &str = "train.epoch";

fn save_optimizer(path: &Path, adam: &AdamState<f32>, store: &ParamStore<f32>, epoch: usize) -> Result<()> {
    let mut tensors = adam.export(store);
    tensors.push((EPOCH_KEY.to_string(), Tensor::scalar(epoch as f32)));
    checkpoint::write(path, &tensors)
}

fn load_optimizer(path: &Path, cfg: AdamConfig, store: &ParamStore<f32>) -> Result<(AdamState<f32>, usize)> {
    let mut tensors = checkpoint::read::<f32>(path)?;
    let pos = tensors
        .iter()
        .position(|(n, _)| n == EPOCH_KEY)
        .ok_or_else(|| Error::Checkpoint(format!("{} has no epoch counter", path.display())))?;
    let epoch = tensors.remove(pos).1.item() as usize;
    Ok((AdamState::import(cfg, store, &tensors)?, epoch))
}

fn subset(store: &ParamStore<f32>, prefixes: &[&str]) -> Vec<(String, Tensor<f32>)> {
    checkpoint::store_tensors(store)
        .into_iter()
        .filter(|(n, _)| prefixes.iter().any(|p| n.starts_with(p)))
        .collect()
}

/// Reconstruction pre-training of the backbone with a mirrored decoder.
pub struct AeTrainer {
    pub model: Autoencoder<f32>,
    adam: AdamState<f32>,
    cfg: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
}

pub const ENCODER_FILE: &str = "encoder.ckpt";
pub const DECODER_FILE: &str = "decoder.ckpt";
pub const AE_OPTIM_FILE: &str = "ae_optim.ckpt";

impl AeTrainer {
    pub fn new(model: &ModelConfig, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let ae = Autoencoder::new(model, cfg.seed)?;
        let adam = AdamState::new(adam_config(cfg), &ae.store);
        Ok(Self {
            model: ae,
            adam,
            cfg: cfg.clone(),
            epoch: 0,
        })
    }

    pub fn run_epoch(&mut self, clips: &[Clip], report: &mut LossReport) -> Result<()> {
        let all = training_samples(clips, &self.model.cfg, &self.cfg)?;
        self.adam.config.lr = self.cfg.lr_at(self.epoch, self.cfg.pretrain_epochs);
        let order = epoch_order(all.len(), &self.cfg, self.epoch);
        for (b, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk.iter().map(|&i| all[i]).collect();
            let x = gather_input(clips, &batch, self.model.cfg.input_frames, self.cfg.t)?;
            let target = center_frames(clips, &batch)?;
            let g = Graph::new();
            let ctx = Ctx::new(&g, &self.model.store, true);
            let recon = self.model.forward(&ctx, g.constant(x))?;
            let loss = loss_ae(g.constant(target), recon)?;
            let grads = g.backward(loss).map_err(non_finite("pretrain", self.epoch, b))?;
            self.model.store.accumulate_grads(&g, &grads);
            self.adam.step(&mut self.model.store);
            self.model.store.apply_updates(&g.take_updates());
            report.rows.push(LossRow {
                phase: "pretrain",
                epoch: self.epoch,
                batch: b,
                l_ae: Some(loss.item() as f64),
                l_kd: None,
                l_akd: None,
                l_total: Some(loss.item() as f64),
                d_losses: Vec::new(),
            });
        }
        self.epoch += 1;
        Ok(())
    }

    /// Writes encoder (backbone) and decoder weights to separate files, plus
    /// the optimizer state.
    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::write(&dir.join(ENCODER_FILE), &subset(&self.model.store, &["enc.", "blk"]))?;
        checkpoint::write(&dir.join(DECODER_FILE), &subset(&self.model.store, &["dec."]))?;
        save_optimizer(&dir.join(AE_OPTIM_FILE), &self.adam, &self.model.store, self.epoch)
    }

    pub fn resume(dir: &Path, model: &ModelConfig, cfg: &TrainConfig) -> Result<Self> {
        let mut t = Self::new(model, cfg)?;
        let mut tensors = checkpoint::read::<f32>(&dir.join(ENCODER_FILE))?;
        tensors.extend(checkpoint::read::<f32>(&dir.join(DECODER_FILE))?);
        checkpoint::load_into(&mut t.model.store, &tensors, true)?;
        (t.adam, t.epoch) = load_optimizer(&dir.join(AE_OPTIM_FILE), adam_config(cfg), &t.model.store)?;
        Ok(t)
    }
}

/// Runs `cfg.pretrain_epochs` epochs from scratch.
pub fn pretrain_ae(clips: &[Clip], model: &ModelConfig, cfg: &TrainConfig, report: &mut LossReport) -> Result<Autoencoder<f32>> {
    let mut t = AeTrainer::new(model, cfg)?;
    for _ in 0..cfg.pretrain_epochs {
        t.run_epoch(clips, report)?;
    }
    Ok(t.model)
}

/// Normalized, downsampled teacher maps for every frame of a clip list,
/// indexed `[teacher][clip][frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherTargets {
    pub names: Vec<String>,
    pub normalizers: Vec<MapNormalizer>,
    pub resolutions: Vec<[usize; 2]>,
    maps: Vec<Vec<Vec<AnomalyMapSet<f32>>>>,
}

/// Runs every teacher once per frame. Bounds for normalization are fitted on
/// the full-resolution maps; since the rescaling is monotone it commutes with
/// max pooling and is applied to the pooled maps.
pub fn build_targets(teachers: &[&dyn Teacher], clips: &[Clip], resolutions: &[[usize; 2]]) -> Result<TeacherTargets> {
    if teachers.is_empty() {
        return Err(Error::Config("distillation needs at least one teacher".into()));
    }
    if let Some(c) = clips.first() {
        if let Some(r) = resolutions.iter().find(|r| r[0] > c.height || r[1] > c.width) {
            return Err(Error::Config(format!(
                "head resolution {r:?} exceeds teacher map resolution {}x{}",
                c.height, c.width
            )));
        }
    }
    let mut names = Vec::new();
    let mut normalizers = Vec::new();
    let mut maps = Vec::new();
    for teacher in teachers {
        let (mut min, mut max) = (f32::INFINITY, f32::NEG_INFINITY);
        let mut per_clip = Vec::with_capacity(clips.len());
        for clip in clips {
            let mut frames = Vec::with_capacity(clip.len());
            for i in 0..clip.len() {
                let out = teacher.infer(clip, i)?;
                for &v in out.full_map.data() {
                    min = min.min(v);
                    max = max.max(v);
                }
                frames.push(downsample_map(&out.full_map, resolutions)?);
            }
            per_clip.push(frames);
        }
        let norm = if min.is_finite() {
            MapNormalizer { min, max }
        } else {
            MapNormalizer { min: 0.0, max: 1.0 }
        };
        for frames in &mut per_clip {
            for set in frames.iter_mut() {
                for m in &mut set.maps {
                    *m = norm.apply(m);
                }
            }
        }
        names.push(teacher.name().to_string());
        normalizers.push(norm);
        maps.push(per_clip);
    }
    Ok(TeacherTargets {
        names,
        normalizers,
        resolutions: resolutions.to_vec(),
        maps,
    })
}

impl TeacherTargets {
    pub fn teachers(&self) -> usize {
        self.maps.len()
    }

    pub fn get(&self, teacher: usize, clip: usize, frame: usize) -> &AnomalyMapSet<f32> {
        &self.maps[teacher][clip][frame]
    }

    /// Per-resolution `[n, 1, h, w]` targets of one teacher.
    pub fn batch(&self, teacher: usize, batch: &[Sample]) -> Result<Vec<Tensor<f32>>> {
        let sets: Vec<AnomalyMapSet<f32>> = batch.iter().map(|s| self.get(teacher, s.clip, s.center).clone()).collect();
        AnomalyMapSet::stack(&sets)
    }
}

pub const STUDENT_FILE: &str = "student.ckpt";
pub const STUDENT_OPTIM_FILE: &str = "student_optim.ckpt";

fn disc_file(i: usize) -> String {
    format!("disc{}.ckpt", i + 1)
}

fn disc_optim_file(i: usize) -> String {
    format!("disc{}_optim.ckpt", i + 1)
}

/// Student trained against fixed teacher targets, with one discriminator
/// per teacher when the adversarial term is on.
pub struct DistillTrainer {
    pub student: StudentModel<f32>,
    s_adam: AdamState<f32>,
    pub discs: Vec<Discriminator<f32>>,
    d_adams: Vec<AdamState<f32>>,
    cfg: TrainConfig,
    lambda: Vec<f64>,
    /// Completed epochs.
    pub epoch: usize,
}

impl DistillTrainer {
    /// `backbone` optionally carries pre-trained encoder and block weights.
    pub fn new(model: &ModelConfig, cfg: &TrainConfig, teachers: usize, backbone: Option<&ParamStore<f32>>) -> Result<Self> {
        cfg.validate()?;
        if !cfg.losses.kd && !cfg.adversarial() {
            return Err(Error::Config("distillation needs the kd term or the akd term with alpha > 0".into()));
        }
        let lambda = cfg.lambda_for(teachers)?;
        if teachers == 0 {
            return Err(Error::Config("distillation needs at least one teacher".into()));
        }
        let mut student = StudentModel::new(model, cfg.seed)?;
        if let Some(store) = backbone {
            student.load_backbone(store)?;
        }
        let s_adam = AdamState::new(adam_config(cfg), &student.store);
        let discs = (0..teachers)
            .map(|i| Discriminator::new(&model.head_resolutions, rng::mix(cfg.seed, i as u64 + 1)))
            .collect::<Result<Vec<_>>>()?;
        let d_adams = discs.iter().map(|d| AdamState::new(adam_config(cfg), &d.store)).collect();
        Ok(Self {
            student,
            s_adam,
            discs,
            d_adams,
            cfg: cfg.clone(),
            lambda,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One pass over `clips`. `targets` must have been built from the same
    /// clip list.
    pub fn run_epoch(&mut self, clips: &[Clip], targets: &TeacherTargets, report: &mut LossReport) -> Result<()> {
        if targets.teachers() != self.discs.len() {
            return Err(Error::Config(format!(
                "trainer has {} teachers, targets have {}",
                self.discs.len(),
                targets.teachers()
            )));
        }
        if targets.resolutions != self.student.cfg.head_resolutions {
            return Err(Error::Config(format!(
                "teacher targets at {:?} do not match student heads {:?}",
                targets.resolutions, self.student.cfg.head_resolutions
            )));
        }
        let all = training_samples(clips, &self.student.cfg, &self.cfg)?;
        let lr = self.cfg.lr_at(self.epoch, self.cfg.epochs);
        for adam in std::iter::once(&mut self.s_adam).chain(&mut self.d_adams) {
            adam.config.lr = lr;
        }
        let order = epoch_order(all.len(), &self.cfg, self.epoch);
        for (b, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk.iter().map(|&i| all[i]).collect();
            let row = self.step(clips, targets, &batch, b)?;
            report.rows.push(row);
        }
        self.epoch += 1;
        Ok(())
    }

    fn step(&mut self, clips: &[Clip], targets: &TeacherTargets, batch: &[Sample], b: usize) -> Result<LossRow> {
        let x = gather_input(clips, batch, self.student.cfg.input_frames, self.cfg.t)?;
        let teacher_maps = (0..self.discs.len())
            .map(|i| targets.batch(i, batch))
            .collect::<Result<Vec<_>>>()?;
        let adversarial = self.cfg.adversarial();
        let epoch = self.epoch;

        let g = Graph::new();
        let ctx = Ctx::new(&g, &self.student.store, true);
        let s_maps = self.student.forward(&ctx, g.constant(x))?;
        g.check_finite().map_err(non_finite("distill", epoch, b))?;

        // Discriminator updates see the student maps as fixed inputs.
        let mut d_losses = Vec::new();
        if adversarial {
            let s_values: Vec<Tensor<f32>> = s_maps.iter().map(|m| (*m.value()).clone()).collect();
            for (i, (disc, adam)) in self.discs.iter_mut().zip(&mut self.d_adams).enumerate() {
                let mut last = 0.0;
                for _ in 0..self.cfg.d_steps_per_s_step {
                    let gd = Graph::new();
                    let real: Vec<_> = teacher_maps[i].iter().map(|t| gd.constant(t.clone())).collect();
                    let fake: Vec<_> = s_values.iter().map(|t| gd.constant(t.clone())).collect();
                    let loss = loss_akd_single(&gd, disc, &real, &fake, Side::Discriminator, self.cfg.gan_form)?;
                    let grads = gd.backward(loss).map_err(non_finite("discriminator", epoch, b))?;
                    disc.store.accumulate_grads(&gd, &grads);
                    adam.step(&mut disc.store);
                    last = loss.item() as f64;
                }
                d_losses.push(last);
            }
        }

        let teacher_vars: Vec<Vec<Var<'_, f32>>> = teacher_maps
            .iter()
            .map(|maps| maps.iter().map(|t| g.constant(t.clone())).collect())
            .collect();
        let zero = || g.constant(Tensor::scalar(0.0f32));
        let kd = if self.cfg.losses.kd {
            Some(loss_kd_total(&teacher_vars, &s_maps, &self.lambda)?)
        } else {
            None
        };
        let akd = if adversarial {
            let terms = self
                .discs
                .iter()
                .zip(&teacher_vars)
                .map(|(d, t)| loss_akd_single(&g, d, t, &s_maps, Side::Generator, self.cfg.gan_form))
                .collect::<Result<Vec<_>>>()?;
            Some(Var::add_all(&terms)?)
        } else {
            None
        };
        let total = match akd {
            Some(a) => loss_total(kd.unwrap_or_else(zero), a, self.cfg.alpha)?,
            None => kd.expect("validated loss switches"),
        };
        let grads = g.backward(total).map_err(non_finite("distill", epoch, b))?;
        // Only the student store takes these gradients; discriminator
        // parameters bound on this graph are left untouched.
        self.student.store.accumulate_grads(&g, &grads);
        self.s_adam.step(&mut self.student.store);
        self.student.store.apply_updates(&g.take_updates());
        Ok(LossRow {
            phase: "distill",
            epoch: self.epoch,
            batch: b,
            l_ae: None,
            l_kd: kd.map(|v| v.item() as f64),
            l_akd: akd.map(|v| v.item() as f64),
            l_total: Some(total.item() as f64),
            d_losses,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::save_store(&dir.join(STUDENT_FILE), &self.student.store)?;
        save_optimizer(&dir.join(STUDENT_OPTIM_FILE), &self.s_adam, &self.student.store, self.epoch)?;
        for (i, (d, adam)) in self.discs.iter().zip(&self.d_adams).enumerate() {
            checkpoint::save_store(&dir.join(disc_file(i)), &d.store)?;
            save_optimizer(&dir.join(disc_optim_file(i)), adam, &d.store, self.epoch)?;
        }
        Ok(())
    }

    pub fn resume(dir: &Path, model: &ModelConfig, cfg: &TrainConfig, teachers: usize) -> Result<Self> {
        let mut t = Self::new(model, cfg, teachers, None)?;
        let student = checkpoint::read::<f32>(&dir.join(STUDENT_FILE))?;
        checkpoint::load_into(&mut t.student.store, &student, true)?;
        (t.s_adam, t.epoch) = load_optimizer(&dir.join(STUDENT_OPTIM_FILE), adam_config(cfg), &t.student.store)?;
        for (i, (d, adam)) in t.discs.iter_mut().zip(&mut t.d_adams).enumerate() {
            let tensors = checkpoint::read::<f32>(&dir.join(disc_file(i)))?;
            checkpoint::load_into(&mut d.store, &tensors, true)?;
            (*adam, _) = load_optimizer(&dir.join(disc_optim_file(i)), adam_config(cfg), &d.store)?;
        }
        Ok(t)
    }
}
