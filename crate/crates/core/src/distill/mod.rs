//! Reconstruction pre-training and joint standard plus adversarial
//! distillation from several teachers.

mod discriminator;
mod losses;
mod train;

pub use discriminator::{Discriminator, MID_CHANNELS, STEM_CHANNELS};
pub use losses::{
    loss_ae, loss_akd_single, loss_akd_total, loss_kd_single, loss_kd_total, loss_total, GanForm, Side,
};
pub use train::{
    build_targets, gather_input, pretrain_ae, samples, AeTrainer, DistillTrainer, Sample, TeacherTargets, AE_OPTIM_FILE,
    DECODER_FILE, ENCODER_FILE, STUDENT_FILE, STUDENT_OPTIM_FILE,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which terms take part in training. `ae` runs the reconstruction phase
/// before distillation; `kd` and `akd` select the distillation terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSwitches {
    pub ae: bool,
    pub kd: bool,
    pub akd: bool,
}

impl Default for LossSwitches {
    fn default() -> Self {
        Self {
            ae: true,
            kd: true,
            akd: true,
        }
    }
}

/// Per-epoch learning-rate schedule. `Cosine` anneals from `lr` towards zero
/// over the phase's epochs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Distillation epochs.
    pub epochs: usize,
    /// Reconstruction pre-training epochs.
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub weight_decay: f64,
    /// Temporal stride between input frames.
    pub t: usize,
    pub alpha: f64,
    /// Per-teacher distillation weights; empty means 1 for every teacher.
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub d_steps_per_s_step: usize,
    pub gan_form: GanForm,
    pub losses: LossSwitches,
    /// Cap on samples drawn per epoch (a fresh random subset each epoch).
    pub max_samples_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 35,
            pretrain_epochs: 35,
            batch_size: 64,
            lr: 1e-4,
            lr_schedule: LrSchedule::Constant,
            weight_decay: 1e-5,
            t: 3,
            alpha: 0.1,
            lambda: Vec::new(),
            seed: 0,
            d_steps_per_s_step: 1,
            gan_form: GanForm::NonSaturating,
            losses: LossSwitches::default(),
            max_samples_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.t == 0 {
            return bad("t must be at least 1");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0)) {
            return bad("lambda weights must be non-negative");
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("lr must be positive and weight_decay non-negative");
        }
        Ok(())
    }

    /// Learning rate of `epoch` in a phase of `epochs` epochs.
    pub fn lr_at(&self, epoch: usize, epochs: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let e = epoch.min(epochs.saturating_sub(1)) as f64;
                self.lr * 0.5 * (1.0 + (std::f64::consts::PI * e / epochs.max(1) as f64).cos())
            }
        }
    }

    /// λ expanded to `teachers` entries.
    pub fn lambda_for(&self, teachers: usize) -> Result<Vec<f64>> {
        if self.lambda.is_empty() {
            return Ok(vec![1.0; teachers]);
        }
        if self.lambda.len() != teachers {
            return Err(Error::Config(format!(
                "lambda has {} weights for {teachers} teachers",
                self.lambda.len()
            )));
        }
        Ok(self.lambda.clone())
    }

    /// Whether the adversarial term contributes. With α = 0 it is skipped
    /// entirely so the run reduces to standard distillation.
    pub fn adversarial(&self) -> bool {
        self.losses.akd && self.alpha > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    pub phase: &'static str,
    pub epoch: usize,
    pub batch: usize,
    pub l_ae: Option<f64>,
    pub l_kd: Option<f64>,
    pub l_akd: Option<f64>,
    pub l_total: Option<f64>,
    /// Discriminator loss per teacher, from the last discriminator step.
    pub d_losses: Vec<f64>,
}

/// Per-batch loss records of both phases.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub rows: Vec<LossRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl LossReport {
    /// CSV with the fixed `d1_loss,d2_loss` columns, extended by
    /// `d3_loss, ...` when more teachers are present.
    pub fn to_csv(&self) -> String {
        let d_cols = self.rows.iter().map(|r| r.d_losses.len()).max().unwrap_or(0).max(2);
        let mut out = String::from("phase,epoch,batch,l_ae,l_kd,l_akd,l_total");
        for i in 1..=d_cols {
            write!(out, ",d{i}_loss").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{},{}",
                r.phase,
                r.epoch,
                r.batch,
                cell(r.l_ae),
                cell(r.l_kd),
                cell(r.l_akd),
                cell(r.l_total)
            )
            .unwrap();
            for i in 0..d_cols {
                write!(out, ",{}", cell(r.d_losses.get(i).copied())).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn phase(&self, phase: &str) -> impl Iterator<Item = &LossRow> {
        let phase = phase.to_string();
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    /// Mean of a column over the batches of one epoch.
    pub fn epoch_mean(&self, phase: &str, epoch: usize, column: impl Fn(&LossRow) -> Option<f64>) -> Option<f64> {
        let values: Vec<f64> = self.phase(phase).filter(|r| r.epoch == epoch).filter_map(column).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}
