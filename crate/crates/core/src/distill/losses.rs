//! Reconstruction, distillation and adversarial losses.

use serde::{Deserialize, Serialize};

use super::Discriminator;
use crate::error::{Error, Result};
use crate::nn::Ctx;
use crate::tensor::{Element, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanForm {
    /// Generator maximizes the discriminator's fake-term loss.
    Saturating,
    /// Generator minimizes `-log σ(D(S))`.
    #[default]
    NonSaturating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Discriminator,
    Generator,
}

/// Mean squared reconstruction error of the middle frame.
pub fn loss_ae<'g, T: Element>(target: Var<'g, T>, reconstruction: Var<'g, T>) -> Result<Var<'g, T>> {
    reconstruction.mse_loss(&target)
}

/// Sum over resolutions of the per-resolution mean squared error.
pub fn loss_kd_single<'g, T: Element>(teacher: &[Var<'g, T>], student: &[Var<'g, T>]) -> Result<Var<'g, T>> {
    if teacher.len() != student.len() || teacher.is_empty() {
        return Err(Error::Dimension {
            op: "loss_kd",
            axis: "resolutions",
            expected: teacher.len(),
            got: student.len(),
        });
    }
    let terms = teacher
        .iter()
        .zip(student)
        .map(|(t, s)| {
            if t.shape() != s.shape() {
                return Err(Error::shape(
                    "loss_kd",
                    format!("teacher map {:?} vs student map {:?}", t.shape(), s.shape()),
                ));
            }
            s.mse_loss(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Var::add_all(&terms)
}

/// `Σ λ_i · loss_kd_single(teacher_i, student)`.
pub fn loss_kd_total<'g, T: Element>(
    teachers: &[Vec<Var<'g, T>>],
    student: &[Var<'g, T>],
    lambda: &[f64],
) -> Result<Var<'g, T>> {
    if teachers.len() != lambda.len() {
        return Err(Error::Dimension {
            op: "loss_kd_total",
            axis: "lambda",
            expected: teachers.len(),
            got: lambda.len(),
        });
    }
    let terms = teachers
        .iter()
        .zip(lambda)
        .map(|(t, &l)| Ok(loss_kd_single(t, student)?.scale(l)))
        .collect::<Result<Vec<_>>>()?;
    if terms.is_empty() {
        return Err(Error::Config("distillation needs at least one teacher".into()));
    }
    Var::add_all(&terms)
}

/// Adversarial loss for one teacher/discriminator pair, averaged over the
/// batch.
///
/// Discriminator side: binary cross-entropy with teacher maps as label 1 and
/// student maps as label 0, i.e. the standard `log(1 - D)` term for fakes.
pub fn loss_akd_single<'g, T: Element>(
    g: &'g Graph<T>,
    disc: &Discriminator<T>,
    teacher: &[Var<'g, T>],
    student: &[Var<'g, T>],
    side: Side,
    form: GanForm,
) -> Result<Var<'g, T>> {
    let ctx = &Ctx::new(g, &disc.store, true);
    match side {
        Side::Discriminator => {
            // Student maps enter as constants: no gradient reaches the student.
            let fake: Vec<Var<'g, T>> = student.iter().map(|s| s.detach()).collect();
            let real = disc.forward(ctx, teacher)?.bce_with_logits(1.0);
            let fake = disc.forward(ctx, &fake)?.bce_with_logits(0.0);
            real.add(&fake)
        }
        Side::Generator => {
            let logit = disc.forward(ctx, student)?;
            Ok(match form {
                GanForm::NonSaturating => logit.bce_with_logits(1.0),
                GanForm::Saturating => logit.bce_with_logits(0.0).scale(-1.0),
            })
        }
    }
}

/// Sum of `loss_akd_single` over teachers; zero for an empty list.
pub fn loss_akd_total<'g, T: Element>(
    g: &'g Graph<T>,
    discs: &[&Discriminator<T>],
    teachers: &[Vec<Var<'g, T>>],
    student: &[Var<'g, T>],
    side: Side,
    form: GanForm,
) -> Result<Var<'g, T>> {
    if discs.len() != teachers.len() {
        return Err(Error::Dimension {
            op: "loss_akd_total",
            axis: "teachers",
            expected: discs.len(),
            got: teachers.len(),
        });
    }
    if discs.is_empty() {
        return Ok(g.constant(Tensor::scalar(T::zero())));
    }
    let terms = discs
        .iter()
        .zip(teachers)
        .map(|(d, t)| loss_akd_single(g, d, t, student, side, form))
        .collect::<Result<Vec<_>>>()?;
    Var::add_all(&terms)
}

/// `kd + α·akd`.
pub fn loss_total<'g, T: Element>(kd: Var<'g, T>, akd: Var<'g, T>, alpha: f64) -> Result<Var<'g, T>> {
    kd.add(&akd.scale(alpha))
}
