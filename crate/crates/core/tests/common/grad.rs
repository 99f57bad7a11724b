//! Finite-difference suite over every differentiable op and the full
//! student objective.

use rand::Rng as _;
use swiftvad::distill::{loss_akd_total, loss_kd_total, loss_total, Discriminator, GanForm, Side};
use swiftvad::gradcheck::{check_store, GradCheckReport};
use swiftvad::model::{self_attention, ModelConfig, StudentModel};
use swiftvad::nn::{ParamId, ParamStore};
use swiftvad::rng;
use swiftvad::tensor::{Graph, Tensor, Var};
use swiftvad::Result;

pub fn random(r: &mut swiftvad::rng::Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Inputs of one case, all trainable, plus fixed weights folding the output
/// into a scalar.
struct Case {
    store: ParamStore<f64>,
    ids: Vec<ParamId>,
}

impl Case {
    fn new(r: &mut swiftvad::rng::Rng, shapes: &[&[usize]]) -> Self {
        let mut store = ParamStore::new();
        let ids = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| store.add(format!("x{i}"), random(r, s, -1.0, 1.0), true))
            .collect();
        Self { store, ids }
    }
}

/// `Σ w ⊙ y` with `w` drawn from a fixed stream, so every output coordinate
/// contributes a distinct weight.
fn fold<'g>(g: &'g Graph<f64>, y: Var<'g, f64>, key: u64) -> Result<Var<'g, f64>> {
    let mut r = rng::derive(key, rng::label("fold"));
    let w = random(&mut r, &y.shape(), -1.0, 1.0);
    Ok(y.mul(&g.constant(w))?.sum())
}

type OpFn = for<'g> fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>;

struct Op {
    name: &'static str,
    shapes: Vec<Vec<usize>>,
    f: OpFn,
}

fn op(name: &'static str, shapes: &[&[usize]], f: OpFn) -> Op {
    Op {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        f,
    }
}

fn ops() -> Vec<Op> {
    vec![
        op("add", &[&[2, 3], &[2, 3]], |_, x| x[0].add(&x[1])),
        op("sub", &[&[2, 3], &[2, 3]], |_, x| x[0].sub(&x[1])),
        op("mul", &[&[3, 4], &[3, 4]], |_, x| x[0].mul(&x[1])),
        op("scale", &[&[5]], |_, x| Ok(x[0].scale(-2.5))),
        op("relu", &[&[4, 5]], |_, x| Ok(x[0].relu())),
        op("sum", &[&[3, 3]], |_, x| Ok(x[0].sum())),
        op("mean", &[&[3, 3]], |_, x| Ok(x[0].mean())),
        op("reshape", &[&[2, 6]], |_, x| x[0].reshape(&[3, 4])),
        op("transpose_last2", &[&[2, 3, 4]], |_, x| x[0].transpose_last2()),
        op("concat_channels", &[&[2, 1, 3, 3], &[2, 2, 3, 3]], |_, x| Var::concat_channels(&x[..2])),
        op("add_all", &[&[4], &[4], &[4]], |_, x| Var::add_all(x)),
        op("matmul", &[&[3, 4], &[4, 2]], |_, x| x[0].matmul(&x[1])),
        op("matmul_batched", &[&[2, 3, 4], &[2, 4, 5]], |_, x| x[0].matmul(&x[1])),
        op("softmax_rows", &[&[2, 3, 5]], |_, x| Ok(x[0].softmax_rows())),
        op("linear", &[&[3, 4], &[2, 4], &[2]], |_, x| x[0].linear(&x[1], &x[2])),
        op("conv2d_7x7", &[&[1, 2, 9, 9], &[3, 2, 7, 7], &[3]], |_, x| x[0].conv2d(&x[1], &x[2], 1, 0, 1)),
        op("conv2d_strided", &[&[2, 2, 7, 6], &[3, 2, 3, 3], &[3]], |_, x| x[0].conv2d(&x[1], &x[2], 2, 1, 1)),
        op("conv2d_depthwise", &[&[2, 4, 5, 5], &[4, 1, 3, 3], &[4]], |_, x| x[0].conv2d(&x[1], &x[2], 2, 1, 4)),
        op("conv2d_pointwise", &[&[2, 3, 4, 4], &[5, 3, 1, 1], &[5]], |_, x| x[0].conv2d(&x[1], &x[2], 1, 0, 1)),
        op("conv_transpose2d", &[&[2, 3, 4, 4], &[3, 2, 3, 3], &[2]], |_, x| x[0].conv_transpose2d(&x[1], &x[2], 2, 1, 0)),
        op("conv_transpose2d_output_padding", &[&[1, 2, 3, 3], &[2, 2, 3, 3], &[2]], |_, x| {
            x[0].conv_transpose2d(&x[1], &x[2], 2, 1, 1)
        }),
        op("conv_transpose2d_7x7", &[&[1, 2, 3, 3], &[2, 1, 7, 7], &[1]], |_, x| x[0].conv_transpose2d(&x[1], &x[2], 1, 0, 0)),
        op("mse_loss", &[&[2, 1, 3, 3], &[2, 1, 3, 3]], |_, x| x[0].mse_loss(&x[1])),
        op("bce_with_logits_1", &[&[4, 1]], |_, x| Ok(x[0].scale(3.0).bce_with_logits(1.0))),
        op("bce_with_logits_0", &[&[4, 1]], |_, x| Ok(x[0].scale(3.0).bce_with_logits(0.0))),
        op("batch_norm2d_train", &[&[3, 2, 3, 3], &[2], &[2]], |_, x| {
            let (rm, rv) = (Tensor::zeros(&[2]), Tensor::full(&[2], 1.0));
            Ok(x[0].batch_norm2d(&x[1], &x[2], &rm, &rv, true, 0.1, 1e-5)?.0)
        }),
        op("batch_norm2d_eval", &[&[3, 2, 3, 3], &[2], &[2]], |_, x| {
            let (rm, rv) = (Tensor::full(&[2], 0.2), Tensor::full(&[2], 1.7));
            Ok(x[0].batch_norm2d(&x[1], &x[2], &rm, &rv, false, 0.1, 1e-5)?.0)
        }),
        op("adaptive_max_pool2d", &[&[2, 2, 7, 5]], |_, x| x[0].adaptive_max_pool2d(3, 2)),
        op("adaptive_max_pool2d_global", &[&[2, 3, 4, 4]], |_, x| x[0].adaptive_max_pool2d(1, 1)),
        op("max_resize_up", &[&[1, 1, 2, 2]], |_, x| x[0].max_resize(5, 4)),
        op("self_attention", &[&[2, 4, 3], &[2, 2, 3], &[2, 2, 3]], |_, x| self_attention(x[0], x[1], x[2])),
        op("composite_chain", &[&[2, 2, 5, 5], &[3, 2, 3, 3], &[3]], |_, x| {
            let h = x[0].conv2d(&x[1], &x[2], 2, 1, 1)?.relu();
            h.adaptive_max_pool2d(2, 2)?.softmax_rows().mse_loss(&h.adaptive_max_pool2d(2, 2)?.scale(0.5))
        }),
    ]
}

pub fn op_names() -> Vec<&'static str> {
    ops().iter().map(|o| o.name).collect()
}

/// Worst relative error of one op over `seeds` random instances.
pub fn check_op(name: &str, seeds: u64) -> Result<GradCheckReport> {
    let op = ops().into_iter().find(|o| o.name == name).expect("known op");
    let mut total: Option<GradCheckReport> = None;
    for seed in 0..seeds {
        let mut r = rng::derive(seed, rng::label(name));
        let shapes: Vec<&[usize]> = op.shapes.iter().map(|s| s.as_slice()).collect();
        let case = Case::new(&mut r, &shapes);
        let ids = case.ids.clone();
        let f = op.f;
        let report = check_store(&case.store, usize::MAX, &mut r, |g, store| {
            let xs: Vec<Var<'_, f64>> = ids.iter().map(|&id| store.var(g, id)).collect();
            let y = f(g, &xs)?;
            fold(g, y, seed)
        })?;
        match &mut total {
            Some(t) => t.merge(report),
            None => total = Some(report),
        }
    }
    Ok(total.expect("at least one seed"))
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        m: 1,
        s: 2,
        d: 4,
        c: 8,
        head_resolutions: vec![[1, 1], [2, 2], [4, 4]],
        input_resolution: [16, 16],
        downsample_filters: vec![4, 8],
        ..ModelConfig::default()
    }
}

/// Student parameters against `kd + α·akd` from two teachers, generator side,
/// training-mode batch norm.
pub fn check_student_objective(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_model();
    let student = StudentModel::<f64>::new(&cfg, seed)?;
    let discs = [
        Discriminator::<f64>::new(&cfg.head_resolutions, rng::mix(seed, 1))?,
        Discriminator::<f64>::new(&cfg.head_resolutions, rng::mix(seed, 2))?,
    ];
    let mut r = rng::derive(seed, rng::label("objective"));
    let x = random(&mut r, &[2, 3, 16, 16], 0.0, 1.0);
    let targets: Vec<Vec<Tensor<f64>>> = (0..2)
        .map(|_| cfg.head_resolutions.iter().map(|&[h, w]| random(&mut r, &[2, 1, h, w], 0.0, 1.0)).collect())
        .collect();
    let lambda = [0.7, 1.3];
    check_store(&student.store, 3, &mut r, |g, store| {
        let ctx = swiftvad::nn::Ctx::new(g, store, true);
        let s = student.forward(&ctx, g.constant(x.clone()))?;
        let t: Vec<Vec<Var<'_, f64>>> = targets
            .iter()
            .map(|maps| maps.iter().map(|m| g.constant(m.clone())).collect())
            .collect();
        let kd = loss_kd_total(&t, &s, &lambda)?;
        let refs: Vec<&Discriminator<f64>> = discs.iter().collect();
        let akd = loss_akd_total(g, &refs, &t, &s, Side::Generator, GanForm::NonSaturating)?;
        loss_total(kd, akd, 0.1)
    })
}
