//! The student network: downsampling block, CvT blocks, multi-resolution
//! heads, and the mirrored decoder used for reconstruction pre-training.
//!
//! Parameter names are canonical and shared between the autoencoder and the
//! student so a pre-trained backbone loads by name:
//!
//! | prefix                     | layer                                         |
//! |----------------------------|-----------------------------------------------|
//! | `enc.conv{i}`, `enc.bn{i}` | downsampling conv `i` and its batch norm      |
//! | `blk{j}.head{h}.{q,k,v}.dw`| depthwise 3×3 projection of head `h`          |
//! | `blk{j}.head{h}.{q,k,v}.bn`| batch norm after the depthwise projection     |
//! | `blk{j}.head{h}.{q,k,v}.pw`| pointwise projection to `d` channels          |
//! | `blk{j}.proj`              | pointwise merge of the `s·d` head channels    |
//! | `blk{j}.bn`                | batch norm before the feed-forward part       |
//! | `blk{j}.ffn1`, `blk{j}.ffn2` | feed-forward layers (1×1 convs or dense)    |
//! | `head{k}.conv0`, `head{k}.conv1` | output head `k`                         |
//! | `dec.deconv{i}`, `dec.bn{i}` | decoder layers, `i = 0` nearest the latent  |
//!
//! Convolutions that feed a batch norm, and the Q/K/V projections, carry no
//! bias, so they have only a `.w` entry.

mod config;

pub use config::{DownLayer, FfnKind, ModelConfig, HEAD_HIDDEN};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ConvTranspose2d, Ctx, Linear, ParamStore};
use crate::rng::{self, Rng};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Input frames at temporal stride `t`, channel-concatenated.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence<T> {
    /// Each frame is `[channels, h, w]` with values in [0, 1].
    pub frames: Vec<Tensor<T>>,
    pub center_index: usize,
}

impl<T: Element> FrameSequence<T> {
    pub fn new(frames: Vec<Tensor<T>>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::shape("frame_sequence", "no frames"))?
            .shape()
            .to_vec();
        if first.len() != 3 || frames.iter().any(|f| f.shape() != first.as_slice()) {
            return Err(Error::shape("frame_sequence", "frames must share one [c, h, w] shape"));
        }
        let center_index = frames.len() / 2;
        Ok(Self { frames, center_index })
    }

    pub fn center(&self) -> &Tensor<T> {
        &self.frames[self.center_index]
    }

    /// `[frames·c, h, w]` input for one sample.
    pub fn stacked(&self) -> Tensor<T> {
        let s = self.frames[0].shape();
        let data = self.frames.iter().flat_map(|f| f.data().iter().copied()).collect();
        Tensor::from_parts(vec![self.frames.len() * s[0], s[1], s[2]], data)
    }
}

/// Stacks per-sample `[c, h, w]` tensors into one NCHW batch.
pub fn stack_batch<T: Element>(items: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = items
        .first()
        .ok_or_else(|| Error::shape("stack_batch", "empty batch"))?
        .shape()
        .to_vec();
    if items.iter().any(|t| t.shape() != first.as_slice()) {
        return Err(Error::shape("stack_batch", "samples differ in shape"));
    }
    let mut shape = vec![items.len()];
    shape.extend_from_slice(&first);
    let data = items.iter().flat_map(|t| t.data().iter().copied()).collect();
    Ok(Tensor::from_parts(shape, data))
}

/// Anomaly maps of one frame, one `[h, w]` map per head resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyMapSet<T> {
    pub maps: Vec<Tensor<T>>,
}

impl<T: Element> AnomalyMapSet<T> {
    pub fn resolutions(&self) -> Vec<[usize; 2]> {
        self.maps.iter().map(|m| [m.shape()[0], m.shape()[1]]).collect()
    }

    /// Splits per-resolution `[n, 1, h, w]` batch tensors into per-sample sets.
    pub fn split_batch(batched: &[Tensor<T>]) -> Vec<Self> {
        let Some(first) = batched.first() else {
            return Vec::new();
        };
        let n = first.shape()[0];
        (0..n)
            .map(|i| AnomalyMapSet {
                maps: batched
                    .iter()
                    .map(|t| {
                        let (h, w) = (t.shape()[2], t.shape()[3]);
                        Tensor::from_parts(vec![h, w], t.data()[i * h * w..(i + 1) * h * w].to_vec())
                    })
                    .collect(),
            })
            .collect()
    }

    /// Stacks per-sample sets into per-resolution `[n, 1, h, w]` tensors.
    pub fn stack(sets: &[Self]) -> Result<Vec<Tensor<T>>> {
        let first = sets.first().ok_or_else(|| Error::shape("map_stack", "empty batch"))?;
        (0..first.maps.len())
            .map(|k| {
                let items: Vec<Tensor<T>> = sets
                    .iter()
                    .map(|s| {
                        let m = &s.maps[k];
                        Tensor::from_parts(vec![1, m.shape()[0], m.shape()[1]], m.data().to_vec())
                    })
                    .collect();
                stack_batch(&items)
            })
            .collect()
    }
}

/// Depthwise-separable projection of one role (Q, K or V).
#[derive(Clone, Debug)]
struct Projection {
    dw: Conv2d,
    bn: BatchNorm2d,
    pw: Conv2d,
}

impl Projection {
    fn new<T: Element>(store: &mut ParamStore<T>, rng: &mut Rng, name: &str, c: usize, d: usize, stride: usize) -> Self {
        Self {
            dw: Conv2d::new_unbiased(store, rng, &format!("{name}.dw"), c, c, 3, stride, 1, c),
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), c),
            pw: Conv2d::new_unbiased(store, rng, &format!("{name}.pw"), c, d, 1, 1, 0, 1),
        }
    }

    /// `[n, tokens, d]` token matrix.
    fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, p: Var<'g, T>) -> Result<Var<'g, T>> {
        let y = self.pw.forward(ctx, self.bn.forward(ctx, self.dw.forward(ctx, p)?)?)?;
        let s = y.shape();
        y.reshape(&[s[0], s[1], s[2] * s[3]])?.transpose_last2()
    }
}

/// `softmax(Q·Kᵀ / sqrt(d))·V` over `[n, tokens, d]` inputs.
pub fn self_attention<'g, T: Element>(q: Var<'g, T>, k: Var<'g, T>, v: Var<'g, T>) -> Result<Var<'g, T>> {
    let d = *q.shape().last().unwrap_or(&1);
    let scores = q.matmul(&k.transpose_last2()?)?.scale(1.0 / (d as f64).sqrt());
    scores.softmax_rows().matmul(&v)
}

#[derive(Clone, Debug)]
struct AttentionHead {
    q: Projection,
    k: Projection,
    v: Projection,
}

#[derive(Clone, Debug)]
enum Ffn {
    Pointwise(Conv2d, Conv2d),
    Dense(Linear, Linear),
}

#[derive(Clone, Debug)]
pub struct CvtBlock {
    heads: Vec<AttentionHead>,
    proj: Conv2d,
    bn: BatchNorm2d,
    ffn: Ffn,
    d: usize,
}

impl CvtBlock {
    fn new<T: Element>(store: &mut ParamStore<T>, rng: &mut Rng, name: &str, cfg: &ModelConfig, latent: [usize; 2]) -> Self {
        let (c, d) = (cfg.c, cfg.d);
        let heads = (0..cfg.s)
            .map(|h| {
                let hn = format!("{name}.head{h}");
                AttentionHead {
                    q: Projection::new(store, rng, &format!("{hn}.q"), c, d, 1),
                    k: Projection::new(store, rng, &format!("{hn}.k"), c, d, 2),
                    v: Projection::new(store, rng, &format!("{hn}.v"), c, d, 2),
                }
            })
            .collect();
        let proj = Conv2d::pointwise(store, rng, &format!("{name}.proj"), d * cfg.s, c);
        let bn = BatchNorm2d::new(store, &format!("{name}.bn"), c);
        let ffn = match cfg.ffn_kind {
            FfnKind::Pointwise => Ffn::Pointwise(
                Conv2d::pointwise(store, rng, &format!("{name}.ffn1"), c, 4 * c),
                Conv2d::pointwise(store, rng, &format!("{name}.ffn2"), 4 * c, c),
            ),
            FfnKind::Dense => {
                let flat = c * latent[0] * latent[1];
                Ffn::Dense(
                    Linear::new(store, rng, &format!("{name}.ffn1"), flat, 4 * c),
                    Linear::new(store, rng, &format!("{name}.ffn2"), 4 * c, flat),
                )
            }
        };
        Self { heads, proj, bn, ffn, d }
    }

    pub fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, p: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = p.shape();
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let zs = self
            .heads
            .iter()
            .map(|head| {
                let z = self_attention(head.q.forward(ctx, p)?, head.k.forward(ctx, p)?, head.v.forward(ctx, p)?)?;
                z.transpose_last2()?.reshape(&[n, self.d, h, w])
            })
            .collect::<Result<Vec<_>>>()?;
        let z_star = self.proj.forward(ctx, Var::concat_channels(&zs)?)?.add(&p)?;
        let normed = self.bn.forward(ctx, z_star)?;
        let out = match &self.ffn {
            Ffn::Pointwise(a, b) => b.forward(ctx, a.forward(ctx, normed)?.relu())?,
            Ffn::Dense(a, b) => {
                let flat = normed.reshape(&[n, shape[1] * h * w])?;
                b.forward(ctx, a.forward(ctx, flat)?.relu())?.reshape(&shape)?
            }
        };
        out.add(&z_star)
    }
}

/// Downsampling block plus the CvT blocks; the part shared by the
/// autoencoder and the student.
#[derive(Clone, Debug)]
pub struct Backbone {
    convs: Vec<(Conv2d, BatchNorm2d)>,
    pub blocks: Vec<CvtBlock>,
}

impl Backbone {
    fn new<T: Element>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &ModelConfig) -> Result<Self> {
        let layers = cfg.down_layers()?;
        let convs = layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                (
                    Conv2d::new_unbiased(
                        store,
                        rng,
                        &format!("enc.conv{i}"),
                        l.in_channels,
                        l.out_channels,
                        l.kernel,
                        l.stride,
                        l.padding,
                        1,
                    ),
                    BatchNorm2d::new(store, &format!("enc.bn{i}"), l.out_channels),
                )
            })
            .collect();
        let latent = cfg.latent_size()?;
        let blocks = (0..cfg.m)
            .map(|j| CvtBlock::new(store, rng, &format!("blk{j}"), cfg, latent))
            .collect();
        Ok(Self { convs, blocks })
    }

    /// Output P of the downsampling block.
    pub fn encode<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut h = x;
        for (conv, bn) in &self.convs {
            h = bn.forward(ctx, conv.forward(ctx, h)?)?.relu();
        }
        Ok(h)
    }

    pub fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut h = self.encode(ctx, x)?;
        for b in &self.blocks {
            h = b.forward(ctx, h)?;
        }
        Ok(h)
    }
}

#[derive(Clone, Debug)]
struct OutputHead {
    conv0: Conv2d,
    conv1: Conv2d,
    resolution: [usize; 2],
}

impl OutputHead {
    fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, z: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.conv1.forward(ctx, self.conv0.forward(ctx, z)?.relu())?.relu();
        h.max_resize(self.resolution[0], self.resolution[1])
    }
}

fn check_input<T: Element>(cfg: &ModelConfig, x: &Var<'_, T>) -> Result<()> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::shape("student", format!("expected NCHW input, got {s:?}")));
    }
    if s[1] != cfg.input_channels() {
        return Err(Error::Dimension {
            op: "student",
            axis: "frames·channels",
            expected: cfg.input_channels(),
            got: s[1],
        });
    }
    if [s[2], s[3]] != cfg.input_resolution {
        return Err(Error::shape(
            "student",
            format!("input {}x{} does not match configured {:?}", s[2], s[3], cfg.input_resolution),
        ));
    }
    Ok(())
}

pub struct StudentModel<T: Element> {
    pub cfg: ModelConfig,
    pub backbone: Backbone,
    heads: Vec<OutputHead>,
    pub store: ParamStore<T>,
}

impl<T: Element> StudentModel<T> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut r = rng::derive(seed, rng::label("backbone"));
        let backbone = Backbone::new(&mut store, &mut r, cfg)?;
        let mut r = rng::derive(seed, rng::label("heads"));
        let heads = cfg
            .head_resolutions
            .iter()
            .enumerate()
            .map(|(k, &resolution)| OutputHead {
                conv0: Conv2d::new(&mut store, &mut r, &format!("head{k}.conv0"), cfg.c, HEAD_HIDDEN, 3, 1, 1, 1),
                conv1: Conv2d::new(&mut store, &mut r, &format!("head{k}.conv1"), HEAD_HIDDEN, 1, 3, 1, 1, 1),
                resolution,
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            backbone,
            heads,
            store,
        })
    }

    /// Per-resolution `[n, 1, h_k, w_k]` maps for an NCHW input.
    pub fn forward<'g>(&self, ctx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        check_input(&self.cfg, &x)?;
        let z = self.backbone.forward(ctx, x)?;
        self.heads.iter().map(|h| h.forward(ctx, z)).collect()
    }

    /// Eval-mode maps for a batch.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<AnomalyMapSet<T>>> {
        let g = Graph::new();
        let ctx = Ctx::new(&g, &self.store, false);
        let maps = self.forward(&ctx, g.constant(x.clone()))?;
        let values: Vec<Tensor<T>> = maps.iter().map(|m| (*m.value()).clone()).collect();
        Ok(AnomalyMapSet::split_batch(&values))
    }

    /// Copies backbone weights (and running statistics) from a pre-trained
    /// autoencoder.
    pub fn load_backbone(&mut self, ae: &ParamStore<T>) -> Result<usize> {
        let n = self.store.load_from(ae, "enc.")? + self.store.load_from(ae, "blk")?;
        Ok(n)
    }
}

#[derive(Clone, Debug)]
struct Decoder {
    layers: Vec<(ConvTranspose2d, Option<BatchNorm2d>)>,
}

impl Decoder {
    fn new<T: Element>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &ModelConfig) -> Result<Self> {
        let down = cfg.down_layers()?;
        let layers = down
            .iter()
            .rev()
            .enumerate()
            .map(|(i, l)| {
                let formula = (l.output[0] - 1) * l.stride + l.kernel;
                let base = formula.checked_sub(2 * l.padding);
                let op_h = base.and_then(|b| l.input[0].checked_sub(b));
                let formula_w = (l.output[1] - 1) * l.stride + l.kernel;
                let op_w = formula_w.checked_sub(2 * l.padding).and_then(|b| l.input[1].checked_sub(b));
                let output_padding = match (op_h, op_w) {
                    (Some(a), Some(b)) if a == b && a < l.stride.max(1) => a,
                    _ => {
                        return Err(Error::shape(
                            "decoder",
                            format!("cannot mirror layer enc.conv{} ({:?} -> {:?})", down.len() - 1 - i, l.input, l.output),
                        ))
                    }
                };
                let last = i + 1 == down.len();
                let out_ch = if last { cfg.frame_channels } else { l.in_channels };
                let deconv = ConvTranspose2d::new(
                    store,
                    rng,
                    &format!("dec.deconv{i}"),
                    l.out_channels,
                    out_ch,
                    l.kernel,
                    l.stride,
                    l.padding,
                    output_padding,
                );
                let bn = (!last).then(|| BatchNorm2d::new(store, &format!("dec.bn{i}"), out_ch));
                Ok((deconv, bn))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, z: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut h = z;
        for (deconv, bn) in &self.layers {
            h = deconv.forward(ctx, h)?;
            if let Some(bn) = bn {
                h = bn.forward(ctx, h)?.relu();
            }
        }
        Ok(h)
    }
}

/// Backbone plus mirrored decoder reconstructing the middle frame.
pub struct Autoencoder<T: Element> {
    pub cfg: ModelConfig,
    pub backbone: Backbone,
    decoder: Decoder,
    pub store: ParamStore<T>,
}

impl<T: Element> Autoencoder<T> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut r = rng::derive(seed, rng::label("backbone"));
        let backbone = Backbone::new(&mut store, &mut r, cfg)?;
        let mut r = rng::derive(seed, rng::label("decoder"));
        let decoder = Decoder::new(&mut store, &mut r, cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            backbone,
            decoder,
            store,
        })
    }

    /// `[n, frame_channels, H, W]` reconstruction of the middle frame.
    pub fn forward<'g>(&self, ctx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        check_input(&self.cfg, &x)?;
        let z = self.backbone.forward(ctx, x)?;
        self.decoder.forward(ctx, z)
    }

    pub fn decode<'g>(&self, ctx: &Ctx<'g, '_, T>, z: Var<'g, T>) -> Result<Var<'g, T>> {
        self.decoder.forward(ctx, z)
    }

    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = Graph::new();
        let ctx = Ctx::new(&g, &self.store, false);
        Ok((*self.forward(&ctx, g.constant(x.clone()))?.value()).clone())
    }
}
