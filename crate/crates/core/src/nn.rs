//! Parameter storage and the handful of layers the networks are built from.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{BufferUpdate, Element, Gradients, Graph, Tensor, Var};

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

fn next_uid() -> u64 {
    NEXT_STORE.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct ParamEntry<T> {
    pub name: String,
    pub value: Arc<Tensor<T>>,
    pub grad: Option<Tensor<T>>,
    /// Running statistics are stored alongside weights but never trained.
    pub trainable: bool,
}

/// Named, ordered set of tensors owned by one network.
#[derive(Debug)]
pub struct ParamStore<T> {
    uid: u64,
    entries: Vec<ParamEntry<T>>,
}

impl<T: Clone> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            uid: next_uid(),
            entries: self.entries.clone(),
        }
    }
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            uid: next_uid(),
            entries: Vec::new(),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry {
            name,
            value: Arc::new(value),
            grad: None,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(Error::Checkpoint(format!(
                "{}: shape {:?} does not match {:?}",
                entry.name,
                value.shape(),
                entry.value.shape()
            )));
        }
        entry.value = Arc::new(value);
        Ok(())
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.entries[id.0].value)
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    /// Binds a parameter onto `g`.
    pub fn var<'g>(&self, g: &'g Graph<T>, id: ParamId) -> Var<'g, T> {
        let entry = &self.entries[id.0];
        g.bind((self.uid, id.0), &entry.value, entry.trainable)
    }

    /// Adds the gradients reaching this store's parameters during `grads`'
    /// backward pass into each entry's accumulator.
    pub fn accumulate_grads(&mut self, g: &Graph<T>, grads: &Gradients<T>) {
        for (i, entry) in self.entries.iter_mut().enumerate() {
            if !entry.trainable {
                continue;
            }
            let Some(gr) = g.bound_id((self.uid, i)).and_then(|id| grads.get_id(id)) else {
                continue;
            };
            match &mut entry.grad {
                Some(acc) => acc.add_assign(gr),
                slot @ None => *slot = Some(gr.clone()),
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad = None;
        }
    }

    /// Applies running-statistic updates recorded on a graph for this store.
    pub fn apply_updates(&mut self, updates: &[BufferUpdate<T>]) {
        for u in updates.iter().filter(|u| u.store == self.uid) {
            self.entries[u.index].value = Arc::new(u.value.clone());
        }
    }

    /// Hash of every stored bit, for cheap equality checks across steps.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for e in &self.entries {
            for b in e.name.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
            }
            for v in e.value.data() {
                h = (h ^ v.as_f64().to_bits()).wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Copies every same-named entry of `other` into this store.
    pub fn load_from<U: Element>(&mut self, other: &ParamStore<U>, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for src in other.entries() {
            if !src.name.starts_with(prefix) {
                continue;
            }
            if let Some(id) = self.find(&src.name) {
                self.set(id, src.value.cast())?;
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Same parameters in another element type.
    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            uid: next_uid(),
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: Arc::new(e.value.cast()),
                    grad: None,
                    trainable: e.trainable,
                })
                .collect(),
        }
    }
}

/// Forward-pass context: the graph being recorded, the parameters in use and
/// whether batch norms run in training mode.
pub struct Ctx<'g, 's, T: Element> {
    pub g: &'g Graph<T>,
    pub store: &'s ParamStore<T>,
    pub training: bool,
}

impl<'g, 's, T: Element> Ctx<'g, 's, T> {
    pub fn new(g: &'g Graph<T>, store: &'s ParamStore<T>, training: bool) -> Self {
        Self { g, store, training }
    }

    pub fn p(&self, id: ParamId) -> Var<'g, T> {
        self.store.var(self.g, id)
    }
}

fn uniform<T: Element>(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2d {
    /// Registers `<name>.w` / `<name>.b`, initialized uniform in
    /// ±sqrt(1/fan_in).
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Self {
        let fan_in = in_channels / groups * kernel * kernel;
        let bound = (1.0 / fan_in as f64).sqrt();
        let weight = store.add(
            format!("{name}.w"),
            uniform(rng, &[out_channels, in_channels / groups, kernel, kernel], bound),
            true,
        );
        let bias = Some(store.add(format!("{name}.b"), uniform(rng, &[out_channels], bound), true));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
        }
    }

    pub fn pointwise<T: Element>(store: &mut ParamStore<T>, rng: &mut Rng, name: &str, cin: usize, cout: usize) -> Self {
        Self::new(store, rng, name, cin, cout, 1, 1, 0, 1)
    }

    /// Same layer without a bias term, for convolutions feeding a batch norm
    /// or a bias-free projection.
    #[allow(clippy::too_many_arguments)]
    pub fn new_unbiased<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Self {
        let fan_in = in_channels / groups * kernel * kernel;
        let bound = (1.0 / fan_in as f64).sqrt();
        let weight = store.add(
            format!("{name}.w"),
            uniform(rng, &[out_channels, in_channels / groups, kernel, kernel], bound),
            true,
        );
        Self {
            weight,
            bias: None,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
        }
    }

    pub fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let bias = match self.bias {
            Some(b) => ctx.p(b),
            None => ctx.g.constant(Tensor::zeros(&[self.out_channels])),
        };
        x.conv2d(&ctx.p(self.weight), &bias, self.stride, self.padding, self.groups)
    }

    pub fn output_size(&self, input: usize) -> Option<usize> {
        crate::tensor::ops::conv2d_output_size(input, self.kernel, self.stride, self.padding)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        let bound = (1.0 / (out_channels * kernel * kernel) as f64).sqrt();
        let weight = store.add(
            format!("{name}.w"),
            uniform(rng, &[in_channels, out_channels, kernel, kernel], bound),
            true,
        );
        let bias = store.add(format!("{name}.b"), uniform(rng, &[out_channels], bound), true);
        Self {
            weight,
            bias,
            stride,
            padding,
            output_padding,
        }
    }

    pub fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.conv_transpose2d(
            &ctx.p(self.weight),
            &ctx.p(self.bias),
            self.stride,
            self.padding,
            self.output_padding,
        )
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm2d {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one()), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            running_mean: store.add(format!("{name}.mean"), Tensor::zeros(&[channels]), false),
            running_var: store.add(format!("{name}.var"), Tensor::full(&[channels], T::one()), false),
        }
    }

    pub fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let (y, stats) = x.batch_norm2d(
            &ctx.p(self.gamma),
            &ctx.p(self.beta),
            ctx.store.get(self.running_mean),
            ctx.store.get(self.running_var),
            ctx.training,
            BN_MOMENTUM,
            BN_EPS,
        )?;
        if let Some(stats) = stats {
            let uid = ctx.store.uid();
            ctx.g.push_update(BufferUpdate {
                store: uid,
                index: self.running_mean.0,
                value: stats.running_mean,
            });
            ctx.g.push_update(BufferUpdate {
                store: uid,
                index: self.running_var.0,
                value: stats.running_var,
            });
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Element>(store: &mut ParamStore<T>, rng: &mut Rng, name: &str, fin: usize, fout: usize) -> Self {
        let bound = (1.0 / fin as f64).sqrt();
        Self {
            weight: store.add(format!("{name}.w"), uniform(rng, &[fout, fin], bound), true),
            bias: store.add(format!("{name}.b"), uniform(rng, &[fout], bound), true),
        }
    }

    pub fn forward<'g, T: Element>(&self, ctx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.linear(&ctx.p(self.weight), &ctx.p(self.bias))
    }
}
