//! Multi-resolution discriminator: the largest map passes through two strided
//! convolutions, each smaller map is resized to the running grid and
//! concatenated before another strided convolution, and the result is pooled
//! to 1×1, joined with the smallest map and fused into one logit.

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Ctx, ParamStore};
use crate::rng;
use crate::tensor::{Element, Var};

pub struct Discriminator<T: Element> {
    pub resolutions: Vec<[usize; 2]>,
    stem: [Conv2d; 2],
    mids: Vec<Conv2d>,
    out: Conv2d,
    pub store: ParamStore<T>,
}

pub const STEM_CHANNELS: [usize; 2] = [16, 32];
pub const MID_CHANNELS: usize = 64;

impl<T: Element> Discriminator<T> {
    /// `resolutions` must be sorted by increasing area, as in the model config.
    pub fn new(resolutions: &[[usize; 2]], seed: u64) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::Config("discriminator needs at least one resolution".into()));
        }
        let mut store = ParamStore::new();
        let mut r = rng::derive(seed, rng::label("discriminator"));
        let stem = [
            Conv2d::new(&mut store, &mut r, "stem0", 1, STEM_CHANNELS[0], 3, 2, 1, 1),
            Conv2d::new(&mut store, &mut r, "stem1", STEM_CHANNELS[0], STEM_CHANNELS[1], 3, 2, 1, 1),
        ];
        let mut ch = STEM_CHANNELS[1];
        let mut mids = Vec::new();
        for k in (1..resolutions.len().saturating_sub(1)).rev() {
            mids.push(Conv2d::new(&mut store, &mut r, &format!("mid{k}"), ch + 1, MID_CHANNELS, 3, 2, 1, 1));
            ch = MID_CHANNELS;
        }
        let out = Conv2d::pointwise(&mut store, &mut r, "out", ch + 1, 1);
        Ok(Self {
            resolutions: resolutions.to_vec(),
            stem,
            mids,
            out,
            store,
        })
    }

    /// `[n, 1, 1, 1]` logits for per-resolution `[n, 1, h, w]` maps.
    pub fn forward<'g>(&self, ctx: &Ctx<'g, '_, T>, maps: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        if maps.len() != self.resolutions.len() {
            return Err(Error::Dimension {
                op: "discriminator",
                axis: "maps",
                expected: self.resolutions.len(),
                got: maps.len(),
            });
        }
        for (m, r) in maps.iter().zip(&self.resolutions) {
            let s = m.shape();
            if s.len() != 4 || s[1] != 1 || [s[2], s[3]] != *r {
                return Err(Error::shape(
                    "discriminator",
                    format!("map of shape {s:?} does not match resolution {r:?}"),
                ));
            }
        }
        let largest = maps[maps.len() - 1];
        let mut h = self.stem[0].forward(ctx, largest)?.relu();
        h = self.stem[1].forward(ctx, h)?.relu();
        let middle = (1..maps.len().saturating_sub(1)).rev();
        for (conv, k) in self.mids.iter().zip(middle) {
            let s = h.shape();
            let m = maps[k].max_resize(s[2], s[3])?;
            h = conv.forward(ctx, Var::concat_channels(&[h, m])?)?.relu();
        }
        let pooled = h.adaptive_max_pool2d(1, 1)?;
        let smallest = maps[0].adaptive_max_pool2d(1, 1)?;
        self.out.forward(ctx, Var::concat_channels(&[pooled, smallest])?)
    }
}
