use std::sync::Arc;

use super::check_dim;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

fn same_shape<T: Element>(op: &'static str, a: &Var<'_, T>, b: &Var<'_, T>) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

impl<'g, T: Element> Var<'g, T> {
    pub fn add(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        same_shape("add", self, other)?;
        let (a, b) = (self.value(), other.value());
        let out = Tensor::from_parts(
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect(),
        );
        Ok(self
            .graph()
            .op("add", out, &[*self, *other], |g| vec![Some(g.clone()), Some(g.clone())]))
    }

    pub fn sub(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        same_shape("sub", self, other)?;
        let (a, b) = (self.value(), other.value());
        let out = Tensor::from_parts(
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect(),
        );
        Ok(self.graph().op("sub", out, &[*self, *other], |g| {
            vec![Some(g.clone()), Some(g.map(|v| -v))]
        }))
    }

    pub fn mul(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        same_shape("mul", self, other)?;
        let (a, b) = (self.value(), other.value());
        let out = Tensor::from_parts(
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect(),
        );
        Ok(self.graph().op("mul", out, &[*self, *other], move |g| {
            let ga = zip_map(g, &b, |g, y| g * y);
            let gb = zip_map(g, &a, |g, x| g * x);
            vec![Some(ga), Some(gb)]
        }))
    }

    pub fn scale(&self, factor: f64) -> Var<'g, T> {
        let f = T::from_f64(factor);
        let out = self.value().map(|v| v * f);
        self.graph().op("scale", out, &[*self], move |g| vec![Some(g.map(|v| v * f))])
    }

    pub fn relu(&self) -> Var<'g, T> {
        let x = self.value();
        let out = x.map(|v| if v > T::zero() { v } else { T::zero() });
        self.graph().op("relu", out, &[*self], move |g| {
            vec![Some(zip_map(g, &x, |g, x| if x > T::zero() { g } else { T::zero() }))]
        })
    }

    pub fn sum(&self) -> Var<'g, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.graph().op("sum", Tensor::scalar(x.sum()), &[*self], move |g| {
            vec![Some(Tensor::full(&shape, g.item()))]
        })
    }

    pub fn mean(&self) -> Var<'g, T> {
        let n = self.value().len();
        self.sum().scale(1.0 / n as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g, T>> {
        let x = self.value();
        let out = x.reshaped(shape)?;
        let orig = x.shape().to_vec();
        Ok(self.graph().op("reshape", out, &[*self], move |g| {
            vec![Some(Tensor::from_parts(orig.clone(), g.data().to_vec()))]
        }))
    }

    /// Swaps the last two axes of a rank-3 tensor.
    pub fn transpose_last2(&self) -> Result<Var<'g, T>> {
        let x = self.value();
        let &[b, m, n] = x.shape() else {
            return Err(Error::shape("transpose", format!("expected rank 3, got {:?}", x.shape())));
        };
        let out = Tensor::from_parts(vec![b, n, m], transpose3(x.data(), b, m, n));
        Ok(self.graph().op("transpose", out, &[*self], move |g| {
            vec![Some(Tensor::from_parts(vec![b, m, n], transpose3(g.data(), b, n, m)))]
        }))
    }

    /// Concatenates NCHW tensors along the channel axis.
    pub fn concat_channels(parts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let [n, _, h, w] = first.value().dims4("concat")?;
        let mut channels = Vec::with_capacity(parts.len());
        for p in parts {
            let [pn, pc, ph, pw] = p.value().dims4("concat")?;
            check_dim("concat", "batch", n, pn)?;
            check_dim("concat", "height", h, ph)?;
            check_dim("concat", "width", w, pw)?;
            channels.push(pc);
        }
        let total: usize = channels.iter().sum();
        let hw = h * w;
        let values: Vec<Arc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
        let mut out = Vec::with_capacity(n * total * hw);
        for s in 0..n {
            for (v, &c) in values.iter().zip(&channels) {
                out.extend_from_slice(&v.data()[s * c * hw..(s + 1) * c * hw]);
            }
        }
        let out = Tensor::from_parts(vec![n, total, h, w], out);
        Ok(first.graph().op("concat", out, parts, move |g| {
            let mut grads: Vec<Vec<T>> = channels.iter().map(|&c| Vec::with_capacity(n * c * hw)).collect();
            let gd = g.data();
            let mut off = 0;
            for _ in 0..n {
                for (gi, &c) in grads.iter_mut().zip(&channels) {
                    gi.extend_from_slice(&gd[off..off + c * hw]);
                    off += c * hw;
                }
            }
            grads
                .into_iter()
                .zip(&channels)
                .map(|(d, &c)| Some(Tensor::from_parts(vec![n, c, h, w], d)))
                .collect()
        }))
    }

    /// Sum of several same-shaped nodes.
    pub fn add_all(parts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let (first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::shape("add_all", "no inputs"))?;
        rest.iter().try_fold(*first, |acc, p| acc.add(p))
    }
}

pub(crate) fn zip_map<T: Element>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_parts(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

pub(crate) fn transpose3<T: Element>(x: &[T], b: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for s in 0..b {
        let src = &x[s * m * n..(s + 1) * m * n];
        let dst = &mut out[s * m * n..(s + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
    out
}
