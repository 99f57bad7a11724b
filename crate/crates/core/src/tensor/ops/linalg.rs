use super::check_dim;
use crate::error::{Error, Result};
use crate::tensor::gemm::{gemm, MatRef};
use crate::tensor::{Element, Tensor, Var};

/// (batch, rows, cols) of a rank-2 or rank-3 tensor.
fn mat_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [m, n] => Ok((1, m, n)),
        [b, m, n] => Ok((b, m, n)),
        _ => Err(Error::shape(op, format!("expected rank 2 or 3, got {shape:?}"))),
    }
}

/// Batched `a·b` where `a` is `b×m×k` and `b` is `b×k×n` (ranks 2 or 3).
fn bmm<T: Element>(a: &[T], ta: bool, b: &[T], tb: bool, batch: usize, m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); batch * m * n];
    for s in 0..batch {
        let sa = &a[s * m * k..(s + 1) * m * k];
        let sb = &b[s * k * n..(s + 1) * k * n];
        let va = if ta { MatRef::new(sa, k, m).t() } else { MatRef::new(sa, m, k) };
        let vb = if tb { MatRef::new(sb, n, k).t() } else { MatRef::new(sb, k, n) };
        gemm(T::one(), va, vb, T::zero(), &mut out[s * m * n..(s + 1) * m * n]);
    }
    out
}

impl<'g, T: Element> Var<'g, T> {
    /// Matrix product; rank-3 inputs are multiplied batch-wise.
    pub fn matmul(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        let (ba, m, k) = mat_dims("matmul", a.shape())?;
        let (bb, k2, n) = mat_dims("matmul", b.shape())?;
        if a.ndim() != b.ndim() {
            return Err(Error::shape("matmul", format!("rank mismatch {:?} vs {:?}", a.shape(), b.shape())));
        }
        check_dim("matmul", "batch", ba, bb)?;
        check_dim("matmul", "inner", k, k2)?;
        let out = bmm(a.data(), false, b.data(), false, ba, m, k, n);
        let shape = if a.ndim() == 2 { vec![m, n] } else { vec![ba, m, n] };
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        Ok(self.graph().op("matmul", Tensor::from_parts(shape, out), &[*self, *other], move |g| {
            // dA = dC·Bᵀ, dB = Aᵀ·dC
            let ga = bmm(g.data(), false, b.data(), true, ba, m, n, k);
            let gb = bmm(a.data(), true, g.data(), false, ba, k, m, n);
            vec![
                Some(Tensor::from_parts(sa.clone(), ga)),
                Some(Tensor::from_parts(sb.clone(), gb)),
            ]
        }))
    }

    /// Softmax along the last axis.
    pub fn softmax_rows(&self) -> Var<'g, T> {
        let x = self.value();
        let cols = *x.shape().last().expect("non-empty shape");
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let y = std::sync::Arc::new(Tensor::from_parts(x.shape().to_vec(), out));
        let y_back = std::sync::Arc::clone(&y);
        self.graph().op("softmax", (*y).clone(), &[*self], move |g| {
            let mut gx = vec![T::zero(); g.len()];
            for ((gr, yr), out) in g
                .data()
                .chunks(cols)
                .zip(y_back.data().chunks(cols))
                .zip(gx.chunks_mut(cols))
            {
                let dot = gr.iter().zip(yr).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                for ((o, &gv), &yv) in out.iter_mut().zip(gr).zip(yr) {
                    *o = yv * (gv - dot);
                }
            }
            vec![Some(Tensor::from_parts(g.shape().to_vec(), gx))]
        })
    }

    /// Fully connected layer: `x` is `n×in`, `weight` is `out×in`, `bias` has
    /// `out` entries.
    pub fn linear(&self, weight: &Var<'g, T>, bias: &Var<'g, T>) -> Result<Var<'g, T>> {
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let &[n, fin] = x.shape() else {
            return Err(Error::shape("linear", format!("input must be rank 2, got {:?}", x.shape())));
        };
        let &[fout, win] = w.shape() else {
            return Err(Error::shape("linear", format!("weight must be rank 2, got {:?}", w.shape())));
        };
        check_dim("linear", "in_features", fin, win)?;
        check_dim("linear", "bias", fout, b.len())?;
        let mut out = vec![T::zero(); n * fout];
        for row in out.chunks_mut(fout) {
            row.copy_from_slice(b.data());
        }
        gemm(
            T::one(),
            MatRef::new(x.data(), n, fin),
            MatRef::new(w.data(), fout, fin).t(),
            T::one(),
            &mut out,
        );
        let out = Tensor::from_parts(vec![n, fout], out);
        Ok(self.graph().op("linear", out, &[*self, *weight, *bias], move |g| {
            let gm = MatRef::new(g.data(), n, fout);
            let mut gx = vec![T::zero(); n * fin];
            gemm(T::one(), gm, MatRef::new(w.data(), fout, fin), T::zero(), &mut gx);
            let mut gw = vec![T::zero(); fout * fin];
            gemm(T::one(), gm.t(), MatRef::new(x.data(), n, fin), T::zero(), &mut gw);
            let mut gb = vec![T::zero(); fout];
            for row in g.data().chunks(fout) {
                for (acc, &v) in gb.iter_mut().zip(row) {
                    *acc = *acc + v;
                }
            }
            vec![
                Some(Tensor::from_parts(vec![n, fin], gx)),
                Some(Tensor::from_parts(vec![fout, fin], gw)),
                Some(Tensor::from_parts(vec![fout], gb)),
            ]
        }))
    }
}
