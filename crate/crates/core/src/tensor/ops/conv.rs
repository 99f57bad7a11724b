use super::check_dim;
use crate::error::{Error, Result};
use crate::tensor::gemm::{gemm, MatRef};
use crate::tensor::{Element, Tensor, Var};

/// Spatial output size of a convolution, or `None` if the kernel does not fit.
pub fn conv2d_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn conv_transpose2d_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    ((input - 1) * stride + kernel + output_padding).checked_sub(2 * padding)
}

/// Geometry of a convolution seen from its (larger) input side.
#[derive(Clone, Copy, Debug)]
struct Geom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn out_len(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfolds channels `[c0, c0+cn)` into a `(cn·k·k) × (n·ho·wo)` matrix.
fn im2col<T: Element>(x: &[T], g: &Geom, c0: usize, cn: usize) -> Vec<T> {
    let l = g.out_len();
    let cols_w = g.n * l;
    let mut cols = vec![T::zero(); cn * g.k * g.k * cols_w];
    for ci in 0..cn {
        let c = c0 + ci;
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst_row = &mut cols[row * cols_w..(row + 1) * cols_w];
                for s in 0..g.n {
                    let plane = &x[(s * g.c + c) * g.h * g.w..(s * g.c + c + 1) * g.h * g.w];
                    let dst = &mut dst_row[s * l..(s + 1) * l];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let dst_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `x`.
fn col2im<T: Element>(cols: &[T], g: &Geom, c0: usize, cn: usize, x: &mut [T]) {
    let l = g.out_len();
    let cols_w = g.n * l;
    for ci in 0..cn {
        let c = c0 + ci;
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src_row = &cols[row * cols_w..(row + 1) * cols_w];
                for s in 0..g.n {
                    let plane = &mut x[(s * g.c + c) * g.h * g.w..(s * g.c + c + 1) * g.h * g.w];
                    let src = &src_row[s * l..(s + 1) * l];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                let d = &mut plane[iy * g.w + ix as usize];
                                *d = *d + src[oy * g.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `[n, c, l]` -> `[c, n·l]`.
fn to_channel_major<T: Element>(x: &[T], n: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            out[ch * n * l + s * l..ch * n * l + (s + 1) * l]
                .copy_from_slice(&x[(s * c + ch) * l..(s * c + ch + 1) * l]);
        }
    }
    out
}

/// `[c, n·l]` -> `[n, c, l]`.
fn to_batch_major<T: Element>(x: &[T], n: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            out[(s * c + ch) * l..(s * c + ch + 1) * l]
                .copy_from_slice(&x[ch * n * l + s * l..ch * n * l + (s + 1) * l]);
        }
    }
    out
}

fn bias_grad<T: Element>(g: &[T], n: usize, c: usize, l: usize) -> Vec<T> {
    let mut gb = vec![T::zero(); c];
    for s in 0..n {
        for (ch, acc) in gb.iter_mut().enumerate() {
            let plane = &g[(s * c + ch) * l..(s * c + ch + 1) * l];
            *acc = plane.iter().fold(*acc, |a, &v| a + v);
        }
    }
    gb
}

fn conv_forward<T: Element>(x: &[T], w: &[T], b: &[T], geom: &Geom, f: usize, groups: usize) -> Vec<T> {
    let cg = geom.c / groups;
    let fg = f / groups;
    let kk = cg * geom.k * geom.k;
    let cols_w = geom.n * geom.out_len();
    let mut yt = vec![T::zero(); f * cols_w];
    for gi in 0..groups {
        let pointwise = geom.k == 1 && geom.stride == 1 && geom.pad == 0 && groups == 1;
        let cols = if pointwise {
            to_channel_major(x, geom.n, geom.c, geom.h * geom.w)
        } else {
            im2col(x, geom, gi * cg, cg)
        };
        gemm(
            T::one(),
            MatRef::new(&w[gi * fg * kk..(gi + 1) * fg * kk], fg, kk),
            MatRef::new(&cols, kk, cols_w),
            T::zero(),
            &mut yt[gi * fg * cols_w..(gi + 1) * fg * cols_w],
        );
    }
    let mut y = to_batch_major(&yt, geom.n, f, geom.out_len());
    let l = geom.out_len();
    for s in 0..geom.n {
        for (ch, &bv) in b.iter().enumerate() {
            for v in &mut y[(s * f + ch) * l..(s * f + ch + 1) * l] {
                *v = *v + bv;
            }
        }
    }
    y
}

fn depthwise_forward<T: Element>(x: &[T], w: &[T], b: &[T], g: &Geom) -> Vec<T> {
    let l = g.out_len();
    let mut y = vec![T::zero(); g.n * g.c * l];
    for s in 0..g.n {
        for c in 0..g.c {
            let plane = &x[(s * g.c + c) * g.h * g.w..(s * g.c + c + 1) * g.h * g.w];
            let kernel = &w[c * g.k * g.k..(c + 1) * g.k * g.k];
            let out = &mut y[(s * g.c + c) * l..(s * g.c + c + 1) * l];
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut acc = b[c];
                    for ki in 0..g.k {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kj in 0..g.k {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                acc = acc + kernel[ki * g.k + kj] * plane[iy as usize * g.w + ix as usize];
                            }
                        }
                    }
                    out[oy * g.wo + ox] = acc;
                }
            }
        }
    }
    y
}

fn depthwise_backward<T: Element>(x: &[T], w: &[T], gy: &[T], g: &Geom) -> (Vec<T>, Vec<T>) {
    let l = g.out_len();
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); w.len()];
    for s in 0..g.n {
        for c in 0..g.c {
            let base = (s * g.c + c) * g.h * g.w;
            let kernel = &w[c * g.k * g.k..(c + 1) * g.k * g.k];
            let gout = &gy[(s * g.c + c) * l..(s * g.c + c + 1) * l];
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let go = gout[oy * g.wo + ox];
                    for ki in 0..g.k {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kj in 0..g.k {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                let idx = base + iy as usize * g.w + ix as usize;
                                gx[idx] = gx[idx] + kernel[ki * g.k + kj] * go;
                                let wi = c * g.k * g.k + ki * g.k + kj;
                                gw[wi] = gw[wi] + x[idx] * go;
                            }
                        }
                    }
                }
            }
        }
    }
    (gx, gw)
}

impl<'g, T: Element> Var<'g, T> {
    /// 2-D convolution over an NCHW input with a `[f, c/groups, k, k]` weight.
    pub fn conv2d(
        &self,
        weight: &Var<'g, T>,
        bias: &Var<'g, T>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var<'g, T>> {
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let [n, c, h, wd] = x.dims4("conv2d")?;
        let [f, cg, k, k2] = w.dims4("conv2d")?;
        if groups == 0 || c % groups != 0 || f % groups != 0 {
            return Err(Error::shape(
                "conv2d",
                format!("{c} input / {f} output channels not divisible by {groups} groups"),
            ));
        }
        check_dim("conv2d", "weight in_channels", c / groups, cg)?;
        check_dim("conv2d", "kernel width", k, k2)?;
        check_dim("conv2d", "bias", f, b.len())?;
        let ho = conv2d_output_size(h, k, stride, padding)
            .ok_or_else(|| Error::shape("conv2d", format!("kernel {k} does not fit height {h} with padding {padding}")))?;
        let wo = conv2d_output_size(wd, k, stride, padding)
            .ok_or_else(|| Error::shape("conv2d", format!("kernel {k} does not fit width {wd} with padding {padding}")))?;
        let geom = Geom {
            n,
            c,
            h,
            w: wd,
            k,
            stride,
            pad: padding,
            ho,
            wo,
        };
        let depthwise = groups == c && f == c;
        let out = if depthwise {
            depthwise_forward(x.data(), w.data(), b.data(), &geom)
        } else {
            conv_forward(x.data(), w.data(), b.data(), &geom, f, groups)
        };
        let out = Tensor::from_parts(vec![n, f, ho, wo], out);
        let (xs, ws) = (x.shape().to_vec(), w.shape().to_vec());
        Ok(self.graph().op("conv2d", out, &[*self, *weight, *bias], move |gy| {
            let l = geom.out_len();
            let gb = bias_grad(gy.data(), n, f, l);
            if depthwise {
                let (gx, gw) = depthwise_backward(x.data(), w.data(), gy.data(), &geom);
                return vec![
                    Some(Tensor::from_parts(xs.clone(), gx)),
                    Some(Tensor::from_parts(ws.clone(), gw)),
                    Some(Tensor::from_parts(vec![f], gb)),
                ];
            }
            let cgs = c / groups;
            let fg = f / groups;
            let kk = cgs * k * k;
            let cols_w = n * l;
            let gyt = to_channel_major(gy.data(), n, f, l);
            let mut gx = vec![T::zero(); x.len()];
            let mut gw = vec![T::zero(); w.len()];
            let pointwise = k == 1 && stride == 1 && padding == 0 && groups == 1;
            for gi in 0..groups {
                let cols = if pointwise {
                    to_channel_major(x.data(), n, c, h * wd)
                } else {
                    im2col(x.data(), &geom, gi * cgs, cgs)
                };
                let gy_g = MatRef::new(&gyt[gi * fg * cols_w..(gi + 1) * fg * cols_w], fg, cols_w);
                gemm(
                    T::one(),
                    gy_g,
                    MatRef::new(&cols, kk, cols_w).t(),
                    T::zero(),
                    &mut gw[gi * fg * kk..(gi + 1) * fg * kk],
                );
                let mut gcols = vec![T::zero(); kk * cols_w];
                gemm(
                    T::one(),
                    MatRef::new(&w.data()[gi * fg * kk..(gi + 1) * fg * kk], fg, kk).t(),
                    gy_g,
                    T::zero(),
                    &mut gcols,
                );
                if pointwise {
                    gx = to_batch_major(&gcols, n, c, h * wd);
                } else {
                    col2im(&gcols, &geom, gi * cgs, cgs, &mut gx);
                }
            }
            vec![
                Some(Tensor::from_parts(xs.clone(), gx)),
                Some(Tensor::from_parts(ws.clone(), gw)),
                Some(Tensor::from_parts(vec![f], gb)),
            ]
        }))
    }

    /// Transposed convolution with a `[c_in, c_out, k, k]` weight. The output
    /// size is `(in-1)·stride - 2·padding + k + output_padding`.
    pub fn conv_transpose2d(
        &self,
        weight: &Var<'g, T>,
        bias: &Var<'g, T>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var<'g, T>> {
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let [n, cin, hin, win] = x.dims4("conv_transpose2d")?;
        let [wcin, cout, k, k2] = w.dims4("conv_transpose2d")?;
        check_dim("conv_transpose2d", "weight in_channels", cin, wcin)?;
        check_dim("conv_transpose2d", "kernel width", k, k2)?;
        check_dim("conv_transpose2d", "bias", cout, b.len())?;
        if stride == 0 || output_padding >= stride {
            return Err(Error::shape("conv_transpose2d", "output_padding must be smaller than stride"));
        }
        let ho = conv_transpose2d_output_size(hin, k, stride, padding, output_padding)
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::shape("conv_transpose2d", "padding exceeds output height"))?;
        let wo = conv_transpose2d_output_size(win, k, stride, padding, output_padding)
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::shape("conv_transpose2d", "padding exceeds output width"))?;
        // Seen as the adjoint of a convolution from the output back to the input.
        let geom = Geom {
            n,
            c: cout,
            h: ho,
            w: wo,
            k,
            stride,
            pad: padding,
            ho: hin,
            wo: win,
        };
        let lin = hin * win;
        let kk = cout * k * k;
        let xt = to_channel_major(x.data(), n, cin, lin);
        let mut cols = vec![T::zero(); kk * n * lin];
        gemm(
            T::one(),
            MatRef::new(w.data(), cin, kk).t(),
            MatRef::new(&xt, cin, n * lin),
            T::zero(),
            &mut cols,
        );
        let mut y = vec![T::zero(); n * cout * ho * wo];
        col2im(&cols, &geom, 0, cout, &mut y);
        let lo = ho * wo;
        for s in 0..n {
            for (ch, &bv) in b.data().iter().enumerate() {
                for v in &mut y[(s * cout + ch) * lo..(s * cout + ch + 1) * lo] {
                    *v = *v + bv;
                }
            }
        }
        let out = Tensor::from_parts(vec![n, cout, ho, wo], y);
        let (xs, ws) = (x.shape().to_vec(), w.shape().to_vec());
        Ok(self.graph().op("conv_transpose2d", out, &[*self, *weight, *bias], move |gy| {
            let gb = bias_grad(gy.data(), n, cout, lo);
            let gcols = im2col(gy.data(), &geom, 0, cout);
            let mut gxt = vec![T::zero(); cin * n * lin];
            gemm(
                T::one(),
                MatRef::new(w.data(), cin, kk),
                MatRef::new(&gcols, kk, n * lin),
                T::zero(),
                &mut gxt,
            );
            let mut gw = vec![T::zero(); cin * kk];
            gemm(
                T::one(),
                MatRef::new(&xt, cin, n * lin),
                MatRef::new(&gcols, kk, n * lin).t(),
                T::zero(),
                &mut gw,
            );
            vec![
                Some(Tensor::from_parts(xs.clone(), to_batch_major(&gxt, n, cin, lin))),
                Some(Tensor::from_parts(ws.clone(), gw)),
                Some(Tensor::from_parts(vec![cout], gb)),
            ]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop convolution used as the reference.
    fn direct_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize, groups: usize) -> Tensor<f64> {
        let [n, c, h, wd] = x.dims4("t").unwrap();
        let [f, cg, k, _] = w.dims4("t").unwrap();
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let fg = f / groups;
        let mut out = vec![0.0; n * f * ho * wo];
        for s in 0..n {
            for o in 0..f {
                let gi = o / fg;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b.data()[o];
                        for ci in 0..cg {
                            let ch = gi * cg + ci;
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += w.data()[((o * cg + ci) * k + ki) * k + kj]
                                            * x.data()[((s * c + ch) * h + iy as usize) * wd + ix as usize];
                                    }
                                }
                            }
                        }
                        out[((s * f + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        Tensor::new(&[n, f, ho, wo], out).unwrap()
    }

    #[test]
    fn ones_kernel_sums_window() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = x.conv2d(&w, &b, 1, 0, 1).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 1, 1]);
        assert_eq!(y.item(), 9.0);
    }

    #[test]
    fn seven_by_seven_shape() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[1, 3, 64, 64]));
        let w = g.constant(Tensor::zeros(&[16, 3, 7, 7]));
        let b = g.constant(Tensor::zeros(&[16]));
        assert_eq!(x.conv2d(&w, &b, 1, 0, 1).unwrap().shape(), vec![1, 16, 58, 58]);
    }

    #[test]
    fn strided_padded_matches_direct_oracle() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(11);
        let xt = rand_tensor(&mut rng, &[1, 2, 5, 5]);
        let wt = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        let bt = rand_tensor(&mut rng, &[3]);
        let g = Graph::<f64>::new();
        let y = g
            .constant(xt.clone())
            .conv2d(&g.constant(wt.clone()), &g.constant(bt.clone()), 2, 1, 1)
            .unwrap()
            .value();
        let want = direct_conv(&xt, &wt, &bt, 2, 1, 1);
        assert_eq!(y.shape(), want.shape());
        for (a, b) in y.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn grouped_and_depthwise_match_direct_oracle() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(5);
        for &(c, f, groups, stride) in &[(4, 4, 4, 1), (4, 4, 4, 2), (4, 6, 2, 1), (3, 3, 3, 2)] {
            let xt = rand_tensor(&mut rng, &[2, c, 6, 5]);
            let wt = rand_tensor(&mut rng, &[f, c / groups, 3, 3]);
            let bt = rand_tensor(&mut rng, &[f]);
            let g = Graph::<f64>::new();
            let y = g
                .constant(xt.clone())
                .conv2d(&g.constant(wt.clone()), &g.constant(bt.clone()), stride, 1, groups)
                .unwrap()
                .value();
            let want = direct_conv(&xt, &wt, &bt, stride, 1, groups);
            for (a, b) in y.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pointwise_is_per_pixel_matmul() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(9);
        let xt = rand_tensor(&mut rng, &[2, 5, 1, 1]);
        let wt = rand_tensor(&mut rng, &[4, 5, 1, 1]);
        let g = Graph::<f64>::new();
        let y = g
            .constant(xt.clone())
            .conv2d(&g.constant(wt.clone()), &g.constant(Tensor::zeros(&[4])), 1, 0, 1)
            .unwrap()
            .value();
        for s in 0..2 {
            for o in 0..4 {
                let mut acc = 0.0;
                for c in 0..5 {
                    acc += wt.data()[o * 5 + c] * xt.data()[s * 5 + c];
                }
                assert_eq!(y.data()[s * 4 + o], acc);
            }
        }
    }

    #[test]
    fn transpose_stamps_kernel() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
        let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = x.conv_transpose2d(&w, &b, 1, 0, 0).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 3, 3]);
        assert!(y.value().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn transpose_recovers_downsampling_shapes() {
        // (input, kernel, stride, padding) of the downsampling block at 64x64.
        let layers = [(64, 7, 1, 0), (58, 3, 2, 1), (29, 3, 2, 1), (15, 3, 2, 1), (8, 3, 2, 1)];
        for &(input, k, s, p) in &layers {
            let out = conv2d_output_size(input, k, s, p).unwrap();
            let base = conv_transpose2d_output_size(out, k, s, p, 0).unwrap();
            let extra = input - base;
            assert!(extra < s.max(1) || extra == 0, "layer {input}");
            assert_eq!(conv_transpose2d_output_size(out, k, s, p, extra).unwrap(), input);
        }
    }

    #[test]
    fn transpose_equals_input_gradient_of_conv() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(21);
        let (k, s, p) = (3, 2, 1);
        let xt = rand_tensor(&mut rng, &[1, 2, 7, 7]);
        let wt = rand_tensor(&mut rng, &[3, 2, k, k]);
        // Gradient of <conv(x, w), u> with respect to x is conv_transpose(u, w).
        let g = Graph::<f64>::new();
        let x = g.leaf(xt.clone());
        let y = x.conv2d(&g.constant(wt.clone()), &g.constant(Tensor::zeros(&[3])), s, p, 1).unwrap();
        let ut = rand_tensor(&mut rng, &y.shape());
        let loss = y.mul(&g.constant(ut.clone())).unwrap().sum();
        let grads = g.backward(loss).unwrap();
        let gx = grads.get(x).unwrap();
        let z = g
            .constant(ut)
            .conv_transpose2d(&g.constant(wt), &g.constant(Tensor::zeros(&[2])), s, p, 0)
            .unwrap()
            .value();
        assert_eq!(z.shape(), gx.shape());
        for (a, b) in z.data().iter().zip(gx.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn group_mismatch_is_error() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[1, 3, 4, 4]));
        let w = g.constant(Tensor::zeros(&[2, 3, 3, 3]));
        let b = g.constant(Tensor::zeros(&[2]));
        assert!(x.conv2d(&w, &b, 1, 1, 2).is_err());
        let w = g.constant(Tensor::zeros(&[2, 2, 3, 3]));
        assert!(matches!(
            x.conv2d(&w, &b, 1, 1, 1),
            Err(Error::Dimension { axis: "weight in_channels", .. })
        ));
    }
}
