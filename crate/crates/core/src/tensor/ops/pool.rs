use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

/// Half-open source range of output cell `i` when mapping `input` cells onto
/// `output` cells: `[floor(i·in/out), floor((i+1)·in/out))`, widened to one
/// cell when `output > input`.
pub fn adaptive_region(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input / output).max(start + 1);
    (start, end)
}

fn max_resize<T: Element>(x: &Tensor<T>, oh: usize, ow: usize) -> (Vec<T>, Vec<usize>) {
    let [n, c, h, w] = x.dims4("pool").expect("checked by caller");
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane_idx in 0..n * c {
        let base = plane_idx * h * w;
        let plane = &x.data()[base..base + h * w];
        for oy in 0..oh {
            let (y0, y1) = adaptive_region(oy, h, oh);
            for ox in 0..ow {
                let (x0, x1) = adaptive_region(ox, w, ow);
                let mut best = y0 * w + x0;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        if plane[iy * w + ix] > plane[best] {
                            best = iy * w + ix;
                        }
                    }
                }
                out.push(plane[best]);
                arg.push(base + best);
            }
        }
    }
    (out, arg)
}

impl<'g, T: Element> Var<'g, T> {
    /// Adaptive max pooling to `out_h × out_w`; the output may not exceed the
    /// input on either axis.
    pub fn adaptive_max_pool2d(&self, out_h: usize, out_w: usize) -> Result<Var<'g, T>> {
        let [_, _, h, w] = self.value().dims4("adaptive_max_pool2d")?;
        if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
            return Err(Error::shape(
                "adaptive_max_pool2d",
                format!("cannot pool {h}x{w} to {out_h}x{out_w}"),
            ));
        }
        self.max_resize(out_h, out_w)
    }

    /// Max pooling where the target is smaller than the input and
    /// nearest-neighbour replication where it is larger. Every output cell is
    /// the maximum over its source region, so the global maximum is preserved.
    pub fn max_resize(&self, out_h: usize, out_w: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let [n, c, _, _] = x.dims4("max_resize")?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::shape("max_resize", "zero-sized target"));
        }
        let (out, arg) = max_resize(&x, out_h, out_w);
        let in_shape = x.shape().to_vec();
        let in_len = x.len();
        let out = Tensor::from_parts(vec![n, c, out_h, out_w], out);
        Ok(self.graph().op("max_resize", out, &[*self], move |g| {
            let mut gx = vec![T::zero(); in_len];
            for (&src, &gv) in arg.iter().zip(g.data()) {
                gx[src] = gx[src] + gv;
            }
            vec![Some(Tensor::from_parts(in_shape.clone(), gx))]
        }))
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Graph, Tensor};

    #[test]
    fn four_by_four_to_two_by_two() {
        let g = Graph::<f64>::new();
        let vals: Vec<f64> = (1..=16).map(|v| v as f64).collect();
        let x = g.constant(Tensor::new(&[1, 1, 4, 4], vals).unwrap());
        let y = x.adaptive_max_pool2d(2, 2).unwrap();
        assert_eq!(y.value().data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn one_by_one_is_global_max_and_identity_is_identity() {
        let g = Graph::<f64>::new();
        let vals: Vec<f64> = (0..35).map(|v| ((v * 17) % 23) as f64).collect();
        let x = g.constant(Tensor::new(&[1, 1, 5, 7], vals.clone()).unwrap());
        assert_eq!(x.adaptive_max_pool2d(1, 1).unwrap().item(), 22.0);
        assert_eq!(x.adaptive_max_pool2d(5, 7).unwrap().value().data(), vals.as_slice());
    }

    #[test]
    fn upsampling_is_rejected_by_pool_but_replicates_in_resize() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        assert!(x.adaptive_max_pool2d(3, 2).is_err());
        let y = x.max_resize(4, 4).unwrap();
        assert_eq!(
            y.value().data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        let grads = g.backward(y.sum()).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.0; 4]);
    }

    #[test]
    fn gradient_routes_to_argmax() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(&[1, 1, 2, 2], &[1.0, 5.0, 3.0, 2.0]).unwrap());
        let grads = g.backward(x.adaptive_max_pool2d(1, 1).unwrap().sum()).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
