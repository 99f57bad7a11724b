use super::check_dim;
use crate::error::Result;
use crate::tensor::{Element, Tensor, Var};

/// Updated running statistics from a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BatchNormStats<T> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<'g, T: Element> Var<'g, T> {
    /// Per-channel batch normalization of an NCHW input.
    ///
    /// Training mode normalizes with the biased batch variance and returns the
    /// momentum-updated running statistics (unbiased variance); eval mode uses
    /// the running statistics unchanged.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm2d(
        &self,
        gamma: &Var<'g, T>,
        beta: &Var<'g, T>,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        training: bool,
        momentum: f64,
        eps: f64,
    ) -> Result<(Var<'g, T>, Option<BatchNormStats<T>>)> {
        let (x, gm, bt) = (self.value(), gamma.value(), beta.value());
        let [n, c, h, w] = x.dims4("batch_norm2d")?;
        check_dim("batch_norm2d", "gamma", c, gm.len())?;
        check_dim("batch_norm2d", "beta", c, bt.len())?;
        check_dim("batch_norm2d", "running_mean", c, running_mean.len())?;
        check_dim("batch_norm2d", "running_var", c, running_var.len())?;
        let l = h * w;
        let m = n * l;
        let eps_t = T::from_f64(eps);
        let xd = x.data();

        let (mean, var): (Vec<T>, Vec<T>) = if training {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut sum = T::zero();
                for s in 0..n {
                    sum = xd[(s * c + ch) * l..(s * c + ch + 1) * l].iter().fold(sum, |a, &v| a + v);
                }
                let mu = sum / T::from_f64(m as f64);
                let mut sq = T::zero();
                for s in 0..n {
                    sq = xd[(s * c + ch) * l..(s * c + ch + 1) * l]
                        .iter()
                        .fold(sq, |a, &v| a + (v - mu) * (v - mu));
                }
                mean[ch] = mu;
                var[ch] = sq / T::from_f64(m as f64);
            }
            (mean, var)
        } else {
            (running_mean.data().to_vec(), running_var.data().to_vec())
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps_t).sqrt()).collect();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for s in 0..n {
            for ch in 0..c {
                let r = (s * c + ch) * l..(s * c + ch + 1) * l;
                let (mu, is, gv, bv) = (mean[ch], inv_std[ch], gm.data()[ch], bt.data()[ch]);
                for ((xh, o), &v) in xhat[r.clone()].iter_mut().zip(&mut out[r.clone()]).zip(&xd[r]) {
                    *xh = (v - mu) * is;
                    *o = gv * *xh + bv;
                }
            }
        }

        let stats = training.then(|| {
            let mom = T::from_f64(momentum);
            let unbias = if m > 1 {
                T::from_f64(m as f64 / (m - 1) as f64)
            } else {
                T::one()
            };
            BatchNormStats {
                running_mean: Tensor::from_parts(
                    vec![c],
                    running_mean
                        .data()
                        .iter()
                        .zip(&mean)
                        .map(|(&r, &b)| (T::one() - mom) * r + mom * b)
                        .collect(),
                ),
                running_var: Tensor::from_parts(
                    vec![c],
                    running_var
                        .data()
                        .iter()
                        .zip(&var)
                        .map(|(&r, &b)| (T::one() - mom) * r + mom * b * unbias)
                        .collect(),
                ),
            }
        });

        let shape = x.shape().to_vec();
        let out = Tensor::from_parts(shape.clone(), out);
        let gamma_v = gm.data().to_vec();
        let v = self.graph().op("batch_norm2d", out, &[*self, *gamma, *beta], move |gy| {
            let gd = gy.data();
            let mut gx = vec![T::zero(); gd.len()];
            let mut ggamma = vec![T::zero(); c];
            let mut gbeta = vec![T::zero(); c];
            let mf = T::from_f64(m as f64);
            for ch in 0..c {
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                for s in 0..n {
                    let r = (s * c + ch) * l..(s * c + ch + 1) * l;
                    for (&g, &xh) in gd[r.clone()].iter().zip(&xhat[r]) {
                        sum_g = sum_g + g;
                        sum_gx = sum_gx + g * xh;
                    }
                }
                ggamma[ch] = sum_gx;
                gbeta[ch] = sum_g;
                let scale = gamma_v[ch] * inv_std[ch];
                for s in 0..n {
                    let r = (s * c + ch) * l..(s * c + ch + 1) * l;
                    for ((o, &g), &xh) in gx[r.clone()].iter_mut().zip(&gd[r.clone()]).zip(&xhat[r]) {
                        *o = if training {
                            scale * (g - sum_g / mf - xh * sum_gx / mf)
                        } else {
                            scale * g
                        };
                    }
                }
            }
            vec![
                Some(Tensor::from_parts(shape.clone(), gx)),
                Some(Tensor::from_parts(vec![c], ggamma)),
                Some(Tensor::from_parts(vec![c], gbeta)),
            ]
        });
        Ok((v, stats))
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Graph, Tensor};
    use rand::{Rng, SeedableRng};

    #[test]
    fn training_output_is_standardized() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(1);
        let data: Vec<f64> = (0..4 * 3 * 5 * 5).map(|_| rng.random_range(-3.0..5.0)).collect();
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(&[4, 3, 5, 5], data).unwrap());
        let gamma = g.constant(Tensor::full(&[3], 1.0));
        let beta = g.constant(Tensor::zeros(&[3]));
        let (y, stats) = x
            .batch_norm2d(&gamma, &beta, &Tensor::zeros(&[3]), &Tensor::full(&[3], 1.0), true, 0.1, 1e-5)
            .unwrap();
        assert!(stats.is_some());
        let y = y.value();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|s| y.data()[(s * 3 + ch) * 25..(s * 3 + ch + 1) * 25].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn eval_with_unit_stats_is_identity() {
        let g = Graph::<f64>::new();
        let xt = Tensor::from_f64(&[1, 2, 1, 2], &[0.5, -1.0, 2.0, 3.0]).unwrap();
        let x = g.constant(xt.clone());
        let (y, stats) = x
            .batch_norm2d(
                &g.constant(Tensor::full(&[2], 1.0)),
                &g.constant(Tensor::zeros(&[2])),
                &Tensor::zeros(&[2]),
                &Tensor::full(&[2], 1.0),
                false,
                0.1,
                1e-5,
            )
            .unwrap();
        assert!(stats.is_none());
        for (a, b) in y.value().data().iter().zip(xt.data()) {
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn zero_variance_channel_stays_finite() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 1, 1, 1], 3.0));
        let (y, _) = x
            .batch_norm2d(
                &g.constant(Tensor::full(&[1], 1.0)),
                &g.constant(Tensor::zeros(&[1])),
                &Tensor::zeros(&[1]),
                &Tensor::full(&[1], 1.0),
                true,
                0.1,
                1e-5,
            )
            .unwrap();
        assert!(y.value().all_finite());
        assert_eq!(y.item(), 0.0);
    }
}
