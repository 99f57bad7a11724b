//! Central finite-difference checks against the tape's analytic gradients.

use crate::error::Result;
use crate::nn::ParamStore;
use crate::rng::Rng;
use crate::tensor::{Graph, Tensor, Var};
use rand::Rng as _;

/// Relative error between an analytic and a numeric derivative.
///
/// Magnitudes below `floor` are compared absolutely, so derivatives that are
/// zero up to rounding do not blow up the ratio.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const DEFAULT_FLOOR: f64 = 1e-6;

pub fn step_size(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// Central difference at `x0`. When a tenfold smaller step disagrees with the
/// estimate, the smaller step is taken (at most twice), so a ReLU or max switch
/// lying inside the first interval does not pollute the derivative at `x0`.
pub fn numeric_derivative(x0: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut h = step_size(x0);
    let mut est = (f(x0 + h)? - f(x0 - h)?) / (2.0 * h);
    for _ in 0..2 {
        h /= 10.0;
        let finer = (f(x0 + h)? - f(x0 - h)?) / (2.0 * h);
        // The larger floor keeps rounding noise on zero derivatives from
        // triggering a refinement.
        if relative_error(est, finer, 1e-4) < 1e-4 {
            return Ok(est);
        }
        est = finer;
    }
    Ok(est)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// (parameter name or "input", flat index) of the worst coordinate.
    pub worst: (String, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            checked: 0,
            max_rel_error: 0.0,
            worst: (String::new(), 0),
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        }
    }

    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let err = relative_error(analytic, numeric, DEFAULT_FLOOR);
        if err > self.max_rel_error || self.checked == 1 {
            self.max_rel_error = err;
            self.worst = (name.to_string(), index);
            self.worst_analytic = analytic;
            self.worst_numeric = numeric;
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        let checked = self.checked + other.checked;
        if other.checked > 0 && (self.checked == 0 || other.max_rel_error > self.max_rel_error) {
            *self = other;
        }
        self.checked = checked;
    }
}

/// Compares d loss / d input for a function of a single tensor. `indices`
/// selects coordinates; `None` checks all of them.
pub fn check_input<F>(x: &Tensor<f64>, indices: Option<&[usize]>, f: F) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>>,
{
    let g = Graph::new();
    let xv = g.leaf(x.clone());
    let loss = f(&g, xv)?;
    let grads = g.backward(loss)?;
    let analytic = grads.get(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |t: Tensor<f64>| -> Result<f64> {
        let g = Graph::new();
        let v = g.constant(t);
        Ok(f(&g, v)?.item())
    };
    let all: Vec<usize> = (0..x.len()).collect();
    let mut report = GradCheckReport::empty();
    for &i in indices.unwrap_or(&all) {
        let numeric = numeric_derivative(x.data()[i], |v| {
            let mut probe = x.clone();
            probe.data_mut()[i] = v;
            eval(probe)
        })?;
        report.record("input", i, analytic.data()[i], numeric);
    }
    Ok(report)
}

/// Compares d loss / d parameter for every trainable entry of `store`,
/// sampling up to `per_param` coordinates of each.
pub fn check_store<F>(store: &ParamStore<f64>, per_param: usize, rng: &mut Rng, f: F) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &ParamStore<f64>) -> Result<Var<'g, f64>>,
{
    let mut with_grads = store.clone();
    let g = Graph::new();
    let loss = f(&g, &with_grads)?;
    let grads = g.backward(loss)?;
    with_grads.accumulate_grads(&g, &grads);

    let mut report = GradCheckReport::empty();
    let mut probe = store.clone();
    for (pi, entry) in store.entries().iter().enumerate() {
        if !entry.trainable {
            continue;
        }
        let n = entry.value.len();
        let picks: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            (0..per_param).map(|_| rng.random_range(0..n)).collect()
        };
        let analytic = with_grads.entries()[pi].grad.clone();
        for i in picks {
            let a = analytic.as_ref().map_or(0.0, |t| t.data()[i]);
            let x0 = entry.value.data()[i];
            let id = crate::nn::ParamId(pi);
            let numeric = numeric_derivative(x0, |v| {
                probe.value_mut(id).data_mut()[i] = v;
                let g = Graph::new();
                Ok(f(&g, &probe)?.item())
            })?;
            probe.value_mut(id).data_mut()[i] = x0;
            report.record(&entry.name, i, a, numeric);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_matches() {
        let x = Tensor::from_f64(&[3], &[0.5, -1.0, 2.0]).unwrap();
        let r = check_input(&x, None, |_, v| Ok(v.mul(&v)?.mul(&v)?.sum())).unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // detach hides the dependency from the tape while the value still moves
        let x = Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap();
        let r = check_input(&x, None, |_, v| Ok(v.mul(&v.detach())?.sum())).unwrap();
        assert!(r.max_rel_error > 0.4);
    }

    #[test]
    fn store_parameters_match() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_f64(&[2], &[0.7, -1.3]).unwrap(), true);
        let r = check_store(&store, 4, &mut crate::rng::seeded(0), |g, s| {
            let v = s.var(g, w);
            Ok(v.mul(&v)?.mul(&v)?.sum())
        })
        .unwrap();
        assert_eq!(r.checked, 2);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn kink_inside_first_step_is_refined_away() {
        // relu is smooth at 1e-6, but the default step of 1e-5 straddles 0
        let x = Tensor::from_f64(&[1], &[1e-6]).unwrap();
        let r = check_input(&x, None, |_, v| Ok(v.relu().sum())).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-12);
    }
}
