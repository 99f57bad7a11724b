use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

impl<'g, T: Element> Var<'g, T> {
    /// Mean of squared differences over all elements.
    pub fn mse_loss(&self, target: &Var<'g, T>) -> Result<Var<'g, T>> {
        self.sub(target)
            .map_err(|_| Error::shape("mse_loss", format!("{:?} vs {:?}", self.shape(), target.shape())))
            .map(|d| {
                let dv = d.value();
                let n = T::from_f64(dv.len() as f64);
                let loss = dv.data().iter().fold(T::zero(), |a, &v| a + v * v) / n;
                let two = T::from_f64(2.0);
                self.graph().op("mse_loss", Tensor::scalar(loss), &[d], move |g| {
                    let s = g.item() * two / n;
                    vec![Some(dv.map(|v| v * s))]
                })
            })
    }

    /// Binary cross-entropy on logits against a constant label, averaged over
    /// elements. Uses `max(z,0) - z·y + ln(1 + e^{-|z|})`, stable for large |z|.
    pub fn bce_with_logits(&self, label: f64) -> Var<'g, T> {
        let z = self.value();
        let y = T::from_f64(label);
        let n = T::from_f64(z.len() as f64);
        let loss = z.data().iter().fold(T::zero(), |acc, &v| {
            acc + v.max(T::zero()) - v * y + (-v.abs()).exp().ln_1p()
        }) / n;
        self.graph().op("bce_with_logits", Tensor::scalar(loss), &[*self], move |g| {
            let s = g.item() / n;
            vec![Some(z.map(|v| (sigmoid(v) - y) * s))]
        })
    }
}

pub(crate) fn sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
