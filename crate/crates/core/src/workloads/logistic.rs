use crate::error::{check_dims, Error, Result};
use crate::vecmath::ParamVector;

use super::data::Dataset;

/// L2-regularized binary logistic regression. Parameters are `[w; b]`; the
/// penalty `(λ/2)‖θ‖²` covers the bias too, so `λ > 0` gives μ ≥ λ.
#[derive(Clone, Debug)]
pub struct Logistic {
    data: Dataset,
    l2_reg: f64,
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    pub fn new(data: Dataset, l2_reg: f64) -> Result<Self> {
        if data.classes() != 2 {
            return Err(Error::invalid(
                "labels",
                "logistic regression needs binary labels",
            ));
        }
        if !(l2_reg >= 0.0 && l2_reg.is_finite()) {
            return Err(Error::invalid("l2_reg", "must be finite and >= 0"));
        }
        Ok(Self { data, l2_reg })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn l2_reg(&self) -> f64 {
        self.l2_reg
    }

    pub fn dim(&self) -> usize {
        self.data.dim() + 1
    }

    #[inline]
    fn logit(&self, theta: &[f64], i: usize) -> f64 {
        let d = self.data.dim();
        let row = self.data.row(i);
        row.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d]
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        0.5 * self.l2_reg * theta.iter().map(|v| v * v).sum::<f64>()
    }

    /// Mean regularized loss over `indices`.
    pub fn batch_loss(&self, x: &ParamVector, indices: &[usize]) -> Result<f64> {
        check_dims(x.dim(), self.dim())?;
        if indices.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let theta = x.as_slice();
        let total: f64 = indices
            .iter()
            .map(|&i| {
                let z = self.logit(theta, i);
                softplus(z) - self.data.label(i) as f64 * z
            })
            .sum();
        Ok(total / indices.len() as f64 + self.penalty(theta))
    }

    pub fn batch_gradient(&self, x: &ParamVector, indices: &[usize]) -> Result<ParamVector> {
        check_dims(x.dim(), self.dim())?;
        if indices.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("x"));
        }
        let d = self.data.dim();
        let theta = x.as_slice();
        let mut g = vec![0.0; d + 1];
        for &i in indices {
            let r = sigmoid(self.logit(theta, i)) - self.data.label(i) as f64;
            for (gj, xj) in g[..d].iter_mut().zip(self.data.row(i)) {
                *gj += r * xj;
            }
            g[d] += r;
        }
        let n = indices.len() as f64;
        for (gj, tj) in g.iter_mut().zip(theta) {
            *gj = *gj / n + self.l2_reg * tj;
        }
        ParamVector::new(g)
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.data.len()).collect()
    }

    pub fn full_objective(&self, x: &ParamVector) -> Result<f64> {
        self.batch_loss(x, &self.all_indices())
    }

    pub fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        self.batch_gradient(x, &self.all_indices())
    }

    pub fn accuracy(&self, x: &ParamVector) -> Result<f64> {
        check_dims(x.dim(), self.dim())?;
        let correct = (0..self.data.len())
            .filter(|&i| usize::from(self.logit(x.as_slice(), i) > 0.0) == self.data.label(i))
            .count();
        Ok(correct as f64 / self.data.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::data::generate_logistic_data;

    #[test]
    fn zero_weights_cost_ln2() {
        let ds = Dataset::new(vec![1.0, -2.0, 0.5, 3.0], vec![0, 1, 1, 0], 1, 2).unwrap();
        let lr = Logistic::new(ds, 0.0).unwrap();
        let loss = lr.full_objective(&ParamVector::zeros(2)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn stable_for_large_logits() {
        let ds = Dataset::new(vec![1.0], vec![0], 1, 2).unwrap();
        let lr = Logistic::new(ds, 0.0).unwrap();
        let x = ParamVector::from_slice(&[800.0, 0.0]).unwrap();
        assert!((lr.full_objective(&x).unwrap() - 800.0).abs() < 1e-9);
        assert!(lr.full_gradient(&x).unwrap().is_finite());
    }

    #[test]
    fn per_sample_gradients_average_to_full_gradient() {
        let ds = generate_logistic_data(40, 3, 5).unwrap();
        let lr = Logistic::new(ds, 0.1).unwrap();
        let x = ParamVector::from_slice(&[0.3, -0.2, 0.7, 0.1]).unwrap();
        let full = lr.full_gradient(&x).unwrap();
        let mut acc = ParamVector::zeros(4);
        for i in 0..40 {
            acc.axpy_in_place(1.0 / 40.0, &lr.batch_gradient(&x, &[i]).unwrap())
                .unwrap();
        }
        for (a, b) in acc.as_slice().iter().zip(full.as_slice()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_multiclass_data() {
        let ds = Dataset::new(vec![1.0, 2.0, 3.0], vec![0, 1, 2], 1, 3).unwrap();
        assert!(Logistic::new(ds, 0.0).is_err());
    }
}
