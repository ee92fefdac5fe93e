use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Flat 64-bit parameter (or gradient) vector. Never empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("parameter vector"));
        }
        Ok(Self(data))
    }

    /// # Panics
    /// If `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "parameter vector must have dim >= 1");
        Self(vec![0.0; dim])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += a * x`
    pub fn axpy_in_place(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        check_dims(x.dim(), self.dim())?;
        for (yi, xi) in self.0.iter_mut().zip(&x.0) {
            *yi += a * xi;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, a: f64) {
        for v in &mut self.0 {
            *v *= a;
        }
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    /// Squared Euclidean distance `‖self − other‖²`.
    pub fn distance_sq(&self, other: &ParamVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    /// Pull `self` toward `anchor`: `self ← self − beta·(self − anchor)`.
    pub fn contract_toward(&mut self, anchor: &ParamVector, beta: f64) -> Result<()> {
        check_dims(self.dim(), anchor.dim())?;
        for (x, a) in self.0.iter_mut().zip(&anchor.0) {
            *x -= beta * (*x - a);
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Self::new(data)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `a·x + y`
pub fn axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    let mut out = y.clone();
    out.axpy_in_place(a, x)?;
    Ok(out)
}

/// EMA form of the pseudo-synchronization update: `(1 − beta)·x + beta·anchor`.
pub fn mix(x: &ParamVector, anchor: &ParamVector, beta: f64) -> Result<ParamVector> {
    check_dims(x.dim(), anchor.dim())?;
    Ok(ParamVector(
        x.0.iter()
            .zip(&anchor.0)
            .map(|(xi, ai)| (1.0 - beta) * xi + beta * ai)
            .collect(),
    ))
}

/// Elementwise mean, accumulated in iteration order and divided once at the end.
pub fn mean_of<'a, I>(vectors: I) -> Result<ParamVector>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::Empty("mean_of input"))?;
    let mut acc = first.clone();
    let mut count = 1usize;
    for v in iter {
        check_dims(acc.dim(), v.dim())?;
        for (a, b) in acc.0.iter_mut().zip(&v.0) {
            *a += b;
        }
        count += 1;
    }
    let n = count as f64;
    for a in &mut acc.0 {
        *a /= n;
    }
    Ok(acc)
}

pub fn l2_norm_sq(x: &ParamVector) -> f64 {
    x.0.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v).unwrap()
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(
            axpy(2.0, &pv(&[1.0, 1.0]), &pv(&[0.0, 3.0])).unwrap(),
            pv(&[2.0, 5.0])
        );
        assert_eq!(
            axpy(0.0, &pv(&[7.0, 7.0]), &pv(&[1.0, 2.0])).unwrap(),
            pv(&[1.0, 2.0])
        );
        let x = pv(&[3.0, 4.0]);
        assert_eq!(axpy(-1.0, &x, &x).unwrap(), pv(&[0.0, 0.0]));
    }

    #[test]
    fn axpy_dimension_mismatch_names_both() {
        let err = axpy(1.0, &pv(&[1.0]), &pv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch { left: 1, right: 2 }
        ));
        assert!(err.to_string().contains("1 vs 2"));
    }

    #[test]
    fn mix_examples() {
        let x = pv(&[2.0, -1.0]);
        let anchor = pv(&[0.5, 4.0]);
        assert_eq!(mix(&x, &anchor, 0.0).unwrap(), x);
        assert_eq!(mix(&x, &anchor, 1.0).unwrap(), anchor);
        let beta = 0.1 * 0.5 / 0.05;
        assert_eq!(
            mix(&pv(&[2.0, 0.0]), &pv(&[0.0, 0.0]), beta).unwrap(),
            pv(&[0.0, 0.0])
        );
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_of(&[pv(&[1.0, 1.0])]).unwrap(), pv(&[1.0, 1.0]));
        assert_eq!(
            mean_of(&[pv(&[0.0, 2.0]), pv(&[2.0, 0.0])]).unwrap(),
            pv(&[1.0, 1.0])
        );
        let vs = [
            pv(&[1.0, 0.0]),
            pv(&[0.0, 1.0]),
            pv(&[-1.0, -1.0]),
            pv(&[0.0, 0.0]),
        ];
        assert_eq!(mean_of(&vs).unwrap(), pv(&[0.0, 0.0]));
    }

    #[test]
    fn mean_errors() {
        let empty: Vec<ParamVector> = vec![];
        assert!(matches!(mean_of(&empty), Err(Error::Empty(_))));
        assert!(matches!(
            mean_of(&[pv(&[1.0]), pv(&[1.0, 2.0])]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(l2_norm_sq(&pv(&[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(l2_norm_sq(&pv(&[3.0, 4.0])), 25.0);
        assert_eq!(l2_norm_sq(&pv(&[1.0; 4])), 4.0);
    }

    #[test]
    fn empty_vector_rejected() {
        assert!(ParamVector::new(vec![]).is_err());
        assert!(serde_json::from_str::<ParamVector>("[]").is_err());
    }
}
