use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::vecmath::{ParamVector, RngStream};

/// `f(x, ξ) = ½ (x − x* − ξ)ᵀ A (x − x* − ξ)` with diagonal `A`.
///
/// Noise shifts the optimum, so every `f(·, ξ)` is μ-strongly convex and
/// L-smooth. The shift has covariance `s²·I` with `s² = σ² / tr(A²)`, which
/// makes `E‖∇f(x*, ξ)‖² = σ²` exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub hessian_diag: Vec<f64>,
    pub x_star: ParamVector,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    spec: QuadraticSpec,
    shift_std: f64,
}

impl Quadratic {
    pub fn new(spec: QuadraticSpec) -> Result<Self> {
        if spec.hessian_diag.is_empty() {
            return Err(Error::Empty("hessian_diag"));
        }
        check_dims(spec.hessian_diag.len(), spec.x_star.dim())?;
        if spec
            .hessian_diag
            .iter()
            .any(|&a| !(a > 0.0 && a.is_finite()))
        {
            return Err(Error::invalid(
                "hessian_diag",
                "eigenvalues must be positive and finite",
            ));
        }
        if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma", "must be finite and >= 0"));
        }
        if !spec.x_star.is_finite() {
            return Err(Error::NonFinite("x_star"));
        }
        let trace_sq: f64 = spec.hessian_diag.iter().map(|a| a * a).sum();
        let shift_std = spec.noise_sigma / trace_sq.sqrt();
        Ok(Self { spec, shift_std })
    }

    /// Eigenvalues spaced linearly between `mu` and `l` (both included when `dim ≥ 2`).
    pub fn linear_spectrum(dim: usize, mu: f64, l: f64) -> Vec<f64> {
        if dim == 1 {
            return vec![mu];
        }
        (0..dim)
            .map(|i| {
                if i == dim - 1 {
                    l
                } else {
                    mu + (l - mu) * i as f64 / (dim - 1) as f64
                }
            })
            .collect()
    }

    pub fn spec(&self) -> &QuadraticSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.hessian_diag.len()
    }

    pub fn mu(&self) -> f64 {
        self.spec
            .hessian_diag
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn l(&self) -> f64 {
        self.spec.hessian_diag.iter().copied().fold(0.0, f64::max)
    }

    pub fn kappa(&self) -> f64 {
        self.l() / self.mu()
    }

    pub fn noise_sigma(&self) -> f64 {
        self.spec.noise_sigma
    }

    /// Per-coordinate standard deviation of the optimum shift ξ.
    pub fn shift_std(&self) -> f64 {
        self.shift_std
    }

    pub fn x_star(&self) -> &ParamVector {
        &self.spec.x_star
    }

    pub fn draw_shift(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut xi = vec![0.0; self.dim()];
        rng.fill_gaussian(&mut xi, self.shift_std);
        xi
    }

    pub fn stochastic_gradient(&self, x: &ParamVector, shift: &[f64]) -> Result<ParamVector> {
        check_dims(x.dim(), self.dim())?;
        check_dims(shift.len(), self.dim())?;
        if !x.is_finite() {
            return Err(Error::NonFinite("x"));
        }
        let g = x
            .as_slice()
            .iter()
            .zip(self.spec.x_star.as_slice())
            .zip(shift)
            .zip(&self.spec.hessian_diag)
            .map(|(((xi, si), ni), a)| a * (xi - si - ni))
            .collect();
        ParamVector::new(g)
    }

    pub fn sample_loss(&self, x: &ParamVector, shift: &[f64]) -> Result<f64> {
        check_dims(x.dim(), self.dim())?;
        check_dims(shift.len(), self.dim())?;
        Ok(0.5
            * x.as_slice()
                .iter()
                .zip(self.spec.x_star.as_slice())
                .zip(shift)
                .zip(&self.spec.hessian_diag)
                .map(|(((xi, si), ni), a)| a * (xi - si - ni).powi(2))
                .sum::<f64>())
    }

    /// `∇F(x) = A(x − x*)`.
    pub fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        check_dims(x.dim(), self.dim())?;
        let g = x
            .as_slice()
            .iter()
            .zip(self.spec.x_star.as_slice())
            .zip(&self.spec.hessian_diag)
            .map(|((xi, si), a)| a * (xi - si))
            .collect();
        ParamVector::new(g)
    }

    /// `F(x) − F(x*) = ½ (x − x*)ᵀ A (x − x*)`.
    pub fn suboptimality(&self, x: &ParamVector) -> Result<f64> {
        check_dims(x.dim(), self.dim())?;
        Ok(0.5
            * x.as_slice()
                .iter()
                .zip(self.spec.x_star.as_slice())
                .zip(&self.spec.hessian_diag)
                .map(|((xi, si), a)| a * (xi - si).powi(2))
                .sum::<f64>())
    }

    /// Noise floor `F(x*) = ½ s² tr(A)`.
    pub fn optimal_value(&self) -> f64 {
        0.5 * self.shift_std.powi(2) * self.spec.hessian_diag.iter().sum::<f64>()
    }

    pub fn full_objective(&self, x: &ParamVector) -> Result<f64> {
        Ok(self.suboptimality(x)? + self.optimal_value())
    }

    /// Monte Carlo estimate of `E‖∇f(x*, ξ)‖²`.
    pub fn variance_at_optimum(&self, n_samples: usize, rng: &mut RngStream) -> Result<f64> {
        if n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be >= 1"));
        }
        let mut acc = 0.0;
        let mut xi = vec![0.0; self.dim()];
        for _ in 0..n_samples {
            rng.fill_gaussian(&mut xi, self.shift_std);
            acc += xi
                .iter()
                .zip(&self.spec.hessian_diag)
                .map(|(n, a)| (a * n).powi(2))
                .sum::<f64>();
        }
        Ok(acc / n_samples as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::Purpose;

    fn quad(diag: Vec<f64>, sigma: f64) -> Quadratic {
        let d = diag.len();
        Quadratic::new(QuadraticSpec {
            hessian_diag: diag,
            x_star: ParamVector::zeros(d),
            noise_sigma: sigma,
        })
        .unwrap()
    }

    #[test]
    fn gradient_examples() {
        let q = quad(vec![1.0, 1.0], 0.0);
        let g = q
            .stochastic_gradient(&ParamVector::zeros(2), &[0.0, 0.0])
            .unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);

        let q = quad(vec![1.0, 2.0], 0.0);
        let x = ParamVector::from_slice(&[1.0, 1.0]).unwrap();
        assert_eq!(
            q.stochastic_gradient(&x, &[0.0, 0.0]).unwrap().as_slice(),
            &[1.0, 2.0]
        );
    }

    #[test]
    fn gradient_rejects_bad_input() {
        let q = quad(vec![1.0, 2.0], 0.0);
        assert!(q
            .stochastic_gradient(&ParamVector::zeros(3), &[0.0, 0.0])
            .is_err());
        let nan = ParamVector::from_slice(&[f64::NAN, 0.0]).unwrap();
        assert!(matches!(
            q.stochastic_gradient(&nan, &[0.0, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn objective_examples() {
        let q = quad(vec![1.0, 1.0], 0.0);
        assert_eq!(q.suboptimality(&ParamVector::zeros(2)).unwrap(), 0.0);
        let x = ParamVector::from_slice(&[3.0, 4.0]).unwrap();
        assert_eq!(q.suboptimality(&x).unwrap(), 12.5);
    }

    #[test]
    fn variance_at_optimum_calibration() {
        let q = quad(vec![1.0; 4], 0.0);
        let mut rng = RngStream::new(0, 0, Purpose::Probe);
        assert_eq!(q.variance_at_optimum(10, &mut rng).unwrap(), 0.0);

        let q = quad(vec![1.0; 4], 1.0);
        let v = q.variance_at_optimum(1_000_000, &mut rng).unwrap();
        assert!((v - 1.0).abs() <= 0.01, "{v}");

        let q = quad(vec![1.0; 4], 2.0);
        let v = q.variance_at_optimum(1_000_000, &mut rng).unwrap();
        assert!((v - 4.0).abs() <= 0.04, "{v}");
    }

    #[test]
    fn variance_calibration_with_spread_spectrum() {
        let q = quad(Quadratic::linear_spectrum(6, 1.0, 4.0), 1.5);
        let mut rng = RngStream::new(1, 0, Purpose::Probe);
        let v = q.variance_at_optimum(400_000, &mut rng).unwrap();
        assert!((v - 2.25).abs() <= 0.03, "{v}");
    }

    #[test]
    fn spectrum_endpoints() {
        let s = Quadratic::linear_spectrum(16, 1.0, 4.0);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[15], 4.0);
        let q = quad(s, 1.0);
        assert_eq!(q.mu(), 1.0);
        assert_eq!(q.l(), 4.0);
        assert_eq!(q.kappa(), 4.0);
    }

    #[test]
    fn rejects_non_positive_eigenvalues() {
        let spec = QuadraticSpec {
            hessian_diag: vec![1.0, 0.0],
            x_star: ParamVector::zeros(2),
            noise_sigma: 0.0,
        };
        assert!(Quadratic::new(spec).is_err());
    }
}
