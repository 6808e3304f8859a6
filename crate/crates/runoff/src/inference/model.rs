//! The evaluation contract every model implements, plus the finite-difference
//! gradient check used to gate sampling.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::inference::params::ParameterSpace;

/// A posterior density over an unconstrained parameter vector.
///
/// Implementations return the log posterior density up to a constant and its
/// exact gradient with respect to the unconstrained coordinates, with all
/// prior and Jacobian terms folded in. Evaluation must be pure so chains can
/// run in parallel over shared data.
pub trait LogDensityModel: Sync {
    fn space(&self) -> &ParameterSpace;

    /// `(log density, gradient)` at `position` (unconstrained coordinates).
    fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>);

    /// Draw an unconstrained initialization point from the model's prior.
    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Names of derived quantities appended to each stored draw (for models
    /// whose sampling coordinates are a reparameterization of the quantities
    /// of interest).
    fn derived_names(&self) -> Vec<String> {
        Vec::new()
    }

    /// Derived quantities at `position`; must align with [`Self::derived_names`].
    fn derived(&self, _position: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

/// Compare the analytic gradient with central finite differences at `point`.
///
/// The step for coordinate `i` is `eps * max(1, |x_i|)`. Returns the maximum
/// over coordinates of `|analytic - numeric| / max(1, |analytic|, |numeric|)`,
/// after subtracting the cancellation noise floor of the difference quotient
/// (`machine epsilon * |density| / h`); central differences cannot resolve
/// discrepancies below that bound when the density magnitude is large.
pub fn check_gradient(model: &dyn LogDensityModel, point: &[f64], eps: f64) -> Result<f64> {
    let (lp, grad) = model.log_density_gradient(point);
    if !lp.is_finite() {
        return Err(Error::computation(format!("density non-finite at check point: {lp}")));
    }
    let mut worst: f64 = 0.0;
    let mut x = point.to_vec();
    for i in 0..x.len() {
        let h = eps * x[i].abs().max(1.0);
        let orig = x[i];
        x[i] = orig + h;
        let (hi, _) = model.log_density_gradient(&x);
        x[i] = orig - h;
        let (lo, _) = model.log_density_gradient(&x);
        x[i] = orig;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::computation(format!(
                "density non-finite in finite-difference stencil at coordinate {i}"
            )));
        }
        let numeric = (hi - lo) / (2.0 * h);
        let noise = 10.0 * f64::EPSILON * hi.abs().max(lo.abs()) / h;
        let denom = grad[i].abs().max(numeric.abs()).max(1.0);
        worst = worst.max(((grad[i] - numeric).abs() - noise).max(0.0) / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::params::Constraint;

    struct Quadratic {
        space: ParameterSpace,
        corrupt: f64,
    }

    impl Quadratic {
        fn new(corrupt: f64) -> Self {
            let space = ParameterSpace::builder()
                .scalar("x", Constraint::Unbounded)
                .build()
                .unwrap();
            Self { space, corrupt }
        }
    }

    impl LogDensityModel for Quadratic {
        fn space(&self) -> &ParameterSpace {
            &self.space
        }

        fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
            let x = position[0];
            (-0.5 * x * x, vec![-x + self.corrupt])
        }

        fn sample_prior(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
            vec![0.0]
        }
    }

    #[test]
    fn quadratic_gradient_exact() {
        let model = Quadratic::new(0.0);
        let err = check_gradient(&model, &[1.0], 1e-5).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn corrupted_gradient_detected() {
        let model = Quadratic::new(0.1);
        let err = check_gradient(&model, &[1.0], 1e-5).unwrap();
        assert!(err > 1e-2, "relative error {err}");
    }
}
