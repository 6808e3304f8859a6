//! Named parameter layouts with unconstrained <-> constrained transforms.
//!
//! Every model in the crate samples on an unconstrained vector; the
//! [`ParameterSpace`] maps that vector to the constrained scale reported in
//! draw matrices and provides the log-Jacobian terms models fold into their
//! densities.

use crate::error::{Error, Result};

/// How a constrained parameter maps onto its unconstrained sampling coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Identity.
    Unbounded,
    /// `c = exp(u)`, c > 0.
    Positive,
    /// `c = logistic(u)`, 0 < c < 1.
    UnitInterval,
    /// `c = exp(exp(u))`, c >= 1. The inner `exp(u)` is the nonnegative
    /// quantity `log c` that carries the half-normal prior.
    LowerBoundedAtOne,
}

impl Constraint {
    /// Unconstrained -> constrained.
    pub fn constrain(self, u: f64) -> f64 {
        match self {
            Constraint::Unbounded => u,
            Constraint::Positive => u.exp(),
            Constraint::UnitInterval => logistic(u),
            Constraint::LowerBoundedAtOne => u.exp().exp(),
        }
    }

    /// Constrained -> unconstrained. Out-of-range inputs yield non-finite output.
    pub fn unconstrain(self, c: f64) -> f64 {
        match self {
            Constraint::Unbounded => c,
            Constraint::Positive => c.ln(),
            Constraint::UnitInterval => (c / (1.0 - c)).ln(),
            Constraint::LowerBoundedAtOne => c.ln().ln(),
        }
    }

    /// `log |d constrain / du|` at the unconstrained coordinate `u`.
    pub fn log_jacobian(self, u: f64) -> f64 {
        match self {
            Constraint::Unbounded => 0.0,
            Constraint::Positive => u,
            // log c + log(1 - c), computed stably.
            Constraint::UnitInterval => -log1p_exp(-u) - log1p_exp(u),
            Constraint::LowerBoundedAtOne => u + u.exp(),
        }
    }
}

pub(crate) fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub(crate) fn log1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// One named parameter block: a scalar or a fixed-length vector.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub len: usize,
    pub constraint: Constraint,
}

/// Ordered collection of parameter blocks making up a model's sampling space.
#[derive(Debug, Clone)]
pub struct ParameterSpace {
    specs: Vec<ParamSpec>,
    offsets: Vec<usize>,
    flat_names: Vec<String>,
}

impl ParameterSpace {
    pub fn builder() -> ParameterSpaceBuilder {
        ParameterSpaceBuilder { specs: Vec::new() }
    }

    /// Total unconstrained dimension (sum of block lengths).
    pub fn dim(&self) -> usize {
        self.flat_names.len()
    }

    /// One name per scalar coordinate; vector blocks expand to `name[k]`, 1-based.
    pub fn flat_names(&self) -> &[String] {
        &self.flat_names
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Flat index range of a named block.
    pub fn range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|k| self.offsets[k]..self.offsets[k] + self.specs[k].len)
    }

    /// Constraint at flat coordinate `idx`.
    pub fn constraint_at(&self, idx: usize) -> Constraint {
        let k = match self.offsets.binary_search(&idx) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        self.specs[k].constraint
    }

    pub fn constrain(&self, unconstrained: &[f64]) -> Vec<f64> {
        assert_eq!(unconstrained.len(), self.dim());
        unconstrained
            .iter()
            .enumerate()
            .map(|(idx, &u)| self.constraint_at(idx).constrain(u))
            .collect()
    }

    pub fn unconstrain(&self, constrained: &[f64]) -> Vec<f64> {
        assert_eq!(constrained.len(), self.dim());
        constrained
            .iter()
            .enumerate()
            .map(|(idx, &c)| self.constraint_at(idx).unconstrain(c))
            .collect()
    }

    /// Sum of per-coordinate log-Jacobians at `unconstrained`.
    pub fn log_jacobian(&self, unconstrained: &[f64]) -> f64 {
        unconstrained
            .iter()
            .enumerate()
            .map(|(idx, &u)| self.constraint_at(idx).log_jacobian(u))
            .sum()
    }
}

pub struct ParameterSpaceBuilder {
    specs: Vec<ParamSpec>,
}

impl ParameterSpaceBuilder {
    pub fn scalar(mut self, name: &str, constraint: Constraint) -> Self {
        self.specs.push(ParamSpec { name: name.to_string(), len: 1, constraint });
        self
    }

    pub fn vector(mut self, name: &str, len: usize, constraint: Constraint) -> Self {
        self.specs.push(ParamSpec { name: name.to_string(), len, constraint });
        self
    }

    pub fn build(self) -> Result<ParameterSpace> {
        if self.specs.is_empty() {
            return Err(Error::validation("parameter space must not be empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.specs {
            if s.len == 0 {
                return Err(Error::validation(format!("parameter '{}' has length 0", s.name)));
            }
            if !seen.insert(s.name.clone()) {
                return Err(Error::validation(format!("duplicate parameter name '{}'", s.name)));
            }
        }
        let mut offsets = Vec::with_capacity(self.specs.len());
        let mut flat_names = Vec::new();
        let mut off = 0;
        for s in &self.specs {
            offsets.push(off);
            off += s.len;
            if s.len == 1 {
                flat_names.push(s.name.clone());
            } else {
                flat_names.extend((1..=s.len).map(|k| format!("{}[{k}]", s.name)));
            }
        }
        Ok(ParameterSpace { specs: self.specs, offsets, flat_names })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_constraints() {
        let kinds = [
            (Constraint::Unbounded, vec![-3.0, 0.0, 4.5]),
            (Constraint::Positive, vec![-5.0, 0.0, 3.0]),
            (Constraint::UnitInterval, vec![-8.0, 0.0, 8.0]),
            (Constraint::LowerBoundedAtOne, vec![-3.0, 0.0, 2.0]),
        ];
        for (kind, us) in kinds {
            for u in us {
                let c = kind.constrain(u);
                let back = kind.unconstrain(c);
                let rel = (back - u).abs() / u.abs().max(1.0);
                assert!(rel < 1e-12, "{kind:?} at {u}: {back}");
            }
        }
    }

    #[test]
    fn constrained_values_satisfy_bounds() {
        for u in [-20.0, -1.0, 0.0, 1.0, 3.0] {
            assert!(Constraint::Positive.constrain(u) > 0.0);
            let b = Constraint::UnitInterval.constrain(u);
            assert!(b > 0.0 && b < 1.0);
            assert!(Constraint::LowerBoundedAtOne.constrain(u) >= 1.0);
        }
    }

    #[test]
    fn jacobians_match_numerical_derivative() {
        let h = 1e-6;
        for kind in [
            Constraint::Positive,
            Constraint::UnitInterval,
            Constraint::LowerBoundedAtOne,
        ] {
            for u in [-2.0, -0.5, 0.0, 0.7, 1.5] {
                let num = ((kind.constrain(u + h) - kind.constrain(u - h)) / (2.0 * h)).ln();
                let ana = kind.log_jacobian(u);
                assert!((num - ana).abs() < 1e-6, "{kind:?} at {u}: {num} vs {ana}");
            }
        }
    }

    #[test]
    fn flat_names_and_ranges() {
        let space = ParameterSpace::builder()
            .vector("log_alpha", 3, Constraint::Unbounded)
            .scalar("gamma1", Constraint::Unbounded)
            .build()
            .unwrap();
        assert_eq!(space.dim(), 4);
        assert_eq!(space.flat_names()[0], "log_alpha[1]");
        assert_eq!(space.flat_names()[3], "gamma1");
        assert_eq!(space.range("gamma1"), Some(3..4));
        assert_eq!(space.range("missing"), None);
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = ParameterSpace::builder()
            .scalar("a", Constraint::Unbounded)
            .scalar("a", Constraint::Positive)
            .build();
        assert!(err.is_err());
    }
}
