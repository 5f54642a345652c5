//! Built-in problem families and their model functions.

mod polytope;
mod qip;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use polytope::{gen_polytope, softplus, violation, PolytopeInstance};
pub use qip::{gen_qip, QipGenOptions, QipInstance};

use crate::linalg::SymMatrix;
use crate::models::{ModelState, Objective};
use crate::{Error, Result};

/// Model families. `Softplus` belongs to the polytope problem, `M1`–`M3` to
/// the quadratic inverse problem, and `Taylor` (the additive-composite
/// model built from the exact gradient of the smooth part) to both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Softplus,
    Taylor,
    M1,
    M2,
    M3,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Softplus => "softplus",
            ModelFamily::Taylor => "taylor",
            ModelFamily::M1 => "m1",
            ModelFamily::M2 => "m2",
            ModelFamily::M3 => "m3",
        }
    }

    /// Name used in algorithm labels such as `MQN-M1`.
    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::Softplus => "Softplus",
            ModelFamily::Taylor => "Taylor",
            ModelFamily::M1 => "M1",
            ModelFamily::M2 => "M2",
            ModelFamily::M3 => "M3",
        }
    }

    /// Whether `f_x̄(x̄) = f(x̄)` holds by construction.
    pub fn is_center_consistent(self) -> bool {
        self != ModelFamily::Softplus
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "softplus" => Ok(ModelFamily::Softplus),
            "taylor" => Ok(ModelFamily::Taylor),
            "m1" => Ok(ModelFamily::M1),
            "m2" => Ok(ModelFamily::M2),
            "m3" => Ok(ModelFamily::M3),
            _ => Err(Error::InvalidInput("unknown model family")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Polytope(PolytopeInstance),
    Qip(QipInstance),
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Problem::Polytope(p) => p.dim(),
            Problem::Qip(q) => q.dim(),
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        match self {
            Problem::Polytope(p) => p.objective(x),
            Problem::Qip(q) => q.objective(x),
        }
    }

    pub fn supports(&self, family: ModelFamily) -> bool {
        matches!(
            (self, family),
            (Problem::Polytope(_), ModelFamily::Softplus | ModelFamily::Taylor)
                | (
                    Problem::Qip(_),
                    ModelFamily::Taylor | ModelFamily::M1 | ModelFamily::M2 | ModelFamily::M3
                )
        )
    }

    pub fn model(&self, center: &[f64], family: ModelFamily) -> Result<ModelState> {
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: center.len(),
            });
        }
        match self {
            Problem::Polytope(p) => p.model(center, family),
            Problem::Qip(q) => q.model(center, family),
        }
    }

    /// Gradient of the smooth part: the softplus surrogate for the polytope
    /// problem, `h∘A` for the quadratic inverse problem.
    pub fn smooth_gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Problem::Polytope(p) => p.softplus_gradient(x),
            Problem::Qip(q) => q.smooth_gradient(x),
        }
    }

    /// Hessian of the smooth part, the input of the projected-Hessian metric.
    pub fn smooth_hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        match self {
            Problem::Polytope(p) => p.softplus_hessian(x),
            Problem::Qip(q) => q.smooth_hessian(x),
        }
    }

    pub fn default_start(&self) -> Vec<f64> {
        match self {
            Problem::Polytope(p) => alloc::vec![1.0; p.dim()],
            Problem::Qip(q) => alloc::vec![0.1; q.dim()],
        }
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        Problem::dim(self)
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.objective(x)
    }
}

/// Number of components with `|xᵢ| > threshold`.
pub fn nonzero_count(x: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidInput("threshold must be positive"));
    }
    Ok(x.iter().filter(|v| v.abs() > threshold).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonzero_examples() {
        assert_eq!(nonzero_count(&[0.0, 0.0], 1e-6).unwrap(), 0);
        assert_eq!(nonzero_count(&[1.0, 1e-9], 1e-6).unwrap(), 1);
        assert!(nonzero_count(&[1.0], 0.0).is_err());
        let x = [0.5, -1e-3, 2.0, 1e-7, -0.02];
        let mut prev = usize::MAX;
        for t in [1e-8, 1e-6, 1e-3, 1e-2, 0.6, 3.0] {
            let c = nonzero_count(&x, t).unwrap();
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn family_parsing() {
        for f in [ModelFamily::Softplus, ModelFamily::Taylor, ModelFamily::M1, ModelFamily::M2, ModelFamily::M3] {
            assert_eq!(f.as_str().parse::<ModelFamily>().unwrap(), f);
        }
        assert!("m4".parse::<ModelFamily>().is_err());
    }
}
