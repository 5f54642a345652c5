//! Polytope feasibility: `f(x) = Σᵢ (⟨aᵢ, x⟩ − bᵢ)₊^p`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelFamily;
use crate::fmath;
use crate::linalg::{Matrix, SymMatrix};
use crate::models::ModelState;
use crate::subsolvers::Payload;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeInstance {
    a: Matrix,
    b: Vec<f64>,
    p: f64,
    c: f64,
    seed: u64,
}

/// Normalized softplus `φ_c(t) = log(1 + e^{ct}) / c`.
pub fn softplus(t: f64, c: f64) -> f64 {
    let z = c * t;
    (z.max(0.0) + fmath::ln_1p(fmath::exp(-fmath::abs(z)))) / c
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + fmath::exp(-z))
    } else {
        let e = fmath::exp(z);
        e / (1.0 + e)
    }
}

impl PolytopeInstance {
    pub fn new(a: Matrix, b: Vec<f64>, p: f64, c: f64, seed: u64) -> Result<Self> {
        if a.rows() == 0 || a.cols() == 0 {
            return Err(Error::InvalidInput("polytope needs m, n >= 1"));
        }
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: b.len(),
            });
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::InvalidInput("exponent p must be at least 2"));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput("softplus sharpness c must be positive"));
        }
        if !a.data().iter().chain(&b).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("polytope data must be finite"));
        }
        Ok(Self { a, b, p, c, seed })
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn constraints(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Slacks `tᵢ = ⟨aᵢ, x⟩ − bᵢ`.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .mul_vec(x)
            .into_iter()
            .zip(&self.b)
            .map(|(ax, b)| ax - b)
            .collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.slacks(x)
            .into_iter()
            .map(|t| if t > 0.0 { fmath::powf(t, self.p) } else { 0.0 })
            .sum()
    }

    /// `∇f(x) = Σ p·(tᵢ)₊^{p−1}·aᵢ`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self
            .slacks(x)
            .into_iter()
            .map(|t| if t > 0.0 { self.p * fmath::powf(t, self.p - 1.0) } else { 0.0 })
            .collect();
        self.a.mul_t_vec(&w)
    }

    /// `ψ(t) = φ_c(t)^p`, the per-constraint surrogate.
    pub fn psi(&self, t: f64) -> f64 {
        fmath::powf(softplus(t, self.c), self.p)
    }

    /// `ψ'(t) = p·φ^{p−1}·σ(ct)`.
    pub fn psi_prime(&self, t: f64) -> f64 {
        let phi = softplus(t, self.c);
        self.p * fmath::powf(phi, self.p - 1.0) * sigmoid(self.c * t)
    }

    /// `ψ''(t) = p(p−1)·φ^{p−2}·σ² + p·φ^{p−1}·c·σ(1−σ)`.
    pub fn psi_second(&self, t: f64) -> f64 {
        let (p, c) = (self.p, self.c);
        let phi = softplus(t, c);
        let s = sigmoid(c * t);
        p * (p - 1.0) * fmath::powf(phi, p - 2.0) * s * s + p * fmath::powf(phi, p - 1.0) * c * s * (1.0 - s)
    }

    /// `Σ ψ(tᵢ)`.
    pub fn softplus_objective(&self, x: &[f64]) -> f64 {
        self.slacks(x).into_iter().map(|t| self.psi(t)).sum()
    }

    /// `c^{1−p}·p·Σ σ(ct̄ᵢ)·log^{p−1}(1 + e^{ct̄ᵢ})·aᵢ`, i.e. `Σ ψ'(t̄ᵢ)·aᵢ`.
    pub fn softplus_gradient(&self, x: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self.slacks(x).into_iter().map(|t| self.psi_prime(t)).collect();
        self.a.mul_t_vec(&w)
    }

    /// `Σ ψ''(t̄ᵢ)·aᵢaᵢᵀ`.
    pub fn softplus_hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        let n = self.dim();
        let mut h = SymMatrix::zeros(n);
        for (i, t) in self.slacks(x).into_iter().enumerate() {
            let w = self.psi_second(t);
            if w != 0.0 {
                h.add_rank1(w, self.a.row(i));
            }
        }
        Ok(h)
    }

    pub(super) fn model(&self, center: &[f64], family: ModelFamily) -> Result<ModelState> {
        let payload = match family {
            // c^{−p}Σ log^p(1 + e^{ct̄ᵢ}) + ⟨grad, x − x̄⟩
            ModelFamily::Softplus => {
                let c0 = self.softplus_objective(center);
                Payload::affine(center.to_vec(), c0, self.softplus_gradient(center))?
            }
            ModelFamily::Taylor => {
                Payload::affine(center.to_vec(), self.objective(center), self.gradient(center))?
            }
            _ => return Err(Error::InvalidInput("model family not defined for the polytope problem")),
        };
        Ok(ModelState::new(payload))
    }
}

/// Draws `aᵢ` (row by row) and then `b`, all entries uniform on `[−1, 1]`,
/// from a ChaCha8 stream seeded with `seed`.
pub fn gen_polytope(n: usize, m: usize, p: f64, c: f64, seed: u64) -> Result<PolytopeInstance> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("polytope needs m, n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
    PolytopeInstance::new(Matrix::new(m, n, data)?, b, p, c, seed)
}

/// `Σ (tᵢ)₊` and whether every slack is nonpositive.
pub fn violation(inst: &PolytopeInstance, x: &[f64]) -> (f64, bool) {
    let t = inst.slacks(x);
    let total = t.iter().map(|v| v.max(0.0)).sum();
    (total, t.iter().all(|v| *v <= 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::models::central_gradient;
    use crate::linalg;

    fn one_constraint(p: f64) -> PolytopeInstance {
        PolytopeInstance::new(Matrix::new(1, 1, vec![1.0]).unwrap(), vec![0.0], p, 2.0, 0).unwrap()
    }

    #[test]
    fn objective_examples() {
        assert_eq!(one_constraint(2.0).objective(&[2.0]), 4.0);
        assert_eq!(one_constraint(3.0).objective(&[2.0]), 8.0);
        assert_eq!(one_constraint(2.0).objective(&[-5.0]), 0.0);
    }

    #[test]
    fn generator_is_deterministic_and_shaped() {
        let a = gen_polytope(7, 11, 2.0, 2.0, 42).unwrap();
        let b = gen_polytope(7, 11, 2.0, 2.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.a().rows(), a.a().cols(), a.b().len()), (11, 7, 11));
        assert!(a.a().data().iter().chain(a.b()).all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(a, gen_polytope(7, 11, 2.0, 2.0, 43).unwrap());
    }

    #[test]
    fn generator_entry_mean() {
        let inst = gen_polytope(100, 1000, 2.0, 2.0, 9).unwrap();
        let data = inst.a().data();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        assert!(mean.abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn softplus_model_one_constraint() {
        let inst = one_constraint(2.0);
        let model = inst.model(&[0.0], ModelFamily::Softplus).unwrap();
        let ln2 = core::f64::consts::LN_2;
        assert!((model.value_at_center() - (0.5 * ln2).powi(2)).abs() < 1e-15);
        assert!((model.payload().linear()[0] - 0.5 * ln2).abs() < 1e-15);
        // the model sits strictly above f at its center
        assert!(model.value_at_center() > inst.objective(&[0.0]));
    }

    #[test]
    fn softplus_gradient_vanishes_deep_inside() {
        let inst = one_constraint(3.0);
        for t in [-10.0, -50.0, -400.0] {
            assert!(inst.softplus_gradient(&[t])[0].abs() < 1e-8);
            assert!(inst.psi_second(t).abs() < 1e-8);
        }
    }

    #[test]
    fn softplus_is_stable_for_large_arguments() {
        assert!((softplus(400.0, 2.0) - 400.0).abs() < 1e-12);
        assert!(softplus(-400.0, 2.0) >= 0.0);
        assert!(softplus(1e6, 2.0).is_finite());
    }

    #[test]
    fn psi_derivatives_match_finite_differences() {
        for p in [2.0, 3.0, 3.5, 4.0] {
            let inst = one_constraint(p);
            for t in [-1.3, -0.2, 0.0, 0.3, 1.7] {
                let h = 1e-5;
                let d1 = (inst.psi(t + h) - inst.psi(t - h)) / (2.0 * h);
                let d2 = (inst.psi_prime(t + h) - inst.psi_prime(t - h)) / (2.0 * h);
                assert!((d1 - inst.psi_prime(t)).abs() <= 1e-6 * (1.0 + d1.abs()));
                assert!((d2 - inst.psi_second(t)).abs() <= 1e-5 * (1.0 + d2.abs()));
            }
        }
    }

    #[test]
    fn hessian_flat_region_and_rank() {
        let inst = gen_polytope(6, 3, 2.0, 2.0, 1).unwrap();
        let far: Vec<f64> = vec![0.0; 6];
        let h = inst.softplus_hessian(&far).unwrap();
        let eig = crate::linalg::sym_eig(&h).unwrap();
        // at most three nonzero eigenvalues
        assert!(eig.values[3..].iter().all(|v| v.abs() < 1e-10));

        let a = Matrix::new(1, 1, vec![1.0]).unwrap();
        let deep = PolytopeInstance::new(a, vec![100.0], 2.0, 2.0, 0).unwrap();
        assert!(deep.softplus_hessian(&[0.0]).unwrap().get(0, 0) < 1e-50);
    }

    #[test]
    fn gradients_match_central_differences() {
        let inst = gen_polytope(5, 9, 3.0, 2.0, 3).unwrap();
        let x = [0.3, -0.4, 0.9, 0.1, -0.2];
        let fd = central_gradient(&|x| inst.softplus_objective(x), &x);
        let an = inst.softplus_gradient(&x);
        assert!(linalg::dist2(&fd, &an) <= 1e-6 * (1.0 + linalg::norm2(&an)));
        let fd = central_gradient(&|x| inst.objective(x), &x);
        let an = inst.gradient(&x);
        assert!(linalg::dist2(&fd, &an) <= 1e-6 * (1.0 + linalg::norm2(&an)));
    }

    #[test]
    fn taylor_model_is_center_consistent() {
        let inst = gen_polytope(5, 9, 2.0, 2.0, 4).unwrap();
        let x = [1.0; 5];
        let m = inst.model(&x, ModelFamily::Taylor).unwrap();
        assert!((m.value_at_center() - inst.objective(&x)).abs() <= 1e-12 * (1.0 + inst.objective(&x)));
        assert!(inst.model(&x, ModelFamily::M1).is_err());
    }

    #[test]
    fn violation_reports_feasibility() {
        let inst = one_constraint(2.0);
        assert_eq!(violation(&inst, &[-1.0]), (0.0, true));
        assert_eq!(violation(&inst, &[0.5]), (0.5, false));
    }
}
