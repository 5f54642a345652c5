//! (Sparse) quadratic inverse problems:
//! `f(x) = (1/2m)·Σᵢ (xᵀAᵢx − bᵢ)² + λ‖x‖₁`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ModelFamily;
use crate::fmath;
use crate::linalg::{self, Matrix, SpdFactorization, SymMatrix};
use crate::models::ModelState;
use crate::subsolvers::{AbsBlock, Payload};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QipInstance {
    matrices: Vec<SymMatrix>,
    b: Vec<f64>,
    lambda: f64,
    seed: u64,
    x_truth: Option<Vec<f64>>,
}

/// Per-measurement quantities at a point: `rᵢ = xᵀAᵢx − bᵢ` and `Aᵢx`.
struct Residuals {
    r: Vec<f64>,
    ax: Vec<Vec<f64>>,
}

impl QipInstance {
    /// Validates shapes, `λ ≥ 0` and `λ_min(Aᵢ) ≥ −1e-10` for every sampling
    /// matrix.
    pub fn new(
        matrices: Vec<SymMatrix>,
        b: Vec<f64>,
        lambda: f64,
        seed: u64,
        x_truth: Option<Vec<f64>>,
    ) -> Result<Self> {
        let inst = Self::new_unchecked(matrices, b, lambda, seed, x_truth)?;
        for a in &inst.matrices {
            let mut shifted = a.clone();
            shifted.add_diag(1e-10 + 1e-13 * a.trace().abs());
            if SpdFactorization::new(&shifted).is_err() {
                return Err(Error::InvalidInput("sampling matrices must be positive semidefinite"));
            }
        }
        Ok(inst)
    }

    fn new_unchecked(
        matrices: Vec<SymMatrix>,
        b: Vec<f64>,
        lambda: f64,
        seed: u64,
        x_truth: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = matrices.first().map(SymMatrix::dim).ok_or(Error::InvalidInput("need m >= 1"))?;
        if b.len() != matrices.len() {
            return Err(Error::DimensionMismatch {
                expected: matrices.len(),
                got: b.len(),
            });
        }
        if let Some(a) = matrices.iter().find(|a| a.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.dim(),
            });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput("lambda must be nonnegative"));
        }
        if let Some(t) = &x_truth {
            if t.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: t.len() });
            }
        }
        if !b.iter().all(|v| v.is_finite()) || !matrices.iter().all(SymMatrix::is_finite) {
            return Err(Error::InvalidInput("problem data must be finite"));
        }
        Ok(Self {
            matrices,
            b,
            lambda,
            seed,
            x_truth,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].dim()
    }

    pub fn measurements(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[SymMatrix] {
        &self.matrices
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn x_truth(&self) -> Option<&[f64]> {
        self.x_truth.as_deref()
    }

    /// Same data with a different ℓ1 weight.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new_unchecked(self.matrices.clone(), self.b.clone(), lambda, self.seed, self.x_truth.clone())
    }

    fn residuals(&self, x: &[f64]) -> Residuals {
        let ax: Vec<Vec<f64>> = self.matrices.iter().map(|a| a.mul_vec(x)).collect();
        let r = ax
            .iter()
            .zip(&self.b)
            .map(|(axi, bi)| linalg::dot(axi, x) - bi)
            .collect();
        Residuals { r, ax }
    }

    /// `(1/2m)·Σ rᵢ²`.
    pub fn data_fit(&self, x: &[f64]) -> f64 {
        let m = self.measurements() as f64;
        self.residuals(x).r.iter().map(|r| r * r).sum::<f64>() / (2.0 * m)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.data_fit(x) + self.lambda * linalg::norm1(x)
    }

    /// `∇(h∘A)(x) = (2/m)·Σ rᵢ·Aᵢx`.
    pub fn smooth_gradient(&self, x: &[f64]) -> Vec<f64> {
        let res = self.residuals(x);
        self.weighted_sum(&res, 2.0 / self.measurements() as f64)
    }

    /// `∇²(h∘A)(x) = (2/m)·Σ [rᵢ·Aᵢ + 2·(Aᵢx)(Aᵢx)ᵀ]`.
    pub fn smooth_hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        let res = self.residuals(x);
        let scale = 2.0 / self.measurements() as f64;
        let mut h = SymMatrix::zeros(self.dim());
        for (i, a) in self.matrices.iter().enumerate() {
            h.add_scaled(scale * res.r[i], a);
            h.add_rank1(2.0 * scale, &res.ax[i]);
        }
        Ok(h)
    }

    /// `Σᵢ |r̄ᵢ² + 2·r̄ᵢ·⟨Aᵢx̄, x − x̄⟩|` at `x̄ = center`, without the `1/(2m)`
    /// weight.
    pub fn linearized_residual_sum(&self, center: &[f64], x: &[f64]) -> f64 {
        let res = self.residuals(center);
        let d = linalg::sub(x, center);
        res.r
            .iter()
            .zip(&res.ax)
            .map(|(r, ax)| fmath::abs(r * r + 2.0 * r * linalg::dot(ax, &d)))
            .sum()
    }

    /// `scale · Σ rᵢ·Aᵢx`.
    fn weighted_sum(&self, res: &Residuals, scale: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for (r, ax) in res.r.iter().zip(&res.ax) {
            for (gj, axj) in g.iter_mut().zip(ax) {
                *gj += scale * r * axj;
            }
        }
        g
    }

    pub(super) fn model(&self, center: &[f64], family: ModelFamily) -> Result<ModelState> {
        let res = self.residuals(center);
        let m = self.measurements() as f64;
        let c0 = res.r.iter().map(|r| r * r).sum::<f64>() / (2.0 * m);
        let anchor = center.to_vec();
        let payload = match family {
            // (1/2m)Σ[r̄ᵢ² + 2r̄ᵢ⟨Aᵢx̄, x − x̄⟩]: the linear coefficient is half the
            // gradient of h∘A
            ModelFamily::M1 => Payload::affine_l1(anchor, c0, self.weighted_sum(&res, 1.0 / m), self.lambda)?,
            ModelFamily::M2 => {
                Payload::affine_quad_l1(anchor, c0, self.weighted_sum(&res, 1.0 / m), 1.0, self.lambda)?
            }
            ModelFamily::M3 => {
                let n = self.dim();
                let mut slopes = Matrix::zeros(res.r.len(), n);
                for (i, (r, ax)) in res.r.iter().zip(&res.ax).enumerate() {
                    for (s, a) in slopes.row_mut(i).iter_mut().zip(ax) {
                        *s = 2.0 * r * a;
                    }
                }
                let block = AbsBlock {
                    offsets: res.r.iter().map(|r| r * r).collect(),
                    slopes,
                    weight: 1.0 / (2.0 * m),
                };
                Payload::abs_affine_l1(anchor, block, self.lambda)?
            }
            ModelFamily::Taylor => Payload::affine_l1(anchor, c0, self.weighted_sum(&res, 2.0 / m), self.lambda)?,
            ModelFamily::Softplus => {
                return Err(Error::InvalidInput("softplus model is defined for the polytope problem only"))
            }
        };
        Ok(ModelState::new(payload))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QipGenOptions {
    /// Rank of each Gram sampling matrix `Aᵢ = UᵢUᵢᵀ`.
    pub rank: usize,
    /// Standard deviation of additive Gaussian noise on `bᵢ`.
    pub noise_sd: f64,
}

impl Default for QipGenOptions {
    fn default() -> Self {
        Self { rank: 1, noise_sd: 0.0 }
    }
}

/// Synthetic instance: `Aᵢ = UᵢUᵢᵀ` with standard normal `Uᵢ ∈ ℝ^{n×rank}`, a
/// unit-norm ground truth with `round(n/10)` (at least one) Gaussian nonzeros,
/// and `bᵢ = x♮ᵀAᵢx♮ + noise_sd·N(0,1)`. Draw order: all `Uᵢ`, the support,
/// the nonzero values, then the noise.
pub fn gen_qip(n: usize, m: usize, lambda: f64, seed: u64, opts: QipGenOptions) -> Result<QipInstance> {
    if n == 0 || m == 0 || opts.rank == 0 {
        return Err(Error::InvalidInput("need n, m, rank >= 1"));
    }
    if !(opts.noise_sd >= 0.0) {
        return Err(Error::InvalidInput("noise_sd must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrices = Vec::with_capacity(m);
    for _ in 0..m {
        let mut a = SymMatrix::zeros(n);
        for _ in 0..opts.rank {
            let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            a.add_rank1(1.0, &u);
        }
        matrices.push(a);
    }

    let k = (fmath::round(n as f64 / 10.0) as usize).clamp(1, n);
    let support = index::sample(&mut rng, n, k).into_vec();
    let mut truth = vec![0.0; n];
    for i in support {
        truth[i] = rng.sample(StandardNormal);
    }
    let norm = linalg::norm2(&truth);
    if norm > 0.0 {
        truth.iter_mut().for_each(|t| *t /= norm);
    }

    let b = matrices
        .iter()
        .map(|a| {
            let noise: f64 = if opts.noise_sd > 0.0 {
                opts.noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            a.quad_form(&truth) + noise
        })
        .collect();
    QipInstance::new_unchecked(matrices, b, lambda, seed, Some(truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{central_gradient, model_error};
    use crate::problems::Problem;

    fn scalar(lambda: f64) -> QipInstance {
        QipInstance::new(vec![SymMatrix::identity(1)], vec![1.0], lambda, 0, None).unwrap()
    }

    #[test]
    fn scalar_values() {
        let q = scalar(0.0);
        assert_eq!(q.objective(&[1.0]), 0.0);
        assert_eq!(q.objective(&[2.0]), 4.5);
        assert_eq!(q.smooth_gradient(&[2.0]), vec![12.0]);
        // d²/dx² (x² − 1)²/2 = 6x² − 2
        assert_eq!(q.smooth_hessian(&[1.0]).unwrap().get(0, 0), 4.0);
        assert_eq!(q.smooth_hessian(&[2.0]).unwrap().get(0, 0), 22.0);
    }

    #[test]
    fn scalar_m1_model() {
        let q = scalar(0.0);
        let m1 = q.model(&[2.0], ModelFamily::M1).unwrap();
        assert_eq!(m1.value_at_center(), 4.5);
        assert_eq!(m1.eval(&[3.0]), 10.5);
        let p = Problem::Qip(q);
        let s = model_error(&p, &m1, &[3.0]).unwrap();
        assert_eq!((s.radius, s.error), (1.0, 21.5));
        assert_eq!(model_error(&p, &m1, &[2.0]).unwrap().error, 0.0);
    }

    #[test]
    fn rejects_indefinite_matrices() {
        let bad = SymMatrix::diag(&[1.0, -1e-3]);
        assert!(QipInstance::new(vec![bad], vec![0.0], 0.0, 0, None).is_err());
        assert!(QipInstance::new(vec![SymMatrix::identity(2)], vec![0.0], -1.0, 0, None).is_err());
    }

    #[test]
    fn generator_properties() {
        let q = gen_qip(10, 30, 0.01, 5, QipGenOptions::default()).unwrap();
        assert_eq!(q, gen_qip(10, 30, 0.01, 5, QipGenOptions::default()).unwrap());
        for a in q.matrices() {
            let e = linalg::sym_eig(a).unwrap();
            assert!(*e.values.last().unwrap() >= -1e-10);
        }
        let truth = q.x_truth().unwrap().to_vec();
        assert_eq!(truth.iter().filter(|t| **t != 0.0).count(), 1);
        assert!((linalg::norm2(&truth) - 1.0).abs() < 1e-12);
        // noiseless data: only the ℓ1 term remains
        assert!(q.objective(&truth) <= 0.01 * linalg::norm1(&truth) + 1e-15);
    }

    #[test]
    fn noise_changes_measurements() {
        let clean = gen_qip(6, 8, 0.0, 1, QipGenOptions::default()).unwrap();
        let noisy = gen_qip(6, 8, 0.0, 1, QipGenOptions { rank: 1, noise_sd: 0.1 }).unwrap();
        assert_eq!(clean.matrices(), noisy.matrices());
        assert_ne!(clean.b(), noisy.b());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let q = gen_qip(6, 25, 0.0, 11, QipGenOptions { rank: 2, noise_sd: 0.05 }).unwrap();
        let x = [0.2, -0.1, 0.4, 0.05, -0.3, 0.15];
        let g = q.smooth_gradient(&x);
        let fd = central_gradient(&|x| q.data_fit(x), &x);
        assert!(linalg::dist2(&g, &fd) <= 1e-6 * (1.0 + linalg::norm2(&g)));
        let h = q.smooth_hessian(&x).unwrap();
        for j in 0..6 {
            let col = central_gradient(&|x| q.smooth_gradient(x)[j], &x);
            for i in 0..6 {
                assert!((h.get(i, j) - col[i]).abs() <= 1e-5 * (1.0 + h.get(i, j).abs()));
            }
        }
    }

    #[test]
    fn model_families_consistent_at_center() {
        let q = gen_qip(5, 20, 0.03, 2, QipGenOptions::default()).unwrap();
        let x = [0.3, -0.2, 0.1, 0.5, -0.4];
        let f = q.objective(&x);
        for fam in [ModelFamily::M1, ModelFamily::M2, ModelFamily::M3, ModelFamily::Taylor] {
            let m = q.model(&x, fam).unwrap();
            assert!((m.value_at_center() - f).abs() <= 1e-12 * (1.0 + f));
        }
        assert!(q.model(&x, ModelFamily::Softplus).is_err());
    }

    #[test]
    fn m2_minus_m1_is_half_square() {
        let q = gen_qip(4, 10, 0.02, 3, QipGenOptions::default()).unwrap();
        let c = [0.1, 0.2, -0.3, 0.4];
        let m1 = q.model(&c, ModelFamily::M1).unwrap();
        let m2 = q.model(&c, ModelFamily::M2).unwrap();
        for x in [[0.0, 0.0, 0.0, 0.0], [1.0, -2.0, 0.5, 0.3]] {
            let d = linalg::dist2(&x, &c);
            assert!((m2.eval(&x) - m1.eval(&x) - 0.5 * d * d).abs() < 1e-12);
        }
    }

    #[test]
    fn m3_bounded_below_by_l1() {
        let q = gen_qip(4, 10, 0.05, 3, QipGenOptions::default()).unwrap();
        let m3 = q.model(&[0.2, 0.2, 0.2, 0.2], ModelFamily::M3).unwrap();
        for x in [[3.0, -1.0, 0.0, 2.0], [-5.0, 5.0, 1.0, -1.0]] {
            assert!(m3.eval(&x) >= 0.05 * linalg::norm1(&x));
        }
    }
}
