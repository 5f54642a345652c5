//! Solvers for the proximal subproblem
//!
//! ```text
//! min_x  payload(x) + (γ/2)·‖x − x̄‖²_H
//! ```
//!
//! where `payload` is the exact structured form of a model function anchored at
//! `x̄`. Every payload is convex, so each solver targets the unique minimizer.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::linalg::{self, Matrix, Metric, SpdFactorization, SymMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadShape {
    AffineOnly,
    AffinePlusL1,
    AffinePlusQuadPlusL1,
    AbsAffinePlusL1,
}

/// `w · Σᵢ |uᵢ + ⟨vᵢ, x − x̄⟩|`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsBlock {
    pub offsets: Vec<f64>,
    pub slopes: Matrix,
    pub weight: f64,
}

/// Structured model function:
/// `c₀ + ⟨g, x − x̄⟩ + (ρ₂/2)‖x − x̄‖² + w·Σ|uᵢ + ⟨vᵢ, x − x̄⟩| + λ‖x‖₁`,
/// with only the terms demanded by the shape populated.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    shape: PayloadShape,
    anchor: Vec<f64>,
    constant: f64,
    linear: Vec<f64>,
    quad_weight: f64,
    abs_block: Option<AbsBlock>,
    l1_weight: f64,
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(what))
    }
}

impl Payload {
    pub fn affine(anchor: Vec<f64>, constant: f64, linear: Vec<f64>) -> Result<Self> {
        Self::build(PayloadShape::AffineOnly, anchor, constant, linear, 0.0, None, 0.0)
    }

    pub fn affine_l1(anchor: Vec<f64>, constant: f64, linear: Vec<f64>, l1: f64) -> Result<Self> {
        Self::build(PayloadShape::AffinePlusL1, anchor, constant, linear, 0.0, None, l1)
    }

    pub fn affine_quad_l1(
        anchor: Vec<f64>,
        constant: f64,
        linear: Vec<f64>,
        quad_weight: f64,
        l1: f64,
    ) -> Result<Self> {
        Self::build(
            PayloadShape::AffinePlusQuadPlusL1,
            anchor,
            constant,
            linear,
            quad_weight,
            None,
            l1,
        )
    }

    pub fn abs_affine_l1(anchor: Vec<f64>, block: AbsBlock, l1: f64) -> Result<Self> {
        let n = anchor.len();
        Self::build(
            PayloadShape::AbsAffinePlusL1,
            anchor,
            0.0,
            vec![0.0; n],
            0.0,
            Some(block),
            l1,
        )
    }

    fn build(
        shape: PayloadShape,
        anchor: Vec<f64>,
        constant: f64,
        linear: Vec<f64>,
        quad_weight: f64,
        abs_block: Option<AbsBlock>,
        l1_weight: f64,
    ) -> Result<Self> {
        let n = anchor.len();
        if n == 0 {
            return Err(Error::InvalidInput("payload dimension must be at least 1"));
        }
        if linear.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: linear.len(),
            });
        }
        check_finite(&anchor, "payload anchor must be finite")?;
        check_finite(&linear, "payload linear term must be finite")?;
        if !constant.is_finite() {
            return Err(Error::InvalidInput("payload constant must be finite"));
        }
        if !(quad_weight >= 0.0) || !quad_weight.is_finite() {
            return Err(Error::InvalidInput("quadratic weight must be nonnegative"));
        }
        if !(l1_weight >= 0.0) || !l1_weight.is_finite() {
            return Err(Error::InvalidInput("l1 weight must be nonnegative"));
        }
        if let Some(b) = &abs_block {
            if !(b.weight > 0.0) || !b.weight.is_finite() {
                return Err(Error::InvalidInput("abs block weight must be positive"));
            }
            if b.slopes.cols() != n || b.slopes.rows() != b.offsets.len() {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: b.slopes.cols(),
                });
            }
            check_finite(&b.offsets, "abs offsets must be finite")?;
            check_finite(b.slopes.data(), "abs slopes must be finite")?;
        }
        Ok(Self {
            shape,
            anchor,
            constant,
            linear,
            quad_weight,
            abs_block,
            l1_weight,
        })
    }

    pub fn shape(&self) -> PayloadShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Linear coefficient `g`; all zeros for the absolute-value shape.
    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quad_weight(&self) -> f64 {
        self.quad_weight
    }

    pub fn abs_block(&self) -> Option<&AbsBlock> {
        self.abs_block.as_ref()
    }

    pub fn l1_weight(&self) -> f64 {
        self.l1_weight
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = linalg::sub(x, &self.anchor);
        let mut v = self.constant + linalg::dot(&self.linear, &d);
        if self.quad_weight > 0.0 {
            v += 0.5 * self.quad_weight * linalg::dot(&d, &d);
        }
        if let Some(b) = &self.abs_block {
            let s: f64 = (0..b.offsets.len())
                .map(|i| fmath::abs(b.offsets[i] + linalg::dot(b.slopes.row(i), &d)))
                .sum();
            v += b.weight * s;
        }
        if self.l1_weight > 0.0 {
            v += self.l1_weight * linalg::norm1(x);
        }
        v
    }

    /// `payload(x) + (γ/2)‖x − x̄‖²_H`.
    pub fn subproblem_objective(&self, x: &[f64], metric: &Metric, gamma: f64) -> f64 {
        let d = linalg::sub(x, &self.anchor);
        self.eval(x) + 0.5 * gamma * metric.quad_form(&d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub optimality_residual: f64,
    pub inner_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsolverOptions {
    pub admm_tol: f64,
    pub admm_max_iter: usize,
    pub pdhg_tol: f64,
    pub pdhg_max_iter: usize,
}

impl Default for SubsolverOptions {
    fn default() -> Self {
        Self {
            admm_tol: 1e-8,
            admm_max_iter: 5000,
            pdhg_tol: 1e-8,
            pdhg_max_iter: 20000,
        }
    }
}

/// Component-wise `sign(vᵢ)·max(|vᵢ| − t, 0)`.
pub fn soft_threshold(v: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput("threshold must be nonnegative"));
    }
    Ok(v.iter().map(|x| shrink(*x, t)).collect())
}

#[inline]
fn shrink(x: f64, t: f64) -> f64 {
    fmath::signum(x) * (fmath::abs(x) - t).max(0.0)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput("gamma must be positive and finite"))
    }
}

fn check_metric(payload: &Payload, metric: &Metric) -> Result<()> {
    if metric.dim() != payload.dim() {
        return Err(Error::DimensionMismatch {
            expected: payload.dim(),
            got: metric.dim(),
        });
    }
    Ok(())
}

/// Closed form `x = x̄ − (1/γ)·H⁻¹g` for an affine model.
pub fn solve_affine_metric(payload: &Payload, metric: &Metric, gamma: f64) -> Result<SubproblemSolution> {
    if payload.shape != PayloadShape::AffineOnly {
        return Err(Error::InvalidInput("closed-form metric solve needs an affine payload"));
    }
    check_gamma(gamma)?;
    check_metric(payload, metric)?;
    let step = metric.solve(&payload.linear);
    let x: Vec<f64> = payload
        .anchor
        .iter()
        .zip(&step)
        .map(|(a, s)| a - s / gamma)
        .collect();
    let d = linalg::sub(&x, &payload.anchor);
    let hd = metric.apply(&d);
    let residual: Vec<f64> = payload
        .linear
        .iter()
        .zip(&hd)
        .map(|(g, h)| g + gamma * h)
        .collect();
    Ok(SubproblemSolution {
        objective_value: payload.subproblem_objective(&x, metric, gamma),
        optimality_residual: linalg::norm2(&residual),
        x,
        inner_iterations: 0,
        converged: true,
    })
}

/// Closed form under the metric `L·Id`:
/// `x = soft(x̄ − g/ω, λ/ω)` with `ω = γL + ρ₂`.
pub fn solve_l1_quadratic_separable(
    payload: &Payload,
    scale: f64,
    gamma: f64,
) -> Result<SubproblemSolution> {
    match payload.shape {
        PayloadShape::AffinePlusL1 | PayloadShape::AffinePlusQuadPlusL1 | PayloadShape::AffineOnly => {}
        PayloadShape::AbsAffinePlusL1 => {
            return Err(Error::InvalidInput("separable solve needs an affine(+quad)+l1 payload"))
        }
    }
    check_gamma(gamma)?;
    let metric = Metric::scaled_identity(payload.dim(), scale)?;
    let omega = gamma * scale + payload.quad_weight;
    let shifted: Vec<f64> = payload
        .anchor
        .iter()
        .zip(&payload.linear)
        .map(|(a, g)| a - g / omega)
        .collect();
    let x = soft_threshold(&shifted, payload.l1_weight / omega)?;
    let residual = l1_prox_residual(payload, &x, omega);
    Ok(SubproblemSolution {
        objective_value: payload.subproblem_objective(&x, &metric, gamma),
        optimality_residual: residual,
        x,
        inner_iterations: 0,
        converged: true,
    })
}

/// Distance from zero to the subdifferential of the separable objective at `x`.
fn l1_prox_residual(payload: &Payload, x: &[f64], omega: f64) -> f64 {
    let lam = payload.l1_weight;
    let mut acc = 0.0;
    for i in 0..x.len() {
        let smooth = payload.linear[i] + omega * (x[i] - payload.anchor[i]);
        let r = if x[i] != 0.0 {
            smooth + lam * fmath::signum(x[i])
        } else {
            (fmath::abs(smooth) - lam).max(0.0)
        };
        acc += r * r;
    }
    fmath::sqrt(acc)
}

/// Returns the anchor instead of `x` when `x` does not improve on it; the
/// anchor is always a feasible candidate.
fn keep_if_better(
    payload: &Payload,
    metric: &Metric,
    gamma: f64,
    x: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
) -> SubproblemSolution {
    let value = payload.subproblem_objective(&x, metric, gamma);
    let at_anchor = payload.eval(&payload.anchor);
    if value > at_anchor {
        SubproblemSolution {
            x: payload.anchor.clone(),
            objective_value: at_anchor,
            optimality_residual: residual,
            inner_iterations: iterations,
            converged,
        }
    } else {
        SubproblemSolution {
            x,
            objective_value: value,
            optimality_residual: residual,
            inner_iterations: iterations,
            converged,
        }
    }
}

/// ADMM on the splitting `x = z`, with the smooth part (affine, optional
/// `ρ₂` quadratic and the metric term) on `x` and `λ‖·‖₁` on `z`. Penalty
/// `ρ = γ·tr(H)/n`. Residuals are relative: the primal `‖x − z‖` to
/// `max(1, ‖z‖)` and the dual `ρ‖Δz‖` to `max(1, ‖γHx̄ + ρ₂x̄ − g‖)`.
pub fn admm_l1_metric(
    payload: &Payload,
    metric: &Metric,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SubproblemSolution> {
    if payload.shape == PayloadShape::AbsAffinePlusL1 {
        return Err(Error::InvalidInput("ADMM needs an affine(+quad)+l1 payload"));
    }
    check_gamma(gamma)?;
    check_metric(payload, metric)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive"));
    }
    let n = payload.dim();
    let rho = gamma * metric.trace() / n as f64;
    let rho2 = payload.quad_weight;
    let anchor = &payload.anchor;

    let mut system: SymMatrix = metric.to_sym_matrix();
    system.scale(gamma);
    system.add_diag(rho2 + rho);
    let factor = SpdFactorization::new(&system)?;

    // γH·x̄ + ρ₂x̄ − g
    let h_anchor = metric.apply(anchor);
    let base: Vec<f64> = (0..n)
        .map(|i| gamma * h_anchor[i] + rho2 * anchor[i] - payload.linear[i])
        .collect();

    let dual_scale = linalg::norm2(&base).max(1.0);
    let thresh = payload.l1_weight / rho;
    let mut z = anchor.clone();
    let mut u = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        for i in 0..n {
            rhs[i] = base[i] + rho * (z[i] - u[i]);
        }
        let x = factor.solve(&rhs);
        let mut primal = 0.0;
        let mut dual = 0.0;
        for i in 0..n {
            let z_new = shrink(x[i] + u[i], thresh);
            dual += (z_new - z[i]) * (z_new - z[i]);
            z[i] = z_new;
            let r = x[i] - z_new;
            u[i] += r;
            primal += r * r;
        }
        let primal_scale = linalg::norm2(&z).max(1.0);
        residual = (fmath::sqrt(primal) / primal_scale).max(rho * fmath::sqrt(dual) / dual_scale);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    Ok(keep_if_better(payload, metric, gamma, z, residual, iterations, converged))
}

/// Accelerated primal-dual hybrid gradient for the absolute-value payload.
///
/// With `H = RᵀR` and `y = R(x − x̄)` the subproblem reads
/// `min_y (γ/2)‖y‖² + w·Σ|uᵢ + (VR⁻¹y)ᵢ| + λ‖x̄ + R⁻¹y‖₁`. The quadratic is the
/// (γ-strongly convex) primal term; both nonsmooth terms are dualized through
/// `K = [VR⁻¹; R⁻¹]`, whose conjugates are box indicators, so every step is
/// closed form. Step sizes start at `τ = 1/γ`, `σ = γ/‖K‖₂²` and follow the
/// strong-convexity schedule `θ = 1/√(1 + 2γτ)`. The residual is the duality
/// gap relative to `max(1, |P(y)|)`; it bounds `‖y − y*‖²` by `2·gap/γ`.
pub fn pdhg_abs_l1_metric(
    payload: &Payload,
    metric: &Metric,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SubproblemSolution> {
    let block = match (&payload.shape, &payload.abs_block) {
        (PayloadShape::AbsAffinePlusL1, Some(b)) => b,
        _ => return Err(Error::InvalidInput("PDHG needs an absolute-value payload")),
    };
    check_gamma(gamma)?;
    check_metric(payload, metric)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive"));
    }
    let n = payload.dim();
    let m = block.offsets.len();
    let w = block.weight;
    let lambda = payload.l1_weight;
    let anchor = &payload.anchor;

    let r_inv = metric.inverse_root();
    let mut k = Matrix::zeros(m + n, n);
    for i in 0..m {
        let vi = block.slopes.row(i);
        let row = k.row_mut(i);
        for (j, out) in row.iter_mut().enumerate() {
            *out = (0..n).map(|l| vi[l] * r_inv.get(l, j)).sum();
        }
    }
    for i in 0..n {
        k.row_mut(m + i).copy_from_slice(r_inv.row(i));
    }
    let k_norm = linalg::spectral_norm(&k)?;
    let mut tau = 1.0 / gamma;
    let mut sigma = gamma / (k_norm * k_norm);

    let project = |p: &mut [f64]| {
        for (i, v) in p.iter_mut().enumerate() {
            let bound = if i < m { w } else { lambda };
            *v = v.clamp(-bound, bound);
        }
    };
    // conjugate shifts: u for the abs block, x̄ for the ℓ1 term
    let shift: Vec<f64> = block.offsets.iter().chain(anchor.iter()).copied().collect();

    let primal_value = |y: &[f64]| -> f64 {
        let k_y = k.mul_vec(y);
        (0..m + n)
            .map(|i| if i < m { w } else { lambda } * fmath::abs(k_y[i] + shift[i]))
            .sum::<f64>()
            + 0.5 * gamma * linalg::dot(y, y)
    };

    let mut y = vec![0.0; n];
    let mut y_bar = y.clone();
    let mut best = (y.clone(), primal_value(&y));
    let mut p = vec![0.0; m + n];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let k_ybar = k.mul_vec(&y_bar);
        let mut p_new: Vec<f64> = (0..m + n).map(|i| p[i] + sigma * (k_ybar[i] + shift[i])).collect();
        project(&mut p_new);
        let kt_p_new = k.mul_t_vec(&p_new);
        let y_new: Vec<f64> = (0..n)
            .map(|i| (y[i] - tau * kt_p_new[i]) / (1.0 + tau * gamma))
            .collect();

        // duality gap P(y) − D(p), with D(p) = ⟨p, shift⟩ − ‖Kᵀp‖²/(2γ); the
        // dual-to-primal map y = −Kᵀp/γ competes with the primal iterate
        let f_dual = linalg::dot(&p_new, &shift) - 0.5 * linalg::dot(&kt_p_new, &kt_p_new) / gamma;
        let y_dual: Vec<f64> = kt_p_new.iter().map(|v| -v / gamma).collect();
        for cand in [&y_new, &y_dual] {
            let value = primal_value(cand);
            if value < best.1 {
                best = (cand.clone(), value);
            }
        }
        residual = (best.1 - f_dual).max(0.0) / fmath::abs(best.1).max(1.0);

        let theta = 1.0 / fmath::sqrt(1.0 + 2.0 * gamma * tau);
        tau *= theta;
        sigma /= theta;
        y_bar = (0..n).map(|i| y_new[i] + theta * (y_new[i] - y[i])).collect();
        y = y_new;
        p = p_new;
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let step = r_inv.mul_vec(&best.0);
    let x: Vec<f64> = anchor.iter().zip(&step).map(|(a, d)| a + d).collect();
    Ok(keep_if_better(payload, metric, gamma, x, residual, iterations, converged))
}

/// Dispatches on payload shape and metric structure.
pub fn solve_subproblem(
    payload: &Payload,
    metric: &Metric,
    gamma: f64,
    options: &SubsolverOptions,
) -> Result<SubproblemSolution> {
    match (payload.shape, metric.scale()) {
        (PayloadShape::AffineOnly, _) => solve_affine_metric(payload, metric, gamma),
        (PayloadShape::AffinePlusL1 | PayloadShape::AffinePlusQuadPlusL1, Some(scale)) => {
            solve_l1_quadratic_separable(payload, scale, gamma)
        }
        (PayloadShape::AffinePlusL1 | PayloadShape::AffinePlusQuadPlusL1, None) => {
            admm_l1_metric(payload, metric, gamma, options.admm_tol, options.admm_max_iter)
        }
        (PayloadShape::AbsAffinePlusL1, _) => {
            pdhg_abs_l1_metric(payload, metric, gamma, options.pdhg_tol, options.pdhg_max_iter)
        }
    }
}
