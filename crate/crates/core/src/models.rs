//! Local model functions and model-error diagnostics.

use alloc::vec::Vec;

use crate::fmath;
use crate::linalg;
use crate::subsolvers::Payload;
use crate::{Error, Result};

/// An extended-real objective; `eval` may return `+∞` outside the domain.
pub trait Objective {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

/// Adapts a closure to [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// A model function anchored at its center, described exactly by its payload.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    payload: Payload,
    value_at_center: f64,
}

impl ModelState {
    pub fn new(payload: Payload) -> Self {
        let value_at_center = payload.eval(payload.anchor());
        Self {
            payload,
            value_at_center,
        }
    }

    pub fn center(&self) -> &[f64] {
        self.payload.anchor()
    }

    pub fn value_at_center(&self) -> f64 {
        self.value_at_center
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.payload.eval(x)
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelErrorSample {
    pub radius: f64,
    pub error: f64,
}

/// `|f(x) − f_x̄(x)|` together with `‖x − x̄‖₂`.
pub fn model_error<O: Objective + ?Sized>(
    objective: &O,
    model: &ModelState,
    x: &[f64],
) -> Result<ModelErrorSample> {
    let fx = objective.eval(x);
    if !fx.is_finite() {
        return Err(Error::OutOfDomain);
    }
    Ok(ModelErrorSample {
        radius: linalg::dist2(x, model.center()),
        error: fmath::abs(fx - model.eval(x)),
    })
}

/// Fitted local growth `error ≈ coefficient · radius^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    pub coefficient: f64,
    pub exponent: f64,
}

/// Least-squares fit of `log(error)` against `log(radius)` over the samples
/// whose radius is at most the median radius. Samples with zero error are
/// dropped; when the lower half holds fewer than three samples the three
/// smallest radii are used.
pub fn growth_fit(samples: &[ModelErrorSample]) -> Result<GrowthFit> {
    let mut usable: Vec<ModelErrorSample> = samples
        .iter()
        .copied()
        .filter(|s| s.error > 0.0 && s.radius > 0.0 && s.error.is_finite() && s.radius.is_finite())
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData("need at least three samples with positive error"));
    }
    usable.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    let median = usable[(usable.len() - 1) / 2].radius;
    let mut local: Vec<ModelErrorSample> = usable.iter().copied().filter(|s| s.radius <= median).collect();
    if local.len() < 3 {
        local = usable[..3].to_vec();
    }

    let pts: Vec<(f64, f64)> = local.iter().map(|s| (fmath::ln(s.radius), fmath::ln(s.error))).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("radii must be distinct"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    Ok(GrowthFit {
        coefficient: fmath::exp(my - exponent * mx),
        exponent,
    })
}

/// Estimates the constant `L` in `‖∇g_x̄(x)‖ ≤ L‖x − x̄‖`, where
/// `g_x̄ = f_x̄ − f`, as the largest ratio over the probes. Gradients are
/// central differences with step `1e-6·(1 + ‖x‖∞)`; probes at the center are
/// skipped.
pub fn h2_estimate<O: Objective + ?Sized>(
    objective: &O,
    model: &ModelState,
    probes: &[Vec<f64>],
) -> Result<f64> {
    let gap = |x: &[f64]| model.eval(x) - objective.eval(x);
    let mut best: Option<f64> = None;
    for x in probes {
        let r = linalg::dist2(x, model.center());
        if r == 0.0 {
            continue;
        }
        let grad = central_gradient(&gap, x);
        let ratio = linalg::norm2(&grad) / r;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or(Error::InsufficientData("every probe coincides with the center"))
}

/// Central-difference gradient with step `1e-6·(1 + ‖x‖∞)`.
pub fn central_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-6 * (1.0 + linalg::norm_inf(x));
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = probe[i];
            probe[i] = xi + h;
            let up = f(&probe);
            probe[i] = xi - h;
            let down = f(&probe);
            probe[i] = xi;
            (up - down) / (2.0 * h)
        })
        .collect()
}
