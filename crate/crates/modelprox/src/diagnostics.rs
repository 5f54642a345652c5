//! Finite-difference and brute-force checks behind the `check` subcommand.

use modelprox_core::linalg::{self, Matrix, Metric, SymMatrix};
use modelprox_core::models::central_gradient;
use modelprox_core::problems::{gen_polytope, gen_qip, QipGenOptions};
use modelprox_core::subsolvers::{
    admm_l1_metric, pdhg_abs_l1_metric, solve_l1_quadratic_separable, AbsBlock, Payload,
};
use modelprox_core::{ModelFamily, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Error;

/// Worst observed error of one check against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub name: String,
    pub samples: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl Diagnostic {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            samples: 0,
            max_error: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, err: f64) {
        self.samples += 1;
        // NaN poisons the maximum so a non-finite value fails the check.
        if err.is_nan() || err > self.max_error {
            self.max_error = if self.max_error.is_nan() { f64::NAN } else { err };
        }
    }

    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// `‖a − b‖ / max(1, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    linalg::norm2(&linalg::sub(a, b)) / linalg::norm2(b).max(1.0)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..=r)).collect()
}

fn fd_scalar(f: &dyn Fn(f64) -> f64, t: f64) -> f64 {
    let h = 1e-6 * (1.0 + t.abs());
    (f(t + h) - f(t - h)) / (2.0 * h)
}

/// Central differences of a vector field, row by row.
fn fd_jacobian(g: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h = 1e-6 * (1.0 + linalg::norm_inf(x));
    let mut out = vec![0.0; n * n];
    let mut probe = x.to_vec();
    for j in 0..n {
        probe[j] = x[j] + h;
        let up = g(&probe);
        probe[j] = x[j] - h;
        let down = g(&probe);
        probe[j] = x[j];
        for i in 0..n {
            out[i * n + j] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    out
}

/// Gradient implied by a payload at its anchor, ignoring the `ℓ1` term.
fn payload_gradient_at_anchor(p: &Payload) -> Vec<f64> {
    let mut g = p.linear().to_vec();
    if let Some(block) = p.abs_block() {
        for (i, u) in block.offsets.iter().enumerate() {
            let s = block.weight * u.signum();
            for (gj, vj) in g.iter_mut().zip(block.slopes.row(i)) {
                *gj += s * vj;
            }
        }
    }
    g
}

/// Gradients, Hessians and model slopes against central differences at
/// `points` random points each.
pub fn calculus_checks(points: usize, seed: u64) -> Result<Vec<Diagnostic>, Error> {
    let tol = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut dpsi = Diagnostic::new("polytope psi'", tol);
    let mut ddpsi = Diagnostic::new("polytope psi''", tol);
    for p in [2.0, 3.0, 3.5, 4.0] {
        let inst = gen_polytope(2, 2, p, 2.0, seed)?;
        for _ in 0..points {
            let t = rng.random_range(-3.0..=3.0);
            let an = inst.psi_prime(t);
            dpsi.record((fd_scalar(&|s| inst.psi(s), t) - an).abs() / an.abs().max(1.0));
            let an2 = inst.psi_second(t);
            ddpsi.record((fd_scalar(&|s| inst.psi_prime(s), t) - an2).abs() / an2.abs().max(1.0));
        }
    }
    out.push(dpsi);
    out.push(ddpsi);

    let poly = Problem::Polytope(gen_polytope(6, 10, 3.0, 2.0, seed)?);
    let qip = Problem::Qip(gen_qip(5, 12, 0.0, seed, QipGenOptions::default())?);
    for (label, problem) in [("polytope softplus", &poly), ("qip h(A(x))", &qip)] {
        let mut grad = Diagnostic::new(format!("{label} gradient"), tol);
        let mut hess = Diagnostic::new(format!("{label} hessian"), tol);
        let smooth = |x: &[f64]| match problem {
            Problem::Polytope(p) => p.softplus_objective(x),
            Problem::Qip(q) => q.data_fit(x),
        };
        for _ in 0..points {
            let x = uniform(&mut rng, problem.dim(), 1.0);
            grad.record(relative_error(&central_gradient(&smooth, &x), &problem.smooth_gradient(&x)));
            let h = problem.smooth_hessian(&x)?;
            hess.record(relative_error(&fd_jacobian(&|y| problem.smooth_gradient(y), &x), h.data()));
        }
        out.push(grad);
        out.push(hess);
    }

    for (problem, families) in [
        (&poly, &[ModelFamily::Softplus, ModelFamily::Taylor][..]),
        (&qip, &[ModelFamily::Taylor, ModelFamily::M1, ModelFamily::M2, ModelFamily::M3][..]),
    ] {
        for &family in families {
            let mut d = Diagnostic::new(format!("{} model slope", family.label()), tol);
            for _ in 0..points {
                let center = uniform(&mut rng, problem.dim(), 1.0);
                let model = problem.model(&center, family)?;
                let fd = central_gradient(&|x| model.eval(x), &center);
                d.record(relative_error(&fd, &payload_gradient_at_anchor(model.payload())));
            }
            out.push(d);
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of `P_{S+}(A) + μI` on random symmetric matrices.
pub fn psd_projection_check(count: usize, seed: u64) -> Result<Diagnostic, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Diagnostic::new("psd projection lambda_min >= mu", 1e-9);
    for i in 0..count {
        let n = rng.random_range(1..=8);
        let mut data = uniform(&mut rng, n * n, 5.0);
        for r in 0..n {
            for c in 0..r {
                data[r * n + c] = data[c * n + r];
            }
        }
        let mu = [0.5, 1e-3, 2.0][i % 3];
        let proj = linalg::psd_project_plus_mu(&SymMatrix::new(n, data)?, mu)?;
        let eig = linalg::sym_eig(&proj)?;
        let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
        d.record((mu - min).max(0.0));
    }
    Ok(d)
}

/// `|f_x̄(x̄) − f(x̄)|` on random centers for every center-consistent family.
pub fn center_consistency_check(count: usize, seed: u64) -> Result<Vec<Diagnostic>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poly = Problem::Polytope(gen_polytope(6, 10, 3.0, 2.0, seed)?);
    let qip = Problem::Qip(gen_qip(5, 12, 0.05, seed, QipGenOptions::default())?);
    let mut out = Vec::new();
    for (problem, family) in [
        (&qip, ModelFamily::M1),
        (&qip, ModelFamily::M2),
        (&qip, ModelFamily::M3),
        (&qip, ModelFamily::Taylor),
        (&poly, ModelFamily::Taylor),
    ] {
        let name = format!("{} center consistency ({})", family.label(), if problem == &qip { "qip" } else { "polytope" });
        let mut d = Diagnostic::new(name, 1e-12);
        for _ in 0..count {
            let center = uniform(&mut rng, problem.dim(), 1.0);
            let model = problem.model(&center, family)?;
            d.record((model.eval(&center) - problem.objective(&center)).abs());
        }
        out.push(d);
    }
    Ok(out)
}

/// Subproblem objective in two dimensions, evaluated from scratch.
fn objective_2d(p: &Payload, h: [f64; 3], gamma: f64, x: [f64; 2]) -> f64 {
    let a = p.anchor();
    let d = [x[0] - a[0], x[1] - a[1]];
    let mut v = p.constant() + p.linear()[0] * d[0] + p.linear()[1] * d[1];
    v += 0.5 * p.quad_weight() * (d[0] * d[0] + d[1] * d[1]);
    if let Some(block) = p.abs_block() {
        let mut s = 0.0;
        for (i, u) in block.offsets.iter().enumerate() {
            let row = block.slopes.row(i);
            s += (u + row[0] * d[0] + row[1] * d[1]).abs();
        }
        v += block.weight * s;
    }
    v += p.l1_weight() * (x[0].abs() + x[1].abs());
    v + 0.5 * gamma * (h[0] * d[0] * d[0] + 2.0 * h[1] * d[0] * d[1] + h[2] * d[1] * d[1])
}

fn scan(f: &dyn Fn([f64; 2]) -> f64, center: [f64; 2], step: f64, half: i64, best: &mut ([f64; 2], f64)) {
    for i in -half..=half {
        for j in -half..=half {
            let p = [center[0] + i as f64 * step, center[1] + j as f64 * step];
            if p[0].abs() > 5.0 + 1e-12 || p[1].abs() > 5.0 + 1e-12 {
                continue;
            }
            let v = f(p);
            if v < best.1 {
                *best = (p, v);
            }
        }
    }
}

/// Minimum over the lattice `{−5 + k·10⁻³}²`: a full pass at spacing `10⁻²`,
/// then every fine lattice point within `0.1` of the coarse winner.
pub fn grid_min_2d(f: &dyn Fn([f64; 2]) -> f64) -> ([f64; 2], f64) {
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for i in 0..=1000 {
        for j in 0..=1000 {
            let p = [-5.0 + i as f64 * 1e-2, -5.0 + j as f64 * 1e-2];
            let v = f(p);
            if v < best.1 {
                best = (p, v);
            }
        }
    }
    let ci = ((best.0[0] + 5.0) * 1e3).round() as i64;
    let cj = ((best.0[1] + 5.0) * 1e3).round() as i64;
    for i in (ci - 100).max(0)..=(ci + 100).min(10_000) {
        for j in (cj - 100).max(0)..=(cj + 100).min(10_000) {
            let p = [-5.0 + i as f64 * 1e-3, -5.0 + j as f64 * 1e-3];
            let v = f(p);
            if v < best.1 {
                best = (p, v);
            }
        }
    }
    best
}

/// [`grid_min_2d`] followed by two zoomed scans (spacing `2·10⁻⁵` over
/// `±5·10⁻³`, then `2·10⁻⁷` over `±4·10⁻⁵`). Kinks of the absolute-value
/// terms rarely pass through lattice points, so the plain lattice can miss
/// the minimizer by more than its spacing.
pub fn refined_min_2d(f: &dyn Fn([f64; 2]) -> f64) -> ([f64; 2], f64) {
    let mut best = grid_min_2d(f);
    scan(f, best.0, 2e-5, 250, &mut best);
    scan(f, best.0, 2e-7, 200, &mut best);
    best
}

fn random_metric_2d(rng: &mut ChaCha8Rng) -> Result<(Metric, [f64; 3]), Error> {
    let e = uniform(rng, 3, 2.0);
    let raw = SymMatrix::from_rows(&[vec![e[0], e[1]], vec![e[1], e[2]]])?;
    let h = linalg::psd_project_plus_mu(&raw, 1.0)?;
    let entries = [h.get(0, 0), h.get(0, 1), h.get(1, 1)];
    Ok((Metric::dense(h)?, entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleShape {
    AffineL1,
    AffineQuadL1,
    AbsL1,
}

impl OracleShape {
    pub const ALL: [OracleShape; 3] = [OracleShape::AffineL1, OracleShape::AffineQuadL1, OracleShape::AbsL1];

    fn label(self) -> &'static str {
        match self {
            OracleShape::AffineL1 => "admm affine+l1",
            OracleShape::AffineQuadL1 => "admm affine+quad+l1",
            OracleShape::AbsL1 => "pdhg abs+l1",
        }
    }
}

fn random_payload(rng: &mut ChaCha8Rng, shape: OracleShape) -> Result<Payload, Error> {
    let anchor = uniform(rng, 2, 1.0);
    let l1 = rng.random_range(0.0..=0.5);
    Ok(match shape {
        OracleShape::AffineL1 => Payload::affine_l1(anchor, rng.random_range(-1.0..=1.0), uniform(rng, 2, 1.0), l1)?,
        OracleShape::AffineQuadL1 => {
            let c0 = rng.random_range(-1.0..=1.0);
            let g = uniform(rng, 2, 1.0);
            Payload::affine_quad_l1(anchor, c0, g, rng.random_range(0.0..=1.0), l1)?
        }
        OracleShape::AbsL1 => {
            let block = AbsBlock {
                offsets: uniform(rng, 3, 1.0),
                slopes: Matrix::new(3, 2, uniform(rng, 6, 1.0))?,
                weight: rng.random_range(0.05..=0.3),
            };
            Payload::abs_affine_l1(anchor, block, l1)?
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridOracle {
    /// [`grid_min_2d`].
    Lattice,
    /// [`refined_min_2d`].
    Refined,
}

/// ADMM and PDHG against a brute-force minimizer on `count` random
/// two-dimensional payloads per shape, and against the closed form on
/// separable metrics.
pub fn subsolver_oracle_checks(count: usize, seed: u64, oracle: GridOracle) -> Result<Vec<Diagnostic>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for shape in OracleShape::ALL {
        let mut arg = Diagnostic::new(format!("{} vs grid: argument", shape.label()), 1e-3);
        let mut obj = Diagnostic::new(format!("{} vs grid: |objective gap|", shape.label()), 1e-6);
        for _ in 0..count {
            let payload = random_payload(&mut rng, shape)?;
            let (metric, h) = random_metric_2d(&mut rng)?;
            let gamma = rng.random_range(2.0..=4.0);
            let sol = match shape {
                OracleShape::AbsL1 => pdhg_abs_l1_metric(&payload, &metric, gamma, 1e-10, 20000)?,
                _ => admm_l1_metric(&payload, &metric, gamma, 1e-10, 20000)?,
            };
            let f = |x: [f64; 2]| objective_2d(&payload, h, gamma, x);
            let (gx, gv) = match oracle {
                GridOracle::Lattice => grid_min_2d(&f),
                GridOracle::Refined => refined_min_2d(&f),
            };
            let sv = f([sol.x[0], sol.x[1]]);
            arg.record(linalg::norm_inf(&linalg::sub(&sol.x, &gx)));
            obj.record((sv - gv).abs());
        }
        out.push(arg);
        out.push(obj);
    }

    let mut admm = Diagnostic::new("admm vs soft-thresholding (separable metric)", 1e-6);
    let mut pdhg = Diagnostic::new("pdhg vs soft-thresholding (separable metric)", 1e-6);
    for _ in 0..count {
        let n = rng.random_range(1..=6);
        let scale = rng.random_range(0.5..=3.0);
        let gamma = rng.random_range(0.5..=4.0);
        let l1 = rng.random_range(0.0..=1.0);
        let anchor = uniform(&mut rng, n, 2.0);
        let g = uniform(&mut rng, n, 1.0);
        let rho2 = rng.random_range(0.0..=1.0);
        let payload = Payload::affine_quad_l1(anchor.clone(), 0.0, g, rho2, l1)?;
        let closed = solve_l1_quadratic_separable(&payload, scale, gamma)?;
        let dense = Metric::dense(SymMatrix::scaled_identity(n, scale))?;
        let s = admm_l1_metric(&payload, &dense, gamma, 1e-12, 50000)?;
        admm.record(linalg::norm_inf(&linalg::sub(&s.x, &closed.x)));

        // A block with zero slopes is constant, leaving the plain l1 prox.
        let block = AbsBlock {
            offsets: uniform(&mut rng, 2, 1.0),
            slopes: Matrix::zeros(2, n),
            weight: 0.25,
        };
        let abs = Payload::abs_affine_l1(anchor.clone(), block, l1)?;
        let reference = Payload::affine_l1(anchor, 0.0, vec![0.0; n], l1)?;
        let closed = solve_l1_quadratic_separable(&reference, scale, gamma)?;
        let s = pdhg_abs_l1_metric(&abs, &dense, gamma, 1e-12, 50000)?;
        pdhg.record(linalg::norm_inf(&linalg::sub(&s.x, &closed.x)));
    }
    out.push(admm);
    out.push(pdhg);
    Ok(out)
}

/// Everything `check` runs, at the given sample sizes.
pub fn run_all(points: usize, payloads: usize, seed: u64) -> Result<Vec<Diagnostic>, Error> {
    let mut out = calculus_checks(points, seed)?;
    out.push(psd_projection_check(5 * points, seed)?);
    out.extend(center_consistency_check(points, seed)?);
    out.extend(subsolver_oracle_checks(payloads, seed, GridOracle::Refined)?);
    Ok(out)
}
