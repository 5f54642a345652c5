//! Dense linear algebra: symmetric eigendecomposition, PSD projection,
//! Cholesky solves and the variable metric used by the subproblems.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    fmath::sqrt(dot(v, v))
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| fmath::abs(*x)).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, fmath::abs(*x)))
}

/// `a - b`, element-wise.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    fmath::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Row-major dense `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v`.
    pub fn mul_t_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }
}

/// Dense symmetric `n × n` matrix, symmetrized as `(A + Aᵀ)/2` on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize, mut data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1"));
        }
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch {
                expected: m.rows,
                got: m.cols,
            });
        }
        Self::new(m.rows, m.data)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, v) in d.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(&self.mul_vec(v), v)
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// `self += alpha · v vᵀ`.
    pub fn add_rank1(&mut self, alpha: f64, v: &[f64]) {
        let n = self.n;
        for i in 0..n {
            let avi = alpha * v[i];
            if avi == 0.0 {
                continue;
            }
            for j in 0..n {
                self.data[i * n + j] += avi * v[j];
            }
        }
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &SymMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn add_diag(&mut self, s: f64) {
        let n = self.n;
        for i in 0..n {
            self.data[i * n + i] += s;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|a| *a *= s);
    }
}

/// Eigenpairs of a symmetric matrix; eigenvalues descending, eigenvectors in
/// the matching columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    /// `Q · diag(values) · Qᵀ`.
    pub fn reconstruct_with(&self, values: &[f64]) -> SymMatrix {
        let n = values.len();
        let q = &self.vectors;
        let mut data = vec![0.0; n * n];
        for (k, lam) in values.iter().enumerate() {
            if *lam == 0.0 {
                continue;
            }
            for i in 0..n {
                let s = lam * q.get(i, k);
                if s == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += s * q.get(j, k);
                }
            }
        }
        // symmetrization inside `new` cannot fail for a square buffer
        SymMatrix::new(n, data).expect("square buffer")
    }
}

/// Symmetric eigendecomposition by Householder tridiagonalization followed by
/// implicit QL iterations.
pub fn sym_eig(a: &SymMatrix) -> Result<SymEigen> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries"));
    }
    let n = a.n;
    let mut v = a.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    tridiagonal_ql(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v[row * n + src]);
        }
    }
    Ok(SymEigen { values, vectors })
}

fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += fmath::abs(*dk);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = fmath::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                v[at(j, i)] = f;
                let mut g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tridiagonal_ql(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    let max_iter = 64 * n.max(1);
    for l in 0..n {
        tst1 = tst1.max(fmath::abs(d[l]) + fmath::abs(e[l]));
        let mut m = l;
        while m < n {
            if fmath::abs(e[m]) <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::EigenNoConvergence);
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = fmath::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = fmath::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if fmath::abs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// `P_{S+}(A) + μ·I`: clip negative eigenvalues to zero, then shift by `μ`.
pub fn psd_project_plus_mu(a: &SymMatrix, mu: f64) -> Result<SymMatrix> {
    psd_project_with_max(a, mu).map(|(m, _)| m)
}

/// Same as [`psd_project_plus_mu`], also returning the largest eigenvalue of
/// the result.
pub fn psd_project_with_max(a: &SymMatrix, mu: f64) -> Result<(SymMatrix, f64)> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput("mu must be positive and finite"));
    }
    let eig = sym_eig(a)?;
    let clipped: Vec<f64> = eig.values.iter().map(|l| l.max(0.0)).collect();
    let max = clipped.first().copied().unwrap_or(0.0) + mu;
    let mut out = eig.reconstruct_with(&clipped);
    out.add_diag(mu);
    Ok((out, max))
}

/// `‖V‖₂ = √λ_max(VᵀV)`.
pub fn spectral_norm(v: &Matrix) -> Result<f64> {
    let n = v.cols();
    let mut gram = SymMatrix::zeros(n);
    for i in 0..v.rows() {
        gram.add_rank1(1.0, v.row(i));
    }
    let eig = sym_eig(&gram)?;
    Ok(fmath::sqrt(eig.values.first().copied().unwrap_or(0.0).max(0.0)))
}

/// Cholesky factor `L` with `L·Lᵀ = source`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactorization {
    n: usize,
    lower: Vec<f64>,
}

impl SpdFactorization {
    pub fn new(source: &SymMatrix) -> Result<Self> {
        let n = source.n;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut s = source.get(j, j);
            for k in 0..j {
                s -= l[j * n + k] * l[j * n + k];
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = fmath::sqrt(s);
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = source.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

impl SpdFactorization {
    /// `L⁻ᵀ`, column by column from `Lᵀz = eⱼ`.
    pub fn inverse_upper(&self) -> Matrix {
        let n = self.n;
        let l = &self.lower;
        let mut out = Matrix::zeros(n, n);
        for j in 0..n {
            // Lᵀ is upper triangular, so z is zero below row j
            for i in (0..=j).rev() {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in (i + 1)..=j {
                    s -= l[k * n + i] * out.get(k, j);
                }
                out.set(i, j, s / l[i * n + i]);
            }
        }
        out
    }
}

pub fn spd_factor_solve(h: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != h.n {
        return Err(Error::DimensionMismatch {
            expected: h.n,
            got: b.len(),
        });
    }
    Ok(SpdFactorization::new(h)?.solve(b))
}

/// `‖v‖_H = √(vᵀHv)`.
pub fn metric_norm(h: &SymMatrix, v: &[f64]) -> Result<f64> {
    if v.len() != h.n {
        return Err(Error::DimensionMismatch {
            expected: h.n,
            got: v.len(),
        });
    }
    Ok(fmath::sqrt(h.quad_form(v).max(0.0)))
}

/// The variable metric `H_k` of the proximal term.
#[derive(Debug, Clone)]
pub enum Metric {
    ScaledIdentity {
        dim: usize,
        scale: f64,
    },
    Dense {
        matrix: SymMatrix,
        factor: SpdFactorization,
        max_eigenvalue: f64,
    },
}

impl Metric {
    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput("metric scale must be positive"));
        }
        Ok(Metric::ScaledIdentity { dim, scale })
    }

    pub fn dense(matrix: SymMatrix) -> Result<Self> {
        let max = sym_eig(&matrix)?.values[0];
        Self::dense_with_max_eigenvalue(matrix, max)
    }

    pub fn dense_with_max_eigenvalue(matrix: SymMatrix, max_eigenvalue: f64) -> Result<Self> {
        let factor = SpdFactorization::new(&matrix)?;
        Ok(Metric::Dense {
            matrix,
            factor,
            max_eigenvalue,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Metric::ScaledIdentity { dim, .. } => *dim,
            Metric::Dense { matrix, .. } => matrix.dim(),
        }
    }

    /// `Some(L)` when the metric is `L·Id`.
    pub fn scale(&self) -> Option<f64> {
        match self {
            Metric::ScaledIdentity { scale, .. } => Some(*scale),
            Metric::Dense { .. } => None,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Metric::ScaledIdentity { scale, .. } => v.iter().map(|x| scale * x).collect(),
            Metric::Dense { matrix, .. } => matrix.mul_vec(v),
        }
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            Metric::ScaledIdentity { scale, .. } => scale * dot(v, v),
            Metric::Dense { matrix, .. } => matrix.quad_form(v),
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        fmath::sqrt(self.quad_form(v).max(0.0))
    }

    /// `H⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Metric::ScaledIdentity { scale, .. } => b.iter().map(|x| x / scale).collect(),
            Metric::Dense { factor, .. } => factor.solve(b),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Metric::ScaledIdentity { dim, scale } => *dim as f64 * scale,
            Metric::Dense { matrix, .. } => matrix.trace(),
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        match self {
            Metric::ScaledIdentity { scale, .. } => *scale,
            Metric::Dense { max_eigenvalue, .. } => *max_eigenvalue,
        }
    }

    pub fn to_sym_matrix(&self) -> SymMatrix {
        match self {
            Metric::ScaledIdentity { dim, scale } => SymMatrix::scaled_identity(*dim, *scale),
            Metric::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// `R⁻¹` for the factorization `H = RᵀR` (`R = Lᵀ` from Cholesky).
    pub fn inverse_root(&self) -> Matrix {
        match self {
            Metric::ScaledIdentity { dim, scale } => {
                let mut m = Matrix::zeros(*dim, *dim);
                let s = 1.0 / fmath::sqrt(*scale);
                for i in 0..*dim {
                    m.set(i, i, s);
                }
                m
            }
            Metric::Dense { factor, .. } => factor.inverse_upper(),
        }
    }
}
