//! Dense linear algebra and sample statistics.
//!
//! Everything here works on small dense `f64` matrices (a few hundred rows and
//! columns at most). Products go through `matrixmultiply`; symmetric
//! eigenproblems use cyclic Jacobi rotations.

use serde::{Deserialize, Serialize};

/// Errors raised by the numeric primitives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("matrix shape {rows}x{cols} does not match data length {len}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("matrix contains a non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("design matrix is rank deficient (eigenvalue ratio {0:e})")]
    RankDeficient(f64),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-8;
const RANK_TOL: f64 = 1e-10;

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix, rejecting shape mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows * cols != data.len() {
            return Err(NumericsError::ShapeMismatch { rows, cols, len: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for results of arithmetic on already-checked inputs.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NumericsError::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Gathers the given rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::from_raw(indices.len(), self.cols, data)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest |a_ij - a_ji|; infinite for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(Op::N, self, Op::N, other, 0.0, &mut out);
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if self.cols != v.len() {
            return Err(NumericsError::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix::from_raw(self.rows, self.cols, data)
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }
}

/// Transpose flag for [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    N,
    T,
}

/// `c = beta * c + op(a) * op(b)`.
pub(crate) fn gemm(op_a: Op, a: &Matrix, op_b: Op, b: &Matrix, beta: f64, c: &mut Matrix) {
    let (m, k, rsa, csa) = match op_a {
        Op::N => (a.rows, a.cols, a.cols as isize, 1),
        Op::T => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (kb, n, rsb, csb) = match op_b {
        Op::N => (b.rows, b.cols, b.cols as isize, 1),
        Op::T => (b.cols, b.rows, 1, b.cols as isize),
    };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: strides and extents describe the row-major buffers checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigendecomposition of a symmetric matrix: `a = V diag(values) Vᵀ`.
///
/// Eigenvectors are the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigendecomposition. Input symmetry is the caller's concern;
/// only the upper triangle drives the rotations.
pub fn symmetric_eigen(a: &Matrix) -> SymmetricEigen {
    let n = a.rows;
    assert_eq!(n, a.cols, "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    if scale == 0.0 || n < 2 {
        return SymmetricEigen { values: m.diagonal(), vectors: v };
    }

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() <= f64::EPSILON * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                // Rotations this small cannot move the diagonal in floating point.
                if apq.abs() <= f64::EPSILON * 1e-2 * (app.abs() + aqq.abs()) {
                    m.set(p, q, 0.0);
                    m.set(q, p, 0.0);
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    SymmetricEigen { values: m.diagonal(), vectors: v }
}

fn check_symmetric(a: &Matrix) -> Result<(), NumericsError> {
    if a.rows != a.cols {
        return Err(NumericsError::DimensionMismatch { expected: a.rows, found: a.cols });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(NumericsError::NotSymmetric(asym));
    }
    Ok(())
}

/// Rebuilds `V diag(f(λ)) Vᵀ`.
fn spectral_map(eig: &SymmetricEigen, f: impl Fn(f64) -> f64) -> Matrix {
    let n = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for (j, &lambda) in eig.values.iter().enumerate() {
        let fl = f(lambda);
        for i in 0..n {
            scaled.data[i * n + j] *= fl;
        }
    }
    let mut out = Matrix::zeros(n, n);
    gemm(Op::N, &scaled, Op::T, &eig.vectors, 0.0, &mut out);
    out.symmetrize();
    out
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues in `[-1e-8, 0)` are treated as round-off and clamped to zero.
pub fn sym_sqrt(a: &Matrix) -> Result<Matrix, NumericsError> {
    check_symmetric(a)?;
    let eig = symmetric_eigen(a);
    if let Some(&worst) = eig.values.iter().find(|&&l| l < PSD_TOL) {
        return Err(NumericsError::NotPsd(worst));
    }
    Ok(spectral_map(&eig, |l| l.max(0.0).sqrt()))
}

/// Least-squares coefficients for `design * beta ≈ targets` via the normal
/// equations, inverted through their eigendecomposition.
pub fn least_squares_fit(design: &Matrix, targets: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let (n, p) = (design.rows, design.cols);
    if targets.len() != n {
        return Err(NumericsError::DimensionMismatch { expected: n, found: targets.len() });
    }
    if n < p || p == 0 {
        return Err(NumericsError::RankDeficient(0.0));
    }
    let mut gram = Matrix::zeros(p, p);
    gemm(Op::T, design, Op::N, design, 0.0, &mut gram);
    let eig = symmetric_eigen(&gram);
    let max = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if max == 0.0 || min < RANK_TOL * max {
        return Err(NumericsError::RankDeficient(if max == 0.0 { 0.0 } else { min / max }));
    }
    let xty: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| design.get(i, j) * targets[i]).sum())
        .collect();
    // beta = V diag(1/λ) Vᵀ Xᵀy
    let v = &eig.vectors;
    let proj: Vec<f64> = (0..p)
        .map(|k| (0..p).map(|i| v.get(i, k) * xty[i]).sum::<f64>() / eig.values[k])
        .collect();
    let mut beta: Vec<f64> = (0..p).map(|i| (0..p).map(|k| v.get(i, k) * proj[k]).sum()).collect();

    // One step of iterative refinement on the residual tightens orthogonality.
    let resid: Vec<f64> = (0..n).map(|i| targets[i] - dot(design.row(i), &beta)).collect();
    let xtr: Vec<f64> = (0..p).map(|j| (0..n).map(|i| design.get(i, j) * resid[i]).sum()).collect();
    let proj: Vec<f64> = (0..p)
        .map(|k| (0..p).map(|i| v.get(i, k) * xtr[i]).sum::<f64>() / eig.values[k])
        .collect();
    for (i, b) in beta.iter_mut().enumerate() {
        *b += (0..p).map(|k| v.get(i, k) * proj[k]).sum::<f64>();
    }
    Ok(beta)
}

/// Which covariance structure a set of moments carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovKind {
    Full,
    #[default]
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(Matrix),
    Diagonal(Vec<f64>),
}

/// Mean and covariance of a Gaussian fitted to samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

impl GaussianMoments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn kind(&self) -> CovKind {
        match self.cov {
            Covariance::Full(_) => CovKind::Full,
            Covariance::Diagonal(_) => CovKind::Diagonal,
        }
    }

    /// Adds `eps` to every variance.
    pub fn add_ridge(&mut self, eps: f64) {
        match &mut self.cov {
            Covariance::Full(m) => {
                let n = m.rows();
                for i in 0..n {
                    let v = m.get(i, i);
                    m.set(i, i, v + eps);
                }
            }
            Covariance::Diagonal(d) => d.iter_mut().for_each(|v| *v += eps),
        }
    }
}

/// Column means and unbiased (n-1) sample covariance.
pub fn sample_moments(rows: &Matrix, kind: CovKind) -> Result<GaussianMoments, NumericsError> {
    let n = rows.rows;
    if n < 2 {
        return Err(NumericsError::TooFewSamples(n));
    }
    let d = rows.cols;
    let mean = rows.column_means();
    let mut centered = rows.clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let denom = (n - 1) as f64;
    let cov = match kind {
        CovKind::Diagonal => {
            let mut var = vec![0.0; d];
            for r in 0..n {
                for (acc, v) in var.iter_mut().zip(centered.row(r)) {
                    *acc += v * v;
                }
            }
            var.iter_mut().for_each(|v| *v /= denom);
            Covariance::Diagonal(var)
        }
        CovKind::Full => {
            let mut c = Matrix::zeros(d, d);
            gemm(Op::T, &centered, Op::N, &centered, 0.0, &mut c);
            c.data.iter_mut().for_each(|v| *v /= denom);
            c.symmetrize();
            Covariance::Full(c)
        }
    };
    Ok(GaussianMoments { mean, cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        let data = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(r, c, data).unwrap()
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(Matrix::new(2, 2, vec![1.0; 3]), Err(NumericsError::ShapeMismatch { .. })));
        assert_eq!(Matrix::new(1, 2, vec![1.0, f64::NAN]), Err(NumericsError::NonFinite(1)));
        assert_eq!(Matrix::new(1, 1, vec![f64::INFINITY]), Err(NumericsError::NonFinite(0)));
    }

    #[test]
    fn gemm_transposes_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 4, 3);
        let b = random_matrix(&mut rng, 4, 5);
        let mut c = Matrix::zeros(3, 5);
        gemm(Op::T, &a, Op::N, &b, 0.0, &mut c);
        let expect = naive_matmul(&a.transpose(), &b);
        assert!(c.sub(&expect).max_abs() < 1e-14);

        let d = random_matrix(&mut rng, 5, 3);
        let mut e = Matrix::zeros(4, 5);
        gemm(Op::N, &a, Op::T, &d, 0.0, &mut e);
        assert!(e.sub(&naive_matmul(&a, &d.transpose())).max_abs() < 1e-14);
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i3 = sym_sqrt(&Matrix::identity(3)).unwrap();
        assert!(i3.sub(&Matrix::identity(3)).max_abs() < 1e-15);
        let d = sym_sqrt(&Matrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!(d.sub(&Matrix::from_diagonal(&[2.0, 3.0])).max_abs() < 1e-15);
    }

    #[test]
    fn sqrt_reconstructs_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let g = random_matrix(&mut rng, 5, 5);
            let a = naive_matmul(&g, &g.transpose());
            let s = sym_sqrt(&a).unwrap();
            assert!(s.asymmetry() < 1e-14);
            let back = naive_matmul(&s, &s);
            let rel = back.sub(&a).frobenius_norm() / a.frobenius_norm();
            assert!(rel <= 1e-8, "relative error {rel}");
            assert!(symmetric_eigen(&s).values.iter().all(|&l| l > -1e-12));
        }
    }

    #[test]
    fn sqrt_clamps_roundoff_but_rejects_indefinite() {
        let tiny = Matrix::from_diagonal(&[1.0, -1e-10]);
        let s = sym_sqrt(&tiny).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
        assert!(matches!(sym_sqrt(&Matrix::from_diagonal(&[1.0, -1e-3])), Err(NumericsError::NotPsd(_))));
        let asym = Matrix::new(2, 2, vec![1.0, 0.5, 0.4, 1.0]).unwrap();
        assert!(matches!(sym_sqrt(&asym), Err(NumericsError::NotSymmetric(_))));
    }

    #[test]
    fn eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_matrix(&mut rng, 30, 30);
        let mut a = g.clone();
        for i in 0..30 {
            for j in 0..30 {
                a.set(i, j, g.get(i, j) + g.get(j, i));
            }
        }
        let eig = symmetric_eigen(&a);
        let back = spectral_map(&eig, |l| l);
        assert!(back.sub(&a).max_abs() < 1e-12);
    }

    #[test]
    fn exact_linear_fit() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let beta = least_squares_fit(&x, &[1.0, 3.0, 5.0]).unwrap();
        assert!((beta[0] - 1.0).abs() < 1e-12 && (beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_fit_is_mean() {
        let x = Matrix::new(4, 1, vec![1.0; 4]).unwrap();
        let y = [2.0, 7.0, -1.0, 4.5];
        let beta = least_squares_fit(&x, &y).unwrap();
        assert!((beta[0] - 3.125).abs() < 1e-12);
    }

    #[test]
    fn residual_is_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let x = random_matrix(&mut rng, 20, 3);
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
            let beta = least_squares_fit(&x, &y).unwrap();
            for j in 0..3 {
                let s: f64 = (0..20).map(|i| x.get(i, j) * (y[i] - dot(x.row(i), &beta))).sum();
                assert!(s.abs() < 1e-8, "column {j}: {s}");
            }
        }
    }

    #[test]
    fn rank_deficient_design() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(least_squares_fit(&x, &[1.0, 2.0, 3.0]), Err(NumericsError::RankDeficient(_))));
    }

    #[test]
    fn moments_of_two_points() {
        let rows = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let m = sample_moments(&rows, CovKind::Full).unwrap();
        assert_eq!(m.mean, vec![1.0, 1.0]);
        assert_eq!(m.cov, Covariance::Full(Matrix::new(2, 2, vec![2.0; 4]).unwrap()));
        let d = sample_moments(&rows, CovKind::Diagonal).unwrap();
        assert_eq!(d.cov, Covariance::Diagonal(vec![2.0, 2.0]));
    }

    #[test]
    fn moments_of_identical_points_and_too_few() {
        let rows = Matrix::from_rows(&vec![vec![3.0, 1.0]; 4]).unwrap();
        let m = sample_moments(&rows, CovKind::Full).unwrap();
        assert_eq!(m.cov, Covariance::Full(Matrix::zeros(2, 2)));
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(sample_moments(&one, CovKind::Diagonal), Err(NumericsError::TooFewSamples(1)));
    }

    #[test]
    fn moments_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (n, means, sds) = (10_000usize, [1.0, -2.0, 0.5], [0.1, 2.0, 1.0]);
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            for k in 0..3 {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(means[k] + sds[k] * z);
            }
        }
        let m = sample_moments(&Matrix::new(n, 3, data).unwrap(), CovKind::Diagonal).unwrap();
        let Covariance::Diagonal(var) = &m.cov else { unreachable!() };
        for k in 0..3 {
            let se_mean = sds[k] / (n as f64).sqrt();
            assert!((m.mean[k] - means[k]).abs() < 3.0 * se_mean);
            let s2 = sds[k] * sds[k];
            let se_var = s2 * (2.0 / (n as f64 - 1.0)).sqrt();
            assert!((var[k] - s2).abs() < 3.0 * se_var);
        }
    }

    #[test]
    fn full_covariance_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 6, 10);
        let m = sample_moments(&x, CovKind::Full).unwrap();
        let Covariance::Full(c) = &m.cov else { unreachable!() };
        assert_eq!(c.asymmetry(), 0.0);
        assert!(symmetric_eigen(c).values.iter().all(|&l| l > -1e-10));
    }
}
