//! Dense complex linear algebra and seeded random sampling.
//!
//! Every other module goes through these types. Matrices wrap a column-major
//! [`faer::Mat`]; all factorizations run sequentially so that a fixed input
//! always produces bit-identical output, independent of how callers schedule
//! work across threads.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatRef, Par, Side};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Double-precision complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Clamping slack for normalized arcsine arguments.
pub const ARCSINE_CLAMP_TOL: f64 = 1e-9;

/// Condition-number limit above which a Hermitian system is declared singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative tolerance used when a matrix must be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{0} contains non-finite entries")]
    NonFinite(&'static str),
    #[error("svd did not converge (backend iteration cap reached)")]
    SvdNoConvergence,
    #[error("{matrix} is ill-conditioned: condition estimate {condition:.3e} exceeds {limit:.0e}")]
    IllConditioned { matrix: String, condition: f64, limit: f64 },
    #[error("{matrix} is not Hermitian positive definite")]
    NotPositiveDefinite { matrix: String },
    #[error("{0} is not Hermitian")]
    NotHermitian(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;

/// Dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    inner: Mat<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{})", self.rows(), self.cols())?;
        if self.rows() * self.cols() <= 64 {
            for i in 0..self.rows() {
                write!(f, "\n  [")?;
                for j in 0..self.cols() {
                    let z = self[(i, j)];
                    write!(f, " {:+.4}{:+.4}j", z.re, z.im)?;
                }
                write!(f, " ]")?;
            }
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: Mat::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: Mat::identity(n, n),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self {
            inner: Mat::from_fn(rows, cols, f),
        }
    }

    /// Builds a matrix from entries listed row by row.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if rows * cols != entries.len() {
            return Err(NumericsError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self::from_fn(rows, cols, |i, j| entries[i * cols + j]))
    }

    /// Real diagonal matrix.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[ComplexVector]) -> Result<Self> {
        let rows = columns.first().map_or(0, ComplexVector::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(NumericsError::DimensionMismatch("columns have unequal lengths".into()));
        }
        Ok(Self::from_fn(rows, columns.len(), |i, j| columns[j][i]))
    }

    pub fn from_faer(inner: Mat<C64>) -> Self {
        Self { inner }
    }

    pub fn as_faer(&self) -> MatRef<'_, C64> {
        self.inner.as_ref()
    }

    pub fn into_faer(self) -> Mat<C64> {
        self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        ComplexVector(self.inner.col(j).iter().copied().collect())
    }

    pub fn adjoint(&self) -> Self {
        Self {
            inner: self.inner.adjoint().to_owned(),
        }
    }

    /// `self · rhs`. Panics on a dimension mismatch.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols(), rhs.rows(), "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows(), rhs.cols());
        matmul(
            out.as_mut(),
            Accum::Replace,
            self.inner.as_ref(),
            rhs.inner.as_ref(),
            C64::new(1.0, 0.0),
            Par::Seq,
        );
        Self { inner: out }
    }

    /// `self · rhsᴴ` without materializing the adjoint.
    pub fn mul_adjoint(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols(), rhs.cols(), "mul_adjoint dimension mismatch");
        let mut out = Mat::zeros(self.rows(), rhs.rows());
        matmul(
            out.as_mut(),
            Accum::Replace,
            self.inner.as_ref(),
            rhs.inner.adjoint(),
            C64::new(1.0, 0.0),
            Par::Seq,
        );
        Self { inner: out }
    }

    /// `selfᴴ · rhs` without materializing the adjoint.
    pub fn adjoint_mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows(), rhs.rows(), "adjoint_mul dimension mismatch");
        let mut out = Mat::zeros(self.cols(), rhs.cols());
        matmul(
            out.as_mut(),
            Accum::Replace,
            self.inner.adjoint(),
            rhs.inner.as_ref(),
            C64::new(1.0, 0.0),
            Par::Seq,
        );
        Self { inner: out }
    }

    pub fn mul_vector(&self, v: &ComplexVector) -> ComplexVector {
        assert_eq!(self.cols(), v.len(), "matrix-vector dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.rows()];
        for j in 0..self.cols() {
            let vj = v[j];
            let col = self.inner.col(j);
            for (o, a) in out.iter_mut().zip(col.iter()) {
                *o += a * vj;
            }
        }
        ComplexVector(out)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            inner: Mat::from_fn(self.rows(), self.cols(), |i, j| self.inner[(i, j)] * alpha),
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows(), self.cols()), (rhs.rows(), rhs.cols()));
        Self {
            inner: &self.inner + &rhs.inner,
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows(), self.cols()), (rhs.rows(), rhs.cols()));
        Self {
            inner: &self.inner - &rhs.inner,
        }
    }

    /// `D · self` for a real diagonal `D`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.rows());
        Self {
            inner: Mat::from_fn(self.rows(), self.cols(), |i, j| self.inner[(i, j)] * d[i]),
        }
    }

    /// `self · D` for a real diagonal `D`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.cols());
        Self {
            inner: Mat::from_fn(self.rows(), self.cols(), |i, j| self.inner[(i, j)] * d[j]),
        }
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows().min(self.cols())).map(|i| self.inner[(i, i)]).collect()
    }

    pub fn diagonal_real(&self) -> Vec<f64> {
        self.diagonal().into_iter().map(|z| z.re).collect()
    }

    pub fn trace(&self) -> C64 {
        self.diagonal().into_iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm_l2()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.cols() {
            for z in self.inner.col(j).iter() {
                m = m.max(z.norm());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        (0..self.cols()).all(|j| self.inner.col(j).iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Largest `|A - Aᴴ|` entry relative to the largest entry of `A`.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut dev = 0.0f64;
        for j in 0..self.cols() {
            for i in j..self.rows() {
                dev = dev.max((self.inner[(i, j)] - self.inner[(j, i)].conj()).norm());
            }
        }
        dev / scale
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermitian_deviation() <= rel_tol
    }

    /// Replaces `self` by `(A + Aᴴ) / 2`, forcing a real diagonal.
    pub fn hermitianize(&mut self) {
        assert!(self.is_square());
        let n = self.rows();
        for j in 0..n {
            let d = self.inner[(j, j)].re;
            self.inner[(j, j)] = C64::new(d, 0.0);
            for i in (j + 1)..n {
                let avg = (self.inner[(i, j)] + self.inner[(j, i)].conj()) * 0.5;
                self.inner[(i, j)] = avg;
                self.inner[(j, i)] = avg.conj();
            }
        }
    }

    /// Eigenvalues of a Hermitian matrix, ascending. Reads the lower triangle.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_square() {
            return Err(NumericsError::DimensionMismatch(
                "eigenvalues need a square matrix".into(),
            ));
        }
        self.inner
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| NumericsError::Domain("hermitian eigenvalue iteration failed".into()))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.inner[(i, j)]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.inner[(i, j)]
    }
}

impl Mul<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Mul<&ComplexVector> for &ComplexMatrix {
    type Output = ComplexVector;
    fn mul(self, rhs: &ComplexVector) -> ComplexVector {
        self.mul_vector(rhs)
    }
}

/// Dense complex vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ComplexVector(pub Vec<C64>);

impl ComplexVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.0.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Inner product `selfᴴ · rhs`.
    pub fn dot(&self, rhs: &Self) -> C64 {
        assert_eq!(self.len(), rhs.len());
        self.0.iter().zip(&rhs.0).map(|(a, b)| a.conj() * b).sum()
    }
}

impl From<Vec<C64>> for ComplexVector {
    fn from(v: Vec<C64>) -> Self {
        Self(v)
    }
}

impl Index<usize> for ComplexVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

/// Thin singular value decomposition `A = U · diag(σ) · Vᴴ`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    /// Non-negative, sorted descending.
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.u.scale_cols(&self.singular_values).mul_adjoint(&self.v)
    }
}

/// Thin SVD of `a`.
///
/// Backed by faer's bidiagonalization + divide-and-conquer solver, which caps
/// its internal QR sweeps; hitting the cap surfaces as
/// [`NumericsError::SvdNoConvergence`] rather than partially converged output.
pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(NumericsError::NonFinite("svd input"));
    }
    let dec = a.inner.thin_svd().map_err(|_| NumericsError::SvdNoConvergence)?;
    let singular_values = dec.S().column_vector().iter().map(|s| s.re).collect();
    Ok(Svd {
        u: ComplexMatrix::from_faer(dec.U().to_owned()),
        singular_values,
        v: ComplexMatrix::from_faer(dec.V().to_owned()),
    })
}

/// Right singular vectors and singular values only; skips forming `U`.
pub fn right_singular_vectors(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    use faer::diag::Diag;
    use faer::linalg::svd::{self as fsvd, ComputeSvdVectors};

    if !a.is_finite() {
        return Err(NumericsError::NonFinite("svd input"));
    }
    let (m, n) = (a.rows(), a.cols());
    let size = m.min(n);
    let mut s = Diag::<C64>::zeros(size);
    let mut v = Mat::<C64>::zeros(n, size);
    let mut buf = MemBuffer::new(fsvd::svd_scratch::<C64>(
        m,
        n,
        ComputeSvdVectors::No,
        ComputeSvdVectors::Thin,
        Par::Seq,
        Default::default(),
    ));
    fsvd::svd(
        a.as_faer(),
        s.as_mut(),
        None,
        Some(v.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| NumericsError::SvdNoConvergence)?;
    let values = s.column_vector().iter().map(|z| z.re).collect();
    Ok((values, ComplexMatrix::from_faer(v)))
}

/// Solves `A · X = B` for Hermitian positive definite `A`.
pub fn hermitian_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    hermitian_solve_named("A", a, b)
}

/// [`hermitian_solve`] with a matrix name carried into error messages.
///
/// Factorizes with Cholesky, then estimates the 2-norm condition number by
/// power iteration on `A` and inverse iteration through the factor. Anything
/// above [`CONDITION_LIMIT`] is rejected.
pub fn hermitian_solve_named(name: &str, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "{name} is {}x{}, right-hand side has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(NumericsError::NonFinite("hermitian_solve input"));
    }
    if !a.is_hermitian(HERMITIAN_TOL) {
        return Err(NumericsError::NotHermitian(name.to_string()));
    }
    let llt = a
        .inner
        .llt(Side::Lower)
        .map_err(|_| NumericsError::NotPositiveDefinite {
            matrix: name.to_string(),
        })?;

    let condition = condition_estimate(a, |x: &Mat<C64>| llt.solve(x));
    if condition.is_nan() || condition > CONDITION_LIMIT {
        return Err(NumericsError::IllConditioned {
            matrix: name.to_string(),
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    Ok(ComplexMatrix::from_faer(llt.solve(&b.inner)))
}

fn condition_estimate(a: &ComplexMatrix, solve: impl Fn(&Mat<C64>) -> Mat<C64>) -> f64 {
    const ITERS: usize = 60;
    const RTOL: f64 = 1e-7;
    let n = a.rows();
    if n == 0 {
        return 1.0;
    }
    // deterministic start vector with components along every direction
    let start = Mat::<C64>::from_fn(n, 1, |i, _| {
        C64::new(1.0 + (i as f64 * 0.618_033_988_75).fract(), 0.3 * ((i % 7) as f64))
    });
    let normalize = |x: &mut Mat<C64>| -> f64 {
        let nrm = x.norm_l2();
        if nrm > 0.0 {
            for z in x.col_mut(0).iter_mut() {
                *z /= nrm;
            }
        }
        nrm
    };

    let mut x = start.clone();
    normalize(&mut x);
    let mut lambda_max = 0.0f64;
    for _ in 0..ITERS {
        let mut y = &a.inner * &x;
        let est = normalize(&mut y);
        x = y;
        let done = (est - lambda_max).abs() <= RTOL * est;
        lambda_max = est;
        if done {
            break;
        }
    }

    let mut x = start;
    normalize(&mut x);
    let mut inv_max = 0.0f64;
    for _ in 0..ITERS {
        let mut y = solve(&x);
        let est = normalize(&mut y);
        if !est.is_finite() {
            return f64::INFINITY;
        }
        x = y;
        let done = (est - inv_max).abs() <= RTOL * est;
        inv_max = est;
        if done {
            break;
        }
    }
    lambda_max * inv_max
}

/// Entrywise arcsine of the diagonally normalized real and imaginary parts.
///
/// Returns `asin(D^{-1/2} Re[C] D^{-1/2}) + j·asin(D^{-1/2} Im[C] D^{-1/2})`
/// with `D = Diag(C)`. Only the lower triangle of `c` is read; the output is
/// Hermitian by construction with exactly `π/2` on the diagonal. Normalized
/// arguments within [`ARCSINE_CLAMP_TOL`] outside `[-1, 1]` are clamped.
pub fn elementwise_arcsine_map(c: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !c.is_square() {
        return Err(NumericsError::DimensionMismatch(
            "arcsine map needs a square matrix".into(),
        ));
    }
    let n = c.rows();
    let diag = c.diagonal_real();
    let mut inv_sqrt = Vec::with_capacity(n);
    for (i, &d) in diag.iter().enumerate() {
        if d <= 0.0 || !d.is_finite() {
            return Err(NumericsError::Domain(format!(
                "diagonal entry {i} is {d}, arcsine map needs strictly positive diagonal"
            )));
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }

    let clamp = |x: f64, i: usize, j: usize| -> Result<f64> {
        if x.abs() > 1.0 + ARCSINE_CLAMP_TOL || x.is_nan() {
            return Err(NumericsError::Domain(format!(
                "normalized entry ({i}, {j}) = {x} lies outside [-1, 1]; input is not PSD"
            )));
        }
        Ok(x.clamp(-1.0, 1.0))
    };

    let mut out = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        out[(j, j)] = C64::new(FRAC_PI_2, 0.0);
        let sj = inv_sqrt[j];
        for i in (j + 1)..n {
            let s = inv_sqrt[i] * sj;
            let z = c[(i, j)];
            let re = clamp(z.re * s, i, j)?.asin();
            let im = clamp(z.im * s, i, j)?.asin();
            let w = C64::new(re, im);
            out[(i, j)] = w;
            out[(j, i)] = w.conj();
        }
    }
    Ok(out)
}

/// Draws circularly-symmetric complex Gaussian vectors with a fixed covariance.
#[derive(Clone, Debug)]
pub struct ComplexGaussianSampler {
    /// `L` with `L·Lᴴ = C`; `None` means identity covariance.
    factor: Option<ComplexMatrix>,
    len: usize,
}

impl ComplexGaussianSampler {
    pub fn white(len: usize) -> Self {
        Self { factor: None, len }
    }

    /// Factorizes `covariance` through its eigendecomposition, so singular
    /// (PSD but not PD) covariances are accepted.
    pub fn with_covariance(covariance: &ComplexMatrix) -> Result<Self> {
        if !covariance.is_square() {
            return Err(NumericsError::DimensionMismatch("covariance must be square".into()));
        }
        if !covariance.is_hermitian(HERMITIAN_TOL) {
            return Err(NumericsError::NotHermitian("covariance".into()));
        }
        let n = covariance.rows();
        let scale = covariance.max_abs();
        if scale == 0.0 {
            return Ok(Self {
                factor: Some(ComplexMatrix::zeros(n, n)),
                len: n,
            });
        }
        let evd = covariance
            .inner
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| NumericsError::Domain("covariance eigendecomposition failed".into()))?;
        let vals: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
        let tol = 1e-10 * scale * n as f64;
        let mut sqrt_vals = Vec::with_capacity(n);
        for &v in &vals {
            if v < -tol {
                return Err(NumericsError::Domain(format!(
                    "covariance has negative eigenvalue {v:.3e}"
                )));
            }
            sqrt_vals.push(v.max(0.0).sqrt());
        }
        let u = ComplexMatrix::from_faer(evd.U().to_owned());
        Ok(Self {
            factor: Some(u.scale_cols(&sqrt_vals)),
            len: n,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample(&self, rng: &mut RngStream) -> ComplexVector {
        let white = ComplexVector((0..self.len).map(|_| rng.complex_normal()).collect());
        match &self.factor {
            None => white,
            Some(l) => l.mul_vector(&white),
        }
    }
}

/// One `CN(0, C)` draw (`C = I` when `covariance` is `None`).
pub fn sample_complex_gaussian(
    rng: &mut RngStream,
    length: usize,
    covariance: Option<&ComplexMatrix>,
) -> Result<ComplexVector> {
    let sampler = match covariance {
        None => ComplexGaussianSampler::white(length),
        Some(c) => {
            if c.rows() != length {
                return Err(NumericsError::DimensionMismatch(format!(
                    "covariance is {}x{}, requested length {length}",
                    c.rows(),
                    c.cols()
                )));
            }
            ComplexGaussianSampler::with_covariance(c)?
        }
    };
    Ok(sampler.sample(rng))
}

/// Role of a random substream inside one channel realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Channel = 1,
    Symbols = 2,
    Noise = 3,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic stream id from a base id and a path of indices.
pub fn derive_stream_id(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |h, &p| {
        splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)))
    })
}

/// Stream id for `(experiment, realization, role)`.
pub fn stream_id(experiment: u64, realization: u64, role: StreamRole) -> u64 {
    derive_stream_id(experiment, &[realization, role as u64])
}

/// Seeded random stream: ChaCha8 keyed by `seed`, on stream `stream_id`.
///
/// Equal `(seed, stream_id)` pairs reproduce identical sequences; different
/// stream ids select non-overlapping ChaCha streams.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Fresh stream with the same seed and an id derived from this one.
    pub fn substream(&self, parts: &[u64]) -> Self {
        Self::new(self.seed, derive_stream_id(self.stream, parts))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Lemire's multiply-shift; bias is below 2^-64 · n
        ((self.rng.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// One `CN(0, 1)` draw: independent `N(0, 1/2)` rails.
    pub fn complex_normal(&mut self) -> C64 {
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
