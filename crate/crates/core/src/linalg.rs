//! Dense linear algebra kernels shared by the rest of the crate.
//!
//! Symmetric eigendecomposition, the Gram-matrix route to the spectrum of a
//! tall sample covariance, Cholesky factorization, truncated spectral
//! pseudo-inversion and weighted no-intercept least squares.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`sym_eigen`] and [`cholesky`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Gram eigenvalues at or below this fraction of the largest one are treated
/// as zero by [`eigen_low_rank`].
const LOW_RANK_CUTOFF: f64 = 1e-12;

/// Eigenpairs sorted by descending eigenvalue.
///
/// Column `k` of `vectors` belongs to `values[k]`. Each eigenvector has its
/// largest-magnitude component positive (first such component on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.values[k];
        }
        scaled * self.vectors.transpose()
    }

    fn from_unsorted(values: &DVector<f64>, vectors: &DMatrix<f64>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        // stable: exact ties keep their original order
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
        let sorted_values = DVector::from_iterator(order.len(), order.iter().map(|&i| values[i]));
        let mut sorted_vectors = DMatrix::zeros(vectors.nrows(), order.len());
        for (dst, &src) in order.iter().enumerate() {
            let mut col = vectors.column(src).into_owned();
            fix_sign(&mut col);
            sorted_vectors.set_column(dst, &col);
        }
        EigenSystem { values: sorted_values, vectors: sorted_vectors }
    }
}

/// Flip `v` so that its largest-magnitude component is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Largest `|a_ij - a_ji|` relative to the largest entry magnitude.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

fn require_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn require_symmetric(a: &DMatrix<f64>, tol: f64) -> Result<()> {
    let asym = relative_asymmetry(a);
    if asym > tol {
        return Err(Error::AsymmetricMatrix(asym));
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<EigenSystem> {
    require_square(a, "eigen input")?;
    require_symmetric(a, SYMMETRY_TOL)?;
    if a.nrows() == 0 {
        return Ok(EigenSystem { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    Ok(EigenSystem::from_unsorted(&eig.eigenvalues, &eig.eigenvectors))
}

/// Subtract each row's mean from that row.
pub fn demean_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    let p = x.ncols() as f64;
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / p;
        row.add_scalar_mut(-mean);
    }
    out
}

/// Positive eigenpairs of the `n x n` sample covariance `X_c X_cᵀ / (p - 1)`
/// of an `n x p` matrix, computed from the `p x p` Gram matrix `X_cᵀ X_c`.
///
/// The `n x n` matrix is never formed. With `demean_rows` at most
/// `min(n, p - 1)` pairs come back.
pub fn eigen_low_rank(x: &DMatrix<f64>, demean: bool) -> Result<EigenSystem> {
    let (n, p) = x.shape();
    if n < 2 || p < 2 {
        return Err(Error::TooShort { required: 2, actual: n.min(p) });
    }
    let xc = if demean { demean_rows(x) } else { x.clone() };
    if xc.amax() == 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let gram = xc.tr_mul(&xc);
    let eig = sym_eigen(&gram)?;
    let mu_max = eig.values[0];
    if mu_max <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let max_pairs = n.min(if demean { p - 1 } else { p });
    let kept = eig
        .values
        .iter()
        .take(max_pairs)
        .take_while(|&&mu| mu > LOW_RANK_CUTOFF * mu_max)
        .count();

    let denom = (p - 1) as f64;
    let mut values = DVector::zeros(kept);
    let mut vectors = DMatrix::zeros(n, kept);
    for k in 0..kept {
        let mut v = &xc * eig.vectors.column(k);
        let norm = v.norm();
        v /= norm;
        fix_sign(&mut v);
        values[k] = eig.values[k] / denom;
        vectors.set_column(k, &v);
    }
    Ok(EigenSystem { values, vectors })
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_square(a, "cholesky input")?;
    require_symmetric(a, SYMMETRY_TOL)?;
    let sym = (a + a.transpose()) * 0.5;
    Cholesky::new(sym).map(|c| c.l()).ok_or(Error::NotPositiveDefinite)
}

/// Eigendecomposition of a PSD matrix with the eigenvalues at or below
/// `tol * λ_max` discarded.
///
/// Solving against it applies `Σ_{a retained} λ_a⁻¹ v_a v_aᵀ`, which is the
/// `λ0 → 0+` limit of regularizing the null directions.
#[derive(Debug, Clone)]
pub struct TruncatedEigen {
    pub system: EigenSystem,
    pub retained: usize,
    pub tol: f64,
}

impl TruncatedEigen {
    pub fn new(gram: &DMatrix<f64>, tol: f64) -> Result<Self> {
        let system = sym_eigen(gram)?;
        if system.is_empty() || system.values[0] <= 0.0 {
            return Err(Error::NullGram);
        }
        let threshold = tol * system.values[0];
        let retained = system.values.iter().take_while(|&&l| l > threshold).count();
        Ok(TruncatedEigen { system, retained, tol })
    }

    /// Number of discarded (null) directions.
    pub fn nullity(&self) -> usize {
        self.system.len() - self.retained
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(rhs.len());
        for a in 0..self.retained {
            let v = self.system.vectors.column(a);
            let coef = v.dot(rhs) / self.system.values[a];
            out.axpy(coef, &v, 1.0);
        }
        out
    }

    /// The pseudo-inverse as an explicit matrix.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let m = self.system.vectors.nrows();
        let mut out = DMatrix::zeros(m, m);
        for a in 0..self.retained {
            let v = self.system.vectors.column(a);
            out.ger(1.0 / self.system.values[a], &v, &v, 1.0);
        }
        out
    }
}

/// `Lᵀ diag(v) L`, symmetric by construction.
pub fn weighted_gram(loadings: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = loadings.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= weights[i].sqrt();
    }
    let gram = scaled.tr_mul(&scaled);
    (&gram + gram.transpose()) * 0.5
}

/// `Lᵀ (v ∘ y)`.
pub fn weighted_projection(
    loadings: &DMatrix<f64>,
    weights: &DVector<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    loadings.tr_mul(&weights.component_mul(y))
}

/// Result of a weighted no-intercept regression.
#[derive(Debug, Clone)]
pub struct WlsSolution {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
}

/// Weighted least squares of `y` on the columns of `loadings` without an
/// intercept, minimizing `Σ_i v_i (y_i - Σ_a L_ia c_a)²`.
///
/// A rank-deficient `Lᵀ V L` is handled by [`TruncatedEigen`] at `tol`, which
/// gives the minimum-norm coefficients and the exact projection residuals.
pub fn wls_no_intercept(
    y: &DVector<f64>,
    loadings: &DMatrix<f64>,
    weights: &DVector<f64>,
    tol: f64,
) -> Result<WlsSolution> {
    let (n, m) = loadings.shape();
    if y.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "regression with {n} rows got {} observations and {} weights",
            y.len(),
            weights.len()
        )));
    }
    if n < m {
        return Err(Error::Underdetermined { rows: n, columns: m });
    }
    if let Some((index, &value)) =
        weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::BadWeight { index, value });
    }
    let gram = weighted_gram(loadings, weights);
    let rhs = weighted_projection(loadings, weights, y);
    let coefficients = TruncatedEigen::new(&gram, tol)?.solve(&rhs);
    let fitted = loadings * &coefficients;
    let residuals = y - &fitted;
    Ok(WlsSolution { coefficients, residuals, fitted })
}
