//! Validated containers for alpha returns, positions, constraints and the
//! stock risk model.
//!
//! Dates are indexed from the most recent one: column / slice `0` is date
//! `s = 1`, and larger indices are older. Every constructor validates its
//! input, so holding one of these types means the invariants hold.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::linalg::{self, relative_asymmetry};

/// Tolerance on `Σ_A |P_iAs| = 1` for positions that are not renormalized.
pub const L1_TOL: f64 = 1e-9;

/// Relative asymmetry accepted for a stock covariance matrix.
pub const RISK_MODEL_SYMMETRY_TOL: f64 = 1e-12;

/// Relative singular-value cutoff used to decide the column rank of a
/// constraint matrix.
pub const CONSTRAINT_RANK_TOL: f64 = 1e-10;

/// Minimum number of dates: one to decode plus two residual columns.
pub const MIN_DATES: usize = 3;

fn default_ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    if values.into_iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(())
}

/// Expected (or realized) alpha returns, `N` alphas by `d` dates.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaReturnPanel {
    values: DMatrix<f64>,
    alpha_ids: Vec<String>,
}

impl AlphaReturnPanel {
    pub fn new(values: DMatrix<f64>, alpha_ids: Vec<String>) -> Result<Self> {
        let (n, d) = values.shape();
        if n == 0 {
            return Err(Error::DimensionMismatch("return panel has no alphas".into()));
        }
        if d < MIN_DATES {
            return Err(Error::TooFewDates { required: MIN_DATES, actual: d });
        }
        if alpha_ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} alpha ids for {n} rows",
                alpha_ids.len()
            )));
        }
        check_finite(values.iter(), "alpha return panel")?;
        Ok(AlphaReturnPanel { values, alpha_ids })
    }

    /// Panel with ids `a1, a2, ...`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let ids = default_ids("a", values.nrows());
        Self::new(values, ids)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn alpha_ids(&self) -> &[String] {
        &self.alpha_ids
    }

    pub fn n_alphas(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_dates(&self) -> usize {
        self.values.ncols()
    }

    /// Returns for date `s = 1`.
    pub fn most_recent(&self) -> DVector<f64> {
        self.values.column(0).into_owned()
    }

    /// The panel seen from `offset` dates in the past: its date `s = 1` is
    /// this panel's date `s = offset + 1`.
    pub fn window(&self, offset: usize) -> Result<Self> {
        if offset + MIN_DATES > self.n_dates() {
            return Err(Error::TooFewDates {
                required: MIN_DATES,
                actual: self.n_dates().saturating_sub(offset),
            });
        }
        let cols = self.n_dates() - offset;
        Self::new(self.values.columns(offset, cols).into_owned(), self.alpha_ids.clone())
    }

    /// Same panel with the alpha rows permuted into `order`
    /// (`order[new] = old`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let rows: Vec<_> = order.iter().map(|&i| self.values.row(i)).collect();
        let ids = order.iter().map(|&i| self.alpha_ids[i].clone()).collect();
        Self::new(DMatrix::from_rows(&rows), ids)
    }
}

/// Normalized desired holdings `P_iAs`, stored as one `N x M` slice per date.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTensor {
    slices: Vec<DMatrix<f64>>,
    alpha_ids: Vec<String>,
    stock_ids: Vec<String>,
}

impl PositionTensor {
    /// Validate `slices` (one `N x M` matrix per date, most recent first).
    ///
    /// Each alpha's slice must have `Σ_A |P_iAs| = 1` within [`L1_TOL`]; with
    /// `renormalize` every slice is instead divided by its L1 norm. A zero
    /// slice is an error either way. A stock nobody holds is rejected.
    pub fn new(
        mut slices: Vec<DMatrix<f64>>,
        alpha_ids: Vec<String>,
        stock_ids: Vec<String>,
        renormalize: bool,
    ) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(Error::TooFewDates { required: 1, actual: 0 });
        };
        let (n, m) = first.shape();
        if slices.iter().any(|s| s.shape() != (n, m)) {
            return Err(Error::DimensionMismatch("position slices differ in shape".into()));
        }
        if alpha_ids.len() != n || stock_ids.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} alpha ids and {} stock ids for {n}x{m} slices",
                alpha_ids.len(),
                stock_ids.len()
            )));
        }
        if n == 0 || m == 0 {
            return Err(Error::DimensionMismatch("empty position tensor".into()));
        }
        for slice in &slices {
            check_finite(slice.iter(), "position tensor")?;
        }

        let mut held = vec![false; m];
        for (date, slice) in slices.iter_mut().enumerate() {
            for (alpha, mut row) in slice.row_iter_mut().enumerate() {
                let norm: f64 = row.iter().map(|x| x.abs()).sum();
                if norm == 0.0 {
                    return Err(Error::EmptyAlphaSlice { alpha, date });
                }
                if renormalize {
                    row /= norm;
                } else if (norm - 1.0).abs() > L1_TOL {
                    return Err(Error::NormalizationError { alpha, date, norm });
                }
                for (a, x) in row.iter().enumerate() {
                    held[a] |= *x != 0.0;
                }
            }
        }
        if let Some(a) = held.iter().position(|h| !h) {
            return Err(Error::UntradedStock(stock_ids[a].clone()));
        }
        Ok(PositionTensor { slices, alpha_ids, stock_ids })
    }

    /// Tensor with ids `a1..`, `S1..`.
    pub fn from_slices(slices: Vec<DMatrix<f64>>, renormalize: bool) -> Result<Self> {
        let (n, m) = slices.first().map(|s| s.shape()).unwrap_or((0, 0));
        Self::new(slices, default_ids("a", n), default_ids("S", m), renormalize)
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    /// Positions at date index `date` (`0` is `s = 1`).
    pub fn slice(&self, date: usize) -> &DMatrix<f64> {
        &self.slices[date]
    }

    pub fn most_recent(&self) -> &DMatrix<f64> {
        &self.slices[0]
    }

    pub fn alpha_ids(&self) -> &[String] {
        &self.alpha_ids
    }

    pub fn stock_ids(&self) -> &[String] {
        &self.stock_ids
    }

    pub fn n_alphas(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn n_stocks(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn n_dates(&self) -> usize {
        self.slices.len()
    }

    /// All `N·d` position rows stacked into one `(N·d) x M` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.n_alphas();
        let mut out = DMatrix::zeros(n * self.n_dates(), self.n_stocks());
        for (s, slice) in self.slices.iter().enumerate() {
            out.rows_mut(s * n, n).copy_from(slice);
        }
        out
    }

    /// Dates `offset..offset + len`, re-validated.
    pub fn dates(&self, offset: usize, len: usize) -> Result<Self> {
        if offset + len > self.n_dates() {
            return Err(Error::TooFewDates { required: offset + len, actual: self.n_dates() });
        }
        Self::new(
            self.slices[offset..offset + len].to_vec(),
            self.alpha_ids.clone(),
            self.stock_ids.clone(),
            false,
        )
    }

    /// Alpha rows permuted into `order` (`order[new] = old`).
    pub fn permuted_alphas(&self, order: &[usize]) -> Result<Self> {
        let slices = self
            .slices
            .iter()
            .map(|s| DMatrix::from_rows(&order.iter().map(|&i| s.row(i)).collect::<Vec<_>>()))
            .collect();
        let ids = order.iter().map(|&i| self.alpha_ids[i].clone()).collect();
        Self::new(slices, ids, self.stock_ids.clone(), false)
    }

    /// Stock columns permuted into `order` (`order[new] = old`).
    pub fn permuted_stocks(&self, order: &[usize]) -> Result<Self> {
        let slices = self.slices.iter().map(|s| s.select_columns(order)).collect();
        let ids = order.iter().map(|&a| self.stock_ids[a].clone()).collect();
        Self::new(slices, self.alpha_ids.clone(), ids, false)
    }

    /// Reorder alphas to follow `ids` exactly; every id must be present once.
    pub fn aligned_to_alphas(&self, ids: &[String]) -> Result<Self> {
        let order = alignment(&self.alpha_ids, ids, "alpha")?;
        self.permuted_alphas(&order)
    }

    /// Fraction of the stock universe each alpha holds at any date.
    pub fn universe_coverage(&self) -> DVector<f64> {
        let (n, m) = (self.n_alphas(), self.n_stocks());
        DVector::from_fn(n, |i, _| {
            let held = (0..m)
                .filter(|&a| self.slices.iter().any(|s| s[(i, a)] != 0.0))
                .count();
            held as f64 / m as f64
        })
    }
}

/// Positions of `target` ids inside `source` ids: `out[k]` is the index in
/// `source` of `target[k]`.
pub fn alignment(source: &[String], target: &[String], what: &str) -> Result<Vec<usize>> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} {what} ids cannot be aligned to {}",
            source.len(),
            target.len()
        )));
    }
    let index: std::collections::HashMap<&str, usize> =
        source.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    target
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::DimensionMismatch(format!("{what} `{id}` not found")))
        })
        .collect()
}

/// Linear constraints `Σ_A P_iAs Q_Aα = 0`, an `M x p` matrix of full
/// column rank with `p < M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    values: DMatrix<f64>,
}

impl ConstraintMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (m, p) = values.shape();
        if p >= m {
            return Err(Error::DimensionMismatch(format!(
                "{p} constraints on {m} stocks (need p < M)"
            )));
        }
        check_finite(values.iter(), "constraint matrix")?;
        if p > 0 {
            let sv = SVD::new(values.clone(), false, false).singular_values;
            let max = sv.max();
            let rank = sv.iter().filter(|&&s| s > CONSTRAINT_RANK_TOL * max).count();
            if rank < p {
                return Err(Error::RankDeficientConstraints { rank, columns: p });
            }
        }
        Ok(ConstraintMatrix { values })
    }

    /// No constraints on `m` stocks.
    pub fn none(m: usize) -> Self {
        ConstraintMatrix { values: DMatrix::zeros(m, 0) }
    }

    /// Dollar neutrality: a single all-ones column.
    pub fn dollar_neutral(m: usize) -> Self {
        ConstraintMatrix { values: DMatrix::from_element(m, 1, 1.0) }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_stocks(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.values.ncols()
    }
}

/// Where the worst constraint residual occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintViolation {
    pub alpha: usize,
    pub date: usize,
    pub constraint: usize,
    pub residual: f64,
}

/// Outcome of [`validate_constraints`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    pub max_residual: f64,
    pub worst: Option<ConstraintViolation>,
    pub passed: bool,
}

/// Largest `|Σ_A P_iAs Q_Aα|` over alphas, dates and constraints, checked
/// against `tol`.
pub fn validate_constraints(
    positions: &PositionTensor,
    constraints: &ConstraintMatrix,
    tol: f64,
) -> Result<ConstraintReport> {
    if constraints.n_stocks() != positions.n_stocks() {
        return Err(Error::DimensionMismatch(format!(
            "constraints cover {} stocks, positions {}",
            constraints.n_stocks(),
            positions.n_stocks()
        )));
    }
    let mut worst: Option<ConstraintViolation> = None;
    for (date, slice) in positions.slices().iter().enumerate() {
        let exposure = slice * constraints.values();
        for alpha in 0..exposure.nrows() {
            for constraint in 0..exposure.ncols() {
                let residual = exposure[(alpha, constraint)].abs();
                if worst.is_none_or(|w| residual > w.residual) {
                    worst = Some(ConstraintViolation { alpha, date, constraint, residual });
                }
            }
        }
    }
    let max_residual = worst.map_or(0.0, |w| w.residual);
    Ok(ConstraintReport { max_residual, worst, passed: max_residual <= tol })
}

/// Symmetric positive-definite stock covariance with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct StockRiskModel {
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl StockRiskModel {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() {
            return Err(Error::DimensionMismatch("risk model must be square".into()));
        }
        check_finite(covariance.iter(), "risk model")?;
        let asym = relative_asymmetry(&covariance);
        if asym > RISK_MODEL_SYMMETRY_TOL {
            return Err(Error::AsymmetricMatrix(asym));
        }
        let factor = linalg::cholesky(&covariance)?;
        Ok(StockRiskModel { covariance, factor })
    }

    pub fn identity(m: usize) -> Self {
        StockRiskModel { covariance: DMatrix::identity(m, m), factor: DMatrix::identity(m, m) }
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower-triangular `φ` with `φ φᵀ = Φ`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn n_stocks(&self) -> usize {
        self.covariance.nrows()
    }

    /// `Φ⁻¹ x` through the Cholesky factor.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = self
            .factor
            .solve_lower_triangular(x)
            .expect("cholesky factor has a positive diagonal");
        self.factor
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }
}

/// Decoded stock expected returns `E_A` for date `s = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedReturns {
    pub values: DVector<f64>,
    pub stock_ids: Vec<String>,
}

impl DecodedReturns {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
