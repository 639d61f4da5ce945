//! Out-of-sample regression residuals and the regression weights built from
//! them.
//!
//! For every date `s ≥ 2` the alpha returns are regressed (unit weights, no
//! intercept) on that date's positions. The serial variance of the residuals,
//! optionally with the leading principal components of their sample
//! covariance removed, sets the regression weights used at `s = 1`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{demean_rows, eigen_low_rank, wls_no_intercept};
use crate::panel::{AlphaReturnPanel, PositionTensor};

/// Relative factor applied to the median positive variance to floor
/// specific variances.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Residuals `ε_is` for dates `s = 2..d`: column `j` holds date `s = j + 2`
/// (date index `j + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    values: DMatrix<f64>,
}

impl ResidualPanel {
    pub fn new(values: DMatrix<f64>) -> Self {
        ResidualPanel { values }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_alphas(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }
}

/// Unit-weight residual panel from the dates `s ≥ 2` of `eta` and `positions`.
///
/// `tol` is the truncation threshold used when a date's position Gram matrix
/// is rank deficient (constrained alphas).
pub fn build_residual_panel(
    eta: &AlphaReturnPanel,
    positions: &PositionTensor,
    tol: f64,
) -> Result<ResidualPanel> {
    if eta.n_alphas() != positions.n_alphas() || eta.n_dates() > positions.n_dates() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} returns against {} alphas over {} dates of positions",
            eta.n_alphas(),
            eta.n_dates(),
            positions.n_alphas(),
            positions.n_dates()
        )));
    }
    residuals_from_slices(eta.values(), positions.slices(), tol).map(ResidualPanel::new)
}

/// Residual columns for dates `1..d` of `eta` against arbitrary loadings
/// (the slices need not be L1-normalized).
pub(crate) fn residuals_from_slices(
    eta: &DMatrix<f64>,
    slices: &[DMatrix<f64>],
    tol: f64,
) -> Result<DMatrix<f64>> {
    let (n, d) = eta.shape();
    let columns: Vec<DVector<f64>> = (1..d)
        .into_par_iter()
        .map(|s| {
            let loadings = &slices[s];
            if loadings.amax() == 0.0 {
                return Err(Error::DegenerateDate(s + 1));
            }
            let y = eta.column(s).into_owned();
            let unit = DVector::from_element(n, 1.0);
            wls_no_intercept(&y, loadings, &unit, tol)
                .map(|sol| sol.residuals)
                .map_err(|e| match e {
                    Error::NullGram => Error::DegenerateDate(s + 1),
                    other => other,
                })
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// Unbiased sample variance (divisor `len - 1`).
pub fn moving_variance(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::TooShort { required: 2, actual: x.len() });
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(ss / (x.len() - 1) as f64)
}

/// Effective rank: `exp` of the Shannon entropy of the normalized positive
/// spectrum.
///
/// With `exclude_first` the largest eigenvalue is dropped before the entropy
/// and `1` is added back afterwards.
pub fn erank(spectrum: &[f64], exclude_first: bool) -> Result<f64> {
    let mut positive: Vec<f64> = spectrum.iter().copied().filter(|&x| x > 0.0).collect();
    positive.sort_by(|a, b| b.total_cmp(a));
    if exclude_first {
        if positive.len() < 2 {
            return Err(Error::EmptySpectrum);
        }
        positive.remove(0);
    }
    if positive.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    // -Σ p ln p rewritten as ln S - Σ u ln u / S with u = x / x_max, S = Σ u;
    // every term vanishes exactly on a flat spectrum
    let top = positive[0];
    let scaled: Vec<f64> = positive.iter().map(|&x| x / top).collect();
    let total: f64 = scaled.iter().sum();
    let entropy = total.ln() - scaled.iter().map(|&u| u * u.ln()).sum::<f64>() / total;
    let er = entropy.exp();
    Ok(if exclude_first { er + 1.0 } else { er })
}

/// How an eRank-derived factor count becomes an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    Trunc,
    /// Round half to even.
    Round,
}

impl Rounding {
    fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::Trunc => x.trunc(),
            Rounding::Round => x.round_ties_even(),
        }
    }
}

impl FromStr for Rounding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trunc" => Ok(Rounding::Trunc),
            "round" => Ok(Rounding::Round),
            other => Err(Error::InvalidConfig(format!("unknown rounding `{other}`"))),
        }
    }
}

/// Residual risk model behind the regression weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// Serial residual variance.
    #[default]
    Plain,
    /// K-factor statistical model of the residual covariance.
    CovKFactor,
    /// K-factor statistical model of the residual correlation.
    CorrKFactor,
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(WeightMode::Plain),
            "cov_kfactor" => Ok(WeightMode::CovKFactor),
            "corr_kfactor" => Ok(WeightMode::CorrKFactor),
            other => Err(Error::InvalidConfig(format!("unknown weight mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightMode::Plain => "plain",
            WeightMode::CovKFactor => "cov_kfactor",
            WeightMode::CorrKFactor => "corr_kfactor",
        })
    }
}

/// Specific variances together with the factor structure removed from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecificVariance {
    /// `ξ̃²_i` (equal to `ξ²_i` when no factors are used).
    pub values: DVector<f64>,
    /// Plain serial variances `ξ²_i`.
    pub plain: DVector<f64>,
    /// Mode actually applied (`Plain` whenever `k_used == 0`).
    pub mode: WeightMode,
    pub k_used: usize,
    /// Positive spectrum of the residual covariance (or correlation) matrix,
    /// when it was computed.
    pub spectrum: Option<DVector<f64>>,
    /// eRank of `spectrum`, when `k` was chosen from it.
    pub erank: Option<f64>,
    /// `N x k_used` scaled components `Ũ` with `Ũ Ũᵀ` equal to the factor part
    /// that was removed.
    pub components: DMatrix<f64>,
}

impl SpecificVariance {
    fn plain_only(plain: DVector<f64>, spectrum: Option<DVector<f64>>) -> Self {
        let n = plain.len();
        SpecificVariance {
            values: plain.clone(),
            plain,
            mode: WeightMode::Plain,
            k_used: 0,
            spectrum,
            erank: None,
            components: DMatrix::zeros(n, 0),
        }
    }
}

fn row_variances(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let rows: Vec<f64> = x
        .row_iter()
        .map(|row| moving_variance(&row.iter().copied().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(DVector::from_vec(rows))
}

/// Specific variances from a residual panel with `m + 1` columns.
///
/// `k = 0`, `k ≥ m` or `mode = Plain` give plain serial variances. Otherwise
/// the leading `k` principal components of the residual covariance (or
/// correlation) are removed; `k < 0` picks `k` from the eRank of the
/// spectrum, truncated or rounded per `rounding`.
pub fn specific_variance(
    res: &ResidualPanel,
    k: i64,
    rounding: Rounding,
    mode: WeightMode,
) -> Result<SpecificVariance> {
    let cols = res.n_columns();
    if cols < 2 {
        return Err(Error::TooShort { required: 2, actual: cols });
    }
    let m = cols - 1;
    let plain = row_variances(res.values())?;
    if mode == WeightMode::Plain || k == 0 || (k > 0 && k as usize >= m) {
        return Ok(SpecificVariance::plain_only(plain, None));
    }

    let correlation = mode == WeightMode::CorrKFactor;
    let mut data = demean_rows(res.values());
    let scale: DVector<f64> = plain.map(f64::sqrt);
    if correlation {
        for (i, mut row) in data.row_iter_mut().enumerate() {
            if scale[i] > 0.0 {
                row /= scale[i];
            } else {
                row.fill(0.0);
            }
        }
    }
    let eig = match eigen_low_rank(&data, true) {
        Ok(e) => e,
        // every residual row is constant: nothing to remove
        Err(Error::ZeroSpectrum) => return Ok(SpecificVariance::plain_only(plain, None)),
        Err(e) => return Err(e),
    };

    let (k_used, er) = if k < 0 {
        let er = erank(eig.values.as_slice(), false)?;
        (rounding.apply(er) as usize, Some(er))
    } else {
        (k as usize, None)
    };
    if k_used == 0 || k_used >= m {
        let mut out = SpecificVariance::plain_only(plain, Some(eig.values.clone()));
        out.erank = er;
        return Ok(out);
    }

    let n = res.n_alphas();
    let kept = k_used.min(eig.len());
    let mut tail = DVector::zeros(n);
    for r in kept..eig.len() {
        let theta = eig.values[r];
        for i in 0..n {
            tail[i] += theta * eig.vectors[(i, r)].powi(2);
        }
    }
    let mut components = DMatrix::zeros(n, kept);
    for r in 0..kept {
        let root = eig.values[r].sqrt();
        for i in 0..n {
            let unit = if correlation { scale[i] } else { 1.0 };
            components[(i, r)] = unit * root * eig.vectors[(i, r)];
        }
    }
    let values = if correlation { plain.component_mul(&tail) } else { tail };
    Ok(SpecificVariance {
        values,
        plain,
        mode,
        k_used,
        spectrum: Some(eig.values),
        erank: er,
        components,
    })
}

/// Regression weights `v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionWeights {
    pub v: DVector<f64>,
    pub mode: WeightMode,
    pub k_used: usize,
}

impl RegressionWeights {
    /// Caller-supplied weights; every entry must be finite and positive.
    pub fn explicit(v: DVector<f64>) -> Result<Self> {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::BadWeight { index, value });
        }
        Ok(RegressionWeights { v, mode: WeightMode::Plain, k_used: 0 })
    }

    pub fn unit(n: usize) -> Self {
        RegressionWeights { v: DVector::from_element(n, 1.0), mode: WeightMode::Plain, k_used: 0 }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// `1e-12 · median` of the positive entries, or `1e-12` if there are none.
pub fn variance_floor(spec_var: &DVector<f64>) -> f64 {
    let mut positive: Vec<f64> = spec_var.iter().copied().filter(|&x| x > 0.0).collect();
    if positive.is_empty() {
        return VARIANCE_FLOOR;
    }
    positive.sort_by(f64::total_cmp);
    let mid = positive.len() / 2;
    let median = if positive.len() % 2 == 0 {
        0.5 * (positive[mid - 1] + positive[mid])
    } else {
        positive[mid]
    };
    VARIANCE_FLOOR * median
}

/// `v_i = multiplier_i / max(spec_var_i, floor)`.
pub fn regression_weights(
    spec_var: &DVector<f64>,
    turnover_multiplier: Option<&DVector<f64>>,
) -> Result<RegressionWeights> {
    if let Some((index, &value)) = spec_var.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::BadWeight { index, value });
    }
    if let Some(mult) = turnover_multiplier {
        if mult.len() != spec_var.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} turnover multipliers for {} alphas",
                mult.len(),
                spec_var.len()
            )));
        }
        if let Some((index, &value)) = mult.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::BadMultiplier { index, value });
        }
    }
    let floor = variance_floor(spec_var);
    let v = DVector::from_fn(spec_var.len(), |i, _| {
        let m = turnover_multiplier.map_or(1.0, |t| t[i]);
        m / spec_var[i].max(floor)
    });
    Ok(RegressionWeights { v, mode: WeightMode::Plain, k_used: 0 })
}

/// [`regression_weights`] tagged with the model that produced `spec`.
pub fn weights_from_specific_variance(
    spec: &SpecificVariance,
    turnover_multiplier: Option<&DVector<f64>>,
) -> Result<RegressionWeights> {
    let mut w = regression_weights(&spec.values, turnover_multiplier)?;
    w.mode = spec.mode;
    w.k_used = spec.k_used;
    Ok(w)
}
