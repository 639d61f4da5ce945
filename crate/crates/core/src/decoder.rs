//! Stock expected returns for the most recent date.
//!
//! Weights come from the out-of-sample residuals (dates `s ≥ 2`); at `s = 1`
//! the alpha expected returns are regressed on the positions with those
//! weights. The weighted Gram matrix is inverted on its retained spectrum, so
//! constrained alphas yield returns orthogonal to the constraints.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{weighted_gram, weighted_projection, TruncatedEigen};
use crate::panel::{AlphaReturnPanel, DecodedReturns, PositionTensor, MIN_DATES};
use crate::residual::{
    residuals_from_slices, specific_variance, weights_from_specific_variance, RegressionWeights,
    ResidualPanel, Rounding, SpecificVariance, WeightMode,
};

/// Default relative eigenvalue cutoff separating null directions.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Series whose serial variance sets the regression weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceSource {
    /// Residuals of the per-date regressions.
    #[default]
    Residuals,
    /// The alpha expected returns themselves (diagnostic comparison only).
    Returns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    /// Number of residual principal components; `0` none, negative for eRank.
    pub k: i64,
    pub tol: f64,
    pub rounding: Rounding,
    pub mode: WeightMode,
    pub variance_source: VarianceSource,
    pub turnover_multiplier: Option<DVector<f64>>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            k: 0,
            tol: DEFAULT_TOL,
            rounding: Rounding::Trunc,
            mode: WeightMode::CovKFactor,
            variance_source: VarianceSource::Residuals,
            turnover_multiplier: None,
        }
    }
}

impl DecodeConfig {
    pub fn with_k(k: i64, tol: f64) -> Self {
        DecodeConfig { k, tol, ..Default::default() }
    }
}

/// `X = Pᵀ V P` at one date with its truncated spectrum.
#[derive(Debug, Clone)]
pub struct WeightedGram {
    pub matrix: DMatrix<f64>,
    pub spectrum: TruncatedEigen,
}

impl WeightedGram {
    pub fn new(positions: &DMatrix<f64>, weights: &DVector<f64>, tol: f64) -> Result<Self> {
        let matrix = weighted_gram(positions, weights);
        let spectrum = TruncatedEigen::new(&matrix, tol)?;
        Ok(WeightedGram { matrix, spectrum })
    }

    pub fn retained(&self) -> usize {
        self.spectrum.retained
    }

    pub fn nullity(&self) -> usize {
        self.spectrum.nullity()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.spectrum.system.values
    }
}

/// Everything the pipeline computed on the way to `E`.
#[derive(Debug, Clone)]
pub struct DecodeReport {
    pub returns: DecodedReturns,
    pub specific: SpecificVariance,
    pub weights: RegressionWeights,
    pub gram: WeightedGram,
}

/// Decode `E` for date `s = 1` with `k` residual components (covariance
/// mode) and truncation threshold `tol`.
pub fn decode(
    eta: &AlphaReturnPanel,
    positions: &PositionTensor,
    k: i64,
    tol: f64,
) -> Result<DecodedReturns> {
    decode_with(eta, positions, &DecodeConfig::with_k(k, tol)).map(|r| r.returns)
}

pub fn decode_with(
    eta: &AlphaReturnPanel,
    positions: &PositionTensor,
    config: &DecodeConfig,
) -> Result<DecodeReport> {
    if eta.n_alphas() != positions.n_alphas() {
        return Err(Error::DimensionMismatch(format!(
            "{} alphas in returns, {} in positions",
            eta.n_alphas(),
            positions.n_alphas()
        )));
    }
    if positions.n_dates() < eta.n_dates() {
        return Err(Error::TooFewDates { required: eta.n_dates(), actual: positions.n_dates() });
    }
    let (values, specific, weights, gram) = decode_slices(eta.values(), positions.slices(), config)?;
    Ok(DecodeReport {
        returns: DecodedReturns { values, stock_ids: positions.stock_ids().to_vec() },
        specific,
        weights,
        gram,
    })
}

/// Pipeline on raw loadings, shared with the elimination route whose reduced
/// positions are not L1-normalized.
pub(crate) fn decode_slices(
    eta: &DMatrix<f64>,
    slices: &[DMatrix<f64>],
    config: &DecodeConfig,
) -> Result<(DVector<f64>, SpecificVariance, RegressionWeights, WeightedGram)> {
    let d = eta.ncols();
    if d < MIN_DATES {
        return Err(Error::TooFewDates { required: MIN_DATES, actual: d });
    }
    let history = match config.variance_source {
        VarianceSource::Residuals => residuals_from_slices(eta, slices, config.tol)?,
        VarianceSource::Returns => eta.columns(1, d - 1).into_owned(),
    };
    let specific = specific_variance(&ResidualPanel::new(history), config.k, config.rounding, config.mode)?;
    let weights = weights_from_specific_variance(&specific, config.turnover_multiplier.as_ref())?;
    let eta_s1 = eta.column(0).into_owned();
    let gram = WeightedGram::new(&slices[0], &weights.v, config.tol)?;
    let rhs = weighted_projection(&slices[0], &weights.v, &eta_s1);
    let values = gram.spectrum.solve(&rhs);
    Ok((values, specific, weights, gram))
}

/// The `s = 1` spectral solve with caller-supplied weights.
pub fn decode_with_explicit_weights(
    eta_s1: &DVector<f64>,
    positions_s1: &DMatrix<f64>,
    weights: &RegressionWeights,
    tol: f64,
) -> Result<DVector<f64>> {
    let n = positions_s1.nrows();
    if eta_s1.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} position rows, {} returns, {} weights",
            eta_s1.len(),
            weights.len()
        )));
    }
    let gram = WeightedGram::new(positions_s1, &weights.v, tol)?;
    Ok(gram.spectrum.solve(&weighted_projection(positions_s1, &weights.v, eta_s1)))
}

/// Decode every date that still has [`MIN_DATES`] dates of history: entry
/// `t` of the result is `E` as of date `s = t + 1`. Windows run in parallel.
pub fn decode_history(
    eta: &AlphaReturnPanel,
    positions: &PositionTensor,
    config: &DecodeConfig,
) -> Result<Vec<DecodedReturns>> {
    let windows = eta.n_dates() + 1 - MIN_DATES;
    (0..windows)
        .into_par_iter()
        .map(|t| {
            let sub_eta = eta.window(t)?;
            let sub_pos = positions.dates(t, sub_eta.n_dates())?;
            decode_with(&sub_eta, &sub_pos, config).map(|r| r.returns)
        })
        .collect()
}
