//! Stock portfolio weights from decoded expected returns, and two simple
//! stock risk models estimated from realized returns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::{DecodedReturns, StockRiskModel};
use crate::residual::variance_floor;

#[derive(Debug, Clone, PartialEq)]
pub struct StockWeights {
    pub w: DVector<f64>,
    pub gamma: f64,
}

/// Sharpe-optimal `w = γ Φ⁻¹ E` with `Σ|w| = 1`.
pub fn stock_weights(e: &DecodedReturns, phi: &StockRiskModel) -> Result<StockWeights> {
    if e.len() != phi.n_stocks() {
        return Err(Error::DimensionMismatch(format!(
            "{} expected returns, risk model over {} stocks",
            e.len(),
            phi.n_stocks()
        )));
    }
    if e.values.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroSignal);
    }
    let raw = phi.solve(&e.values);
    let l1: f64 = raw.iter().map(|x| x.abs()).sum();
    if !(l1 > 0.0 && l1.is_finite()) {
        return Err(Error::ZeroSignal);
    }
    Ok(StockWeights { w: raw / l1, gamma: 1.0 / l1 })
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn sample_covariance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0)
}

fn rows(r: &DMatrix<f64>) -> Vec<Vec<f64>> {
    r.row_iter().map(|row| row.iter().copied().collect()).collect()
}

fn floored(vars: &DVector<f64>, floor: f64) -> DVector<f64> {
    vars.map(|v| v.max(floor))
}

/// Diagonal risk model from per-stock sample variances of an `M x T` panel.
pub fn build_phi_diagonal(returns: &DMatrix<f64>) -> Result<StockRiskModel> {
    if returns.ncols() < 2 {
        return Err(Error::TooShort { required: 2, actual: returns.ncols() });
    }
    let vars = DVector::from_vec(rows(returns).iter().map(|r| sample_variance(r)).collect());
    let floor = variance_floor(&vars);
    StockRiskModel::new(DMatrix::from_diagonal(&floored(&vars, floor)))
}

/// One-factor risk model and the fitted exposures.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFactorModel {
    pub risk: StockRiskModel,
    pub beta: DVector<f64>,
    pub market_variance: f64,
}

/// `Φ = σ²_m β βᵀ + diag(residual variances)`, with `β` from each stock's
/// regression (with intercept) on the cross-sectional mean return.
pub fn build_phi_one_factor(returns: &DMatrix<f64>) -> Result<OneFactorModel> {
    let (m, t) = returns.shape();
    if t < 3 {
        return Err(Error::TooShort { required: 3, actual: t });
    }
    let series = rows(returns);
    let market: Vec<f64> = (0..t).map(|s| returns.column(s).mean()).collect();
    let market_variance = sample_variance(&market);
    let beta = DVector::from_fn(m, |a, _| {
        if market_variance > 0.0 {
            sample_covariance(&series[a], &market) / market_variance
        } else {
            0.0
        }
    });
    let total = DVector::from_vec(series.iter().map(|r| sample_variance(r)).collect());
    let resid = DVector::from_fn(m, |a, _| (total[a] - beta[a].powi(2) * market_variance).max(0.0));
    let floor = variance_floor(&resid).max(variance_floor(&total));
    let mut cov = &beta * beta.transpose() * market_variance;
    for a in 0..m {
        cov[(a, a)] += resid[a].max(floor);
    }
    Ok(OneFactorModel { risk: StockRiskModel::new(cov)?, beta, market_variance })
}
