//! Synthetic markets and alphas.
//!
//! Stock returns are independent Gaussians with lognormally spread
//! volatilities. Alpha positions are sparse random vectors, projected onto
//! the constraint null space when constraints are requested. Every random
//! draw comes from a ChaCha stream seeded from `(seed, purpose, date)`, so
//! output does not depend on how dates are scheduled across threads.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{AlphaReturnPanel, ConstraintMatrix, PositionTensor, MIN_DATES};

/// Joint tolerance on constraint residuals and L1 norm of generated positions.
pub const PROJECTION_TOL: f64 = 1e-10;
/// Redraws allowed per alpha and date before giving up.
pub const MAX_PROJECTION_TRIES: usize = 100;

const VOL_STREAM: u64 = 1;
const MARKET_STREAM: u64 = 2;
const POSITION_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    None,
    Dollar,
    Custom(DMatrix<f64>),
}

impl FromStr for ConstraintSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ConstraintSpec::None),
            "dollar" => Ok(ConstraintSpec::Dollar),
            other => Err(Error::InvalidConfig(format!("unknown constraint {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_alphas: usize,
    pub n_stocks: usize,
    /// Dates of realized history; the alpha panel keeps `d_total - dmom`.
    pub d_total: usize,
    pub dmom: usize,
    /// Median per-stock daily volatility.
    pub stock_vol: f64,
    /// Standard deviation of log volatility across stocks.
    pub vol_spread: f64,
    pub constraint: ConstraintSpec,
    pub seed: u64,
    /// Probability that a given stock is in a given alpha's book.
    pub sparsity: f64,
    /// Reuse the most recent positions on every date.
    pub static_positions: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_alphas: 2000,
            n_stocks: 50,
            d_total: 31,
            dmom: 10,
            stock_vol: 0.02,
            vol_spread: 0.5,
            constraint: ConstraintSpec::None,
            seed: 0,
            sparsity: 1.0,
            static_positions: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_alphas < 1 {
            return bad("need at least one alpha".into());
        }
        if self.n_stocks < 2 {
            return bad(format!("need at least two stocks, got {}", self.n_stocks));
        }
        if self.dmom < 1 {
            return bad("momentum window must be positive".into());
        }
        if self.d_total < self.dmom + MIN_DATES {
            return bad(format!("d_total {} < dmom {} + {MIN_DATES}", self.d_total, self.dmom));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad(format!("sparsity {} outside (0, 1]", self.sparsity));
        }
        if !(self.stock_vol >= 0.0 && self.stock_vol.is_finite()) {
            return bad(format!("stock vol {} must be non-negative", self.stock_vol));
        }
        if !(self.vol_spread >= 0.0 && self.vol_spread.is_finite()) {
            return bad(format!("vol spread {} must be non-negative", self.vol_spread));
        }
        if let ConstraintSpec::Custom(q) = &self.constraint {
            ConstraintMatrix::new(q.clone())?;
            if q.nrows() != self.n_stocks {
                return bad(format!("constraint rows {} != stocks {}", q.nrows(), self.n_stocks));
            }
        }
        Ok(())
    }

    pub fn n_dates(&self) -> usize {
        self.d_total - self.dmom
    }

    pub fn constraints(&self) -> ConstraintMatrix {
        match &self.constraint {
            ConstraintSpec::None => ConstraintMatrix::none(self.n_stocks),
            ConstraintSpec::Dollar => ConstraintMatrix::dollar_neutral(self.n_stocks),
            ConstraintSpec::Custom(q) => ConstraintMatrix::new(q.clone()).expect("validated constraints"),
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn sub_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed) ^ splitmix(stream << 40 | index)))
}

/// Per-stock volatilities `σ_A = stock_vol · exp(vol_spread · z_A)`.
pub fn gen_stock_vols(config: &SynthConfig) -> Result<DVector<f64>> {
    config.validate()?;
    let mut r = sub_rng(config.seed, VOL_STREAM, 0);
    Ok(DVector::from_fn(config.n_stocks, |_, _| {
        let z: f64 = StandardNormal.sample(&mut r);
        config.stock_vol * (config.vol_spread * z).exp()
    }))
}

/// Realized stock returns, `M x d_total`, column 0 most recent.
pub fn gen_market(config: &SynthConfig) -> Result<DMatrix<f64>> {
    let vols = gen_stock_vols(config)?;
    let columns: Vec<DVector<f64>> = (0..config.d_total)
        .into_par_iter()
        .map(|s| {
            let mut r = sub_rng(config.seed, MARKET_STREAM, s as u64);
            DVector::from_fn(config.n_stocks, |a, _| {
                let z: f64 = StandardNormal.sample(&mut r);
                vols[a] * z
            })
        })
        .collect();
    Ok(DMatrix::from_columns(&columns))
}

/// Orthonormal basis of the constraint directions restricted to `support`.
fn restricted_basis(q: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    if q.ncols() == 0 {
        return DMatrix::zeros(support.len(), 0);
    }
    let svd = SVD::new(q.select_rows(support), true, false);
    let u = svd.u.expect("requested u");
    let max = svd.singular_values.max();
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > 1e-12 * max).collect();
    u.select_columns(&keep)
}

fn draw_row(
    r: &mut ChaCha8Rng,
    q: &DMatrix<f64>,
    sparsity: f64,
    alpha: usize,
    date: usize,
) -> Result<DVector<f64>> {
    let m = q.nrows();
    let min_support = q.ncols() + 1;
    for _ in 0..MAX_PROJECTION_TRIES {
        let support: Vec<usize> = (0..m).filter(|_| sparsity >= 1.0 || r.random::<f64>() < sparsity).collect();
        if support.len() < min_support {
            continue;
        }
        let basis = restricted_basis(q, &support);
        let mut x = DVector::from_fn(support.len(), |_, _| StandardNormal.sample(r));
        let mut converged = false;
        for _ in 0..MAX_PROJECTION_TRIES {
            x -= &basis * basis.tr_mul(&x);
            let l1: f64 = x.iter().map(|v| v.abs()).sum();
            if l1 < 1e-14 {
                break;
            }
            x /= l1;
            let residual = if q.ncols() == 0 { 0.0 } else { q.select_rows(&support).tr_mul(&x).amax() };
            let l1_err = (x.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs();
            if residual <= PROJECTION_TOL && l1_err <= PROJECTION_TOL {
                converged = true;
                break;
            }
        }
        if converged {
            let mut row = DVector::zeros(m);
            for (k, &a) in support.iter().enumerate() {
                row[a] = x[k];
            }
            return Ok(row);
        }
    }
    Err(Error::ProjectionFailed { alpha, date })
}

/// Positions for all `d_total` dates.
pub fn gen_positions(config: &SynthConfig) -> Result<PositionTensor> {
    config.validate()?;
    let q = config.constraints().values().clone();
    let dates = if config.static_positions { 1 } else { config.d_total };
    let mut slices: Vec<DMatrix<f64>> = (0..dates)
        .into_par_iter()
        .map(|s| {
            let mut r = sub_rng(config.seed, POSITION_STREAM, s as u64);
            let rows = (0..config.n_alphas)
                .map(|i| draw_row(&mut r, &q, config.sparsity, i, s).map(|v| v.transpose()))
                .collect::<Result<Vec<_>>>()?;
            Ok(DMatrix::from_rows(&rows))
        })
        .collect::<Result<_>>()?;
    if config.static_positions {
        slices = vec![slices[0].clone(); config.d_total];
    }
    PositionTensor::from_slices(slices, false)
}

/// `ρ_is = Σ_A P_iAs R_As` over the dates covered by both.
pub fn gen_alpha_returns(market: &DMatrix<f64>, positions: &PositionTensor) -> Result<DMatrix<f64>> {
    if market.nrows() != positions.n_stocks() || market.ncols() > positions.n_dates() {
        return Err(Error::DimensionMismatch(format!(
            "market {}x{} against positions over {} stocks and {} dates",
            market.nrows(),
            market.ncols(),
            positions.n_stocks(),
            positions.n_dates()
        )));
    }
    let columns: Vec<DVector<f64>> =
        (0..market.ncols()).map(|s| positions.slice(s) * market.column(s)).collect();
    Ok(DMatrix::from_columns(&columns))
}

/// `η_is = (1/dmom) Σ_{s' = s+1..s+dmom} ρ_is'`, keeping `T - dmom` dates.
pub fn gen_expected_returns(rho: &DMatrix<f64>, dmom: usize) -> Result<AlphaReturnPanel> {
    let t = rho.ncols();
    if dmom == 0 {
        return Err(Error::InvalidConfig("momentum window must be positive".into()));
    }
    if t < dmom + MIN_DATES {
        return Err(Error::TooShort { required: dmom + MIN_DATES, actual: t });
    }
    let d = t - dmom;
    let eta = DMatrix::from_fn(rho.nrows(), d, |i, s| {
        rho.row(i).columns(s + 1, dmom).sum() / dmom as f64
    });
    AlphaReturnPanel::from_values(eta)
}

/// Everything generated for one configuration.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub vols: DVector<f64>,
    /// `M x d_total` realized stock returns.
    pub market: DMatrix<f64>,
    /// `N x d_total` realized alpha returns.
    pub rho: DMatrix<f64>,
    /// Alpha expected returns over the `d_total - dmom` most recent dates.
    pub eta: AlphaReturnPanel,
    /// Positions over the same dates as `eta`.
    pub positions: PositionTensor,
    pub constraints: ConstraintMatrix,
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    let vols = gen_stock_vols(config)?;
    let market = gen_market(config)?;
    let full = gen_positions(config)?;
    let rho = gen_alpha_returns(&market, &full)?;
    let eta = gen_expected_returns(&rho, config.dmom)?;
    let positions = full.dates(0, eta.n_dates())?;
    Ok(SynthDataset { config: config.clone(), vols, market, rho, eta, positions, constraints: config.constraints() })
}
