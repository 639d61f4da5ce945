//! Factor risk model for alpha portfolios and Sharpe-optimal alpha weights.
//!
//! The positions serve as factor loadings with the stocks as factors:
//! `Γ = diag(ζ²) + P Φ Pᵀ`, optionally augmented by principal components of
//! the residual covariance. The model is kept in factored form
//! `Γ = diag(ζ²) + L Lᵀ` with `L = [P φ, θ^{1/2} U]`, so every solve is an
//! `H x H` problem with `H = M + K`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::decoder::{decode_with_explicit_weights, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::TruncatedEigen;
use crate::panel::StockRiskModel;
use crate::residual::RegressionWeights;

/// Scale sweep used by [`large_n_gap`].
pub const SCALE_SWEEP: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaFactorModel {
    zeta_sq: DVector<f64>,
    loadings: DMatrix<f64>,
    n_stock_factors: usize,
}

impl AlphaFactorModel {
    pub fn specific_variance(&self) -> &DVector<f64> {
        &self.zeta_sq
    }

    /// `N x H` loadings `L` with `Γ = diag(ζ²) + L Lᵀ`.
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn n_alphas(&self) -> usize {
        self.zeta_sq.len()
    }

    pub fn n_stock_factors(&self) -> usize {
        self.n_stock_factors
    }

    pub fn n_residual_pcs(&self) -> usize {
        self.loadings.ncols() - self.n_stock_factors
    }

    /// Same model with the non-stock part (specific risk and residual PCs)
    /// multiplied by `c`.
    pub fn with_specific_scale(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!("specific scale {c} must be positive")));
        }
        let mut loadings = self.loadings.clone();
        let m = self.n_stock_factors;
        loadings.columns_mut(m, loadings.ncols() - m).scale_mut(c.sqrt());
        Ok(AlphaFactorModel { zeta_sq: &self.zeta_sq * c, loadings, n_stock_factors: m })
    }

    /// Dense `N x N` covariance. Only for small `N`.
    pub fn materialize(&self) -> DMatrix<f64> {
        let mut g = &self.loadings * self.loadings.transpose();
        for i in 0..self.n_alphas() {
            g[(i, i)] += self.zeta_sq[i];
        }
        g
    }

    /// `β_iH = L_iH / ζ_i`.
    pub fn betas(&self) -> DMatrix<f64> {
        let mut b = self.loadings.clone();
        for (i, mut row) in b.row_iter_mut().enumerate() {
            row /= self.zeta_sq[i].sqrt();
        }
        b
    }

    /// `q = βᵀ β`.
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let b = self.betas();
        b.tr_mul(&b)
    }

    /// `Γ⁻¹ x` by the Woodbury identity with `Q = 1 + q`.
    pub fn solve(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let beta = self.betas();
        let h = beta.ncols();
        let q = DMatrix::identity(h, h) + beta.tr_mul(&beta);
        let chol = Cholesky::new(q).ok_or(Error::NotPositiveDefinite)?;
        Ok(self.apply_inverse(&beta, x, |b| chol.solve(b)))
    }

    fn apply_inverse(
        &self,
        beta: &DMatrix<f64>,
        x: &DVector<f64>,
        inner: impl Fn(&DVector<f64>) -> DVector<f64>,
    ) -> DVector<f64> {
        let zeta = self.zeta_sq.map(f64::sqrt);
        let y = x.component_div(&zeta);
        let c = inner(&beta.tr_mul(&y));
        (y - beta * c).component_div(&zeta)
    }

    /// `wᵀ Γ w`.
    pub fn variance(&self, w: &DVector<f64>) -> f64 {
        let specific: f64 = w.iter().zip(self.zeta_sq.iter()).map(|(x, z)| x * x * z).sum();
        specific + self.loadings.tr_mul(w).norm_squared()
    }

    /// Largest `|Σ_i U_ir P_iA|` over residual-PC columns and stocks,
    /// relative to `‖U_r‖ ‖P_A‖`. Zero without residual PCs.
    pub fn pc_orthogonality(&self, positions_s1: &DMatrix<f64>) -> f64 {
        let m = self.n_stock_factors;
        let pcs = self.loadings.columns(m, self.loadings.ncols() - m);
        let mut worst = 0.0f64;
        for u in pcs.column_iter() {
            for p in positions_s1.column_iter() {
                let denom = u.norm() * p.norm();
                if denom > 0.0 {
                    worst = worst.max(u.dot(&p).abs() / denom);
                }
            }
        }
        worst
    }
}

/// Build `Γ = diag(ζ²) + P Φ Pᵀ`, or with `residual_pcs` (scaled columns
/// `θ_r^{1/2} U_r`, `N x K`) the augmented model with unit covariance on the
/// PC block.
pub fn build_alpha_model(
    positions_s1: &DMatrix<f64>,
    phi: &StockRiskModel,
    zeta_sq: &DVector<f64>,
    residual_pcs: Option<&DMatrix<f64>>,
) -> Result<AlphaFactorModel> {
    let (n, m) = positions_s1.shape();
    if phi.n_stocks() != m || zeta_sq.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "positions {n}x{m}, risk model {}, specific variances {}",
            phi.n_stocks(),
            zeta_sq.len()
        )));
    }
    if zeta_sq.iter().any(|&z| !(z > 0.0 && z.is_finite())) {
        return Err(Error::NotPositiveDefinite);
    }
    let stock_part = positions_s1 * phi.cholesky_factor();
    let loadings = match residual_pcs {
        None => stock_part,
        Some(pcs) => {
            if pcs.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} residual PC rows for {n} alphas",
                    pcs.nrows()
                )));
            }
            let mut l = DMatrix::zeros(n, m + pcs.ncols());
            l.columns_mut(0, m).copy_from(&stock_part);
            l.columns_mut(m, pcs.ncols()).copy_from(pcs);
            l
        }
    };
    Ok(AlphaFactorModel { zeta_sq: zeta_sq.clone(), loadings, n_stock_factors: m })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaWeights {
    pub w: DVector<f64>,
    pub kappa: f64,
}

impl AlphaWeights {
    /// Scale `raw` to unit L1 norm; `kappa` is the applied factor.
    pub fn normalized(raw: DVector<f64>) -> Result<Self> {
        let l1: f64 = raw.iter().map(|x| x.abs()).sum();
        if !(l1 > 0.0 && l1.is_finite()) {
            return Err(Error::ZeroSignal);
        }
        Ok(AlphaWeights { w: raw / l1, kappa: 1.0 / l1 })
    }
}

/// `w = κ Γ⁻¹ η` with `Σ|w| = 1`.
pub fn sharpe_optimal_alpha_weights(model: &AlphaFactorModel, eta_s1: &DVector<f64>) -> Result<AlphaWeights> {
    check_signal(model, eta_s1)?;
    AlphaWeights::normalized(model.solve(eta_s1)?)
}

fn check_signal(model: &AlphaFactorModel, eta_s1: &DVector<f64>) -> Result<()> {
    if eta_s1.len() != model.n_alphas() {
        return Err(Error::DimensionMismatch(format!(
            "{} returns for {} alphas",
            eta_s1.len(),
            model.n_alphas()
        )));
    }
    if eta_s1.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroSignal);
    }
    Ok(())
}

/// Truncation order of the large-`q` expansion of `Q⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesOrder {
    /// `Q⁻¹ ≈ q⁺`: weighted regression residuals.
    Leading,
    /// `Q⁻¹ ≈ q⁺ - q⁺ q⁺`.
    NextToLeading,
}

/// Alpha weights with `Q⁻¹` replaced by its truncated series. Diagnostic
/// only; `q⁺` is the spectral pseudo-inverse at relative cutoff `tol`.
pub fn series_alpha_weights(
    model: &AlphaFactorModel,
    eta_s1: &DVector<f64>,
    order: SeriesOrder,
    tol: f64,
) -> Result<AlphaWeights> {
    check_signal(model, eta_s1)?;
    let beta = model.betas();
    let q_pinv = TruncatedEigen::new(&beta.tr_mul(&beta), tol)?.pseudo_inverse();
    let approx = match order {
        SeriesOrder::Leading => q_pinv,
        SeriesOrder::NextToLeading => &q_pinv - &q_pinv * &q_pinv,
    };
    AlphaWeights::normalized(model.apply_inverse(&beta, eta_s1, |b| &approx * b))
}

/// Stock holdings `w_A = Σ_i P_iA w_i` of an alpha combination.
pub fn combo_stock_weights(positions_s1: &DMatrix<f64>, alpha_w: &AlphaWeights) -> Result<DVector<f64>> {
    if positions_s1.nrows() != alpha_w.w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} position rows, {} alpha weights",
            positions_s1.nrows(),
            alpha_w.w.len()
        )));
    }
    Ok(positions_s1.tr_mul(&alpha_w.w))
}

/// `ηᵀ w / sqrt(wᵀ Γ w)`.
pub fn model_sharpe(model: &AlphaFactorModel, eta_s1: &DVector<f64>, w: &DVector<f64>) -> f64 {
    eta_s1.dot(w) / model.variance(w).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGap {
    pub scale: f64,
    pub cosine: f64,
    pub norm_gap: f64,
}

/// Comparison of optimization-route and regression-route stock weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub cosine: f64,
    /// `‖â - b̂‖ / ‖b̂‖` for the L1-normalized weight vectors.
    pub norm_gap: f64,
    /// Same for the unnormalized `Pᵀ Γ⁻¹ η` and `Φ⁻¹ E`.
    pub raw_gap: f64,
    pub sweep: Vec<ScaleGap>,
    /// `q_AA` over the stock block.
    pub q_diag: DVector<f64>,
    /// Largest single-alpha share `max_i β²_iA / q_AA` per stock.
    pub clustering: DVector<f64>,
    /// L1-normalized optimization-route stock weights.
    pub optimized: DVector<f64>,
    /// L1-normalized regression-route stock weights.
    pub regression: DVector<f64>,
}

fn l1_normalized(x: &DVector<f64>) -> DVector<f64> {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    if l1 > 0.0 {
        x / l1
    } else {
        x.clone()
    }
}

fn relative_gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// Gap between `Pᵀ Γ⁻¹ η` and `Φ⁻¹ E` with `E` decoded at `v = 1/ζ²`.
pub fn large_n_gap(
    positions_s1: &DMatrix<f64>,
    phi: &StockRiskModel,
    zeta_sq: &DVector<f64>,
    eta_s1: &DVector<f64>,
) -> Result<GapReport> {
    model_gap(positions_s1, phi, zeta_sq, None, eta_s1, DEFAULT_TOL)
}

/// [`large_n_gap`] for an arbitrary model: `zeta_sq` is the diagonal of the
/// model (`ξ̃²` when `residual_pcs` are given) and also sets the regression
/// weights `v = 1/zeta_sq`.
pub fn model_gap(
    positions_s1: &DMatrix<f64>,
    phi: &StockRiskModel,
    zeta_sq: &DVector<f64>,
    residual_pcs: Option<&DMatrix<f64>>,
    eta_s1: &DVector<f64>,
    tol: f64,
) -> Result<GapReport> {
    let model = build_alpha_model(positions_s1, phi, zeta_sq, residual_pcs)?;
    check_signal(&model, eta_s1)?;

    let weights = RegressionWeights::explicit(zeta_sq.map(|z| 1.0 / z))?;
    let e = decode_with_explicit_weights(eta_s1, positions_s1, &weights, tol)?;
    let regression_raw = phi.solve(&e);
    let regression = l1_normalized(&regression_raw);

    let optimized_raw = positions_s1.tr_mul(&model.solve(eta_s1)?);
    let optimized = l1_normalized(&optimized_raw);

    let sweep = SCALE_SWEEP
        .iter()
        .map(|&c| {
            let scaled = model.with_specific_scale(c)?;
            let a = l1_normalized(&positions_s1.tr_mul(&scaled.solve(eta_s1)?));
            Ok(ScaleGap { scale: c, cosine: cosine(&a, &regression), norm_gap: relative_gap(&a, &regression) })
        })
        .collect::<Result<Vec<_>>>()?;

    let m = positions_s1.ncols();
    let beta = model.betas();
    let q_diag = DVector::from_fn(m, |a, _| beta.column(a).norm_squared());
    let clustering = DVector::from_fn(m, |a, _| {
        let col = beta.column(a);
        let peak = col.iter().map(|b| b * b).fold(0.0, f64::max);
        if q_diag[a] > 0.0 {
            peak / q_diag[a]
        } else {
            0.0
        }
    });

    Ok(GapReport {
        cosine: cosine(&optimized, &regression),
        norm_gap: relative_gap(&optimized, &regression),
        raw_gap: relative_gap(&optimized_raw, &regression_raw),
        sweep,
        q_diag,
        clustering,
        optimized,
        regression,
    })
}

/// Means over a set of Monte-Carlo gap reports.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSummary {
    pub mean_cosine: f64,
    pub min_cosine: f64,
    pub mean_norm_gap: f64,
    pub mean_raw_gap: f64,
    pub reports: Vec<GapReport>,
}

/// Run `instance` for every seed in parallel and average. Reports keep the
/// order of `seeds`.
pub fn average_gaps<F>(seeds: &[u64], instance: F) -> Result<GapSummary>
where
    F: Fn(u64) -> Result<GapReport> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("no seeds".into()));
    }
    let reports = seeds.par_iter().map(|&s| instance(s)).collect::<Result<Vec<_>>>()?;
    let n = reports.len() as f64;
    Ok(GapSummary {
        mean_cosine: reports.iter().map(|r| r.cosine).sum::<f64>() / n,
        min_cosine: reports.iter().map(|r| r.cosine).fold(f64::INFINITY, f64::min),
        mean_norm_gap: reports.iter().map(|r| r.norm_gap).sum::<f64>() / n,
        mean_raw_gap: reports.iter().map(|r| r.raw_gap).sum::<f64>() / n,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{random_matrix, random_positions, random_spd, random_vector, rng};
    use rand::Rng;

    struct Instance {
        p: DMatrix<f64>,
        phi: StockRiskModel,
        zeta_sq: DVector<f64>,
        eta: DVector<f64>,
    }

    fn instance(seed: u64, n: usize, m: usize) -> Instance {
        let mut r = rng(seed);
        let p = random_positions(&mut r, n, m);
        let phi = StockRiskModel::new(random_spd(&mut r, m) * 1e-4).unwrap();
        let zeta_sq = DVector::from_fn(n, |_, _| 1e-6 * (0.5 + r.random::<f64>()));
        let eta = random_vector(&mut r, n) * 1e-3;
        Instance { p, phi, zeta_sq, eta }
    }

    fn dense_direction(model: &AlphaFactorModel, eta: &DVector<f64>) -> DVector<f64> {
        let raw = model.materialize().try_inverse().unwrap() * eta;
        let l1: f64 = raw.iter().map(|x| x.abs()).sum();
        raw / l1
    }

    #[test]
    fn zero_positions_give_diagonal_model() {
        let inst = instance(1, 10, 3);
        let model = build_alpha_model(&DMatrix::zeros(10, 3), &inst.phi, &inst.zeta_sq, None).unwrap();
        assert_eq!(model.materialize(), DMatrix::from_diagonal(&inst.zeta_sq));
        let w = sharpe_optimal_alpha_weights(&model, &inst.eta).unwrap();
        let expect = AlphaWeights::normalized(inst.eta.component_div(&inst.zeta_sq)).unwrap();
        assert!((w.w - expect.w).amax() < 1e-15);
    }

    #[test]
    fn materialized_model_matches_definition() {
        let inst = instance(2, 20, 3);
        let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, None).unwrap();
        let mut dense = &inst.p * inst.phi.covariance() * inst.p.transpose();
        for i in 0..20 {
            dense[(i, i)] += inst.zeta_sq[i];
        }
        assert!((model.materialize() - dense).amax() < 1e-18);
    }

    #[test]
    fn materialized_model_with_components() {
        let inst = instance(3, 20, 3);
        let mut r = rng(33);
        let u = random_matrix(&mut r, 20, 2) * 1e-3;
        let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, Some(&u)).unwrap();
        assert_eq!(model.n_residual_pcs(), 2);
        let mut dense = &inst.p * inst.phi.covariance() * inst.p.transpose() + &u * u.transpose();
        for i in 0..20 {
            dense[(i, i)] += inst.zeta_sq[i];
        }
        assert!((model.materialize() - &dense).amax() <= 1e-10 * dense.amax());
    }

    #[test]
    fn woodbury_matches_dense_inverse() {
        for seed in 0..10 {
            let inst = instance(100 + seed, 50, 5);
            let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, None).unwrap();
            let w = sharpe_optimal_alpha_weights(&model, &inst.eta).unwrap();
            let dense = dense_direction(&model, &inst.eta);
            assert!((&w.w - &dense).amax() < 1e-9, "seed {seed}");
            assert!((w.w.iter().map(|x| x.abs()).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_ignore_signal_scale() {
        let inst = instance(4, 40, 4);
        let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, None).unwrap();
        let a = sharpe_optimal_alpha_weights(&model, &inst.eta).unwrap();
        let b = sharpe_optimal_alpha_weights(&model, &(&inst.eta * 37.0)).unwrap();
        assert!((a.w - b.w).amax() < 1e-14);
    }

    #[test]
    fn zero_signal_rejected() {
        let inst = instance(5, 10, 2);
        let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, None).unwrap();
        assert!(matches!(
            sharpe_optimal_alpha_weights(&model, &DVector::zeros(10)),
            Err(Error::ZeroSignal)
        ));
    }

    #[test]
    fn bad_specific_variance_rejected() {
        let inst = instance(6, 10, 2);
        let mut z = inst.zeta_sq.clone();
        z[3] = 0.0;
        assert!(matches!(build_alpha_model(&inst.p, &inst.phi, &z, None), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn combo_of_single_alpha_is_its_positions() {
        let inst = instance(7, 1, 4);
        let w = AlphaWeights { w: DVector::from_element(1, 1.0), kappa: 1.0 };
        assert_eq!(combo_stock_weights(&inst.p, &w).unwrap(), inst.p.row(0).transpose());
    }

    #[test]
    fn combo_matches_matrix_vector_product() {
        let mut r = rng(8);
        let p = random_matrix(&mut r, 30, 6);
        let w = AlphaWeights::normalized(random_vector(&mut r, 30)).unwrap();
        let got = combo_stock_weights(&p, &w).unwrap();
        for a in 0..6 {
            let direct: f64 = (0..30).map(|i| p[(i, a)] * w.w[i]).sum();
            assert!((got[a] - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn leading_order_is_perfectly_hedged() {
        let inst = instance(9, 300, 8);
        let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, None).unwrap();
        let w = series_alpha_weights(&model, &inst.eta, SeriesOrder::Leading, 1e-12).unwrap();
        let stock = combo_stock_weights(&inst.p, &w).unwrap();
        let p_scale = inst.p.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        assert!(stock.norm() <= 1e-10 * p_scale);
        assert!(w.w.amax() > 0.0);
    }

    #[test]
    fn next_to_leading_approaches_exact() {
        let inst = instance(10, 2000, 5);
        let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, None).unwrap();
        let exact = combo_stock_weights(&inst.p, &sharpe_optimal_alpha_weights(&model, &inst.eta).unwrap()).unwrap();
        let series = series_alpha_weights(&model, &inst.eta, SeriesOrder::NextToLeading, 1e-12).unwrap();
        let approx = combo_stock_weights(&inst.p, &series).unwrap();
        assert!(cosine(&exact, &approx) > 0.999);
    }

    #[test]
    fn hand_computed_single_stock_gap() {
        // N = 2, M = 1: the optimization route is q / (1 + q) times the
        // regression route, q = φ² Σ P_i² / ζ_i².
        let p = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let phi = StockRiskModel::new(DMatrix::from_element(1, 1, 4.0)).unwrap();
        let zeta_sq = DVector::from_vec(vec![1.0, 2.0]);
        let eta = DVector::from_vec(vec![0.3, -0.1]);
        let q = 4.0 * (1.0 / 1.0 + 1.0 / 2.0);
        let report = large_n_gap(&p, &phi, &zeta_sq, &eta).unwrap();
        assert!((report.raw_gap - 1.0 / (1.0 + q)).abs() < 1e-14);
        assert!(report.norm_gap < 1e-15);
        assert!((report.cosine - 1.0).abs() < 1e-15);
        assert!((report.q_diag[0] - q).abs() < 1e-14);
        assert!((report.clustering[0] - 4.0 / q).abs() < 1e-14);
    }

    #[test]
    fn optimized_weights_dominate_random_weights() {
        let mut r = rng(11);
        for seed in 0..5 {
            let inst = instance(200 + seed, 60, 5);
            let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, None).unwrap();
            let best = model_sharpe(&model, &inst.eta, &sharpe_optimal_alpha_weights(&model, &inst.eta).unwrap().w);
            for _ in 0..100 {
                let w = AlphaWeights::normalized(random_vector(&mut r, 60)).unwrap().w;
                assert!(model_sharpe(&model, &inst.eta, &w) <= best);
            }
        }
    }

    #[test]
    fn gap_shrinks_with_more_alphas() {
        let mean_gap = |n: usize| {
            average_gaps(&[1, 2, 3, 4], |s| {
                let inst = instance(1000 * n as u64 + s, n, 5);
                large_n_gap(&inst.p, &inst.phi, &inst.zeta_sq, &inst.eta)
            })
            .unwrap()
        };
        let small = mean_gap(100);
        let large = mean_gap(1600);
        assert!(large.mean_norm_gap < small.mean_norm_gap);
        assert!(large.mean_cosine > 0.99);
        assert_eq!(large.reports[0].sweep.len(), 3);
    }

    #[test]
    fn specific_scale_leaves_stock_block_alone() {
        let inst = instance(12, 15, 3);
        let u = random_matrix(&mut rng(13), 15, 2);
        let model = build_alpha_model(&inst.p, &inst.phi, &inst.zeta_sq, Some(&u)).unwrap();
        let scaled = model.with_specific_scale(4.0).unwrap();
        let stock = &inst.p * inst.phi.covariance() * inst.p.transpose();
        let expect = (model.materialize() - &stock) * 4.0 + &stock;
        assert!((scaled.materialize() - expect).amax() < 1e-12);
    }
}
