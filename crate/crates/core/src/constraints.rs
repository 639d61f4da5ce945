//! Linear constraints shared by all alphas.
//!
//! When every alpha satisfies `Σ_A P_iAs Q_Aα = 0`, only `M - p` directions
//! of the stock returns are visible. [`eliminate`] picks `p` stocks to drop
//! and rewrites positions on the remaining ones so the constraints disappear;
//! [`decode_via_elimination`] decodes on that reduced universe and maps the
//! dropped stocks back. [`discover_constraints`] recovers `Q` from the
//! positions when it is not supplied.

use nalgebra::{DMatrix, DVector, QR, SVD};

use crate::decoder::{decode_slices, DecodeConfig};
use crate::error::{Error, Result};
use crate::linalg::fix_sign;
use crate::panel::{validate_constraints, AlphaReturnPanel, ConstraintMatrix, DecodedReturns, PositionTensor};

/// Relative singular value below which a restricted constraint block is
/// considered to have lost a direction.
const SUPPORT_RANK_TOL: f64 = 1e-10;

/// Reduced problem produced by [`eliminate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    /// Kept stocks `J`, ascending.
    pub kept: Vec<usize>,
    /// Eliminated stocks `J̃`, in the order they were removed.
    pub eliminated: Vec<usize>,
    /// `p x (M - p)` map with `R'_μ = -Σ_a χ_μa R'_a`.
    pub chi: DMatrix<f64>,
    /// Reduced positions `S_ias`, one `N x (M - p)` slice per date.
    pub reduced: Vec<DMatrix<f64>>,
}

impl Elimination {
    pub fn n_stocks(&self) -> usize {
        self.kept.len() + self.eliminated.len()
    }

    /// Full-length vector from values on the kept stocks, filling the
    /// eliminated ones through `χ`.
    pub fn expand(&self, reduced: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_stocks());
        for (a, &stock) in self.kept.iter().enumerate() {
            full[stock] = reduced[a];
        }
        let dropped = -(&self.chi * reduced);
        for (mu, &stock) in self.eliminated.iter().enumerate() {
            full[stock] = dropped[mu];
        }
        full
    }
}

fn singular_values_sorted(m: DMatrix<f64>) -> DVector<f64> {
    let mut sv: Vec<f64> = SVD::new(m, false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(sv)
}

/// `R` of a QR factorization of the stacked positions, padded to `M x M`.
/// Its column subsets have the same singular values as the corresponding
/// column subsets of the stacked matrix.
fn stacked_r(positions: &PositionTensor) -> DMatrix<f64> {
    let m = positions.n_stocks();
    let r = QR::new(positions.stacked()).r();
    let mut out = DMatrix::zeros(m, m);
    out.rows_mut(0, r.nrows()).copy_from(&r);
    out
}

/// Orthonormal basis of the column space of `q` restricted to `rows`.
fn restricted_range(q: &DMatrix<f64>, rows: &[usize], scale: f64) -> DMatrix<f64> {
    let restricted = q.select_rows(rows);
    let svd = SVD::new(restricted, true, false);
    let u = svd.u.expect("requested u");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > SUPPORT_RANK_TOL * scale)
        .collect();
    u.select_columns(&keep)
}

/// Split the stocks into kept and eliminated sets by a left-to-right scan.
///
/// Stock 1 starts the kept set. Each following stock `B` is tentatively
/// added; if some combination of the constraints restricted to the tentative
/// set is annihilated by all positions (smallest singular value of the
/// stacked positions on that combination at most `tol` times the largest
/// singular value of the stacked positions), `B` is eliminated instead and
/// one constraint is used up. Once every constraint is used up the remaining
/// stocks are kept.
pub fn eliminate(positions: &PositionTensor, q: &ConstraintMatrix, tol: f64) -> Result<Elimination> {
    let report = validate_constraints(positions, q, tol)?;
    if !report.passed {
        let w = report.worst.expect("failed report has a worst entry");
        return Err(Error::ConstraintViolated {
            alpha: w.alpha,
            date: w.date,
            constraint: w.constraint,
            residual: w.residual,
        });
    }
    let m = positions.n_stocks();
    let p = q.n_constraints();
    if p == 0 {
        return Ok(Elimination {
            kept: (0..m).collect(),
            eliminated: Vec::new(),
            chi: DMatrix::zeros(0, m),
            reduced: positions.slices().to_vec(),
        });
    }

    let qv = q.values();
    let q_scale = singular_values_sorted(qv.clone())[0];
    let r = stacked_r(positions);
    let z_scale = singular_values_sorted(r.clone())[0];

    let mut kept = vec![0usize];
    let mut eliminated = Vec::with_capacity(p);
    for b in 1..m {
        if eliminated.len() == p {
            kept.push(b);
            continue;
        }
        let mut candidate = kept.clone();
        candidate.push(b);
        let basis = restricted_range(qv, &candidate, q_scale);
        let supported = basis.ncols() > 0 && {
            let probe = r.select_columns(&candidate) * &basis;
            let sv = singular_values_sorted(probe);
            sv[sv.len() - 1] <= tol * z_scale
        };
        if supported {
            eliminated.push(b);
        } else {
            kept.push(b);
        }
    }
    if eliminated.len() != p {
        return Err(Error::DegenerateConstraintSplit(format!(
            "scan eliminated {} stocks for {p} constraints",
            eliminated.len()
        )));
    }

    // χ = (q qᵀ)⁻¹ q Kᵀ, i.e. the solution of qᵀ χ = Kᵀ
    let q_small = qv.select_rows(&eliminated);
    let k_block = qv.select_rows(&kept);
    let sv = singular_values_sorted(q_small.clone());
    if sv[p - 1] <= 1e-12 * sv[0] {
        return Err(Error::DegenerateConstraintSplit(format!(
            "constraints restricted to stocks {eliminated:?} are singular"
        )));
    }
    let chi = q_small
        .transpose()
        .lu()
        .solve(&k_block.transpose())
        .ok_or_else(|| Error::DegenerateConstraintSplit("singular q".into()))?;

    let reduced = positions
        .slices()
        .iter()
        .map(|slice| slice.select_columns(&kept) - slice.select_columns(&eliminated) * &chi)
        .collect();
    Ok(Elimination { kept, eliminated, chi, reduced })
}

/// Orthonormal basis of the common null space of every position row,
/// from the singular values of the stacked `(N·d) x M` matrix below
/// `tol · σ_max`.
pub fn discover_constraints(positions: &PositionTensor, tol: f64) -> ConstraintMatrix {
    let m = positions.n_stocks();
    let svd = SVD::new(stacked_r(positions), false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let sigma = &svd.singular_values;
    let max = sigma.max();
    let mut null: Vec<usize> = (0..sigma.len()).filter(|&k| sigma[k] < tol * max).collect();
    null.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]).then(a.cmp(&b)));
    let mut basis = DMatrix::zeros(m, null.len());
    for (c, &k) in null.iter().enumerate() {
        let mut v: DVector<f64> = v_t.row(k).transpose();
        fix_sign(&mut v);
        basis.set_column(c, &v);
    }
    ConstraintMatrix::new(basis).expect("orthonormal null basis has full rank and p < M")
}

/// Decode on the reduced universe from [`eliminate`] and map back.
pub fn decode_via_elimination(
    eta: &AlphaReturnPanel,
    positions: &PositionTensor,
    q: &ConstraintMatrix,
    k: i64,
    tol: f64,
) -> Result<DecodedReturns> {
    decode_via_elimination_with(eta, positions, q, &DecodeConfig::with_k(k, tol)).map(|(e, _)| e)
}

pub fn decode_via_elimination_with(
    eta: &AlphaReturnPanel,
    positions: &PositionTensor,
    q: &ConstraintMatrix,
    config: &DecodeConfig,
) -> Result<(DecodedReturns, Elimination)> {
    if eta.n_alphas() != positions.n_alphas() || positions.n_dates() < eta.n_dates() {
        return Err(Error::DimensionMismatch("returns and positions disagree".into()));
    }
    let elim = eliminate(positions, q, config.tol)?;
    let (reduced, _, _, _) = decode_slices(eta.values(), &elim.reduced, config)?;
    let values = elim.expand(&reduced);
    Ok((DecodedReturns { values, stock_ids: positions.stock_ids().to_vec() }, elim))
}
