//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use stockdecode::alpha_risk::{
    average_gaps, build_alpha_model, combo_stock_weights, large_n_gap, model_sharpe, series_alpha_weights,
    sharpe_optimal_alpha_weights, AlphaWeights, GapSummary, SeriesOrder,
};
use stockdecode::constraints::decode_via_elimination;
use stockdecode::decoder::{decode, decode_with, DecodeConfig};
use stockdecode::linalg::eigen_low_rank;
use stockdecode::panel::{AlphaReturnPanel, StockRiskModel};
use stockdecode::portfolio::build_phi_diagonal;
use stockdecode::residual::{erank, specific_variance, ResidualPanel, Rounding, WeightMode};
use stockdecode::synth::{generate, ConstraintSpec, SynthConfig, SynthDataset};

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

fn gaussian_vector(r: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(r))
}

fn dataset(seed: u64, n: usize, m: usize, constraint: ConstraintSpec) -> SynthDataset {
    generate(&SynthConfig {
        n_alphas: n,
        n_stocks: m,
        d_total: 31,
        dmom: 10,
        constraint,
        seed,
        ..Default::default()
    })
    .expect("synthetic data")
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

// ---------------------------------------------------------------------------
// Dense reference pipeline: explicit inverses and full N x N eigensystems.

fn dense_row_variance(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn dense_erank(values: &[f64]) -> f64 {
    let total: f64 = values.iter().sum();
    (-values.iter().map(|v| v / total).map(|p| p * p.ln()).sum::<f64>()).exp()
}

fn dense_median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn reference_decode(eta: &DMatrix<f64>, slices: &[DMatrix<f64>], k: i64) -> DVector<f64> {
    let (n, d) = eta.shape();
    let mut res = DMatrix::zeros(n, d - 1);
    for s in 1..d {
        let p = &slices[s];
        let y = eta.column(s).into_owned();
        let inv = (p.transpose() * p).try_inverse().expect("invertible Gram");
        let fitted = p * (inv * (p.transpose() * &y));
        res.set_column(s - 1, &(y - fitted));
    }
    let cols = d - 1;
    let m = cols - 1;
    let rows: Vec<Vec<f64>> = res.row_iter().map(|r| r.iter().copied().collect()).collect();
    let plain = DVector::from_fn(n, |i, _| dense_row_variance(&rows[i]));

    let spec = if k == 0 || (k > 0 && k as usize >= m) {
        plain.clone()
    } else {
        let mut xc = res.clone();
        for mut row in xc.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        let cov = &xc * xc.transpose() / (cols - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top: Vec<f64> = order.iter().take(m).map(|&r| eig.eigenvalues[r]).collect();
        let kk = if k < 0 { dense_erank(&top).trunc() as usize } else { k as usize };
        if kk == 0 || kk >= m {
            plain.clone()
        } else {
            DVector::from_fn(n, |i, _| {
                plain[i] - (0..kk).map(|r| top[r] * eig.eigenvectors[(i, order[r])].powi(2)).sum::<f64>()
            })
        }
    };
    let positive: Vec<f64> = spec.iter().copied().filter(|&x| x > 0.0).collect();
    let floor = if positive.is_empty() { 1e-12 } else { 1e-12 * dense_median(positive) };
    let v = spec.map(|x| 1.0 / x.max(floor));

    let p1 = &slices[0];
    let vp = DMatrix::from_fn(n, p1.ncols(), |i, a| v[i] * p1[(i, a)]);
    let x = p1.transpose() * &vp;
    let rhs = vp.transpose() * eta.column(0);
    x.try_inverse().expect("invertible weighted Gram") * rhs
}

fn c1_appendix_parity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let data = dataset(seed, 500, 30, ConstraintSpec::None);
        for k in [0i64, -1, 3] {
            let got = decode(&data.eta, &data.positions, k, 1e-8).map_err(|e| e.to_string())?.values;
            let want = reference_decode(data.eta.values(), data.positions.slices(), k);
            worst = worst.max(rel(&got, &want));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-10 && secs < 60.0, format!("max rel err {worst:.2e} over 150 decodes in {secs:.1}s"))
}

fn c2_constraint_annihilation() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let data = dataset(100 + seed, 500, 30, ConstraintSpec::Dollar);
        for k in [0i64, -1] {
            let e = decode(&data.eta, &data.positions, k, 1e-8).map_err(|e| e.to_string())?.values;
            worst = worst.max(e.sum().abs() / e.norm());
        }
    }
    check(worst <= 1e-8, format!("max |ΣE|/‖E‖ = {worst:.2e} over 20 seeds"))
}

fn sector_constraints(r: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let mut q = DMatrix::from_element(m, 2, 1.0);
    for a in 0..m {
        q[(a, 1)] = if r.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
    }
    q
}

fn c3_method_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let m = 20 + (seed as usize % 3) * 10;
        let spec = if seed % 2 == 0 {
            ConstraintSpec::Dollar
        } else {
            ConstraintSpec::Custom(sector_constraints(&mut rng(seed), m))
        };
        let data = dataset(200 + seed, 400, m, spec);
        let k = [0i64, -1, 2][seed as usize % 3];
        let pca = decode(&data.eta, &data.positions, k, 1e-8).map_err(|e| e.to_string())?.values;
        let elim = decode_via_elimination(&data.eta, &data.positions, &data.constraints, k, 1e-8)
            .map_err(|e| e.to_string())?
            .values;
        worst = worst.max(rel(&elim, &pca));
    }
    check(worst <= 1e-8, format!("max rel diff {worst:.2e} over 20 instances, p in {{1,2}}, M <= 40"))
}

fn c4_regulator_independence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let spec = if seed % 2 == 0 {
            ConstraintSpec::Dollar
        } else {
            ConstraintSpec::Custom(sector_constraints(&mut rng(50 + seed), 25))
        };
        let data = dataset(300 + seed, 400, 25, spec);
        let base = decode(&data.eta, &data.positions, -1, 1e-8).map_err(|e| e.to_string())?.values;
        for tol in [1e-6, 1e-10] {
            let e = decode(&data.eta, &data.positions, -1, tol).map_err(|e| e.to_string())?.values;
            worst = worst.max(rel(&e, &base));
        }
    }
    check(worst <= 1e-6, format!("max rel diff {worst:.2e} across tol in {{1e-6, 1e-8, 1e-10}}"))
}

fn gap_instance(seed: u64, n: usize) -> stockdecode::Result<stockdecode::alpha_risk::GapReport> {
    let data = dataset(seed, n, 10, ConstraintSpec::None);
    let report = decode_with(&data.eta, &data.positions, &DecodeConfig::with_k(0, 1e-8))?;
    let zeta_sq = report.weights.v.map(|v| 1.0 / v);
    let phi = build_phi_diagonal(&data.market)?;
    large_n_gap(data.positions.most_recent(), &phi, &zeta_sq, &data.eta.most_recent())
}

fn gap_summary(n: usize) -> Result<GapSummary, String> {
    let seeds: Vec<u64> = (0..20).map(|s| 10_000 * n as u64 + s).collect();
    average_gaps(&seeds, |s| gap_instance(s, n)).map_err(|e| e.to_string())
}

fn c5_large_n_reduction() -> Outcome {
    let start = Instant::now();
    let headline = gap_summary(5000)?;
    let scaling: Vec<GapSummary> = [500, 2000, 8000].iter().map(|&n| gap_summary(n)).collect::<Result<_, _>>()?;
    let gaps: Vec<f64> = scaling.iter().map(|s| s.mean_norm_gap).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let secs = start.elapsed().as_secs_f64();
    check(
        headline.mean_cosine >= 0.99 && decreasing && secs < 300.0,
        format!(
            "mean cosine {:.5} at N=5000 (min {:.5}); mean gap {:.3e} > {:.3e} > {:.3e} for N=500/2000/8000; {secs:.1}s",
            headline.mean_cosine, headline.min_cosine, gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn c6_vanishing_leading_order() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let spec = if seed % 2 == 0 { ConstraintSpec::None } else { ConstraintSpec::Dollar };
        let data = dataset(400 + seed, 1000, 20, spec);
        let report = decode_with(&data.eta, &data.positions, &DecodeConfig::with_k(0, 1e-8)).map_err(|e| e.to_string())?;
        let zeta_sq = report.weights.v.map(|v| 1.0 / v);
        let phi = build_phi_diagonal(&data.market).map_err(|e| e.to_string())?;
        let p1 = data.positions.most_recent();
        let model = build_alpha_model(p1, &phi, &zeta_sq, None).map_err(|e| e.to_string())?;
        let w = series_alpha_weights(&model, &data.eta.most_recent(), SeriesOrder::Leading, 1e-8)
            .map_err(|e| e.to_string())?;
        let stock = combo_stock_weights(p1, &w).map_err(|e| e.to_string())?;
        let l1: f64 = w.w.iter().map(|x| x.abs()).sum();
        let p_scale = p1.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        worst = worst.max(stock.norm() / (l1 * p_scale));
    }
    check(worst <= 1e-10, format!("max ‖w_A‖/(Σ|w_i| max‖P_i‖) = {worst:.2e} over 10 instances"))
}

fn random_model(r: &mut ChaCha8Rng, n: usize, m: usize) -> (DMatrix<f64>, StockRiskModel, DVector<f64>, DVector<f64>) {
    let mut p = gaussian_matrix(r, n, m);
    for mut row in p.row_iter_mut() {
        let l1: f64 = row.iter().map(|x| x.abs()).sum();
        row /= l1;
    }
    let b = gaussian_matrix(r, m, m);
    let phi = StockRiskModel::new((&b * b.transpose() + DMatrix::identity(m, m)) * 1e-4).expect("spd");
    let zeta_sq = DVector::from_fn(n, |_, _| 1e-6 * (0.2 + r.random::<f64>()));
    let eta = gaussian_vector(r, n) * 1e-3;
    (p, phi, zeta_sq, eta)
}

fn c7_woodbury_exactness() -> Outcome {
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(20..=200);
        let m = r.random_range(2..=10);
        let (p, phi, zeta_sq, eta) = random_model(&mut r, n, m);
        let model = build_alpha_model(&p, &phi, &zeta_sq, None).map_err(|e| e.to_string())?;
        let fast = model.solve(&eta).map_err(|e| e.to_string())?;
        let mut dense = &p * phi.covariance() * p.transpose();
        for i in 0..n {
            dense[(i, i)] += zeta_sq[i];
        }
        let slow = dense.lu().solve(&eta).expect("nonsingular");
        worst = worst.max(rel(&fast, &slow));
    }
    check(worst <= 1e-9, format!("max rel diff {worst:.2e} over 50 instances N <= 200"))
}

fn c8_low_rank_eigen() -> Outcome {
    let mut r = rng(8);
    let (mut val_err, mut vec_err) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = r.random_range(2..=200);
        let p = r.random_range(3..=50);
        let x = gaussian_matrix(&mut r, n, p);
        let fast = eigen_low_rank(&x, true).map_err(|e| e.to_string())?;
        let mut xc = x.clone();
        for mut row in xc.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        let dense = SymmetricEigen::new(&xc * xc.transpose() / (p - 1) as f64);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dense.eigenvalues[b].total_cmp(&dense.eigenvalues[a]));
        let top = fast.values[0];
        for j in 0..fast.len() {
            let d = order[j];
            val_err = val_err.max((fast.values[j] - dense.eigenvalues[d]).abs() / top);
            let u = fast.vectors.column(j);
            let w = dense.eigenvectors.column(d);
            let s = if u.dot(&w) < 0.0 { -1.0 } else { 1.0 };
            vec_err = vec_err.max((u - w * s).amax());
        }
        if fast.len() != n.min(p - 1) {
            return Err(format!("n={n} p={p}: {} pairs, expected {}", fast.len(), n.min(p - 1)));
        }
    }
    let big = gaussian_matrix(&mut r, 50_000, 20);
    let start = Instant::now();
    let eig = eigen_low_rank(&big, true).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        val_err <= 1e-10 && vec_err <= 1e-8 && secs < 1.0 && eig.len() == 19,
        format!("eigenvalue err {val_err:.2e}, eigenvector err {vec_err:.2e}; n=50000 p=20 in {secs:.3}s"),
    )
}

fn c9_erank_flat() -> Outcome {
    let mut worst = 0.0f64;
    for k in 1..=50usize {
        let e = erank(&vec![1.0; k], false).map_err(|e| e.to_string())?;
        // one rounding in ln k, amplified by exp, plus one in exp itself
        let bound = (1.0 + (k as f64).ln()) * f64::EPSILON * k as f64;
        worst = worst.max((e - k as f64).abs() / bound);
    }
    check(worst <= 1.0, format!("max |eRank - k| = {worst:.2} of the (1 + ln k) ulp(k) bound for k = 1..50"))
}

fn c10_variance_identity() -> Outcome {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = r.random_range(10..=300);
        let cols = r.random_range(4..=25);
        let scales = DVector::from_fn(n, |_, _| (r.random::<f64>() * 3.0).exp());
        let mut x = gaussian_matrix(&mut r, n, cols);
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row *= scales[i];
        }
        let res = ResidualPanel::new(x);
        for k in 0..cols as i64 - 1 {
            let spec = specific_variance(&res, k, Rounding::Trunc, WeightMode::CovKFactor).map_err(|e| e.to_string())?;
            for i in 0..n {
                let removed: f64 = spec.components.row(i).iter().map(|c| c * c).sum();
                worst = worst.max((spec.values[i] + removed - spec.plain[i]).abs() / spec.plain[i]);
            }
        }
    }
    check(worst <= 1e-10, format!("max rel residual {worst:.2e} over 20 panels and all k"))
}

fn c11_sharpe_dominance() -> Outcome {
    let mut r = rng(11);
    let mut min_margin = f64::INFINITY;
    for _ in 0..20 {
        let n = r.random_range(30..=200);
        let m = r.random_range(2..=10);
        let (p, phi, zeta_sq, eta) = random_model(&mut r, n, m);
        let model = build_alpha_model(&p, &phi, &zeta_sq, None).map_err(|e| e.to_string())?;
        let best = model_sharpe(&model, &eta, &sharpe_optimal_alpha_weights(&model, &eta).map_err(|e| e.to_string())?.w);
        for _ in 0..100 {
            let mut w = AlphaWeights::normalized(gaussian_vector(&mut r, n)).map_err(|e| e.to_string())?.w;
            if eta.dot(&w) < 0.0 {
                w = -w;
            }
            min_margin = min_margin.min(best - model_sharpe(&model, &eta, &w));
        }
    }
    check(min_margin >= 0.0, format!("optimized minus best random Sharpe >= {min_margin:.3e} on 20 instances"))
}

fn c12_out_of_sample() -> Outcome {
    let mut checked = 0;
    for seed in 0..5u64 {
        let data = dataset(500 + seed, 300, 15, ConstraintSpec::Dollar);
        let mut bumped = data.eta.values().clone();
        let mut r = rng(seed);
        for i in 0..bumped.nrows() {
            let z: f64 = StandardNormal.sample(&mut r);
            bumped[(i, 0)] += 0.1 * z;
        }
        let bumped = AlphaReturnPanel::new(bumped, data.eta.alpha_ids().to_vec()).map_err(|e| e.to_string())?;
        for mode in [WeightMode::Plain, WeightMode::CovKFactor, WeightMode::CorrKFactor] {
            for k in [0i64, -1, 3] {
                let cfg = DecodeConfig { k, mode, ..Default::default() };
                let a = decode_with(&data.eta, &data.positions, &cfg).map_err(|e| e.to_string())?;
                let b = decode_with(&bumped, &data.positions, &cfg).map_err(|e| e.to_string())?;
                if a.weights.v != b.weights.v {
                    return Err(format!("weights changed for seed {seed}, mode {mode}, k {k}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("regression weights bit-identical in {checked} perturbed runs"))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stockdecode"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let mut bytes = out.stdout;
    bytes.extend(out.stderr);
    Ok(bytes)
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn cli_round(root: &Path, jobs: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let dir = root.join(format!("jobs{jobs}"));
    let data = dir.join("data");
    let d = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let f = |name: &str| data.join(name).to_string_lossy().into_owned();
    let mut log = Vec::new();
    log.push(run_cli(&[
        "--jobs", jobs, "synth", "--n-alphas", "400", "--n-stocks", "20", "--constraint", "dollar", "--seed", "42",
        "--sparsity", "0.6", "--out", &data.to_string_lossy(),
    ])?);
    let (ret, pos, phi) = (f("returns.csv"), f("positions.csv"), f("phi.csv"));
    log.push(run_cli(&["--jobs", jobs, "decode", "--returns", &ret, "--positions", &pos, "--k", "-1", "--out", &d("e.csv")])?);
    log.push(run_cli(&[
        "--jobs", jobs, "decode", "--returns", &ret, "--positions", &pos, "--constraints", &f("constraints.csv"),
        "--method", "elimination", "--out", &d("e_elim.csv"),
    ])?);
    log.push(run_cli(&["--jobs", jobs, "decode", "--returns", &ret, "--positions", &pos, "--all-dates", "--out", &d("hist.csv")])?);
    log.push(run_cli(&["--jobs", jobs, "portfolio", "--expected", &d("e.csv"), "--phi", &phi, "--out", &d("w.csv")])?);
    log.push(run_cli(&[
        "--jobs", jobs, "combo", "--returns", &ret, "--positions", &pos, "--phi", &phi, "--k", "2", "--out", &d("aw.csv"),
        "--stock-out", &d("cw.csv"),
    ])?);
    log.push(run_cli(&[
        "--jobs", jobs, "diagnostics", "--returns", &ret, "--positions", &pos, "--k", "-1", "--out", &d("diag"),
    ])?);
    let mut files = read_dir_bytes(&dir);
    files.extend(read_dir_bytes(&data).into_iter().map(|(n, b)| (format!("data/{n}"), b)));
    files.extend(read_dir_bytes(&dir.join("diag")).into_iter().map(|(n, b)| (format!("diag/{n}"), b)));
    files.push(("console".into(), log.concat()));
    Ok(files)
}

fn c13_cli_determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reference = cli_round(root.path(), "1")?;
    let mut compared = 0;
    for jobs in ["1", "2", "8"] {
        let again = cli_round(&root.path().join(format!("repeat{jobs}")), jobs)?;
        if again != reference {
            let names: Vec<&String> = reference
                .iter()
                .zip(&again)
                .filter(|(a, b)| a != b)
                .map(|(a, _)| &a.0)
                .collect();
            return Err(format!("--jobs {jobs} differs in {names:?}"));
        }
        compared += 1;
    }
    Ok(format!("{} artifacts byte-identical across {compared} reruns with --jobs 1/2/8", reference.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("dense reference parity", c1_appendix_parity),
        ("constraint annihilation", c2_constraint_annihilation),
        ("elimination equals principal components", c3_method_equivalence),
        ("regulator independence", c4_regulator_independence),
        ("large-N reduction", c5_large_n_reduction),
        ("vanishing leading order", c6_vanishing_leading_order),
        ("Woodbury exactness", c7_woodbury_exactness),
        ("low-rank eigen equals dense eigen", c8_low_rank_eigen),
        ("eRank on flat spectra", c9_erank_flat),
        ("variance decomposition identity", c10_variance_identity),
        ("Sharpe dominance", c11_sharpe_dominance),
        ("out-of-sample weights", c12_out_of_sample),
        ("CLI determinism", c13_cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
