//! Command-line front end.
//!
//! `--config FILE` reads flat `key=value` lines that are spliced in as
//! `--key value` right after the subcommand, so explicit flags override them.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use crate::alpha_risk::{
    build_alpha_model, combo_stock_weights, model_gap, series_alpha_weights, sharpe_optimal_alpha_weights,
    SeriesOrder,
};
use crate::constraints::{decode_via_elimination_with, discover_constraints};
use crate::decoder::{decode_history, decode_with, DecodeConfig, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::io::{
    load_constraints, load_position_tensor, load_return_panel, load_risk_model, load_vector, save_constraints,
    save_position_tensor, save_return_panel, save_risk_model, save_vector, save_wide_matrix, Layout,
};
use crate::panel::{
    alignment, validate_constraints, AlphaReturnPanel, ConstraintMatrix, DecodedReturns, PositionTensor,
    StockRiskModel,
};
use crate::portfolio::{build_phi_diagonal, stock_weights};
use crate::residual::{Rounding, WeightMode};
use crate::synth::{generate, ConstraintSpec, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "stockdecode", version, about = "Decode stock expected returns from alpha expected returns")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat key=value file of default flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic market, alphas and risk model.
    Synth(SynthArgs),
    /// Decode stock expected returns.
    Decode(DecodeArgs),
    /// Sharpe-optimal stock weights from decoded returns.
    Portfolio(PortfolioArgs),
    /// Sharpe-optimal alpha weights and comparison with the decode route.
    Combo(ComboArgs),
    /// Spectra, eRank, constraints and loading concentration.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintKind {
    None,
    Dollar,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n_alphas: usize,
    #[arg(long, default_value_t = 50)]
    pub n_stocks: usize,
    #[arg(long, default_value_t = 31)]
    pub d_total: usize,
    #[arg(long, default_value_t = 10)]
    pub dmom: usize,
    #[arg(long, default_value_t = 0.02)]
    pub stock_vol: f64,
    #[arg(long, default_value_t = 0.5)]
    pub vol_spread: f64,
    #[arg(long, value_enum, default_value_t = ConstraintKind::None)]
    pub constraint: ConstraintKind,
    #[arg(long, default_value_t = 1.0)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub static_positions: bool,
    #[arg(long, default_value = "wide")]
    pub layout: Layout,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pca,
    Elimination,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long)]
    pub positions: PathBuf,
    #[arg(long, default_value = "wide")]
    pub layout: Layout,
    /// Divide each position slice by its L1 norm instead of rejecting it.
    #[arg(long)]
    pub renormalize: bool,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0)]
    pub k: i64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value = "cov_kfactor")]
    pub weight_mode: WeightMode,
    #[arg(long, default_value = "trunc")]
    pub rounding: Rounding,
    /// `alpha_id,multiplier` file scaling the regression weights.
    #[arg(long)]
    pub turnover: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, conflicts_with = "discover_constraints")]
    pub constraints: Option<PathBuf>,
    #[arg(long)]
    pub discover_constraints: bool,
    #[arg(long, value_enum, default_value_t = Method::Pca)]
    pub method: Method,
    /// Decode every date with enough history instead of only s1.
    #[arg(long)]
    pub all_dates: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PortfolioArgs {
    /// `stock_id,expected_return` file.
    #[arg(long)]
    pub expected: PathBuf,
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComboMode {
    /// Exact Sharpe-optimal alpha weights.
    Sharpe,
    /// Leading-order weights: weighted regression residuals.
    Regression,
}

#[derive(Debug, Args)]
pub struct ComboArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Stock risk model; identity when absent.
    #[arg(long)]
    pub phi: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ComboMode::Sharpe)]
    pub combo_mode: ComboMode,
    /// Alpha weights output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional combined stock weights output.
    #[arg(long)]
    pub stock_out: Option<PathBuf>,
    /// Optional key=value report output (always printed to stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnosticsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub phi: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Expand `--config FILE` into flags placed right after the subcommand.
fn splice_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strings: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strings.iter().enumerate() {
        if a == "--config" {
            path = strings.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let path = PathBuf::from(path);
    if !path.exists() {
        return Err(Error::FileNotFound(path));
    }
    let mut extra = Vec::new();
    for (n, line) in fs::read_to_string(&path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ParseError {
            location: format!("{}:{}", path.display(), n + 1),
            message: "expected key=value".into(),
        })?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        match value.trim() {
            "true" => extra.push(flag),
            "false" => {}
            v => {
                extra.push(flag);
                extra.push(v.to_string());
            }
        }
    }
    let names = ["synth", "decode", "portfolio", "combo", "diagnostics"];
    let Some(at) = strings.iter().skip(1).position(|a| names.contains(&a.as_str())) else {
        return Ok(args);
    };
    let mut out = args;
    let at = at + 2;
    for (k, e) in extra.into_iter().enumerate() {
        out.insert(at + k, e.into());
    }
    Ok(out)
}

/// Run the CLI and return the process exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match splice_config(args) {
        Ok(a) => a,
        Err(e) => return report_error(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Error::InvalidConfig(String::new()).exit_code() } else { 0 };
            if code == 0 {
                print!("{e}");
            } else {
                eprintln!("InvalidConfig: {e}");
            }
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("{}: {e}", e.name());
    e.exit_code()
}

pub fn execute(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Decode(a) => cmd_decode(&a),
        Command::Portfolio(a) => cmd_portfolio(&a),
        Command::Combo(a) => cmd_combo(&a),
        Command::Diagnostics(a) => cmd_diagnostics(&a),
    })
}

fn require_file(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::FileNotFound(path.to_path_buf()))
    }
}

fn stock_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_alphas: a.n_alphas,
        n_stocks: a.n_stocks,
        d_total: a.d_total,
        dmom: a.dmom,
        stock_vol: a.stock_vol,
        vol_spread: a.vol_spread,
        constraint: match a.constraint {
            ConstraintKind::None => ConstraintSpec::None,
            ConstraintKind::Dollar => ConstraintSpec::Dollar,
        },
        seed: a.seed,
        sparsity: a.sparsity,
        static_positions: a.static_positions,
    };
    let data = generate(&config)?;
    fs::create_dir_all(&a.out)?;
    let ids = data.positions.stock_ids().to_vec();
    save_return_panel(&data.eta, &a.out.join("returns.csv"), a.layout)?;
    save_position_tensor(&data.positions, &a.out.join("positions.csv"))?;
    if data.constraints.n_constraints() > 0 {
        save_constraints(&data.constraints, &ids, &a.out.join("constraints.csv"))?;
    }
    save_risk_model(&build_phi_diagonal(&data.market)?, &ids, &a.out.join("phi.csv"))?;
    save_wide_matrix(
        &a.out.join("market.csv"),
        "stock_id",
        &stock_labels("s", data.market.ncols()),
        &ids,
        &data.market,
        Some("# realized stock returns; s1 is the most recent date"),
    )?;
    Ok(())
}

struct Inputs {
    eta: AlphaReturnPanel,
    positions: PositionTensor,
    config: DecodeConfig,
}

fn load_inputs(a: &InputArgs) -> Result<Inputs> {
    require_file(&a.returns)?;
    require_file(&a.positions)?;
    if !(a.tol > 0.0 && a.tol < 1.0) {
        return Err(Error::InvalidConfig(format!("tol {} outside (0, 1)", a.tol)));
    }
    let eta = load_return_panel(&a.returns, a.layout)?;
    let positions = load_position_tensor(&a.positions, a.renormalize)?.aligned_to_alphas(eta.alpha_ids())?;
    let turnover = match &a.turnover {
        None => None,
        Some(path) => {
            require_file(path)?;
            let (ids, values) = load_vector(path)?;
            let order = alignment(&ids, eta.alpha_ids(), "alpha")?;
            Some(DVector::from_fn(order.len(), |i, _| values[order[i]]))
        }
    };
    let config = DecodeConfig {
        k: a.k,
        tol: a.tol,
        rounding: a.rounding,
        mode: a.weight_mode,
        turnover_multiplier: turnover,
        ..Default::default()
    };
    Ok(Inputs { eta, positions, config })
}

fn resolve_constraints(a: &DecodeArgs, positions: &PositionTensor) -> Result<Option<ConstraintMatrix>> {
    if a.discover_constraints {
        return Ok(Some(discover_constraints(positions, a.input.tol)));
    }
    match &a.constraints {
        None => Ok(None),
        Some(path) => {
            require_file(path)?;
            Ok(Some(load_constraints(path, positions.stock_ids())?))
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"))
}

pub fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    let Inputs { eta, positions, config } = load_inputs(&a.input)?;
    let q = resolve_constraints(a, &positions)?;
    if let Some(q) = &q {
        let report = validate_constraints(&positions, q, a.input.tol.max(1e-9))?;
        eprintln!("constraints: p={} max_residual={:e}", q.n_constraints(), report.max_residual);
    }

    if a.all_dates {
        let history = decode_history(&eta, &positions, &config)?;
        let values = DMatrix::from_columns(&history.iter().map(|e| e.values.clone()).collect::<Vec<_>>());
        return save_wide_matrix(
            &a.out,
            "stock_id",
            &stock_labels("s", history.len()),
            positions.stock_ids(),
            &values,
            Some("# s1 is the most recent date; larger s is older"),
        );
    }

    let returns = match (a.method, &q) {
        (Method::Elimination, None) => {
            return Err(Error::InvalidConfig(
                "elimination needs --constraints or --discover-constraints".into(),
            ))
        }
        (Method::Elimination, Some(q)) => {
            let (e, elim) = decode_via_elimination_with(&eta, &positions, q, &config)?;
            eprintln!("elimination: eliminated={:?}", elim.eliminated.iter().map(|&b| &positions.stock_ids()[b]).collect::<Vec<_>>());
            e
        }
        (Method::Pca, _) => {
            let report = decode_with(&eta, &positions, &config)?;
            eprintln!(
                "diagnostics: k_used={} erank={} weight_mode={} gram_retained={} gram_nullity={}",
                report.specific.k_used,
                fmt_opt(report.specific.erank),
                report.specific.mode,
                report.gram.retained(),
                report.gram.nullity()
            );
            report.returns
        }
    };
    save_vector(&a.out, "stock_id", "expected_return", &returns.stock_ids, &returns.values)
}

pub fn cmd_portfolio(a: &PortfolioArgs) -> Result<()> {
    require_file(&a.expected)?;
    require_file(&a.phi)?;
    let (ids, values) = load_vector(&a.expected)?;
    let phi = load_risk_model(&a.phi, &ids)?;
    let w = stock_weights(&DecodedReturns { values, stock_ids: ids.clone() }, &phi)?;
    save_vector(&a.out, "stock_id", "weight", &ids, &w.w)
}

fn load_phi(path: &Option<PathBuf>, ids: &[String]) -> Result<StockRiskModel> {
    match path {
        None => Ok(StockRiskModel::identity(ids.len())),
        Some(p) => {
            require_file(p)?;
            load_risk_model(p, ids)
        }
    }
}

pub fn cmd_combo(a: &ComboArgs) -> Result<()> {
    let Inputs { eta, positions, config } = load_inputs(&a.input)?;
    let phi = load_phi(&a.phi, positions.stock_ids())?;
    let report = decode_with(&eta, &positions, &config)?;
    let zeta_sq = report.weights.v.map(|v| 1.0 / v);
    let pcs = (report.specific.k_used > 0).then_some(&report.specific.components);
    let p1 = positions.most_recent();
    let eta1 = eta.most_recent();

    let model = build_alpha_model(p1, &phi, &zeta_sq, pcs)?;
    let alpha_w = match a.combo_mode {
        ComboMode::Sharpe => sharpe_optimal_alpha_weights(&model, &eta1)?,
        ComboMode::Regression => series_alpha_weights(&model, &eta1, SeriesOrder::Leading, config.tol)?,
    };
    let stock_w = combo_stock_weights(p1, &alpha_w)?;
    let gap = model_gap(p1, &phi, &zeta_sq, pcs, &eta1, config.tol)?;

    save_vector(&a.out, "alpha_id", "weight", eta.alpha_ids(), &alpha_w.w)?;
    if let Some(path) = &a.stock_out {
        save_vector(path, "stock_id", "weight", positions.stock_ids(), &stock_w)?;
    }

    let p_scale = p1.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut text = String::new();
    let _ = writeln!(text, "combo_mode={}", match a.combo_mode {
        ComboMode::Sharpe => "sharpe",
        ComboMode::Regression => "regression",
    });
    let _ = writeln!(text, "n_alphas={}", eta.n_alphas());
    let _ = writeln!(text, "n_stocks={}", positions.n_stocks());
    let _ = writeln!(text, "k_used={}", report.specific.k_used);
    let _ = writeln!(text, "kappa={:e}", alpha_w.kappa);
    let _ = writeln!(text, "stock_weight_norm={:e}", stock_w.norm());
    let _ = writeln!(text, "stock_weight_relative_norm={:e}", stock_w.norm() / p_scale);
    let _ = writeln!(text, "cosine={:.12}", gap.cosine);
    let _ = writeln!(text, "norm_gap={:e}", gap.norm_gap);
    let _ = writeln!(text, "raw_gap={:e}", gap.raw_gap);
    for s in &gap.sweep {
        let _ = writeln!(text, "scale_{}_cosine={:.12}", s.scale, s.cosine);
        let _ = writeln!(text, "scale_{}_norm_gap={:e}", s.scale, s.norm_gap);
    }
    let _ = writeln!(text, "min_q_diag={:e}", gap.q_diag.min());
    let _ = writeln!(text, "max_clustering={:e}", gap.clustering.max());
    print!("{text}");
    if let Some(path) = &a.report {
        fs::write(path, &text)?;
    }
    Ok(())
}

fn save_spectrum(path: &Path, values: &DVector<f64>, flag_below: Option<f64>) -> Result<()> {
    let ids: Vec<String> = (1..=values.len()).map(|r| r.to_string()).collect();
    let mut m = DMatrix::zeros(values.len(), if flag_below.is_some() { 2 } else { 1 });
    for (r, &v) in values.iter().enumerate() {
        m[(r, 0)] = v;
        if let Some(cut) = flag_below {
            m[(r, 1)] = if v <= cut { 1.0 } else { 0.0 };
        }
    }
    let mut labels = vec!["eigenvalue".to_string()];
    if flag_below.is_some() {
        labels.push("flagged".to_string());
    }
    save_wide_matrix(path, "index", &labels, &ids, &m, None)
}

pub fn cmd_diagnostics(a: &DiagnosticsArgs) -> Result<()> {
    let Inputs { eta, positions, config } = load_inputs(&a.input)?;
    let phi = load_phi(&a.phi, positions.stock_ids())?;
    let report = decode_with(&eta, &positions, &config)?;
    fs::create_dir_all(&a.out)?;

    let gram = report.gram.eigenvalues().clone();
    let cut = config.tol * gram.max();
    save_spectrum(&a.out.join("gram_spectrum.csv"), &gram, Some(cut))?;
    let flagged = gram.iter().filter(|&&v| v <= cut).count();

    if let Some(spectrum) = &report.specific.spectrum {
        save_spectrum(&a.out.join("residual_spectrum.csv"), spectrum, None)?;
    }
    let q = discover_constraints(&positions, config.tol);
    if q.n_constraints() > 0 {
        save_constraints(&q, positions.stock_ids(), &a.out.join("constraints.csv"))?;
    }

    let zeta_sq = report.weights.v.map(|v| 1.0 / v);
    let model = build_alpha_model(positions.most_recent(), &phi, &zeta_sq, None)?;
    let beta = model.betas();
    let m = positions.n_stocks();
    let mut conc = DMatrix::zeros(m, 2);
    for s in 0..m {
        let col = beta.column(s);
        let q_aa = col.norm_squared();
        conc[(s, 0)] = q_aa;
        conc[(s, 1)] = if q_aa > 0.0 { col.iter().map(|b| b * b).fold(0.0, f64::max) / q_aa } else { 0.0 };
    }
    save_wide_matrix(
        &a.out.join("q_diag.csv"),
        "stock_id",
        &["q_aa".to_string(), "clustering".to_string()],
        positions.stock_ids(),
        &conc,
        None,
    )?;

    let residual_erank = match &report.specific.spectrum {
        Some(s) => fmt_opt(crate::residual::erank(s.as_slice(), false).ok()),
        None => "none".into(),
    };
    println!("gram_rank={}", gram.len() - flagged);
    println!("gram_flagged={flagged}");
    println!("residual_erank={residual_erank}");
    println!("k_used={}", report.specific.k_used);
    println!("discovered_constraints={}", q.n_constraints());
    println!("min_q_diag={:e}", conc.column(0).min());
    Ok(())
}
