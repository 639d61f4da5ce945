//! CSV file formats.
//!
//! All writers emit 17 significant digits, so floating-point values survive
//! a save/load cycle bit-exactly. Lines starting with `#` are comments; the
//! writers put the date convention in one.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::{alignment, AlphaReturnPanel, ConstraintMatrix, PositionTensor, StockRiskModel};

const DATE_NOTE: &str = "# s1 is the most recent date; larger s is older";

/// Row layout of a return panel file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `alpha_id,s1,...,sd`, one row per alpha.
    Wide,
    /// `alpha_id,date_index,value`, one row per cell.
    Long,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Layout::Wide),
            "long" => Ok(Layout::Long),
            other => Err(Error::InvalidConfig(format!("unknown layout `{other}`"))),
        }
    }
}

/// Decimal text with 17 significant digits.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::ParseError { location: format!("{}:{line}", path.display()), message: message.into() }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let header = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    let x: f64 = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("`{field}` is not a number")))?;
    if !x.is_finite() {
        return Err(parse_error(path, line, format!("`{field}` is not finite")));
    }
    Ok(x)
}

fn parse_index(path: &Path, line: u64, field: &str) -> Result<usize> {
    match field.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i),
        _ => Err(parse_error(path, line, format!("`{field}` is not a date index (1, 2, ...)"))),
    }
}

fn require_header(path: &Path, table: &Table, expected: &[&str]) -> Result<()> {
    if table.header.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(parse_error(
            path,
            1,
            format!("expected header `{}`, got `{}`", expected.join(","), table.header.join(",")),
        ));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn csv_writer(path: &Path, comment: Option<&str>) -> Result<csv::Writer<BufWriter<File>>> {
    let mut out = create(path)?;
    if let Some(c) = comment {
        writeln!(out, "{c}")?;
    }
    Ok(csv::Writer::from_writer(out))
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidConfig(format!("{other:?}")),
    }
}

/// Read a labelled matrix `id,c1,...,ck`: returns ids, the column labels and
/// the numeric block.
pub fn load_wide_matrix(path: &Path) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let table = read_table(path)?;
    if table.header.is_empty() {
        return Err(parse_error(path, 1, "missing header"));
    }
    let cols = table.header.len() - 1;
    let mut ids = Vec::with_capacity(table.rows.len());
    let mut data = Vec::with_capacity(table.rows.len() * cols);
    for (line, row) in &table.rows {
        ids.push(row[0].clone());
        for field in &row[1..] {
            data.push(parse_f64(path, *line, field)?);
        }
    }
    let labels = table.header[1..].to_vec();
    Ok((ids, labels, DMatrix::from_row_slice(table.rows.len(), cols, &data)))
}

/// Write a labelled matrix with header `id_header,labels...`.
pub fn save_wide_matrix(
    path: &Path,
    id_header: &str,
    labels: &[String],
    ids: &[String],
    values: &DMatrix<f64>,
    comment: Option<&str>,
) -> Result<()> {
    let mut w = csv_writer(path, comment)?;
    let mut header = vec![id_header.to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for (i, id) in ids.iter().enumerate() {
        let mut record = vec![id.clone()];
        record.extend(values.row(i).iter().map(|&x| format_value(x)));
        w.write_record(&record).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn date_labels(d: usize) -> Vec<String> {
    (1..=d).map(|s| format!("s{s}")).collect()
}

/// Load an alpha return panel in either layout.
pub fn load_return_panel(path: &Path, layout: Layout) -> Result<AlphaReturnPanel> {
    match layout {
        Layout::Wide => {
            let (ids, _, values) = load_wide_matrix(path)?;
            AlphaReturnPanel::new(values, ids)
        }
        Layout::Long => {
            let table = read_table(path)?;
            require_header(path, &table, &["alpha_id", "date_index", "value"])?;
            let mut ids: Vec<String> = Vec::new();
            let mut index: HashMap<String, usize> = HashMap::new();
            let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
            let mut d = 0;
            for (line, row) in &table.rows {
                let alpha = *index.entry(row[0].clone()).or_insert_with(|| {
                    ids.push(row[0].clone());
                    ids.len() - 1
                });
                let s = parse_index(path, *line, &row[1])?;
                let x = parse_f64(path, *line, &row[2])?;
                if cells.insert((alpha, s - 1), x).is_some() {
                    return Err(parse_error(path, *line, "duplicate (alpha_id, date_index)"));
                }
                d = d.max(s);
            }
            let mut values = DMatrix::zeros(ids.len(), d);
            for (i, id) in ids.iter().enumerate() {
                for s in 0..d {
                    values[(i, s)] = *cells
                        .get(&(i, s))
                        .ok_or_else(|| Error::IncompletePanel { alpha: id.clone(), date: s + 1 })?;
                }
            }
            AlphaReturnPanel::new(values, ids)
        }
    }
}

pub fn save_return_panel(panel: &AlphaReturnPanel, path: &Path, layout: Layout) -> Result<()> {
    match layout {
        Layout::Wide => save_wide_matrix(
            path,
            "alpha_id",
            &date_labels(panel.n_dates()),
            panel.alpha_ids(),
            panel.values(),
            Some(DATE_NOTE),
        ),
        Layout::Long => {
            let mut w = csv_writer(path, Some(DATE_NOTE))?;
            w.write_record(["alpha_id", "date_index", "value"]).map_err(csv_io)?;
            for (i, id) in panel.alpha_ids().iter().enumerate() {
                for s in 0..panel.n_dates() {
                    w.write_record([id.clone(), (s + 1).to_string(), format_value(panel.values()[(i, s)])])
                        .map_err(csv_io)?;
                }
            }
            w.flush()?;
            Ok(())
        }
    }
}

/// Load `alpha_id,stock_id,date_index,position` rows into a dense tensor;
/// absent triples are zero positions. Alphas and stocks are ordered by first
/// appearance.
pub fn load_position_tensor(path: &Path, renormalize: bool) -> Result<PositionTensor> {
    let table = read_table(path)?;
    require_header(path, &table, &["alpha_id", "stock_id", "date_index", "position"])?;
    let mut alpha_ids: Vec<String> = Vec::new();
    let mut stock_ids: Vec<String> = Vec::new();
    let mut alpha_index: HashMap<String, usize> = HashMap::new();
    let mut stock_index: HashMap<String, usize> = HashMap::new();
    let mut entries = Vec::with_capacity(table.rows.len());
    let mut d = 0;
    for (line, row) in &table.rows {
        let i = *alpha_index.entry(row[0].clone()).or_insert_with(|| {
            alpha_ids.push(row[0].clone());
            alpha_ids.len() - 1
        });
        let a = *stock_index.entry(row[1].clone()).or_insert_with(|| {
            stock_ids.push(row[1].clone());
            stock_ids.len() - 1
        });
        let s = parse_index(path, *line, &row[2])?;
        let x = parse_f64(path, *line, &row[3])?;
        entries.push((*line, i, a, s - 1, x));
        d = d.max(s);
    }
    let mut slices = vec![DMatrix::zeros(alpha_ids.len(), stock_ids.len()); d];
    let mut seen = std::collections::HashSet::new();
    for (line, i, a, s, x) in entries {
        if !seen.insert((i, a, s)) {
            return Err(parse_error(path, line, "duplicate (alpha_id, stock_id, date_index)"));
        }
        slices[s][(i, a)] = x;
    }
    PositionTensor::new(slices, alpha_ids, stock_ids, renormalize)
}

/// Write the nonzero positions in long layout.
pub fn save_position_tensor(tensor: &PositionTensor, path: &Path) -> Result<()> {
    let mut w = csv_writer(path, Some(DATE_NOTE))?;
    w.write_record(["alpha_id", "stock_id", "date_index", "position"]).map_err(csv_io)?;
    for (s, slice) in tensor.slices().iter().enumerate() {
        for (i, alpha) in tensor.alpha_ids().iter().enumerate() {
            for (a, stock) in tensor.stock_ids().iter().enumerate() {
                let x = slice[(i, a)];
                if x != 0.0 {
                    w.write_record([alpha.clone(), stock.clone(), (s + 1).to_string(), format_value(x)])
                        .map_err(csv_io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load `stock_id,c1,...,cp`, rows reordered to `stock_ids`.
pub fn load_constraints(path: &Path, stock_ids: &[String]) -> Result<ConstraintMatrix> {
    let (ids, _, values) = load_wide_matrix(path)?;
    let order = alignment(&ids, stock_ids, "stock")?;
    ConstraintMatrix::new(values.select_rows(&order))
}

pub fn save_constraints(q: &ConstraintMatrix, stock_ids: &[String], path: &Path) -> Result<()> {
    let labels: Vec<String> = (1..=q.n_constraints()).map(|c| format!("c{c}")).collect();
    save_wide_matrix(path, "stock_id", &labels, stock_ids, q.values(), None)
}

/// Load an `M x M` covariance with stock ids on both axes, reordered to
/// `stock_ids`.
pub fn load_risk_model(path: &Path, stock_ids: &[String]) -> Result<StockRiskModel> {
    let (rows, cols, values) = load_wide_matrix(path)?;
    if rows != cols {
        return Err(parse_error(path, 1, "row and column stock ids differ"));
    }
    let order = alignment(&rows, stock_ids, "stock")?;
    StockRiskModel::new(values.select_rows(&order).select_columns(&order))
}

pub fn save_risk_model(phi: &StockRiskModel, stock_ids: &[String], path: &Path) -> Result<()> {
    save_wide_matrix(path, "stock_id", stock_ids, stock_ids, phi.covariance(), None)
}

/// Write `id_header,value_header` rows.
pub fn save_vector(
    path: &Path,
    id_header: &str,
    value_header: &str,
    ids: &[String],
    values: &DVector<f64>,
) -> Result<()> {
    let mut w = csv_writer(path, None)?;
    w.write_record([id_header, value_header]).map_err(csv_io)?;
    for (id, &x) in ids.iter().zip(values.iter()) {
        w.write_record([id.clone(), format_value(x)]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a two-column `id,value` file.
pub fn load_vector(path: &Path) -> Result<(Vec<String>, DVector<f64>)> {
    let (ids, _, values) = load_wide_matrix(path)?;
    if values.ncols() != 1 {
        return Err(parse_error(path, 1, "expected two columns"));
    }
    Ok((ids, values.column(0).into_owned()))
}
