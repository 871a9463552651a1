//! CSV input and output for balanced panels, matrices and simulation truth.
//!
//! The panel format is long: header `i,t,y,x1,...,xp`, one row per
//! `(unit, time)` cell. Reals are written with 17 significant digits so
//! every `f64` survives a round trip unchanged.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::alm::PanelData;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::simulation::SimulationTruth;

/// Formats a real with 17 significant digits.
pub fn format_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// A loaded panel together with the sorted unit and time ids.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub data: PanelData,
    pub unit_ids: Vec<String>,
    pub time_ids: Vec<String>,
}

/// Sorts ids numerically when all of them are integers, otherwise
/// lexicographically.
fn sort_ids(ids: &mut Vec<String>) {
    let numeric: Option<Vec<i64>> = ids.iter().map(|s| s.parse::<i64>().ok()).collect();
    match numeric {
        Some(_) => ids.sort_by_key(|s| s.parse::<i64>().unwrap_or_default()),
        None => ids.sort(),
    }
}

fn parse_real(field: &str, line: u64, column: &str) -> Result<f64> {
    let s = field.trim();
    if s.is_empty() {
        return Err(Error::Panel(format!("line {line}: missing value in column {column}")));
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Panel(format!("line {line}: non-numeric value {s:?} in column {column}")))?;
    if !v.is_finite() {
        return Err(Error::Panel(format!("line {line}: non-finite value in column {column}")));
    }
    Ok(v)
}

pub fn load_panel(path: impl AsRef<Path>) -> Result<LoadedPanel> {
    read_panel(File::open(path)?)
}

pub fn read_panel(reader: impl Read) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 3 || headers[0] != "i" || headers[1] != "t" || headers[2] != "y" {
        return Err(Error::Panel(format!("header must start with i,t,y; got {}", headers.join(","))));
    }
    let p = headers.len() - 3;
    for (j, h) in headers[3..].iter().enumerate() {
        if *h != format!("x{}", j + 1) {
            return Err(Error::Panel(format!("expected column x{} but found {h:?}", j + 1)));
        }
    }

    let mut cells: HashMap<(String, String), Vec<f64>> = HashMap::new();
    let mut units: BTreeMap<String, ()> = BTreeMap::new();
    let mut times: BTreeMap<String, ()> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(Error::Panel(format!("line {line}: expected {} fields, found {}", headers.len(), rec.len())));
        }
        let i = rec[0].trim().to_string();
        let t = rec[1].trim().to_string();
        if i.is_empty() || t.is_empty() {
            return Err(Error::Panel(format!("line {line}: missing unit or time id")));
        }
        let values = (2..rec.len()).map(|k| parse_real(&rec[k], line, &headers[k])).collect::<Result<Vec<_>>>()?;
        units.insert(i.clone(), ());
        times.insert(t.clone(), ());
        if cells.insert((i.clone(), t.clone()), values).is_some() {
            return Err(Error::Panel(format!("line {line}: duplicate cell (i = {i}, t = {t})")));
        }
    }
    let mut unit_ids: Vec<String> = units.into_keys().collect();
    let mut time_ids: Vec<String> = times.into_keys().collect();
    sort_ids(&mut unit_ids);
    sort_ids(&mut time_ids);
    let (n, t) = (unit_ids.len(), time_ids.len());
    if n == 0 {
        return Err(Error::Panel("panel has no rows".into()));
    }
    if cells.len() != n * t {
        for ui in &unit_ids {
            for ti in &time_ids {
                if !cells.contains_key(&(ui.clone(), ti.clone())) {
                    return Err(Error::Panel(format!("unbalanced panel: missing cell (i = {ui}, t = {ti})")));
                }
            }
        }
    }
    let mut y = DenseMatrix::zeros(n, t);
    let mut x = vec![DenseMatrix::zeros(n, t); p];
    for (a, ui) in unit_ids.iter().enumerate() {
        for (b, ti) in time_ids.iter().enumerate() {
            let v = &cells[&(ui.clone(), ti.clone())];
            y[(a, b)] = v[0];
            for j in 0..p {
                x[j][(a, b)] = v[j + 1];
            }
        }
    }
    Ok(LoadedPanel { data: PanelData::new(y, x)?, unit_ids, time_ids })
}

/// Writes a panel in the long format with ids `1..=N` and `1..=T`.
pub fn write_panel(writer: impl Write, data: &PanelData) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["i".to_string(), "t".to_string(), "y".to_string()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for i in 0..data.n() {
        for t in 0..data.t() {
            let mut rec = vec![(i + 1).to_string(), (t + 1).to_string(), format_real(data.y[(i, t)])];
            rec.extend(data.x.iter().map(|x| format_real(x[(i, t)])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a matrix with header `i,1,...,T` and one row per matrix row.
pub fn write_matrix(writer: impl Write, m: &DenseMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["i".to_string()];
    header.extend((1..=m.cols()).map(|c| c.to_string()));
    w.write_record(&header)?;
    for r in 0..m.rows() {
        let mut rec = vec![(r + 1).to_string()];
        rec.extend(m.row(r).iter().map(|&v| format_real(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix(reader: impl Read) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let cols = rdr.headers()?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols + 1 {
            return Err(Error::Panel(format!("line {line}: expected {} fields", cols + 1)));
        }
        for k in 1..rec.len() {
            data.push(parse_real(&rec[k], line, "matrix")?);
        }
        rows += 1;
    }
    DenseMatrix::from_row_major(rows, cols, data)
}

/// Writes `index,value` rows with 1-based indices under the given header.
pub fn write_vector(writer: impl Write, index_name: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([index_name, "value"])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([(k + 1).to_string(), format_real(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a simulated panel and its truth into `dir`: `panel.csv`,
/// `truth.csv` (one row per level) and `L0_<k>.csv` per level in the order
/// of the simulated quantile levels.
pub fn write_simulation(dir: impl AsRef<Path>, truth: &SimulationTruth) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_panel(File::create(dir.join("panel.csv"))?, &truth.data)?;
    let mut w = csv::Writer::from_path(dir.join("truth.csv"))?;
    w.write_record(["level", "u", "beta1", "beta2", "beta3", "r_true", "rank", "l0_file"])?;
    for (k, level) in truth.levels.iter().enumerate() {
        let file = format!("L0_{}.csv", k + 1);
        write_matrix(File::create(dir.join(&file))?, &level.l0)?;
        w.write_record([
            (k + 1).to_string(),
            format_real(level.u),
            format_real(level.beta[0]),
            format_real(level.beta[1]),
            format_real(level.beta[2]),
            level.r_true.to_string(),
            level.rank.to_string(),
            file,
        ])?;
    }
    w.flush()?;
    Ok(())
}
