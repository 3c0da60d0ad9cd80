//! Sample containers, validation, splitting and CSV ingestion.
//!
//! CSV layout: a header row, one column named `y` (labeled files), one named
//! `x`, an optional `s` (surrogate files), and every remaining column is a
//! covariate in file order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{MaxwayError, Result};
use crate::rng::RngHandle;

/// Labeled sample `(y, x, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub y: Array1<f64>,
    pub x: Array1<f64>,
    pub z: Array2<f64>,
    /// `x` is a 0/1 exposure.
    pub x_binary: bool,
}

/// Unlabeled sample `(x, Z)` used to learn the exposure model.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledData {
    pub x: Array1<f64>,
    pub z: Array2<f64>,
    pub x_binary: bool,
}

/// Unlabeled sample carrying a surrogate label `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateData {
    pub s: Array1<f64>,
    pub x: Array1<f64>,
    pub z: Array2<f64>,
    pub x_binary: bool,
}

pub enum DataRef<'a> {
    Labeled(&'a LabeledData),
    Unlabeled(&'a UnlabeledData),
    Surrogate(&'a SurrogateData),
}

fn check_finite(field: &str, values: impl Iterator<Item = (usize, f64)>) -> Result<()> {
    for (row, v) in values {
        if !v.is_finite() {
            return Err(MaxwayError::NonFinite { field: field.to_string(), row });
        }
    }
    Ok(())
}

fn check_z(z: &Array2<f64>) -> Result<()> {
    for (row, r) in z.outer_iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Err(MaxwayError::NonFinite { field: format!("z{}", j + 1), row });
            }
        }
    }
    Ok(())
}

fn check_binary(x: &Array1<f64>) -> Result<()> {
    for (row, &v) in x.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(MaxwayError::BadBinary { field: "x".into(), row, value: v });
        }
    }
    Ok(())
}

fn check_rows(name: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(MaxwayError::DimensionMismatch(format!(
            "{name} has {len} rows but Z has {n}"
        )));
    }
    Ok(())
}

/// Checks every container invariant.
pub fn validate(data: DataRef<'_>) -> Result<()> {
    match data {
        DataRef::Labeled(d) => {
            let n = d.z.nrows();
            check_rows("y", d.y.len(), n)?;
            check_rows("x", d.x.len(), n)?;
            if n < 2 {
                return Err(MaxwayError::DimensionMismatch(format!(
                    "labeled data needs at least 2 rows, got {n}"
                )));
            }
            if d.z.ncols() < 1 {
                return Err(MaxwayError::DimensionMismatch("Z has no columns".into()));
            }
            check_finite("y", d.y.iter().copied().enumerate())?;
            check_finite("x", d.x.iter().copied().enumerate())?;
            check_z(&d.z)?;
            if d.x_binary {
                check_binary(&d.x)?;
            }
        }
        DataRef::Unlabeled(d) => {
            check_rows("x", d.x.len(), d.z.nrows())?;
            check_finite("x", d.x.iter().copied().enumerate())?;
            check_z(&d.z)?;
            if d.x_binary {
                check_binary(&d.x)?;
            }
        }
        DataRef::Surrogate(d) => {
            check_rows("s", d.s.len(), d.z.nrows())?;
            check_rows("x", d.x.len(), d.z.nrows())?;
            check_finite("s", d.s.iter().copied().enumerate())?;
            check_finite("x", d.x.iter().copied().enumerate())?;
            check_z(&d.z)?;
            if d.x_binary {
                check_binary(&d.x)?;
            }
        }
    }
    Ok(())
}

/// Fails unless `z` has `p` columns.
pub fn check_same_p(what: &str, z: &Array2<f64>, p: usize) -> Result<()> {
    if z.ncols() != p {
        return Err(MaxwayError::DimensionMismatch(format!(
            "{what} has {} covariates, labeled data has {p}",
            z.ncols()
        )));
    }
    Ok(())
}

impl LabeledData {
    pub fn new(y: Array1<f64>, x: Array1<f64>, z: Array2<f64>, x_binary: bool) -> Result<Self> {
        let d = LabeledData { y, x, z, x_binary };
        validate(DataRef::Labeled(&d))?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> LabeledData {
        LabeledData {
            y: self.y.select(Axis(0), rows),
            x: self.x.select(Axis(0), rows),
            z: self.z.select(Axis(0), rows),
            x_binary: self.x_binary,
        }
    }

    /// Exchanges the roles of `y` and `x`.
    pub fn swapped(&self, y_binary: bool) -> LabeledData {
        LabeledData { y: self.x.clone(), x: self.y.clone(), z: self.z.clone(), x_binary: y_binary }
    }

    /// The `(y, Z)` part viewed as exposure data, used when roles are swapped.
    pub fn y_as_unlabeled(&self, y_binary: bool) -> UnlabeledData {
        UnlabeledData { x: self.y.clone(), z: self.z.clone(), x_binary: y_binary }
    }
}

impl UnlabeledData {
    pub fn new(x: Array1<f64>, z: Array2<f64>, x_binary: bool) -> Result<Self> {
        let d = UnlabeledData { x, z, x_binary };
        validate(DataRef::Unlabeled(&d))?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }
}

impl SurrogateData {
    pub fn new(s: Array1<f64>, x: Array1<f64>, z: Array2<f64>, x_binary: bool) -> Result<Self> {
        let d = SurrogateData { s, x, z, x_binary };
        validate(DataRef::Surrogate(&d))?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn as_unlabeled(&self) -> UnlabeledData {
        UnlabeledData { x: self.x.clone(), z: self.z.clone(), x_binary: self.x_binary }
    }
}

/// Randomly partitions rows into `(test, rest)` with `n_test` test rows.
pub fn split(data: &LabeledData, n_test: usize, rng: &RngHandle) -> Result<(LabeledData, LabeledData)> {
    let n = data.n();
    if n_test < 1 || n_test >= n {
        return Err(MaxwayError::BadSplitSize { n_test, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng.rng());
    let (test, rest) = idx.split_at(n_test);
    Ok((data.select_rows(test), data.select_rows(rest)))
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// A numeric table read from CSV.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read<R: Read>(reader: R) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(MaxwayError::Csv(format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    rec.len(),
                    header.len()
                )));
            }
            let mut row = Vec::with_capacity(header.len());
            for (j, field) in rec.iter().enumerate() {
                if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                    return Err(MaxwayError::Csv(format!(
                        "missing value in column `{}` at row {}",
                        header[j],
                        i + 1
                    )));
                }
                let v: f64 = field.parse().map_err(|_| {
                    MaxwayError::Csv(format!(
                        "column `{}` row {}: cannot parse `{field}` as a number",
                        header[j],
                        i + 1
                    ))
                })?;
                if !v.is_finite() {
                    return Err(MaxwayError::NonFinite { field: header[j].clone(), row: i });
                }
                row.push(v);
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn from_path(path: &Path) -> Result<Table> {
        let f = std::fs::File::open(path)
            .map_err(|e| MaxwayError::Io(format!("{}: {e}", path.display())))?;
        Table::read(f)
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    fn column(&self, name: &str) -> Result<Array1<f64>> {
        let j = self.position(name).ok_or_else(|| MaxwayError::MissingColumn(name.into()))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Every column not in `reserved`, in file order.
    fn covariates(&self, reserved: &[&str]) -> Result<Array2<f64>> {
        let cols: Vec<usize> = (0..self.header.len())
            .filter(|&j| !reserved.contains(&self.header[j].as_str()))
            .collect();
        if cols.is_empty() {
            return Err(MaxwayError::DimensionMismatch("no covariate columns".into()));
        }
        let n = self.rows.len();
        Ok(Array2::from_shape_fn((n, cols.len()), |(i, k)| self.rows[i][cols[k]]))
    }

    fn x_is_binary(&self, forced: Option<bool>) -> Result<(Array1<f64>, bool)> {
        let x = self.column("x")?;
        let binary = match forced {
            Some(b) => b,
            None => x.iter().all(|&v| v == 0.0 || v == 1.0),
        };
        Ok((x, binary))
    }

    /// Labeled data; `x_binary = None` autodetects 0/1 exposures.
    pub fn to_labeled(&self, x_binary: Option<bool>) -> Result<LabeledData> {
        let y = self.column("y")?;
        let (x, binary) = self.x_is_binary(x_binary)?;
        let z = self.covariates(&["y", "x", "s"])?;
        LabeledData::new(y, x, z, binary)
    }

    pub fn to_unlabeled(&self, x_binary: Option<bool>) -> Result<UnlabeledData> {
        let (x, binary) = self.x_is_binary(x_binary)?;
        let z = self.covariates(&["y", "x", "s"])?;
        UnlabeledData::new(x, z, binary)
    }

    pub fn to_surrogate(&self, x_binary: Option<bool>) -> Result<SurrogateData> {
        let s = self.column("s")?;
        let (x, binary) = self.x_is_binary(x_binary)?;
        let z = self.covariates(&["y", "x", "s"])?;
        SurrogateData::new(s, x, z, binary)
    }
}

fn write_table<W: Write>(writer: W, leading: &[(&str, &Array1<f64>)], z: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = leading.iter().map(|(n, _)| n.to_string()).collect();
    header.extend((1..=z.ncols()).map(|j| format!("z{j}")));
    w.write_record(&header)?;
    for i in 0..z.nrows() {
        let mut rec: Vec<String> = leading.iter().map(|(_, c)| format!("{}", c[i])).collect();
        rec.extend(z.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labeled_csv<W: Write>(data: &LabeledData, writer: W) -> Result<()> {
    write_table(writer, &[("y", &data.y), ("x", &data.x)], &data.z)
}

pub fn write_unlabeled_csv<W: Write>(data: &UnlabeledData, writer: W) -> Result<()> {
    write_table(writer, &[("x", &data.x)], &data.z)
}

pub fn write_surrogate_csv<W: Write>(data: &SurrogateData, writer: W) -> Result<()> {
    write_table(writer, &[("s", &data.s), ("x", &data.x)], &data.z)
}
