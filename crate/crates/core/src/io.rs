//! CSV ingestion and emission, and JSON model persistence.
//!
//! CSV files hold finite numbers separated by commas; a first row with any
//! non-numeric field is taken as a header. Numbers are written in the
//! shortest form that parses back to the same `f64`, so saved models reload
//! bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};
use crate::fitting::{FitDiagnostics, FitOptions, Fitted, GaSPModel};
use crate::kernels::{InverseRange, KernelSpec};
use crate::ppgasp::PPGaSPModel;
use crate::priors::{JrPriorParams, PriorChoice};
use crate::trend::Trend;

pub const SCHEMA_VERSION: u32 = 1;

/// Serializes a matrix as `{"cols": k, "rows": [[...], ...]}`; the column
/// count survives when there are no rows.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Rows {
        cols: usize,
        rows: Vec<Vec<f64>>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        Rows {
            cols: m.ncols(),
            rows: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let Rows { cols, rows } = Rows::deserialize(d)?;
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(D::Error::custom(format!(
                "row {} has {} entries, expected {cols}",
                bad + 1,
                rows[bad].len()
            )));
        }
        Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }
}

/// A numeric table with an optional header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: DMatrix<f64>,
}

/// Reads a CSV file of finite numbers.
pub fn read_csv(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| {
        GaspError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    parse_csv(file).map_err(|e| match e {
        GaspError::Parse(msg) => GaspError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses CSV text of finite numbers, detecting a header row.
pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| GaspError::Parse(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(vals) => {
                if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
                    return Err(GaspError::Parse(format!("row {}, column {}: value is not finite", line + 1, bad + 1)));
                }
                if let Some(first) = rows.first() {
                    if first.len() != vals.len() {
                        return Err(GaspError::Parse(format!(
                            "row {} has {} fields, expected {}",
                            line + 1,
                            vals.len(),
                            first.len()
                        )));
                    }
                }
                rows.push(vals);
            }
            Err(_) if rows.is_empty() && header.is_none() => {
                header = Some(rec.iter().map(str::to_string).collect::<Vec<_>>());
            }
            Err(_) => {
                let bad = rec.iter().position(|f| f.parse::<f64>().is_err()).unwrap_or(0);
                return Err(GaspError::Parse(format!(
                    "row {}, column {}: '{}' is not a number",
                    line + 1,
                    bad + 1,
                    rec.get(bad).unwrap_or("")
                )));
            }
        }
    }
    if rows.is_empty() {
        return Err(GaspError::Parse("no numeric rows".into()));
    }
    if let Some(h) = &header {
        if h.len() != rows[0].len() {
            return Err(GaspError::Parse(format!(
                "header has {} fields but rows have {}",
                h.len(),
                rows[0].len()
            )));
        }
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(Table {
        header,
        data: DMatrix::from_fn(n, p, |i, j| rows[i][j]),
    })
}

/// Reads a CSV matrix, discarding any header.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    Ok(read_csv(path)?.data)
}

/// Writes `data` as CSV with `\n` line endings.
pub fn write_csv<W: Write>(writer: W, header: Option<&[&str]>, data: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let csv_err = |e: csv::Error| GaspError::Io(std::io::Error::other(e.to_string()));
    if let Some(h) = header {
        w.write_record(h).map_err(csv_err)?;
    }
    for row in data.row_iter() {
        w.write_record(row.iter().map(|v| format_number(*v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, header: Option<&[&str]>, data: &DMatrix<f64>) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), header, data)
}

/// Shortest decimal that parses back to `v`.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gasp,
    Ppgasp,
}

/// On-disk form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model_kind: ModelKind,
    #[serde(with = "matrix_rows")]
    pub design: DMatrix<f64>,
    /// `n x k`; `k = 1` for single-output models.
    #[serde(with = "matrix_rows")]
    pub response: DMatrix<f64>,
    pub trend: Trend,
    pub kernel: KernelSpec,
    pub beta_hat: Vec<f64>,
    pub eta_hat: f64,
    /// `q x k`
    #[serde(with = "matrix_rows")]
    pub theta_hat: DMatrix<f64>,
    pub sigma2_hat: Vec<f64>,
    pub prior: PriorChoice,
    pub options: FitOptions,
    pub jr_params: JrPriorParams,
    pub diagnostics: FitDiagnostics,
}

impl ModelFile {
    fn from_fitted(f: &Fitted, kind: ModelKind) -> Self {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            model_kind: kind,
            design: f.design.clone(),
            response: f.response.clone(),
            trend: f.trend.clone(),
            kernel: f.spec.clone(),
            beta_hat: f.beta.as_slice().to_vec(),
            eta_hat: f.eta,
            theta_hat: f.state.theta_hat().clone(),
            sigma2_hat: f.sigma2.clone(),
            prior: f.options.prior,
            options: f.options.clone(),
            jr_params: f.jr.clone(),
            diagnostics: f.diagnostics.clone(),
        }
    }

    pub fn from_gasp(model: &GaSPModel) -> Self {
        Self::from_fitted(&model.inner, ModelKind::Gasp)
    }

    pub fn from_ppgasp(model: &PPGaSPModel) -> Self {
        Self::from_fitted(&model.inner, ModelKind::Ppgasp)
    }

    /// Rebuilds the fitted state and checks it against the stored estimates.
    fn into_fitted(self) -> Result<Fitted> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(GaspError::Parse(format!(
                "unsupported model schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let spec = KernelSpec::new(self.kernel.families().to_vec(), self.kernel.alpha().to_vec())?;
        let beta = InverseRange::new(self.beta_hat)?;
        let fitted = Fitted::assemble(
            &self.design,
            &self.response,
            &self.trend,
            &spec,
            &self.options,
            self.jr_params,
            beta,
            self.eta_hat,
            self.diagnostics,
        )?;
        let consistent = fitted
            .sigma2
            .iter()
            .zip(&self.sigma2_hat)
            .all(|(a, b)| (a - b).abs() <= 1e-10 * b.abs().max(f64::MIN_POSITIVE))
            && fitted.sigma2.len() == self.sigma2_hat.len()
            && fitted.state.theta_hat().shape() == self.theta_hat.shape()
            && fitted
                .state
                .theta_hat()
                .iter()
                .zip(self.theta_hat.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        if !consistent {
            return Err(GaspError::Parse(
                "stored estimates do not match the state rebuilt from the stored parameters".into(),
            ));
        }
        Ok(fitted)
    }

    pub fn into_gasp(self) -> Result<GaSPModel> {
        if self.model_kind != ModelKind::Gasp {
            return Err(GaspError::InvalidArgument("model file holds a ppgasp model; use pppredict".into()));
        }
        Ok(GaSPModel {
            inner: self.into_fitted()?,
        })
    }

    pub fn into_ppgasp(self) -> Result<PPGaSPModel> {
        Ok(PPGaSPModel {
            inner: self.into_fitted()?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GaspError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::from_json(&text)
    }
}

pub fn save_model(model: &GaSPModel, path: &Path) -> Result<()> {
    ModelFile::from_gasp(model).save(path)
}

pub fn load_model(path: &Path) -> Result<GaSPModel> {
    ModelFile::load(path)?.into_gasp()
}

pub fn save_ppmodel(model: &PPGaSPModel, path: &Path) -> Result<()> {
    ModelFile::from_ppgasp(model).save(path)
}

pub fn load_ppmodel(path: &Path) -> Result<PPGaSPModel> {
    ModelFile::load(path)?.into_ppgasp()
}
