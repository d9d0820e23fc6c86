//! Panel CSV files and versioned JSON result documents.
//!
//! Panel layout: a header `time,<label1>,<label2>,...` followed by one row per
//! time step holding an integer time index and one decimal return per asset.
//! Returns are dimensionless (`0.001` is 10 bps). LF and CRLF line endings are
//! accepted; `.` is always the decimal separator.
//!
//! Result documents are JSON objects carrying `"schema": 1`. Floats are written
//! in their shortest round-trip decimal form, so parsing restores them
//! bit-exactly.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{EigenCurve, FitResult};
use crate::model::{Compounding, ReturnPanel};
use crate::moments::MatrixKind;
use crate::spectral::Spectrum;

pub const SCHEMA_VERSION: u32 = 1;

/// Serializes a `DMatrix` as a list of rows.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("matrix rows have unequal lengths"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
    }
}

/// What a panel file declares about its contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFileHeader {
    pub asset_labels: Vec<String>,
    pub base_scale_minutes: f64,
    pub row_count: usize,
}

impl PanelFileHeader {
    pub fn of(panel: &ReturnPanel) -> Self {
        PanelFileHeader {
            asset_labels: panel.asset_labels.clone(),
            base_scale_minutes: panel.base_scale_minutes,
            row_count: panel.n_steps(),
        }
    }

    /// Labels must be non-empty and unique.
    pub fn validate(&self) -> Result<()> {
        check_labels(&self.asset_labels)?;
        if !(self.base_scale_minutes.is_finite() && self.base_scale_minutes > 0.0) {
            return Err(Error::Header(format!(
                "base scale must be positive, got {}",
                self.base_scale_minutes
            )));
        }
        Ok(())
    }
}

fn check_labels(labels: &[String]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Header("no asset columns".into()));
    }
    let mut seen = HashSet::with_capacity(labels.len());
    for (k, label) in labels.iter().enumerate() {
        if label.is_empty() {
            return Err(Error::Header(format!("empty label in column {}", k + 2)));
        }
        if !seen.insert(label.as_str()) {
            return Err(Error::Header(format!("duplicate label {label:?}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub compounding: Compounding,
    /// Duration of one row in minutes; the file format does not carry it.
    pub base_scale_minutes: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            compounding: Compounding::Arithmetic,
            base_scale_minutes: 1.0,
        }
    }
}

pub fn load_panel(path: impl AsRef<Path>, options: &LoadOptions) -> Result<ReturnPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, options).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses a panel from any reader; see [`load_panel`].
pub fn read_panel(reader: impl std::io::Read, options: &LoadOptions) -> Result<ReturnPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut record = csv::StringRecord::new();
    if !next_record(&mut rdr, &mut record)? {
        return Err(Error::Header("file is empty".into()));
    }
    let first = record.get(0).unwrap_or("").trim_start_matches('\u{feff}');
    if first != "time" {
        return Err(Error::Header(format!(
            "first column must be named \"time\", found {first:?}"
        )));
    }
    let labels: Vec<String> = record.iter().skip(1).map(str::to_owned).collect();
    check_labels(&labels)?;
    let n = labels.len();

    let mut data: Vec<f64> = Vec::new();
    let mut steps = 0usize;
    while next_record(&mut rdr, &mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != n + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", n + 1, record.len()),
            });
        }
        let time = &record[0];
        if time.parse::<i64>().is_err() {
            return Err(Error::Parse {
                line,
                message: format!("time index {time:?} is not an integer"),
            });
        }
        for (k, field) in record.iter().enumerate().skip(1) {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {}: {field:?} is not a number", k + 1),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    line,
                    column: k + 1,
                });
            }
            data.push(value);
        }
        steps += 1;
    }
    if steps == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "panel has no data rows".into(),
        });
    }
    // time-major rows are the columns of the N x T matrix
    let returns = nalgebra::DMatrix::from_vec(n, steps, data);
    Ok(
        ReturnPanel::new(returns, labels, options.base_scale_minutes)?
            .with_compounding(options.compounding),
    )
}

fn next_record<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    record: &mut csv::StringRecord,
) -> Result<bool> {
    rdr.read_record(record).map_err(|e| {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io("<panel>", io),
            csv::ErrorKind::Utf8 { err, .. } => Error::Parse {
                line,
                message: err.to_string(),
            },
            kind => Error::Parse {
                line,
                message: format!("{kind:?}"),
            },
        }
    })
}

/// Writes `path` through a temporary file in the same directory and renames
/// it into place.
fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_panel(panel: &ReturnPanel, path: impl AsRef<Path>) -> Result<()> {
    panel.validate()?;
    check_labels(&panel.asset_labels)?;
    write_atomic(path.as_ref(), |w| write_panel(panel, w))
}

/// Writes the CSV layout of [`load_panel`] to `w`.
pub fn write_panel(panel: &ReturnPanel, w: &mut dyn Write) -> std::io::Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wtr.write_field("time")?;
    for label in &panel.asset_labels {
        wtr.write_field(label)?;
    }
    wtr.write_record(None::<&[u8]>)?;
    let mut buf = String::new();
    for (t, col) in panel.returns.column_iter().enumerate() {
        buf.clear();
        let _ = write!(buf, "{t}");
        wtr.write_field(&buf)?;
        for v in col.iter() {
            buf.clear();
            let _ = write!(buf, "{v}");
            wtr.write_field(&buf)?;
        }
        wtr.write_record(None::<&[u8]>)?;
    }
    wtr.flush()
}

/// JSON layout of an [`EigenCurve`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRecord {
    pub rank: usize,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: u64,
    pub value: f64,
}

impl From<EigenCurve> for CurveRecord {
    fn from(c: EigenCurve) -> Self {
        CurveRecord {
            rank: c.rank,
            points: c
                .points()
                .map(|(tau, value)| CurvePoint { tau, value })
                .collect(),
        }
    }
}

impl TryFrom<CurveRecord> for EigenCurve {
    type Error = Error;

    fn try_from(r: CurveRecord) -> Result<Self> {
        let (taus, values) = r.points.iter().map(|p| (p.tau, p.value)).unzip();
        EigenCurve::new(taus, values, r.rank)
    }
}

/// A result document with a schema version.
pub trait Document: Serialize + DeserializeOwned {}

/// Eigenvalue curves of one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub n_assets: usize,
    pub base_scale_minutes: f64,
    pub kind: MatrixKind,
    pub curves: Vec<EigenCurve>,
}

impl Document for CurveSet {}

/// Fits keyed by eigenvalue rank, with per-rank failures kept apart.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitSet {
    pub fits: BTreeMap<usize, FitResult>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub failures: BTreeMap<usize, String>,
}

impl Document for FitSet {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpectrum {
    pub scale: u64,
    #[serde(flatten)]
    pub spectrum: Spectrum,
}

/// Full spectra at several scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSet {
    pub kind: MatrixKind,
    pub spectra: Vec<ScaleSpectrum>,
}

impl Document for SpectrumSet {}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema: u32,
    #[serde(flatten)]
    body: &'a T,
}

/// Serializes a document with its schema field.
pub fn results_to_string<D: Document>(doc: &D) -> Result<String> {
    let env = Envelope {
        schema: SCHEMA_VERSION,
        body: doc,
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::Json {
        path: "<memory>".into(),
        source: e,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn results_from_str<D: Document>(text: &str) -> Result<D> {
    parse_results(text, Path::new("<memory>"))
}

fn parse_results<D: Document>(text: &str, path: &Path) -> Result<D> {
    let json = |source| Error::Json {
        path: path.to_path_buf(),
        source,
    };
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(json)?;
    let schema = value
        .get("schema")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Header("results document has no \"schema\" field".into()))?;
    if schema != SCHEMA_VERSION as u64 {
        return Err(Error::Schema(schema.min(u32::MAX as u64) as u32));
    }
    if let Some(map) = value.as_object_mut() {
        map.remove("schema");
    }
    serde_json::from_value(value).map_err(json)
}

pub fn save_results<D: Document>(doc: &D, path: impl AsRef<Path>) -> Result<()> {
    let text = results_to_string(doc)?;
    write_atomic(path.as_ref(), |w| w.write_all(text.as_bytes()))
}

pub fn load_results<D: Document>(path: impl AsRef<Path>) -> Result<D> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&text, path)
}
