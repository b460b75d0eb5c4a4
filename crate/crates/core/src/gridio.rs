//! Persistence for sampled grids and traces.
//!
//! The binary layout is a flat little-endian `f64` array in `<stem>.bin`
//! described by a JSON header in `<stem>.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::TraceRecord;
use crate::phasespace::{GridSpec, PhaseSpaceGrid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHeader {
    pub schema_version: u32,
    /// `"wigner_grid"` or `"trace"`.
    pub kind: String,
    pub dtype: String,
    pub byte_order: String,
    /// Row-major shape of the array.
    pub shape: Vec<usize>,
    /// Meaning of the last axis, when it indexes named columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

impl BinaryHeader {
    pub fn new(kind: &str, shape: Vec<usize>) -> Self {
        BinaryHeader {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            dtype: "f64".to_string(),
            byte_order: "little".to_string(),
            shape,
            columns: Vec::new(),
            grid: None,
            meta: serde_json::Value::Null,
        }
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut name = stem.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

/// Writes `<stem>.bin` and `<stem>.json`; returns the two paths.
pub fn write_binary(
    stem: &Path,
    header: &BinaryHeader,
    data: &[f64],
) -> Result<(PathBuf, PathBuf)> {
    if header.len() != data.len() {
        return Err(Error::Contract(format!(
            "header shape {:?} holds {} values, data has {}",
            header.shape,
            header.len(),
            data.len()
        )));
    }
    let bin = with_extension(stem, "bin");
    let json = with_extension(stem, "json");
    let mut out = BufWriter::new(File::create(&bin).map_err(|e| Error::io(&bin, e))?);
    for v in data {
        out.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(&bin, e))?;
    }
    out.flush().map_err(|e| Error::io(&bin, e))?;
    let text = serde_json::to_string_pretty(header)?;
    std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    Ok((bin, json))
}

pub fn read_binary(stem: &Path) -> Result<(BinaryHeader, Vec<f64>)> {
    let json = with_extension(stem, "json");
    let bin = with_extension(stem, "bin");
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let header: BinaryHeader = serde_json::from_str(&text)?;
    if header.dtype != "f64" || header.byte_order != "little" {
        return Err(Error::validation(
            "header",
            format!(
                "unsupported layout {} / {}",
                header.dtype, header.byte_order
            ),
        ));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(&bin).map_err(|e| Error::io(&bin, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != 8 * header.len() {
        return Err(Error::validation(
            "header",
            format!(
                "{} holds {} bytes, shape {:?} needs {}",
                bin.display(),
                bytes.len(),
                header.shape,
                8 * header.len()
            ),
        ));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, data))
}

pub fn write_grid(stem: &Path, grid: &PhaseSpaceGrid) -> Result<(PathBuf, PathBuf)> {
    let mut header = BinaryHeader::new("wigner_grid", vec![grid.spec.n_q, grid.spec.n_p]);
    header.grid = Some(grid.spec);
    write_binary(stem, &header, &grid.values)
}

pub fn read_grid(stem: &Path) -> Result<PhaseSpaceGrid> {
    let (header, values) = read_binary(stem)?;
    let spec = header
        .grid
        .ok_or_else(|| Error::validation("header", "missing grid description"))?;
    if header.shape != [spec.n_q, spec.n_p] {
        return Err(Error::validation(
            "header",
            "shape disagrees with grid description",
        ));
    }
    Ok(PhaseSpaceGrid { spec, values })
}

/// Trace as an `n × 3` array with columns `t, q, p`.
pub fn write_trace(stem: &Path, trace: &TraceRecord) -> Result<(PathBuf, PathBuf)> {
    let mut header = BinaryHeader::new("trace", vec![trace.len(), 3]);
    header.columns = vec!["t".into(), "q".into(), "p".into()];
    header.meta = serde_json::json!({ "index": trace.index, "dt": trace.dt });
    let data: Vec<f64> = (0..trace.len())
        .flat_map(|k| [trace.times[k], trace.q_samples[k], trace.p_samples[k]])
        .collect();
    write_binary(stem, &header, &data)
}

pub fn read_trace(stem: &Path) -> Result<TraceRecord> {
    let (header, data) = read_binary(stem)?;
    if header.kind != "trace" || header.shape.len() != 2 || header.shape[1] != 3 {
        return Err(Error::validation(
            "header",
            format!(
                "not a trace: kind {}, shape {:?}",
                header.kind, header.shape
            ),
        ));
    }
    let field = |name: &str| header.meta.get(name).cloned().unwrap_or_default();
    let dt = field("dt")
        .as_f64()
        .ok_or_else(|| Error::validation("header", "missing dt"))?;
    let index = field("index").as_u64().unwrap_or(0) as usize;
    let column = |c: usize| data.iter().skip(c).step_by(3).copied().collect();
    Ok(TraceRecord {
        index,
        dt,
        times: column(0),
        q_samples: column(1),
        p_samples: column(2),
    })
}

/// One row per grid point with columns `q,p,w`.
pub fn write_grid_csv(path: &Path, grid: &PhaseSpaceGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["q", "p", "w"])?;
    let s = &grid.spec;
    for i in 0..s.n_q {
        for j in 0..s.n_p {
            w.write_record([s.q(i), s.p(j), grid.at(i, j)].map(|v| format!("{v:e}")))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
