//! File formats for fitted artifacts, written atomically.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::inference::VariationalPosterior;
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::training::{FittedModel, IterRecord, TrainTrace};

use super::density::DensityGrid;
use super::format::fmt_real;

/// Version written into and required from model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT_NAME: &str = "catlgp-model";

/// Writes through `write` into a temporary file next to `path`, then renames
/// it into place, so a failure never leaves a partial file at `path`.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::MalformedCsv {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_real(s: &str, line: u64) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::MalformedCsv {
        line,
        message: format!("not a number: '{s}'"),
    })
}

/// Latent means and variances read back from an embeddings file.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub ids: Vec<usize>,
    pub means: Matrix<f64>,
    pub vars: Matrix<f64>,
    pub labels: Option<Vec<String>>,
}

/// CSV with columns `id, m_1..m_Q, s2_1..s2_Q` and an optional `label`.
pub fn write_embeddings<T: Scalar, W: Write>(
    writer: W,
    post: &VariationalPosterior<T>,
    labels: Option<&[String]>,
) -> Result<()> {
    let (n, q) = (post.n_obs(), post.latent_dim());
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: l.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=q).map(|j| format!("m_{j}")));
    header.extend((1..=q).map(|j| format!("s2_{j}")));
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..n {
        let mut row = vec![i.to_string()];
        row.extend((0..q).map(|j| fmt_real(post.x_means[(i, j)])));
        row.extend((0..q).map(|j| fmt_real(post.x_var(i, j))));
        if let Some(l) = labels {
            row.push(l[i].clone());
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(reader: R) -> Result<Embeddings> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(csv_io)?.clone();
    let has_label = header.iter().next_back() == Some("label");
    let numeric = header.len() - 1 - usize::from(has_label);
    if header.is_empty() || &header[0] != "id" || numeric % 2 != 0 || numeric == 0 {
        return Err(Error::MalformedCsv {
            line: 1,
            message: "expected header id,m_1..m_Q,s2_1..s2_Q[,label]".into(),
        });
    }
    let q = numeric / 2;
    let (mut ids, mut means, mut vars, mut labels) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_io)?;
        let line = rec.position().map_or(0, |p| p.line());
        ids.push(rec[0].parse().map_err(|_| Error::MalformedCsv {
            line,
            message: format!("bad id '{}'", &rec[0]),
        })?);
        for j in 0..q {
            means.push(parse_real(&rec[1 + j], line)?);
            vars.push(parse_real(&rec[1 + q + j], line)?);
        }
        if has_label {
            labels.push(rec[1 + 2 * q].to_string());
        }
    }
    let n = ids.len();
    Ok(Embeddings {
        ids,
        means: Matrix::from_vec(n, q, means)?,
        vars: Matrix::from_vec(n, q, vars)?,
        labels: has_label.then_some(labels),
    })
}

pub fn export_embeddings<T: Scalar>(
    post: &VariationalPosterior<T>,
    labels: Option<&[String]>,
    path: &Path,
) -> Result<()> {
    write_atomic(path, |w| write_embeddings(w, post, labels))
}

/// One JSON object per line, one line per iteration.
pub fn write_trace<T: Serialize, W: Write>(mut writer: W, trace: &TrainTrace<T>) -> Result<()> {
    for r in &trace.records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<IterRecord<T>>> {
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn export_trace<T: Serialize>(trace: &TrainTrace<T>, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_trace(w, trace))
}

/// `#`-prefixed metadata lines, then a CSV of cell centers and densities.
pub fn write_density<W: Write>(mut writer: W, grid: &DensityGrid) -> Result<()> {
    writeln!(writer, "# dims={},{}", grid.dims.0, grid.dims.1)?;
    writeln!(
        writer,
        "# x_range={},{}",
        fmt_real(grid.x_range.0),
        fmt_real(grid.x_range.1)
    )?;
    writeln!(
        writer,
        "# y_range={},{}",
        fmt_real(grid.y_range.0),
        fmt_real(grid.y_range.1)
    )?;
    writeln!(writer, "# resolution={},{}", grid.nx, grid.ny)?;
    writeln!(writer, "# cell_area={}", fmt_real(grid.cell_area()))?;
    writeln!(writer, "x,y,density")?;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (cx, cy) = grid.cell_center(ix, iy);
            writeln!(
                writer,
                "{},{},{}",
                fmt_real(cx),
                fmt_real(cy),
                fmt_real(grid.value(ix, iy))
            )?;
        }
    }
    Ok(())
}

pub fn read_density<R: Read>(reader: R) -> Result<DensityGrid> {
    let mut meta = std::collections::HashMap::new();
    let mut values = Vec::new();
    let mut header_seen = false;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        let bad = |message: String| Error::MalformedCsv { line: lineno, message };
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| bad("metadata line without '='".into()))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        } else if !header_seen {
            if line.trim() != "x,y,density" {
                return Err(bad("expected header x,y,density".into()));
            }
            header_seen = true;
        } else if !line.trim().is_empty() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", cols.len())));
            }
            values.push(parse_real(cols[2], lineno)?);
        }
    }
    let pair = |key: &str| -> Result<(String, String)> {
        let v = meta.get(key).ok_or_else(|| Error::MalformedCsv {
            line: 0,
            message: format!("missing metadata '{key}'"),
        })?;
        let (a, b) = v.split_once(',').ok_or_else(|| Error::MalformedCsv {
            line: 0,
            message: format!("metadata '{key}' needs two values"),
        })?;
        Ok((a.to_string(), b.to_string()))
    };
    let int = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::MalformedCsv {
            line: 0,
            message: format!("not an integer: '{s}'"),
        })
    };
    let (d0, d1) = pair("dims")?;
    let (x0, x1) = pair("x_range")?;
    let (y0, y1) = pair("y_range")?;
    let (nx, ny) = pair("resolution")?;
    let grid = DensityGrid {
        dims: (int(&d0)?, int(&d1)?),
        x_range: (parse_real(&x0, 0)?, parse_real(&x1, 0)?),
        y_range: (parse_real(&y0, 0)?, parse_real(&y1, 0)?),
        nx: int(&nx)?,
        ny: int(&ny)?,
        values,
    };
    if grid.values.len() != grid.nx * grid.ny {
        return Err(Error::DimensionMismatch {
            expected: grid.nx * grid.ny,
            found: grid.values.len(),
        });
    }
    Ok(grid)
}

pub fn export_density(grid: &DensityGrid, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_density(w, grid))
}

#[derive(Serialize)]
struct ModelFileRef<'a, T> {
    format: &'a str,
    version: u32,
    model: &'a FittedModel<T>,
}

#[derive(Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
struct ModelFile<T> {
    model: FittedModel<T>,
}

/// JSON container tagged with a format name and version.
pub fn write_model<T: Scalar + Serialize, W: Write>(writer: W, model: &FittedModel<T>) -> Result<()> {
    let file = ModelFileRef {
        format: MODEL_FORMAT_NAME,
        version: MODEL_FORMAT_VERSION,
        model,
    };
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

/// Fails with [`Error::UnsupportedVersion`] unless the file carries the
/// current version.
pub fn read_model<T: Scalar + DeserializeOwned, R: Read>(reader: R) -> Result<FittedModel<T>> {
    let value: serde_json::Value = serde_json::from_reader(reader)?;
    let header: ModelHeader = serde_json::from_value(value.clone())?;
    if header.format != MODEL_FORMAT_NAME {
        return Err(Error::InvalidDataset(format!(
            "not a model file (format '{}')",
            header.format
        )));
    }
    if header.version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: header.version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile<T> = serde_json::from_value(value)?;
    file.model.posterior.check_shapes(
        &file
            .model
            .posterior
            .u_means
            .iter()
            .map(Matrix::rows)
            .collect::<Vec<_>>(),
    )?;
    Ok(file.model)
}

pub fn save_model<T: Scalar + Serialize>(model: &FittedModel<T>, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_model(w, model))
}

pub fn load_model<T: Scalar + DeserializeOwned>(path: &Path) -> Result<FittedModel<T>> {
    read_model(BufReader::new(std::fs::File::open(path)?))
}
