//! Categorical CSV tables with a header row and per-variable label sets.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CategoricalDataset;

/// Cells treated as missing unless configured otherwise.
pub const DEFAULT_MISSING: [&str; 2] = ["", "NA"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    /// Category labels; the position of a label is its encoded index.
    pub labels: Vec<String>,
}

impl Variable {
    pub fn cardinality(&self) -> usize {
        self.labels.len()
    }
}

/// Names and category labels of every variable of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub variables: Vec<Variable>,
}

impl Schema {
    /// Checks that names are unique, labels are unique within each variable
    /// and every variable has at least two labels.
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for v in &variables {
            if !names.insert(v.name.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate variable name '{}'", v.name)));
            }
            if v.labels.len() < 2 {
                return Err(Error::SingletonVariable(v.name.clone()));
            }
            let distinct: BTreeSet<&str> = v.labels.iter().map(String::as_str).collect();
            if distinct.len() != v.labels.len() {
                return Err(Error::InvalidDataset(format!(
                    "duplicate label in variable '{}'",
                    v.name
                )));
            }
        }
        Ok(Self { variables })
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::cardinality).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }
}

/// Parses a categorical table. Labels are sorted lexicographically per
/// column to form the schema, so the encoding does not depend on row order.
pub fn read_table<R: Read>(reader: R, missing: &[&str]) -> Result<(Schema, CategoricalDataset)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::EmptyFile),
        Some(r) => r.map_err(csv_error)?,
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let width = names.len();
    let mut cells: Vec<Vec<Option<String>>> = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::MalformedCsv {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        cells.push(
            rec.iter()
                .map(|c| (!missing.contains(&c)).then(|| c.to_string()))
                .collect(),
        );
    }
    if cells.is_empty() {
        return Err(Error::EmptyFile);
    }

    let mut variables = Vec::with_capacity(width);
    let mut lookup: Vec<HashMap<&str, usize>> = Vec::with_capacity(width);
    for (d, name) in names.iter().enumerate() {
        let labels: BTreeSet<&str> = cells.iter().filter_map(|row| row[d].as_deref()).collect();
        if labels.len() < 2 {
            return Err(Error::SingletonVariable(name.clone()));
        }
        lookup.push(labels.iter().enumerate().map(|(i, l)| (*l, i)).collect());
        variables.push(Variable {
            name: name.clone(),
            labels: labels.into_iter().map(str::to_string).collect(),
        });
    }
    let schema = Schema::new(variables)?;
    let values = cells
        .iter()
        .flat_map(|row| row.iter().enumerate().map(|(d, c)| c.as_deref().map(|l| lookup[d][l])))
        .collect();
    let data = CategoricalDataset::new(schema.cardinalities(), values)?;
    Ok((schema, data))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::MalformedCsv {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn load_csv(path: &Path, missing: &[&str]) -> Result<(Schema, CategoricalDataset)> {
    read_table(std::fs::File::open(path)?, missing)
}

/// Writes `data` with labels from `schema`; missing cells become `missing_token`.
pub fn write_table<W: Write>(writer: W, schema: &Schema, data: &CategoricalDataset, missing_token: &str) -> Result<()> {
    if schema.cardinalities() != data.cardinalities() {
        return Err(Error::InvalidDataset(
            "schema does not match dataset cardinalities".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.names()).map_err(csv_error)?;
    for n in 0..data.n_obs() {
        let row = data
            .row(n)
            .iter()
            .zip(&schema.variables)
            .map(|(v, var)| v.map_or(missing_token, |k| var.labels[k].as_str()));
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
