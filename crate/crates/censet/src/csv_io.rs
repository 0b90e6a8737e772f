//! CSV ingestion and serialization for survival datasets.
//!
//! Input files need a header row; time and event column names are
//! configurable, the event column accepts `{0, 1}`, and malformed rows
//! abort with their line number. Categorical covariates are one-hot
//! encoded with levels frozen on the training file; levels unseen at
//! training time encode to all zeros.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::data::{DataError, Subject, SurvivalDataset};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: String, source: csv::Error },
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("{path}:{line}: cannot parse '{value}' in column '{column}' as a number")]
    BadNumber {
        path: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}:{line}: event column '{column}' must be 0 or 1, got '{value}'")]
    BadEvent {
        path: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: no data rows")]
    NoRows { path: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Column layout of a survival CSV.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub time_column: String,
    pub event_column: String,
    /// Optional subject-identifier column, carried through to outputs.
    pub id_column: Option<String>,
    /// Feature columns, in order; `None` uses every remaining column.
    pub feature_columns: Option<Vec<String>>,
    /// Subset of feature columns to one-hot encode.
    pub categorical_columns: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time_column: "time".to_string(),
            event_column: "event".to_string(),
            id_column: None,
            feature_columns: None,
            categorical_columns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
enum ColumnKind {
    Numeric,
    OneHot { levels: Vec<String> },
}

/// Feature encoding fitted on a training file and reapplied verbatim to
/// test files, so both sides share one covariate layout.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    columns: Vec<(String, ColumnKind)>,
}

impl FeatureEncoder {
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (name, kind) in &self.columns {
            match kind {
                ColumnKind::Numeric => names.push(name.clone()),
                ColumnKind::OneHot { levels } => {
                    for level in levels {
                        names.push(format!("{name}={level}"));
                    }
                }
            }
        }
        names
    }

    fn encode(
        &self,
        raw: &[String],
        path: &str,
        line: u64,
    ) -> Result<Vec<f64>, CsvError> {
        let mut out = Vec::new();
        for ((name, kind), value) in self.columns.iter().zip(raw) {
            match kind {
                ColumnKind::Numeric => {
                    let v: f64 = value.trim().parse().map_err(|_| CsvError::BadNumber {
                        path: path.to_string(),
                        line,
                        column: name.clone(),
                        value: value.clone(),
                    })?;
                    out.push(v);
                }
                ColumnKind::OneHot { levels } => {
                    for level in levels {
                        out.push(if value.trim() == level { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One parsed row of a prediction-target file. Time and event are optional:
/// files without outcome columns still yield covariates.
#[derive(Debug, Clone)]
pub struct TestRow {
    pub id: String,
    pub covariates: Vec<f64>,
    pub observed_time: Option<f64>,
    pub event: Option<bool>,
}

struct RawTable {
    headers: Vec<String>,
    rows: Vec<(u64, Vec<String>)>, // (line number, fields)
    path: String,
}

fn read_raw(path: &Path) -> Result<RawTable, CsvError> {
    let display = path.display().to_string();
    let mut content = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut content))
        .map_err(|source| CsvError::Io {
            path: display.clone(),
            source,
        })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(content.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| CsvError::Parse {
            path: display.clone(),
            source,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| CsvError::Parse {
            path: display.clone(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(CsvError::NoRows { path: display });
    }
    Ok(RawTable {
        headers,
        rows,
        path: display,
    })
}

fn column_index(table: &RawTable, name: &str) -> Result<usize, CsvError> {
    table
        .headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CsvError::MissingColumn {
            path: table.path.clone(),
            column: name.to_string(),
        })
}

struct ResolvedSchema {
    time_idx: usize,
    event_idx: usize,
    id_idx: Option<usize>,
    feature_idx: Vec<(String, usize)>,
}

fn resolve(table: &RawTable, schema: &CsvSchema) -> Result<ResolvedSchema, CsvError> {
    let time_idx = column_index(table, &schema.time_column)?;
    let event_idx = column_index(table, &schema.event_column)?;
    let id_idx = match &schema.id_column {
        Some(name) => Some(column_index(table, name)?),
        None => None,
    };
    let feature_idx = match &schema.feature_columns {
        Some(names) => names
            .iter()
            .map(|n| column_index(table, n).map(|i| (n.clone(), i)))
            .collect::<Result<Vec<_>, _>>()?,
        None => table
            .headers
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                *i != time_idx && *i != event_idx && Some(*i) != id_idx
            })
            .map(|(i, h)| (h.clone(), i))
            .collect(),
    };
    Ok(ResolvedSchema {
        time_idx,
        event_idx,
        id_idx,
        feature_idx,
    })
}

fn fit_encoder(table: &RawTable, resolved: &ResolvedSchema, schema: &CsvSchema) -> FeatureEncoder {
    let columns = resolved
        .feature_idx
        .iter()
        .map(|(name, idx)| {
            if schema.categorical_columns.iter().any(|c| c == name) {
                let mut levels: Vec<String> = table
                    .rows
                    .iter()
                    .map(|(_, fields)| fields[*idx].clone())
                    .collect();
                levels.sort();
                levels.dedup();
                (name.clone(), ColumnKind::OneHot { levels })
            } else {
                (name.clone(), ColumnKind::Numeric)
            }
        })
        .collect();
    FeatureEncoder { columns }
}

fn parse_time(value: &str, table_path: &str, line: u64, column: &str) -> Result<f64, CsvError> {
    value.trim().parse().map_err(|_| CsvError::BadNumber {
        path: table_path.to_string(),
        line,
        column: column.to_string(),
        value: value.to_string(),
    })
}

fn parse_event(value: &str, table_path: &str, line: u64, column: &str) -> Result<bool, CsvError> {
    match value.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CsvError::BadEvent {
            path: table_path.to_string(),
            line,
            column: column.to_string(),
            value: other.to_string(),
        }),
    }
}

/// Read a training file: fits the feature encoder on its rows and returns
/// the dataset, the encoder, and per-row subject ids.
pub fn read_training(
    path: &Path,
    schema: &CsvSchema,
) -> Result<(SurvivalDataset, FeatureEncoder, Vec<String>), CsvError> {
    let table = read_raw(path)?;
    let resolved = resolve(&table, schema)?;
    let encoder = fit_encoder(&table, &resolved, schema);
    let mut subjects = Vec::with_capacity(table.rows.len());
    let mut ids = Vec::with_capacity(table.rows.len());
    for (row_no, (line, fields)) in table.rows.iter().enumerate() {
        let time = parse_time(&fields[resolved.time_idx], &table.path, *line, &schema.time_column)?;
        let event = parse_event(
            &fields[resolved.event_idx],
            &table.path,
            *line,
            &schema.event_column,
        )?;
        let raw: Vec<String> = resolved
            .feature_idx
            .iter()
            .map(|(_, i)| fields[*i].clone())
            .collect();
        let covariates = encoder.encode(&raw, &table.path, *line)?;
        subjects.push(Subject::new(covariates, time, event));
        ids.push(match resolved.id_idx {
            Some(i) => fields[i].clone(),
            None => row_no.to_string(),
        });
    }
    let dataset = SurvivalDataset::new(subjects, encoder.feature_names())?;
    Ok((dataset, encoder, ids))
}

/// Read a test file with a frozen encoder. Time and event columns are used
/// when present but not required.
pub fn read_test(
    path: &Path,
    schema: &CsvSchema,
    encoder: &FeatureEncoder,
) -> Result<Vec<TestRow>, CsvError> {
    let table = read_raw(path)?;
    let time_idx = table.headers.iter().position(|h| h == &schema.time_column);
    let event_idx = table.headers.iter().position(|h| h == &schema.event_column);
    let id_idx = match &schema.id_column {
        Some(name) => Some(column_index(&table, name)?),
        None => None,
    };
    // every encoder feature column must resolve in the test header
    let feature_idx: Vec<usize> = encoder
        .columns
        .iter()
        .map(|(name, _)| column_index(&table, name))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (row_no, (line, fields)) in table.rows.iter().enumerate() {
        let raw: Vec<String> = feature_idx.iter().map(|&i| fields[i].clone()).collect();
        let covariates = encoder.encode(&raw, &table.path, *line)?;
        let observed_time = match time_idx {
            Some(i) => Some(parse_time(&fields[i], &table.path, *line, &schema.time_column)?),
            None => None,
        };
        let event = match event_idx {
            Some(i) => Some(parse_event(&fields[i], &table.path, *line, &schema.event_column)?),
            None => None,
        };
        rows.push(TestRow {
            id: match id_idx {
                Some(i) => fields[i].clone(),
                None => row_no.to_string(),
            },
            covariates,
            observed_time,
            event,
        });
    }
    Ok(rows)
}

/// Serialize a dataset back to CSV with `time,event` followed by the
/// feature columns. Floats print in shortest round-trip form, so a
/// load/save/load cycle reproduces identical records.
pub fn write_dataset<W: Write>(mut w: W, dataset: &SurvivalDataset) -> std::io::Result<()> {
    write!(w, "time,event")?;
    for name in dataset.feature_names() {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for s in dataset.subjects() {
        write!(w, "{},{}", s.observed_time, u8::from(s.event))?;
        for v in &s.covariates {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
