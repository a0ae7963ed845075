//! CSV loading and storing of relations.
//!
//! The first record holds attribute names. Every later record is a row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::relation::{Relation, Schema, Value};

/// Reads a relation from CSV text.
pub fn read_relation<R: Read>(reader: R) -> std::result::Result<Relation, ReadError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(ReadError::Format("missing header line".into()));
    }
    let schema = Schema::new(&header).map_err(ReadError::Core)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() && schema.len() != 1 {
            continue;
        }
        rows.push(rec.iter().map(Value::new).collect());
    }
    Relation::new(schema, rows).map_err(ReadError::Core)
}

/// Failure while reading CSV text, before a path is attached.
#[derive(Debug)]
pub enum ReadError {
    Csv(csv::Error),
    Format(String),
    Core(Error),
}

impl From<csv::Error> for ReadError {
    fn from(e: csv::Error) -> Self {
        ReadError::Csv(e)
    }
}

impl ReadError {
    fn at(self, path: &Path) -> Error {
        match self {
            ReadError::Csv(source) => Error::Csv {
                path: path.to_path_buf(),
                source,
            },
            ReadError::Format(m) => Error::CsvFormat(format!("{}: {m}", path.display())),
            ReadError::Core(e) => e,
        }
    }
}

/// Loads a relation from a CSV file.
pub fn load_relation(path: impl AsRef<Path>) -> Result<Relation> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    read_relation(file).map_err(|e| e.at(path))
}

/// Writes a relation as CSV, header first, rows in stored order.
pub fn write_relation<W: Write>(rel: &Relation, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let wrap = |source| Error::Csv {
        path: "<output>".into(),
        source,
    };
    w.write_record(rel.attrs()).map_err(wrap)?;
    for row in rel.rows() {
        w.write_record(row.iter().map(Value::as_str)).map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))?;
    Ok(())
}

/// Stores a relation to a CSV file.
pub fn store_relation(rel: &Relation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    write_relation(rel, file)
}

/// Renders a relation as a CSV string.
pub fn to_csv_string(rel: &Relation) -> String {
    let mut buf = Vec::new();
    write_relation(rel, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("values are UTF-8")
}
