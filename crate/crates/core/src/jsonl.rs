//! JSON-lines files whose first line may be a `{"header": ...}` object.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const HEADER_KEY: &str = "header";

pub struct JsonlWriter<W: Write> {
    out: W,
}

impl JsonlWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }

    /// Opens for appending; used when resuming an interrupted run.
    pub fn append(path: &Path) -> io::Result<Self> {
        let file = std::fs::OpenOptions::new().append(true).open(path)?;
        Ok(Self::new(BufWriter::new(file)))
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn header<T: Serialize>(&mut self, header: &T) -> io::Result<()> {
        let mut map = serde_json::Map::new();
        map.insert(HEADER_KEY.to_string(), serde_json::to_value(header)?);
        self.row(&Value::Object(map))
    }

    pub fn row<T: Serialize>(&mut self, row: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, row)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsonlFile<T> {
    pub header: Option<Value>,
    pub rows: Vec<T>,
}

fn is_header(v: &Value) -> Option<&Value> {
    match v {
        Value::Object(m) if m.len() == 1 => m.get(HEADER_KEY),
        _ => None,
    }
}

pub fn read_from<T: DeserializeOwned, R: BufRead>(reader: R) -> io::Result<JsonlFile<T>> {
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        if i == 0 {
            if let Some(h) = is_header(&value) {
                header = Some(h.clone());
                continue;
            }
        }
        rows.push(
            serde_json::from_value(value)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(JsonlFile { header, rows })
}

pub fn read<T: DeserializeOwned>(path: &Path) -> io::Result<JsonlFile<T>> {
    let file = File::open(path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_from(BufReader::new(file))
}
