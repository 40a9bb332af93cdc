//! Metrics rows and their CSV form.
//!
//! One schema serves training and evaluation; fields that do not apply stay
//! empty. Floats are written with Rust's shortest-roundtrip formatting, so
//! identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

pub const CSV_HEADER: &str = "step,l_senone,l_domain,class_acc,domain_acc,probe_acc";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRow {
    pub step: u64,
    pub l_senone: Option<f64>,
    pub l_domain: Option<f64>,
    pub class_acc: Option<f64>,
    pub domain_acc: Option<f64>,
    pub probe_acc: Option<f64>,
}

fn push_field(line: &mut String, value: Option<f64>) {
    line.push(',');
    if let Some(v) = value {
        write!(line, "{v}").expect("string write");
    }
}

fn parse_field(text: &str, what: &str) -> Result<Option<f64>> {
    if text.is_empty() {
        return Ok(None);
    }
    text.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Input(format!("metrics field {what}: bad float {text:?}")))
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        let mut line = self.step.to_string();
        push_field(&mut line, self.l_senone);
        push_field(&mut line, self.l_domain);
        push_field(&mut line, self.class_acc);
        push_field(&mut line, self.domain_acc);
        push_field(&mut line, self.probe_acc);
        line
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Input(format!(
                "metrics row has {} fields, expected 6: {line:?}",
                fields.len()
            )));
        }
        Ok(MetricsRow {
            step: fields[0]
                .parse()
                .map_err(|_| Error::Input(format!("bad step field {:?}", fields[0])))?,
            l_senone: parse_field(fields[1], "l_senone")?,
            l_domain: parse_field(fields[2], "l_domain")?,
            class_acc: parse_field(fields[3], "class_acc")?,
            domain_acc: parse_field(fields[4], "domain_acc")?,
            probe_acc: parse_field(fields[5], "probe_acc")?,
        })
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>, line: &str| -> Result<()> {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))
    };
    write(&mut out, CSV_HEADER)?;
    for row in rows {
        write(&mut out, &row.to_csv_line())?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Appends one row, writing the header first if the file does not exist yet.
pub fn append_metrics_row(path: &Path, row: &MetricsRow) -> Result<()> {
    let fresh = !path.exists();
    let file = File::options()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    if fresh {
        writeln!(out, "{CSV_HEADER}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(out, "{}", row.to_csv_line()).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => {
            return Err(Error::Input(format!(
                "metrics file {path:?} has unexpected header {other:?}"
            )))
        }
    }
    lines.map(MetricsRow::from_csv_line).collect()
}
