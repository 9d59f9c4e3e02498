//! `#`-commented CSV output.

use std::fmt::Write as _;

/// Shortest decimal that parses back to the same `f64`. Plain notation for
/// magnitudes in `[1e-5, 1e16)`, scientific otherwise.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub trailer: Vec<String>,
}

impl CsvTable {
    pub fn new(comments: Vec<String>, columns: &[&str]) -> Self {
        Self {
            comments,
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
            trailer: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| format_f64(*v)).collect());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let mut body = ::csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        for record in std::iter::once(&self.columns).chain(&self.rows) {
            body.write_record(record).expect("writing to memory cannot fail");
        }
        let bytes = body.into_inner().expect("writing to memory cannot fail");
        out.push_str(std::str::from_utf8(&bytes).expect("fields are UTF-8"));
        for c in &self.trailer {
            let _ = writeln!(out, "# {c}");
        }
        out
    }
}

/// A parsed table: header names and rows of raw fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedCsv {
    pub fn parse(text: &str) -> Result<Self, ::csv::Error> {
        let comments = text.lines().filter_map(|l| l.strip_prefix('#')).map(|c| c.trim_start().to_owned()).collect();
        let mut reader = ::csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(text.as_bytes());
        let columns = reader.headers()?.iter().map(str::to_owned).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { comments, columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows.iter().map(|r| r.get(i)?.parse().ok()).collect()
    }
}
