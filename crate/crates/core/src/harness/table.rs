use std::io::Write;

use crate::error::{Error, Result};

/// Bumped whenever a mode's column set changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
    Empty,
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Num(x) if *x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) => format!("{x}"),
            Value::Num(x) => format!("{x:e}"),
            Value::Int(k) => k.to_string(),
            Value::Text(s) => s.clone(),
            Value::Flag(b) => b.to_string(),
            Value::Empty => String::new(),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Int(k) => Some(*k as f64),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<u64> for Value {
    fn from(k: u64) -> Self {
        Value::Int(k)
    }
}

impl From<usize> for Value {
    fn from(k: usize) -> Self {
        Value::Int(k as u64)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Flag(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<Option<f64>> for Value {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Value::Empty, Value::Num)
    }
}

/// Rows of one experiment, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub mode: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

/// `100·(baseline − variant)/baseline`; absent when the baseline is zero.
pub fn percent_improvement(baseline: f64, variant: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (baseline - variant) / baseline)
}

impl ResultTable {
    pub fn new(mode: &str, columns: &[&str]) -> Self {
        ResultTable {
            mode: mode.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// The cell at `row`, `name`.
    pub fn get(&self, row: usize, name: &str) -> Option<&Value> {
        self.rows.get(row)?.get(self.column(name)?)
    }

    /// Writes the versioned comment line, the header and the rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::config(format!("writing CSV: {e}"));
        let mut out = out;
        writeln!(out, "# smallcell-csv v{CSV_SCHEMA_VERSION} mode={}", self.mode)
            .map_err(|e| Error::config(format!("writing CSV: {e}")))?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::config(format!("writing CSV: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}
