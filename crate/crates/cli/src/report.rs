//! Tabular reports with typed cells and lossless CSV/JSON forms.
//!
//! Numbers carry six significant digits and are stored already rounded, so
//! `parse(emit(report)) == report` for both formats. In CSV a number always
//! has a decimal point or an exponent, a count never does, and a list is
//! written `[a b c]`.

use std::fmt;
use std::io::Write;

use serde_json::{json, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Empty,
    Count(u64),
    Number(f64),
    Text(String),
    List(Vec<f64>),
}

impl Cell {
    /// Rounds to six significant digits; non-finite values become `Empty`.
    pub fn number(x: f64) -> Cell {
        if x.is_finite() {
            Cell::Number(round_sig(x))
        } else {
            Cell::Empty
        }
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    pub fn list(values: &[f64]) -> Cell {
        Cell::List(values.iter().map(|&x| round_sig(x)).collect())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Number(x) => Some(x),
            Cell::Count(c) => Some(c as f64),
            _ => None,
        }
    }

    fn parse_csv(s: &str) -> Result<Cell, ReportError> {
        if s.is_empty() {
            return Ok(Cell::Empty);
        }
        if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            return inner
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|e| ReportError(format!("list item {x:?}: {e}"))))
                .collect::<Result<_, _>>()
                .map(Cell::List);
        }
        if s.bytes().all(|b| b.is_ascii_digit()) {
            return s.parse().map(Cell::Count).map_err(|e| ReportError(format!("{s:?}: {e}")));
        }
        match s.parse::<f64>() {
            Ok(x) => Ok(Cell::Number(x)),
            Err(_) => Ok(Cell::Text(s.to_string())),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Empty => Value::Null,
            Cell::Count(c) => json!(c),
            Cell::Number(x) => json!(x),
            Cell::Text(s) => json!(s),
            Cell::List(v) => json!(v),
        }
    }

    fn from_json(v: &Value) -> Result<Cell, ReportError> {
        Ok(match v {
            Value::Null => Cell::Empty,
            Value::String(s) => Cell::Text(s.clone()),
            Value::Number(n) => match n.as_u64() {
                Some(c) => Cell::Count(c),
                None => Cell::Number(n.as_f64().ok_or_else(|| ReportError(format!("number {n}")))?),
            },
            Value::Array(items) => Cell::List(
                items
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| ReportError(format!("list item {x}"))))
                    .collect::<Result<_, _>>()?,
            ),
            other => return Err(ReportError(format!("unexpected cell {other}"))),
        })
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Empty => Ok(()),
            Cell::Count(c) => write!(f, "{c}"),
            Cell::Number(x) => f.write_str(&format_sig(*x)),
            Cell::Text(s) => f.write_str(s),
            Cell::List(v) => {
                let items: Vec<String> = v.iter().map(|&x| format_sig(x)).collect();
                write!(f, "[{}]", items.join(" "))
            }
        }
    }
}

/// Six significant digits, fixed notation for exponents -4..=4 and
/// scientific otherwise.
pub fn format_sig(x: f64) -> String {
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if x != 0.0 && !(-4..=4).contains(&exp) {
        return sci;
    }
    let decimals = (5 - exp).max(1) as usize;
    format!("{x:.decimals$}")
}

pub fn round_sig(x: f64) -> f64 {
    format_sig(x).parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("malformed report: {0}")]
pub struct ReportError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    /// Versioned schema tag, written in every CSV row.
    pub schema: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new(schema: impl Into<String>) -> Self {
        Self {
            schema: schema.into(),
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Appends a row of named cells. The first row fixes the columns; later
    /// rows must name the same columns in the same order.
    pub fn push(&mut self, row: Vec<(String, Cell)>) {
        if self.rows.is_empty() && self.columns.is_empty() {
            self.columns = row.iter().map(|(name, _)| name.clone()).collect();
        }
        assert!(
            row.len() == self.columns.len() && row.iter().zip(&self.columns).all(|((a, _), b)| a == b),
            "row columns differ from the report header"
        );
        self.rows.push(row.into_iter().map(|(_, c)| c).collect());
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, name: &str) -> Option<&Cell> {
        self.rows.get(row)?.get(self.column(name)?)
    }

    pub fn number(&self, row: usize, name: &str) -> Option<f64> {
        self.cell(row, name)?.as_f64()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("schema").chain(self.columns.iter().map(String::as_str));
        w.write_record(header).expect("in-memory write");
        for row in &self.rows {
            let fields = std::iter::once(self.schema.clone()).chain(row.iter().map(Cell::to_string));
            w.write_record(fields).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| ReportError(e.to_string()))?.clone();
        if header.get(0) != Some("schema") {
            return Err(ReportError("first column must be `schema`".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut schema = None;
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| ReportError(e.to_string()))?;
            let tag = record.get(0).unwrap_or_default();
            match &schema {
                None => schema = Some(tag.to_string()),
                Some(s) if s != tag => return Err(ReportError(format!("mixed schemas {s} and {tag}"))),
                Some(_) => {}
            }
            rows.push(record.iter().skip(1).map(Cell::parse_csv).collect::<Result<_, _>>()?);
        }
        Ok(Self {
            schema: schema.ok_or_else(|| ReportError("no rows".into()))?,
            columns,
            rows,
        })
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::to_json).collect()))
            .collect();
        let doc = json!({ "schema": self.schema, "columns": self.columns, "rows": rows });
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| ReportError(e.to_string()))?;
        let field = |k: &str| doc.get(k).ok_or_else(|| ReportError(format!("missing {k}")));
        let schema = field("schema")?.as_str().ok_or_else(|| ReportError("schema".into()))?.to_string();
        let columns = field("columns")?
            .as_array()
            .ok_or_else(|| ReportError("columns".into()))?
            .iter()
            .map(|c| c.as_str().map(str::to_string).ok_or_else(|| ReportError("column name".into())))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = field("rows")?
            .as_array()
            .ok_or_else(|| ReportError("rows".into()))?
            .iter()
            .map(|r| {
                let cells = r.as_array().ok_or_else(|| ReportError("row".into()))?;
                if cells.len() != columns.len() {
                    return Err(ReportError(format!("row has {} cells for {} columns", cells.len(), columns.len())));
                }
                cells.iter().map(Cell::from_json).collect()
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { schema, columns, rows })
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn write_to(&self, format: Format, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(self.render(format).as_bytes())?;
        out.flush()
    }
}
