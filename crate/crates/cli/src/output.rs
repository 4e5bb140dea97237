//! Rendering shared by every subcommand: tables that print as CSV or JSON,
//! floats at a configurable precision, exact rationals always as "p/q".

use arclab_core::exact::{rat_to_string, Rat};
use serde_json::{json, Value};

/// Report layout version stamped into every JSON payload.
pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug)]
pub enum Cell {
    UInt(u128),
    Float(f64),
    Text(String),
    Rational(Rat),
    Empty,
}

impl Cell {
    fn csv(&self, precision: usize) -> String {
        match self {
            Cell::UInt(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.precision$e}"),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::Rational(r) => rat_to_string(r),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            // Counts wider than u64 keep exactness as strings.
            Cell::UInt(v) => match u64::try_from(*v) {
                Ok(small) => json!(small),
                Err(_) => json!(v.to_string()),
            },
            Cell::Float(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Rational(r) => json!(rat_to_string(r)),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: &[&'static str]) -> Self {
        Self {
            headers: headers.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, precision: usize) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|c| c.csv(precision)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json_rows(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: serde_json::Map<String, Value> = self
                    .headers
                    .iter()
                    .zip(row)
                    .map(|(h, c)| (h.to_string(), c.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        json!(rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// What a subcommand hands back for printing.
pub enum Rendered {
    Table(Table),
    /// JSON payload plus a plain-text alternative for `--format csv`
    /// consumers of non-tabular output.
    Object { json: Value, text: String },
}

impl Rendered {
    pub fn print(&self, command: &str, format: Format, precision: usize) {
        match (self, format) {
            (Rendered::Table(t), Format::Csv) => print!("{}", t.to_csv(precision)),
            (Rendered::Table(t), Format::Json) => {
                let wrapped = json!({
                    "schema": SCHEMA,
                    "command": command,
                    "rows": t.to_json_rows(),
                });
                println!("{}", serde_json::to_string_pretty(&wrapped).expect("json"));
            }
            (Rendered::Object { text, .. }, Format::Csv) => println!("{text}"),
            (Rendered::Object { json: value, .. }, Format::Json) => {
                let wrapped = json!({
                    "schema": SCHEMA,
                    "command": command,
                    "data": value,
                });
                println!("{}", serde_json::to_string_pretty(&wrapped).expect("json"));
            }
        }
    }
}

/// FNV-1a over the raw bytes; stable across platforms and releases so
/// provenance hashes are comparable between runs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
