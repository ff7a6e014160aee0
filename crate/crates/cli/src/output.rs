use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    /// An infinite quantity such as the SNR at `t = 0`. JSON `null`, CSV `inf`.
    Unbounded,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Unbounded => "inf".into(),
        }
    }

    fn human(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.6e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Unbounded => "inf".into(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Unbounded => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// One object per row.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let obj: Map<String, Value> = self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8")
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::human).collect()).collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|j| cells.iter().map(|r| r[j].len()).chain([self.columns[j].len()]).max().unwrap_or(0))
            .collect();
        let line = |items: &[String]| {
            let padded: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.columns);
        for r in &cells {
            out.push_str(&line(r));
        }
        out
    }
}

/// A command's output: the full JSON document and, where the command is
/// tabular, the table that CSV and text formats print.
pub struct Report {
    pub json: Value,
    pub table: Option<Table>,
}

impl Report {
    pub fn json(json: Value) -> Self {
        Self { json, table: None }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).expect("JSON value serializes");
                s.push('\n');
                s
            }
            Format::Csv => self.table_or_flat().to_csv(),
            Format::Table => self.table_or_flat().to_text(),
        }
    }

    /// The table, or the scalar top-level fields of the JSON as one row.
    fn table_or_flat(&self) -> Table {
        if let Some(t) = &self.table {
            return t.clone();
        }
        let mut columns = Vec::new();
        let mut row = Vec::new();
        if let Value::Object(map) = &self.json {
            for (k, v) in map {
                let cell = match v {
                    Value::Number(n) => match n.as_u64() {
                        Some(i) => Cell::Int(i),
                        None => Cell::Num(n.as_f64().unwrap_or(f64::NAN)),
                    },
                    Value::String(s) => Cell::Text(s.clone()),
                    Value::Bool(b) => Cell::Text(b.to_string()),
                    Value::Null => Cell::Text(String::new()),
                    _ => continue,
                };
                columns.push(k.clone());
                row.push(cell);
            }
        }
        Table {
            columns,
            rows: vec![row],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        let mut t = Table::new(&["t", "snr"]);
        t.push(vec![Cell::Num(0.0), Cell::Unbounded]);
        t.push(vec![Cell::Num(0.5), Cell::Num(2.0)]);
        assert_eq!(t.to_csv(), "t,snr\n0.0000000000000000e0,inf\n5.0000000000000000e-1,2.0000000000000000e0\n");
        assert_eq!(t.to_json()[0]["snr"], Value::Null);
        assert!(t.to_text().lines().count() == 3);
    }

    #[test]
    fn flat_csv_from_object() {
        let r = Report::json(serde_json::json!({"a": 1, "b": 0.5, "nested": {"x": 1}}));
        assert_eq!(r.render(Format::Csv), "a,b\n1,5.0000000000000000e-1\n");
    }
}
