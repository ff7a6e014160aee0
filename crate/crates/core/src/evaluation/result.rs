use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::spec::ExperimentKind;
use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "noise-sched";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of the result JSON and CSV layouts.
pub const RESULT_FORMAT_VERSION: u32 = 1;

/// CSV columns, in order. `wall_time` is JSON-only so CSV output is reproducible.
pub const CSV_COLUMNS: [&str; 11] = [
    "value",
    "label",
    "init_error",
    "disc_proxy",
    "kl",
    "bound",
    "margin",
    "variational_bound",
    "estimate",
    "stderr",
    "reference",
];

/// One sweep point. Fields that do not apply to an experiment kind are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_proxy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variational_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    pub wall_time: f64,
}

impl Record {
    fn numeric_fields(&self) -> [(&'static str, Option<f64>); 10] {
        [
            ("value", Some(self.value)),
            ("init_error", self.init_error),
            ("disc_proxy", self.disc_proxy),
            ("kl", self.kl),
            ("bound", self.bound),
            ("margin", self.margin),
            ("variational_bound", self.variational_bound),
            ("estimate", self.estimate),
            ("stderr", self.stderr),
            ("reference", self.reference),
        ]
    }

    fn csv_row(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let mut row = vec![num(Some(self.value)), self.label.clone().unwrap_or_default()];
        row.extend(self.numeric_fields()[1..].iter().map(|(_, v)| num(*v)));
        row
    }
}

/// A named property asserted by the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub format_version: u32,
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Sweep values, one per record.
    pub grid: Vec<f64>,
    pub target: Value,
    /// Schedule JSON per record, or `null` where a record has no schedule of its own.
    pub schedules: Vec<Value>,
    /// The normalized spec with defaults filled in.
    pub spec: Value,
    /// Bounds are reported with unit absolute constants.
    pub constants_policy: String,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentResult {
    pub metadata: Metadata,
    pub records: Vec<Record>,
    #[serde(default)]
    pub summary: BTreeMap<String, f64>,
    #[serde(default)]
    pub checks: Vec<PropertyCheck>,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExperimentResult {
    /// True when every asserted property holds.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Every numeric record field and summary value is finite.
    pub fn validate(&self) -> Result<()> {
        if self.records.len() != self.metadata.grid.len() {
            return Err(Error::validation("records", "record count differs from grid size"));
        }
        for (i, r) in self.records.iter().enumerate() {
            for (name, v) in r.numeric_fields() {
                if let Some(x) = v {
                    if !x.is_finite() {
                        return Err(Error::numeric("experiment", r.value, format!("records[{i}].{name} is not finite")));
                    }
                }
            }
        }
        for (k, v) in &self.summary {
            if !v.is_finite() {
                return Err(Error::numeric("experiment", f64::NAN, format!("summary.{k} is not finite")));
            }
        }
        Ok(())
    }

    /// Header plus one line per record; numbers carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.records {
            w.write_record(r.csv_row()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            detail: e.inner().to_string(),
        })
    }
}

pub fn export(result: &ExperimentResult, format: ExportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ExportFormat::Csv => result.to_csv(),
        ExportFormat::Json => result.to_json(),
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(records: Vec<Record>) -> ExperimentResult {
        ExperimentResult {
            metadata: Metadata {
                tool: TOOL_NAME.into(),
                version: TOOL_VERSION.into(),
                format_version: RESULT_FORMAT_VERSION,
                kind: ExperimentKind::UCurve,
                seed: 0,
                grid: records.iter().map(|r| r.value).collect(),
                target: Value::Null,
                schedules: vec![Value::Null; records.len()],
                spec: Value::Null,
                constants_policy: "unit".into(),
                notes: vec![],
            },
            records,
            summary: BTreeMap::new(),
            checks: vec![],
            flags: vec![],
        }
    }

    #[test]
    fn empty_result_is_header_only() {
        let csv = result(vec![]).to_csv();
        assert_eq!(csv, format!("{}\n", CSV_COLUMNS.join(",")));
    }

    #[test]
    fn csv_fields_line_up() {
        let recs = (0..20)
            .map(|i| Record {
                value: 0.1 * i as f64,
                label: (i % 3 == 0).then(|| format!("a,{i}")),
                kl: Some(1.0 / (i + 1) as f64),
                wall_time: 0.5,
                ..Default::default()
            })
            .collect();
        let text = result(recs).to_csv();
        assert!(text.ends_with('\n'));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(rdr.headers().unwrap().len(), CSV_COLUMNS.len());
        let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 20);
        assert!(rows.iter().all(|r| r.len() == CSV_COLUMNS.len()));
        assert_eq!(&rows[1][0], "1.0000000000000001e-1");
        assert_eq!(&rows[3][1], "a,3");
        assert!(!text.contains("wall_time"));
    }

    #[test]
    fn json_round_trip() {
        let r = result(vec![Record {
            value: 0.3,
            init_error: Some(1.0 / 3.0),
            wall_time: 1e-3,
            ..Default::default()
        }]);
        let text = r.to_json();
        assert!(text.ends_with('\n'));
        assert_eq!(ExperimentResult::from_json(&text).unwrap(), r);
    }
}
