//! JSON reports and CSV tables, to a file or standard output.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};
use spinstab_core::verify::{CheckReport, Table};

use crate::CliError;

/// Floats with 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_error(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    match path {
        Some(p) => CliError::Usage(format!("cannot write {}: {e}", p.display())),
        None => CliError::Usage(format!("cannot write to stdout: {e}")),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| io_error(Some(p), e))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn report_json(report: &CheckReport) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    let obj = v.as_object_mut().expect("report is an object");
    let name = obj.remove("name").unwrap_or(Value::Null);
    obj.remove("primary");
    obj.insert("check".into(), name);
    obj.insert("primary_comparison".into(), json!(report.primary.name));
    obj.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    v
}

pub fn write_json(path: Option<&Path>, value: &Value) -> Result<(), CliError> {
    let mut out = sink(path)?;
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    writeln!(out, "{text}").map_err(|e| io_error(path, e))
}

pub fn write_csv(path: Option<&Path>, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// The report's table, or its comparisons when it has none.
pub fn report_csv(path: Option<&Path>, report: &CheckReport) -> Result<(), CliError> {
    match &report.table {
        Some(Table { columns, rows }) => {
            let header: Vec<&str> = columns.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|&x| float(x)).collect()).collect();
            write_csv(path, &header, &rows)
        }
        None => {
            let rows: Vec<Vec<String>> = std::iter::once(&report.primary)
                .chain(&report.subchecks)
                .map(|c| {
                    vec![
                        c.name.clone(),
                        float(c.lhs.mean),
                        float(c.lhs.stderr),
                        float(c.rhs.mean),
                        float(c.rhs.stderr),
                        float(c.discrepancy),
                        float(c.tolerance),
                        c.verdict.as_str().to_string(),
                        c.asserted.to_string(),
                    ]
                })
                .collect();
            write_csv(
                path,
                &[
                    "comparison",
                    "lhs_mean",
                    "lhs_stderr",
                    "rhs_mean",
                    "rhs_stderr",
                    "discrepancy",
                    "tolerance",
                    "verdict",
                    "asserted",
                ],
                &rows,
            )
        }
    }
}
