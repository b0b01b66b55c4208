//! Per-step throughput records and their CSV form.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::types::FlowId;

pub const CSV_HEADER: &str = "time_s,flow_id,generated_mbps,delivered_mbps,meter_mbps,action,priority_flag,epoch";

/// How the switch treated a flow during one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Meter,
    Drop,
    /// Explicit forward entry.
    Forward,
    /// No entry; default tables.
    Default,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Meter => "meter",
            Action::Drop => "drop",
            Action::Forward => "forward",
            Action::Default => "default",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sample for one active flow.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// End of the sampled interval.
    pub time_s: f64,
    pub flow_id: FlowId,
    pub generated_mbps: f64,
    pub delivered_mbps: f64,
    pub meter_mbps: Option<f64>,
    pub action: Action,
    pub priority: bool,
    pub epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportSummary {
    pub rows_written: usize,
}

/// Fixed-point rendering with at most six decimals and no exponent.
pub fn format_number(value: f64) -> String {
    let mut s = format!("{value:.6}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

fn write_row<W: Write>(out: &mut W, r: &MetricsRecord) -> io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        format_number(r.time_s),
        r.flow_id,
        format_number(r.generated_mbps),
        format_number(r.delivered_mbps),
        r.meter_mbps.map(format_number).unwrap_or_default(),
        r.action,
        u8::from(r.priority),
        r.epoch
    )
}

/// Writes the header and one row per record, in the order given.
pub fn write_csv<'a, W: Write>(
    records: impl IntoIterator<Item = &'a MetricsRecord>,
    out: W,
) -> io::Result<ExportSummary> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{CSV_HEADER}")?;
    let mut rows_written = 0;
    for record in records {
        write_row(&mut out, record)?;
        rows_written += 1;
    }
    out.flush()?;
    Ok(ExportSummary { rows_written })
}

pub fn export_csv<'a>(
    records: impl IntoIterator<Item = &'a MetricsRecord>,
    path: impl AsRef<Path>,
) -> io::Result<ExportSummary> {
    write_csv(records, File::create(path)?)
}
