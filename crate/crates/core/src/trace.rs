//! Per-iteration records shared by the ORACLE loop and the MGA baselines.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::regions::{Halfspace, InnerApprox, OuterApprox, Provenance};

pub const TRACE_HEADER: [&str; 12] = [
    "iter",
    "method",
    "d_IO",
    "bound",
    "trial_feasible",
    "cuts_added",
    "inner_m",
    "outer_k",
    "t_step2_ms",
    "t_step3_ms",
    "t_step4_ms",
    "cum_ms",
];

/// One pass of a loop. The distance is measured on the regions as they stood at the start of
/// the pass (`inner_m` points, `outer_k` cuts), before that pass refines them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub method: String,
    pub d_io: Option<f64>,
    /// MILP dual bound; `None` for uncertified estimates.
    pub bound: Option<f64>,
    pub trial_feasible: Option<bool>,
    pub cuts_added: usize,
    pub inner_m: usize,
    pub outer_k: usize,
    pub t_step2_ms: f64,
    pub t_step3_ms: f64,
    pub t_step4_ms: f64,
    pub cum_ms: f64,
    #[serde(skip)]
    pub trial: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutRecord {
    pub iteration: usize,
    pub kind: Provenance,
    pub halfspace: Halfspace,
    /// Point the cut was generated against, when there is one.
    pub trial: Option<Vec<f64>>,
    /// Near-optimal point the cut passes through.
    pub anchor: Vec<f64>,
    /// `normalᵀtrial − offset`.
    pub separation: Option<f64>,
    /// False when the region already implied it.
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct ExplorationResult {
    pub method: String,
    pub inner: InnerApprox,
    pub outer: OuterApprox,
    pub trace: Vec<IterationRecord>,
    pub cuts: Vec<CutRecord>,
    pub converged: bool,
    /// Last measured distance, if any.
    pub final_d: Option<f64>,
    pub final_bound: Option<f64>,
}

impl ExplorationResult {
    /// Regions as they stood when trace row `row` was measured.
    pub fn regions_at(&self, row: usize) -> (InnerApprox, OuterApprox) {
        let rec = &self.trace[row];
        (self.inner.prefix(rec.inner_m), self.outer.prefix(rec.outer_k))
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(records: &[IterationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.method.clone(),
            opt(&r.d_io),
            opt(&r.bound),
            opt(&r.trial_feasible),
            r.cuts_added.to_string(),
            r.inner_m.to_string(),
            r.outer_k.to_string(),
            r.t_step2_ms.to_string(),
            r.t_step3_ms.to_string(),
            r.t_step4_ms.to_string(),
            r.cum_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).unwrap_or("").trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("trace column {}: bad value `{raw}`: {e}", TRACE_HEADER[i])))
}

fn required<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field(rec, i)?.ok_or_else(|| Error::InvalidArgument(format!("trace column {} is empty", TRACE_HEADER[i])))
}

/// Reads a trace written by [`write_trace_csv`]. Trial points are not stored and come back empty.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<IterationRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(TRACE_HEADER) {
        return Err(Error::InvalidArgument(format!("trace header must be {}", TRACE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(IterationRecord {
            iter: required(&rec, 0)?,
            method: required(&rec, 1)?,
            d_io: field(&rec, 2)?,
            bound: field(&rec, 3)?,
            trial_feasible: field(&rec, 4)?,
            cuts_added: required(&rec, 5)?,
            inner_m: required(&rec, 6)?,
            outer_k: required(&rec, 7)?,
            t_step2_ms: required(&rec, 8)?,
            t_step3_ms: required(&rec, 9)?,
            t_step4_ms: required(&rec, 10)?,
            cum_ms: required(&rec, 11)?,
            trial: None,
        });
    }
    Ok(out)
}

/// Wall-clock stopwatch that reads zero when disabled, so repeated runs write identical traces.
pub(crate) struct Clock {
    enabled: bool,
    start: std::time::Instant,
}

impl Clock {
    pub(crate) fn new(enabled: bool) -> Self {
        Self {
            enabled,
            start: std::time::Instant::now(),
        }
    }

    /// Milliseconds since the previous lap.
    pub(crate) fn lap(&mut self) -> f64 {
        let now = std::time::Instant::now();
        let ms = now.duration_since(self.start).as_secs_f64() * 1e3;
        self.start = now;
        if self.enabled {
            ms
        } else {
            0.0
        }
    }
}
