//! JSON-lines trace output, one object per pruning decision.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SearchReport, StrategyKind, TraceEvent};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    pub query_id: String,
    pub strategy: StrategyKind,
    /// Factors as `p/q`.
    pub mu: String,
    pub eta: String,
    pub k: usize,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_trace<W: Write + ?Sized>(out: &mut W, report: &SearchReport) -> std::io::Result<()> {
    for &event in &report.events {
        let line = TraceLine {
            query_id: report.query_id.clone(),
            strategy: report.strategy,
            mu: report.mu.to_string(),
            eta: report.eta.to_string(),
            k: report.k,
            event,
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a trace; blank lines are skipped.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceLine>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(parsed);
    }
    Ok(out)
}
