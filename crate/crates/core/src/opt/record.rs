use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Method, OptConfig, Stage};
use crate::error::{Error, Result};
use crate::sim::PolicyVector;

/// One line of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub method: Method,
    pub epoch: usize,
    /// Batch-mean total cost at the point where the gradient was taken.
    pub objective: f64,
    /// `objective + lambda * |point|_1`.
    pub regularized: f64,
    /// Positive levels after the update.
    pub nonzero: usize,
    pub step: f64,
    pub base_step: f64,
    /// Replication `r` of this epoch used seed `derive_seed(seed_block, r)`.
    pub seed_block: u64,
    /// Iterate after the update.
    pub policy: Vec<f64>,
    /// FISTA extrapolation point for the next epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    EpochCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRunRecord {
    pub method: Method,
    pub stage: Stage,
    pub seed: u64,
    pub lambda: f64,
    /// Includes the termination rule that was applied.
    pub config: OptConfig,
    pub epochs: Vec<EpochRecord>,
    pub final_policy: PolicyVector,
    pub stop: StopReason,
}

pub trait EpochSink {
    fn record(&mut self, epoch: &EpochRecord) -> Result<()>;
}

impl EpochSink for () {
    fn record(&mut self, _: &EpochRecord) -> Result<()> {
        Ok(())
    }
}

/// Writes one JSON object per epoch and flushes after each line, so an
/// interrupted run leaves a log that [`read_epoch_log`] can resume from.
pub struct JsonLinesSink<W: Write> {
    out: W,
}

impl<W: Write> JsonLinesSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> EpochSink for JsonLinesSink<W> {
    fn record(&mut self, epoch: &EpochRecord) -> Result<()> {
        let line = serde_json::to_string(epoch).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Parses an epoch log. A final line cut off mid-write is dropped; any other
/// malformed line is an error.
pub fn read_epoch_log(text: &str) -> Result<Vec<EpochRecord>> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (k, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(rec) => out.push(rec),
            Err(_) if k + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(e) => return Err(Error::InvalidConfig(format!("epoch log line {}: {e}", k + 1))),
        }
    }
    Ok(out)
}
