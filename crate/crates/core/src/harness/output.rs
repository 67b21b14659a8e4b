//! CSV writers. Floats use Rust's shortest round-trip formatting, rows end in `\n`.

use std::fs;
use std::path::Path;

use csv::{Terminator, Writer, WriterBuilder};

use super::experiment::{ReplicateOutcome, SummaryRow};
use crate::analysis::TradeoffPoint;
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 7] = ["replicate", "t", "alpha_t", "n_present", "loss", "dist_sq", "grad_norm_sq"];
pub const SUMMARY_HEADER: [&str; 5] = ["t", "mean_loss", "stderr_loss", "mean_dist_sq", "stderr_dist_sq"];
pub const TRADEOFF_HEADER: [&str; 5] = ["sigma_sq", "epsilon_nats", "alpha", "u", "bound"];
pub const COMPARISON_HEADER: [&str; 4] = ["noise_sigma_sq", "method", "seed", "final_loss"];

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) struct CsvFile<'a> {
    path: &'a Path,
    w: Writer<fs::File>,
}

impl<'a> CsvFile<'a> {
    pub(crate) fn create(path: &'a Path, header: &[&str]) -> Result<Self> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(file);
        let mut f = CsvFile { path, w };
        f.row(header.iter().copied())?;
        Ok(f)
    }

    pub(crate) fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| Error::Csv {
            path: self.path.to_owned(),
            source: e,
        })
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(self.path, e))
    }
}

/// One row per (replicate, t), sorted by replicate then t.
pub fn write_trace_csv(path: &Path, replicates: &[ReplicateOutcome]) -> Result<()> {
    let mut f = CsvFile::create(path, &TRACE_HEADER)?;
    let mut sorted: Vec<&ReplicateOutcome> = replicates.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    for r in sorted {
        for rec in &r.trace.records {
            f.row([
                r.replicate.to_string(),
                rec.t.to_string(),
                rec.alpha_t.to_string(),
                rec.n_present.to_string(),
                rec.loss.to_string(),
                rec.dist_sq.to_string(),
                rec.grad_norm_sq.to_string(),
            ])?;
        }
    }
    f.finish()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut f = CsvFile::create(path, &SUMMARY_HEADER)?;
    for r in rows {
        f.row([
            r.t.to_string(),
            r.mean_loss.to_string(),
            r.stderr_loss.to_string(),
            r.mean_dist_sq.to_string(),
            r.stderr_dist_sq.to_string(),
        ])?;
    }
    f.finish()
}

pub fn write_tradeoff_csv(path: &Path, points: &[TradeoffPoint]) -> Result<()> {
    let mut f = CsvFile::create(path, &TRADEOFF_HEADER)?;
    for p in points {
        f.row([
            p.sigma_sq.to_string(),
            p.epsilon.to_string(),
            p.alpha.to_string(),
            p.u.to_string(),
            p.bound.to_string(),
        ])?;
    }
    f.finish()
}
