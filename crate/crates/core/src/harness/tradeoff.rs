use std::path::{Path, PathBuf};

use super::config::TradeoffConfig;
use super::output::{ensure_dir, write_tradeoff_csv};
use crate::analysis::{log_grid, tradeoff_curve, CurvePolicy, TradeoffPoint};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffCurves {
    pub adaptive: Vec<TradeoffPoint>,
    /// One curve per entry of `fixed_alphas`, in order.
    pub fixed: Vec<(f64, Vec<TradeoffPoint>)>,
}

pub fn tradeoff_curves(cfg: &TradeoffConfig) -> Result<TradeoffCurves> {
    let base = cfg.bound_inputs();
    let grid = log_grid(cfg.sigma_sq_min, cfg.sigma_sq_max, cfg.points)?;
    let adaptive = tradeoff_curve(&base, &grid, CurvePolicy::Adaptive)?;
    let fixed = cfg
        .fixed_alphas
        .iter()
        .map(|&a| Ok((a, tradeoff_curve(&base, &grid, CurvePolicy::Fixed(a))?)))
        .collect::<Result<_>>()?;
    Ok(TradeoffCurves { adaptive, fixed })
}

/// Writes `tradeoff_adaptive.csv` and one `tradeoff_fixed_<alpha>.csv` per fixed weight.
pub fn write_tradeoff(dir: &Path, curves: &TradeoffCurves) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::with_capacity(1 + curves.fixed.len());
    let path = dir.join("tradeoff_adaptive.csv");
    write_tradeoff_csv(&path, &curves.adaptive)?;
    written.push(path);
    for (alpha, points) in &curves.fixed {
        let path = dir.join(format!("tradeoff_fixed_{alpha}.csv"));
        write_tradeoff_csv(&path, points)?;
        written.push(path);
    }
    Ok(written)
}
