//! Detection over a family of finite truncations.

use rayon::prelude::*;
use serde::Serialize;

use super::{analyze, ConjugateReport, DetectOptions, PathSource};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NearZeroCount {
    pub t: f64,
    pub eps: f64,
    /// `#{|λ(T_N(t))| < ε}`.
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeCount {
    /// Truncation size.
    pub size: usize,
    pub report: ConjugateReport,
    pub near_zero: Vec<NearZeroCount>,
    /// Distance between the last two instants.
    pub last_gap: Option<f64>,
}

impl ProbeCount {
    pub fn count(&self, t: f64, eps: f64) -> Option<usize> {
        self.near_zero
            .iter()
            .find(|c| c.t == t && c.eps == eps)
            .map(|c| c.count)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationStudy {
    pub dims: Vec<usize>,
    pub probes: Vec<f64>,
    pub eps: Vec<f64>,
    pub runs: Vec<ProbeCount>,
    /// Least-squares slope of `log(last_gap)` against `log(N)`; observed,
    /// not asserted.
    pub gap_exponent: Option<f64>,
}

/// Slope of the least-squares line through `(x, y)`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pts
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs the detector on `family(N)` for every `N` in `dims`, in parallel,
/// and counts near-zero eigenvalues of `T_N` at each probe for each `ε`.
pub fn truncation_study<F>(
    family: F,
    dims: &[usize],
    grid: TimeGrid,
    probes: &[f64],
    eps: &[f64],
    opts: &DetectOptions,
) -> Result<TruncationStudy>
where
    F: Fn(usize) -> Result<PathSource> + Sync,
{
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "truncation dims must be strictly increasing".into(),
        ));
    }
    let runs = dims
        .par_iter()
        .map(|&size| {
            let det = analyze(family(size)?, grid, opts)?;
            let mut near_zero = Vec::with_capacity(probes.len() * eps.len());
            for &t in probes {
                let ev = spectrum(&det.chain.value(det.chain.window_of(t), t)?)?;
                for &e in eps {
                    near_zero.push(NearZeroCount {
                        t,
                        eps: e,
                        count: ev.iter().filter(|l| l.abs() < e).count(),
                    });
                }
            }
            let times = det.report.times();
            let last_gap = match times.len() {
                0 | 1 => None,
                k => Some(times[k - 1] - times[k - 2]),
            };
            Ok(ProbeCount {
                size,
                report: det.report,
                near_zero,
                last_gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = runs
        .iter()
        .filter_map(|r| r.last_gap.map(|g| (r.size as f64, g)))
        .collect();
    Ok(TruncationStudy {
        dims: dims.to_vec(),
        probes: probes.to_vec(),
        eps: eps.to_vec(),
        gap_exponent: loglog_slope(&pts),
        runs,
    })
}
