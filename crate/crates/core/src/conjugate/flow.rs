//! Jumps of the Morse index of `T` across detected instants.

use serde::{Deserialize, Serialize};

use super::Detection;
use crate::error::{Error, Result};
use crate::linalg::spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowJump {
    pub t: f64,
    pub window: usize,
    pub delta: f64,
    pub index_before: usize,
    pub index_at: usize,
    pub index_after: usize,
    pub kernel_dim: usize,
    /// `index(t − δ) − index(t + δ)`.
    pub jump: i64,
    pub multiplicity: usize,
}

impl FlowJump {
    pub fn consistent(&self) -> bool {
        self.jump == self.kernel_dim as i64
            && self.kernel_dim == self.multiplicity
            && self.index_after == self.index_at
            && self.index_before == self.index_at + self.kernel_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseFlow {
    pub jumps: Vec<FlowJump>,
    /// `(t, window, index of T(t))` at every node.
    pub profile: Vec<(f64, usize, usize)>,
}

impl MorseFlow {
    pub fn violations(&self) -> usize {
        self.jumps.iter().filter(|j| !j.consistent()).count()
    }
}

fn negative_count(ev: &[f64], tol: f64) -> usize {
    ev.iter().filter(|&&l| l < -tol).count()
}

/// Index jumps across every instant of `det`, evaluated in the chart of the
/// instant's window.
pub fn morse_flow(det: &Detection) -> Result<MorseFlow> {
    let chain = &det.chain;
    let tol = chain.tolerance();
    let grid = chain.grid();
    let (a, b) = (grid.a(), grid.b());
    let times = det.report.times();
    let mut jumps = Vec::with_capacity(times.len());
    for (k, inst) in det.report.instants.iter().enumerate() {
        let mut nn = f64::INFINITY;
        if k > 0 {
            nn = nn.min(inst.t - times[k - 1]);
        }
        if k + 1 < times.len() {
            nn = nn.min(times[k + 1] - inst.t);
        }
        let mut delta = (10.0 * grid.step()).min(0.45 * nn).min(inst.t - a);
        let at_end = b - inst.t < 1e-12;
        if !at_end {
            delta = delta.min(b - inst.t);
        }
        let w = inst.window;
        let at = spectrum(&chain.value(w, inst.t)?)?;
        let kernel_dim = at.iter().filter(|l| l.abs() <= tol.kernel_tol).count();
        let (before, after) = loop {
            let probe = || -> Result<(usize, usize)> {
                let lo = spectrum(&chain.value(w, inst.t - delta)?)?;
                let hi = if at_end {
                    // past the end the index has dropped by the kernel
                    negative_count(&at, tol.kernel_tol)
                } else {
                    negative_count(&spectrum(&chain.value(w, inst.t + delta)?)?, 0.0)
                };
                Ok((negative_count(&lo, 0.0), hi))
            };
            match probe() {
                Ok(r) => break r,
                Err(Error::ChartDomain { .. }) if delta > 1e-9 => delta *= 0.5,
                Err(e) => return Err(e),
            }
        };
        jumps.push(FlowJump {
            t: inst.t,
            window: w,
            delta,
            index_before: before,
            index_at: negative_count(&at, tol.kernel_tol),
            index_after: after,
            kernel_dim,
            jump: before as i64 - after as i64,
            multiplicity: inst.multiplicity,
        });
    }
    let mut profile = Vec::new();
    for (w, win) in chain.windows().iter().enumerate() {
        for (i, node) in (win.lo..=win.hi).enumerate() {
            profile.push((grid.node(node), w, negative_count(&win.eigenvalues[i], tol.kernel_tol)));
        }
    }
    Ok(MorseFlow { jumps, profile })
}

/// Every instant is isolated at radius `2h`: no other instant within `2h`
/// and `T` is nonsingular at `t ± d` for `d` from `2h` down to `1e-7`.
pub fn isolation_check(det: &Detection) -> Result<bool> {
    let chain = &det.chain;
    let tol = chain.tolerance();
    let grid = chain.grid();
    let radius = 2.0 * grid.step();
    let times = det.report.times();
    for pair in times.windows(2) {
        if pair[1] - pair[0] < radius {
            return Ok(false);
        }
    }
    for inst in &det.report.instants {
        let mut d = radius;
        while d >= 1e-7 {
            for s in [inst.t - d, inst.t + d] {
                if s <= grid.a() || s > grid.b() {
                    continue;
                }
                let ev = match chain.value(inst.window, s) {
                    Ok(v) => spectrum(&v)?,
                    Err(Error::ChartDomain { .. }) => continue,
                    Err(e) => return Err(e),
                };
                if ev.iter().any(|l| l.abs() < tol.kernel_tol) {
                    return Ok(false);
                }
            }
            d *= 0.5;
        }
    }
    Ok(true)
}
