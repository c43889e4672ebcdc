//! Uniform time grids, finite-difference stencils and grid interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when checking that a step divides a horizon.
const DIVISIBILITY_TOL: f64 = 1e-9;

/// Uniform grid `a = t_0 < … < t_N = b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    a: f64,
    b: f64,
    steps: usize,
}

impl TimeGrid {
    /// Requires `(b − a)/step` to be an integer up to a relative `1e-9`.
    pub fn new(a: f64, b: f64, step: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && step.is_finite()) {
            return Err(Error::InvalidGrid("non-finite grid parameter".into()));
        }
        if step <= 0.0 {
            return Err(Error::InvalidGrid(format!("step {step} must be positive")));
        }
        if b <= a {
            return Err(Error::InvalidGrid(format!("empty interval [{a}, {b}]")));
        }
        let ratio = (b - a) / step;
        let steps = ratio.round();
        if (ratio - steps).abs() > DIVISIBILITY_TOL * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::InvalidGrid(format!(
                "step {step} does not divide the horizon {}",
                b - a
            )));
        }
        Ok(Self {
            a,
            b,
            steps: steps as usize,
        })
    }

    pub fn with_steps(a: f64, b: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(b > a) {
            return Err(Error::InvalidGrid(format!("{steps} steps on [{a}, {b}]")));
        }
        Ok(Self { a, b, steps })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.b
        } else {
            self.a + k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Grid with every step split into `factor` substeps.
    pub fn refine(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            a: self.a,
            b: self.b,
            steps: self.steps * factor.max(1),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.a.abs().max(self.b.abs()));
        t >= self.a - slack && t <= self.b + slack
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                t,
                a: self.a,
                b: self.b,
            })
        }
    }

    /// Index of the node nearest to `t` (clamped).
    pub fn nearest(&self, t: f64) -> usize {
        let k = ((t - self.a) / self.step()).round();
        k.clamp(0.0, self.steps as f64) as usize
    }

    /// Index `k` with `t_k ≤ t < t_{k+1}` (clamped to the last interval).
    pub fn interval(&self, t: f64) -> usize {
        let k = ((t - self.a) / self.step()).floor();
        k.clamp(0.0, (self.steps - 1) as f64) as usize
    }

    /// Index of the node equal to `t` up to `1e-9` of a step, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.a) / self.step();
        let k = x.round();
        if (x - k).abs() <= 1e-9 && k >= 0.0 && k <= self.steps as f64 {
            Some(k as usize)
        } else {
            None
        }
    }
}

/// Fourth-order first derivative of `f` at `t` with step `h`, using a
/// central stencil when `[t − 2h, t + 2h] ⊆ [lo, hi]` and a one-sided stencil
/// otherwise.
pub fn derivative<T, F>(f: F, t: f64, h: f64, lo: f64, hi: f64) -> Result<T>
where
    F: Fn(f64) -> Result<T>,
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let slack = 1e-12 * (1.0 + t.abs());
    if t - 2.0 * h >= lo - slack && t + 2.0 * h <= hi + slack {
        let fm2 = f(t - 2.0 * h)?;
        let fm1 = f(t - h)?;
        let fp1 = f(t + h)?;
        let fp2 = f(t + 2.0 * h)?;
        Ok((fm2 * 1.0 + fm1 * -8.0 + fp1 * 8.0 + fp2 * -1.0) * (1.0 / (12.0 * h)))
    } else if t + 4.0 * h <= hi + slack {
        one_sided(&f, t, h)
    } else {
        one_sided(&f, t, -h)
    }
}

fn one_sided<T, F>(f: &F, t: f64, h: f64) -> Result<T>
where
    F: Fn(f64) -> Result<T>,
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let f0 = f(t)?;
    let f1 = f(t + h)?;
    let f2 = f(t + 2.0 * h)?;
    let f3 = f(t + 3.0 * h)?;
    let f4 = f(t + 4.0 * h)?;
    Ok((f0 * -25.0 + f1 * 48.0 + f2 * -36.0 + f3 * 16.0 + f4 * -3.0) * (1.0 / (12.0 * h)))
}

/// Fourth-order derivative of tabulated node values on a uniform grid.
pub fn node_derivatives<T>(values: &[T], h: f64) -> Vec<T>
where
    T: Clone + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = values.len();
    assert!(n >= 5, "need at least five nodes");
    let c = 1.0 / (12.0 * h);
    (0..n)
        .map(|k| {
            let v = |i: usize| values[i].clone();
            if k >= 2 && k + 2 < n {
                (v(k - 2) + v(k - 1) * -8.0 + v(k + 1) * 8.0 + v(k + 2) * -1.0) * c
            } else if k + 4 < n {
                (v(k) * -25.0 + v(k + 1) * 48.0 + v(k + 2) * -36.0 + v(k + 3) * 16.0 + v(k + 4) * -3.0) * c
            } else {
                (v(k) * 25.0 + v(k - 1) * -48.0 + v(k - 2) * 36.0 + v(k - 3) * -16.0 + v(k - 4) * 3.0) * c
            }
        })
        .collect()
}

/// Cubic Lagrange weights on the four nodes `k0..k0+4` for the local
/// coordinate `x = (t − t_{k0})/h`, plus their derivatives (per unit `x`).
pub fn cubic_weights(x: f64) -> ([f64; 4], [f64; 4]) {
    let nodes = [0.0, 1.0, 2.0, 3.0];
    let mut w = [0.0; 4];
    let mut dw = [0.0; 4];
    for i in 0..4 {
        let mut num = 1.0;
        let mut den = 1.0;
        for j in 0..4 {
            if j != i {
                num *= x - nodes[j];
                den *= nodes[i] - nodes[j];
            }
        }
        w[i] = num / den;
        let mut d = 0.0;
        for m in 0..4 {
            if m == i {
                continue;
            }
            let mut p = 1.0;
            for j in 0..4 {
                if j != i && j != m {
                    p *= x - nodes[j];
                }
            }
            d += p;
        }
        dw[i] = d / den;
    }
    (w, dw)
}

/// First node of the four-point stencil used to interpolate at local
/// position `x` on a grid of `len` nodes, and the stencil-relative position.
pub fn cubic_stencil(x: f64, len: usize) -> (usize, f64) {
    let k = x.floor();
    let k0 = (k - 1.0).clamp(0.0, (len.saturating_sub(4)) as f64) as usize;
    (k0, x - k0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_divisibility() {
        assert!(TimeGrid::new(0.0, 1.0, 1e-3).is_ok());
        assert_eq!(TimeGrid::new(0.0, 1.0, 1e-3).unwrap().steps(), 1000);
        assert!(TimeGrid::new(0.0, 1.0, 0.3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, -0.1).is_err());
        let g = TimeGrid::new(-0.5, 1.0, 0.25).unwrap();
        assert_eq!(g.nodes(), vec![-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.node_index(0.5), Some(4));
        assert_eq!(g.node_index(0.6), None);
    }

    #[test]
    fn derivative_stencils_are_fourth_order() {
        let f = |t: f64| Ok::<f64, Error>(t.powi(4) - 3.0 * t.powi(3) + t);
        let df = |t: f64| 4.0 * t.powi(3) - 9.0 * t * t + 1.0;
        for t in [0.0, 0.5, 1.0] {
            let d = derivative(f, t, 1e-2, 0.0, 1.0).unwrap();
            assert!((d - df(t)).abs() < 1e-9, "{t}: {d} vs {}", df(t));
        }
        let vals: Vec<f64> = (0..11).map(|k| (k as f64 * 0.1).powi(4)).collect();
        let d = node_derivatives(&vals, 0.1);
        for (k, v) in d.iter().enumerate() {
            assert!((v - 4.0 * (k as f64 * 0.1).powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let p = |t: f64| 2.0 * t.powi(3) - t + 0.5;
        let dp = |t: f64| 6.0 * t * t - 1.0;
        let vals: Vec<f64> = (0..10).map(|k| p(k as f64 * 0.2)).collect();
        for t in [0.0, 0.13, 0.9, 1.77, 1.8] {
            let (k0, x) = cubic_stencil(t / 0.2, vals.len());
            let (w, dw) = cubic_weights(x);
            let v: f64 = (0..4).map(|i| w[i] * vals[k0 + i]).sum();
            let d: f64 = (0..4).map(|i| dw[i] * vals[k0 + i]).sum::<f64>() / 0.2;
            assert!((v - p(t)).abs() < 1e-12);
            assert!((d - dp(t)).abs() < 1e-10);
        }
    }
}
