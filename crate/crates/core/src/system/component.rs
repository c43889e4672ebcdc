//! Closed catalog of time-dependent block components.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cubic_stencil, cubic_weights};
use crate::linalg::symmetric_drift;

/// Row-major nested-array (de)serialization of dense matrices.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err("matrix must be non-empty".into());
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err("matrix rows must have equal length".into());
        }
        Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
            let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            all.iter().map(|r| from_rows(r).map_err(D::Error::custom)).collect()
        }
    }

    pub mod shared_list {
        use super::*;
        use std::sync::Arc;

        pub fn serialize<S: Serializer>(ms: &Arc<Vec<DMatrix<f64>>>, s: S) -> Result<S::Ok, S::Error> {
            super::list::serialize(ms.as_slice(), s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arc<Vec<DMatrix<f64>>>, D::Error> {
            super::list::deserialize(d).map(Arc::new)
        }
    }
}

/// Matrix values on a uniform grid `t0 + k·step`, interpolated by four-point
/// cubic Lagrange polynomials; nodes are reproduced exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tabulated {
    pub t0: f64,
    pub step: f64,
    #[serde(with = "rows::shared_list")]
    pub values: Arc<Vec<DMatrix<f64>>>,
}

impl PartialEq for Tabulated {
    fn eq(&self, other: &Self) -> bool {
        self.t0 == other.t0 && self.step == other.step && self.values == other.values
    }
}

impl Tabulated {
    pub fn new(t0: f64, step: f64, values: Vec<DMatrix<f64>>) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::InvalidGrid(
                "tabulated component needs at least four nodes".into(),
            ));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidGrid(format!("tabulated step {step} must be positive")));
        }
        Ok(Self {
            t0,
            step,
            values: Arc::new(values),
        })
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.values.len() - 1) as f64 * self.step
    }

    fn locate(&self, t: f64) -> Result<f64> {
        let x = (t - self.t0) / self.step;
        let last = (self.values.len() - 1) as f64;
        if x < -1e-9 || x > last + 1e-9 {
            return Err(Error::OutOfRange {
                t,
                a: self.t0,
                b: self.t_end(),
            });
        }
        Ok(x.clamp(0.0, last))
    }

    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let x = self.locate(t)?;
        let k = x.round();
        if (x - k).abs() <= 1e-9 {
            return Ok(self.values[k as usize].clone());
        }
        let (k0, xl) = cubic_stencil(x, self.values.len());
        let (w, _) = cubic_weights(xl);
        let mut m = &self.values[k0] * w[0];
        for i in 1..4 {
            m += &self.values[k0 + i] * w[i];
        }
        Ok(m)
    }

    /// Fourth-order node differences at nodes, interpolant derivative elsewhere.
    pub fn derivative(&self, t: f64) -> Result<DMatrix<f64>> {
        let x = self.locate(t)?;
        let k = x.round();
        let len = self.values.len();
        if (x - k).abs() <= 1e-9 && len >= 5 {
            let k = k as usize;
            let v = |i: usize| &self.values[i];
            let c = 1.0 / (12.0 * self.step);
            let d = if k >= 2 && k + 2 < len {
                v(k - 2) - v(k - 1) * 8.0 + v(k + 1) * 8.0 - v(k + 2)
            } else if k + 4 < len {
                v(k) * -25.0 + v(k + 1) * 48.0 - v(k + 2) * 36.0 + v(k + 3) * 16.0 - v(k + 4) * 3.0
            } else {
                v(k) * 25.0 - v(k - 1) * 48.0 + v(k - 2) * 36.0 - v(k - 3) * 16.0 + v(k - 4) * 3.0
            };
            return Ok(d * c);
        }
        let (k0, xl) = cubic_stencil(x, len);
        let (_, dw) = cubic_weights(xl);
        let mut m = &self.values[k0] * dw[0];
        for i in 1..4 {
            m += &self.values[k0 + i] * dw[i];
        }
        Ok(m / self.step)
    }
}

/// Time-dependent `n×n` block drawn from a closed, serializable catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Component {
    Zero,
    Identity,
    /// `value · I`.
    Scalar {
        value: f64,
    },
    Constant {
        #[serde(with = "rows")]
        matrix: DMatrix<f64>,
    },
    /// `Σ_k t^k M_k`.
    Polynomial {
        #[serde(with = "rows::list")]
        coefficients: Vec<DMatrix<f64>>,
    },
    /// `diag(offset + amplitude · sin(frequency · t + phase))`.
    DiagonalProfile {
        offset: Vec<f64>,
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        phase: Vec<f64>,
    },
    Tabulated(Tabulated),
}

impl Component {
    /// Checks shapes against `n` and, for `symmetric`, symmetry of every
    /// stored matrix.
    pub fn validate(&self, n: usize, symmetric: bool) -> Result<()> {
        let check = |m: &DMatrix<f64>| -> Result<()> {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: if m.nrows() != n { m.nrows() } else { m.ncols() },
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite component entry".into()));
            }
            if symmetric {
                let bound = 1e-12 * (1.0 + m.abs().max());
                let drift = symmetric_drift(m);
                if drift > bound {
                    return Err(Error::Asymmetric { drift, bound });
                }
            }
            Ok(())
        };
        match self {
            Component::Zero | Component::Identity => Ok(()),
            Component::Scalar { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("non-finite scalar component".into()))
                }
            }
            Component::Constant { matrix } => check(matrix),
            Component::Polynomial { coefficients } => {
                if coefficients.is_empty() {
                    return Err(Error::InvalidInput("polynomial needs at least one coefficient".into()));
                }
                coefficients.iter().try_for_each(check)
            }
            Component::DiagonalProfile {
                offset,
                amplitude,
                frequency,
                phase,
            } => {
                for v in [offset, amplitude, frequency, phase] {
                    if v.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            found: v.len(),
                        });
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidInput("non-finite diagonal profile".into()));
                    }
                }
                Ok(())
            }
            Component::Tabulated(tab) => tab.values.iter().try_for_each(check),
        }
    }

    pub fn eval(&self, n: usize, t: f64) -> Result<DMatrix<f64>> {
        Ok(match self {
            Component::Zero => DMatrix::zeros(n, n),
            Component::Identity => DMatrix::identity(n, n),
            Component::Scalar { value } => DMatrix::identity(n, n) * *value,
            Component::Constant { matrix } => matrix.clone(),
            Component::Polynomial { coefficients } => {
                let mut m = DMatrix::zeros(n, n);
                for c in coefficients.iter().rev() {
                    m = m * t + c;
                }
                m
            }
            Component::DiagonalProfile {
                offset,
                amplitude,
                frequency,
                phase,
            } => DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    offset[i] + amplitude[i] * (frequency[i] * t + phase[i]).sin()
                } else {
                    0.0
                }
            }),
            Component::Tabulated(tab) => tab.eval(t)?,
        })
    }

    /// Exact time derivative for analytic entries.
    pub fn derivative(&self, n: usize, t: f64) -> Result<DMatrix<f64>> {
        Ok(match self {
            Component::Zero | Component::Identity | Component::Scalar { .. } | Component::Constant { .. } => {
                DMatrix::zeros(n, n)
            }
            Component::Polynomial { coefficients } => {
                let mut m = DMatrix::zeros(n, n);
                for (k, c) in coefficients.iter().enumerate().skip(1).rev() {
                    m = m * t + c * k as f64;
                }
                m
            }
            Component::DiagonalProfile {
                amplitude,
                frequency,
                phase,
                ..
            } => DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    amplitude[i] * frequency[i] * (frequency[i] * t + phase[i]).cos()
                } else {
                    0.0
                }
            }),
            Component::Tabulated(tab) => tab.derivative(t)?,
        })
    }

    /// Catalog identifier.
    pub fn kind(&self) -> &'static str {
        match self {
            Component::Zero => "zero",
            Component::Identity => "identity",
            Component::Scalar { .. } => "scalar",
            Component::Constant { .. } => "constant",
            Component::Polynomial { .. } => "polynomial",
            Component::DiagonalProfile { .. } => "diagonal_profile",
            Component::Tabulated(_) => "tabulated",
        }
    }
}

/// Component identifiers with one-line descriptions.
pub const CATALOG: &[(&str, &str)] = &[
    ("zero", "the zero block"),
    ("identity", "the identity block"),
    ("scalar", "value * I"),
    ("constant", "a fixed matrix (row-major nested arrays)"),
    ("polynomial", "sum_k t^k M_k"),
    (
        "diagonal_profile",
        "diag(offset + amplitude * sin(frequency * t + phase))",
    ),
    ("tabulated", "matrices on a uniform grid with cubic interpolation"),
];
