//! Mean-function bases.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};

/// Regression basis `h(x)` for the process mean.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trend {
    /// No mean term at all (q = 0).
    Zero,
    /// `h(x) = 1`.
    #[default]
    Constant,
    /// `h(x) = (1, x_1, ..., x_p)`.
    Linear,
    /// User-supplied basis values at the design points (n x q). Prediction
    /// then needs the matching basis values at the testing inputs.
    Explicit {
        #[serde(with = "crate::io::matrix_rows")]
        matrix: DMatrix<f64>,
    },
}

impl Trend {
    /// Parses `constant`, `linear` or `zero`; `file:` trends are resolved by the CLI.
    pub fn parse_builtin(name: &str) -> Result<Self> {
        match name {
            "constant" => Ok(Trend::Constant),
            "linear" => Ok(Trend::Linear),
            "zero" => Ok(Trend::Zero),
            other => Err(GaspError::InvalidArgument(format!(
                "unknown trend '{other}' (expected constant, linear, zero or file:<path>)"
            ))),
        }
    }

    /// Number of basis functions for inputs of dimension `p`.
    pub fn num_basis(&self, p: usize) -> usize {
        match self {
            Trend::Zero => 0,
            Trend::Constant => 1,
            Trend::Linear => p + 1,
            Trend::Explicit { matrix } => matrix.ncols(),
        }
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self, Trend::Explicit { .. })
    }

    /// Basis matrix at the design points, checking that `q < n`.
    pub fn design_basis(&self, design: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = design.nrows();
        let h = match self {
            Trend::Explicit { matrix } => {
                if matrix.nrows() != n {
                    return Err(GaspError::DimensionMismatch {
                        what: "trend matrix rows",
                        expected: n,
                        found: matrix.nrows(),
                    });
                }
                matrix.clone()
            }
            _ => self.builtin_basis(design),
        };
        if h.ncols() >= n {
            return Err(GaspError::DegreesOfFreedom { n, q: h.ncols() });
        }
        Ok(h)
    }

    /// Basis matrix at testing inputs. Explicit trends require `testing_trend`;
    /// for built-in trends a supplied matrix is checked and used as given.
    pub fn eval_basis(
        &self,
        points: &DMatrix<f64>,
        testing_trend: Option<&DMatrix<f64>>,
    ) -> Result<DMatrix<f64>> {
        let q = self.num_basis(points.ncols());
        match (self, testing_trend) {
            (Trend::Explicit { .. }, None) => Err(GaspError::MissingTrend),
            (_, Some(m)) => {
                if m.nrows() != points.nrows() {
                    return Err(GaspError::DimensionMismatch {
                        what: "testing trend rows",
                        expected: points.nrows(),
                        found: m.nrows(),
                    });
                }
                if m.ncols() != q {
                    return Err(GaspError::DimensionMismatch {
                        what: "testing trend columns",
                        expected: q,
                        found: m.ncols(),
                    });
                }
                Ok(m.clone())
            }
            (_, None) => Ok(self.builtin_basis(points)),
        }
    }

    fn builtin_basis(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, p) = points.shape();
        match self {
            Trend::Zero => DMatrix::zeros(m, 0),
            Trend::Constant => DMatrix::from_element(m, 1, 1.0),
            Trend::Linear => DMatrix::from_fn(m, p + 1, |i, j| if j == 0 { 1.0 } else { points[(i, j - 1)] }),
            Trend::Explicit { .. } => unreachable!("explicit trends carry their own matrix"),
        }
    }
}
