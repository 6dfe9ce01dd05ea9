//! One-dimensional correlation families and their product composition.
//!
//! Every family is parameterized internally by the inverse range
//! `beta = 1 / gamma`. Correlations between two point sets are assembled in
//! log space (a sum of per-dimension log correlations) and exponentiated once,
//! so designs with many inputs do not underflow the product.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};

/// Default roughness exponent for the power exponential family.
pub const DEFAULT_ALPHA: f64 = 1.9;

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_5: f64 = 2.236_067_977_499_79;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern52,
    Matern32,
    PowerExponential,
}

impl KernelFamily {
    /// Parses the command-line names `matern_5_2`, `matern_3_2` and `pow_exp`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "matern_5_2" | "matern52" => Ok(KernelFamily::Matern52),
            "matern_3_2" | "matern32" => Ok(KernelFamily::Matern32),
            "pow_exp" | "power_exponential" => Ok(KernelFamily::PowerExponential),
            other => Err(GaspError::InvalidArgument(format!(
                "unknown kernel '{other}' (expected matern_5_2, matern_3_2 or pow_exp)"
            ))),
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            KernelFamily::Matern52 => "matern_5_2",
            KernelFamily::Matern32 => "matern_3_2",
            KernelFamily::PowerExponential => "pow_exp",
        }
    }

    /// `ln c(d)` for inverse range `beta`.
    #[inline]
    pub(crate) fn log_corr(self, alpha: f64, d: f64, beta: f64) -> f64 {
        match self {
            KernelFamily::Matern52 => {
                let r = SQRT_5 * d * beta;
                (1.0 + r + r * r / 3.0).ln() - r
            }
            KernelFamily::Matern32 => {
                let r = SQRT_3 * d * beta;
                r.ln_1p() - r
            }
            KernelFamily::PowerExponential => -(d * beta).powf(alpha),
        }
    }

    /// `d ln c / d beta`. Finite everywhere; zero at `d = 0`.
    #[inline]
    pub(crate) fn dlog_corr_dbeta(self, alpha: f64, d: f64, beta: f64) -> f64 {
        match self {
            KernelFamily::Matern52 => {
                let r = SQRT_5 * d * beta;
                -SQRT_5 * d * (r / 3.0) * (1.0 + r) / (1.0 + r + r * r / 3.0)
            }
            KernelFamily::Matern32 => {
                let r = SQRT_3 * d * beta;
                -SQRT_3 * d * r / (1.0 + r)
            }
            KernelFamily::PowerExponential => {
                if d == 0.0 {
                    0.0
                } else {
                    -alpha * (d * beta).powf(alpha) / beta
                }
            }
        }
    }
}

/// Per-dimension correlation family plus roughness exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    families: Vec<KernelFamily>,
    alpha: Vec<f64>,
}

impl KernelSpec {
    pub fn new(families: Vec<KernelFamily>, alpha: Vec<f64>) -> Result<Self> {
        if families.is_empty() {
            return Err(GaspError::InvalidArgument(
                "kernel needs at least one input dimension".into(),
            ));
        }
        if alpha.len() != families.len() {
            return Err(GaspError::DimensionMismatch {
                what: "kernel roughness vector",
                expected: families.len(),
                found: alpha.len(),
            });
        }
        for (l, (&fam, &a)) in families.iter().zip(&alpha).enumerate() {
            if fam == KernelFamily::PowerExponential && !(a > 0.0 && a <= 2.0) {
                return Err(GaspError::InvalidArgument(format!(
                    "power exponential roughness must lie in (0, 2], got {a} in dimension {}",
                    l + 1
                )));
            }
        }
        Ok(KernelSpec { families, alpha })
    }

    /// Same family in every one of `p` dimensions, roughness 1.9.
    pub fn uniform(family: KernelFamily, p: usize) -> Self {
        KernelSpec {
            families: vec![family; p.max(1)],
            alpha: vec![DEFAULT_ALPHA; p.max(1)],
        }
    }

    pub fn matern52(p: usize) -> Self {
        Self::uniform(KernelFamily::Matern52, p)
    }

    pub fn pow_exp(alpha: Vec<f64>) -> Result<Self> {
        Self::new(vec![KernelFamily::PowerExponential; alpha.len()], alpha)
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    pub fn families(&self) -> &[KernelFamily] {
        &self.families
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

/// Strictly positive inverse range parameters, one per input dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseRange(Vec<f64>);

impl InverseRange {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(GaspError::InvalidArgument(format!(
                "inverse range parameters must be finite and positive, got {b}"
            )));
        }
        Ok(InverseRange(beta))
    }

    pub fn from_log(omega: &[f64]) -> Result<Self> {
        Self::new(omega.iter().map(|w| w.exp()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Range parameters `gamma_l = 1 / beta_l`.
    pub fn gamma(&self) -> Vec<f64> {
        self.0.iter().map(|b| 1.0 / b).collect()
    }
}

/// Correlation of a single coordinate at distance `d` with range `gamma`.
pub fn corr_1d(family: KernelFamily, alpha: f64, d: f64, gamma: f64) -> Result<f64> {
    if !d.is_finite() || d < 0.0 {
        return Err(GaspError::InvalidArgument(format!(
            "distance must be finite and non-negative, got {d}"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(GaspError::InvalidArgument(format!(
            "range parameter must be finite and positive, got {gamma}"
        )));
    }
    if family == KernelFamily::PowerExponential && !(alpha > 0.0 && alpha <= 2.0) {
        return Err(GaspError::InvalidArgument(format!(
            "power exponential roughness must lie in (0, 2], got {alpha}"
        )));
    }
    Ok(family.log_corr(alpha, d, 1.0 / gamma).exp())
}

/// Per-dimension absolute coordinate differences between two point sets.
#[derive(Clone, Debug)]
pub struct DistanceTensor {
    dims: Vec<DMatrix<f64>>,
    rows: usize,
    cols: usize,
}

impl DistanceTensor {
    /// Distances between the rows of `a` and the rows of `b`.
    pub fn between(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        if a.ncols() != b.ncols() {
            return Err(GaspError::DimensionMismatch {
                what: "point sets",
                expected: a.ncols(),
                found: b.ncols(),
            });
        }
        let dims = (0..a.ncols())
            .map(|l| DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| (a[(i, l)] - b[(j, l)]).abs()))
            .collect();
        Ok(DistanceTensor {
            dims,
            rows: a.nrows(),
            cols: b.nrows(),
        })
    }

    /// Square, symmetric distances within one point set.
    pub fn within(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let dims = (0..a.ncols())
            .map(|l| {
                let mut m = DMatrix::zeros(n, n);
                for j in 0..n {
                    for i in (j + 1)..n {
                        let d = (a[(i, l)] - a[(j, l)]).abs();
                        m[(i, j)] = d;
                        m[(j, i)] = d;
                    }
                }
                m
            })
            .collect();
        DistanceTensor { dims, rows: n, cols: n }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn component(&self, l: usize) -> &DMatrix<f64> {
        &self.dims[l]
    }

    fn check(&self, spec: &KernelSpec, beta: &InverseRange) -> Result<()> {
        if spec.dim() != self.dim() {
            return Err(GaspError::DimensionMismatch {
                what: "kernel specification",
                expected: self.dim(),
                found: spec.dim(),
            });
        }
        if beta.len() != self.dim() {
            return Err(GaspError::DimensionMismatch {
                what: "inverse range vector",
                expected: self.dim(),
                found: beta.len(),
            });
        }
        Ok(())
    }

    /// Entrywise `ln R_ij = sum_l ln c_l(d_ijl)`.
    pub fn log_corr(&self, spec: &KernelSpec, beta: &InverseRange) -> Result<DMatrix<f64>> {
        self.check(spec, beta)?;
        let mut log_r = DMatrix::zeros(self.rows, self.cols);
        for (l, d) in self.dims.iter().enumerate() {
            let (fam, a, b) = (spec.families[l], spec.alpha[l], beta.0[l]);
            log_r.zip_apply(d, |acc: &mut f64, dist: f64| *acc += fam.log_corr(a, dist, b));
        }
        Ok(log_r)
    }

    /// Product correlation matrix `R_ij = prod_l c_l(d_ijl)`.
    pub fn corr(&self, spec: &KernelSpec, beta: &InverseRange) -> Result<DMatrix<f64>> {
        let mut r = self.log_corr(spec, beta)?;
        r.apply(|v| *v = v.exp());
        Ok(r)
    }

    /// `dR / d beta_l` given the already computed correlation matrix.
    pub fn corr_deriv_with(
        &self,
        corr: &DMatrix<f64>,
        spec: &KernelSpec,
        beta: &InverseRange,
        l: usize,
    ) -> Result<DMatrix<f64>> {
        self.check(spec, beta)?;
        if l >= self.dim() {
            return Err(GaspError::InvalidArgument(format!(
                "dimension index {l} out of range for {} inputs",
                self.dim()
            )));
        }
        let (fam, a, b) = (spec.families[l], spec.alpha[l], beta.0[l]);
        let mut out = corr.clone();
        out.zip_apply(&self.dims[l], |r, dist| *r *= fam.dlog_corr_dbeta(a, dist, b));
        Ok(out)
    }
}

/// Product correlations between the rows of two point sets.
pub fn corr_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    spec: &KernelSpec,
    beta: &InverseRange,
) -> Result<DMatrix<f64>> {
    DistanceTensor::between(a, b)?.corr(spec, beta)
}

/// Entrywise derivative of the self-correlation matrix of `design` with
/// respect to `beta_l` (zero-based `l`).
pub fn corr_matrix_deriv(
    design: &DMatrix<f64>,
    spec: &KernelSpec,
    beta: &InverseRange,
    l: usize,
) -> Result<DMatrix<f64>> {
    let dist = DistanceTensor::within(design);
    let r = dist.corr(spec, beta)?;
    dist.corr_deriv_with(&r, spec, beta, l)
}
