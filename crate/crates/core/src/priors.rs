//! Priors on the inverse range parameters (and nugget-variance ratio).
//!
//! The jointly robust prior
//! `pi(beta, eta) ∝ t^a exp(-b (t + eta))`, `t = sum_l C_l beta_l`,
//! has closed-form gradients and is the default. The reference prior
//! `|I*|^{1/2}` is available in the range (`gamma`) and log inverse range
//! (`xi`) parameterizations; its gradient is taken numerically.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};
use crate::kernels::{DistanceTensor, InverseRange, KernelSpec};
use crate::marginal::CorrFactor;

pub const DEFAULT_JR_EXPONENT: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorChoice {
    /// Jointly robust prior in the `beta` parameterization.
    #[default]
    Jr,
    /// Reference prior, range parameterization.
    RefGamma,
    /// Reference prior, `xi = log(1 / gamma)` parameterization.
    RefXi,
    /// No prior: plain marginal likelihood maximization.
    Flat,
}

impl PriorChoice {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "jr" | "ref_approx" => Ok(PriorChoice::Jr),
            "ref_gamma" => Ok(PriorChoice::RefGamma),
            "ref_xi" => Ok(PriorChoice::RefXi),
            "flat" => Ok(PriorChoice::Flat),
            other => Err(GaspError::InvalidArgument(format!(
                "unknown prior '{other}' (expected jr, ref_gamma, ref_xi or flat)"
            ))),
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            PriorChoice::Jr => "jr",
            PriorChoice::RefGamma => "ref_gamma",
            PriorChoice::RefXi => "ref_xi",
            PriorChoice::Flat => "flat",
        }
    }
}

/// Rule for the per-dimension scale constants `C_l` of the jointly robust prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRule {
    /// `C_l = (max_i x_il - min_i x_il) / n^{1/p}`.
    #[default]
    RangeOverRootN,
    /// `C_l` = mean of `|x_il - x_jl|` over ordered pairs `i != j`.
    MeanPairwise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JrPriorParams {
    pub a: f64,
    pub b: f64,
    pub c: Vec<f64>,
}

impl JrPriorParams {
    /// `t = sum_l C_l beta_l`.
    pub fn weighted_sum(&self, beta: &[f64]) -> f64 {
        self.c.iter().zip(beta).map(|(c, b)| c * b).sum()
    }
}

/// Mean absolute coordinate difference over all ordered pairs `i != j`, per dimension.
///
/// Uses the sorted-order identity `sum_{i<j} |x_i - x_j| = sum_k x_(k) (2k - n + 1)`.
pub fn mean_pairwise_distance(design: &DMatrix<f64>) -> Vec<f64> {
    let n = design.nrows();
    if n < 2 {
        return vec![0.0; design.ncols()];
    }
    design
        .column_iter()
        .map(|col| {
            let mut v: Vec<f64> = col.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            let s: f64 = v
                .iter()
                .enumerate()
                .map(|(k, x)| x * (2.0 * k as f64 - n as f64 + 1.0))
                .sum();
            2.0 * s / (n * (n - 1)) as f64
        })
        .collect()
}

/// Scale constants under `rule`.
pub fn scale_constants(design: &DMatrix<f64>, rule: ScaleRule) -> Vec<f64> {
    match rule {
        ScaleRule::MeanPairwise => mean_pairwise_distance(design),
        ScaleRule::RangeOverRootN => {
            let (n, p) = design.shape();
            let root = (n as f64).powf(1.0 / p as f64);
            design.column_iter().map(|c| (c.max() - c.min()) / root).collect()
        }
    }
}

/// Default prior parameters `a = 0.2`, `b = n^{-1/p} (a + p)` and `C` from `rule`.
/// The same values apply with or without an estimated nugget.
pub fn default_jr_params(design: &DMatrix<f64>, rule: ScaleRule) -> Result<JrPriorParams> {
    let (n, p) = design.shape();
    if n < 2 {
        return Err(GaspError::InvalidArgument(format!(
            "need at least two design points, got {n}"
        )));
    }
    let c = scale_constants(design, rule);
    if let Some(dim) = c.iter().position(|v| !(*v > 0.0)) {
        return Err(GaspError::ZeroScale { dim: dim + 1 });
    }
    let a = DEFAULT_JR_EXPONENT;
    let b = (n as f64).powf(-1.0 / p as f64) * (a + p as f64);
    Ok(JrPriorParams { a, b, c })
}

/// `a log t - b (t + eta)`; `eta` is `None` when the nugget is not estimated.
/// Returns `-inf` when `t = 0`.
pub fn log_jr_prior(beta: &[f64], eta: Option<f64>, params: &JrPriorParams) -> f64 {
    let t = params.weighted_sum(beta);
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    params.a * t.ln() - params.b * (t + eta.unwrap_or(0.0))
}

/// Gradient of [`log_jr_prior`] in `(log beta, [log eta])`.
pub fn log_jr_prior_grad(beta: &[f64], eta: Option<f64>, params: &JrPriorParams) -> DVector<f64> {
    let t = params.weighted_sum(beta);
    let p = beta.len();
    let mut g = DVector::zeros(p + usize::from(eta.is_some()));
    for l in 0..p {
        g[l] = beta[l] * params.c[l] * (params.a / t - params.b);
    }
    if let Some(e) = eta {
        g[p] = -params.b * e;
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefParameterization {
    Gamma,
    Xi,
}

/// Expected Fisher information `I*` with the trend and variance integrated out:
/// leading entry `n - q`, border `tr(W_l)`, block `tr(W_l W_m)` with `W_l = dR_l Q`.
/// Derivatives are taken in `parameterization`; an estimated nugget adds a
/// final row/column with `dR = I`.
pub fn fisher_information(
    factor: &CorrFactor,
    dist: &DistanceTensor,
    spec: &KernelSpec,
    beta: &InverseRange,
    estimate_eta: bool,
    parameterization: RefParameterization,
) -> Result<DMatrix<f64>> {
    let p = dist.dim();
    let q_mat = factor.q_matrix();
    let mut ws = Vec::with_capacity(p + 1);
    for l in 0..p {
        let b = beta.as_slice()[l];
        let jac = match parameterization {
            RefParameterization::Gamma => -b * b,
            RefParameterization::Xi => b,
        };
        let dr = dist.corr_deriv_with(factor.corr(), spec, beta, l)? * jac;
        ws.push(dr * &q_mat);
    }
    if estimate_eta {
        ws.push(q_mat.clone());
    }
    let m = ws.len();
    let mut info = DMatrix::zeros(m + 1, m + 1);
    info[(0, 0)] = (factor.n() - factor.q()) as f64;
    for i in 0..m {
        let tr = ws[i].trace();
        info[(0, i + 1)] = tr;
        info[(i + 1, 0)] = tr;
        for j in i..m {
            // tr(A B) = sum_ij A_ij B_ji
            let v = ws[i].component_mul(&ws[j].transpose()).sum();
            info[(i + 1, j + 1)] = v;
            info[(j + 1, i + 1)] = v;
        }
    }
    if info.iter().any(|v| !v.is_finite()) {
        return Err(GaspError::Numerical(
            "non-finite entry in the reference-prior information matrix".into(),
        ));
    }
    Ok(info)
}

/// `1/2 log det I*` in the requested parameterization.
pub fn log_ref_prior(
    factor: &CorrFactor,
    dist: &DistanceTensor,
    spec: &KernelSpec,
    beta: &InverseRange,
    estimate_eta: bool,
    parameterization: RefParameterization,
) -> Result<f64> {
    let info = fisher_information(factor, dist, spec, beta, estimate_eta, parameterization)?;
    let det = info.lu().determinant();
    if !(det > 0.0 && det.is_finite()) {
        return Err(GaspError::Numerical(format!(
            "reference-prior information matrix has non-positive determinant {det:e}"
        )));
    }
    Ok(0.5 * det.ln())
}
