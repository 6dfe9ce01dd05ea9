//! Marginal posterior mode estimation of the inverse ranges and nugget.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};
use crate::kernels::{DistanceTensor, InverseRange, KernelSpec};
use crate::marginal::{
    build_state_with, log_marginal_lik, log_marginal_lik_grad, MarginalState, NuggetMode,
};
use crate::optim::{maximize, LbfgsOptions, StopReason};
use crate::priors::{
    default_jr_params, log_jr_prior, log_jr_prior_grad, log_ref_prior, mean_pairwise_distance,
    JrPriorParams, PriorChoice, RefParameterization, ScaleRule,
};
use crate::trend::Trend;

/// Correlation at the mean per-dimension distance allowed at the lower bound.
pub const LOWER_BOUND_CORR: f64 = 0.99;
pub const START1_ETA: f64 = 1e-4;
pub const START2_ETA: f64 = 2e-4;
const TIE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub prior: PriorChoice,
    pub nugget: NuggetMode,
    pub lower_bound: bool,
    pub multiple_starts: bool,
    pub max_eval: usize,
    pub xtol_rel: f64,
    pub optimizer_memory: usize,
    pub scale_rule: ScaleRule,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            prior: PriorChoice::Jr,
            nugget: NuggetMode::NoiseFree,
            lower_bound: true,
            multiple_starts: false,
            max_eval: 30,
            xtol_rel: 1e-5,
            optimizer_memory: 10,
            scale_rule: ScaleRule::RangeOverRootN,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.max_eval < 1 {
            return Err(GaspError::InvalidArgument("max_eval must be at least 1".into()));
        }
        if !(self.xtol_rel > 0.0) {
            return Err(GaspError::InvalidArgument("xtol_rel must be positive".into()));
        }
        if self.optimizer_memory < 1 {
            return Err(GaspError::InvalidArgument("optimizer memory must be at least 1".into()));
        }
        if let NuggetMode::Fixed(eta) = self.nugget {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(GaspError::InvalidArgument(format!(
                    "fixed nugget must be positive and finite, got {eta}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one optimizer start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    /// Starting point in `(log beta, [log eta])`.
    pub start: Vec<f64>,
    /// Final point, absent when the start could not be evaluated.
    pub end: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub evals: usize,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub starts: Vec<StartReport>,
    /// Index into `starts` of the selected optimum.
    pub chosen: usize,
    /// Log posterior (log marginal likelihood plus log prior) at the optimum.
    pub log_posterior: Option<f64>,
    pub log_marginal_lik: Option<f64>,
    pub converged: bool,
    pub wall_seconds: f64,
    /// Free-form notes, such as a degenerate response handled without optimization.
    pub notes: Vec<String>,
}

/// Per-dimension lower bounds on `beta`: `-ln(0.99) / (p C_l)` with `C_l` the
/// mean pairwise distance in dimension `l`.
pub fn default_lower_bound(design: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = design.ncols();
    let c = mean_pairwise_distance(design);
    if let Some(dim) = c.iter().position(|v| !(*v > 0.0)) {
        return Err(GaspError::ZeroScale { dim: dim + 1 });
    }
    Ok(c.iter().map(|cl| -LOWER_BOUND_CORR.ln() / (p as f64 * cl)).collect())
}

/// Optimizer starts in `(log beta, [log eta])`.
///
/// Start 1 is `50 beta_min` with `eta = 1e-4`; start 2 is half the coordinate
/// mean of the jointly robust prior, `(a + p) / (2 b p C_l)`, with `eta = 2e-4`,
/// lifted onto `beta_min` when `enforce_bound` is set.
pub fn initial_points(
    params: &JrPriorParams,
    beta_min: &[f64],
    nugget: NuggetMode,
    multiple_starts: bool,
    enforce_bound: bool,
) -> Vec<Vec<f64>> {
    let p = beta_min.len() as f64;
    let with_eta = |mut v: Vec<f64>, eta: f64| {
        if nugget.is_estimated() {
            v.push(eta.ln());
        }
        v
    };
    let first = with_eta(beta_min.iter().map(|b| (50.0 * b).ln()).collect(), START1_ETA);
    if !multiple_starts {
        return vec![first];
    }
    let second: Vec<f64> = params
        .c
        .iter()
        .zip(beta_min)
        .map(|(c, lo)| {
            let b = (params.a + p) / (2.0 * params.b * p * c);
            if enforce_bound { b.max(*lo) } else { b }.ln()
        })
        .collect();
    vec![first, with_eta(second, START2_ETA)]
}

/// The maximized criterion: log marginal likelihood plus log prior, as a
/// function of `omega = (log beta, [log eta])`.
pub struct Objective<'a> {
    dist: DistanceTensor,
    h: DMatrix<f64>,
    response: &'a DMatrix<f64>,
    spec: &'a KernelSpec,
    prior: PriorChoice,
    nugget: NuggetMode,
    jr: JrPriorParams,
}

impl<'a> Objective<'a> {
    pub fn new(
        design: &DMatrix<f64>,
        response: &'a DMatrix<f64>,
        trend: &Trend,
        spec: &'a KernelSpec,
        prior: PriorChoice,
        nugget: NuggetMode,
        scale_rule: ScaleRule,
    ) -> Result<Self> {
        check_inputs(design, response, spec)?;
        let h = trend.design_basis(design)?;
        let jr = default_jr_params(design, scale_rule)?;
        Ok(Objective {
            dist: DistanceTensor::within(design),
            h,
            response,
            spec,
            prior,
            nugget,
            jr,
        })
    }

    /// Number of free coordinates.
    pub fn dim(&self) -> usize {
        self.dist.dim() + usize::from(self.nugget.is_estimated())
    }

    pub fn jr_params(&self) -> &JrPriorParams {
        &self.jr
    }

    pub fn distances(&self) -> &DistanceTensor {
        &self.dist
    }

    pub fn trend_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Splits `omega` into `(beta, eta)`.
    pub fn params(&self, omega: &[f64]) -> Result<(InverseRange, f64)> {
        let p = self.dist.dim();
        if omega.len() != self.dim() {
            return Err(GaspError::DimensionMismatch {
                what: "optimizer coordinates",
                expected: self.dim(),
                found: omega.len(),
            });
        }
        let beta = InverseRange::from_log(&omega[..p])?;
        let eta = match self.nugget {
            NuggetMode::NoiseFree => 0.0,
            NuggetMode::Fixed(e) => e,
            NuggetMode::Estimated => omega[p].exp(),
        };
        Ok((beta, eta))
    }

    pub fn state(&self, omega: &[f64]) -> Result<MarginalState> {
        let (beta, eta) = self.params(omega)?;
        build_state_with(&self.dist, &self.h, self.response, self.spec, &beta, eta)
    }

    fn estimated_eta(&self, eta: f64) -> Option<f64> {
        self.nugget.is_estimated().then_some(eta)
    }

    fn log_prior_at(&self, omega: &[f64]) -> Result<f64> {
        let (beta, eta) = self.params(omega)?;
        match self.prior {
            PriorChoice::Flat => Ok(0.0),
            PriorChoice::Jr => Ok(log_jr_prior(beta.as_slice(), self.estimated_eta(eta), &self.jr)),
            PriorChoice::RefGamma | PriorChoice::RefXi => {
                let state = self.state(omega)?;
                log_ref_prior(
                    state.factor(),
                    &self.dist,
                    self.spec,
                    &beta,
                    self.nugget.is_estimated(),
                    self.ref_parameterization(),
                )
            }
        }
    }

    fn ref_parameterization(&self) -> RefParameterization {
        if self.prior == PriorChoice::RefGamma {
            RefParameterization::Gamma
        } else {
            RefParameterization::Xi
        }
    }

    /// Log prior at `omega`.
    pub fn log_prior(&self, omega: &[f64]) -> Result<f64> {
        self.log_prior_at(omega)
    }

    /// Log marginal likelihood at `omega`.
    pub fn log_marginal_lik(&self, omega: &[f64]) -> Result<f64> {
        log_marginal_lik(&self.state(omega)?)
    }

    /// Log posterior at `omega`.
    pub fn value(&self, omega: &[f64]) -> Result<f64> {
        Ok(self.log_marginal_lik(omega)? + self.log_prior_at(omega)?)
    }

    /// Log posterior and its gradient at `omega`.
    pub fn value_and_grad(&self, omega: &[f64]) -> Result<(f64, DVector<f64>)> {
        let (beta, eta) = self.params(omega)?;
        let state = build_state_with(&self.dist, &self.h, self.response, self.spec, &beta, eta)?;
        let lml = log_marginal_lik(&state)?;
        let mut grad = log_marginal_lik_grad(&state, &self.dist, self.spec, &beta, self.nugget.is_estimated())?;
        let prior = match self.prior {
            PriorChoice::Flat => 0.0,
            PriorChoice::Jr => {
                let e = self.estimated_eta(eta);
                grad += log_jr_prior_grad(beta.as_slice(), e, &self.jr);
                log_jr_prior(beta.as_slice(), e, &self.jr)
            }
            PriorChoice::RefGamma | PriorChoice::RefXi => {
                let v = log_ref_prior(
                    state.factor(),
                    &self.dist,
                    self.spec,
                    &beta,
                    self.nugget.is_estimated(),
                    self.ref_parameterization(),
                )?;
                grad += self.ref_prior_grad(omega)?;
                v
            }
        };
        Ok((lml + prior, grad))
    }

    /// Central differences with step `1e-4 max(1, |omega_i|)`.
    fn ref_prior_grad(&self, omega: &[f64]) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(omega.len());
        let mut w = omega.to_vec();
        for i in 0..omega.len() {
            let h = 1e-4 * omega[i].abs().max(1.0);
            w[i] = omega[i] + h;
            let up = self.log_prior_at(&w)?;
            w[i] = omega[i] - h;
            let dn = self.log_prior_at(&w)?;
            w[i] = omega[i];
            g[i] = (up - dn) / (2.0 * h);
        }
        Ok(g)
    }
}

fn check_inputs(design: &DMatrix<f64>, response: &DMatrix<f64>, spec: &KernelSpec) -> Result<()> {
    let (n, p) = design.shape();
    if n < 2 {
        return Err(GaspError::InvalidArgument(format!("need at least two design points, got {n}")));
    }
    if p != spec.dim() {
        return Err(GaspError::DimensionMismatch {
            what: "kernel dimensions",
            expected: p,
            found: spec.dim(),
        });
    }
    if response.nrows() != n {
        return Err(GaspError::DimensionMismatch {
            what: "response rows",
            expected: n,
            found: response.nrows(),
        });
    }
    if response.ncols() == 0 {
        return Err(GaspError::InvalidArgument("response has no columns".into()));
    }
    if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
        return Err(GaspError::InvalidArgument("design and response must be finite".into()));
    }
    Ok(())
}

/// Fitted state shared by the scalar and multi-output models.
#[derive(Clone, Debug)]
pub(crate) struct Fitted {
    pub design: DMatrix<f64>,
    /// `n x k`
    pub response: DMatrix<f64>,
    pub trend: Trend,
    pub spec: KernelSpec,
    pub options: FitOptions,
    pub jr: JrPriorParams,
    pub beta: InverseRange,
    pub eta: f64,
    pub state: MarginalState,
    /// `S^2_j / (n - q)`, one per response column.
    pub sigma2: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl Fitted {
    pub fn fit(
        design: &DMatrix<f64>,
        response: &DMatrix<f64>,
        trend: &Trend,
        spec: &KernelSpec,
        options: &FitOptions,
    ) -> Result<Self> {
        options.validate()?;
        let started = Instant::now();
        let obj = Objective::new(design, response, trend, spec, options.prior, options.nugget, options.scale_rule)?;
        let beta_min = default_lower_bound(design)?;
        let p = design.ncols();
        let starts = initial_points(obj.jr_params(), &beta_min, options.nugget, options.multiple_starts, options.lower_bound);

        let mut lower = vec![f64::NEG_INFINITY; obj.dim()];
        if options.lower_bound {
            for (lo, b) in lower.iter_mut().zip(&beta_min) {
                *lo = b.ln();
            }
        }
        let upper = vec![f64::INFINITY; obj.dim()];

        // A response with no residual variation makes the likelihood improper.
        let probe = obj.state(&starts[0]);
        if let Ok(state) = &probe {
            if let Some(col) = state.degenerate_column() {
                let column = (response.ncols() > 1).then_some(col);
                if !options.nugget.is_estimated() {
                    return Err(GaspError::DegenerateResponse { column });
                }
                log::warn!("response has zero residual variance; keeping the starting parameters");
                let (beta, eta) = obj.params(&starts[0])?;
                let diagnostics = FitDiagnostics {
                    starts: vec![StartReport {
                        start: starts[0].clone(),
                        end: Some(starts[0].clone()),
                        objective: None,
                        evals: 1,
                        stop: None,
                        error: Some("degenerate response".into()),
                    }],
                    chosen: 0,
                    log_posterior: None,
                    log_marginal_lik: None,
                    converged: false,
                    wall_seconds: started.elapsed().as_secs_f64(),
                    notes: vec![format!(
                        "response{} has zero residual variance; parameters left at the first start",
                        column.map(|c| format!(" column {}", c + 1)).unwrap_or_default()
                    )],
                };
                return Fitted::assemble(design, response, trend, spec, options, obj.jr_params().clone(), beta, eta, diagnostics);
            }
        }

        let lbfgs = LbfgsOptions {
            max_eval: options.max_eval,
            xtol_rel: options.xtol_rel,
            memory: options.optimizer_memory,
        };
        let run = |start: &Vec<f64>| -> StartReport {
            match maximize(|w| obj.value_and_grad(w), start, &lower, &upper, &lbfgs) {
                Ok(r) => StartReport {
                    start: start.clone(),
                    end: Some(r.x),
                    objective: Some(r.value),
                    evals: r.evals,
                    stop: Some(r.stop),
                    error: None,
                },
                Err(e) => StartReport {
                    start: start.clone(),
                    end: None,
                    objective: None,
                    evals: 1,
                    stop: None,
                    error: Some(e.to_string()),
                },
            }
        };
        let reports: Vec<StartReport> = if starts.len() > 1 {
            starts.par_iter().map(run).collect()
        } else {
            starts.iter().map(run).collect()
        };

        let Some(chosen) = select_start(&reports, p) else {
            let detail = reports
                .iter()
                .enumerate()
                .map(|(i, r)| format!("  start {}: {}", i + 1, r.error.as_deref().unwrap_or("no finite objective")))
                .collect::<Vec<_>>()
                .join("\n");
            if let Err(e @ GaspError::NearSingular { .. }) = probe {
                return Err(e);
            }
            return Err(GaspError::FitFailure(detail));
        };
        let best = reports[chosen].end.clone().expect("selected start has an end point");
        let (beta, eta) = obj.params(&best)?;
        let lml = obj.log_marginal_lik(&best)?;
        let diagnostics = FitDiagnostics {
            converged: reports[chosen].stop.is_some_and(StopReason::converged),
            log_posterior: reports[chosen].objective,
            log_marginal_lik: Some(lml),
            starts: reports,
            chosen,
            wall_seconds: started.elapsed().as_secs_f64(),
            notes: Vec::new(),
        };
        Fitted::assemble(design, response, trend, spec, options, obj.jr_params().clone(), beta, eta, diagnostics)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        design: &DMatrix<f64>,
        response: &DMatrix<f64>,
        trend: &Trend,
        spec: &KernelSpec,
        options: &FitOptions,
        jr: JrPriorParams,
        beta: InverseRange,
        eta: f64,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        check_inputs(design, response, spec)?;
        let h = trend.design_basis(design)?;
        let dist = DistanceTensor::within(design);
        let state = build_state_with(&dist, &h, response, spec, &beta, eta)?;
        let dof = (state.n() - state.q()) as f64;
        let sigma2 = state.s2().iter().map(|s| s / dof).collect();
        Ok(Fitted {
            design: design.clone(),
            response: response.clone(),
            trend: trend.clone(),
            spec: spec.clone(),
            options: options.clone(),
            jr,
            beta,
            eta,
            state,
            sigma2,
            diagnostics,
        })
    }

    pub fn dof(&self) -> usize {
        self.state.n() - self.state.q()
    }
}

/// Best finite objective; near-ties go to the smaller `sum log beta`.
fn select_start(reports: &[StartReport], p: usize) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, r) in reports.iter().enumerate() {
        let (Some(v), Some(end)) = (r.objective, &r.end) else { continue };
        if !v.is_finite() {
            continue;
        }
        let smooth: f64 = end[..p].iter().sum();
        best = match best {
            None => Some((i, v, smooth)),
            Some((bi, bv, bs)) => {
                let tie = (v - bv).abs() <= TIE_TOL * bv.abs().max(1.0);
                if (tie && smooth < bs) || (!tie && v > bv) {
                    Some((i, v, smooth))
                } else {
                    Some((bi, bv, bs))
                }
            }
        };
    }
    best.map(|b| b.0)
}

/// A fitted single-output emulator.
#[derive(Clone, Debug)]
pub struct GaSPModel {
    pub(crate) inner: Fitted,
}

impl GaSPModel {
    pub fn design(&self) -> &DMatrix<f64> {
        &self.inner.design
    }

    pub fn response(&self) -> DVector<f64> {
        self.inner.response.column(0).into_owned()
    }

    pub fn trend(&self) -> &Trend {
        &self.inner.trend
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.inner.spec
    }

    pub fn options(&self) -> &FitOptions {
        &self.inner.options
    }

    pub fn jr_params(&self) -> &JrPriorParams {
        &self.inner.jr
    }

    pub fn beta_hat(&self) -> &InverseRange {
        &self.inner.beta
    }

    /// Range parameters `1 / beta_hat`.
    pub fn gamma_hat(&self) -> Vec<f64> {
        self.inner.beta.gamma()
    }

    pub fn eta_hat(&self) -> f64 {
        self.inner.eta
    }

    pub fn theta_hat(&self) -> DVector<f64> {
        self.inner.state.theta_hat().column(0).into_owned()
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.inner.sigma2[0]
    }

    /// Degrees of freedom `n - q` of the predictive distribution.
    pub fn dof(&self) -> usize {
        self.inner.dof()
    }

    pub fn state(&self) -> &MarginalState {
        &self.inner.state
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.inner.diagnostics
    }

    /// Optimizer coordinates `(log beta, [log eta])` of the fitted point.
    pub fn omega(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.inner.beta.as_slice().iter().map(|b| b.ln()).collect();
        if self.inner.options.nugget.is_estimated() {
            w.push(self.inner.eta.ln());
        }
        w
    }

    /// Rebuilds a model at given parameters without optimizing.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parameters(
        design: &DMatrix<f64>,
        response: &DVector<f64>,
        trend: &Trend,
        spec: &KernelSpec,
        options: &FitOptions,
        beta: InverseRange,
        eta: f64,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        let y = DMatrix::from_column_slice(response.len(), 1, response.as_slice());
        let jr = default_jr_params(design, options.scale_rule)?;
        Ok(GaSPModel {
            inner: Fitted::assemble(design, &y, trend, spec, options, jr, beta, eta, diagnostics)?,
        })
    }
}

/// Fits a single-output emulator by maximizing the marginal posterior.
pub fn fit(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    trend: &Trend,
    spec: &KernelSpec,
    options: &FitOptions,
) -> Result<GaSPModel> {
    let y = DMatrix::from_column_slice(response.len(), 1, response.as_slice());
    Ok(GaSPModel {
        inner: Fitted::fit(design, &y, trend, spec, options)?,
    })
}

/// Maximizes the marginal likelihood alone. Degenerate optima, with `beta_hat`
/// on a bound or drifting towards the identity-correlation limit, are expected
/// here and reported through the diagnostics rather than as errors.
pub fn fit_flat_mode(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    trend: &Trend,
    spec: &KernelSpec,
    options: &FitOptions,
) -> Result<GaSPModel> {
    let opts = FitOptions {
        prior: PriorChoice::Flat,
        ..options.clone()
    };
    fit(design, response, trend, spec, &opts)
}
