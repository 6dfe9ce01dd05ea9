//! Log marginal likelihood with the trend coefficients and variance integrated
//! out, its gradient in log-parameter space, and the factorization state that
//! fitting and prediction share.
//!
//! All quantities come from one Cholesky factor `L` of `R~ = R + eta I`; the
//! inverse of `R~` is never formed on these paths. The response may carry `k`
//! columns that share the correlation matrix; for `k = 1` the objective is the
//! usual scalar marginal likelihood and for `k > 1` it is the sum of the
//! per-column terms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GaspError, Result};
use crate::kernels::{DistanceTensor, InverseRange, KernelSpec};
use crate::trend::Trend;

/// Smallest squared Cholesky pivot accepted for `R~` (its diagonal is `1 + eta`).
const MIN_PIVOT_SQ: f64 = 1e-15;
/// Relative pivot floor for the generalized least squares matrix `H' R~^-1 H`.
const TREND_RANK_TOL: f64 = 1e-13;

/// How the nugget-variance ratio is treated.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum NuggetMode {
    /// `eta = 0`; the emulator interpolates the data.
    NoiseFree,
    /// Known `eta > 0`, not estimated.
    Fixed(f64),
    /// `eta` estimated jointly with the inverse ranges.
    Estimated,
}

impl NuggetMode {
    pub fn is_estimated(self) -> bool {
        matches!(self, NuggetMode::Estimated)
    }
}

/// Cholesky factor of `R~` plus the trend-dependent pieces that do not involve the response.
#[derive(Clone, Debug)]
pub struct CorrFactor {
    corr: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    h: DMatrix<f64>,
    /// `L^-1 H`
    l_inv_h: DMatrix<f64>,
    /// `R~^-1 H`
    r_inv_h: DMatrix<f64>,
    g_chol: Option<Cholesky<f64, Dyn>>,
    log_det_r: f64,
    log_det_g: f64,
    eta: f64,
}

impl CorrFactor {
    /// Factorizes `corr + eta I`. `beta` is only used to label errors.
    pub fn new(corr: DMatrix<f64>, h: &DMatrix<f64>, eta: f64, beta: &InverseRange) -> Result<Self> {
        let n = corr.nrows();
        if h.nrows() != n {
            return Err(GaspError::DimensionMismatch {
                what: "trend matrix rows",
                expected: n,
                found: h.nrows(),
            });
        }
        if h.ncols() >= n {
            return Err(GaspError::DegreesOfFreedom { n, q: h.ncols() });
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(GaspError::InvalidArgument(format!(
                "nugget-variance ratio must be finite and non-negative, got {eta}"
            )));
        }
        let singular = || GaspError::NearSingular {
            beta: beta.as_slice().to_vec(),
            eta,
        };
        let mut tilde = corr.clone();
        if eta > 0.0 {
            for i in 0..n {
                tilde[(i, i)] += eta;
            }
        }
        let chol = Cholesky::new(tilde).ok_or_else(singular)?;
        let l = chol.l_dirty();
        let mut log_det_r = 0.0;
        for i in 0..n {
            let piv = l[(i, i)];
            if !(piv.is_finite() && piv * piv > MIN_PIVOT_SQ) {
                return Err(singular());
            }
            log_det_r += 2.0 * piv.ln();
        }

        let l_inv_h = solve_lower(&chol, h);
        let r_inv_h = solve_upper_t(&chol, &l_inv_h);
        let (g_chol, log_det_g) = if h.ncols() > 0 {
            let g = l_inv_h.transpose() * &l_inv_h;
            let gc = Cholesky::new(g).ok_or(GaspError::RankDeficientTrend)?;
            let diag = gc.l_dirty().diagonal();
            let max = diag.max();
            if diag.iter().any(|d| !(d * d > TREND_RANK_TOL * max * max)) {
                return Err(GaspError::RankDeficientTrend);
            }
            let ld = diag.iter().map(|d| 2.0 * d.ln()).sum();
            (Some(gc), ld)
        } else {
            (None, 0.0)
        };
        Ok(CorrFactor {
            corr,
            chol,
            h: h.clone(),
            l_inv_h,
            r_inv_h,
            g_chol,
            log_det_r,
            log_det_g,
            eta,
        })
    }

    pub fn n(&self) -> usize {
        self.corr.nrows()
    }

    pub fn q(&self) -> usize {
        self.h.ncols()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Correlation matrix without the nugget.
    pub fn corr(&self) -> &DMatrix<f64> {
        &self.corr
    }

    pub fn trend_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn log_det_r(&self) -> f64 {
        self.log_det_r
    }

    pub fn log_det_g(&self) -> f64 {
        self.log_det_g
    }

    pub(crate) fn l_inv_h(&self) -> &DMatrix<f64> {
        &self.l_inv_h
    }

    /// `L^-1 B`.
    pub fn solve_l(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        solve_lower(&self.chol, b)
    }

    /// `(H' R~^-1 H)^-1 B`; `B` must have `q` rows.
    pub fn solve_g(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.g_chol {
            Some(gc) => gc.solve(b),
            None => DMatrix::zeros(0, b.ncols()),
        }
    }

    /// `Q = R~^-1 - R~^-1 H (H' R~^-1 H)^-1 H' R~^-1`, formed explicitly.
    /// Used by the reference prior and leave-one-out diagnostics only.
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let mut q = self.chol.inverse();
        if self.q() > 0 {
            let a = &self.r_inv_h;
            q -= a * self.solve_g(&a.transpose());
        }
        (&q + q.transpose()) * 0.5
    }
}

/// Factorization state at one `(beta, eta)` together with the response-dependent
/// generalized least squares quantities.
#[derive(Clone, Debug)]
pub struct MarginalState {
    factor: CorrFactor,
    theta_hat: DMatrix<f64>,
    s2: Vec<f64>,
    /// Zero-trend quadratic forms `y' R~^-1 y`, the scale for degeneracy checks.
    s2_raw: Vec<f64>,
    qy: DMatrix<f64>,
}

impl MarginalState {
    /// Builds the state from a factor and an `n x k` response.
    pub fn from_factor(factor: CorrFactor, response: &DMatrix<f64>) -> Result<Self> {
        let n = factor.n();
        if response.nrows() != n {
            return Err(GaspError::DimensionMismatch {
                what: "response rows",
                expected: n,
                found: response.nrows(),
            });
        }
        let l_inv_y = factor.solve_l(response);
        let s2_raw = l_inv_y.column_iter().map(|c| c.norm_squared()).collect();
        let theta_hat = factor.solve_g(&(factor.l_inv_h.transpose() * &l_inv_y));
        let l_inv_e = &l_inv_y - &factor.l_inv_h * &theta_hat;
        let s2 = l_inv_e.column_iter().map(|c| c.norm_squared()).collect();
        let qy = solve_upper_t(&factor.chol, &l_inv_e);
        Ok(MarginalState {
            factor,
            theta_hat,
            s2,
            s2_raw,
            qy,
        })
    }

    pub fn factor(&self) -> &CorrFactor {
        &self.factor
    }

    pub fn n(&self) -> usize {
        self.factor.n()
    }

    pub fn q(&self) -> usize {
        self.factor.q()
    }

    /// Number of response columns.
    pub fn k(&self) -> usize {
        self.s2.len()
    }

    /// Generalized least squares coefficients, `q x k`.
    pub fn theta_hat(&self) -> &DMatrix<f64> {
        &self.theta_hat
    }

    /// `S^2_j = y_j' Q y_j` for each response column.
    pub fn s2(&self) -> &[f64] {
        &self.s2
    }

    /// `R~^-1 (y - H theta_hat)`, `n x k`.
    pub fn qy(&self) -> &DMatrix<f64> {
        &self.qy
    }

    /// Index of the first column whose residual quadratic form vanishes.
    pub fn degenerate_column(&self) -> Option<usize> {
        self.s2
            .iter()
            .zip(&self.s2_raw)
            .position(|(&s2, &raw)| !(s2 > 64.0 * f64::EPSILON * raw) || !(s2 > 0.0))
    }
}

/// State for a single response vector.
pub fn build_state(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    trend: &Trend,
    spec: &KernelSpec,
    beta: &InverseRange,
    eta: f64,
) -> Result<MarginalState> {
    let h = trend.design_basis(design)?;
    let dist = DistanceTensor::within(design);
    let y = DMatrix::from_column_slice(response.len(), 1, response.as_slice());
    build_state_with(&dist, &h, &y, spec, beta, eta)
}

/// State from precomputed design distances and trend matrix; `response` is `n x k`.
pub fn build_state_with(
    dist: &DistanceTensor,
    h: &DMatrix<f64>,
    response: &DMatrix<f64>,
    spec: &KernelSpec,
    beta: &InverseRange,
    eta: f64,
) -> Result<MarginalState> {
    let corr = dist.corr(spec, beta)?;
    let factor = CorrFactor::new(corr, h, eta, beta)?;
    MarginalState::from_factor(factor, response)
}

/// `sum_j [ -1/2 log|R~| - 1/2 log|H' R~^-1 H| - (n-q)/2 log S^2_j ]`, dropping
/// the constant that does not depend on `(beta, eta)`.
pub fn log_marginal_lik(state: &MarginalState) -> Result<f64> {
    if let Some(j) = state.degenerate_column() {
        return Err(GaspError::DegenerateResponse {
            column: (state.k() > 1).then_some(j),
        });
    }
    let k = state.k() as f64;
    let dof = (state.n() - state.q()) as f64;
    let log_s2: f64 = state.s2.iter().map(|s| s.ln()).sum();
    Ok(-0.5 * k * (state.factor.log_det_r + state.factor.log_det_g) - 0.5 * dof * log_s2)
}

/// Gradient of [`log_marginal_lik`] with respect to `(log beta_1, ..., log beta_p)`
/// and, when `estimate_eta` is set, `log eta` as the last component.
pub fn log_marginal_lik_grad(
    state: &MarginalState,
    dist: &DistanceTensor,
    spec: &KernelSpec,
    beta: &InverseRange,
    estimate_eta: bool,
) -> Result<DVector<f64>> {
    let p = dist.dim();
    let f = &state.factor;
    let k = state.k() as f64;
    let dof = (state.n() - state.q()) as f64;
    let mut grad = DVector::zeros(p + usize::from(estimate_eta));

    for l in 0..p {
        let dr = dist.corr_deriv_with(&f.corr, spec, beta, l)?;
        let d = directional_terms(state, &dr);
        grad[l] = beta.as_slice()[l] * (k * (-0.5 * d.trace_r + 0.5 * d.trace_g) + 0.5 * dof * d.quad);
    }
    if estimate_eta {
        let n = state.n();
        let l_inv = f.solve_l(&DMatrix::identity(n, n));
        let trace_r = l_inv.norm_squared();
        let trace_g = if f.q() > 0 {
            f.solve_g(&(f.r_inv_h.transpose() * &f.r_inv_h)).trace()
        } else {
            0.0
        };
        let quad: f64 = state
            .qy
            .column_iter()
            .zip(&state.s2)
            .map(|(c, s2)| c.norm_squared() / s2)
            .sum();
        grad[p] = f.eta * (k * (-0.5 * trace_r + 0.5 * trace_g) + 0.5 * dof * quad);
    }
    Ok(grad)
}

struct Directional {
    /// `tr(R~^-1 dR)`
    trace_r: f64,
    /// `tr((H' R~^-1 H)^-1 H' R~^-1 dR R~^-1 H)`
    trace_g: f64,
    /// `sum_j qy_j' dR qy_j / S^2_j`
    quad: f64,
}

fn directional_terms(state: &MarginalState, dr: &DMatrix<f64>) -> Directional {
    let f = &state.factor;
    // tr(L^-T L^-1 dR) = tr(L^-1 (L^-1 dR)^T) since dR is symmetric.
    let m = f.solve_l(dr);
    let trace_r = f.solve_l(&m.transpose()).trace();
    let trace_g = if f.q() > 0 {
        let a = &f.r_inv_h;
        f.solve_g(&(a.transpose() * dr * a)).trace()
    } else {
        0.0
    };
    let dr_qy = dr * &state.qy;
    let quad = state
        .qy
        .column_iter()
        .zip(dr_qy.column_iter())
        .zip(&state.s2)
        .map(|((a, b), s2)| a.dot(&b) / s2)
        .sum();
    Directional {
        trace_r,
        trace_g,
        quad,
    }
}

pub(crate) fn solve_lower(chol: &Cholesky<f64, Dyn>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    if x.ncols() > 0 {
        chol.l_dirty().solve_lower_triangular_mut(&mut x);
    }
    x
}

fn solve_upper_t(chol: &Cholesky<f64, Dyn>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    if x.ncols() > 0 {
        chol.l_dirty().tr_solve_lower_triangular_mut(&mut x);
    }
    x
}
