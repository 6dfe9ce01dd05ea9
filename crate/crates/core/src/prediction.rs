//! Student-t predictive distribution, joint simulation and leave-one-out diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{GaspError, Result};
use crate::fitting::{Fitted, GaSPModel};
use crate::kernels::DistanceTensor;

/// How the `sd` column is reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdKind {
    /// Standard deviation of the t law, `scale * sqrt(nu / (nu - 2))`; the
    /// scale itself when `nu <= 2`.
    #[default]
    TStd,
    /// The t scale parameter.
    Scale,
}

impl SdKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "t" | "t_std" => Ok(SdKind::TStd),
            "scale" => Ok(SdKind::Scale),
            other => Err(GaspError::InvalidArgument(format!("unknown sd kind '{other}' (expected t or scale)"))),
        }
    }
}

/// Pointwise predictive summaries at the testing inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    /// t scale `sqrt(sigma2_hat c**)`.
    pub scale: Vec<f64>,
    pub dof: usize,
    pub sd_kind: SdKind,
}

impl PredictiveSummary {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `true` when `sd` fell back to the scale because `nu <= 2`.
    pub fn sd_is_scale(&self) -> bool {
        self.sd_kind == SdKind::Scale || self.dof <= 2
    }

    /// Equal-tailed interval at `level` in (0, 1).
    pub fn interval(&self, level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(GaspError::InvalidArgument(format!("interval level must be in (0, 1), got {level}")));
        }
        let t = t_quantile(self.dof, 0.5 + level / 2.0)?;
        Ok(self
            .mean
            .iter()
            .zip(&self.scale)
            .map(|(m, s)| (m - t * s, m + t * s))
            .unzip())
    }

    fn from_parts(mean: Vec<f64>, scale: Vec<f64>, dof: usize, sd_kind: SdKind) -> Result<Self> {
        let t = t_quantile(dof, 0.975)?;
        let factor = match sd_kind {
            SdKind::TStd if dof > 2 => (dof as f64 / (dof as f64 - 2.0)).sqrt(),
            _ => 1.0,
        };
        Ok(PredictiveSummary {
            sd: scale.iter().map(|s| s * factor).collect(),
            lower95: mean.iter().zip(&scale).map(|(m, s)| m - t * s).collect(),
            upper95: mean.iter().zip(&scale).map(|(m, s)| m + t * s).collect(),
            mean,
            scale,
            dof,
            sd_kind,
        })
    }
}

pub(crate) fn t_quantile(dof: usize, prob: f64) -> Result<f64> {
    if dof == 0 {
        return Err(GaspError::DegreesOfFreedom { n: 0, q: 0 });
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| GaspError::Numerical(e.to_string()))?;
    Ok(dist.inverse_cdf(prob))
}

/// Predictive means (`m x k`) and correlation-scale variances `c**` (length `m`).
pub(crate) struct CorePrediction {
    pub mean: DMatrix<f64>,
    pub c_star: Vec<f64>,
    /// Design-point index for testing inputs that coincide with a design point
    /// of a noise-free model.
    pub exact: Vec<Option<usize>>,
    /// `L^-1 r'` (`n x m`) and `u = h*' - (L^-1 H)' L^-1 r'` (`q x m`), for joint covariances.
    pub l_inv_r: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

pub(crate) fn predict_core(
    fitted: &Fitted,
    points: &DMatrix<f64>,
    testing_trend: Option<&DMatrix<f64>>,
) -> Result<CorePrediction> {
    let p = fitted.design.ncols();
    if points.ncols() != p {
        return Err(GaspError::DimensionMismatch {
            what: "testing input columns",
            expected: p,
            found: points.ncols(),
        });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(GaspError::InvalidArgument("testing inputs must be finite".into()));
    }
    let h_star = fitted.trend.eval_basis(points, testing_trend)?;
    let state = &fitted.state;
    let factor = state.factor();
    let r = DistanceTensor::between(points, &fitted.design)?.corr(&fitted.spec, &fitted.beta)?;
    let l_inv_r = factor.solve_l(&r.transpose());
    let u = h_star.transpose() - factor.l_inv_h().transpose() * &l_inv_r;
    let g_inv_u = factor.solve_g(&u);
    let mut mean = &h_star * state.theta_hat() + &r * state.qy();
    let m = points.nrows();
    let mut c_star: Vec<f64> = (0..m)
        .map(|j| {
            let trend_term = if factor.q() > 0 { u.column(j).dot(&g_inv_u.column(j)) } else { 0.0 };
            (1.0 + fitted.eta - l_inv_r.column(j).norm_squared() + trend_term).max(0.0)
        })
        .collect();

    let exact: Vec<Option<usize>> = if fitted.eta == 0.0 {
        (0..m).map(|j| find_design_row(&fitted.design, points, j)).collect()
    } else {
        vec![None; m]
    };
    // R^-1 r(x_i) = e_i exactly at a design point of an interpolating model.
    for (j, hit) in exact.iter().enumerate() {
        if let Some(i) = *hit {
            mean.row_mut(j).copy_from(&fitted.response.row(i));
            c_star[j] = 0.0;
        }
    }
    Ok(CorePrediction {
        mean,
        c_star,
        exact,
        l_inv_r,
        u,
    })
}

fn find_design_row(design: &DMatrix<f64>, points: &DMatrix<f64>, j: usize) -> Option<usize> {
    (0..design.nrows()).find(|&i| design.row(i).iter().zip(points.row(j).iter()).all(|(a, b)| a == b))
}

/// Predictive summaries of a single-output model.
pub fn predict(model: &GaSPModel, points: &DMatrix<f64>, testing_trend: Option<&DMatrix<f64>>) -> Result<PredictiveSummary> {
    predict_with(model, points, testing_trend, SdKind::TStd)
}

pub fn predict_with(
    model: &GaSPModel,
    points: &DMatrix<f64>,
    testing_trend: Option<&DMatrix<f64>>,
    sd_kind: SdKind,
) -> Result<PredictiveSummary> {
    let core = predict_core(&model.inner, points, testing_trend)?;
    let s2 = model.sigma2_hat();
    let scale = core.c_star.iter().map(|c| (s2 * c).sqrt()).collect();
    PredictiveSummary::from_parts(core.mean.column(0).iter().copied().collect(), scale, model.dof(), sd_kind)
}

/// Correlation-scale joint predictive matrix `C**` between testing inputs.
pub(crate) fn joint_c_star(fitted: &Fitted, points: &DMatrix<f64>, core: &CorePrediction) -> Result<DMatrix<f64>> {
    let factor = fitted.state.factor();
    let cross = DistanceTensor::within(points).corr(&fitted.spec, &fitted.beta)?;
    let g_inv_u = factor.solve_g(&core.u);
    let mut c = cross - core.l_inv_r.transpose() * &core.l_inv_r;
    if factor.q() > 0 {
        c += core.u.transpose() * g_inv_u;
    }
    let m = points.nrows();
    for j in 0..m {
        c[(j, j)] += fitted.eta;
    }
    let mut c = (&c + c.transpose()) * 0.5;
    for (j, hit) in core.exact.iter().enumerate() {
        if hit.is_some() {
            c.row_mut(j).fill(0.0);
            c.column_mut(j).fill(0.0);
        }
    }
    Ok(c)
}

/// Lower factor of a positive semidefinite matrix; pivots below a relative
/// tolerance give zero columns, clearly negative pivots are an error.
pub(crate) fn semidefinite_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let max_diag = a.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE) * (m.max(1) as f64);
    let mut l = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(GaspError::Numerical(format!(
                "joint predictive covariance is not positive semidefinite (pivot {d:e} at testing point {}); \
                 consider a nugget or separating near-duplicate testing points",
                j + 1
            )));
        }
        if d <= tol {
            continue;
        }
        let piv = d.sqrt();
        l[(j, j)] = piv;
        for i in (j + 1)..m {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / piv;
        }
    }
    Ok(l)
}

/// Draws `num_sample` joint samples (`m x num_sample`) from the multivariate t
/// predictive law `mean + sqrt(sigma2) z / sqrt(w)`, `z ~ N(0, C**)`, `w ~ chi2_nu / nu`.
pub fn simulate(
    model: &GaSPModel,
    points: &DMatrix<f64>,
    testing_trend: Option<&DMatrix<f64>>,
    num_sample: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if num_sample < 1 {
        return Err(GaspError::InvalidArgument("num_sample must be at least 1".into()));
    }
    let fitted = &model.inner;
    let core = predict_core(fitted, points, testing_trend)?;
    let chol = semidefinite_cholesky(&joint_c_star(fitted, points, &core)?)?;
    let m = points.nrows();
    let dof = model.dof() as f64;
    let sigma = model.sigma2_hat().sqrt();
    let chi = ChiSquared::new(dof).map_err(|e| GaspError::Numerical(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(m, num_sample);
    let mut z = DVector::zeros(m);
    for s in 0..num_sample {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let w: f64 = chi.sample(&mut rng) / dof;
        let draw = &chol * &z * (sigma / w.sqrt());
        for j in 0..m {
            out[(j, s)] = core.mean[(j, 0)] + draw[j];
        }
    }
    Ok(out)
}

/// Leave-one-out predictions with `(beta, eta)` held at the full-data estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct LooSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// t scale of each fold's predictive law.
    pub scale: Vec<f64>,
    /// `(y_i - mean_i) / scale_i`, t-distributed with `dof` degrees of freedom.
    pub std_resid: Vec<f64>,
    pub dof: usize,
}

impl LooSummary {
    /// Fraction of standardized residuals inside the equal-tailed interval at `level`.
    pub fn coverage(&self, level: f64) -> Result<f64> {
        let t = t_quantile(self.dof, 0.5 + level / 2.0)?;
        let inside = self.std_resid.iter().filter(|r| r.abs() <= t).count();
        Ok(inside as f64 / self.std_resid.len() as f64)
    }
}

/// Closed-form leave-one-out: with `Q` the projected precision,
/// `y_i - mean_i = (Qy)_i / Q_ii`, `S2_{-i} = S2 - (Qy)_i^2 / Q_ii`, `c**_i = 1 / Q_ii`.
pub fn leave_one_out(model: &GaSPModel) -> Result<LooSummary> {
    loo_columns(&model.inner).map(|mut v| v.remove(0))
}

pub(crate) fn loo_columns(fitted: &Fitted) -> Result<Vec<LooSummary>> {
    let state = &fitted.state;
    let (n, q) = (state.n(), state.q());
    if n < 3 || n - 1 <= q {
        return Err(GaspError::DegreesOfFreedom { n: n.saturating_sub(1), q });
    }
    let dof = n - 1 - q;
    let qm = state.factor().q_matrix();
    let factor = if dof > 2 { (dof as f64 / (dof as f64 - 2.0)).sqrt() } else { 1.0 };
    (0..state.k())
        .map(|j| {
            let s2 = state.s2()[j];
            let mut out = LooSummary {
                mean: Vec::with_capacity(n),
                sd: Vec::with_capacity(n),
                scale: Vec::with_capacity(n),
                std_resid: Vec::with_capacity(n),
                dof,
            };
            for i in 0..n {
                let qii = qm[(i, i)];
                if !(qii > 0.0) {
                    return Err(GaspError::Numerical(format!("non-positive leave-one-out precision at point {}", i + 1)));
                }
                let qy = state.qy()[(i, j)];
                let resid = qy / qii;
                let s2_fold = (s2 - qy * qy / qii).max(0.0);
                let scale = (s2_fold / dof as f64 / qii).sqrt();
                out.mean.push(fitted.response[(i, j)] - resid);
                out.scale.push(scale);
                out.sd.push(scale * factor);
                out.std_resid.push(if scale > 0.0 { resid / scale } else { 0.0 });
            }
            Ok(out)
        })
        .collect()
}

/// Root mean squared error, empirical 95% coverage and mean 95% interval length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub p_ci95: f64,
    pub l_ci95: f64,
}

/// Interval endpoints count as covered.
pub fn metrics(pred: &PredictiveSummary, truth: &[f64]) -> Result<Metrics> {
    metrics_from_slices(&pred.mean, &pred.lower95, &pred.upper95, truth)
}

/// Same quantities pooled over every entry of `m x k` summaries.
pub fn metrics_matrix(mean: &DMatrix<f64>, lower: &DMatrix<f64>, upper: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Metrics> {
    if truth.shape() != mean.shape() || lower.shape() != mean.shape() || upper.shape() != mean.shape() {
        return Err(GaspError::DimensionMismatch {
            what: "metric inputs",
            expected: mean.len(),
            found: truth.len(),
        });
    }
    metrics_from_slices(mean.as_slice(), lower.as_slice(), upper.as_slice(), truth.as_slice())
}

fn metrics_from_slices(mean: &[f64], lower: &[f64], upper: &[f64], truth: &[f64]) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(GaspError::InvalidArgument("metrics need at least one testing point".into()));
    }
    if truth.len() != mean.len() {
        return Err(GaspError::DimensionMismatch {
            what: "truth length",
            expected: mean.len(),
            found: truth.len(),
        });
    }
    let m = truth.len() as f64;
    let sse: f64 = mean.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    let covered = (0..truth.len()).filter(|&i| lower[i] <= truth[i] && truth[i] <= upper[i]).count();
    let width: f64 = lower.iter().zip(upper).map(|(l, u)| u - l).sum();
    Ok(Metrics {
        rmse: (sse / m).sqrt(),
        p_ci95: covered as f64 / m,
        l_ci95: width / m,
    })
}
