//! Parallel partial emulation of vector outputs: one correlation matrix
//! shared by all `k` output columns, with per-column trend coefficients and
//! variances. The pooled objective is the sum of the per-column marginal
//! likelihoods under the shared correlation.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::fitting::{FitDiagnostics, FitOptions, Fitted, GaSPModel};
use crate::kernels::{InverseRange, KernelSpec};
use crate::marginal::MarginalState;
use crate::prediction::{predict_core, t_quantile, SdKind};
use crate::priors::{default_jr_params, JrPriorParams};
use crate::trend::Trend;

#[derive(Clone, Debug)]
pub struct PPGaSPModel {
    pub(crate) inner: Fitted,
}

impl PPGaSPModel {
    pub fn design(&self) -> &DMatrix<f64> {
        &self.inner.design
    }

    /// `n x k` outputs.
    pub fn response(&self) -> &DMatrix<f64> {
        &self.inner.response
    }

    pub fn k(&self) -> usize {
        self.inner.response.ncols()
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

    pub fn eta_hat(&self) -> f64 {
        self.inner.eta
    }

    /// `q x k` trend coefficients.
    pub fn theta_hat(&self) -> &DMatrix<f64> {
        self.inner.state.theta_hat()
    }

    /// Per-column variances `S^2_j / (n - q)`.
    pub fn sigma2_hat(&self) -> &[f64] {
        &self.inner.sigma2
    }

    pub fn dof(&self) -> usize {
        self.inner.dof()
    }

    pub fn state(&self) -> &MarginalState {
        &self.inner.state
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.inner.diagnostics
    }

    /// The single-output model of column `j` at the shared parameters.
    pub fn column_model(&self, j: usize) -> Result<GaSPModel> {
        let y = DVector::from_column_slice(self.inner.response.column(j).as_slice());
        GaSPModel::from_parameters(
            &self.inner.design,
            &y,
            &self.inner.trend,
            &self.inner.spec,
            &self.inner.options,
            self.inner.beta.clone(),
            self.inner.eta,
            self.inner.diagnostics.clone(),
        )
    }

    /// Rebuilds a model at given parameters without optimizing.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parameters(
        design: &DMatrix<f64>,
        response: &DMatrix<f64>,
        trend: &Trend,
        spec: &KernelSpec,
        options: &FitOptions,
        beta: InverseRange,
        eta: f64,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        let jr = default_jr_params(design, options.scale_rule)?;
        Ok(PPGaSPModel {
            inner: Fitted::assemble(design, response, trend, spec, options, jr, beta, eta, diagnostics)?,
        })
    }
}

/// Fits the shared correlation parameters by maximizing the pooled marginal posterior.
pub fn fit_ppgasp(
    design: &DMatrix<f64>,
    response: &DMatrix<f64>,
    trend: &Trend,
    spec: &KernelSpec,
    options: &FitOptions,
) -> Result<PPGaSPModel> {
    Ok(PPGaSPModel {
        inner: Fitted::fit(design, response, trend, spec, options)?,
    })
}

/// Per-output predictive summaries, each `m x k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PPPrediction {
    pub mean: DMatrix<f64>,
    pub sd: DMatrix<f64>,
    pub lower95: DMatrix<f64>,
    pub upper95: DMatrix<f64>,
    pub dof: usize,
}

pub fn predict_ppgasp(
    model: &PPGaSPModel,
    points: &DMatrix<f64>,
    testing_trend: Option<&DMatrix<f64>>,
) -> Result<PPPrediction> {
    predict_ppgasp_with(model, points, testing_trend, SdKind::TStd)
}

pub fn predict_ppgasp_with(
    model: &PPGaSPModel,
    points: &DMatrix<f64>,
    testing_trend: Option<&DMatrix<f64>>,
    sd_kind: SdKind,
) -> Result<PPPrediction> {
    let core = predict_core(&model.inner, points, testing_trend)?;
    let dof = model.dof();
    let t = t_quantile(dof, 0.975)?;
    let sd_factor = match sd_kind {
        SdKind::TStd if dof > 2 => (dof as f64 / (dof as f64 - 2.0)).sqrt(),
        _ => 1.0,
    };
    let (m, k) = core.mean.shape();
    let sigma: Vec<f64> = model.sigma2_hat().iter().map(|s| s.sqrt()).collect();
    let scale = DMatrix::from_fn(m, k, |i, j| sigma[j] * core.c_star[i].sqrt());
    Ok(PPPrediction {
        sd: &scale * sd_factor,
        lower95: &core.mean - &scale * t,
        upper95: &core.mean + &scale * t,
        mean: core.mean,
        dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::fit;
    use crate::kernels::KernelFamily;
    use crate::marginal::{log_marginal_lik, log_marginal_lik_grad, build_state_with};
    use crate::kernels::DistanceTensor;
    use crate::prediction::predict;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64, n: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(n, k, |i, j| {
            (3.0 * x[(i, 0)] + 0.4 * j as f64).sin() + (j as f64 + 1.0) * x[(i, 1)].powi(2)
        });
        (x, y)
    }

    #[test]
    fn single_column_matches_scalar_path() {
        let (x, y) = data(1, 20, 1);
        let spec = KernelSpec::matern52(2);
        let opts = FitOptions::default();
        let pp = fit_ppgasp(&x, &y, &Trend::Constant, &spec, &opts).unwrap();
        let scalar = fit(&x, &y.column(0).into_owned(), &Trend::Constant, &spec, &opts).unwrap();
        assert_eq!(pp.beta_hat(), scalar.beta_hat());
        assert_eq!(pp.sigma2_hat()[0], scalar.sigma2_hat());
        let xs = DMatrix::from_fn(7, 2, |i, j| 0.05 + 0.13 * i as f64 + 0.01 * j as f64);
        let a = predict_ppgasp(&pp, &xs, None).unwrap();
        let b = predict(&scalar, &xs, None).unwrap();
        for i in 0..7 {
            assert_eq!(a.mean[(i, 0)], b.mean[i]);
            assert_eq!(a.upper95[(i, 0)], b.upper95[i]);
        }
    }

    #[test]
    fn duplicated_columns_share_everything() {
        // The prior enters the pooled objective once, so the argmax matches the
        // single-column fit only when the prior is flat.
        let (x, y1) = data(2, 18, 1);
        let y = DMatrix::from_fn(18, 2, |i, _| y1[(i, 0)]);
        let spec = KernelSpec::matern52(2);
        let opts = FitOptions {
            prior: crate::priors::PriorChoice::Flat,
            max_eval: 200,
            xtol_rel: 1e-10,
            ..FitOptions::default()
        };
        let pp = fit_ppgasp(&x, &y, &Trend::Constant, &spec, &opts).unwrap();
        let single = fit(&x, &y1.column(0).into_owned(), &Trend::Constant, &spec, &opts).unwrap();
        assert_eq!(pp.sigma2_hat()[0], pp.sigma2_hat()[1]);
        assert_eq!(pp.theta_hat()[(0, 0)], pp.theta_hat()[(0, 1)]);
        for (a, b) in pp.beta_hat().as_slice().iter().zip(single.beta_hat().as_slice()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-5);
        }
    }

    #[test]
    fn pooled_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (x, y) = data(10 + seed, 12, 5);
            let spec = KernelSpec::uniform(KernelFamily::Matern52, 2);
            let dist = DistanceTensor::within(&x);
            let h = Trend::Constant.design_basis(&x).unwrap();
            let omega = [0.4, 1.1, (0.02f64).ln()];
            let f = |w: &[f64]| {
                let beta = InverseRange::from_log(&w[..2]).unwrap();
                log_marginal_lik(&build_state_with(&dist, &h, &y, &spec, &beta, w[2].exp()).unwrap()).unwrap()
            };
            let beta = InverseRange::from_log(&omega[..2]).unwrap();
            let st = build_state_with(&dist, &h, &y, &spec, &beta, omega[2].exp()).unwrap();
            let g = log_marginal_lik_grad(&st, &dist, &spec, &beta, true).unwrap();
            for i in 0..3 {
                let mut up = omega;
                let mut dn = omega;
                up[i] += 1e-6;
                dn[i] -= 1e-6;
                let fd = (f(&up) - f(&dn)) / 2e-6;
                assert!((g[i] - fd).abs() / fd.abs().max(1e-3) < 1e-4);
            }
        }
    }

    #[test]
    fn column_scaling_is_equivariant() {
        let (x, y) = data(4, 16, 3);
        let spec = KernelSpec::matern52(2);
        let opts = FitOptions::default();
        let base = fit_ppgasp(&x, &y, &Trend::Constant, &spec, &opts).unwrap();
        let mut ys = y.clone();
        ys.column_mut(1).scale_mut(-4.0);
        let scaled = fit_ppgasp(&x, &ys, &Trend::Constant, &spec, &opts).unwrap();
        assert_relative_eq!(scaled.sigma2_hat()[1], 16.0 * base.sigma2_hat()[1], max_relative = 1e-6);
        assert_relative_eq!(scaled.theta_hat()[(0, 1)], -4.0 * base.theta_hat()[(0, 1)], max_relative = 1e-6);
        for (a, b) in scaled.beta_hat().as_slice().iter().zip(base.beta_hat().as_slice()) {
            assert!((a.ln() - b.ln()).abs() < 1e-4);
        }
    }

    #[test]
    fn design_points_interpolate_every_column() {
        let (x, y) = data(5, 14, 4);
        let pp = fit_ppgasp(&x, &y, &Trend::Linear, &KernelSpec::matern52(2), &FitOptions::default()).unwrap();
        let pred = predict_ppgasp(&pp, &x, None).unwrap();
        assert_eq!(pred.mean, y);
        assert!(pred.sd.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn degenerate_column_is_named() {
        let (x, mut y) = data(6, 10, 3);
        y.column_mut(2).fill(1.5);
        let err = fit_ppgasp(&x, &y, &Trend::Constant, &KernelSpec::matern52(2), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, crate::error::GaspError::DegenerateResponse { column: Some(2) }));
    }
}
