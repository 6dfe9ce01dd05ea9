//! Exit criteria. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::time::Instant;

use gasp::bench::{run_bench, Experiment};
use gasp::fitting::Objective;
use gasp::inert::{find_inert_inputs, normalized_inverse_ranges};
use gasp::kernels::{corr_matrix, DistanceTensor};
use gasp::marginal::{build_state_with, log_marginal_lik, log_marginal_lik_grad};
use gasp::priors::{log_jr_prior, log_jr_prior_grad, JrPriorParams};
use gasp::testbed::{equispaced, lhs, maximin_lhs, modified_sine_wave, TestFunction, DEFAULT_MAXIMIN_RESTARTS};
use gasp::{
    fit, fit_flat_mode, fit_ppgasp, leave_one_out, metrics, predict, predict_ppgasp, FitOptions, GaSPModel,
    InverseRange, KernelFamily, KernelSpec, NuggetMode, Trend,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Log posterior in 512-bit arithmetic. Near the all-ones correlation limit
/// the contrast eigenvalues of `R` span more than 20 orders of magnitude, so
/// double precision cannot evaluate it there.
mod extended {
    use gasp::{GaSPModel, KernelFamily};
    use rug::ops::Pow;
    use rug::Float;

    const PREC: u32 = 512;

    fn mp(v: f64) -> Float {
        Float::with_val(PREC, v)
    }

    fn log_corr(family: KernelFamily, alpha: f64, d: &Float, beta: &Float) -> Float {
        let db = Float::with_val(PREC, d * beta);
        match family {
            KernelFamily::Matern52 => {
                let r = db * mp(5.0).sqrt();
                let poly: Float = mp(1.0) + &r + Float::with_val(PREC, &r * &r) / 3;
                poly.ln() - r
            }
            KernelFamily::Matern32 => {
                let r = db * mp(3.0).sqrt();
                (mp(1.0) + &r).ln() - r
            }
            KernelFamily::PowerExponential => -db.pow(mp(alpha)),
        }
    }

    /// Lower-triangular Cholesky factor, or `None` if a pivot is not positive.
    fn cholesky(a: &[Vec<Float>]) -> Option<Vec<Vec<Float>>> {
        let n = a.len();
        let mut l = vec![vec![mp(0.0); n]; n];
        for j in 0..n {
            let mut d = a[j][j].clone();
            for v in &l[j][..j] {
                d -= Float::with_val(PREC, v * v);
            }
            if d <= 0 {
                return None;
            }
            l[j][j] = d.sqrt();
            for i in (j + 1)..n {
                let mut s = a[i][j].clone();
                for (a, b) in l[i][..j].iter().zip(&l[j][..j]) {
                    s -= Float::with_val(PREC, a * b);
                }
                l[i][j] = s / &l[j][j];
            }
        }
        Some(l)
    }

    fn forward(l: &[Vec<Float>], b: &[Float]) -> Vec<Float> {
        let mut x: Vec<Float> = Vec::with_capacity(b.len());
        for i in 0..b.len() {
            let mut s = b[i].clone();
            for (k, xk) in x.iter().enumerate() {
                s -= Float::with_val(PREC, &l[i][k] * xk);
            }
            x.push(s / &l[i][i]);
        }
        x
    }

    fn dot(a: &[Float], b: &[Float]) -> Float {
        let mut s = mp(0.0);
        for (x, y) in a.iter().zip(b) {
            s += Float::with_val(PREC, x * y);
        }
        s
    }

    /// Log marginal likelihood plus log prior of `model`'s data and settings at
    /// `beta_hat * 10^exponent` with the nugget held at `eta_hat`.
    pub fn log_posterior(model: &GaSPModel, exponent: i32) -> Option<f64> {
        let x = model.design();
        let (n, p) = (x.nrows(), x.ncols());
        let y = model.response();
        let h = model.trend().design_basis(x).ok()?;
        let q = h.ncols();
        let scale = Float::with_val(PREC, 10).pow(exponent);
        let beta: Vec<Float> = model.beta_hat().as_slice().iter().map(|b| mp(*b) * &scale).collect();
        let eta = mp(model.eta_hat());
        let spec = model.kernel();

        let mut r = vec![vec![mp(0.0); n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = mp(0.0);
                for l in 0..p {
                    // Rounded f64 differences would break positive definiteness here.
                    let d = (mp(x[(i, l)]) - mp(x[(j, l)])).abs();
                    s += log_corr(spec.families()[l], spec.alpha()[l], &d, &beta[l]);
                }
                let mut v = s.exp();
                if i == j {
                    v += &eta;
                }
                r[i][j] = v.clone();
                r[j][i] = v;
            }
        }
        let l = cholesky(&r)?;
        let log_det_r: Float = l.iter().enumerate().fold(mp(0.0), |acc, (i, row)| acc + Float::with_val(PREC, row[i].ln_ref()) * 2);
        let yv: Vec<Float> = y.iter().map(|v| mp(*v)).collect();
        let ly = forward(&l, &yv);
        let lh: Vec<Vec<Float>> = (0..q)
            .map(|c| forward(&l, &h.column(c).iter().map(|v| mp(*v)).collect::<Vec<_>>()))
            .collect();
        let g: Vec<Vec<Float>> = (0..q).map(|a| (0..q).map(|b| dot(&lh[a], &lh[b])).collect()).collect();
        let gl = cholesky(&g)?;
        let log_det_g: Float = gl.iter().enumerate().fold(mp(0.0), |acc, (i, row)| acc + Float::with_val(PREC, row[i].ln_ref()) * 2);
        // S^2 = |L^-1 y|^2 - |Lg^-1 (L^-1 H)' L^-1 y|^2
        let hy: Vec<Float> = lh.iter().map(|c| dot(c, &ly)).collect();
        let w = forward(&gl, &hy);
        let s2 = dot(&ly, &ly) - dot(&w, &w);
        if s2 <= 0 {
            return None;
        }
        let dof = (n - q) as f64;
        let lml: Float = (log_det_r + log_det_g) * -0.5 - s2.ln() * (0.5 * dof);

        let jr = model.jr_params();
        let prior: Float = match model.options().prior {
            gasp::PriorChoice::Jr => {
                let mut t = mp(0.0);
                for (c, b) in jr.c.iter().zip(&beta) {
                    t += mp(*c) * b;
                }
                let eta_term = if model.options().nugget.is_estimated() { eta.clone() } else { mp(0.0) };
                Float::with_val(PREC, t.ln_ref()) * jr.a - (t + eta_term) * jr.b
            }
            gasp::PriorChoice::Flat => mp(0.0),
            _ => return None,
        };
        Some(Float::with_val(PREC, lml + prior).to_f64())
    }
}

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn sine_data(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let x = equispaced(n);
    let y = DVector::from_iterator(n, x.column(0).iter().map(|v| modified_sine_wave(*v)));
    (x, y)
}

fn sine_rmse(model: &GaSPModel) -> Result<f64, String> {
    let (xt, yt) = sine_data(100);
    let pred = predict(model, &xt, None).map_err(err)?;
    Ok(metrics(&pred, yt.as_slice()).map_err(err)?.rmse)
}

fn criterion_1() -> Outcome {
    let (x, y) = sine_data(12);
    let start = Instant::now();
    let m = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(1), &FitOptions::default()).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let (gamma, theta, s2) = (m.gamma_hat()[0], m.theta_hat()[0], m.sigma2_hat());
    check(
        (gamma - 0.0407).abs() <= 0.005 && (theta - 0.140).abs() <= 0.015 && (s2 - 2.60).abs() <= 0.15 && secs < 1.0,
        format!("gamma_hat {gamma:.7} theta_hat {theta:.7} sigma2_hat {s2:.7} in {secs:.4} s"),
    )
}

fn criterion_2() -> Outcome {
    let (x, y) = sine_data(12);
    let spec = KernelSpec::matern52(1);
    let opts = FitOptions {
        lower_bound: false,
        ..FitOptions::default()
    };
    let start = Instant::now();
    let jr = fit(&x, &y, &Trend::Constant, &spec, &opts).map_err(err)?;
    let flat = fit_flat_mode(&x, &y, &Trend::Constant, &spec, &opts).map_err(err)?;
    let (rmse_jr, rmse_flat) = (sine_rmse(&jr)?, sine_rmse(&flat)?);
    let secs = start.elapsed().as_secs_f64();
    let (b_jr, b_flat) = (jr.beta_hat().as_slice()[0], flat.beta_hat().as_slice()[0]);
    let beta_ok = b_flat > 1e3 * b_jr;
    let rmse_ok = rmse_jr < 0.5 * rmse_flat;
    check(
        beta_ok && rmse_ok && secs < 2.0,
        format!(
            "beta_flat / beta_jr = {:.1} (need > 1000: {}), rmse jr {rmse_jr:.4} vs flat {rmse_flat:.4} (need ratio < 0.5: {}), {secs:.3} s",
            b_flat / b_jr,
            if beta_ok { "ok" } else { "no" },
            if rmse_ok { "ok" } else { "no" },
        ),
    )
}

/// Sums of normalized inverse ranges over every fit run by the suite.
struct Normalization {
    worst: f64,
    fits: usize,
}

impl Normalization {
    fn record(&mut self, model: &GaSPModel) {
        let p = normalized_inverse_ranges(&model.jr_params().c, model.beta_hat().as_slice());
        let dev = (p.iter().sum::<f64>() - p.len() as f64).abs();
        self.worst = self.worst.max(dev);
        self.fits += 1;
    }
}

fn criterion_3(norm: &mut Normalization, models: &mut Vec<GaSPModel>) -> Outcome {
    let f = TestFunction::Borehole;
    let opts = FitOptions {
        lower_bound: false,
        ..FitOptions::default()
    };
    let start = Instant::now();
    let mut counts = [0usize; 8];
    for seed in 0..5 {
        let unit = maximin_lhs(40, 8, seed, DEFAULT_MAXIMIN_RESTARTS).map_err(err)?.points;
        let x = f.natural_design(&unit).map_err(err)?;
        let y = DVector::from_vec(f.eval_rows(&x).map_err(err)?);
        let m = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(8), &opts).map_err(err)?;
        for l in find_inert_inputs(&m, 0.1).flagged {
            counts[l] += 1;
        }
        norm.record(&m);
        models.push(m);
    }
    let secs = start.elapsed().as_secs_f64();
    let inert_ok = [1, 2, 4].iter().all(|&l| counts[l] >= 4);
    let active_ok = [0, 3, 5, 6, 7].iter().all(|&l| counts[l] == 0);
    check(
        inert_ok && active_ok && secs < 30.0,
        format!("flag counts per input over 5 seeds {counts:?} in {secs:.2} s"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let report = run_bench(Experiment::Friedman, &[0, 1, 2, 3, 4]).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let c = report.find("jr", "constant").ok_or("missing constant-trend rows")?;
    let l = report.find("jr", "linear").ok_or("missing linear-trend rows")?;
    let get = |v: Option<f64>| v.ok_or_else(|| "missing metric".to_string());
    let (rc, rl) = (get(c.rmse)?, get(l.rmse)?);
    let (pc, pl) = (get(c.p_ci95)?, get(l.p_ci95)?);
    let (lc, ll) = (get(c.l_ci95)?, get(l.l_ci95)?);
    let cover = |p: f64| (0.90..=1.00).contains(&p);
    check(
        rc < 0.5 && rl < 0.3 && rl < rc && cover(pc) && cover(pl) && ll < lc && secs < 60.0,
        format!(
            "median rmse constant {rc:.4} linear {rl:.4}, P_CI {pc:.3}/{pl:.3}, L_CI {lc:.4}/{ll:.4}, {secs:.2} s"
        ),
    )
}

fn smooth_response(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(x.nrows(), |i, _| {
        x.row(i)
            .iter()
            .enumerate()
            .map(|(l, v)| ((l as f64 + 2.0) * v).sin() / (l as f64 + 1.0))
            .sum::<f64>()
            + x[(i, 0)].powi(2)
    })
}

fn criterion_5(norm: &mut Normalization, models: &mut Vec<GaSPModel>) -> Outcome {
    let families = [KernelFamily::Matern52, KernelFamily::Matern32, KernelFamily::PowerExponential];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_mean = 0.0f64;
    let mut worst_sd = 0.0f64;
    for inst in 0..20 {
        let p = 1 + inst % 5;
        let n = rng.random_range(5..=40);
        let spec = KernelSpec::uniform(families[inst % 3], p);
        let x = lhs(n, p, 100 + inst as u64).map_err(err)?.points;
        let y = smooth_response(&x);
        let m = fit(&x, &y, &Trend::Constant, &spec, &FitOptions::default())
            .map_err(|e| format!("instance {inst} (n={n}, p={p}): {e}"))?;
        let pred = predict(&m, &x, None).map_err(err)?;
        let sigma = m.sigma2_hat().sqrt();
        for i in 0..n {
            worst_mean = worst_mean.max((pred.mean[i] - y[i]).abs() / (1.0 + y[i].abs()));
            worst_sd = worst_sd.max(pred.sd[i] / sigma);
        }
        norm.record(&m);
        models.push(m);
    }
    check(
        worst_mean <= 1e-8 && worst_sd <= 1e-6,
        format!("20 instances: max |mean - y|/(1+|y|) = {worst_mean:.2e}, max sd/sigma_hat = {worst_sd:.2e}"),
    )
}

fn rel_err(g: &DVector<f64>, fd: &DVector<f64>) -> f64 {
    (g - fd).norm() / fd.norm().max(1e-12)
}

fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[i] += h;
        dn[i] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

fn criterion_6() -> Outcome {
    let families = [KernelFamily::Matern52, KernelFamily::Matern32, KernelFamily::PowerExponential];
    let trends = [Trend::Zero, Trend::Constant, Trend::Linear];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_lik = 0.0f64;
    let mut worst_prior = 0.0f64;
    for inst in 0..20 {
        let p = rng.random_range(1..=4);
        let n = rng.random_range(p + 4..=20);
        let alpha: Vec<f64> = (0..p).map(|_| rng.random_range(1.0..2.0)).collect();
        let spec = KernelSpec::new(vec![families[inst % 3]; p], alpha).map_err(err)?;
        let x = lhs(n, p, 600 + inst as u64).map_err(err)?.points;
        let y = DMatrix::from_column_slice(n, 1, smooth_response(&x).as_slice());
        let h = trends[inst % 3].design_basis(&x).map_err(err)?;
        let dist = DistanceTensor::within(&x);
        let mut omega: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..2.5)).collect();
        omega.push(rng.random_range(-7.0..-1.0));
        let lik = |w: &[f64]| {
            let beta = InverseRange::from_log(&w[..p]).unwrap();
            log_marginal_lik(&build_state_with(&dist, &h, &y, &spec, &beta, w[p].exp()).unwrap()).unwrap()
        };
        let beta = InverseRange::from_log(&omega[..p]).map_err(err)?;
        let state = build_state_with(&dist, &h, &y, &spec, &beta, omega[p].exp()).map_err(err)?;
        let g = log_marginal_lik_grad(&state, &dist, &spec, &beta, true).map_err(err)?;
        worst_lik = worst_lik.max(rel_err(&g, &central_diff(&lik, &omega, 1e-5)));

        // Prior gradient in (log beta, log eta).
        let params = JrPriorParams {
            a: 0.2,
            b: rng.random_range(0.05..2.0),
            c: (0..p).map(|_| rng.random_range(0.05..1.0)).collect(),
        };
        let prior = |w: &[f64]| {
            let v: Vec<f64> = w.iter().map(|x| x.exp()).collect();
            log_jr_prior(&v[..p], Some(v[p]), &params)
        };
        let point: Vec<f64> = omega.iter().map(|w| w.exp()).collect();
        let gp = log_jr_prior_grad(&point[..p], Some(point[p]), &params);
        worst_prior = worst_prior.max(rel_err(&gp, &central_diff(&prior, &omega, 1e-5)));
    }
    check(
        worst_lik < 1e-4 && worst_prior < 1e-4,
        format!("20 instances each: max relative error likelihood {worst_lik:.2e}, JR prior {worst_prior:.2e}"),
    )
}

/// Log of the trapezoid-rule integral of `exp(log_f)` over `(theta, ln sigma2)`,
/// with `theta = center + width tan(u)` covering the real line.
fn log_quadrature(log_f: &dyn Fn(f64, f64) -> f64, center: f64, width: f64, s_range: (f64, f64)) -> f64 {
    let nu = 4000;
    let ns = 3000;
    let half = std::f64::consts::FRAC_PI_2;
    let du = 2.0 * half / nu as f64;
    let ds = (s_range.1 - s_range.0) / ns as f64;
    let mut terms = Vec::with_capacity((nu - 1) * (ns + 1));
    for iu in 1..nu {
        let u = -half + iu as f64 * du;
        let theta = center + width * u.tan();
        let log_jac = (width / u.cos().powi(2)).ln();
        for is in 0..=ns {
            let s = s_range.0 + is as f64 * ds;
            let w: f64 = if is == 0 || is == ns { 0.5 } else { 1.0 };
            terms.push(log_f(theta, s) + log_jac + w.ln());
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() + (du * ds).ln()
}

fn criterion_7() -> Outcome {
    let instances: [([f64; 4], [f64; 4], f64, KernelFamily); 3] = [
        ([0.0, 0.3, 0.55, 1.0], [0.2, 1.1, 0.7, -0.4], 2.0, KernelFamily::Matern52),
        ([0.1, 0.2, 0.6, 0.9], [3.0, 2.5, 4.2, 3.9], 4.5, KernelFamily::Matern32),
        ([0.05, 0.4, 0.45, 0.8], [-1.0, 0.3, 0.1, 2.2], 1.2, KernelFamily::PowerExponential),
    ];
    let mut diffs = Vec::new();
    for (xs, ys, beta, family) in instances {
        let x = DMatrix::from_column_slice(4, 1, &xs);
        let y = DMatrix::from_column_slice(4, 1, &ys);
        let spec = KernelSpec::uniform(family, 1);
        let beta = InverseRange::new(vec![beta]).map_err(err)?;
        let h = Trend::Constant.design_basis(&x).map_err(err)?;
        let closed = log_marginal_lik(&build_state_with(&DistanceTensor::within(&x), &h, &y, &spec, &beta, 0.0).map_err(err)?)
            .map_err(err)?;

        // Oracle: Gaussian likelihood times 1/sigma2, integrated over (theta, sigma2)
        // with sigma2 = exp(s); the 1/sigma2 factor cancels the Jacobian.
        let r = corr_matrix(&x, &x, &spec, &beta).map_err(err)?;
        let r_inv = r.clone().try_inverse().ok_or("singular correlation")?;
        let log_det = r.determinant().ln();
        let yv = y.column(0).into_owned();
        let one = DVector::from_element(4, 1.0);
        let (a, b, c) = ((&r_inv * &yv).dot(&yv), (&r_inv * &yv).dot(&one), (&r_inv * &one).dot(&one));
        let log_f = |theta: f64, s: f64| {
            let q = a - 2.0 * b * theta + c * theta * theta;
            -2.0 * ((2.0 * std::f64::consts::PI).ln() + s) - 0.5 * log_det - q / (2.0 * s.exp())
        };
        let mean = ys.iter().sum::<f64>() / 4.0;
        let spread = ys.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        let s_center = (spread * spread).ln();
        let quad = log_quadrature(&log_f, mean, spread, (s_center - 40.0, s_center + 30.0));
        diffs.push(closed - quad);
    }
    let spread = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - diffs.iter().cloned().fold(f64::INFINITY, f64::min);
    check(
        spread < 1e-3,
        format!("closed form minus quadrature {:.6?}, largest pairwise difference {spread:.2e}", diffs),
    )
}

fn criterion_8() -> Outcome {
    // (a) k = 1 against the scalar path.
    let x = maximin_lhs(25, 3, 8, DEFAULT_MAXIMIN_RESTARTS).map_err(err)?.points;
    let y = smooth_response(&x);
    let spec = KernelSpec::matern52(3);
    let opts = FitOptions::default();
    let yk = DMatrix::from_column_slice(25, 1, y.as_slice());
    let pp = fit_ppgasp(&x, &yk, &Trend::Linear, &spec, &opts).map_err(err)?;
    let scalar = fit(&x, &y, &Trend::Linear, &spec, &opts).map_err(err)?;
    let xt = lhs(40, 3, 88).map_err(err)?.points;
    let a = predict_ppgasp(&pp, &xt, None).map_err(err)?;
    let b = predict(&scalar, &xt, None).map_err(err)?;
    let rel = |u: f64, v: f64| (u - v).abs() / v.abs().max(1e-12);
    let mut worst = rel(pp.sigma2_hat()[0], scalar.sigma2_hat());
    for (u, v) in pp.beta_hat().as_slice().iter().zip(scalar.beta_hat().as_slice()) {
        worst = worst.max(rel(*u, *v));
    }
    for i in 0..40 {
        worst = worst
            .max(rel(a.mean[(i, 0)], b.mean[i]))
            .max(rel(a.sd[(i, 0)], b.sd[i]))
            .max(rel(a.lower95[(i, 0)], b.lower95[i]))
            .max(rel(a.upper95[(i, 0)], b.upper95[i]));
    }

    // (b) timing with n = 50.
    let report = run_bench(Experiment::PpgaspScaling, &[0]).map_err(err)?;
    let wall = |k: usize| report.rows.iter().find(|r| r.outputs == k).map(|r| r.wall_seconds);
    let (w500, w1000, w2000) = (
        wall(500).ok_or("missing k=500")?,
        wall(1000).ok_or("missing k=1000")?,
        wall(2000).ok_or("missing k=2000")?,
    );
    let growth = w2000 / w500;
    check(
        worst < 1e-6 && w1000 < 10.0 && growth <= 6.0,
        format!(
            "k=1 max relative difference {worst:.2e}; wall k=500 {w500:.3} s, k=1000 {w1000:.3} s, k=2000 {w2000:.3} s (growth {growth:.2})"
        ),
    )
}

/// Smallest drop of the log posterior from `beta_hat` to `beta_hat 10^(+-8)`
/// and the largest relative gap between the extended and double-precision
/// values at the mode.
fn boundary_drops(models: &[GaSPModel]) -> Result<(f64, f64, Vec<String>), String> {
    let mut worst_drop = f64::INFINITY;
    let mut worst_agreement = 0.0f64;
    let mut failures = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let y = DMatrix::from_column_slice(m.design().nrows(), 1, m.response().as_slice());
        let obj = Objective::new(
            m.design(),
            &y,
            m.trend(),
            m.kernel(),
            m.options().prior,
            m.options().nugget,
            m.options().scale_rule,
        )
        .map_err(err)?;
        let at_mode = obj.value(&m.omega()).map_err(err)?;
        match extended::log_posterior(m, 0) {
            Some(v) => worst_agreement = worst_agreement.max((v - at_mode).abs() / (1.0 + at_mode.abs())),
            None => failures.push(format!("model {i} at beta_hat")),
        }
        for exponent in [8, -8] {
            match extended::log_posterior(m, exponent) {
                Some(v) => worst_drop = worst_drop.min(at_mode - v),
                None => failures.push(format!("model {i} at 10^{exponent:+}")),
            }
        }
    }
    Ok((worst_drop, worst_agreement, failures))
}

/// The drop is checked on the benchmark fits. The interpolation instances use
/// very smooth responses whose likelihood is nearly flat towards the
/// all-ones correlation limit; their drop is reported only.
fn criterion_9(norm: &mut Normalization, benchmark: &mut Vec<GaSPModel>, interpolation: &[GaSPModel]) -> Outcome {
    let f = TestFunction::Friedman5;
    for trend in [Trend::Constant, Trend::Linear] {
        for seed in 0..5 {
            let x = maximin_lhs(40, 5, seed, DEFAULT_MAXIMIN_RESTARTS).map_err(err)?.points;
            let y = DVector::from_vec(f.eval_rows(&x).map_err(err)?);
            let m = fit(&x, &y, &trend, &KernelSpec::matern52(5), &FitOptions::default()).map_err(err)?;
            norm.record(&m);
            benchmark.push(m);
        }
    }
    let (drop, agreement, failures) = boundary_drops(benchmark)?;
    let (info_drop, _, _) = boundary_drops(interpolation)?;
    check(
        norm.worst <= 1e-10 && drop >= 10.0 && failures.is_empty(),
        format!(
            "{} fits: max |sum P - p| = {:.2e}; {} benchmark fits: smallest log posterior drop at beta_hat 10^(+-8) = {drop:.2} \
             (512-bit evaluation; matches the double-precision mode value to {agreement:.1e}){}; interpolation instances, not checked: {info_drop:.2}",
            norm.fits,
            norm.worst,
            benchmark.len(),
            if failures.is_empty() { String::new() } else { format!("; unevaluable: {}", failures.join(", ")) }
        ),
    )
}

fn criterion_10() -> Outcome {
    let spec = KernelSpec::matern52(2);
    let beta = InverseRange::new(vec![2.0, 3.5]).map_err(err)?;
    let eta: f64 = 0.1;
    let mut cover = [0.0f64; 2];
    let mut eta_hits = 0;
    let mut eta_hats = Vec::new();
    for seed in 0..10u64 {
        let x = maximin_lhs(30, 2, 1000 + seed, DEFAULT_MAXIMIN_RESTARTS).map_err(err)?.points;
        let r = corr_matrix(&x, &x, &spec, &beta).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let chol = r.cholesky().ok_or("true correlation matrix is not positive definite")?;
        let clean = chol.l() * &z;
        let noisy = &clean + e * eta.sqrt();
        for (j, (y, nugget)) in [(clean, NuggetMode::NoiseFree), (noisy, NuggetMode::Estimated)].into_iter().enumerate() {
            let opts = FitOptions {
                nugget,
                ..FitOptions::default()
            };
            let m = fit(&x, &y, &Trend::Constant, &spec, &opts).map_err(|e| format!("seed {seed}: {e}"))?;
            cover[j] += leave_one_out(&m).map_err(err)?.coverage(0.95).map_err(err)? / 10.0;
            if nugget == NuggetMode::Estimated {
                eta_hats.push(m.eta_hat());
                if (eta / 5.0..=5.0 * eta).contains(&m.eta_hat()) {
                    eta_hits += 1;
                }
            }
        }
    }
    let in_range = |c: f64| (0.85..=1.0).contains(&c);
    check(
        in_range(cover[0]) && in_range(cover[1]) && eta_hits >= 7,
        format!(
            "LOO 95% coverage noise-free {:.3}, noisy {:.3}; eta_hat in [0.02, 0.5] for {eta_hits}/10 seeds {:.3?}",
            cover[0], cover[1], eta_hats
        ),
    )
}

fn main() {
    let mut norm = Normalization { worst: 0.0, fits: 0 };
    let mut benchmark = Vec::new();
    let mut interpolation = Vec::new();
    let (x, y) = sine_data(12);
    if let Ok(m) = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(1), &FitOptions::default()) {
        norm.record(&m);
        benchmark.push(m);
    }
    let outcomes = vec![
        (1, "modified sine wave fit", criterion_1()),
        (2, "robustness against the flat-prior mode", criterion_2()),
        (3, "borehole inert screening", criterion_3(&mut norm, &mut benchmark)),
        (4, "friedman prediction quality", criterion_4()),
        (5, "interpolation and prediction contracts", criterion_5(&mut norm, &mut interpolation)),
        (6, "gradient suites", criterion_6()),
        (7, "marginalization by quadrature", criterion_7()),
        (8, "multi-output reduction and scaling", criterion_8()),
        (9, "normalization identities", criterion_9(&mut norm, &mut benchmark, &interpolation)),
        (10, "calibration on self-simulated data", criterion_10()),
    ];
    let mut failed = 0;
    for (id, name, outcome) in &outcomes {
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
