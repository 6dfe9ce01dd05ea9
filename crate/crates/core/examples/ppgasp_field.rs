//! Emulate 500 outputs that share one design with a parallel partial
//! emulator: one set of range parameters, a mean and variance per output.

use gasp::prediction::metrics_matrix;
use gasp::testbed::maximin_lhs;
use gasp::{fit_ppgasp, predict_ppgasp, FitOptions, KernelSpec, Trend};
use nalgebra::DMatrix;
use std::f64::consts::PI;

fn field(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), k, |i, j| {
        let s = j as f64 / k as f64;
        (2.0 * PI * (x[(i, 0)] + s)).sin() * (-x[(i, 1)]).exp() + (1.0 + s) * (x[(i, 1)] - 0.4).abs().powf(1.5)
    })
}

fn main() -> gasp::Result<()> {
    let k = 500;
    let x = maximin_lhs(50, 2, 1, 50)?.points;
    let y = field(&x, k);
    let model = fit_ppgasp(&x, &y, &Trend::Constant, &KernelSpec::matern52(2), &FitOptions::default())?;
    let gamma = model.beta_hat().gamma();
    println!("shared ranges {:.4} {:.4}", gamma[0], gamma[1]);
    let s2 = model.sigma2_hat();
    println!("sigma2 of outputs 0, 250, 499: {:.4} {:.4} {:.4}", s2[0], s2[250], s2[499]);

    let test = maximin_lhs(100, 2, 2, 10)?.points;
    let pred = predict_ppgasp(&model, &test, None)?;
    let m = metrics_matrix(&pred.mean, &pred.lower95, &pred.upper95, &field(&test, k))?;
    println!("pooled rmse {:.2e}  coverage {:.3}", m.rmse, m.p_ci95);
    Ok(())
}
