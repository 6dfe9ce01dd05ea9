//! Fit an emulator to 15 runs of a one-dimensional simulator and predict on a
//! fine grid.

use gasp::testbed::{equispaced, higdon1};
use gasp::{fit, metrics, predict, FitOptions, KernelSpec, Trend};
use nalgebra::{DMatrix, DVector};

fn main() -> gasp::Result<()> {
    let x = equispaced(15) * 10.0;
    let y = DVector::from_iterator(15, x.column(0).iter().map(|&v| higdon1(v)));
    let model = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(1), &FitOptions::default())?;
    println!(
        "range {:.4}  theta {:.4}  sigma2 {:.4}",
        model.gamma_hat()[0],
        model.theta_hat()[0],
        model.sigma2_hat()
    );

    let grid = DMatrix::from_fn(201, 1, |i, _| 10.0 * i as f64 / 200.0);
    let pred = predict(&model, &grid, None)?;
    let truth: Vec<f64> = grid.column(0).iter().map(|&v| higdon1(v)).collect();
    for i in (0..201).step_by(25) {
        println!(
            "x {:5.2}  truth {:+.4}  mean {:+.4}  95% [{:+.4}, {:+.4}]",
            grid[(i, 0)],
            truth[i],
            pred.mean[i],
            pred.lower95[i],
            pred.upper95[i]
        );
    }
    let m = metrics(&pred, &truth)?;
    println!("rmse {:.2e}  coverage {:.3}  mean interval length {:.2e}", m.rmse, m.p_ci95, m.l_ci95);
    Ok(())
}
