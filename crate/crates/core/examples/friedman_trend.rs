//! Compare constant and linear mean functions on the Friedman function.

use gasp::bench::uniform_points;
use gasp::testbed::{maximin_lhs, TestFunction, DEFAULT_MAXIMIN_RESTARTS};
use gasp::{fit, metrics, predict, FitOptions, KernelSpec, Trend};
use nalgebra::DVector;

fn main() -> gasp::Result<()> {
    let f = TestFunction::Friedman5;
    let x = maximin_lhs(40, 5, 0, DEFAULT_MAXIMIN_RESTARTS)?.points;
    let y = DVector::from_vec(f.eval_rows(&x)?);
    let test = uniform_points(200, 5, 1000);
    let truth = f.eval_rows(&test)?;

    for (name, trend) in [("constant", Trend::Constant), ("linear", Trend::Linear)] {
        let model = fit(&x, &y, &trend, &KernelSpec::matern52(5), &FitOptions::default())?;
        let m = metrics(&predict(&model, &test, None)?, &truth)?;
        println!(
            "{name:>8}: rmse {:.4}  P_CI {:.3}  L_CI {:.4}  theta {:?}",
            m.rmse,
            m.p_ci95,
            m.l_ci95,
            model.theta_hat().as_slice().iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
