//! Draw joint predictive samples and run leave-one-out diagnostics.

use gasp::testbed::{equispaced, higdon1};
use gasp::{fit, leave_one_out, simulate, FitOptions, KernelSpec, Trend};
use nalgebra::{DMatrix, DVector};

fn main() -> gasp::Result<()> {
    let x = equispaced(10) * 10.0;
    let y = DVector::from_iterator(10, x.column(0).iter().map(|&v| higdon1(v)));
    let model = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(1), &FitOptions::default())?;

    let grid = DMatrix::from_fn(5, 1, |i, _| 0.5 + 2.0 * i as f64);
    let draws = simulate(&model, &grid, None, 4000, 42)?;
    for (i, row) in draws.row_iter().enumerate() {
        let mean = row.mean();
        let sd = row.variance().sqrt();
        println!("x {:.1}: sample mean {:+.4}  sample sd {:.4}  truth {:+.4}", grid[(i, 0)], mean, sd, higdon1(grid[(i, 0)]));
    }

    let loo = leave_one_out(&model)?;
    println!("index  loo_mean  loo_sd  std_resid");
    for i in 0..loo.mean.len() {
        println!("{:>5}  {:+.4}  {:.4}  {:+.3}", i + 1, loo.mean[i], loo.sd[i], loo.std_resid[i]);
    }
    println!("95% coverage {:.2}", loo.coverage(0.95)?);
    Ok(())
}
