//! Estimate the nugget from noisy observations. The fitted emulator smooths
//! instead of interpolating.

use gasp::testbed::maximin_lhs;
use gasp::{fit, leave_one_out, predict, FitOptions, KernelSpec, NuggetMode, Trend};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> gasp::Result<()> {
    let x = maximin_lhs(40, 2, 3, 50)?.points;
    let signal = |r: &[f64]| (4.0 * r[0]).sin() + (3.0 * r[1]).cos();
    let noise = Normal::new(0.0, 0.1).expect("valid sd");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let y = DVector::from_iterator(
        40,
        x.row_iter().map(|r| signal(&[r[0], r[1]]) + noise.sample(&mut rng)),
    );

    let options = FitOptions { nugget: NuggetMode::Estimated, ..FitOptions::default() };
    let model = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(2), &options)?;
    println!(
        "eta {:.4}  sigma2 {:.4}  implied noise sd {:.4} (true 0.1)",
        model.eta_hat(),
        model.sigma2_hat(),
        (model.eta_hat() * model.sigma2_hat()).sqrt()
    );

    let first = DMatrix::from_fn(1, 2, |_, j| x[(0, j)]);
    let at_design = predict(&model, &first, None)?;
    println!(
        "at x_1: observed {:.4}  mean {:.4}  signal {:.4}",
        y[0],
        at_design.mean[0],
        signal(&[x[(0, 0)], x[(0, 1)]])
    );

    let loo = leave_one_out(&model)?;
    println!("leave-one-out 95% coverage {:.3}", loo.coverage(0.95)?);
    Ok(())
}
