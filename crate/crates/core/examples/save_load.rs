//! Persist a fitted model as JSON and predict from the reloaded copy.

use gasp::testbed::{equispaced, modified_sine_wave};
use gasp::{fit, load_model, predict, save_model, FitOptions, KernelSpec, Trend};
use nalgebra::{DMatrix, DVector};

fn main() -> gasp::Result<()> {
    let x = equispaced(12);
    let y = DVector::from_iterator(12, x.column(0).iter().map(|&v| modified_sine_wave(v)));
    let model = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(1), &FitOptions::default())?;

    let path = std::env::temp_dir().join("gasp_example_model.json");
    save_model(&model, &path)?;
    let reloaded = load_model(&path)?;
    let grid = DMatrix::from_fn(5, 1, |i, _| 0.1 + 0.2 * i as f64);
    let a = predict(&model, &grid, None)?;
    let b = predict(&reloaded, &grid, None)?;
    println!("saved to {}", path.display());
    println!("identical predictions after reload: {}", a == b);
    std::fs::remove_file(&path)?;
    Ok(())
}
