//! Screen the eight borehole inputs for inert ones from 40 runs.

use gasp::testbed::{maximin_lhs, TestFunction, DEFAULT_MAXIMIN_RESTARTS};
use gasp::{find_inert_inputs, fit, FitOptions, KernelSpec, Trend};
use nalgebra::DVector;

const NAMES: [&str; 8] = ["r_w", "r", "T_u", "H_u", "T_l", "H_l", "L", "K_w"];

fn main() -> gasp::Result<()> {
    let f = TestFunction::Borehole;
    let unit = maximin_lhs(40, 8, 7, DEFAULT_MAXIMIN_RESTARTS)?.points;
    let x = f.natural_design(&unit)?;
    let y = DVector::from_vec(f.eval_rows(&x)?);
    let options = FitOptions { lower_bound: false, ..FitOptions::default() };
    let model = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(8), &options)?;

    let report = find_inert_inputs(&model, 0.1);
    println!("input        P_l  flagged");
    for (l, p) in report.normalized.iter().enumerate() {
        let mark = if report.flagged.contains(&l) { "yes" } else { "" };
        println!("{:>2} {:<5} {:7.4}  {mark}", l + 1, NAMES[l], p);
    }
    println!("suspected inert inputs: {:?}", report.flagged_one_based());
    Ok(())
}
