//! Random and maximin Latin hypercube designs.

use gasp::testbed::{lhs, maximin_lhs};

fn main() -> gasp::Result<()> {
    for seed in 0..3 {
        let plain = lhs(20, 3, seed)?;
        let spread = maximin_lhs(20, 3, seed, 50)?;
        println!(
            "seed {seed}: smallest distance random {:.4}  maximin {:.4}",
            plain.min_distance, spread.min_distance
        );
    }
    Ok(())
}
