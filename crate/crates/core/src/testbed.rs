//! Space-filling designs and benchmark functions.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GaspError, Result};

pub const DEFAULT_MAXIMIN_RESTARTS: usize = 50;

/// Physical domain of the borehole inputs
/// `(r_w, r, T_u, H_u, T_l, H_l, L, K_w)`.
pub const BOREHOLE_LOWER: [f64; 8] = [0.05, 100.0, 63070.0, 990.0, 63.1, 700.0, 1120.0, 9855.0];
pub const BOREHOLE_UPPER: [f64; 8] = [0.15, 50000.0, 115600.0, 1110.0, 116.0, 820.0, 1680.0, 12045.0];

#[derive(Clone, Debug, PartialEq)]
pub struct LhDesign {
    /// `n x p` points in `[0, 1)^p`.
    pub points: DMatrix<f64>,
    pub seed: u64,
    pub maximin: bool,
    /// Smallest Euclidean distance between two points.
    pub min_distance: f64,
}

fn check_shape(n: usize, p: usize) -> Result<()> {
    if n < 2 || p < 1 {
        return Err(GaspError::InvalidArgument(format!(
            "a Latin hypercube needs n >= 2 and p >= 1, got n = {n}, p = {p}"
        )));
    }
    Ok(())
}

fn draw_lhs(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, p);
    let mut perm: Vec<usize> = (0..n).collect();
    for l in 0..p {
        perm.shuffle(rng);
        for i in 0..n {
            x[(i, l)] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    x
}

fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            f64::INFINITY
        } else {
            (0..x.ncols()).map(|l| (x[(i, l)] - x[(j, l)]).powi(2)).sum()
        }
    })
}

pub fn min_distance(x: &DMatrix<f64>) -> f64 {
    squared_distances(x).min().sqrt()
}

/// Random Latin hypercube with one jittered point per stratum and dimension.
pub fn lhs(n: usize, p: usize, seed: u64) -> Result<LhDesign> {
    check_shape(n, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = draw_lhs(n, p, &mut rng);
    Ok(LhDesign {
        min_distance: min_distance(&points),
        points,
        seed,
        maximin: false,
    })
}

/// Best of `restarts` Latin hypercubes by minimum pairwise distance, refined by
/// coordinate exchanges. The first candidate is `lhs(n, p, seed)`.
pub fn maximin_lhs(n: usize, p: usize, seed: u64, restarts: usize) -> Result<LhDesign> {
    check_shape(n, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = draw_lhs(n, p, &mut rng);
    let mut best_d = squared_distances(&best).min();
    for _ in 1..restarts.max(1) {
        let cand = draw_lhs(n, p, &mut rng);
        let d = squared_distances(&cand).min();
        if d > best_d {
            best = cand;
            best_d = d;
        }
    }
    let points = exchange(best, n * p);
    Ok(LhDesign {
        min_distance: min_distance(&points),
        points,
        seed,
        maximin: true,
    })
}

/// Swaps one coordinate of a point in the closest pair with another point
/// whenever that strictly increases the minimum distance. Swaps keep the
/// Latin hypercube property.
fn exchange(mut x: DMatrix<f64>, passes: usize) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut d2 = squared_distances(&x);
    for pass in 0..passes {
        let l = pass % p;
        let current = d2.min();
        let (a, b) = argmin_pair(&d2);
        let mut best: Option<(usize, usize, f64)> = None;
        for &i in &[a, b] {
            for j in 0..n {
                if j == i {
                    continue;
                }
                swap_coord(&mut x, i, j, l);
                let trial = min_after_swap(&x, &d2, i, j);
                swap_coord(&mut x, i, j, l);
                if trial > current && best.is_none_or(|(_, _, v)| trial > v) {
                    best = Some((i, j, trial));
                }
            }
        }
        if let Some((i, j, _)) = best {
            swap_coord(&mut x, i, j, l);
            update_rows(&x, &mut d2, i);
            update_rows(&x, &mut d2, j);
        }
    }
    x
}

fn swap_coord(x: &mut DMatrix<f64>, i: usize, j: usize, l: usize) {
    let t = x[(i, l)];
    x[(i, l)] = x[(j, l)];
    x[(j, l)] = t;
}

fn argmin_pair(d2: &DMatrix<f64>) -> (usize, usize) {
    let n = d2.nrows();
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..n {
        for j in (i + 1)..n {
            if d2[(i, j)] < best.2 {
                best = (i, j, d2[(i, j)]);
            }
        }
    }
    (best.0, best.1)
}

fn row_dist2(x: &DMatrix<f64>, i: usize, k: usize) -> f64 {
    (0..x.ncols()).map(|l| (x[(i, l)] - x[(k, l)]).powi(2)).sum()
}

/// Minimum distance once rows `i` and `j` of `x` have changed; `d2` holds the old distances.
fn min_after_swap(x: &DMatrix<f64>, d2: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let n = x.nrows();
    let mut m = f64::INFINITY;
    for a in 0..n {
        for b in (a + 1)..n {
            let v = if a == i || a == j || b == i || b == j {
                row_dist2(x, a, b)
            } else {
                d2[(a, b)]
            };
            m = m.min(v);
        }
    }
    m
}

fn update_rows(x: &DMatrix<f64>, d2: &mut DMatrix<f64>, i: usize) {
    for k in 0..x.nrows() {
        if k != i {
            let v = row_dist2(x, i, k);
            d2[(i, k)] = v;
            d2[(k, i)] = v;
        }
    }
}

/// `n` equispaced points on `[0, 1]`, endpoints included.
pub fn equispaced(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 1, |i, _| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 })
}

/// Maps unit-cube points to the box `[lower, upper]` per column.
pub fn scale_to_box(unit: &DMatrix<f64>, lower: &[f64], upper: &[f64]) -> Result<DMatrix<f64>> {
    if lower.len() != unit.ncols() || upper.len() != unit.ncols() {
        return Err(GaspError::DimensionMismatch {
            what: "box bounds",
            expected: unit.ncols(),
            found: lower.len().min(upper.len()),
        });
    }
    Ok(DMatrix::from_fn(unit.nrows(), unit.ncols(), |i, l| lower[l] + (upper[l] - lower[l]) * unit[(i, l)]))
}

/// Water flow rate through a borehole, inputs `(r_w, r, T_u, H_u, T_l, H_l, L, K_w)`.
/// Inputs outside the physical domain are evaluated with a warning.
pub fn borehole(x: &[f64]) -> Result<f64> {
    if x.len() != 8 {
        return Err(GaspError::DimensionMismatch {
            what: "borehole inputs",
            expected: 8,
            found: x.len(),
        });
    }
    let [rw, r, tu, hu, tl, hl, l, kw] = [x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]];
    if !(r > rw && rw > 0.0) {
        return Err(GaspError::InvalidArgument(format!(
            "borehole needs r > r_w > 0, got r = {r}, r_w = {rw}"
        )));
    }
    if (0..8).any(|i| x[i] < BOREHOLE_LOWER[i] || x[i] > BOREHOLE_UPPER[i]) {
        log::warn!("borehole input {x:?} lies outside the physical domain");
    }
    let lr = (r / rw).ln();
    Ok(2.0 * PI * tu * (hu - hl) / (lr * (1.0 + 2.0 * l * tu / (lr * rw * rw * kw) + tu / tl)))
}

/// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5` on `[0, 1]^5`.
pub fn friedman5(x: &[f64]) -> Result<f64> {
    if x.len() != 5 {
        return Err(GaspError::DimensionMismatch {
            what: "friedman inputs",
            expected: 5,
            found: x.len(),
        });
    }
    Ok(10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4])
}

/// `sin(2 pi x / 10) + 0.2 sin(2 pi x / 2.5)`.
pub fn higdon1(x: f64) -> f64 {
    (2.0 * PI * x / 10.0).sin() + 0.2 * (2.0 * PI * x / 2.5).sin()
}

/// `3 sin(5 pi x) x + cos(7 pi x)`.
pub fn modified_sine_wave(x: f64) -> f64 {
    3.0 * (5.0 * PI * x).sin() * x + (7.0 * PI * x).cos()
}

/// Benchmark functions available to the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    Borehole,
    Friedman5,
    Higdon1,
    SineWave,
}

impl TestFunction {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "borehole" => Ok(TestFunction::Borehole),
            "friedman5" => Ok(TestFunction::Friedman5),
            "higdon1" => Ok(TestFunction::Higdon1),
            "sinewave" => Ok(TestFunction::SineWave),
            other => Err(GaspError::InvalidArgument(format!(
                "unknown function '{other}' (expected borehole, friedman5, higdon1 or sinewave)"
            ))),
        }
    }

    pub fn dim(self) -> usize {
        match self {
            TestFunction::Borehole => 8,
            TestFunction::Friedman5 => 5,
            TestFunction::Higdon1 | TestFunction::SineWave => 1,
        }
    }

    /// Maps a unit-cube design to the function's natural domain: the physical
    /// box for the borehole, `[0, 10]` for higdon1, the unit cube otherwise.
    pub fn natural_design(self, unit: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            TestFunction::Borehole => scale_to_box(unit, &BOREHOLE_LOWER, &BOREHOLE_UPPER),
            TestFunction::Higdon1 => Ok(unit * 10.0),
            _ => Ok(unit.clone()),
        }
    }

    /// Evaluates each row of `x`.
    pub fn eval_rows(self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() {
            return Err(GaspError::DimensionMismatch {
                what: "test function inputs",
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        x.row_iter()
            .map(|row| {
                let v: Vec<f64> = row.iter().copied().collect();
                match self {
                    TestFunction::Borehole => borehole(&v),
                    TestFunction::Friedman5 => friedman5(&v),
                    TestFunction::Higdon1 => Ok(higdon1(v[0])),
                    TestFunction::SineWave => Ok(modified_sine_wave(v[0])),
                }
            })
            .collect()
    }
}
