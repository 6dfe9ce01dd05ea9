//! Bound-constrained limited-memory quasi-Newton maximization.
//!
//! Directions come from the two-loop recursion restricted to the free
//! variables; steps are projected onto the box and accepted by a backtracking
//! Armijo test along the projected path. Failed or non-finite evaluations are
//! treated as rejected trial points.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::Result;

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    /// Cap on objective evaluations, counting the starting point.
    pub max_eval: usize,
    /// Stop when `||x_new - x|| <= xtol_rel * ||x||`.
    pub xtol_rel: f64,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_eval: 30,
            xtol_rel: 1e-5,
            memory: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Relative parameter change fell below `xtol_rel`.
    XtolReached,
    /// Projected gradient vanished.
    Stationary,
    /// Evaluation budget used up.
    MaxEval,
    /// No acceptable step along the search direction.
    LineSearchFailed,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::XtolReached | StopReason::Stationary)
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub evals: usize,
    pub stop: StopReason,
}

/// Maximizes `f` over the box `[lower, upper]` starting from `x0` (projected
/// onto the box first). `f` returns the value and its gradient.
///
/// Errors only when the starting point itself cannot be evaluated to a finite value.
pub fn maximize<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LbfgsOptions,
) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, DVector<f64>)>,
{
    let n = x0.len();
    let project = |v: &mut DVector<f64>| {
        for i in 0..n {
            v[i] = v[i].clamp(lower[i], upper[i]);
        }
    };
    // Work with the negated objective throughout.
    let mut eval = |x: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        match f(x.as_slice()) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|c| c.is_finite()) => Some((-v, -g)),
            Ok(_) => None,
            Err(e) => {
                log::debug!("objective evaluation failed at {:?}: {e}", x.as_slice());
                None
            }
        }
    };

    let mut x = DVector::from_column_slice(x0);
    project(&mut x);
    let (mut fx, mut g) = match eval(&x) {
        Some(v) => v,
        None => {
            return Err(crate::error::GaspError::Numerical(format!(
                "objective is not finite at the starting point {:?}",
                x.as_slice()
            )))
        }
    };
    let mut evals = 1;
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut first = true;

    let stop = loop {
        let free = free_mask(&x, &g, lower, upper);
        let pg_norm = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm == 0.0 {
            break StopReason::Stationary;
        }
        if evals >= opts.max_eval {
            break StopReason::MaxEval;
        }

        let mut d = two_loop(&g, &pairs, &free);
        if !(g.dot(&d) < 0.0) {
            pairs.clear();
            d = masked_neg(&g, &free);
            first = true;
        }
        if first {
            let scale = 1.0 / pg_norm.max(1.0);
            d *= scale;
            first = false;
        }

        let mut t = 1.0;
        let mut accepted = None;
        while evals < opts.max_eval && t >= MIN_STEP {
            let mut trial = &x + &d * t;
            project(&mut trial);
            let step = &trial - &x;
            if step.amax() == 0.0 {
                break;
            }
            evals += 1;
            if let Some((ft, gt)) = eval(&trial) {
                if ft <= fx + ARMIJO_C1 * g.dot(&step) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= BACKTRACK;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            break if evals >= opts.max_eval {
                StopReason::MaxEval
            } else {
                StopReason::LineSearchFailed
            };
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), y, 1.0 / sy));
        }
        let small = s.norm() <= opts.xtol_rel * x_new.norm();
        x = x_new;
        fx = f_new;
        g = g_new;
        if small {
            break StopReason::XtolReached;
        }
    };

    Ok(OptimResult {
        x: x.as_slice().to_vec(),
        value: -fx,
        gradient: (-g).as_slice().to_vec(),
        evals,
        stop,
    })
}

/// Variables not pinned at a bound by a gradient pushing outward (minimization sense).
fn free_mask(x: &DVector<f64>, g: &DVector<f64>, lower: &[f64], upper: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
        .collect()
}

fn masked_neg(g: &DVector<f64>, free: &[bool]) -> DVector<f64> {
    DVector::from_fn(g.len(), |i, _| if free[i] { -g[i] } else { 0.0 })
}

fn two_loop(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>, free: &[bool]) -> DVector<f64> {
    let mask = |v: &DVector<f64>| DVector::from_fn(v.len(), |i, _| if free[i] { v[i] } else { 0.0 });
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * mask(s).dot(&q);
        q -= mask(y) * a;
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let yy = y.norm_squared();
        if yy > 0.0 {
            q *= s.dot(y) / yy;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * mask(y).dot(&q);
        q += mask(s) * (a - b);
    }
    -mask(&q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::GaspError;

    fn rosenbrock(x: &[f64]) -> Result<(f64, DVector<f64>)> {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = DVector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]);
        Ok((-v, -g))
    }

    fn open(n: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
    }

    #[test]
    fn concave_quadratic() {
        let f = |x: &[f64]| {
            let v = -(x[0] - 1.0).powi(2) - 4.0 * (x[1] + 2.0).powi(2);
            Ok((v, DVector::from_vec(vec![-2.0 * (x[0] - 1.0), -8.0 * (x[1] + 2.0)])))
        };
        let (lo, hi) = open(2);
        let r = maximize(f, &[5.0, 5.0], &lo, &hi, &LbfgsOptions { max_eval: 100, xtol_rel: 1e-10, memory: 10 }).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6, "{:?}", r);
        assert!(r.stop.converged());
    }

    #[test]
    fn rosenbrock_valley() {
        let (lo, hi) = open(2);
        let opts = LbfgsOptions { max_eval: 500, xtol_rel: 1e-12, memory: 10 };
        let r = maximize(rosenbrock, &[-1.2, 1.0], &lo, &hi, &opts).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r);
    }

    #[test]
    fn active_lower_bound() {
        // Unconstrained maximum at x = -3; the bound at 0 binds.
        let f = |x: &[f64]| Ok((-(x[0] + 3.0).powi(2) - (x[1] - 1.0).powi(2), DVector::from_vec(vec![-2.0 * (x[0] + 3.0), -2.0 * (x[1] - 1.0)])));
        let opts = LbfgsOptions { max_eval: 100, xtol_rel: 1e-10, memory: 5 };
        let r = maximize(f, &[2.0, 0.0], &[0.0, f64::NEG_INFINITY], &[f64::INFINITY; 2], &opts).unwrap();
        assert_eq!(r.x[0], 0.0);
        assert!((r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_evaluation_cap() {
        let (lo, hi) = open(2);
        let opts = LbfgsOptions { max_eval: 7, ..Default::default() };
        let mut count = 0;
        let r = maximize(
            |x| {
                count += 1;
                rosenbrock(x)
            },
            &[-1.2, 1.0],
            &lo,
            &hi,
            &opts,
        )
        .unwrap();
        assert_eq!(count, r.evals);
        assert!(r.evals <= 7);
        assert_eq!(r.stop, StopReason::MaxEval);
    }

    #[test]
    fn failed_evaluations_are_rejected_steps() {
        // Objective undefined for x > 1; maximum of -(x-2)^2 on the domain is at 1.
        let f = |x: &[f64]| {
            if x[0] > 1.0 {
                Err(GaspError::Numerical("outside".into()))
            } else {
                Ok((-(x[0] - 2.0).powi(2), DVector::from_vec(vec![-2.0 * (x[0] - 2.0)])))
            }
        };
        let (lo, hi) = open(1);
        let r = maximize(f, &[0.0], &lo, &hi, &LbfgsOptions { max_eval: 60, ..Default::default() }).unwrap();
        assert!(r.x[0] <= 1.0 && r.x[0] > 0.9, "{:?}", r);
    }

    #[test]
    fn bad_start_is_an_error() {
        let (lo, hi) = open(1);
        let r = maximize(|_| Ok((f64::NAN, DVector::zeros(1))), &[0.0], &lo, &hi, &LbfgsOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn never_decreases_the_objective() {
        let (lo, hi) = open(2);
        let start = rosenbrock(&[-1.2, 1.0]).unwrap().0;
        for cap in 1..20 {
            let r = maximize(rosenbrock, &[-1.2, 1.0], &lo, &hi, &LbfgsOptions { max_eval: cap, ..Default::default() }).unwrap();
            assert!(r.value >= start);
        }
    }
}
