//! Desk-scale reproductions of the benchmark experiments, reported as
//! one row per (estimator, trend, outputs, seed).

use std::fmt;
use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};
use crate::fitting::{fit, fit_flat_mode, FitOptions};
use crate::inert::{find_inert_inputs, DEFAULT_INERT_THRESHOLD};
use crate::kernels::KernelSpec;
use crate::ppgasp::{fit_ppgasp, predict_ppgasp};
use crate::prediction::{metrics, metrics_matrix, predict};
use crate::testbed::{equispaced, maximin_lhs, modified_sine_wave, TestFunction, DEFAULT_MAXIMIN_RESTARTS};
use crate::trend::Trend;

pub const SINEWAVE_N: usize = 12;
pub const SINEWAVE_TEST_N: usize = 100;
pub const FRIEDMAN_N: usize = 40;
pub const FRIEDMAN_TEST_N: usize = 200;
pub const BOREHOLE_N: usize = 40;
pub const PP_N: usize = 50;
pub const PP_TEST_N: usize = 100;
pub const PP_OUTPUTS: [usize; 3] = [500, 1000, 2000];
/// Offset between a design seed and the seed of its uniform testing sample.
pub const TEST_SEED_OFFSET: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Sinewave,
    Friedman,
    BoreholeInert,
    PpgaspScaling,
}

impl Experiment {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sinewave" => Ok(Experiment::Sinewave),
            "friedman" => Ok(Experiment::Friedman),
            "borehole-inert" => Ok(Experiment::BoreholeInert),
            "ppgasp-scaling" => Ok(Experiment::PpgaspScaling),
            other => Err(GaspError::InvalidArgument(format!(
                "unknown experiment '{other}' (expected sinewave, friedman, borehole-inert or ppgasp-scaling)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sinewave => "sinewave",
            Experiment::Friedman => "friedman",
            Experiment::BoreholeInert => "borehole-inert",
            Experiment::PpgaspScaling => "ppgasp-scaling",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub experiment: Experiment,
    pub estimator: String,
    pub trend: String,
    pub outputs: usize,
    /// Design seed; absent for deterministic designs.
    pub seed: Option<u64>,
    pub rmse: Option<f64>,
    pub p_ci95: Option<f64>,
    pub l_ci95: Option<f64>,
    pub wall_seconds: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub rows: Vec<BenchRow>,
}

/// Median of the non-missing values of one metric within a group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub estimator: String,
    pub trend: String,
    pub outputs: usize,
    pub runs: usize,
    pub rmse: Option<f64>,
    pub p_ci95: Option<f64>,
    pub l_ci95: Option<f64>,
    pub wall_seconds: f64,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

impl BenchReport {
    /// Groups in first-appearance order.
    pub fn summary(&self) -> Vec<GroupSummary> {
        let mut keys: Vec<(String, String, usize)> = Vec::new();
        for r in &self.rows {
            let key = (r.estimator.clone(), r.trend.clone(), r.outputs);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(estimator, trend, outputs)| {
                let group: Vec<&BenchRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.estimator == estimator && r.trend == trend && r.outputs == outputs)
                    .collect();
                let col = |f: fn(&BenchRow) -> Option<f64>| median(&group.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
                GroupSummary {
                    runs: group.len(),
                    rmse: col(|r| r.rmse),
                    p_ci95: col(|r| r.p_ci95),
                    l_ci95: col(|r| r.l_ci95),
                    wall_seconds: median(&group.iter().map(|r| r.wall_seconds).collect::<Vec<_>>()).unwrap_or(0.0),
                    estimator,
                    trend,
                    outputs,
                }
            })
            .collect()
    }

    pub fn find(&self, estimator: &str, trend: &str) -> Option<GroupSummary> {
        self.summary().into_iter().find(|g| g.estimator == estimator && g.trend == trend)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a report from its CSV form; seeds are recovered from the rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<BenchRow>, _>>()
            .map_err(|e| GaspError::Parse(e.to_string()))?;
        let experiment = rows
            .first()
            .map(|r| r.experiment)
            .ok_or_else(|| GaspError::Parse("bench report has no rows".into()))?;
        if rows.iter().any(|r| r.experiment != experiment) {
            return Err(GaspError::Parse("bench report mixes experiments".into()));
        }
        let mut seeds = Vec::new();
        for s in rows.iter().filter_map(|r| r.seed) {
            if !seeds.contains(&s) {
                seeds.push(s);
            }
        }
        Ok(BenchReport { experiment, seeds, rows })
    }
}

fn csv_error(e: csv::Error) -> GaspError {
    GaspError::Io(std::io::Error::other(e.to_string()))
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        writeln!(f, "experiment: {}  seeds: {:?}", self.experiment.name(), self.seeds)?;
        writeln!(
            f,
            "{:<10} {:<9} {:>7} {:>5} {:>9} {:>9} {:>9} {:>9}",
            "estimator", "trend", "outputs", "runs", "rmse", "p_ci95", "l_ci95", "wall_s"
        )?;
        for g in self.summary() {
            writeln!(
                f,
                "{:<10} {:<9} {:>7} {:>5} {:>9} {:>9} {:>9} {:>9.3}",
                g.estimator,
                g.trend,
                g.outputs,
                g.runs,
                opt(g.rmse),
                opt(g.p_ci95),
                opt(g.l_ci95),
                g.wall_seconds
            )?;
        }
        let notes: Vec<&BenchRow> = self.rows.iter().filter(|r| !r.note.is_empty()).collect();
        if !notes.is_empty() {
            writeln!(f, "notes:")?;
            for r in notes {
                let seed = r.seed.map_or_else(String::new, |s| format!(" seed {s}"));
                writeln!(f, "  {} {}{}: {}", r.estimator, r.trend, seed, r.note)?;
            }
        }
        Ok(())
    }
}

/// Uniform testing sample on the unit cube.
pub fn uniform_points(m: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(m, p, |_, _| rng.random::<f64>())
}

/// Runs one experiment. `seeds` is ignored by the deterministic sine wave
/// experiment; the scaling experiment uses only the first seed.
pub fn run_bench(experiment: Experiment, seeds: &[u64]) -> Result<BenchReport> {
    if experiment != Experiment::Sinewave && seeds.is_empty() {
        return Err(GaspError::InvalidArgument("at least one seed is required".into()));
    }
    let (seeds, rows) = match experiment {
        Experiment::Sinewave => (Vec::new(), sinewave()?),
        Experiment::Friedman => (seeds.to_vec(), friedman(seeds)?),
        Experiment::BoreholeInert => (seeds.to_vec(), borehole_inert(seeds)?),
        Experiment::PpgaspScaling => (vec![seeds[0]], ppgasp_scaling(seeds[0])?),
    };
    Ok(BenchReport { experiment, seeds, rows })
}

fn row(experiment: Experiment, estimator: &str, trend: &Trend, outputs: usize, seed: Option<u64>) -> BenchRow {
    BenchRow {
        experiment,
        estimator: estimator.to_string(),
        trend: trend_name(trend).to_string(),
        outputs,
        seed,
        rmse: None,
        p_ci95: None,
        l_ci95: None,
        wall_seconds: 0.0,
        note: String::new(),
    }
}

fn trend_name(trend: &Trend) -> &'static str {
    match trend {
        Trend::Zero => "zero",
        Trend::Constant => "constant",
        Trend::Linear => "linear",
        Trend::Explicit { .. } => "explicit",
    }
}

/// JR fit with default options against the marginal likelihood alone with
/// the lower bound disabled.
fn sinewave() -> Result<Vec<BenchRow>> {
    let x = equispaced(SINEWAVE_N);
    let y = DVector::from_iterator(SINEWAVE_N, x.column(0).iter().map(|v| modified_sine_wave(*v)));
    let xt = equispaced(SINEWAVE_TEST_N);
    let yt: Vec<f64> = xt.column(0).iter().map(|v| modified_sine_wave(*v)).collect();
    let spec = KernelSpec::matern52(1);
    let trend = Trend::Constant;
    let mut rows = Vec::new();
    for estimator in ["jr", "flat"] {
        let start = Instant::now();
        let model = if estimator == "jr" {
            fit(&x, &y, &trend, &spec, &FitOptions::default())?
        } else {
            let opts = FitOptions {
                lower_bound: false,
                ..FitOptions::default()
            };
            fit_flat_mode(&x, &y, &trend, &spec, &opts)?
        };
        let pred = predict(&model, &xt, None)?;
        let m = metrics(&pred, &yt)?;
        let mut r = row(Experiment::Sinewave, estimator, &trend, 1, None);
        r.wall_seconds = start.elapsed().as_secs_f64();
        r.rmse = Some(m.rmse);
        r.p_ci95 = Some(m.p_ci95);
        r.l_ci95 = Some(m.l_ci95);
        r.note = format!(
            "gamma_hat={:?} theta_hat={:?} sigma2_hat={:?}",
            model.gamma_hat()[0],
            model.theta_hat()[0],
            model.sigma2_hat()
        );
        rows.push(r);
    }
    Ok(rows)
}

fn friedman(seeds: &[u64]) -> Result<Vec<BenchRow>> {
    let f = TestFunction::Friedman5;
    let spec = KernelSpec::matern52(f.dim());
    let mut rows = Vec::new();
    for trend in [Trend::Constant, Trend::Linear] {
        for &seed in seeds {
            let start = Instant::now();
            let design = maximin_lhs(FRIEDMAN_N, f.dim(), seed, DEFAULT_MAXIMIN_RESTARTS)?.points;
            let y = DVector::from_vec(f.eval_rows(&design)?);
            let xt = uniform_points(FRIEDMAN_TEST_N, f.dim(), seed + TEST_SEED_OFFSET);
            let yt = f.eval_rows(&xt)?;
            let model = fit(&design, &y, &trend, &spec, &FitOptions::default())?;
            let m = metrics(&predict(&model, &xt, None)?, &yt)?;
            let mut r = row(Experiment::Friedman, "jr", &trend, 1, Some(seed));
            r.wall_seconds = start.elapsed().as_secs_f64();
            r.rmse = Some(m.rmse);
            r.p_ci95 = Some(m.p_ci95);
            r.l_ci95 = Some(m.l_ci95);
            rows.push(r);
        }
    }
    Ok(rows)
}

fn borehole_inert(seeds: &[u64]) -> Result<Vec<BenchRow>> {
    let f = TestFunction::Borehole;
    let spec = KernelSpec::matern52(f.dim());
    let opts = FitOptions {
        lower_bound: false,
        ..FitOptions::default()
    };
    let mut rows = Vec::new();
    for &seed in seeds {
        let start = Instant::now();
        let unit = maximin_lhs(BOREHOLE_N, f.dim(), seed, DEFAULT_MAXIMIN_RESTARTS)?.points;
        let design = f.natural_design(&unit)?;
        let y = DVector::from_vec(f.eval_rows(&design)?);
        let model = fit(&design, &y, &Trend::Constant, &spec, &opts)?;
        let report = find_inert_inputs(&model, DEFAULT_INERT_THRESHOLD);
        let mut r = row(Experiment::BoreholeInert, "jr", &Trend::Constant, 1, Some(seed));
        r.wall_seconds = start.elapsed().as_secs_f64();
        let flagged: Vec<String> = report.flagged_one_based().iter().map(usize::to_string).collect();
        let p: Vec<String> = report.normalized.iter().map(|v| format!("{v:.4}")).collect();
        r.note = format!("flagged={} P={}", flagged.join(" "), p.join(" "));
        rows.push(r);
    }
    Ok(rows)
}

/// Smooth synthetic field with `k` phase-shifted output columns.
pub fn synthetic_outputs(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), k, |i, j| {
        let s = j as f64 / k as f64;
        (6.0 * x[(i, 0)] + std::f64::consts::TAU * s).sin() + (1.0 + s) * (5.0 * x[(i, 1)]).cos()
    })
}

fn ppgasp_scaling(seed: u64) -> Result<Vec<BenchRow>> {
    let design = maximin_lhs(PP_N, 2, seed, DEFAULT_MAXIMIN_RESTARTS)?.points;
    let xt = uniform_points(PP_TEST_N, 2, seed + TEST_SEED_OFFSET);
    let spec = KernelSpec::matern52(2);
    let trend = Trend::Constant;
    let mut rows = Vec::new();
    for k in PP_OUTPUTS {
        let y = synthetic_outputs(&design, k);
        let truth = synthetic_outputs(&xt, k);
        let start = Instant::now();
        let model = fit_ppgasp(&design, &y, &trend, &spec, &FitOptions::default())?;
        let pred = predict_ppgasp(&model, &xt, None)?;
        let wall = start.elapsed().as_secs_f64();
        let m = metrics_matrix(&pred.mean, &pred.lower95, &pred.upper95, &truth)?;
        let mut r = row(Experiment::PpgaspScaling, "ppgasp", &trend, k, Some(seed));
        r.wall_seconds = wall;
        r.rmse = Some(m.rmse);
        r.p_ci95 = Some(m.p_ci95);
        r.l_ci95 = Some(m.l_ci95);
        rows.push(r);
    }
    Ok(rows)
}
