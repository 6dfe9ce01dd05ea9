//! Command-line surface. Every command reads CSV, writes CSV or JSON, and maps
//! failures to exit codes: 2 usage, 3 data or contract, 4 numerical.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use crate::bench::{run_bench, Experiment};
use crate::error::{GaspError, Result};
use crate::fitting::{fit, FitOptions, GaSPModel};
use crate::inert::{find_inert_inputs, DEFAULT_INERT_THRESHOLD};
use crate::io::{load_model, load_ppmodel, read_matrix, save_model, save_ppmodel, write_csv_file};
use crate::kernels::{KernelFamily, KernelSpec, DEFAULT_ALPHA};
use crate::marginal::NuggetMode;
use crate::ppgasp::{fit_ppgasp, predict_ppgasp_with};
use crate::prediction::{leave_one_out, predict_with, simulate, SdKind};
use crate::priors::PriorChoice;
use crate::testbed::{equispaced, lhs, maximin_lhs, TestFunction, DEFAULT_MAXIMIN_RESTARTS};
use crate::trend::Trend;

#[derive(Debug, Parser)]
#[command(name = "gasp", version, about = "Gaussian stochastic process emulators with robust parameter estimation")]
pub struct Cli {
    /// Worker threads for multi-start fitting and output blocks (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Only report errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a single-output emulator.
    Fit(FitArgs),
    /// Predictive mean, sd and 95% interval at new inputs.
    Predict(PredictArgs),
    /// Joint predictive draws at new inputs.
    Simulate(SimulateArgs),
    /// Leave-one-out predictions at the fitted parameters.
    Loo(LooArgs),
    /// Flag inputs with small normalized inverse range parameters.
    ///
    /// Fit with --no-lower-bound first: the default lower bound keeps every
    /// inverse range away from zero and can hide inert inputs.
    Inert(InertArgs),
    /// Fit a multi-output emulator sharing one correlation matrix.
    Ppfit(FitArgs),
    /// Per-output predictions from a multi-output emulator.
    Pppredict(PpPredictArgs),
    /// Generate a design and benchmark-function outputs.
    Gen(GenArgs),
    /// Reproduce a benchmark experiment.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub response: PathBuf,
    /// matern_5_2, matern_3_2 or pow_exp; a comma list sets one per input.
    #[arg(long, default_value = "matern_5_2")]
    pub kernel: String,
    /// Power-exponential roughness; one value or one per input.
    #[arg(long)]
    pub alpha: Option<String>,
    /// constant, linear, zero or file:<path> (CSV basis matrix, n rows).
    #[arg(long, default_value = "constant")]
    pub trend: String,
    /// jr, ref_gamma, ref_xi or flat.
    #[arg(long, default_value = "jr")]
    pub prior: String,
    /// Estimate the nugget-variance ratio.
    #[arg(long, conflicts_with = "nugget")]
    pub nugget_est: bool,
    /// Fix the nugget-variance ratio.
    #[arg(long)]
    pub nugget: Option<f64>,
    /// Enforce the default lower bound on the inverse ranges (the default).
    #[arg(long, overrides_with = "no_lower_bound")]
    pub lower_bound: bool,
    #[arg(long, overrides_with = "lower_bound")]
    pub no_lower_bound: bool,
    /// Also start from the prior-derived point and keep the better optimum.
    #[arg(long)]
    pub multiple_starts: bool,
    #[arg(long, default_value_t = 30)]
    pub max_eval: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub xtol_rel: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Trend basis at the inputs; required for file: trends.
    #[arg(long)]
    pub trend_file: Option<PathBuf>,
    /// t (t standard deviation) or scale (t scale parameter).
    #[arg(long, default_value = "t")]
    pub sd_kind: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub trend_file: Option<PathBuf>,
    #[arg(long)]
    pub num_sample: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LooArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InertArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_INERT_THRESHOLD)]
    pub threshold: f64,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PpPredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub trend_file: Option<PathBuf>,
    #[arg(long, default_value = "t")]
    pub sd_kind: String,
    /// Prefix of mean.csv, sd.csv, lower95.csv and upper95.csv.
    #[arg(long)]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// borehole, friedman5, higdon1 or sinewave (3 sin(5 pi x) x + cos(7 pi x)).
    #[arg(long = "fn")]
    pub function: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, conflicts_with = "equispaced")]
    pub maximin: bool,
    /// Equally spaced points on [0, 1]; one-dimensional functions only.
    #[arg(long)]
    pub equispaced: bool,
    #[arg(long)]
    pub out_design: PathBuf,
    #[arg(long)]
    pub out_response: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// sinewave, friedman, borehole-inert or ppgasp-scaling.
    #[arg(long)]
    pub experiment: String,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An error tagged with the command that raised it.
#[derive(Debug)]
pub struct CliError {
    pub command: &'static str,
    pub source: GaspError,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gasp {}: {}", self.command, self.source)
    }
}

impl std::error::Error for CliError {}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Predict(_) => "predict",
            Command::Simulate(_) => "simulate",
            Command::Loo(_) => "loo",
            Command::Inert(_) => "inert",
            Command::Ppfit(_) => "ppfit",
            Command::Pppredict(_) => "pppredict",
            Command::Gen(_) => "gen",
            Command::Bench(_) => "bench",
        }
    }
}

/// Runs a parsed command line. Output destined for the user goes to stdout
/// unless `quiet` is set; diagnostics go through `log`.
pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    let command = cli.command.name();
    let tag = |source| CliError { command, source };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(tag(GaspError::InvalidArgument("--threads must be at least 1".into())));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let out = Printer { quiet: cli.quiet };
    match cli.command {
        Command::Fit(a) => run_fit(&a, &out),
        Command::Predict(a) => run_predict(&a),
        Command::Simulate(a) => run_simulate(&a),
        Command::Loo(a) => run_loo(&a),
        Command::Inert(a) => run_inert(&a, &out),
        Command::Ppfit(a) => run_ppfit(&a, &out),
        Command::Pppredict(a) => run_pppredict(&a),
        Command::Gen(a) => run_gen(&a),
        Command::Bench(a) => run_bench_cmd(&a, &out),
    }
    .map_err(tag)
}

struct Printer {
    quiet: bool,
}

impl Printer {
    fn line(&self, s: impl fmt::Display) {
        if !self.quiet {
            println!("{s}");
        }
    }
}

fn comma_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

/// Expands a single value to `p` copies; otherwise requires exactly `p`.
fn per_dimension<T: Clone>(values: Vec<T>, p: usize, what: &'static str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); p]),
        len if len == p => Ok(values),
        len => Err(GaspError::DimensionMismatch {
            what,
            expected: p,
            found: len,
        }),
    }
}

pub fn parse_kernel(kernel: &str, alpha: Option<&str>, p: usize) -> Result<KernelSpec> {
    let families = comma_list(kernel)
        .into_iter()
        .map(KernelFamily::parse)
        .collect::<Result<Vec<_>>>()?;
    let alpha = match alpha {
        Some(a) => comma_list(a)
            .into_iter()
            .map(|v| v.parse::<f64>().map_err(|_| GaspError::InvalidArgument(format!("alpha '{v}' is not a number"))))
            .collect::<Result<Vec<_>>>()?,
        None => vec![DEFAULT_ALPHA],
    };
    KernelSpec::new(
        per_dimension(families, p, "kernel families")?,
        per_dimension(alpha, p, "alpha values")?,
    )
}

pub fn parse_trend(trend: &str) -> Result<Trend> {
    match trend.strip_prefix("file:") {
        Some(path) => Ok(Trend::Explicit {
            matrix: read_matrix(Path::new(path))?,
        }),
        None => Trend::parse_builtin(trend),
    }
}

fn fit_options(a: &FitArgs) -> Result<FitOptions> {
    let nugget = match (a.nugget_est, a.nugget) {
        (true, _) => NuggetMode::Estimated,
        (false, Some(v)) => NuggetMode::Fixed(v),
        (false, None) => NuggetMode::NoiseFree,
    };
    Ok(FitOptions {
        prior: PriorChoice::parse(&a.prior)?,
        nugget,
        lower_bound: !a.no_lower_bound,
        multiple_starts: a.multiple_starts,
        max_eval: a.max_eval,
        xtol_rel: a.xtol_rel,
        ..FitOptions::default()
    })
}

type FitInputs = (DMatrix<f64>, DMatrix<f64>, Trend, KernelSpec, FitOptions);

fn fit_inputs(a: &FitArgs) -> Result<FitInputs> {
    let design = read_matrix(&a.design)?;
    let response = read_matrix(&a.response)?;
    if response.nrows() != design.nrows() {
        return Err(GaspError::DimensionMismatch {
            what: "response rows",
            expected: design.nrows(),
            found: response.nrows(),
        });
    }
    let spec = parse_kernel(&a.kernel, a.alpha.as_deref(), design.ncols())?;
    Ok((design, response, parse_trend(&a.trend)?, spec, fit_options(a)?))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run_fit(a: &FitArgs, out: &Printer) -> Result<()> {
    let (design, response, trend, spec, opts) = fit_inputs(a)?;
    if response.ncols() != 1 {
        return Err(GaspError::InvalidArgument(format!(
            "response has {} columns; fit takes one output (use ppfit for several)",
            response.ncols()
        )));
    }
    let y = DVector::from_column_slice(response.column(0).as_slice());
    let model = fit(&design, &y, &trend, &spec, &opts)?;
    save_model(&model, &a.out)?;
    out.line(format_args!("beta_hat   {}", fmt_vec(model.beta_hat().as_slice())));
    out.line(format_args!("gamma_hat  {}", fmt_vec(&model.gamma_hat())));
    out.line(format_args!("eta_hat    {:.6e}", model.eta_hat()));
    out.line(format_args!("theta_hat  {}", fmt_vec(model.theta_hat().as_slice())));
    out.line(format_args!("sigma2_hat {:.6e}", model.sigma2_hat()));
    report_convergence(model.diagnostics().converged, out);
    out.line(format_args!("model written to {}", a.out.display()));
    Ok(())
}

fn report_convergence(converged: bool, out: &Printer) {
    if !converged {
        log::warn!("optimizer stopped before meeting its tolerance; the estimate may not be a mode");
    }
    out.line(format_args!("converged  {converged}"));
}

fn run_ppfit(a: &FitArgs, out: &Printer) -> Result<()> {
    let (design, response, trend, spec, opts) = fit_inputs(a)?;
    let model = fit_ppgasp(&design, &response, &trend, &spec, &opts)?;
    save_ppmodel(&model, &a.out)?;
    out.line(format_args!("outputs    {}", model.k()));
    out.line(format_args!("beta_hat   {}", fmt_vec(model.beta_hat().as_slice())));
    out.line(format_args!("eta_hat    {:.6e}", model.eta_hat()));
    report_convergence(model.diagnostics().converged, out);
    out.line(format_args!("model written to {}", a.out.display()));
    Ok(())
}

fn read_optional(path: Option<&PathBuf>) -> Result<Option<DMatrix<f64>>> {
    path.map(|p| read_matrix(p)).transpose()
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let x = read_matrix(&a.input)?;
    let h = read_optional(a.trend_file.as_ref())?;
    let pred = predict_with(&model, &x, h.as_ref(), SdKind::parse(&a.sd_kind)?)?;
    let table = DMatrix::from_fn(pred.len(), 4, |i, j| match j {
        0 => pred.mean[i],
        1 => pred.sd[i],
        2 => pred.lower95[i],
        _ => pred.upper95[i],
    });
    write_csv_file(&a.out, Some(&["mean", "sd", "lower95", "upper95"]), &table)
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let x = read_matrix(&a.input)?;
    let h = read_optional(a.trend_file.as_ref())?;
    let draws = simulate(&model, &x, h.as_ref(), a.num_sample, a.seed)?;
    let header: Vec<String> = (1..=a.num_sample).map(|s| format!("sample_{s}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_file(&a.out, Some(&header), &draws)
}

fn run_loo(a: &LooArgs) -> Result<()> {
    let model: GaSPModel = load_model(&a.model)?;
    let loo = leave_one_out(&model)?;
    let table = DMatrix::from_fn(loo.mean.len(), 4, |i, j| match j {
        0 => (i + 1) as f64,
        1 => loo.mean[i],
        2 => loo.sd[i],
        _ => loo.std_resid[i],
    });
    write_csv_file(&a.out, Some(&["index", "loo_mean", "loo_sd", "std_resid"]), &table)
}

fn run_inert(a: &InertArgs, out: &Printer) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold.is_finite()) {
        return Err(GaspError::InvalidArgument(format!("threshold must be positive, got {}", a.threshold)));
    }
    let model = load_model(&a.model)?;
    let report = find_inert_inputs(&model, a.threshold);
    let p = report.normalized.len();
    let table = DMatrix::from_fn(p, 5, |l, j| match j {
        0 => (l + 1) as f64,
        1 => report.scale[l],
        2 => report.beta[l],
        3 => report.normalized[l],
        _ => f64::from(u8::from(report.flagged.contains(&l))),
    });
    if let Some(path) = &a.out {
        write_csv_file(path, Some(&["dimension", "C_l", "beta_hat", "P_l", "flagged"]), &table)?;
    }
    out.line(format_args!("{:>9} {:>13} {:>13} {:>9} {:>7}", "dimension", "C_l", "beta_hat", "P_l", "flagged"));
    for l in 0..p {
        out.line(format_args!(
            "{:>9} {:>13.6e} {:>13.6e} {:>9.4} {:>7}",
            l + 1,
            report.scale[l],
            report.beta[l],
            report.normalized[l],
            if report.flagged.contains(&l) { "yes" } else { "no" }
        ));
    }
    Ok(())
}

fn run_pppredict(a: &PpPredictArgs) -> Result<()> {
    let model = load_ppmodel(&a.model)?;
    let x = read_matrix(&a.input)?;
    let h = read_optional(a.trend_file.as_ref())?;
    let pred = predict_ppgasp_with(&model, &x, h.as_ref(), SdKind::parse(&a.sd_kind)?)?;
    for (name, m) in [("mean", &pred.mean), ("sd", &pred.sd), ("lower95", &pred.lower95), ("upper95", &pred.upper95)] {
        write_csv_file(Path::new(&format!("{}{name}.csv", a.out_prefix)), None, m)?;
    }
    Ok(())
}

fn run_gen(a: &GenArgs) -> Result<()> {
    let f = TestFunction::parse(&a.function)?;
    let p = f.dim();
    let unit = if a.equispaced {
        if p != 1 {
            return Err(GaspError::InvalidArgument(format!(
                "--equispaced needs a one-dimensional function; {} has {p} inputs",
                a.function
            )));
        }
        if a.n < 2 {
            return Err(GaspError::InvalidArgument("--equispaced needs n >= 2".into()));
        }
        equispaced(a.n)
    } else if a.maximin {
        maximin_lhs(a.n, p, a.seed, DEFAULT_MAXIMIN_RESTARTS)?.points
    } else {
        lhs(a.n, p, a.seed)?.points
    };
    let design = f.natural_design(&unit)?;
    let y = DMatrix::from_vec(design.nrows(), 1, f.eval_rows(&design)?);
    let header: Vec<String> = (1..=p).map(|l| format!("x{l}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_file(&a.out_design, Some(&header), &design)?;
    write_csv_file(&a.out_response, Some(&["y"]), &y)
}

fn run_bench_cmd(a: &BenchArgs, out: &Printer) -> Result<()> {
    let report = run_bench(Experiment::parse(&a.experiment)?, &a.seeds)?;
    if let Some(path) = &a.out {
        report.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
    }
    out.line(&report);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn kernel_lists_expand() {
        let s = parse_kernel("pow_exp", Some("1.5"), 3).unwrap();
        assert_eq!(s.alpha(), &[1.5, 1.5, 1.5]);
        let s = parse_kernel("matern_5_2,pow_exp", Some("1.9,1.2"), 2).unwrap();
        assert_eq!(s.families(), &[KernelFamily::Matern52, KernelFamily::PowerExponential]);
        assert!(parse_kernel("matern_5_2,pow_exp", None, 3).is_err());
        assert!(parse_kernel("gauss", None, 1).is_err());
    }

    #[test]
    fn nugget_flags_map_to_modes() {
        let cli = Cli::try_parse_from(["gasp", "fit", "--design", "d", "--response", "y", "--out", "m", "--nugget", "0.01", "--no-lower-bound"]).unwrap();
        let Command::Fit(a) = cli.command else { panic!() };
        let o = fit_options(&a).unwrap();
        assert_eq!(o.nugget, NuggetMode::Fixed(0.01));
        assert!(!o.lower_bound);
        let bad = Cli::try_parse_from(["gasp", "fit", "--design", "d", "--response", "y", "--out", "m", "--nugget", "0.01", "--nugget-est"]);
        assert!(bad.is_err());
    }
}
