//! Command-line driver: convergence studies, Fortin certification and slope
//! fitting.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::dpg_core::{DpgError, MaterialTensor, SchemeKind};
use crate::estimator::{run_study, LevelRecord, Refinement, StudyConfig};
use crate::fortin_lab::{run_verification, ConstraintBlock, FortinError, VerifyConfig};
use crate::mesh::{build_initial_mesh, MeshError};
use crate::problems::ManufacturedSolution;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Column order of the study CSV.
pub const CSV_HEADER: [&str; 8] = ["level", "ndof", "h_max", "eta", "err_u", "err_theta", "err_M", "wall_ms"];

#[derive(Debug, Parser)]
#[command(name = "plate-dpg", version, about = "Ultraweak DPG solver for the Kirchhoff-Love plate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a convergence study and write one CSV row per level.
    Solve(SolveArgs),
    /// Certify the Fortin operators on the reference element.
    FortinVerify(VerifyArgs),
    /// Fit a log-log slope of a CSV column against ndof.
    Slopes(SlopesArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Theta,
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RefineArg {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Singular,
    Smooth,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BlockArg {
    DualBasis,
    DivdivVector,
    Ddiv,
}

impl From<BlockArg> for ConstraintBlock {
    fn from(b: BlockArg) -> Self {
        match b {
            BlockArg::DualBasis => ConstraintBlock::DualBasis,
            BlockArg::DivdivVector => ConstraintBlock::DivDivVector,
            BlockArg::Ddiv => ConstraintBlock::DDiv,
        }
    }
}

#[derive(Clone, Debug, clap::Args)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value_t = SchemeArg::Theta)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = RefineArg::Uniform)]
    pub refine: RefineArg,
    #[arg(long, value_enum, default_value_t = ProblemArg::Singular)]
    pub problem: ProblemArg,
    /// Maximal number of solved levels.
    #[arg(long, default_value_t = 50)]
    pub levels: usize,
    /// Stop after the first level with at least this many unknowns.
    #[arg(long, default_value_t = 30_000)]
    pub budget_dofs: usize,
    /// Bulk parameter of the adaptive marking.
    #[arg(long, default_value_t = 0.7)]
    pub theta_mark: f64,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for symmetry with `fortin-verify`; the study is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for the element loops (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Polynomial degree of the tensor test space of the plain scheme.
    #[arg(long, default_value_t = 4, value_parser = parse_tensor_degree)]
    pub plain_tensor_degree: u8,
    /// Leave the wall_ms column empty so that runs compare byte for byte.
    #[arg(long)]
    pub no_timing: bool,
}

fn parse_tensor_degree(s: &str) -> Result<u8, String> {
    match s {
        "2" => Ok(2),
        "4" => Ok(4),
        _ => Err(format!("expected 2 or 4, got {s}")),
    }
}

#[derive(Clone, Debug, clap::Args)]
pub struct VerifyArgs {
    /// Threshold for orthogonality and commutativity residuals.
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Random surrogates for the orthogonality suite.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Random surrogates per element size for the boundedness study.
    #[arg(long, default_value_t = 20)]
    pub boundedness_samples: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Test hook: make one constraint block rank deficient.
    #[arg(long, value_enum, hide = true)]
    pub corrupt: Option<BlockArg>,
}

#[derive(Clone, Debug, clap::Args)]
pub struct SlopesArgs {
    /// Study CSV.
    pub csv: PathBuf,
    /// Column to fit against ndof.
    #[arg(long, default_value = "eta")]
    pub column: String,
    /// Number of trailing rows to fit; all rows when absent.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Dpg(#[from] DpgError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fortin(#[from] FortinError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Csv(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e.to_string())
    }
}

/// Validated study configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: ManufacturedSolution,
    pub study: StudyConfig,
    pub timing: bool,
}

impl RunConfig {
    pub fn from_args(a: &SolveArgs) -> Result<Self, CliError> {
        let scheme = match a.scheme {
            SchemeArg::Theta => SchemeKind::Theta,
            SchemeArg::Plain => SchemeKind::Plain { tensor_degree: a.plain_tensor_degree as usize },
        }
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
        if !(a.theta_mark > 0.0 && a.theta_mark <= 1.0) {
            return Err(CliError::Usage(format!("--theta-mark must lie in (0, 1], got {}", a.theta_mark)));
        }
        if a.levels == 0 {
            return Err(CliError::Usage("--levels must be positive".into()));
        }
        let problem = match a.problem {
            ProblemArg::Singular => ManufacturedSolution::singular(),
            ProblemArg::Smooth => ManufacturedSolution::smooth(MaterialTensor::identity()),
            ProblemArg::Zero => ManufacturedSolution::zero(),
        };
        let refinement = match a.refine {
            RefineArg::Uniform => Refinement::Uniform,
            RefineArg::Adaptive => Refinement::Adaptive { theta: a.theta_mark },
        };
        Ok(Self {
            problem,
            study: StudyConfig { scheme, refinement, max_levels: a.levels, budget_dofs: a.budget_dofs },
            timing: !a.no_timing,
        })
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Writes the study records as CSV.
pub fn write_csv(w: impl Write, records: &[LevelRecord], timing: bool) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.write_record([
            r.level.to_string(),
            r.ndof.to_string(),
            fmt(r.h_max),
            fmt(r.eta),
            fmt(r.errors.u),
            r.errors.theta.map(fmt).unwrap_or_default(),
            fmt(r.errors.m),
            if timing { format!("{:.3}", r.wall_ms) } else { String::new() },
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-log slope of `column` against `ndof` over the last `window` rows
/// (all rows when `None`).
pub fn slope_from_csv(input: impl Read, column: &str, window: Option<usize>) -> Result<f64, CliError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Csv(format!("no column named {name:?}")))
    };
    let (ix, iy) = (find("ndof")?, find(column)?);
    let mut pts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64, CliError> {
            let s = rec.get(i).unwrap_or("");
            s.trim().parse::<f64>().map_err(|_| CliError::Csv(format!("row {}: cannot parse {s:?}", pts.len() + 1)))
        };
        let (x, y) = (parse(ix)?, parse(iy)?);
        if !(x > 0.0 && y > 0.0) {
            return Err(CliError::Csv(format!("row {}: log-log fit needs positive values", pts.len() + 1)));
        }
        pts.push((x.ln(), y.ln()));
    }
    let w = window.unwrap_or(pts.len()).min(pts.len());
    if w < 3 {
        return Err(CliError::Csv(format!("need at least 3 rows to fit, have {w}")));
    }
    let tail = &pts[pts.len() - w..];
    let (x, y): (Vec<f64>, Vec<f64>) = tail.iter().copied().unzip();
    Ok(fit_slope(&x, &y))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args)?;
    let mesh = build_initial_mesh(&cfg.problem.seed())?;
    let records = with_threads(args.threads, || run_study(&cfg.problem, &mesh, &cfg.study, |_, _| {}))??;
    match &args.out {
        Some(p) => write_csv(File::create(p)?, &records, cfg.timing)?,
        None => write_csv(&mut *stdout, &records, cfg.timing)?,
    }
    if let Some(last) = records.last() {
        writeln!(stderr, "{} levels, {} unknowns on the last level, eta = {:e}", records.len(), last.ndof, last.eta)?;
    }
    Ok(())
}

/// Runs the Fortin suite; `Ok(false)` when a certificate fails.
pub fn cmd_fortin_verify(args: &VerifyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<bool, CliError> {
    if !(args.tolerance > 0.0) {
        return Err(CliError::Usage("--tolerance must be positive".into()));
    }
    let cfg = VerifyConfig {
        seed: args.seed,
        samples: args.samples,
        tolerance: args.tolerance,
        boundedness_samples: args.boundedness_samples,
        corrupt: args.corrupt.map(Into::into),
    };
    let report = with_threads(args.threads, || run_verification(&cfg))??;
    write!(stdout, "{}", report.to_text())?;
    for c in report.failures() {
        writeln!(stderr, "failed: {} ({:e})", c.name, c.value)?;
    }
    Ok(report.passed())
}

pub fn cmd_slopes(args: &SlopesArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = File::open(&args.csv).map_err(|e| CliError::Usage(format!("{}: {e}", args.csv.display())))?;
    let s = slope_from_csv(file, &args.column, args.window)?;
    writeln!(stdout, "{s:.6}")?;
    Ok(())
}

/// Executes a parsed command and returns the process exit code.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let res = match &cli.command {
        Command::Solve(a) => cmd_solve(a, stdout, stderr).map(|_| true),
        Command::FortinVerify(a) => cmd_fortin_verify(a, stdout, stderr),
        Command::Slopes(a) => cmd_slopes(a, stdout).map(|_| true),
    };
    match res {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` and runs; usage errors map to exit code 2.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli, stdout, stderr),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(stderr, "{}", e.render());
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let n: Vec<f64> = (0..6).map(|k| 100.0 * 4f64.powi(k)).collect();
        let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = n.iter().map(|v| (3.0 * v.powf(-0.5)).ln()).collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-10);
        let c = vec![2f64.ln(); 6];
        assert!(fit_slope(&x, &c).abs() < 1e-15);
    }

    #[test]
    fn window_uses_trailing_rows() {
        let csv = "level,ndof,eta\n0,10,1\n1,100,1\n2,1000,0.1\n3,10000,0.01\n";
        let all = slope_from_csv(csv.as_bytes(), "eta", None).unwrap();
        let tail = slope_from_csv(csv.as_bytes(), "eta", Some(3)).unwrap();
        assert!((tail + 1.0).abs() < 1e-12, "{tail}");
        assert!(all > tail);
    }

    #[test]
    fn malformed_inputs_are_usage_errors() {
        let short = "ndof,eta\n1,1\n2,1\n";
        assert_eq!(slope_from_csv(short.as_bytes(), "eta", None).unwrap_err().exit_code(), EXIT_USAGE);
        let missing = "ndof,err\n1,1\n2,1\n3,1\n";
        assert!(matches!(slope_from_csv(missing.as_bytes(), "eta", None), Err(CliError::Csv(_))));
        let empty_cell = "ndof,err_theta\n1,\n2,\n3,\n";
        assert!(slope_from_csv(empty_cell.as_bytes(), "err_theta", None).is_err());
    }

    #[test]
    fn bad_flags_exit_with_usage_code() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run_from(["plate-dpg", "solve", "--scheme", "nope"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run_from(["plate-dpg", "solve", "--plain-tensor-degree", "3", "--scheme", "plain"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run_from(["plate-dpg", "solve", "--theta-mark", "1.5"], &mut o, &mut e), EXIT_USAGE);
    }

    #[test]
    fn zero_problem_csv() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_from(["plate-dpg", "solve", "--problem", "zero", "--no-timing", "--levels", "2"], &mut o, &mut e);
        assert_eq!(code, EXIT_OK);
        let text = String::from_utf8(o).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[3], "0e0");
        assert_eq!(row[4], "0e0");
        assert_eq!(row[5], "0e0");
        assert_eq!(row[6], "0e0");
        assert_eq!(row[7], "");
    }
}
