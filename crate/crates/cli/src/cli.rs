//! The `erade` command.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use erade_core::designs::DEFAULT_GAMMA;
use erade_core::{DesignConfig, ResponseKind, ResponseModel, Rule, TargetAllocation, TargetParams};
use erade_service::{serve, ServeOptions};

use crate::error::CliError;
use crate::report::Format;
use crate::reports::{self, ReportSpec, RunOptions, DEFAULT_REPS, DEFAULT_SEED, ECMO_N, TABLE_N};

#[derive(Parser, Debug)]
#[command(name = "erade", version, about = "Efficient randomized-adaptive designs: simulation reports and a live trial service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte Carlo summary of one design under one response model.
    Simulate(SimulateArgs),
    /// Urn-target comparison table: ERADE, drop-the-loser and DBCD.
    Table1(TableArgs),
    /// Square-root-target comparison table: ERADE and DBCD.
    Table2(TableArgs),
    /// ECMO reanalysis under ERADE and play-the-winner urns.
    Ecmo(EcmoArgs),
    /// Target, asymptotic variance, Cramér–Rao bound and DBCD variance over a grid.
    Asymptotics(AsymptoticsArgs),
    /// Run the trial allocation service.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

impl RunArgs {
    fn options(&self, n: usize) -> Result<RunOptions, CliError> {
        if self.reps < 2 {
            return Err(CliError::Usage(format!("--reps must be at least 2, got {}", self.reps)));
        }
        let o = RunOptions::new(self.reps, n, self.seed);
        match self.parallelism {
            Some(0) => Err(CliError::Usage("--parallelism must be at least 1".into())),
            Some(p) => Ok(o.with_parallelism(p)),
            None => Ok(o),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
}

impl ModelArgs {
    fn model(&self) -> Result<ResponseModel, CliError> {
        let gaussian = [self.mu1, self.mu2, self.tau1, self.tau2];
        match (self.p1, self.p2, gaussian) {
            (Some(p1), Some(p2), [None, None, None, None]) => Ok(ResponseModel::bernoulli(p1, p2)?),
            (None, None, [Some(mu1), Some(mu2), Some(tau1), Some(tau2)]) => {
                Ok(ResponseModel::gaussian(mu1, mu2, tau1, tau2)?)
            }
            _ => Err(CliError::Usage(
                "give either --p1 and --p2, or all of --mu1 --mu2 --tau1 --tau2".into(),
            )),
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// erade, efron, dbcd, dl, rpw, mrpw or cr, optionally with arguments
    /// such as `erade:0.5` or `dl:5,5,1`.
    #[arg(long)]
    pub design: String,
    /// urn, rsihr, neyman-binary, zr-gaussian, neyman-gaussian, da-optimal
    /// or fixed:<rho>. Defaults to urn for binary responses.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Burn-in patients per arm.
    #[arg(long)]
    pub m0: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = TABLE_N)]
    pub n: usize,
    #[command(flatten)]
    pub run: RunArgs,
    /// Extra N1 percentiles, as fractions.
    #[arg(long, value_delimiter = ',')]
    pub percentiles: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct TableArgs {
    #[arg(long, default_value_t = TABLE_N)]
    pub n: usize,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct EcmoArgs {
    #[arg(long, default_value_t = ECMO_N)]
    pub n: usize,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct AsymptoticsArgs {
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Grid values; the grid is their Cartesian product.
    #[arg(long, value_delimiter = ',')]
    pub p1: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub p2: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub mu1: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub mu2: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub tau1: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub tau2: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, env = "ERADE_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "ERADE_JOURNAL_DIR", default_value = "journal")]
    pub journal_dir: PathBuf,
    /// Require `Authorization: Bearer <token>` on every route but /healthz.
    #[arg(long, env = "ERADE_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
}

fn parse_target(s: &str) -> Result<TargetAllocation, CliError> {
    Ok(s.parse()?)
}

/// Design from `--design` plus the `--alpha`, `--gamma`, `--target` and
/// `--m0` overrides.
pub fn design_from_args(a: &SimulateArgs, kind: ResponseKind) -> Result<DesignConfig, CliError> {
    let has_args = a.design.contains(':');
    let mut rule: Rule = a.design.parse()?;
    match (&mut rule, a.alpha, a.gamma) {
        (_, Some(_), Some(_)) => return Err(CliError::Usage("--alpha and --gamma are exclusive".into())),
        (Rule::Erade { alpha } | Rule::Efron { alpha }, Some(x), None) if !has_args => *alpha = x,
        (Rule::Dbcd { gamma }, None, Some(x)) if !has_args => *gamma = x,
        (_, None, None) => {}
        _ => {
            return Err(CliError::Usage(format!(
                "--alpha/--gamma do not apply to design {:?}",
                a.design
            )))
        }
    }
    rule.validate()?;
    let target = match (&a.target, rule) {
        (Some(t), _) => parse_target(t)?,
        (None, Rule::Erade { .. } | Rule::Dbcd { .. }) => match kind {
            ResponseKind::Binary => TargetAllocation::Urn,
            ResponseKind::Continuous => {
                return Err(CliError::Usage("--target is required for continuous responses".into()))
            }
        },
        (None, _) => TargetAllocation::Urn,
    };
    let mut design = DesignConfig::new(rule, target);
    if a.target.is_some() && design.target != target {
        return Err(CliError::Usage(format!("{rule} always targets {}", design.target)));
    }
    if let Some(m0) = a.m0 {
        match &mut design.rule {
            Rule::ModifiedRpw { m0: inner, .. } => *inner = m0,
            Rule::Erade { .. } | Rule::Dbcd { .. } => {}
            _ => return Err(CliError::Usage(format!("--m0 does not apply to {rule}"))),
        }
        design.m0 = m0;
    }
    design.validate(kind)?;
    Ok(design)
}

fn asymptotic_grid(a: &AsymptoticsArgs, target: &TargetAllocation) -> Result<Vec<TargetParams>, CliError> {
    let binary = !a.p1.is_empty() || !a.p2.is_empty();
    let gaussian = [&a.mu1, &a.mu2, &a.tau1, &a.tau2].iter().any(|v| !v.is_empty());
    let mut grid = Vec::new();
    match (binary, gaussian) {
        (true, true) => return Err(CliError::Usage("mix of binary and Gaussian grid flags".into())),
        (true, false) => {
            if a.p1.is_empty() || a.p2.is_empty() {
                return Err(CliError::Usage("give both --p1 and --p2".into()));
            }
            for &p1 in &a.p1 {
                for &p2 in &a.p2 {
                    grid.push(TargetParams::Binary { p1, p2 });
                }
            }
        }
        (false, true) => {
            if [&a.mu1, &a.mu2, &a.tau1, &a.tau2].iter().any(|v| v.is_empty()) {
                return Err(CliError::Usage("give all of --mu1 --mu2 --tau1 --tau2".into()));
            }
            for &mu1 in &a.mu1 {
                for &mu2 in &a.mu2 {
                    for &tau1 in &a.tau1 {
                        for &tau2 in &a.tau2 {
                            grid.push(TargetParams::Gaussian { mu1, mu2, tau1, tau2 });
                        }
                    }
                }
            }
        }
        (false, false) => match target.family() {
            Some(ResponseKind::Continuous) => {
                for (mu1, mu2, tau1, tau2) in DEFAULT_GAUSSIAN_GRID {
                    grid.push(TargetParams::Gaussian { mu1, mu2, tau1, tau2 });
                }
            }
            _ => {
                for (p1, p2) in reports::TABLE_SETTINGS {
                    grid.push(TargetParams::Binary { p1, p2 });
                }
            }
        },
    }
    Ok(grid)
}

const DEFAULT_GAUSSIAN_GRID: [(f64, f64, f64, f64); 5] = [
    (1.0, 2.0, 1.0, 1.5),
    (2.0, 2.0, 1.0, 1.0),
    (3.0, 1.5, 2.0, 0.5),
    (1.5, 4.0, 1.0, 1.0),
    (5.0, 3.0, 1.5, 2.5),
];

/// Turns parsed arguments into a report spec and its output settings.
pub fn report_spec(command: &Command) -> Result<Option<(ReportSpec, OutputArgs)>, CliError> {
    Ok(Some(match command {
        Command::Simulate(a) => {
            let model = a.model.model()?;
            let design = design_from_args(a, model.kind())?;
            if let Some(p) = a.percentiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(CliError::Usage(format!("percentile {p} is outside [0, 1]")));
            }
            let spec = ReportSpec::Custom {
                design,
                model,
                percentiles: a.percentiles.clone(),
                options: a.run.options(a.n)?,
            };
            (spec, a.output.clone())
        }
        Command::Table1(a) => (ReportSpec::Table1(a.run.options(a.n)?), a.output.clone()),
        Command::Table2(a) => (ReportSpec::Table2(a.run.options(a.n)?), a.output.clone()),
        Command::Ecmo(a) => (ReportSpec::Ecmo(a.run.options(a.n)?), a.output.clone()),
        Command::Asymptotics(a) => {
            let target = parse_target(&a.target)?;
            let grid = asymptotic_grid(a, &target)?;
            (ReportSpec::Asymptotics { target, grid, gamma: a.gamma }, a.output.clone())
        }
        Command::Serve(_) => return Ok(None),
    }))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Serve(a) = &cli.command {
        let options = ServeOptions {
            addr: a.listen,
            journal_dir: a.journal_dir.clone(),
            token: a.token.clone(),
        };
        let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: None, source })?;
        return Ok(runtime.block_on(serve(options))?);
    }
    let (spec, output) = report_spec(&cli.command)?.expect("report command");
    let io_error = |source| CliError::Io { path: output.out.clone(), source };
    // open the destination first so a bad path fails before the simulation
    let file = match &output.out {
        Some(path) => Some(File::create(path).map_err(io_error)?),
        None => None,
    };
    let report = spec.build()?;
    match file {
        Some(f) => report.write_to(output.format, BufWriter::new(f)),
        None => report.write_to(output.format, std::io::stdout().lock()),
    }
    .map_err(io_error)
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
