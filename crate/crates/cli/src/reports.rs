//! Report builders: the two comparison tables, the ECMO reanalysis,
//! asymptotic grids and custom simulations.

use erade_core::asymptotics::{crlb, dbcd_variance, sigma_general, wald_power};
use erade_core::designs::DEFAULT_GAMMA;
use erade_core::sim::WALD_LEVEL;
use erade_core::{
    simulate, DesignConfig, MonteCarloRun, ResponseModel, SimulationSummary, TargetAllocation, TargetParams,
};

use crate::error::CliError;
use crate::report::{Cell, Report};

pub const DEFAULT_REPS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 1;
pub const TABLE_N: usize = 100;

/// The fourteen `(P1, P2)` settings of both comparison tables.
pub const TABLE_SETTINGS: [(f64, f64); 14] = [
    (0.9, 0.7),
    (0.9, 0.6),
    (0.9, 0.5),
    (0.9, 0.3),
    (0.8, 0.8),
    (0.8, 0.7),
    (0.8, 0.6),
    (0.7, 0.5),
    (0.7, 0.3),
    (0.6, 0.4),
    (0.5, 0.5),
    (0.5, 0.2),
    (0.4, 0.3),
    (0.2, 0.2),
];

pub const ECMO_N: usize = 185;
pub const ECMO_P1: f64 = 65.0 / 93.0;
pub const ECMO_P2: f64 = 38.0 / 92.0;
/// Deaths observed in the actual trial.
pub const ECMO_OBSERVED_DEATHS: u64 = 82;
pub const ECMO_N2_ABOVE: usize = 52;
pub const ECMO_N2_AT_MOST: usize = 39;

pub mod schema {
    pub const TABLE1: &str = "erade.table1/1";
    pub const TABLE2: &str = "erade.table2/1";
    pub const ECMO: &str = "erade.ecmo/1";
    pub const ASYMPTOTICS: &str = "erade.asymptotics/1";
    pub const SIMULATION: &str = "erade.simulation/1";
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub parallelism: usize,
}

impl RunOptions {
    pub fn new(reps: usize, n: usize, seed: u64) -> Self {
        Self {
            reps,
            n,
            seed,
            parallelism: default_parallelism(),
        }
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism;
        self
    }

    fn run(&self, design: &DesignConfig, model: &ResponseModel) -> Result<MonteCarloRun, CliError> {
        Ok(simulate(design, model, self.n, self.reps, self.seed, self.parallelism)?)
    }
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// What to build. Output depends only on this value, never on the thread
/// count.
#[derive(Clone, Debug, PartialEq)]
pub enum ReportSpec {
    Table1(RunOptions),
    Table2(RunOptions),
    Ecmo(RunOptions),
    Custom {
        design: DesignConfig,
        model: ResponseModel,
        percentiles: Vec<f64>,
        options: RunOptions,
    },
    Asymptotics {
        target: TargetAllocation,
        grid: Vec<TargetParams>,
        gamma: f64,
    },
}

impl ReportSpec {
    pub fn build(&self) -> Result<Report, CliError> {
        match self {
            ReportSpec::Table1(o) => table1(o),
            ReportSpec::Table2(o) => table2(o),
            ReportSpec::Ecmo(o) => ecmo(o),
            ReportSpec::Custom {
                design,
                model,
                percentiles,
                options,
            } => custom(design, model, percentiles, options),
            ReportSpec::Asymptotics { target, grid, gamma } => Ok(asymptotics(target, grid, *gamma)),
        }
    }
}

type Row = Vec<(String, Cell)>;

fn put(row: &mut Row, name: impl Into<String>, cell: Cell) {
    row.push((name.into(), cell));
}

fn put_num(row: &mut Row, name: impl Into<String>, x: f64) {
    put(row, name, Cell::number(x));
}

/// Allocation mean and `n var` with their standard errors.
fn allocation_cells(row: &mut Row, prefix: &str, s: &SimulationSummary) {
    put_num(row, format!("{prefix}_mean_prop"), s.mean_prop);
    put_num(row, format!("{prefix}_mean_prop_se"), s.mean_prop_se);
    put_num(row, format!("{prefix}_n_var"), s.n_var);
    put_num(row, format!("{prefix}_n_var_se"), s.n_var_se);
}

/// Standard error of a proportion estimated from `reps` trials.
fn proportion_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

fn comparison_table(
    schema: &str,
    target: TargetAllocation,
    designs: &[(&str, DesignConfig)],
    o: &RunOptions,
) -> Result<Report, CliError> {
    let mut report = Report::new(schema);
    for (p1, p2) in TABLE_SETTINGS {
        let model = ResponseModel::bernoulli(p1, p2)?;
        let params = model.params();
        let mut row = Row::new();
        put_num(&mut row, "p1", p1);
        put_num(&mut row, "p2", p2);
        put(&mut row, "n", Cell::Count(o.n as u64));
        put(&mut row, "reps", Cell::Count(o.reps as u64));
        put(&mut row, "seed", Cell::Count(o.seed));
        put_num(&mut row, "target", target.evaluate(&params)?);
        put_num(&mut row, "sigma_sq", sigma_general(&target, &params)?);
        put_num(&mut row, "dbcd_sigma_sq", dbcd_variance(DEFAULT_GAMMA, &target, &params)?);
        for (name, design) in designs {
            let summary = SimulationSummary::from_run(&o.run(design, &model)?);
            allocation_cells(&mut row, name, &summary);
        }
        report.push(row);
    }
    Ok(report)
}

/// Urn target: ERADE with alpha 1/2 and 2/3, drop-the-loser (5,5,1) and
/// DBCD with gamma 2, on common random numbers.
pub fn table1(o: &RunOptions) -> Result<Report, CliError> {
    let t = TargetAllocation::Urn;
    comparison_table(
        schema::TABLE1,
        t,
        &[
            ("erade_a0.5", DesignConfig::erade(0.5, t)),
            ("erade_a0.667", DesignConfig::erade(2.0 / 3.0, t)),
            ("dl", DesignConfig::drop_the_loser(5, 5, 1)),
            ("dbcd", DesignConfig::dbcd(DEFAULT_GAMMA, t)),
        ],
        o,
    )
}

/// Square-root target: ERADE with alpha 1/2 and 2/3 and DBCD with gamma 2.
pub fn table2(o: &RunOptions) -> Result<Report, CliError> {
    let t = TargetAllocation::Rsihr;
    comparison_table(
        schema::TABLE2,
        t,
        &[
            ("erade_a0.5", DesignConfig::erade(0.5, t)),
            ("erade_a0.667", DesignConfig::erade(2.0 / 3.0, t)),
            ("dbcd", DesignConfig::dbcd(DEFAULT_GAMMA, t)),
        ],
        o,
    )
}

pub fn ecmo_designs() -> [(&'static str, DesignConfig); 3] {
    [
        ("erade", DesignConfig::erade(0.5, TargetAllocation::Urn)),
        ("rpw", DesignConfig::rpw(1, 1)),
        ("mrpw", DesignConfig::modified_rpw(2, 1, 1)),
    ]
}

/// ECMO reanalysis: one row per design plus the analytic row.
pub fn ecmo(o: &RunOptions) -> Result<Report, CliError> {
    let model = ResponseModel::bernoulli(ECMO_P1, ECMO_P2)?;
    let params = model.params();
    let target = TargetAllocation::Urn;
    let v = target.evaluate(&params)?;
    let mut report = Report::new(schema::ECMO);
    for (name, design) in ecmo_designs() {
        let run = o.run(&design, &model)?;
        let s = SimulationSummary::from_run(&run);
        let reps = run.reps();
        let above = run.count_n2_above(ECMO_N2_ABOVE) as f64 / reps as f64;
        let at_most = run.count_n2_at_most(ECMO_N2_AT_MOST) as f64 / reps as f64;
        let bp = run.n1_boxplot()?;
        let mut row = Row::new();
        put(&mut row, "design", Cell::text(name));
        put(&mut row, "rule", Cell::text(design.rule.to_string()));
        put(&mut row, "n", Cell::Count(o.n as u64));
        put(&mut row, "reps", Cell::Count(reps as u64));
        put(&mut row, "seed", Cell::Count(o.seed));
        put_num(&mut row, "mean_n1", s.mean_n1);
        put_num(&mut row, "mean_n1_se", s.mean_n1_se);
        put_num(&mut row, "mean_deaths", s.mean_failures);
        put_num(&mut row, "mean_deaths_se", s.mean_failures_se);
        allocation_cells(&mut row, "alloc", &s);
        put_num(&mut row, "power", s.power);
        put_num(&mut row, "power_se", s.power_se);
        put(&mut row, "expected_power", s.expected_power.map_or(Cell::Empty, Cell::number));
        put(&mut row, "power_at_n2_52", Cell::Empty);
        put_num(&mut row, "p_n2_above_52", above);
        put_num(&mut row, "p_n2_above_52_se", proportion_se(above, reps));
        put_num(&mut row, "p_n2_at_most_39", at_most);
        put_num(&mut row, "p_n2_at_most_39_se", proportion_se(at_most, reps));
        put(&mut row, "count_n2_ge_n1", Cell::Count(s.n2_ge_n1 as u64));
        put_num(&mut row, "n1_min", bp.min);
        put_num(&mut row, "n1_q1", bp.q1);
        put_num(&mut row, "n1_median", bp.median);
        put_num(&mut row, "n1_q3", bp.q3);
        put_num(&mut row, "n1_max", bp.max);
        put_num(&mut row, "n1_whisker_low", bp.whisker_low);
        put_num(&mut row, "n1_whisker_high", bp.whisker_high);
        put(&mut row, "n1_outliers", Cell::list(&bp.outliers));
        report.push(row);
    }

    // analytic reference: target allocation, its variance, and the Wald
    // power at the target split and at N2 = 52
    let n = o.n as f64;
    let mut row = Row::new();
    put(&mut row, "design", Cell::text("analytic"));
    put(&mut row, "rule", Cell::Empty);
    put(&mut row, "n", Cell::Count(o.n as u64));
    put(&mut row, "reps", Cell::Empty);
    put(&mut row, "seed", Cell::Empty);
    put_num(&mut row, "mean_n1", n * v);
    put(&mut row, "mean_n1_se", Cell::Empty);
    put_num(&mut row, "mean_deaths", n * (v * (1.0 - ECMO_P1) + (1.0 - v) * (1.0 - ECMO_P2)));
    put(&mut row, "mean_deaths_se", Cell::Empty);
    put_num(&mut row, "alloc_mean_prop", v);
    put(&mut row, "alloc_mean_prop_se", Cell::Empty);
    put_num(&mut row, "alloc_n_var", sigma_general(&target, &params)?);
    put(&mut row, "alloc_n_var_se", Cell::Empty);
    put_num(&mut row, "power", wald_power(ECMO_P1, ECMO_P2, n * v, n * (1.0 - v), WALD_LEVEL)?);
    put(&mut row, "power_se", Cell::Empty);
    put(&mut row, "expected_power", Cell::Empty);
    let n2 = ECMO_N2_ABOVE as f64;
    put_num(&mut row, "power_at_n2_52", wald_power(ECMO_P1, ECMO_P2, n - n2, n2, WALD_LEVEL)?);
    for name in [
        "p_n2_above_52",
        "p_n2_above_52_se",
        "p_n2_at_most_39",
        "p_n2_at_most_39_se",
        "count_n2_ge_n1",
        "n1_min",
        "n1_q1",
        "n1_median",
        "n1_q3",
        "n1_max",
        "n1_whisker_low",
        "n1_whisker_high",
        "n1_outliers",
    ] {
        put(&mut row, name, Cell::Empty);
    }
    report.push(row);

    let mut row: Row = report.columns.iter().map(|c| (c.clone(), Cell::Empty)).collect();
    row[0].1 = Cell::text("observed");
    let deaths = report.column("mean_deaths").expect("column");
    row[deaths].1 = Cell::Count(ECMO_OBSERVED_DEATHS);
    report.push(row);
    Ok(report)
}

fn param_cells(row: &mut Row, params: &TargetParams) {
    match *params {
        TargetParams::Binary { p1, p2 } => {
            put_num(row, "p1", p1);
            put_num(row, "p2", p2);
        }
        TargetParams::Gaussian { mu1, mu2, tau1, tau2 } => {
            put_num(row, "mu1", mu1);
            put_num(row, "mu2", mu2);
            put_num(row, "tau1", tau1);
            put_num(row, "tau2", tau2);
        }
    }
}

/// `v`, `sigma^2`, the Cramér–Rao bound and the DBCD variance over a grid.
/// A point outside the domain yields a row with only its error message.
pub fn asymptotics(target: &TargetAllocation, grid: &[TargetParams], gamma: f64) -> Report {
    let mut report = Report::new(schema::ASYMPTOTICS);
    for params in grid {
        let mut row = Row::new();
        put(&mut row, "target", Cell::text(target.name()));
        param_cells(&mut row, params);
        put_num(&mut row, "gamma", gamma);
        let values = (|| {
            Ok::<_, erade_core::Error>([
                target.evaluate(params)?,
                sigma_general(target, params)?,
                crlb(target, params)?,
                dbcd_variance(gamma, target, params)?,
            ])
        })();
        match values {
            Ok([v, sigma, bound, dbcd]) => {
                put_num(&mut row, "v", v);
                put_num(&mut row, "sigma_sq", sigma);
                put_num(&mut row, "crlb", bound);
                put_num(&mut row, "dbcd_sigma_sq", dbcd);
                put(&mut row, "error", Cell::Empty);
            }
            Err(e) => {
                for name in ["v", "sigma_sq", "crlb", "dbcd_sigma_sq"] {
                    put(&mut row, name, Cell::Empty);
                }
                put(&mut row, "error", Cell::text(e.to_string()));
            }
        }
        report.push(row);
    }
    report
}

/// One design under one model.
pub fn custom(
    design: &DesignConfig,
    model: &ResponseModel,
    percentiles: &[f64],
    o: &RunOptions,
) -> Result<Report, CliError> {
    let run = o.run(design, model)?;
    let s = SimulationSummary::from_run(&run);
    let mut row = Row::new();
    put(&mut row, "rule", Cell::text(design.rule.to_string()));
    put(&mut row, "target", Cell::text(design.target.name()));
    put(&mut row, "m0", Cell::Count(design.m0 as u64));
    param_cells(&mut row, &model.params());
    put(&mut row, "n", Cell::Count(o.n as u64));
    put(&mut row, "reps", Cell::Count(s.reps as u64));
    put(&mut row, "seed", Cell::Count(o.seed));
    allocation_cells(&mut row, "alloc", &s);
    put_num(&mut row, "mean_n1", s.mean_n1);
    put_num(&mut row, "mean_n1_se", s.mean_n1_se);
    put_num(&mut row, "mean_failures", s.mean_failures);
    put_num(&mut row, "mean_failures_se", s.mean_failures_se);
    put_num(&mut row, "power", s.power);
    put_num(&mut row, "power_se", s.power_se);
    put(&mut row, "expected_power", s.expected_power.map_or(Cell::Empty, Cell::number));
    put_num(&mut row, "coupling_gap", s.mean_coupling_gap);
    put_num(&mut row, "coupling_gap_se", s.mean_coupling_gap_se);
    put(&mut row, "count_n2_ge_n1", Cell::Count(s.n2_ge_n1 as u64));
    let bp = run.n1_boxplot().ok();
    put_num(&mut row, "n1_min", s.n1_min);
    put_num(&mut row, "n1_q1", s.n1_q1);
    put_num(&mut row, "n1_median", s.n1_median);
    put_num(&mut row, "n1_q3", s.n1_q3);
    put_num(&mut row, "n1_max", s.n1_max);
    for p in percentiles {
        let label = (p * 100.0 * 1e6).round() / 1e6;
        put_num(&mut row, format!("n1_p{label}"), run.n1_percentile(*p)?);
    }
    put(&mut row, "n1_outliers", bp.map_or(Cell::Empty, |b| Cell::list(&b.outliers)));
    let mut report = Report::new(schema::SIMULATION);
    report.push(row);
    Ok(report)
}
