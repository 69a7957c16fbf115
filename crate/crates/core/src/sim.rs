//! Sequential trial simulation and Monte Carlo aggregation.
//!
//! Replication `i` of a run draws from `RandomStream::new(master_seed, i)`, so
//! results do not depend on the number of worker threads or on the order in
//! which replications finish. Aggregates are reduced sequentially in
//! replication order and are therefore bit-identical across thread counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{normal_quantile, wald_power};
use crate::designs::{Allocator, DesignConfig};
use crate::error::{Error, Result};
use crate::estimators;
use crate::rng::RandomStream;
use crate::targets::TargetParams;
use crate::trial::{Arm, ResponseModel, TrialState};

/// Level of the Wald test recorded for each simulated trial.
pub const WALD_LEVEL: f64 = 0.05;

/// Final state of one simulated trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub n1: usize,
    pub n2: usize,
    /// Binary failures; zero for continuous responses.
    pub failures: usize,
    pub wald_reject: bool,
    pub estimates: TargetParams,
    pub final_rho_hat: f64,
}

impl TrialResult {
    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn proportion(&self) -> f64 {
        self.n1 as f64 / self.n() as f64
    }

    /// `|N1 - n rho_hat| / sqrt(n)`.
    pub fn coupling_gap(&self) -> f64 {
        let n = self.n() as f64;
        (self.n1 as f64 - n * self.final_rho_hat).abs() / n.sqrt()
    }
}

/// Two-sided Wald test of equal means on raw arm means. Never rejects when
/// an arm has no patients or a zero variance estimate.
pub fn wald_test(state: &TrialState, level: f64) -> bool {
    let mut diff = 0.0;
    let mut var = 0.0;
    for (sign, arm) in [(1.0, Arm::One), (-1.0, Arm::Two)] {
        let k = state.responded(arm);
        if k == 0 {
            return false;
        }
        let kf = k as f64;
        let mean = state.sum(arm) / kf;
        let v = match state.kind() {
            crate::trial::ResponseKind::Binary => mean * (1.0 - mean),
            crate::trial::ResponseKind::Continuous => {
                if k < 2 {
                    return false;
                }
                (state.sumsq(arm) - kf * mean * mean).max(0.0) / (kf - 1.0)
            }
        };
        if v <= 0.0 {
            return false;
        }
        diff += sign * mean;
        var += v / kf;
    }
    diff.abs() / var.sqrt() > normal_quantile(1.0 - level / 2.0)
}

/// Runs one trial of `n` patients with immediate responses.
pub fn run_trial(
    config: &DesignConfig,
    model: &ResponseModel,
    n: usize,
    stream: &mut RandomStream,
) -> Result<TrialResult> {
    model.validate()?;
    let mut allocator = Allocator::new(*config, model.kind())?;
    let burn_in = 2 * config.burn_in_per_arm();
    if n < burn_in.max(1) {
        return Err(Error::Config(format!(
            "trial size {n} is smaller than the burn-in of {burn_in} patients"
        )));
    }
    let mut state = TrialState::new(model)?;
    for _ in 0..n {
        let a = allocator.assign(&state, stream)?;
        let patient = state.apply_assignment(a.arm);
        let outcome = model.sample(a.arm, stream);
        state.apply_outcome(patient, outcome)?;
        allocator.observe(a.arm, &outcome);
    }
    Ok(TrialResult {
        n1: state.assigned(Arm::One),
        n2: state.assigned(Arm::Two),
        failures: state.failures(),
        wald_reject: wald_test(&state, WALD_LEVEL),
        estimates: estimators::estimate(&state, config.initial_guess.as_ref())?.params,
        final_rho_hat: allocator.rho_hat(&state)?.value,
    })
}

/// Raw per-replication results of a Monte Carlo run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun {
    pub config: DesignConfig,
    pub model: ResponseModel,
    pub n: usize,
    pub master_seed: u64,
    pub results: Vec<TrialResult>,
}

/// Replicates `run_trial` `reps` times on a pool of `parallelism` threads.
pub fn simulate(
    config: &DesignConfig,
    model: &ResponseModel,
    n: usize,
    reps: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<MonteCarloRun> {
    if reps < 2 {
        return Err(Error::Config(format!("need at least 2 replications, got {reps}")));
    }
    if parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    config.validate(model.kind())?;
    let one = |i: usize| {
        let mut stream = RandomStream::new(master_seed, i as u64);
        run_trial(config, model, n, &mut stream)
    };
    let results = if parallelism == 1 {
        (0..reps).map(one).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..reps).into_par_iter().map(one).collect::<Result<Vec<_>>>())?
    };
    Ok(MonteCarloRun {
        config: *config,
        model: *model,
        n,
        master_seed,
        results,
    })
}

/// `simulate` followed by `SimulationSummary::from_run`.
pub fn monte_carlo(
    config: &DesignConfig,
    model: &ResponseModel,
    n: usize,
    reps: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<SimulationSummary> {
    Ok(SimulationSummary::from_run(&simulate(config, model, n, reps, master_seed, parallelism)?))
}

impl MonteCarloRun {
    pub fn reps(&self) -> usize {
        self.results.len()
    }

    pub fn n1_values(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.n1 as f64).collect()
    }

    pub fn count_n2_above(&self, threshold: usize) -> usize {
        self.results.iter().filter(|r| r.n2 > threshold).count()
    }

    pub fn count_n2_at_most(&self, threshold: usize) -> usize {
        self.results.iter().filter(|r| r.n2 <= threshold).count()
    }

    pub fn count_n2_ge_n1(&self) -> usize {
        self.results.iter().filter(|r| r.n2 >= r.n1).count()
    }

    /// Percentile of N1, `p` in [0, 1], by linear interpolation.
    pub fn n1_percentile(&self, p: f64) -> Result<f64> {
        let mut v = self.n1_values();
        v.sort_by(f64::total_cmp);
        quantile_sorted(&v, p)
    }

    pub fn n1_boxplot(&self) -> Result<BoxPlot> {
        BoxPlot::from_values(&self.n1_values())
    }
}

/// Type-7 quantile of sorted data: `x[h] ` interpolated at `h = (len - 1) p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Config("quantile of empty data".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("p", p, "0 <= p <= 1"));
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Five-number summary with Tukey fences at 1.5 IQR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPlot {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values inside the fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxPlot {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() < 5 {
            return Err(Error::Config(format!("box plot needs at least 5 values, got {}", values.len())));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25)?;
        let q3 = quantile_sorted(&v, 0.75)?;
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let mut inside = v.iter().copied().filter(|x| (lo..=hi).contains(x));
        let whisker_low = inside.clone().next().unwrap_or(q1);
        let whisker_high = inside.next_back().unwrap_or(q3);
        Ok(Self {
            min: v[0],
            q1,
            median: quantile_sorted(&v, 0.5)?,
            q3,
            max: v[v.len() - 1],
            whisker_low,
            whisker_high,
            outliers: v.iter().copied().filter(|x| !(lo..=hi).contains(x)).collect(),
        })
    }
}

/// Mean and standard error of the mean.
fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64) {
    let mut count = 0.0;
    let mut sum = 0.0;
    for x in values.clone() {
        count += 1.0;
        sum += x;
    }
    let mean = sum / count;
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    let var = ss / (count - 1.0);
    (mean, (var / count).sqrt(), var)
}

/// Monte Carlo aggregates. Every estimate carries its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub reps: usize,
    pub n: usize,
    pub mean_prop: f64,
    pub mean_prop_se: f64,
    /// `n` times the sample variance of `N1 / n`.
    pub n_var: f64,
    pub n_var_se: f64,
    /// Wald rejection fraction.
    pub power: f64,
    pub power_se: f64,
    /// Mean of the conditional Wald power at the simulated `(N1, N2)`, for
    /// binary models.
    pub expected_power: Option<f64>,
    pub mean_failures: f64,
    pub mean_failures_se: f64,
    pub mean_n1: f64,
    pub mean_n1_se: f64,
    pub n1_min: f64,
    pub n1_q1: f64,
    pub n1_median: f64,
    pub n1_q3: f64,
    pub n1_max: f64,
    pub n2_ge_n1: usize,
    /// Mean of `|N1 - n rho_hat| / sqrt(n)`.
    pub mean_coupling_gap: f64,
    pub mean_coupling_gap_se: f64,
}

impl SimulationSummary {
    pub fn from_run(run: &MonteCarloRun) -> Self {
        let rs = &run.results;
        let reps = rs.len();
        let n = run.n as f64;
        let (mean_prop, mean_prop_se, var_prop) = mean_se(rs.iter().map(|r| r.proportion()));
        // SE of the sample variance from the fourth central moment
        let m4 = rs.iter().map(|r| (r.proportion() - mean_prop).powi(4)).sum::<f64>() / reps as f64;
        let var_se = ((m4 - var_prop * var_prop).max(0.0) / reps as f64).sqrt();
        let (power, power_se, _) = mean_se(rs.iter().map(|r| f64::from(u8::from(r.wald_reject))));
        let (mean_failures, mean_failures_se, _) = mean_se(rs.iter().map(|r| r.failures as f64));
        let (mean_n1, mean_n1_se, _) = mean_se(rs.iter().map(|r| r.n1 as f64));
        let (mean_coupling_gap, mean_coupling_gap_se, _) = mean_se(rs.iter().map(|r| r.coupling_gap()));
        let expected_power = match run.model {
            ResponseModel::Bernoulli { p1, p2 } => {
                let mut total = 0.0;
                for r in rs {
                    if r.n1 > 0 && r.n2 > 0 {
                        total += wald_power(p1, p2, r.n1 as f64, r.n2 as f64, WALD_LEVEL).unwrap_or(0.0);
                    }
                }
                Some(total / reps as f64)
            }
            ResponseModel::Gaussian { .. } => None,
        };
        let mut n1: Vec<f64> = run.n1_values();
        n1.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&n1, p).expect("reps >= 2");
        Self {
            reps,
            n: run.n,
            mean_prop,
            mean_prop_se,
            n_var: n * var_prop,
            n_var_se: n * var_se,
            power,
            power_se,
            expected_power,
            mean_failures,
            mean_failures_se,
            mean_n1,
            mean_n1_se,
            n1_min: q(0.0),
            n1_q1: q(0.25),
            n1_median: q(0.5),
            n1_q3: q(0.75),
            n1_max: q(1.0),
            n2_ge_n1: run.count_n2_ge_n1(),
            mean_coupling_gap,
            mean_coupling_gap_se,
        }
    }
}
