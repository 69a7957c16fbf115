//! Efficient randomized-adaptive designs (ERADE) for two-arm sequential trials.
//!
//! The crate is organised bottom-up:
//!
//! * [`rng`]: counter-based random streams keyed by `(master_seed, stream_index)`.
//! * [`trial`]: arms, outcomes, response models and the sequential [`TrialState`].
//! * [`estimators`]: shrunk binary proportions and Gaussian maximum-likelihood estimates.
//! * [`targets`]: target allocation proportions and their gradients.
//! * [`designs`]: ERADE, Efron's biased coin, DBCD, drop-the-loser and play-the-winner urns.
//! * [`asymptotics`]: allocation variances, Cramér–Rao bounds and Wald power.
//! * [`sim`]: single-trial runner, parallel Monte Carlo and summary statistics.

pub mod asymptotics;
pub mod designs;
pub mod error;
pub mod estimators;
pub mod rng;
pub mod sim;
pub mod targets;
pub mod trial;

pub use designs::{Allocator, Assignment, Branch, DesignConfig, Rule, UrnState};
pub use error::{Error, Result};
pub use estimators::{BinaryEstimates, GaussianEstimates};
pub use rng::RandomStream;
pub use sim::{monte_carlo, run_trial, simulate, BoxPlot, MonteCarloRun, SimulationSummary, TrialResult};
pub use targets::{TargetAllocation, TargetParams};
pub use trial::{Arm, Outcome, ResponseKind, ResponseModel, TrialState};
