//! Replicated convergence studies.
//!
//! A study fixes a population (or one population per ladder point), draws
//! `replicates` samples at every ladder point, fits the marginal model
//! `theta(x1) = expit(a + b x1)` under each weighting arm and compares the
//! fitted curve with the population reference curve on a grid of `x1`
//! quantiles.
//!
//! Seeds are derived from the master seed by path, so results do not depend
//! on worker count, scheduling or the order of arms:
//!
//! * population: `stream(Population)` (three-stage) or `stream(Population).child(N)`
//! * sample: `stream(Design).child(ladder).child(replicate)`
//! * MCMC: `stream(Mcmc).child(ladder).child(replicate).child(arm)`

mod reducer;
mod studies;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::designs::{DesignError, SortKey};
use crate::inference::FitError;
use crate::synthpop::{PopulationError, TrueModel};

pub use reducer::{format_log, replicate_reducer, CellStats, CellSummary, ReplicateRecord, NA};
pub use studies::{quantile_grid, run_dyadic_study, run_study, run_three_stage_study, ExperimentResult, LadderPoint};

/// Largest tolerated share of failed fits in any (arm, ladder) cell.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("population reference fit failed: {0}")]
    Reference(FitError),
    #[error("{failed} of {total} fits failed for arm {arm} at ladder point {ladder} (limit {limit}%)", limit = MAX_FAILURE_RATE * 100.0)]
    TooManyFailures {
        arm: Arm,
        ladder: usize,
        failed: usize,
        total: usize,
    },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// PSU / household / person design over a K ladder.
    ThreeStage,
    /// Both halves of the unstratified partition plus stratified replicates, over an N ladder.
    Dyadic,
    /// Stratified replicates only, over an N ladder.
    StratifiedDyadic,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::ThreeStage => "three_stage",
            Study::Dyadic => "dyadic",
            Study::StratifiedDyadic => "stratified_dyadic",
        }
    }

    pub fn default_arms(self) -> Vec<Arm> {
        match self {
            Study::ThreeStage => vec![Arm::Equal, Arm::InverseProbability],
            Study::Dyadic => vec![Arm::PartitionLow, Arm::PartitionHigh, Arm::Stratified],
            Study::StratifiedDyadic => vec![Arm::Stratified],
        }
    }
}

/// One estimation arm. Ordering is the canonical output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Unit weights, ignoring the design.
    Equal,
    /// Weights `1 / pi_i`.
    InverseProbability,
    /// The lower half of the unstratified partition (deterministic).
    PartitionLow,
    /// The upper half of the unstratified partition (deterministic).
    PartitionHigh,
    /// Random stratified partition samples, inverse-probability weighted.
    Stratified,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Equal => "equal",
            Arm::InverseProbability => "inverse_probability",
            Arm::PartitionLow => "partition_low",
            Arm::PartitionHigh => "partition_high",
            Arm::Stratified => "stratified",
        }
    }

    /// Fixed seed path component, independent of the order arms are listed.
    pub(crate) fn tag(self) -> u64 {
        match self {
            Arm::Equal => 0,
            Arm::InverseProbability => 1,
            Arm::PartitionLow => 2,
            Arm::PartitionHigh => 3,
            Arm::Stratified => 4,
        }
    }

    fn allowed_in(self, study: Study) -> bool {
        match study {
            Study::ThreeStage => matches!(self, Arm::Equal | Arm::InverseProbability),
            Study::Dyadic => matches!(self, Arm::PartitionLow | Arm::PartitionHigh | Arm::Stratified),
            Study::StratifiedDyadic => self == Arm::Stratified,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Point estimate of the curve used for bias and MSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimate {
    /// Pseudo-posterior mean curve.
    #[default]
    Mcmc,
    /// Plug-in curve at the weighted MLE.
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSettings {
    pub chains: usize,
    pub warmup: usize,
    pub iters: usize,
    pub prior_sd: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            chains: 4,
            warmup: 1000,
            iters: 2000,
            prior_sd: 5.0,
        }
    }
}

fn default_replicates() -> usize {
    200
}
fn default_grid_points() -> usize {
    25
}
fn default_stratum_size() -> usize {
    50
}
fn default_psus() -> usize {
    200
}
fn default_households() -> usize {
    10
}
fn default_persons() -> usize {
    3
}
fn default_sampled_households() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    /// K values (PSUs selected) for the three-stage study, N values otherwise.
    pub ladder: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Arms to run; all arms of the study when absent.
    #[serde(default)]
    pub arms: Option<Vec<Arm>>,
    #[serde(default)]
    pub estimate: PointEstimate,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub truth: TrueModel,
    #[serde(default)]
    pub sort: SortKey,
    #[serde(default = "default_stratum_size")]
    pub stratum_size: usize,
    #[serde(default = "default_psus")]
    pub population_psus: usize,
    #[serde(default = "default_households")]
    pub households_per_psu: usize,
    #[serde(default = "default_persons")]
    pub persons_per_household: usize,
    #[serde(default = "default_sampled_households")]
    pub sampled_households: usize,
}

impl ExperimentConfig {
    /// Defaults of the three-stage study over the given K ladder.
    pub fn three_stage(ladder: Vec<usize>, replicates: usize) -> Self {
        ExperimentConfig {
            study: Study::ThreeStage,
            ladder,
            replicates,
            grid_points: default_grid_points(),
            arms: None,
            estimate: PointEstimate::default(),
            mcmc: McmcSettings::default(),
            truth: TrueModel::default(),
            sort: SortKey::Size,
            stratum_size: default_stratum_size(),
            population_psus: default_psus(),
            households_per_psu: default_households(),
            persons_per_household: default_persons(),
            sampled_households: default_sampled_households(),
        }
    }

    /// Defaults of the dyadic study over the given N ladder.
    pub fn dyadic(ladder: Vec<usize>, replicates: usize) -> Self {
        ExperimentConfig {
            study: Study::Dyadic,
            ..Self::three_stage(ladder, replicates)
        }
    }

    pub fn with_estimate(mut self, estimate: PointEstimate) -> Self {
        self.estimate = estimate;
        self
    }

    pub fn arms(&self) -> Vec<Arm> {
        let mut arms = self.arms.clone().unwrap_or_else(|| self.study.default_arms());
        arms.sort();
        arms.dedup();
        arms
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("ladder must be non-empty and strictly increasing, got {:?}", self.ladder));
        }
        if self.grid_points == 0 {
            return bad("grid_points must be at least 1".into());
        }
        let arms = self.arms();
        if arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        if let Some(a) = arms.iter().find(|a| !a.allowed_in(self.study)) {
            return bad(format!("arm {a} does not apply to study {}", self.study.name()));
        }
        if self.estimate == PointEstimate::Mcmc {
            let m = &self.mcmc;
            if m.chains == 0 || m.iters < 4 || !(m.prior_sd > 0.0 && m.prior_sd.is_finite()) {
                return bad("mcmc needs chains >= 1, iters >= 4 and a positive prior_sd".into());
            }
        }
        match self.study {
            Study::ThreeStage => {
                if let Some(&k) = self.ladder.iter().find(|&&k| k == 0 || k > self.population_psus) {
                    return bad(format!("K = {k} outside 1..={}", self.population_psus));
                }
                if self.sampled_households == 0 || self.sampled_households > self.households_per_psu {
                    return bad("sampled_households must be in 1..=households_per_psu".into());
                }
                if self.persons_per_household == 0 {
                    return bad("persons_per_household must be positive".into());
                }
            }
            Study::Dyadic | Study::StratifiedDyadic => {
                if let Some(&n) = self.ladder.iter().find(|&&n| n < 4 || n % 2 != 0) {
                    return bad(format!("population size {n} must be even and at least 4"));
                }
                if self.stratum_size == 0 || !self.stratum_size.is_multiple_of(2) {
                    return bad("stratum_size must be even and positive".into());
                }
            }
        }
        Ok(())
    }
}
