use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::designs::{DesignSpec, SortKey};
use crate::experiments::{ExperimentConfig, McmcSettings, PointEstimate};
use crate::synthpop::{Structure, TrueModel};

use super::CliError;

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_verbosity() -> u8 {
    1
}

fn default_mc_replicates() -> u64 {
    100_000
}

fn default_fit_grid_points() -> usize {
    25
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// One run's configuration: a master seed plus a section per command.
///
/// Relative paths inside the file are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// 0 silences the standard-output summary.
    #[serde(default = "default_verbosity")]
    pub verbosity: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion: Option<InclusionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    #[serde(default = "default_structure")]
    pub structure: Structure,
    #[serde(default)]
    pub truth: TrueModel,
    /// Read units from this population CSV instead of generating them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

fn default_structure() -> Structure {
    Structure::nested(200, 10, 3)
}

impl Default for PopulationSection {
    fn default() -> Self {
        PopulationSection {
            structure: default_structure(),
            truth: TrueModel::default(),
            input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub design: DesignSpec,
    /// Replicate index within the design stream.
    #[serde(default)]
    pub replicate: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionMethod {
    #[default]
    Exact,
    MonteCarlo,
    /// Multistage designs only: stage-1 joints by replication, the rest exact.
    Hybrid,
}

/// Which pairs a Monte Carlo run tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSet {
    #[default]
    All,
    WithinPsu,
    WithinHousehold,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSection {
    pub design: DesignSpec,
    #[serde(default)]
    pub method: InclusionMethod,
    #[serde(default = "default_mc_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub pairs: PairSet,
}

/// Unit labels used to check block-limited dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLabels {
    Psu,
    Household,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Required unless `strata_ladder` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    #[serde(default)]
    pub method: InclusionMethod,
    #[serde(default = "default_mc_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub pairs: PairSet,
    /// Fixed factorization tolerance; automatic when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<BlockLabels>,
    /// Flat population sizes for a growth scan of `design`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_ladder: Option<Vec<usize>>,
    /// Stratum counts for a dyadic series on the configured population; 0 is unstratified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata_ladder: Option<Vec<usize>>,
    /// Sort key of the strata-ladder designs.
    #[serde(default, skip_serializing_if = "is_default")]
    pub sort: SortKey,
    /// Exit with the condition code when any verdict is FAIL.
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWeights {
    /// Base weights `1 / pi_i` from the sample file.
    #[default]
    InverseProbability,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Sample CSV to fit; drawn from `[sample]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<PathBuf>,
    #[serde(default)]
    pub weights: FitWeights,
    #[serde(default)]
    pub estimate: PointEstimate,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default = "default_fit_grid_points")]
    pub grid_points: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            sample: None,
            weights: FitWeights::default(),
            estimate: PointEstimate::default(),
            mcmc: McmcSettings::default(),
            grid_points: default_fit_grid_points(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut cfg.out_dir);
        if let Some(p) = cfg.population.as_mut().and_then(|s| s.input.as_mut()) {
            join(p);
        }
        if let Some(p) = cfg.fit.as_mut().and_then(|s| s.sample.as_mut()) {
            join(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is serializable")
    }

    pub fn master_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("missing required key `seed` (or pass --seed)".into()))
    }
}
