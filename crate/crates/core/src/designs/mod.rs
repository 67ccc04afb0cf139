//! Sampling designs.
//!
//! Each [`DesignSpec`] can draw a seeded [`SampleDraw`] from a [`Population`]
//! and report the analytic first-order inclusion probabilities that define
//! its base weights `1 / pi_i`. The single-stage primitives are exposed as
//! free functions over id/key/size slices so that they can be exercised on
//! their own.

pub mod brewer;
pub mod dyadic;
pub mod grouped;
pub mod multistage;
pub mod systematic;

use std::io::{Read, Write};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use brewer::{brewer_pps_inclusion, draw_brewer_pps};
pub use dyadic::{draw_dyadic_partition, dyadic_strata, DyadicStratum};
pub use grouped::{draw_one_pps_per_group, within_group_inclusion};
pub use multistage::{MultistageSpec, PersonSelection, PsuSelection};
pub use systematic::{draw_systematic, sorted_order, systematic_outcomes, SystematicMode};

use crate::rng::Seed;
use crate::synthpop::{Population, Unit};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("requested sample size {requested} but only {available} units are available")]
    SampleSize { requested: usize, available: usize },
    #[error("size measure at position {position} must be positive and finite, got {value}")]
    InvalidSize { position: usize, value: f64 },
    #[error("units {0:?} have size at least the sampling step and would be certainty selections")]
    CertaintyUnits(Vec<usize>),
    #[error("invalid design: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("sample csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for DesignError {
    fn from(e: csv::Error) -> Self {
        DesignError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for DesignError {
    fn from(e: std::io::Error) -> Self {
        DesignError::Csv(e.to_string())
    }
}

/// Unit attribute used to order units before systematic or dyadic selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    Size,
    X1,
    X2,
    Index,
}

impl SortKey {
    pub fn value(self, u: &Unit) -> f64 {
        match self {
            SortKey::Size => u.size,
            SortKey::X1 => u.x1,
            SortKey::X2 => u.x2,
            SortKey::Index => u.index as f64,
        }
    }
}

/// Declarative description of a sampling design. All size-based selection
/// uses the unit size measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    Census,
    Srs { n: usize },
    BrewerPps { n: usize },
    SystematicEqual { n: usize, #[serde(default)] sort: SortKey },
    SystematicPps { n: usize, #[serde(default)] sort: SortKey },
    /// One person per household, probability proportional to size.
    OnePpsPerHousehold,
    DyadicPartition { #[serde(default)] sort: SortKey },
    StratifiedDyadic { #[serde(default)] sort: SortKey, stratum_size: usize },
    Multistage(MultistageSpec),
}

impl DesignSpec {
    /// Fixed realized sample size, when the design has one.
    pub fn fixed_size(&self, pop: &Population) -> usize {
        let n = pop.len();
        match *self {
            DesignSpec::Census => n,
            DesignSpec::Srs { n }
            | DesignSpec::BrewerPps { n }
            | DesignSpec::SystematicEqual { n, .. }
            | DesignSpec::SystematicPps { n, .. } => n,
            DesignSpec::OnePpsPerHousehold => pop.hh_ranges().len(),
            DesignSpec::DyadicPartition { .. } | DesignSpec::StratifiedDyadic { .. } => n / 2,
            DesignSpec::Multistage(m) => m.sample_size(),
        }
    }

    pub fn sort_keys(pop: &Population, key: SortKey) -> Vec<f64> {
        pop.units().iter().map(|u| key.value(u)).collect()
    }

    /// Analytic first-order inclusion probabilities.
    pub fn first_order(&self, pop: &Population) -> Result<Vec<f64>, DesignError> {
        let n_units = pop.len();
        let sizes = pop.sizes();
        let check_n = |n: usize| {
            if n == 0 || n > n_units {
                Err(DesignError::SampleSize { requested: n, available: n_units })
            } else {
                Ok(())
            }
        };
        match *self {
            DesignSpec::Census => Ok(vec![1.0; n_units]),
            DesignSpec::Srs { n } | DesignSpec::SystematicEqual { n, .. } => {
                check_n(n)?;
                Ok(vec![n as f64 / n_units as f64; n_units])
            }
            DesignSpec::BrewerPps { n } => brewer_pps_inclusion(&sizes, n),
            DesignSpec::SystematicPps { n, .. } => {
                check_n(n)?;
                let step = sizes.iter().sum::<f64>() / n as f64;
                let certain: Vec<usize> = (0..n_units).filter(|&i| sizes[i] >= step).collect();
                if !certain.is_empty() {
                    return Err(DesignError::CertaintyUnits(certain));
                }
                Ok(sizes.iter().map(|s| s / step).collect())
            }
            DesignSpec::OnePpsPerHousehold => {
                let mut pi = vec![0.0; n_units];
                for r in pop.hh_ranges() {
                    pi[r.clone()].copy_from_slice(&within_group_inclusion(&sizes[r])?);
                }
                Ok(pi)
            }
            DesignSpec::DyadicPartition { sort } => {
                dyadic_strata(&ids(pop), &Self::sort_keys(pop, sort), None)?;
                Ok(vec![0.5; n_units])
            }
            DesignSpec::StratifiedDyadic { sort, stratum_size } => {
                dyadic_strata(&ids(pop), &Self::sort_keys(pop, sort), Some(stratum_size))?;
                Ok(vec![0.5; n_units])
            }
            DesignSpec::Multistage(m) => Ok(multistage::stage_probabilities(pop, &m)?.pi),
        }
    }

    /// Selected unit indices (ascending) for one replicate.
    pub fn select(&self, pop: &Population, seed: Seed) -> Result<Vec<usize>, DesignError> {
        let mut rng = seed.rng();
        let ids = ids(pop);
        let sizes = pop.sizes();
        match *self {
            DesignSpec::Census => Ok(ids),
            DesignSpec::Srs { n } => {
                if n == 0 || n > pop.len() {
                    return Err(DesignError::SampleSize { requested: n, available: pop.len() });
                }
                let mut v = index::sample(&mut rng, pop.len(), n).into_vec();
                v.sort_unstable();
                Ok(v)
            }
            DesignSpec::BrewerPps { n } => {
                Ok(brewer::brewer_select(&brewer_pps_inclusion(&sizes, n)?, &mut rng))
            }
            DesignSpec::SystematicEqual { n, sort } => {
                draw_systematic(&ids, &Self::sort_keys(pop, sort), n, SystematicMode::Equal, &mut rng)
            }
            DesignSpec::SystematicPps { n, sort } => draw_systematic(
                &ids,
                &Self::sort_keys(pop, sort),
                n,
                SystematicMode::Pps(&sizes),
                &mut rng,
            ),
            DesignSpec::OnePpsPerHousehold => {
                draw_one_pps_per_group(&pop.hh_ranges(), &sizes, &mut rng)
            }
            DesignSpec::DyadicPartition { sort } => {
                draw_dyadic_partition(&ids, &Self::sort_keys(pop, sort), None, &mut rng)
            }
            DesignSpec::StratifiedDyadic { sort, stratum_size } => draw_dyadic_partition(
                &ids,
                &Self::sort_keys(pop, sort),
                Some(stratum_size),
                &mut rng,
            ),
            DesignSpec::Multistage(m) => multistage::select_multistage(pop, &m, &mut rng),
        }
    }

    /// Draws one sample with base weights `1 / pi_i`.
    pub fn draw(&self, pop: &Population, seed: Seed) -> Result<SampleDraw, DesignError> {
        let pi = self.first_order(pop)?;
        let selected = self.select(pop, seed)?;
        Ok(SampleDraw::from_selection(pop.len(), &selected, &pi, *self, seed.value()))
    }
}

fn ids(pop: &Population) -> Vec<usize> {
    (0..pop.len()).collect()
}

/// Inclusion indicators and base weights for one realized sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    pub indicators: Vec<bool>,
    /// `Some(1 / pi_i)` exactly for the selected units.
    pub base_weights: Vec<Option<f64>>,
    pub design: Option<DesignSpec>,
    pub seed: u64,
}

impl SampleDraw {
    pub fn from_selection(
        n_units: usize,
        selected: &[usize],
        pi: &[f64],
        design: DesignSpec,
        seed: u64,
    ) -> Self {
        let mut indicators = vec![false; n_units];
        let mut base_weights = vec![None; n_units];
        for &i in selected {
            indicators[i] = true;
            base_weights[i] = Some(1.0 / pi[i]);
        }
        SampleDraw {
            indicators,
            base_weights,
            design: Some(design),
            seed,
        }
    }

    pub fn selected(&self) -> Vec<usize> {
        (0..self.indicators.len()).filter(|&i| self.indicators[i]).collect()
    }

    pub fn n(&self) -> usize {
        self.indicators.iter().filter(|d| **d).count()
    }

    /// Weights of the selected units, in ascending unit order.
    pub fn selected_weights(&self) -> Vec<f64> {
        self.base_weights.iter().flatten().copied().collect()
    }

    /// `index,delta,weight`; the weight column is empty for unselected units.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DesignError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "delta", "weight"])?;
        for (i, (d, wt)) in self.indicators.iter().zip(&self.base_weights).enumerate() {
            out.write_record([
                i.to_string(),
                u8::from(*d).to_string(),
                wt.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<SampleDraw, DesignError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["index", "delta", "weight"] {
            return Err(DesignError::Csv(format!("unexpected header {header:?}")));
        }
        let mut indicators = Vec::new();
        let mut base_weights = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || DesignError::Csv(format!("row {row}: malformed record"));
            let index: usize = rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if index != row {
                return Err(DesignError::Csv(format!("row {row}: index {index} out of order")));
            }
            let delta = match rec.get(1).ok_or_else(bad)? {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            let weight = match rec.get(2).unwrap_or("") {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| bad())?),
            };
            if delta != weight.is_some() || weight.is_some_and(|w| !(w >= 1.0 && w.is_finite())) {
                return Err(DesignError::Csv(format!(
                    "row {row}: weight must be present (finite, >= 1) exactly for selected units"
                )));
            }
            indicators.push(delta);
            base_weights.push(weight);
        }
        Ok(SampleDraw {
            indicators,
            base_weights,
            design: None,
            seed: 0,
        })
    }
}
