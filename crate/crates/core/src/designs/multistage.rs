//! Three-stage PSU / household / person design.
//!
//! 1. PSUs are drawn with Brewer πps on their aggregate size (or by simple
//!    random sampling).
//! 2. Within every selected PSU, households are sorted by aggregate size and
//!    a fixed number is drawn systematically with equal probability,
//!    independently across PSUs.
//! 3. One person is drawn in each selected household, with probability
//!    proportional to size (or equal probability).

use std::ops::Range;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::brewer::{brewer_pps_inclusion, brewer_select};
use super::grouped::{draw_one_pps_per_group, within_group_inclusion};
use super::systematic::{draw_systematic, systematic_outcomes, SystematicMode};
use super::DesignError;
use crate::rng::Rng;
use crate::synthpop::{Population, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsuSelection {
    #[default]
    BrewerPps,
    Srs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonSelection {
    #[default]
    Pps,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultistageSpec {
    /// Number of PSUs selected at stage 1.
    pub psus: usize,
    #[serde(default)]
    pub psu_selection: PsuSelection,
    /// Households selected in every selected PSU.
    pub hh_per_psu: usize,
    #[serde(default)]
    pub person_selection: PersonSelection,
}

impl MultistageSpec {
    /// Brewer PSUs, 5 systematic households per PSU, one PPS person per household.
    pub fn three_stage(psus: usize) -> Self {
        MultistageSpec {
            psus,
            psu_selection: PsuSelection::BrewerPps,
            hh_per_psu: 5,
            person_selection: PersonSelection::Pps,
        }
    }

    pub fn sample_size(&self) -> usize {
        self.psus * self.hh_per_psu
    }
}

/// Stagewise conditional inclusion probabilities and their product.
#[derive(Debug, Clone, PartialEq)]
pub struct StageProbabilities {
    pub psu_ranges: Vec<Range<usize>>,
    pub hh_ranges: Vec<Range<usize>>,
    /// Household index ranges belonging to each PSU.
    pub psu_households: Vec<Range<usize>>,
    pub psu_pi: Vec<f64>,
    /// Household inclusion given its PSU is selected.
    pub hh_pi: Vec<f64>,
    /// Person inclusion given the household is selected.
    pub person_pi: Vec<f64>,
    /// Overall first-order inclusion probability per unit.
    pub pi: Vec<f64>,
}

impl StageProbabilities {
    pub fn psu_of_unit(&self, unit: usize) -> usize {
        self.psu_ranges.partition_point(|r| r.end <= unit)
    }

    pub fn hh_of_unit(&self, unit: usize) -> usize {
        self.hh_ranges.partition_point(|r| r.end <= unit)
    }
}

fn check(pop: &Population, spec: &MultistageSpec) -> Result<(usize, usize), DesignError> {
    let Structure::Nested { n_psu, hh_per_psu, .. } = pop.structure() else {
        return Err(DesignError::Invalid(
            "multistage design needs a nested psu/hh population".into(),
        ));
    };
    if spec.psus == 0 || spec.psus > n_psu {
        return Err(DesignError::SampleSize { requested: spec.psus, available: n_psu });
    }
    if spec.hh_per_psu == 0 || spec.hh_per_psu > hh_per_psu {
        return Err(DesignError::SampleSize { requested: spec.hh_per_psu, available: hh_per_psu });
    }
    Ok((n_psu, hh_per_psu))
}

fn aggregate(sizes: &[f64], ranges: &[Range<usize>]) -> Vec<f64> {
    ranges.iter().map(|r| sizes[r.clone()].iter().sum()).collect()
}

fn psu_probabilities(spec: &MultistageSpec, psu_sizes: &[f64]) -> Result<Vec<f64>, DesignError> {
    match spec.psu_selection {
        PsuSelection::BrewerPps => brewer_pps_inclusion(psu_sizes, spec.psus),
        PsuSelection::Srs => Ok(vec![spec.psus as f64 / psu_sizes.len() as f64; psu_sizes.len()]),
    }
}

fn person_probabilities(spec: &MultistageSpec, sizes: &[f64]) -> Result<Vec<f64>, DesignError> {
    match spec.person_selection {
        PersonSelection::Pps => within_group_inclusion(sizes),
        PersonSelection::Equal => Ok(vec![1.0 / sizes.len() as f64; sizes.len()]),
    }
}

pub fn stage_probabilities(
    pop: &Population,
    spec: &MultistageSpec,
) -> Result<StageProbabilities, DesignError> {
    let (_, hh_count) = check(pop, spec)?;
    let sizes = pop.sizes();
    let psu_ranges = pop.psu_ranges();
    let hh_ranges = pop.hh_ranges();
    let psu_pi = psu_probabilities(spec, &aggregate(&sizes, &psu_ranges))?;
    let hh_pi = vec![spec.hh_per_psu as f64 / hh_count as f64; hh_ranges.len()];
    let mut person_pi = vec![0.0; pop.len()];
    for r in &hh_ranges {
        person_pi[r.clone()].copy_from_slice(&person_probabilities(spec, &sizes[r.clone()])?);
    }
    let psu_households = (0..psu_ranges.len()).map(|k| k * hh_count..(k + 1) * hh_count).collect();
    let mut pi = vec![0.0; pop.len()];
    for (k, pr) in psu_ranges.iter().enumerate() {
        for i in pr.clone() {
            let h = i / (pr.len() / hh_count);
            pi[i] = psu_pi[k] * hh_pi[h] * person_pi[i];
        }
    }
    Ok(StageProbabilities {
        psu_ranges,
        hh_ranges,
        psu_households,
        psu_pi,
        hh_pi,
        person_pi,
        pi,
    })
}

/// Exact outcome space of stage 2 in PSU `psu`: selected household indices
/// (global) with probabilities.
pub fn household_outcomes(
    pop: &Population,
    spec: &MultistageSpec,
    psu: usize,
) -> Result<Vec<(Vec<usize>, f64)>, DesignError> {
    let (_, hh_count) = check(pop, spec)?;
    let sizes = pop.sizes();
    let hh_ranges = pop.hh_ranges();
    let ids: Vec<usize> = (psu * hh_count..(psu + 1) * hh_count).collect();
    let keys = aggregate(&sizes, &hh_ranges[ids[0]..=ids[ids.len() - 1]]);
    systematic_outcomes(&ids, &keys, spec.hh_per_psu, SystematicMode::Equal)
}

/// Draws the stage-1 PSU sample only (ascending PSU indices).
pub fn draw_psus(
    pop: &Population,
    spec: &MultistageSpec,
    rng: &mut Rng,
) -> Result<Vec<usize>, DesignError> {
    check(pop, spec)?;
    let psu_ranges = pop.psu_ranges();
    Ok(match spec.psu_selection {
        PsuSelection::BrewerPps => {
            let psu_sizes = aggregate(&pop.sizes(), &psu_ranges);
            brewer_select(&brewer_pps_inclusion(&psu_sizes, spec.psus)?, rng)
        }
        PsuSelection::Srs => {
            let mut v = index::sample(rng, psu_ranges.len(), spec.psus).into_vec();
            v.sort_unstable();
            v
        }
    })
}

/// Selected unit indices (ascending) for one replicate of the design.
pub fn select_multistage(
    pop: &Population,
    spec: &MultistageSpec,
    rng: &mut Rng,
) -> Result<Vec<usize>, DesignError> {
    let (_, hh_count) = check(pop, spec)?;
    let sizes = pop.sizes();
    let hh_ranges = pop.hh_ranges();
    let psus = draw_psus(pop, spec, rng)?;

    let mut selected = Vec::with_capacity(spec.sample_size());
    for k in psus {
        let ids: Vec<usize> = (k * hh_count..(k + 1) * hh_count).collect();
        let keys = aggregate(&sizes, &hh_ranges[ids[0]..=ids[ids.len() - 1]]);
        let hhs = draw_systematic(&ids, &keys, spec.hh_per_psu, SystematicMode::Equal, rng)?;
        let groups: Vec<Range<usize>> = hhs.iter().map(|&h| hh_ranges[h].clone()).collect();
        match spec.person_selection {
            PersonSelection::Pps => selected.extend(draw_one_pps_per_group(&groups, &sizes, rng)?),
            PersonSelection::Equal => {
                let ones = vec![1.0; sizes.len()];
                selected.extend(draw_one_pps_per_group(&groups, &ones, rng)?)
            }
        }
    }
    selected.sort_unstable();
    Ok(selected)
}
