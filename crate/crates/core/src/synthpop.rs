//! Synthetic finite populations for the Bernoulli-logit outcome model.
//!
//! Each unit carries a standard-normal covariate `x1`, an exponential covariate
//! `x2`, the selection size measure `size = x2 - min(x2) + 1` and a binary
//! outcome drawn with success probability `expit(b0 + b1 x1 + b2 x2)`.
//! Structured populations nest persons in households in primary sampling units
//! (PSUs) and are stored in `(psu, hh, person)` order.

use std::io::{Read, Write};
use std::ops::Range;

use rand::Rng as _;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{self, FitError, MleFit, WeightedDataset};
use crate::rng::Seed;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("invalid population configuration: {0}")]
    InvalidConfig(String),
    #[error("population csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for PopulationError {
    fn from(e: csv::Error) -> Self {
        PopulationError::Csv(e.to_string())
    }
}

/// Logistic CDF, `1 / (1 + exp(-mu))`.
pub fn expit(mu: f64) -> f64 {
    if mu >= 0.0 {
        1.0 / (1.0 + (-mu).exp())
    } else {
        let e = mu.exp();
        e / (1.0 + e)
    }
}

/// Coefficients of the population-generating model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueModel {
    pub beta0: f64,
    pub beta_x1: f64,
    pub beta_x2: f64,
    /// Rate of the exponential distribution of `x2`.
    pub x2_rate: f64,
}

impl Default for TrueModel {
    fn default() -> Self {
        TrueModel {
            beta0: -1.88,
            beta_x1: 1.0,
            beta_x2: 0.5,
            x2_rate: 1.0 / 5.0,
        }
    }
}

impl TrueModel {
    pub fn linear_predictor(&self, x1: f64, x2: f64) -> f64 {
        self.beta0 + self.beta_x1 * x1 + self.beta_x2 * x2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub index: usize,
    pub psu: usize,
    /// Household label, unique across the population.
    pub hh: usize,
    pub x1: f64,
    pub x2: f64,
    pub size: f64,
    pub y: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Structure {
    Nested {
        n_psu: usize,
        hh_per_psu: usize,
        persons_per_hh: usize,
    },
    /// Every unit is its own PSU and household.
    Flat { n: usize },
}

impl Structure {
    pub fn nested(n_psu: usize, hh_per_psu: usize, persons_per_hh: usize) -> Self {
        Structure::Nested {
            n_psu,
            hh_per_psu,
            persons_per_hh,
        }
    }

    pub fn flat(n: usize) -> Self {
        Structure::Flat { n }
    }

    pub fn len(&self) -> usize {
        match *self {
            Structure::Nested {
                n_psu,
                hh_per_psu,
                persons_per_hh,
            } => n_psu * hh_per_psu * persons_per_hh,
            Structure::Flat { n } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<(), PopulationError> {
        match *self {
            Structure::Nested {
                n_psu,
                hh_per_psu,
                persons_per_hh,
            } if n_psu == 0 || hh_per_psu == 0 || persons_per_hh == 0 => Err(
                PopulationError::InvalidConfig(format!(
                    "all counts must be >= 1 (got {n_psu} x {hh_per_psu} x {persons_per_hh})"
                )),
            ),
            Structure::Flat { n: 0 } => Err(PopulationError::InvalidConfig(
                "flat population needs at least one unit".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Labels for the unit at `index` as `(psu, hh)`.
    fn labels(&self, index: usize) -> (usize, usize) {
        match *self {
            Structure::Nested { persons_per_hh, hh_per_psu, .. } => {
                let hh = index / persons_per_hh;
                (hh / hh_per_psu, hh)
            }
            Structure::Flat { .. } => (index, index),
        }
    }

    /// Recovers the structure from unit labels, if the labels are consistent
    /// with either a regular nesting or a flat population.
    pub fn infer(units: &[Unit]) -> Option<Structure> {
        if units.is_empty() {
            return None;
        }
        if units.iter().enumerate().all(|(i, u)| u.index == i && u.psu == i && u.hh == i) {
            return Some(Structure::flat(units.len()));
        }
        let hh_count = units.last()?.hh + 1;
        let psu_count = units.last()?.psu + 1;
        if !units.len().is_multiple_of(hh_count) || !hh_count.is_multiple_of(psu_count) {
            return None;
        }
        let s = Structure::nested(psu_count, hh_count / psu_count, units.len() / hh_count);
        let consistent = units
            .iter()
            .enumerate()
            .all(|(i, u)| u.index == i && s.labels(i) == (u.psu, u.hh));
        consistent.then_some(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    units: Vec<Unit>,
    truth: TrueModel,
    seed: u64,
    structure: Structure,
}

/// Generates a population from `truth`. Identical arguments give a
/// bit-identical population.
pub fn generate_population(
    structure: Structure,
    truth: TrueModel,
    seed: Seed,
) -> Result<Population, PopulationError> {
    structure.validate()?;
    if !(truth.x2_rate > 0.0 && truth.x2_rate.is_finite()) {
        return Err(PopulationError::InvalidConfig(format!(
            "x2_rate must be positive, got {}",
            truth.x2_rate
        )));
    }
    let n = structure.len();
    let exp = Exp::new(truth.x2_rate)
        .map_err(|e| PopulationError::InvalidConfig(e.to_string()))?;
    let mut rng = seed.rng();

    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = StandardNormal.sample(&mut rng);
        let x2: f64 = exp.sample(&mut rng);
        let u: f64 = rng.random();
        draws.push((x1, x2, u));
    }
    let min_x2 = draws.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);

    let units = draws
        .into_iter()
        .enumerate()
        .map(|(index, (x1, x2, u))| {
            let (psu, hh) = structure.labels(index);
            let p = expit(truth.linear_predictor(x1, x2));
            Unit {
                index,
                psu,
                hh,
                x1,
                x2,
                size: x2 - min_x2 + 1.0,
                y: u8::from(u < p),
            }
        })
        .collect();

    Ok(Population {
        units,
        truth,
        seed: seed.value(),
        structure,
    })
}

impl Population {
    /// Assembles a population from already-realized units (e.g. read from CSV).
    pub fn from_units(
        units: Vec<Unit>,
        truth: TrueModel,
        seed: u64,
    ) -> Result<Population, PopulationError> {
        let structure = Structure::infer(&units).ok_or_else(|| {
            PopulationError::InvalidConfig(
                "unit labels are neither flat nor a regular psu/hh nesting".into(),
            )
        })?;
        if units.iter().any(|u| !(u.size > 0.0) || u.y > 1) {
            return Err(PopulationError::InvalidConfig(
                "units need size > 0 and y in {0, 1}".into(),
            ));
        }
        Ok(Population {
            units,
            truth,
            seed,
            structure,
        })
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn truth(&self) -> &TrueModel {
        &self.truth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn x1(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.x1).collect()
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.size).collect()
    }

    /// Contiguous index ranges of the PSUs, in label order.
    pub fn psu_ranges(&self) -> Vec<Range<usize>> {
        contiguous_groups(&self.units, |u| u.psu)
    }

    /// Contiguous index ranges of the households, in label order.
    pub fn hh_ranges(&self) -> Vec<Range<usize>> {
        contiguous_groups(&self.units, |u| u.hh)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PopulationError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "psu", "hh", "x1", "x2", "size", "y"])?;
        for u in &self.units {
            out.write_record([
                u.index.to_string(),
                u.psu.to_string(),
                u.hh.to_string(),
                u.x1.to_string(),
                u.x2.to_string(),
                u.size.to_string(),
                u.y.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads units written by [`Population::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Vec<Unit>, PopulationError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["index", "psu", "hh", "x1", "x2", "size", "y"] {
            return Err(PopulationError::Csv(format!(
                "unexpected header {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut units = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> Result<&str, PopulationError> {
                rec.get(k)
                    .ok_or_else(|| PopulationError::Csv(format!("row {line}: missing column {k}")))
            };
            let bad = |k: usize| PopulationError::Csv(format!("row {line}: bad value in column {k}"));
            let int = |k: usize| -> Result<usize, PopulationError> {
                field(k)?.parse().map_err(|_| bad(k))
            };
            let real = |k: usize| -> Result<f64, PopulationError> {
                field(k)?.parse().map_err(|_| bad(k))
            };
            units.push(Unit {
                index: int(0)?,
                psu: int(1)?,
                hh: int(2)?,
                x1: real(3)?,
                x2: real(4)?,
                size: real(5)?,
                y: field(6)?.parse().map_err(|_| bad(6))?,
            });
        }
        Ok(units)
    }
}

fn contiguous_groups(units: &[Unit], key: impl Fn(&Unit) -> usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=units.len() {
        if i == units.len() || key(&units[i]) != key(&units[start]) {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Unweighted maximum-likelihood fit of the marginal model
/// `theta = expit(a + b x1)` to every unit of the population.
pub fn population_fit(pop: &Population) -> Result<MleFit, FitError> {
    if pop.is_empty() {
        return Err(FitError::InvalidInput("population is empty".into()));
    }
    let y: Vec<u8> = pop.units.iter().map(|u| u.y).collect();
    let data = WeightedDataset::marginal(&pop.x1(), &y, &vec![1.0; pop.len()])?;
    inference::weighted_mle(&data)
}

/// The population reference curve: the marginal fit evaluated on `grid`.
pub fn population_fit_curve(pop: &Population, grid: &[f64]) -> Result<Vec<(f64, f64)>, FitError> {
    let fit = population_fit(pop)?;
    Ok(grid
        .iter()
        .map(|&x| (x, expit(fit.beta[0] + fit.beta[1] * x)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_pop(seed: u64) -> Population {
        generate_population(Structure::nested(200, 10, 3), TrueModel::default(), Seed::new(seed))
            .unwrap()
    }

    #[test]
    fn expit_values() {
        assert_eq!(expit(0.0), 0.5);
        let e = expit(40.0);
        assert!(e > 1.0 - 1e-15 && e <= 1.0);
        // 1 / (1 + e^1.88) = 0.13238887...
        assert!((expit(-1.88) - 0.1324).abs() < 5e-5);
        assert!(expit(-800.0) >= 0.0 && expit(800.0) == 1.0);
        for mu in [-3.0, -0.1, 0.7, 12.0] {
            assert!((expit(-mu) - (1.0 - expit(mu))).abs() < 1e-15);
        }
    }

    #[test]
    fn default_structure_has_6000_units_in_order() {
        let pop = default_pop(1);
        assert_eq!(pop.len(), 6000);
        assert_eq!(pop.psu_ranges().len(), 200);
        assert_eq!(pop.hh_ranges().len(), 2000);
        for (i, u) in pop.units().iter().enumerate() {
            assert_eq!(u.index, i);
            assert_eq!(u.psu, i / 30);
            assert_eq!(u.hh, i / 3);
        }
        assert_eq!(Structure::infer(pop.units()), Some(pop.structure()));
    }

    #[test]
    fn size_measure_minimum_is_one() {
        let pop = default_pop(2);
        let min = pop.units().iter().map(|u| u.size).fold(f64::INFINITY, f64::min);
        assert_eq!(min, 1.0);
        assert!(pop.units().iter().all(|u| u.size >= 1.0 && u.y <= 1));
    }

    #[test]
    fn x2_mean_near_five() {
        let pop = default_pop(3);
        let mean = pop.units().iter().map(|u| u.x2).sum::<f64>() / 6000.0;
        assert!((mean - 5.0).abs() < 0.35, "mean x2 = {mean}");
    }

    #[test]
    fn zero_counts_rejected() {
        let err = generate_population(Structure::nested(0, 10, 3), TrueModel::default(), Seed::new(1));
        assert!(matches!(err, Err(PopulationError::InvalidConfig(_))));
        let err = generate_population(Structure::flat(0), TrueModel::default(), Seed::new(1));
        assert!(matches!(err, Err(PopulationError::InvalidConfig(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let pop = generate_population(Structure::nested(3, 2, 2), TrueModel::default(), Seed::new(9))
            .unwrap();
        let mut buf = Vec::new();
        pop.write_csv(&mut buf).unwrap();
        let units = Population::read_csv(buf.as_slice()).unwrap();
        let back = Population::from_units(units, *pop.truth(), pop.seed()).unwrap();
        assert_eq!(back, pop);
    }

    #[test]
    fn flat_population_regroups_as_flat() {
        let pop = generate_population(Structure::flat(17), TrueModel::default(), Seed::new(4)).unwrap();
        assert_eq!(Structure::infer(pop.units()), Some(Structure::flat(17)));
        assert_eq!(pop.psu_ranges().len(), 17);
    }

    #[test]
    fn flat_mean_y_matches_quadrature_oracle() {
        // E[expit(-1.88 + Z + 0.5 E)], Z ~ N(0, 1), E ~ Exp(1/5), by quadrature: 0.532641.
        let pop = generate_population(Structure::flat(100_000), TrueModel::default(), Seed::new(77)).unwrap();
        let mean = pop.units().iter().map(|u| u.y as f64).sum::<f64>() / 1e5;
        assert!((mean - 0.532641).abs() < 0.0047, "mean y = {mean}");
    }

    #[test]
    fn no_signal_population_fits_flat_curve() {
        let truth = TrueModel {
            beta_x1: 0.0,
            beta_x2: 0.0,
            ..TrueModel::default()
        };
        let pop = generate_population(Structure::flat(20_000), truth, Seed::new(5)).unwrap();
        let fit = population_fit(&pop).unwrap();
        assert!(fit.beta[1].abs() < 3.0 * fit.se[1], "b = {} se = {}", fit.beta[1], fit.se[1]);
    }

    #[test]
    fn marginal_curve_at_zero_lies_above_the_conditional() {
        let pop = default_pop(6);
        let grid = [-1.0, 0.0, 1.0];
        let curve = population_fit_curve(&pop, &grid).unwrap();
        let theta0 = curve[1].1;
        // Marginal logistic fit to a 2e6-unit population: theta(0) = 0.5353.
        assert!(theta0 > expit(-1.88), "theta(0) = {theta0}");
        assert!((theta0 - 0.5353).abs() < 0.025, "theta(0) = {theta0}");
        assert!(curve[0].1 < theta0 && theta0 < curve[2].1);
        assert_eq!(population_fit_curve(&pop, &grid).unwrap(), curve);
    }
}
