use std::io::Write;

use rayon::prelude::*;

use super::reducer::{format_log, replicate_reducer, CellSummary, ReplicateRecord, NA};
use super::{Arm, ExperimentConfig, ExperimentError, PointEstimate, Study, MAX_FAILURE_RATE};
use crate::designs::{dyadic_strata, DesignSpec, MultistageSpec, PersonSelection, PsuSelection};
use crate::inference::{
    curve_from_fit, curve_from_point, fit_pseudo_posterior, quantile_sorted, weighted_mle, McmcConfig, PriorSpec,
    WeightedDataset,
};
use crate::rng::{Seed, Stream};
use crate::synthpop::{generate_population, population_fit_curve, Population, Structure};

/// Grid of `k` population quantiles of `x1` at levels `(i + 0.5) / k`.
pub fn quantile_grid(x1: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = x1.to_vec();
    sorted.sort_by(f64::total_cmp);
    (0..k).map(|i| quantile_sorted(&sorted, (i as f64 + 0.5) / k as f64)).collect()
}

/// Population, grid and reference curve at one ladder point.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderPoint {
    pub ladder: usize,
    /// Fixed sample size of the design at this point.
    pub sample_size: usize,
    pub population_size: usize,
    pub grid: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub study: Study,
    pub estimate: PointEstimate,
    pub arms: Vec<Arm>,
    pub points: Vec<LadderPoint>,
    /// Sorted by arm, ladder point and replicate.
    pub records: Vec<ReplicateRecord>,
    pub cells: Vec<CellSummary>,
}

impl ExperimentResult {
    /// Index of the median grid point.
    pub fn median_index(&self) -> usize {
        self.points[0].grid.len() / 2
    }

    pub fn cell(&self, arm: Arm, ladder: usize, grid_index: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.arm == arm && c.ladder == ladder && c.grid_index == grid_index)
    }

    /// Cells of one arm at one ladder point, in grid order.
    pub fn curve(&self, arm: Arm, ladder: usize) -> Vec<&CellSummary> {
        self.cells.iter().filter(|c| c.arm == arm && c.ladder == ladder).collect()
    }

    /// `(failed, total)` fits for an arm at a ladder point.
    pub fn failures(&self, arm: Arm, ladder: usize) -> (usize, usize) {
        let group = self.records.iter().filter(|r| r.arm == arm && r.ladder == ladder);
        group.fold((0, 0), |(f, t), r| (f + usize::from(r.outcome.is_err()), t + 1))
    }

    /// Fails when any cell lost more than the tolerated share of its fits.
    pub fn check_failures(&self) -> Result<(), ExperimentError> {
        for &arm in &self.arms {
            for p in &self.points {
                let (failed, total) = self.failures(arm, p.ladder);
                if total > 0 && failed as f64 > MAX_FAILURE_RATE * total as f64 {
                    return Err(ExperimentError::TooManyFailures { arm, ladder: p.ladder, failed, total });
                }
            }
        }
        Ok(())
    }

    /// `study,arm,ladder,x1,mean,bias,mse,log_abs_bias,log_mse,n_reps`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["study", "arm", "ladder", "x1", "mean", "bias", "mse", "log_abs_bias", "log_mse", "n_reps"])?;
        for c in &self.cells {
            let mut row = vec![self.study.name().to_string(), c.arm.name().to_string(), c.ladder.to_string(), c.x1.to_string()];
            match &c.stats {
                Some(s) => row.extend([
                    s.mean.to_string(),
                    s.bias.to_string(),
                    s.mse.to_string(),
                    format_log(s.log_abs_bias()),
                    format_log(s.log_mse()),
                    s.n_reps.to_string(),
                ]),
                None => row.extend([NA, NA, NA, NA, NA].map(String::from).into_iter().chain(["0".to_string()])),
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// `study,arm,ladder,replicate,status,grid_index,x1,estimate,population`;
    /// a failed replicate is one row with status `failed` and empty grid fields.
    pub fn write_audit_csv<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["study", "arm", "ladder", "replicate", "status", "grid_index", "x1", "estimate", "population"])?;
        for r in &self.records {
            let head = [self.study.name().to_string(), r.arm.name().to_string(), r.ladder.to_string(), r.replicate.to_string()];
            match &r.outcome {
                Ok(est) => {
                    let p = self.point(r.ladder);
                    for (g, e) in est.iter().enumerate() {
                        let mut row = head.to_vec();
                        row.extend(["ok".to_string(), g.to_string(), p.grid[g].to_string(), e.to_string(), p.reference[g].to_string()]);
                        out.write_record(&row)?;
                    }
                }
                Err(_) => {
                    let mut row = head.to_vec();
                    row.extend(["failed".to_string(), String::new(), String::new(), String::new(), String::new()]);
                    out.write_record(&row)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// `study,ladder,population_size,sample_size,x1,population`.
    pub fn write_reference_csv<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["study", "ladder", "population_size", "sample_size", "x1", "population"])?;
        for p in &self.points {
            for (x, r) in p.grid.iter().zip(&p.reference) {
                out.write_record([
                    self.study.name().to_string(),
                    p.ladder.to_string(),
                    p.population_size.to_string(),
                    p.sample_size.to_string(),
                    x.to_string(),
                    r.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    fn point(&self, ladder: usize) -> &LadderPoint {
        self.points.iter().find(|p| p.ladder == ladder).expect("record ladder has a point")
    }
}

/// Runs the configured study, on a pool of `workers` threads when given.
/// Replicate fit failures are recorded; call
/// [`ExperimentResult::check_failures`] to enforce the failure ceiling.
pub fn run_study(cfg: &ExperimentConfig, master: Seed, workers: Option<usize>) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    let run = || match cfg.study {
        Study::ThreeStage => run_three_stage_study(cfg, master),
        Study::Dyadic | Study::StratifiedDyadic => run_dyadic_study(cfg, master),
    };
    match workers {
        None => run(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(run),
    }
}

fn reference_point(pop: &Population, ladder: usize, sample_size: usize, grid_points: usize) -> Result<LadderPoint, ExperimentError> {
    let grid = quantile_grid(&pop.x1(), grid_points);
    let reference = population_fit_curve(pop, &grid)
        .map_err(ExperimentError::Reference)?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    Ok(LadderPoint {
        ladder,
        sample_size,
        population_size: pop.len(),
        grid,
        reference,
    })
}

/// Fits one arm's sample and evaluates the point-estimate curve.
fn fit_curve(
    pop: &Population,
    selected: &[usize],
    weights: &[f64],
    grid: &[f64],
    cfg: &ExperimentConfig,
    mcmc_seed: Seed,
) -> Result<Vec<f64>, String> {
    let units = pop.units();
    let x1: Vec<f64> = selected.iter().map(|&i| units[i].x1).collect();
    let y: Vec<u8> = selected.iter().map(|&i| units[i].y).collect();
    let data = WeightedDataset::marginal(&x1, &y, weights).map_err(|e| e.to_string())?;
    let curve = match cfg.estimate {
        PointEstimate::Mle => {
            let fit = weighted_mle(&data).map_err(|e| e.to_string())?;
            curve_from_point(&fit.beta, grid)
        }
        PointEstimate::Mcmc => {
            let m = cfg.mcmc;
            let mc = McmcConfig {
                chains: m.chains,
                warmup: m.warmup,
                iters: m.iters,
                seed: mcmc_seed.value(),
            };
            let fit = fit_pseudo_posterior(&data, &PriorSpec { sd: m.prior_sd }, &mc).map_err(|e| e.to_string())?;
            curve_from_fit(&fit, grid)
        }
    };
    Ok(curve.into_iter().map(|c| c.mean).collect())
}

fn mcmc_seed(master: Seed, ladder: usize, replicate: usize, arm: Arm) -> Seed {
    master
        .stream(Stream::Mcmc)
        .child(ladder as u64)
        .child(replicate as u64)
        .child(arm.tag())
}

fn sample_seed(master: Seed, ladder: usize, replicate: usize) -> Seed {
    master.stream(Stream::Design).child(ladder as u64).child(replicate as u64)
}

fn finish(
    cfg: &ExperimentConfig,
    arms: Vec<Arm>,
    points: Vec<LadderPoint>,
    mut records: Vec<ReplicateRecord>,
) -> ExperimentResult {
    records.sort_by_key(|r| (r.arm, r.ladder, r.replicate));
    let views: Vec<(usize, &[f64], &[f64])> =
        points.iter().map(|p| (p.ladder, p.grid.as_slice(), p.reference.as_slice())).collect();
    let cells = replicate_reducer(&records, &views, &arms);
    ExperimentResult {
        study: cfg.study,
        estimate: cfg.estimate,
        arms,
        points,
        records,
        cells,
    }
}

/// Three-stage design over a ladder of PSU counts K. Every replicate's sample
/// is fitted under each arm.
pub fn run_three_stage_study(cfg: &ExperimentConfig, master: Seed) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    if cfg.study != Study::ThreeStage {
        return Err(ExperimentError::Config(format!("expected the three_stage study, got {}", cfg.study.name())));
    }
    let structure = Structure::nested(cfg.population_psus, cfg.households_per_psu, cfg.persons_per_household);
    let pop = generate_population(structure, cfg.truth, master.stream(Stream::Population))?;
    let arms = cfg.arms();

    let mut points = Vec::with_capacity(cfg.ladder.len());
    let mut designs = Vec::with_capacity(cfg.ladder.len());
    for &k in &cfg.ladder {
        let spec = MultistageSpec {
            psus: k,
            psu_selection: PsuSelection::BrewerPps,
            hh_per_psu: cfg.sampled_households,
            person_selection: PersonSelection::Pps,
        };
        let design = DesignSpec::Multistage(spec);
        let pi = design.first_order(&pop)?;
        points.push(reference_point(&pop, k, spec.sample_size(), cfg.grid_points)?);
        designs.push((design, pi));
    }

    let jobs: Vec<(usize, usize)> = (0..cfg.ladder.len())
        .flat_map(|l| (0..cfg.replicates).map(move |r| (l, r)))
        .collect();
    let records: Vec<Vec<ReplicateRecord>> = jobs
        .par_iter()
        .map(|&(l, rep)| {
            let k = cfg.ladder[l];
            let (design, pi) = &designs[l];
            let selected = design.select(&pop, sample_seed(master, k, rep))?;
            Ok(arms
                .iter()
                .map(|&arm| {
                    let weights: Vec<f64> = match arm {
                        Arm::Equal => vec![1.0; selected.len()],
                        _ => selected.iter().map(|&i| 1.0 / pi[i]).collect(),
                    };
                    let outcome = fit_curve(&pop, &selected, &weights, &points[l].grid, cfg, mcmc_seed(master, k, rep, arm));
                    ReplicateRecord { arm, ladder: k, replicate: rep, outcome }
                })
                .collect())
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(finish(cfg, arms, points, records.into_iter().flatten().collect()))
}

enum DyadicJob {
    Half(Arm),
    Stratified(usize),
}

/// Dyadic partition study over a ladder of population sizes N, one population
/// per N. The partition arms fit each of the design's two possible samples
/// once; the stratified arm fits `replicates` random stratified samples.
pub fn run_dyadic_study(cfg: &ExperimentConfig, master: Seed) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    if cfg.study == Study::ThreeStage {
        return Err(ExperimentError::Config("expected a dyadic study".into()));
    }
    let arms = cfg.arms();
    let mut pops = Vec::with_capacity(cfg.ladder.len());
    let mut points = Vec::with_capacity(cfg.ladder.len());
    for &n in &cfg.ladder {
        let pop = generate_population(Structure::flat(n), cfg.truth, master.stream(Stream::Population).child(n as u64))?;
        points.push(reference_point(&pop, n, n / 2, cfg.grid_points)?);
        pops.push(pop);
    }

    let mut jobs = Vec::new();
    for l in 0..cfg.ladder.len() {
        for &arm in &arms {
            match arm {
                Arm::Stratified => jobs.extend((0..cfg.replicates).map(|r| (l, DyadicJob::Stratified(r)))),
                other => jobs.push((l, DyadicJob::Half(other))),
            }
        }
    }
    let stratified = DesignSpec::StratifiedDyadic { sort: cfg.sort, stratum_size: cfg.stratum_size };
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|(l, job)| {
            let pop = &pops[*l];
            let n = cfg.ladder[*l];
            let (arm, rep, selected) = match job {
                DyadicJob::Half(arm) => {
                    let ids: Vec<usize> = (0..pop.len()).collect();
                    let mut halves = dyadic_strata(&ids, &DesignSpec::sort_keys(pop, cfg.sort), None)?.remove(0);
                    let mut half = if *arm == Arm::PartitionHigh { std::mem::take(&mut halves.high) } else { std::mem::take(&mut halves.low) };
                    half.sort_unstable();
                    (*arm, 0, half)
                }
                DyadicJob::Stratified(rep) => (Arm::Stratified, *rep, stratified.select(pop, sample_seed(master, n, *rep))?),
            };
            // Every dyadic design has pi_i = 1/2.
            let weights = vec![2.0; selected.len()];
            let outcome = fit_curve(pop, &selected, &weights, &points[*l].grid, cfg, mcmc_seed(master, n, rep, arm));
            Ok(ReplicateRecord { arm, ladder: n, replicate: rep, outcome })
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(finish(cfg, arms, points, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::McmcSettings;

    fn small_three_stage(estimate: PointEstimate) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::three_stage(vec![10, 20], 4).with_estimate(estimate);
        cfg.grid_points = 5;
        cfg.mcmc = McmcSettings { chains: 2, warmup: 200, iters: 300, prior_sd: 5.0 };
        cfg
    }

    #[test]
    fn grid_levels_avoid_tails() {
        let x: Vec<f64> = (0..101).map(f64::from).collect();
        let g = quantile_grid(&x, 4);
        assert_eq!(g, vec![12.5, 37.5, 62.5, 87.5]);
        assert_eq!(quantile_grid(&x, 25)[12], 50.0);
    }

    #[test]
    fn three_stage_shape_and_invariants() {
        let res = run_study(&small_three_stage(PointEstimate::Mle), Seed::new(1), Some(2)).unwrap();
        assert_eq!(res.points.iter().map(|p| p.sample_size).collect::<Vec<_>>(), vec![50, 100]);
        assert_eq!(res.cells.len(), 2 * 2 * 5);
        assert_eq!(res.records.len(), 2 * 2 * 4);
        for c in &res.cells {
            let s = c.stats.unwrap();
            assert!(s.mse >= s.bias * s.bias * (1.0 - 1e-12));
            assert!(s.mean > 0.0 && s.mean < 1.0);
        }
        res.check_failures().unwrap();
    }

    #[test]
    fn deterministic_and_worker_independent() {
        let cfg = small_three_stage(PointEstimate::Mcmc);
        let a = run_study(&cfg, Seed::new(3), Some(1)).unwrap();
        let b = run_study(&cfg, Seed::new(3), Some(4)).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write_summary_csv(&mut buf_a).unwrap();
        b.write_summary_csv(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn arm_order_does_not_leak() {
        let mut cfg = small_three_stage(PointEstimate::Mcmc);
        cfg.arms = Some(vec![Arm::InverseProbability, Arm::Equal]);
        let both = run_study(&cfg, Seed::new(4), None).unwrap();
        cfg.arms = Some(vec![Arm::InverseProbability]);
        let single = run_study(&cfg, Seed::new(4), None).unwrap();
        let ip_both: Vec<_> = both.records.iter().filter(|r| r.arm == Arm::InverseProbability).collect();
        let ip_single: Vec<_> = single.records.iter().collect();
        assert_eq!(ip_both, ip_single);
    }

    #[test]
    fn dyadic_partition_arms_have_one_fit_each() {
        let mut cfg = ExperimentConfig::dyadic(vec![100, 200], 3).with_estimate(PointEstimate::Mle);
        cfg.grid_points = 5;
        let res = run_study(&cfg, Seed::new(5), None).unwrap();
        for p in &res.points {
            assert_eq!(res.failures(Arm::PartitionLow, p.ladder), (0, 1));
            assert_eq!(res.failures(Arm::PartitionHigh, p.ladder), (0, 1));
            assert_eq!(res.failures(Arm::Stratified, p.ladder), (0, 3));
            for c in res.curve(Arm::PartitionLow, p.ladder) {
                let s = c.stats.unwrap();
                assert_eq!(s.mse, s.bias * s.bias);
            }
        }
        // The high half holds the larger sizes, hence larger x2 and more events.
        let m = res.median_index();
        let low = res.cell(Arm::PartitionLow, 200, m).unwrap().stats.unwrap().mean;
        let high = res.cell(Arm::PartitionHigh, 200, m).unwrap().stats.unwrap().mean;
        assert!(high > low);
    }

    #[test]
    fn csv_schemas() {
        let mut cfg = ExperimentConfig::dyadic(vec![20, 40], 2).with_estimate(PointEstimate::Mle);
        cfg.grid_points = 3;
        cfg.stratum_size = 10;
        let res = run_study(&cfg, Seed::new(6), None).unwrap();
        let mut s = Vec::new();
        res.write_summary_csv(&mut s).unwrap();
        let s = String::from_utf8(s).unwrap();
        assert!(s.starts_with("study,arm,ladder,x1,mean,bias,mse,log_abs_bias,log_mse,n_reps\n"));
        assert_eq!(s.lines().count(), 1 + 3 * 2 * 3);
        let mut a = Vec::new();
        res.write_audit_csv(&mut a).unwrap();
        let a = String::from_utf8(a).unwrap();
        assert!(a.starts_with("study,arm,ladder,replicate,status,grid_index,x1,estimate,population\n"));
        assert_eq!(a.lines().count(), 1 + (2 + 2) * 2 * 3);
    }

    #[test]
    fn failed_cells_trip_the_ceiling() {
        let mut cfg = ExperimentConfig::dyadic(vec![4], 1).with_estimate(PointEstimate::Mle);
        cfg.grid_points = 3;
        cfg.stratum_size = 2;
        // Two units per fit: both equal responses and two distinct x1 values
        // with different responses leave the MLE undefined.
        let res = run_study(&cfg, Seed::new(7), None).unwrap();
        for &a in &res.arms {
            let (failed, total) = res.failures(a, 4);
            assert_eq!(failed, total);
        }
        assert!(matches!(res.check_failures(), Err(ExperimentError::TooManyFailures { .. })));
        let mut s = Vec::new();
        res.write_summary_csv(&mut s).unwrap();
        let s = String::from_utf8(s).unwrap();
        assert!(s.lines().skip(1).all(|l| l.ends_with("NA,NA,NA,NA,NA,0")));
    }
}
