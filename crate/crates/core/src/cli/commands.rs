use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::designs::{DesignSpec, SampleDraw};
use crate::experiments::{format_log, run_study, quantile_grid, PointEstimate};
use crate::inclusion::{
    condition_growth_scan, condition_report, deviation_matrix, exact_inclusion, monte_carlo_inclusion,
    multistage_inclusion, ConditionReport, CrossPairs, DenseView, InclusionTable, PairScope, Tolerance, Verdict,
    DENSE_EXPORT_LIMIT,
};
use crate::inference::{
    curve_from_fit, curve_from_point, fit_pseudo_posterior, weighted_mle, write_curve_csv, McmcConfig, PriorSpec,
    WeightedDataset,
};
use crate::rng::{Seed, Stream};
use crate::synthpop::{generate_population, Population, Structure};

use super::config::{BlockLabels, DiagnoseSection, FitWeights, InclusionMethod, PairSet, RunConfig};
use super::{CliError, CommandKind, WORKERS_ENV};

/// Output files held in memory until the whole command has succeeded.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(p, _)| p == Path::new(name)).map(|(_, b)| b.as_slice())
    }

    /// Writes every file below `dir`, creating directories as needed.
    pub fn commit(&self, dir: &Path) -> Result<(), CliError> {
        let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

/// Result of a command before anything is written.
#[derive(Debug)]
pub struct Outcome {
    pub artifacts: Artifacts,
    /// Text for standard output.
    pub summary: String,
    /// Error to report after the artifacts are written.
    pub failure: Option<CliError>,
}

/// Runs one command against an already-loaded config.
pub fn execute(kind: CommandKind, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let master = Seed::new(cfg.master_seed()?);
    let mut resolved = cfg.clone();
    resolved.out_dir = PathBuf::from(".");
    let mut outcome = match kind {
        CommandKind::Population => {
            resolved.population.get_or_insert_with(Default::default);
            cmd_population(cfg, master)?
        }
        CommandKind::Sample => {
            resolved.population.get_or_insert_with(Default::default);
            cmd_sample(cfg, master)?
        }
        CommandKind::Inclusion => {
            resolved.population.get_or_insert_with(Default::default);
            cmd_inclusion(cfg, master)?
        }
        CommandKind::Diagnose => {
            resolved.population.get_or_insert_with(Default::default);
            cmd_diagnose(cfg, master)?
        }
        CommandKind::Fit => {
            resolved.population.get_or_insert_with(Default::default);
            resolved.fit.get_or_insert_with(Default::default);
            cmd_fit(cfg, master)?
        }
        CommandKind::Experiment => cmd_experiment(cfg, master)?,
    };
    outcome.artifacts.add("resolved_config.toml", resolved.to_toml().into_bytes());
    Ok(outcome)
}

fn ok(artifacts: Artifacts, summary: String) -> Outcome {
    Outcome {
        artifacts,
        summary,
        failure: None,
    }
}

fn csv_bytes<E: Into<CliError>>(f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(Into::into)?;
    Ok(buf)
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref()
        .ok_or_else(|| CliError::Config(format!("missing required section [{name}]")))
}

fn load_population(cfg: &RunConfig, master: Seed) -> Result<Population, CliError> {
    let sec = cfg.population.clone().unwrap_or_default();
    match &sec.input {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let units = Population::read_csv(std::io::BufReader::new(file))?;
            Ok(Population::from_units(units, sec.truth, 0)?)
        }
        None => Ok(generate_population(sec.structure, sec.truth, master.stream(Stream::Population))?),
    }
}

fn cmd_population(cfg: &RunConfig, master: Seed) -> Result<Outcome, CliError> {
    let pop = load_population(cfg, master)?;
    let mut a = Artifacts::default();
    a.add("population.csv", csv_bytes(|b| pop.write_csv(b))?);
    let mean_y = pop.units().iter().map(|u| u.y as f64).sum::<f64>() / pop.len().max(1) as f64;
    let summary = format!("population: {} units, mean y = {mean_y:.6}\n", pop.len());
    Ok(ok(a, summary))
}

fn draw_sample(cfg: &RunConfig, pop: &Population, master: Seed) -> Result<SampleDraw, CliError> {
    let sec = section(&cfg.sample, "sample")?;
    Ok(sec.design.draw(pop, master.stream(Stream::Design).child(sec.replicate))?)
}

fn cmd_sample(cfg: &RunConfig, master: Seed) -> Result<Outcome, CliError> {
    let pop = load_population(cfg, master)?;
    let draw = draw_sample(cfg, &pop, master)?;
    let mut a = Artifacts::default();
    a.add("sample.csv", csv_bytes(|b| draw.write_csv(b))?);
    let total: f64 = draw.selected_weights().iter().sum();
    let summary = format!("sample: n = {} of N = {}, sum of weights = {total:.6}\n", draw.n(), pop.len());
    Ok(ok(a, summary))
}

fn unit_blocks(pop: &Population, labels: BlockLabels) -> Vec<Vec<usize>> {
    let ranges = match labels {
        BlockLabels::Psu => pop.psu_ranges(),
        BlockLabels::Household => pop.hh_ranges(),
    };
    ranges.into_iter().map(|r| r.collect()).collect()
}

fn block_labels(pop: &Population, labels: BlockLabels) -> Vec<usize> {
    let mut out = vec![0; pop.len()];
    for (b, members) in unit_blocks(pop, labels).into_iter().enumerate() {
        for i in members {
            out[i] = b;
        }
    }
    out
}

fn build_table(
    design: &DesignSpec,
    pop: &Population,
    method: InclusionMethod,
    replicates: u64,
    pairs: PairSet,
    seed: Seed,
) -> Result<InclusionTable, CliError> {
    let table = match method {
        InclusionMethod::Exact => exact_inclusion(design, pop)?,
        InclusionMethod::MonteCarlo => {
            let scope = match pairs {
                PairSet::All => PairScope::All,
                PairSet::WithinPsu => PairScope::Within(unit_blocks(pop, BlockLabels::Psu)),
                PairSet::WithinHousehold => PairScope::Within(unit_blocks(pop, BlockLabels::Household)),
                PairSet::None => PairScope::None,
            };
            monte_carlo_inclusion(design, pop, replicates, seed, scope)?
        }
        InclusionMethod::Hybrid => match design {
            DesignSpec::Multistage(spec) => multistage_inclusion(pop, spec, replicates, seed)?,
            _ => return Err(CliError::Config("method \"hybrid\" needs a multistage design".into())),
        },
    };
    Ok(table)
}

fn cmd_inclusion(cfg: &RunConfig, master: Seed) -> Result<Outcome, CliError> {
    let sec = section(&cfg.inclusion, "inclusion")?;
    let pop = load_population(cfg, master)?;
    let tab = build_table(&sec.design, &pop, sec.method, sec.replicates, sec.pairs, master.stream(Stream::MonteCarlo))?;
    let n = tab.len();
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();

    let mut a = Artifacts::default();
    a.add(
        "first_order.csv",
        csv_bytes(|b| -> Result<(), CliError> {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["index", "pi", "se"]).map_err(io_err)?;
            for i in 0..n {
                let se = tab.pi_se().map(|s| s[i]);
                w.write_record([i.to_string(), tab.pi()[i].to_string(), cell(se)]).map_err(io_err)?;
            }
            w.flush()?;
            Ok(())
        })?,
    );

    // All computed pairs for small tables, stored within-block pairs otherwise.
    let all_pairs = n <= DENSE_EXPORT_LIMIT;
    let mut written = 0u64;
    a.add(
        "pairs.csv",
        csv_bytes(|b| -> Result<(), CliError> {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["i", "j", "pi_ij", "se"]).map_err(io_err)?;
            let mut row = |i: usize, j: usize, p: f64| -> Result<(), CliError> {
                written += 1;
                w.write_record([i.to_string(), j.to_string(), p.to_string(), cell(tab.pair_se(i, j))])
                    .map_err(io_err)
            };
            if all_pairs {
                for i in 0..n {
                    for j in i + 1..n {
                        if let Some(p) = tab.pair(i, j) {
                            row(i, j, p)?;
                        }
                    }
                }
            } else {
                for members in tab.blocks() {
                    for (x, &i) in members.iter().enumerate() {
                        for &j in &members[x + 1..] {
                            let (i, j) = (i.min(j), i.max(j));
                            row(i, j, tab.pair(i, j).expect("within-block pairs are stored"))?;
                        }
                    }
                }
            }
            w.flush()?;
            Ok(())
        })?,
    );

    if let CrossPairs::Blockwise { block_pi, block_pair_se, .. } = tab.cross() {
        let m = block_pi.len();
        a.add(
            "block_pairs.csv",
            csv_bytes(|b| -> Result<(), CliError> {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["k", "l", "pi_k", "pi_l", "pi_kl", "se"]).map_err(io_err)?;
                let mut t = 0;
                for k in 0..m {
                    for l in k + 1..m {
                        let (pk, pl, pkl) = tab.block_pair(k, l).expect("blockwise rule");
                        let se = block_pair_se.as_ref().map(|s| s[t]);
                        w.write_record([k.to_string(), l.to_string(), pk.to_string(), pl.to_string(), pkl.to_string(), cell(se)])
                            .map_err(io_err)?;
                        t += 1;
                    }
                }
                w.flush()?;
                Ok(())
            })?,
        );
    }

    let cross = match tab.cross() {
        CrossPairs::NotComputed => "not_computed".to_string(),
        CrossPairs::Factoring => "factoring".to_string(),
        CrossPairs::Constant(c) => format!("constant({c})"),
        CrossPairs::Blockwise { block_pi, .. } => format!("blockwise({} blocks)", block_pi.len()),
    };
    let mut text = String::new();
    let _ = writeln!(text, "method = {}", tab.method().label());
    let _ = writeln!(text, "N = {n}");
    let _ = writeln!(text, "expected_size = {}", tab.expected_size());
    let _ = writeln!(text, "blocks = {}", tab.blocks().len());
    let _ = writeln!(text, "cross_pairs = {cross}");
    let _ = writeln!(text, "pairs_written = {written}");
    let _ = writeln!(text, "pairs_scope = {}", if all_pairs { "all_computed" } else { "within_blocks" });
    a.add("inclusion_summary.txt", text.clone().into_bytes());
    Ok(ok(a, text))
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn tolerance(sec: &DiagnoseSection) -> Result<Tolerance, CliError> {
    match sec.epsilon {
        None => Ok(Tolerance::Auto),
        Some(e) if e >= 0.0 && e.is_finite() => Ok(Tolerance::Fixed(e)),
        Some(e) => Err(CliError::Config(format!("epsilon must be finite and non-negative, got {e}"))),
    }
}

/// Deviation exports and the condition report for one table.
fn diagnose_table(
    a: &mut Artifacts,
    prefix: &Path,
    tab: &InclusionTable,
    tol: Tolerance,
    labels: Option<&[usize]>,
) -> Result<ConditionReport, CliError> {
    let dev = deviation_matrix(tab, tol)?;
    let report = condition_report(&dev, labels)?;
    a.add(prefix.join("deviations.csv"), csv_bytes(|b| dev.write_triplets(b).map(|_| ()))?);
    if tab.len() <= DENSE_EXPORT_LIMIT {
        a.add(prefix.join("deviations_dense.csv"), csv_bytes(|b| dev.write_dense(b, DenseView::Signed))?);
    }
    a.add(prefix.join("condition_report.txt"), report.to_text().into_bytes());
    Ok(report)
}

fn has_fail(report: &ConditionReport) -> bool {
    report.verdicts.iter().any(|v| v.1 == Verdict::Fail)
}

fn cmd_diagnose(cfg: &RunConfig, master: Seed) -> Result<Outcome, CliError> {
    let sec = section(&cfg.diagnose, "diagnose")?;
    let tol = tolerance(sec)?;
    if sec.population_ladder.is_some() && sec.strata_ladder.is_some() {
        return Err(CliError::Config("give either population_ladder or strata_ladder, not both".into()));
    }
    let mut a = Artifacts::default();
    let mut summary = String::new();
    let mut failed = false;

    if let Some(strata) = &sec.strata_ladder {
        let pop = load_population(cfg, master)?;
        let n = pop.len();
        let designs = strata
            .iter()
            .map(|&s| match s {
                0 => Ok(DesignSpec::DyadicPartition { sort: sec.sort }),
                s if n % s == 0 && (n / s) % 2 == 0 => Ok(DesignSpec::StratifiedDyadic {
                    sort: sec.sort,
                    stratum_size: n / s,
                }),
                s => Err(CliError::Config(format!("{s} strata do not split N = {n} into equal even strata"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut table = String::from("strata,stratum_size,s1_size,s1_ratio,s2_max_dev,gamma\n");
        for (&s, design) in strata.iter().zip(&designs) {
            let tab = exact_inclusion(design, &pop)?;
            let report = diagnose_table(&mut a, Path::new(&format!("strata_{s}")), &tab, tol, None)?;
            let size = n.checked_div(s).unwrap_or(n);
            let _ = writeln!(
                table,
                "{s},{size},{},{},{},{}",
                report.s1_size, report.s1_ratio, report.s2_max_dev, report.gamma
            );
            let _ = writeln!(summary, "strata {s}: s1 = {}, s1/N = {}", report.s1_size, report.s1_ratio);
            failed |= has_fail(&report);
        }
        a.add("strata_summary.csv", table.into_bytes());
    } else if let Some(ladder) = &sec.population_ladder {
        let design = sec
            .design
            .as_ref()
            .ok_or_else(|| CliError::Config("[diagnose] needs `design` for a population ladder".into()))?;
        let truth = cfg.population.clone().unwrap_or_default().truth;
        let mut reports = Vec::new();
        let mut inner: Option<CliError> = None;
        let scan = condition_growth_scan(ladder, |n| {
            let run = || -> Result<ConditionReport, CliError> {
                let pop = generate_population(Structure::flat(n), truth, master.stream(Stream::Population).child(n as u64))?;
                let tab = build_table(design, &pop, sec.method, sec.replicates, sec.pairs, master.stream(Stream::MonteCarlo).child(n as u64))?;
                let labels = sec.blocks.map(|b| block_labels(&pop, b));
                let dev = deviation_matrix(&tab, tol)?;
                Ok(condition_report(&dev, labels.as_deref())?)
            };
            run().map_err(|e| {
                let msg = e.to_string();
                inner = Some(e);
                crate::inclusion::InclusionError::Invalid(msg)
            })
            .inspect(|r| reports.push(r.clone()))
        });
        let scan = match (scan, inner) {
            (Ok(s), _) => s,
            (Err(_), Some(e)) => return Err(e),
            (Err(e), None) => return Err(e.into()),
        };
        for (n, r) in ladder.iter().zip(&reports) {
            a.add(format!("N_{n}/condition_report.txt"), r.to_text().into_bytes());
            failed |= has_fail(r);
        }
        a.add("growth_scan.csv", csv_bytes(|b| scan.write_csv(b))?);
        let mut text = String::new();
        let _ = writeln!(text, "verdict = {}", scan.verdict);
        let _ = writeln!(text, "detail = {}", scan.detail);
        for (name, t) in [("s1_ratio", &scan.s1_trend), ("s2_scaled", &scan.s2_trend)] {
            let _ = writeln!(text, "{name}.slope_per_log_N = {}", t.slope);
            let _ = writeln!(text, "{name}.t_stat = {}", t.t_stat);
            let _ = writeln!(text, "{name}.growing = {}", t.growing);
        }
        a.add("growth_scan.txt", text.clone().into_bytes());
        summary.push_str(&text);
        failed |= scan.verdict == Verdict::Fail;
    } else {
        let design = sec
            .design
            .as_ref()
            .ok_or_else(|| CliError::Config("[diagnose] needs `design`".into()))?;
        let pop = load_population(cfg, master)?;
        let tab = build_table(design, &pop, sec.method, sec.replicates, sec.pairs, master.stream(Stream::MonteCarlo))?;
        let labels = sec.blocks.map(|b| block_labels(&pop, b));
        let report = diagnose_table(&mut a, Path::new(""), &tab, tol, labels.as_deref())?;
        for (c, v, d) in &report.verdicts {
            let _ = writeln!(summary, "{c}: {v} ({d})");
        }
        failed |= has_fail(&report);
    }

    let failure = (failed && sec.strict).then(|| CliError::Condition("a condition verdict is FAIL".into()));
    Ok(Outcome {
        artifacts: a,
        summary,
        failure,
    })
}

fn cmd_fit(cfg: &RunConfig, master: Seed) -> Result<Outcome, CliError> {
    let sec = cfg.fit.clone().unwrap_or_default();
    if sec.grid_points == 0 {
        return Err(CliError::Config("grid_points must be at least 1".into()));
    }
    let pop = load_population(cfg, master)?;
    let draw = match &sec.sample {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let d = SampleDraw::read_csv(std::io::BufReader::new(file))?;
            if d.indicators.len() != pop.len() {
                return Err(CliError::Config(format!(
                    "sample has {} rows but the population has {} units",
                    d.indicators.len(),
                    pop.len()
                )));
            }
            d
        }
        None => draw_sample(cfg, &pop, master)
            .map_err(|e| CliError::Config(format!("[fit] needs `sample` or a [sample] section: {e}")))?,
    };
    let selected = draw.selected();
    let units = pop.units();
    let x1: Vec<f64> = selected.iter().map(|&i| units[i].x1).collect();
    let y: Vec<u8> = selected.iter().map(|&i| units[i].y).collect();
    let weights = match sec.weights {
        FitWeights::InverseProbability => draw.selected_weights(),
        FitWeights::Equal => vec![1.0; selected.len()],
    };
    let data = WeightedDataset::marginal(&x1, &y, &weights)?;
    let grid = quantile_grid(&pop.x1(), sec.grid_points);

    let mut a = Artifacts::default();
    let mut text = String::new();
    let _ = writeln!(text, "n = {}", selected.len());
    let _ = writeln!(
        text,
        "weights = {}",
        match sec.weights {
            FitWeights::InverseProbability => "inverse_probability",
            FitWeights::Equal => "equal",
        }
    );
    let curve = match sec.estimate {
        PointEstimate::Mle => {
            let fit = weighted_mle(&data)?;
            let _ = writeln!(text, "estimate = mle");
            for k in 0..fit.beta.len() {
                let _ = writeln!(text, "beta{k} = {}", fit.beta[k]);
                let _ = writeln!(text, "beta{k}.se = {}", fit.se[k]);
            }
            let _ = writeln!(text, "log_likelihood = {}", fit.log_likelihood);
            let _ = writeln!(text, "iterations = {}", fit.iterations);
            curve_from_point(&fit.beta, &grid)
        }
        PointEstimate::Mcmc => {
            let m = sec.mcmc;
            let mc = McmcConfig {
                chains: m.chains,
                warmup: m.warmup,
                iters: m.iters,
                seed: master.stream(Stream::Mcmc).value(),
            };
            let fit = fit_pseudo_posterior(&data, &PriorSpec { sd: m.prior_sd }, &mc)?;
            let _ = writeln!(text, "estimate = mcmc");
            text.push_str(&fit.summary());
            a.add("draws.csv", csv_bytes(|b| fit.write_draws_csv(b))?);
            curve_from_fit(&fit, &grid)
        }
    };
    let median = &curve[curve.len() / 2];
    let _ = writeln!(text, "theta_at_median_x1 = {}", median.mean);
    a.add("curve.csv", csv_bytes(|b| write_curve_csv(&curve, b))?);
    a.add("fit_summary.txt", text.clone().into_bytes());
    Ok(ok(a, text))
}

fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn cmd_experiment(cfg: &RunConfig, master: Seed) -> Result<Outcome, CliError> {
    let exp = section(&cfg.experiment, "experiment")?;
    exp.validate()?;
    let workers = workers_from_env()?;
    let result = run_study(exp, master, workers)?;

    let mut a = Artifacts::default();
    a.add("summary.csv", csv_bytes(|b| result.write_summary_csv(b))?);
    a.add("audit.csv", csv_bytes(|b| result.write_audit_csv(b))?);
    a.add("reference.csv", csv_bytes(|b| result.write_reference_csv(b))?);

    let mid = result.median_index();
    let mut summary = format!("study = {}, median grid point {mid}\narm,ladder,bias,log_abs_bias,log_mse,failed\n", exp.study.name());
    for &arm in &result.arms {
        for p in &result.points {
            let (failed, total) = result.failures(arm, p.ladder);
            if total == 0 {
                continue;
            }
            let stats = result.cell(arm, p.ladder, mid).and_then(|c| c.stats);
            let (bias, lb, lm) = match stats {
                Some(s) => (s.bias.to_string(), format_log(s.log_abs_bias()), format_log(s.log_mse())),
                None => ("NA".into(), "NA".into(), "NA".into()),
            };
            let _ = writeln!(summary, "{arm},{},{bias},{lb},{lm},{failed}/{total}", p.ladder);
        }
    }
    let failure = result.check_failures().err().map(CliError::from);
    Ok(Outcome {
        artifacts: a,
        summary,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_toml(text).unwrap()
    }

    #[test]
    fn census_deviations_are_all_zero() {
        let c = cfg("seed = 3\n[population]\nstructure = { kind = \"flat\", n = 12 }\n[diagnose]\ndesign = { kind = \"census\" }\n");
        let out = execute(CommandKind::Diagnose, &c).unwrap();
        let triplets = std::str::from_utf8(out.artifacts.get("deviations.csv").unwrap()).unwrap();
        assert_eq!(triplets.trim(), "i,j,dev");
        let dense = std::str::from_utf8(out.artifacts.get("deviations_dense.csv").unwrap()).unwrap();
        assert_eq!(dense.lines().count(), 12);
        assert!(dense.lines().all(|l| l.split(',').all(|v| v.parse::<f64>().unwrap() == 0.0)));
    }

    #[test]
    fn zero_inclusion_is_a_condition_error() {
        // Three replicates of a one-unit sample cannot reach all 40 units.
        let c = cfg(
            "seed = 3\n[population]\nstructure = { kind = \"flat\", n = 40 }\n[diagnose]\ndesign = { kind = \"srs\", n = 1 }\nmethod = \"monte_carlo\"\nreplicates = 3\n",
        );
        match execute(CommandKind::Diagnose, &c) {
            Err(e) => assert_eq!(e.exit_code(), 5, "{e}"),
            Ok(_) => panic!("expected a zero-inclusion failure"),
        }
    }

    #[test]
    fn strata_ladder_shrinks_dependence() {
        let c = cfg(
            "seed = 1\n[population]\nstructure = { kind = \"flat\", n = 64 }\n[diagnose]\nstrata_ladder = [0, 2, 4, 8, 16, 32]\n",
        );
        let out = execute(CommandKind::Diagnose, &c).unwrap();
        let table = std::str::from_utf8(out.artifacts.get("strata_summary.csv").unwrap()).unwrap();
        let s1: Vec<u64> = table.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
        // s strata of size m = N/s hold s * m * (m - 1) / 2 dependent pairs.
        assert_eq!(s1, vec![2016, 992, 480, 224, 96, 32]);
        assert!(out.artifacts.get("strata_8/deviations_dense.csv").is_some());
        let bad = cfg("seed = 1\n[population]\nstructure = { kind = \"flat\", n = 64 }\n[diagnose]\nstrata_ladder = [3]\n");
        assert_eq!(execute(CommandKind::Diagnose, &bad).unwrap_err().exit_code(), 2);
    }
}
