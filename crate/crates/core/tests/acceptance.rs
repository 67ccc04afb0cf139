//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed. Criteria 1-8 run twice (the second time on a single
//! worker) and every CSV artifact of both runs must be byte-identical.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use infsamp::designs::{brewer_pps_inclusion, draw_brewer_pps, DesignSpec, MultistageSpec, SortKey};
use infsamp::experiments::{run_study, Arm, ExperimentConfig, ExperimentResult, PointEstimate};
use infsamp::inclusion::{
    condition_growth_scan, condition_report, deviation_matrix, exact_inclusion, monte_carlo_inclusion,
    multistage_inclusion, InclusionTable, PairScope, Tolerance, Verdict,
};
use infsamp::inference::{
    fit_pseudo_posterior, normalize_weights, pseudo_log_likelihood, pseudo_score, weighted_mle, McmcConfig,
    PriorSpec, WeightedDataset,
};
use infsamp::rng::Stream;
use infsamp::synthpop::{generate_population, Population, Structure, TrueModel};
use infsamp::Seed;

const MASTER: u64 = 20240601;

#[derive(Default)]
struct Run {
    /// `(criterion, pass, detail)`
    checks: Vec<(usize, bool, String)>,
    files: Vec<(String, Vec<u8>)>,
    info: Vec<String>,
    /// Worker count for studies; `None` uses the global pool.
    workers: Option<usize>,
    first: bool,
}

impl Run {
    fn check(&mut self, id: usize, pass: bool, detail: String) {
        self.checks.push((id, pass, detail));
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }
}

fn flat(n: usize, seed: Seed) -> Population {
    generate_population(Structure::flat(n), TrueModel::default(), seed).unwrap()
}

fn table_csv(tab: &InclusionTable) -> Vec<u8> {
    let mut s = String::from("i,j,pi\n");
    for i in 0..tab.len() {
        for j in i..tab.len() {
            if let Some(p) = tab.pair(i, j) {
                let _ = writeln!(s, "{i},{j},{p}");
            }
        }
    }
    s.into_bytes()
}

/// Ranks by size (ties by index), as the dyadic sort uses.
fn size_ranks(pop: &Population) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| pop.units()[a].size.total_cmp(&pop.units()[b].size).then(a.cmp(&b)));
    let mut rank = vec![0; pop.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

fn criterion_1(run: &mut Run) {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for n in [4, 100, 1600] {
        let pop = flat(n, Seed::new(MASTER).child(n as u64));
        let tab = exact_inclusion(&DesignSpec::DyadicPartition { sort: SortKey::Size }, &pop).unwrap();
        let dev = deviation_matrix(&tab, Tolerance::Auto).unwrap();
        let rank = size_ranks(&pop);
        for i in 0..n {
            worst = worst.max((tab.pi()[i] - 0.5).abs());
            for j in i + 1..n {
                let same = (rank[i] < n / 2) == (rank[j] < n / 2);
                let (p, d) = if same { (0.5, 1.0) } else { (0.0, -1.0) };
                worst = worst.max((tab.pair(i, j).unwrap() - p).abs());
                worst = worst.max((dev.dev(i, j).unwrap() - d).abs());
            }
        }
        if n == 100 {
            let mut buf = Vec::new();
            dev.write_triplets(&mut buf).unwrap();
            run.file("c1_dyadic_100_deviations.csv", buf);
        }
        detail.push(format!("N={n}"));
    }
    run.check(
        1,
        worst <= 1e-12,
        format!("{}: pi = 1/2, pi_ij in {{1/2, 0}}, d = +1/-1; max abs error {worst:e} (tol 1e-12)", detail.join(", ")),
    );
}

/// Largest `|mc - exact| / sigma` over first- and second-order entries;
/// infinite if an entry with zero exact variance differs.
fn mc_vs_exact(exact: &InclusionTable, mc: &InclusionTable, r: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..exact.len() {
        for j in i..exact.len() {
            let e = exact.pair(i, j).unwrap();
            let m = mc.pair(i, j).unwrap();
            let sigma = (e * (1.0 - e) / r).sqrt();
            let z = if sigma > 0.0 {
                (m - e).abs() / sigma
            } else if m == e {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    worst
}

fn criterion_2(run: &mut Run) {
    let r = 100_000u64;
    let cases = [
        ("dyadic N=100", flat(100, Seed::new(MASTER).child(100)), DesignSpec::DyadicPartition { sort: SortKey::Size }),
        ("systematic M=10 n=5", flat(10, Seed::new(MASTER).child(10)), DesignSpec::SystematicEqual { n: 5, sort: SortKey::Size }),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (k, (name, pop, design)) in cases.iter().enumerate() {
        let exact = exact_inclusion(design, pop).unwrap();
        let start = Instant::now();
        let mc = monte_carlo_inclusion(design, pop, r, Seed::new(MASTER).stream(Stream::MonteCarlo).child(k as u64), PairScope::All)
            .unwrap();
        let elapsed = start.elapsed();
        let z = mc_vs_exact(&exact, &mc, r as f64);
        pass &= z <= 4.0 && elapsed < Duration::from_secs(60);
        parts.push(format!("{name}: max |z| = {z:.2}, {:.1}s", elapsed.as_secs_f64()));
        run.file(&format!("c2_mc_{k}.csv"), table_csv(&mc));
    }
    run.check(2, pass, format!("R=1e5, within 4 sigma and < 60s each; {}", parts.join("; ")));
}

fn criterion_3(run: &mut Run) {
    let reps = 1_000_000u64;
    let mut pass = true;
    let mut parts = Vec::new();
    let mut csv = String::from("case,unit,target,realized\n");
    for (case, sizes) in [vec![3.0, 2.0, 1.0], vec![10.0, 1.0, 1.0, 1.0, 1.0, 1.0]].into_iter().enumerate() {
        let pi = brewer_pps_inclusion(&sizes, 2).unwrap();
        let sum_err = (pi.iter().sum::<f64>() - 2.0).abs();
        let mut hits = vec![0u64; sizes.len()];
        let seed = Seed::new(MASTER).stream(Stream::Design).child(case as u64);
        for r in 0..reps {
            for i in draw_brewer_pps(&sizes, 2, seed.child(r)).unwrap() {
                hits[i] += 1;
            }
        }
        let mut worst = 0.0f64;
        for (i, &p) in pi.iter().enumerate() {
            let est = hits[i] as f64 / reps as f64;
            let sigma = (p * (1.0 - p) / reps as f64).sqrt();
            let z = if sigma > 0.0 { (est - p).abs() / sigma } else if est == p { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
            let _ = writeln!(csv, "{case},{i},{p},{est}");
        }
        pass &= worst <= 3.0 && sum_err <= 1e-12;
        parts.push(format!("sizes {sizes:?}: pi = {pi:.4?}, max |z| = {worst:.2}, |sum - n| = {sum_err:e}"));
    }
    run.file("c3_brewer.csv", csv.into_bytes());
    run.check(3, pass, format!("R=1e6, 3 sigma; {}", parts.join("; ")));
}

fn criterion_4(run: &mut Run) {
    let grid = [100, 200, 400, 800, 1600];
    let scan_for = |design: DesignSpec| {
        condition_growth_scan(&grid, |n| {
            let pop = flat(n, Seed::new(MASTER).child(n as u64));
            let tab = exact_inclusion(&design, &pop)?;
            condition_report(&deviation_matrix(&tab, Tolerance::Auto)?, None)
        })
        .unwrap()
    };
    let dyadic = scan_for(DesignSpec::DyadicPartition { sort: SortKey::Size });
    let strat = scan_for(DesignSpec::StratifiedDyadic { sort: SortKey::Size, stratum_size: 50 });
    let dyadic_ratio_ok = dyadic.rows.iter().all(|r| r.s1_ratio == (r.n_units as f64 - 1.0) / 2.0);
    let strat_flat = strat.rows.iter().all(|r| r.s1_ratio == 24.5 && r.s2_scaled == 0.0);
    let pass = dyadic.verdict == Verdict::Fail && strat.verdict == Verdict::Pass && dyadic_ratio_ok && strat_flat;
    for (name, scan) in [("dyadic", &dyadic), ("stratified", &strat)] {
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        run.file(&format!("c4_{name}.csv"), buf);
    }
    let ratios = |s: &infsamp::inclusion::GrowthScan| s.rows.iter().map(|r| r.s1_ratio).collect::<Vec<_>>();
    run.check(
        4,
        pass,
        format!(
            "dyadic {} (s1/N {:?}); strata of 50 {} (s1/N {:?}, cross-stratum deviation 0: {strat_flat})",
            dyadic.verdict,
            ratios(&dyadic),
            strat.verdict,
            ratios(&strat)
        ),
    );
}

fn three_stage_check(pop: &Population, k: usize, seed: Seed) -> (bool, String, Option<Vec<u8>>) {
    let tab = multistage_inclusion(pop, &MultistageSpec::three_stage(k), 100_000, seed).unwrap();
    let dev = deviation_matrix(&tab, Tolerance::Auto).unwrap();
    let psu: Vec<usize> = pop.units().iter().map(|u| u.psu).collect();
    let report = condition_report(&dev, Some(&psu)).unwrap();
    let b = report.blocks.clone().unwrap();
    let mut minus_one = 0u64;
    dev.for_each(|i, j, d, _| {
        if d == -1.0 && psu[i] == psu[j] {
            minus_one += 1;
        }
    });
    let pass = b.certified && b.cross_block_nonfactoring == 0 && b.cross_block_uncomputed == 0 && minus_one > 0;
    let detail = format!(
        "K={k}: cross-PSU non-factoring {} of {}, max cross |d| {:.4} (design value about {:.4}), within-PSU d=-1 pairs {minus_one}, s1 {}",
        b.cross_block_nonfactoring,
        b.cross_block_pairs,
        b.cross_block_max_dev,
        (1.0 - k as f64 / 200.0) / k as f64,
        report.s1_size
    );
    let mut buf = Vec::new();
    dev.write_triplets(&mut buf).unwrap();
    (pass, detail, Some(buf))
}

fn criterion_5(run: &mut Run) {
    let master = Seed::new(MASTER);
    let pop = generate_population(Structure::nested(200, 10, 3), TrueModel::default(), master.stream(Stream::Population)).unwrap();
    let seed = master.stream(Stream::MonteCarlo);
    let (pass, detail, csv) = three_stage_check(&pop, 40, seed);
    run.file("c5_three_stage_k40_deviations.csv", csv.unwrap());
    run.check(5, pass, format!("hybrid, stage-1 R=1e5; {detail}"));
    if run.first {
        for k in [10, 20, 80, 160] {
            let (ok, d, _) = three_stage_check(&pop, k, seed);
            run.info.push(format!("criterion 5 ladder: {} {d}", if ok { "factoring" } else { "non-factoring detected" }));
        }
    }
}

fn summary_csv(result: &ExperimentResult) -> Vec<u8> {
    let mut buf = Vec::new();
    result.write_summary_csv(&mut buf).unwrap();
    buf
}

fn stat(result: &ExperimentResult, arm: Arm, ladder: usize, g: usize) -> infsamp::experiments::CellStats {
    result.cell(arm, ladder, g).and_then(|c| c.stats).expect("cell has successful replicates")
}

/// Inversions in the weighted median MSE, and the share of grid points at the
/// last ladder point where weighted |bias| < equal-weight |bias|.
fn fig2_properties(result: &ExperimentResult) -> (Vec<f64>, usize, f64) {
    let mid = result.median_index();
    let ladder: Vec<usize> = result.points.iter().map(|p| p.ladder).collect();
    let mse: Vec<f64> = ladder.iter().map(|&k| stat(result, Arm::InverseProbability, k, mid).mse).collect();
    let inversions = mse.windows(2).filter(|w| w[1] >= w[0]).count();
    let last = *ladder.last().unwrap();
    let g = result.points.last().unwrap().grid.len();
    let better = (0..g)
        .filter(|&i| stat(result, Arm::InverseProbability, last, i).bias.abs() < stat(result, Arm::Equal, last, i).bias.abs())
        .count();
    (mse, inversions, better as f64 / g as f64)
}

fn criterion_6(run: &mut Run) {
    let master = Seed::new(MASTER);
    let start = Instant::now();
    let cfg = ExperimentConfig::three_stage(vec![10, 20, 40, 80, 160], 50).with_estimate(PointEstimate::Mle);
    let mle = run_study(&cfg, master, run.workers).unwrap();
    let mle_time = start.elapsed();
    let failures_ok = mle.check_failures().is_ok();
    let (mse, inversions, share) = fig2_properties(&mle);
    run.file("c6_three_stage_mle.csv", summary_csv(&mle));

    let start = Instant::now();
    let spot = ExperimentConfig::three_stage(vec![10, 160], 50);
    let mcmc = run_study(&spot, master, run.workers).unwrap();
    let mcmc_time = start.elapsed();
    let (spot_mse, _, spot_share) = fig2_properties(&mcmc);
    let spot_ok = mcmc.check_failures().is_ok() && spot_mse[1] < spot_mse[0] && spot_share >= 0.7;
    run.file("c6_three_stage_mcmc_spot.csv", summary_csv(&mcmc));

    let pass = failures_ok && inversions <= 1 && share >= 0.7 && mle_time <= Duration::from_secs(7200) && spot_ok;
    run.check(
        6,
        pass,
        format!(
            "M=50, MLE mode: weighted median MSE {mse:.5?} ({inversions} inversions, max 1), weighted |bias| < equal |bias| at K=160 on {:.0}% of grid (min 70%), {:.1}s; MCMC spot K=10,160: MSE {spot_mse:.5?}, {:.0}% of grid, {:.1}s",
            share * 100.0,
            mle_time.as_secs_f64(),
            spot_share * 100.0,
            mcmc_time.as_secs_f64()
        ),
    );
}

fn criterion_7(run: &mut Run) {
    let cfg = ExperimentConfig::dyadic(vec![100, 200, 400, 800, 1600], 50).with_estimate(PointEstimate::Mle);
    let result = run_study(&cfg, Seed::new(MASTER), run.workers).unwrap();
    run.file("c7_dyadic.csv", summary_csv(&result));
    let mid = result.median_index();
    let ladder: Vec<usize> = result.points.iter().map(|p| p.ladder).collect();
    let partition_min: Vec<f64> = ladder
        .iter()
        .map(|&n| stat(&result, Arm::PartitionLow, n, mid).bias.abs().min(stat(&result, Arm::PartitionHigh, n, mid).bias.abs()))
        .collect();
    let strat_bias = stat(&result, Arm::Stratified, *ladder.last().unwrap(), mid).bias.abs();
    let log_mse: Vec<f64> = ladder.iter().map(|&n| stat(&result, Arm::Stratified, n, mid).log_mse()).collect();
    let decreasing = log_mse.windows(2).all(|w| w[1] < w[0]);
    let persistent = partition_min.iter().cloned().fold(0.0, f64::max) > strat_bias;
    run.check(
        7,
        persistent && decreasing && result.check_failures().is_ok(),
        format!(
            "partition min-over-two |bias| {partition_min:.4?} vs stratified |bias| at N=1600 {strat_bias:.4}; stratified log-MSE {log_mse:.3?} (strictly decreasing: {decreasing})"
        ),
    );
}

fn criterion_8(run: &mut Run) {
    let pop = flat(400, Seed::new(MASTER).child(400));
    let units = pop.units();
    let x1: Vec<f64> = units.iter().map(|u| u.x1).collect();
    let y: Vec<u8> = units.iter().map(|u| u.y).collect();
    let raw: Vec<f64> = units.iter().map(|u| u.size).collect();

    // Gradient against central differences at 20 coefficient vectors.
    let data = WeightedDataset::marginal(&x1, &y, &raw).unwrap();
    let h = 1e-6;
    let mut grad_err = 0.0f64;
    for k in 0..20 {
        let beta = [-1.5 + 0.16 * k as f64, 1.2 - 0.11 * k as f64];
        let g = pseudo_score(&data, &beta);
        for c in 0..2 {
            let (mut up, mut dn) = (beta, beta);
            up[c] += h;
            dn[c] -= h;
            let fd = (pseudo_log_likelihood(&data, &up) - pseudo_log_likelihood(&data, &dn)) / (2.0 * h);
            grad_err = grad_err.max((g[c] - fd).abs() / g[c].abs().max(1.0));
        }
    }

    // Weighted MLE against a coarse-to-fine lattice search on one dyadic sample.
    let dpop = flat(200, Seed::new(MASTER).child(200));
    let draw = DesignSpec::DyadicPartition { sort: SortKey::Size }
        .draw(&dpop, Seed::new(MASTER).stream(Stream::Design))
        .unwrap();
    let sel = draw.selected();
    let dx: Vec<f64> = sel.iter().map(|&i| dpop.units()[i].x1).collect();
    let dy: Vec<u8> = sel.iter().map(|&i| dpop.units()[i].y).collect();
    let ddata = WeightedDataset::marginal(&dx, &dy, &draw.selected_weights()).unwrap();
    let mle = weighted_mle(&ddata).unwrap();
    let mut best = [0.0f64, 0.0];
    let mut half = 6.0f64;
    for step in [0.1f64, 1e-2, 1e-3] {
        let m = (half / step).round() as i64;
        let centre = best;
        let mut top = f64::NEG_INFINITY;
        for a in -m..=m {
            for b in -m..=m {
                let beta = [centre[0] + a as f64 * step, centre[1] + b as f64 * step];
                let v = pseudo_log_likelihood(&ddata, &beta);
                if v > top {
                    top = v;
                    best = beta;
                }
            }
        }
        half = 2.0 * step;
    }
    let lattice_gap = (0..2).map(|k| (mle.beta[k] - best[k]).abs()).fold(0.0, f64::max);

    // Posterior mean against the MLE, n = 400, equal weights.
    let eq = WeightedDataset::marginal(&x1, &y, &vec![1.0; x1.len()]).unwrap();
    let eq_mle = weighted_mle(&eq).unwrap();
    let post = fit_pseudo_posterior(
        &eq,
        &PriorSpec::default(),
        &McmcConfig {
            seed: Seed::new(MASTER).stream(Stream::Mcmc).value(),
            ..McmcConfig::default()
        },
    )
    .unwrap();
    let post_gap = (0..2).map(|k| (post.point[k] - eq_mle.beta[k]).abs()).fold(0.0, f64::max);
    let mut draws = Vec::new();
    post.write_draws_csv(&mut draws).unwrap();
    run.file("c8_draws.csv", draws);

    // Normalized weights sum to n on 1000 pseudo-random weight vectors.
    let mut sum_err = 0.0f64;
    for v in 0..1000u64 {
        let s = Seed::new(MASTER).child(v);
        let len = 1 + (s.value() % 500) as usize;
        let w: Vec<f64> = (0..len)
            .map(|i| 1e-3 + 1e3 * (s.child(i as u64).value() as f64 / u64::MAX as f64))
            .collect();
        let n = normalize_weights(&w).unwrap();
        sum_err = sum_err.max((n.iter().sum::<f64>() - len as f64).abs());
    }

    let pass = grad_err < 1e-6 && lattice_gap <= 1e-3 && post_gap < 0.05 && sum_err <= 1e-10;
    run.check(
        8,
        pass,
        format!(
            "gradient rel err {grad_err:.2e} (< 1e-6, 20 points); MLE vs lattice {lattice_gap:.1e} (<= 1e-3); posterior mean vs MLE {post_gap:.4} (< 0.05, n=400); |sum w* - n| {sum_err:.1e} (<= 1e-10)"
        ),
    );
}

fn criteria(run: &mut Run) {
    criterion_1(run);
    criterion_2(run);
    criterion_3(run);
    criterion_4(run);
    criterion_5(run);
    criterion_6(run);
    criterion_7(run);
    criterion_8(run);
}

#[test]
fn acceptance() {
    let mut first = Run {
        first: true,
        ..Run::default()
    };
    criteria(&mut first);
    let mut second = Run {
        workers: Some(1),
        ..Run::default()
    };
    criteria(&mut second);

    let same_names = first.files.iter().map(|f| &f.0).eq(second.files.iter().map(|f| &f.0));
    let differing: Vec<&str> = first
        .files
        .iter()
        .zip(&second.files)
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let bytes: usize = first.files.iter().map(|f| f.1.len()).sum();
    first.check(
        9,
        same_names && differing.is_empty(),
        format!("{} CSV artifacts ({bytes} bytes) identical on rerun with 1 worker; differing: {differing:?}", first.files.len()),
    );

    for line in &first.info {
        println!("{line}");
    }
    for (id, pass, detail) in &first.checks {
        println!("criterion {id}: {} | {detail}", if *pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<usize> = first.checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
