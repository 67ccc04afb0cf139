use std::ops::Range;

use super::monte_carlo::parallel_counts;
use super::{tri_index, tri_len, CrossPairs, InclusionError, InclusionTable, Method, DENSE_PAIR_LIMIT};
use crate::designs::brewer::brewer_outcomes;
use crate::designs::multistage::{draw_psus, household_outcomes, stage_probabilities, StageProbabilities};
use crate::designs::{
    dyadic_strata, systematic_outcomes, DesignSpec, MultistageSpec, PsuSelection, SortKey, SystematicMode,
};
use crate::rng::Seed;
use crate::synthpop::Population;

/// Exact first- and second-order inclusion probabilities by enumerating the
/// design's outcome space or using its product structure.
pub fn exact_inclusion(design: &DesignSpec, pop: &Population) -> Result<InclusionTable, InclusionError> {
    let n_units = pop.len();
    let pi = design.first_order(pop)?;
    let ids: Vec<usize> = (0..n_units).collect();
    let keys = |k: SortKey| DesignSpec::sort_keys(pop, k);
    match *design {
        DesignSpec::Census => InclusionTable::new(pi, vec![], vec![], CrossPairs::Factoring, Method::Exact),
        DesignSpec::Srs { n } => {
            let joint = if n_units < 2 {
                0.0
            } else {
                (n * (n - 1)) as f64 / (n_units * (n_units - 1)) as f64
            };
            InclusionTable::new(pi, vec![], vec![], CrossPairs::Constant(joint), Method::Exact)
        }
        DesignSpec::BrewerPps { .. } => {
            let outcomes = brewer_outcomes(&pi).map_err(|_| {
                InclusionError::NotEnumerable(format!(
                    "exact Brewer pair probabilities need at most 24 units, got {n_units}"
                ))
            })?;
            let samples = outcomes.into_iter().map(|(mask, p)| {
                ((0..n_units).filter(|k| mask & (1 << k) != 0).collect::<Vec<_>>(), p)
            });
            from_outcomes(n_units, samples)
        }
        DesignSpec::SystematicEqual { n, sort } => {
            let out = systematic_outcomes(&ids, &keys(sort), n, SystematicMode::Equal)?;
            from_outcomes(n_units, out.into_iter())
        }
        DesignSpec::SystematicPps { n, sort } => {
            let sizes = pop.sizes();
            let out = systematic_outcomes(&ids, &keys(sort), n, SystematicMode::Pps(&sizes))?;
            from_outcomes(n_units, out.into_iter())
        }
        DesignSpec::OnePpsPerHousehold => {
            let members: Vec<Vec<usize>> = pop.hh_ranges().into_iter().map(Iterator::collect).collect();
            let within = members.iter().map(|m| vec![0.0; tri_len(m.len())]).collect();
            InclusionTable::new(pi, members, within, CrossPairs::Factoring, Method::Exact)
        }
        DesignSpec::DyadicPartition { sort } => {
            let s = dyadic_strata(&ids, &keys(sort), None)?.remove(0);
            let members = vec![sorted(s.low), sorted(s.high)];
            let within = members.iter().map(|m| vec![0.5; tri_len(m.len())]).collect();
            InclusionTable::new(pi, members, within, CrossPairs::Constant(0.0), Method::Exact)
        }
        DesignSpec::StratifiedDyadic { sort, stratum_size } => {
            let strata = dyadic_strata(&ids, &keys(sort), Some(stratum_size))?;
            let mut members = Vec::with_capacity(strata.len());
            let mut within = Vec::with_capacity(strata.len());
            for s in strata {
                let mut m: Vec<(usize, bool)> =
                    s.low.iter().map(|&i| (i, false)).chain(s.high.iter().map(|&i| (i, true))).collect();
                m.sort_unstable();
                let mut w = vec![0.0; tri_len(m.len())];
                for a in 0..m.len() {
                    for b in a + 1..m.len() {
                        if m[a].1 == m[b].1 {
                            w[tri_index(a, b, m.len())] = 0.5;
                        }
                    }
                }
                members.push(m.into_iter().map(|(i, _)| i).collect());
                within.push(w);
            }
            InclusionTable::new(pi, members, within, CrossPairs::Factoring, Method::Exact)
        }
        DesignSpec::Multistage(spec) => {
            let stages = stage_probabilities(pop, &spec)?;
            let joint = exact_stage1_pairs(&spec, &stages.psu_pi)?;
            multistage_table(pop, &spec, stages, joint, None, Method::Exact)
        }
    }
}

/// Three-stage table whose stage-1 joint PSU probabilities are estimated from
/// `replicates` stage-1 draws; within-PSU pairs are exact.
pub fn multistage_inclusion(
    pop: &Population,
    spec: &MultistageSpec,
    replicates: u64,
    seed: Seed,
) -> Result<InclusionTable, InclusionError> {
    if replicates == 0 {
        return Err(InclusionError::Invalid("replicates must be at least 1".into()));
    }
    let stages = stage_probabilities(pop, spec)?;
    let m = stages.psu_ranges.len();
    let counts = parallel_counts(replicates, tri_len(m), |r, acc| {
        let psus = draw_psus(pop, spec, &mut seed.child(r).rng())?;
        for (x, &a) in psus.iter().enumerate() {
            for &b in &psus[x + 1..] {
                acc[tri_index(a, b, m)] += 1;
            }
        }
        Ok::<(), InclusionError>(())
    })?;
    let r = replicates as f64;
    let joint: Vec<f64> = counts.iter().map(|&c| c as f64 / r).collect();
    let se: Vec<f64> = joint.iter().map(|p| (p * (1.0 - p) / r).sqrt()).collect();
    multistage_table(
        pop,
        spec,
        stages,
        joint,
        Some(se),
        Method::Hybrid { stage1_replicates: replicates },
    )
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn from_outcomes<I>(n_units: usize, outcomes: I) -> Result<InclusionTable, InclusionError>
where
    I: Iterator<Item = (Vec<usize>, f64)>,
{
    if n_units > DENSE_PAIR_LIMIT {
        return Err(InclusionError::NotEnumerable(format!(
            "dense pair enumeration is limited to {DENSE_PAIR_LIMIT} units, got {n_units}"
        )));
    }
    let mut pi = vec![0.0; n_units];
    let mut pairs = vec![0.0; tri_len(n_units)];
    for (sample, p) in outcomes {
        for (x, &a) in sample.iter().enumerate() {
            pi[a] += p;
            for &b in &sample[x + 1..] {
                pairs[tri_index(a, b, n_units)] += p;
            }
        }
    }
    InclusionTable::new(pi, vec![(0..n_units).collect()], vec![pairs], CrossPairs::NotComputed, Method::Exact)
}

fn exact_stage1_pairs(spec: &MultistageSpec, psu_pi: &[f64]) -> Result<Vec<f64>, InclusionError> {
    let m = psu_pi.len();
    let k = spec.psus;
    if k == m {
        return Ok(vec![1.0; tri_len(m)]);
    }
    match spec.psu_selection {
        PsuSelection::Srs => {
            let joint = (k * (k - 1)) as f64 / (m * (m - 1)) as f64;
            Ok(vec![joint; tri_len(m)])
        }
        PsuSelection::BrewerPps => {
            let outcomes = brewer_outcomes(psu_pi).map_err(|_| {
                InclusionError::NotEnumerable(format!(
                    "exact Brewer joint PSU probabilities need at most 24 PSUs, got {m}"
                ))
            })?;
            let mut joint = vec![0.0; tri_len(m)];
            for (mask, p) in outcomes {
                for a in 0..m {
                    for b in a + 1..m {
                        if mask & (1 << a) != 0 && mask & (1 << b) != 0 {
                            joint[tri_index(a, b, m)] += p;
                        }
                    }
                }
            }
            Ok(joint)
        }
    }
}

fn multistage_table(
    pop: &Population,
    spec: &MultistageSpec,
    stages: StageProbabilities,
    joint: Vec<f64>,
    joint_se: Option<Vec<f64>>,
    method: Method,
) -> Result<InclusionTable, InclusionError> {
    let mut members = Vec::with_capacity(stages.psu_ranges.len());
    let mut within = Vec::with_capacity(stages.psu_ranges.len());
    for (k, range) in stages.psu_ranges.iter().enumerate() {
        let hh_pairs = household_pair_probabilities(pop, spec, k, &stages.psu_households[k])?;
        let hh_count = stages.psu_households[k].len();
        let first_hh = stages.psu_households[k].start;
        let len = range.len();
        let mut w = vec![0.0; tri_len(len)];
        for a in 0..len {
            let i = range.start + a;
            let hi = stages.hh_of_unit(i) - first_hh;
            for b in a + 1..len {
                let j = range.start + b;
                let hj = stages.hh_of_unit(j) - first_hh;
                if hi != hj {
                    let (x, y) = if hi < hj { (hi, hj) } else { (hj, hi) };
                    w[tri_index(a, b, len)] = stages.psu_pi[k]
                        * hh_pairs[tri_index(x, y, hh_count)]
                        * stages.person_pi[i]
                        * stages.person_pi[j];
                }
            }
        }
        members.push(range.clone().collect());
        within.push(w);
    }
    let cross = CrossPairs::Blockwise {
        block_pi: stages.psu_pi,
        block_pairs: joint,
        block_pair_se: joint_se,
    };
    InclusionTable::new(stages.pi, members, within, cross, method)
}

/// Joint selection probabilities of household pairs inside PSU `psu`, given
/// the PSU is selected; indices are local to the PSU.
fn household_pair_probabilities(
    pop: &Population,
    spec: &MultistageSpec,
    psu: usize,
    households: &Range<usize>,
) -> Result<Vec<f64>, InclusionError> {
    let m = households.len();
    let mut pairs = vec![0.0; tri_len(m)];
    for (sample, p) in household_outcomes(pop, spec, psu)? {
        for (x, &a) in sample.iter().enumerate() {
            for &b in &sample[x + 1..] {
                pairs[tri_index(a - households.start, b - households.start, m)] += p;
            }
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::PersonSelection;
    use crate::synthpop::{generate_population, Structure, TrueModel};

    fn flat(n: usize, seed: u64) -> Population {
        generate_population(Structure::flat(n), TrueModel::default(), Seed::new(seed)).unwrap()
    }

    fn fixed_size_identity(tab: &InclusionTable, n: f64) {
        for i in 0..tab.len() {
            let s = tab.pair_row_sum(i).unwrap();
            assert!((s - (n - 1.0) * tab.pi()[i]).abs() < 1e-9, "unit {i}: {s}");
        }
        tab.for_each_pair(|i, j, p| {
            assert!(p >= 0.0 && p <= tab.pi()[i].min(tab.pi()[j]) + 1e-12);
        });
    }

    #[test]
    fn dyadic_pairs_half_or_zero() {
        let pop = flat(10, 1);
        let tab = exact_inclusion(&DesignSpec::DyadicPartition { sort: SortKey::Size }, &pop).unwrap();
        let sizes = pop.sizes();
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|a, b| sizes[*a].total_cmp(&sizes[*b]));
        let high: Vec<bool> = (0..10).map(|i| order.iter().position(|&o| o == i).unwrap() >= 5).collect();
        tab.for_each_pair(|i, j, p| assert_eq!(p, if high[i] == high[j] { 0.5 } else { 0.0 }));
        fixed_size_identity(&tab, 5.0);
    }

    #[test]
    fn enumerable_designs_satisfy_fixed_size_identity() {
        let pop = flat(20, 2);
        let designs = [
            (DesignSpec::Census, 20.0),
            (DesignSpec::Srs { n: 6 }, 6.0),
            (DesignSpec::BrewerPps { n: 5 }, 5.0),
            (DesignSpec::SystematicEqual { n: 6, sort: SortKey::X1 }, 6.0),
            (DesignSpec::SystematicPps { n: 3, sort: SortKey::X1 }, 3.0),
            (DesignSpec::DyadicPartition { sort: SortKey::Size }, 10.0),
            (DesignSpec::StratifiedDyadic { sort: SortKey::Size, stratum_size: 6 }, 10.0),
        ];
        for (d, n) in designs {
            let tab = exact_inclusion(&d, &pop).unwrap();
            assert!((tab.expected_size() - n).abs() < 1e-9, "{d:?}");
            fixed_size_identity(&tab, n);
        }
        let nested = generate_population(Structure::nested(6, 4, 3), TrueModel::default(), Seed::new(3)).unwrap();
        let tab = exact_inclusion(&DesignSpec::OnePpsPerHousehold, &nested).unwrap();
        fixed_size_identity(&tab, 24.0);
        for ps in [PsuSelection::BrewerPps, PsuSelection::Srs] {
            let spec = MultistageSpec { psus: 3, psu_selection: ps, hh_per_psu: 2, person_selection: PersonSelection::Pps };
            let tab = exact_inclusion(&DesignSpec::Multistage(spec), &nested).unwrap();
            fixed_size_identity(&tab, 6.0);
        }
    }

    #[test]
    fn stratified_cross_stratum_factoring() {
        let pop = flat(12, 4);
        let tab = exact_inclusion(&DesignSpec::StratifiedDyadic { sort: SortKey::Size, stratum_size: 4 }, &pop).unwrap();
        assert_eq!(tab.blocks().len(), 3);
        let (a, b) = (tab.blocks()[0][0], tab.blocks()[1][0]);
        assert_eq!(tab.pair(a, b), Some(0.25));
    }

    #[test]
    fn large_brewer_is_not_enumerable() {
        let err = exact_inclusion(&DesignSpec::BrewerPps { n: 3 }, &flat(30, 5)).unwrap_err();
        assert!(err.to_string().contains("monte_carlo_inclusion"));
        let nested = generate_population(Structure::nested(30, 10, 3), TrueModel::default(), Seed::new(5)).unwrap();
        let err = exact_inclusion(&DesignSpec::Multistage(MultistageSpec::three_stage(4)), &nested).unwrap_err();
        assert!(matches!(err, InclusionError::NotEnumerable(_)));
    }

    #[test]
    fn hybrid_matches_exact_on_small_multistage() {
        let nested = generate_population(Structure::nested(8, 4, 3), TrueModel::default(), Seed::new(6)).unwrap();
        let spec = MultistageSpec { psus: 3, psu_selection: PsuSelection::BrewerPps, hh_per_psu: 2, person_selection: PersonSelection::Pps };
        let exact = exact_inclusion(&DesignSpec::Multistage(spec), &nested).unwrap();
        let hybrid = multistage_inclusion(&nested, &spec, 100_000, Seed::new(9)).unwrap();
        assert_eq!(exact.pi(), hybrid.pi());
        for k in 0..8 {
            for l in k + 1..8 {
                let (_, _, e) = exact.block_pair(k, l).unwrap();
                let (_, _, h) = hybrid.block_pair(k, l).unwrap();
                let se = (e * (1.0 - e) / 1e5).sqrt();
                assert!((e - h).abs() < 4.0 * se + 1e-12, "({k},{l}): {e} vs {h}");
            }
        }
        // Within-PSU pairs do not depend on the stage-1 estimate.
        assert_eq!(exact.pair(0, 4), hybrid.pair(0, 4));
        assert_eq!(exact.pair(0, 1), Some(0.0));
    }
}
