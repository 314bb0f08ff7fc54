mod common;

use foe::dataio::{
    generate_synthetic, CostModel, Dataset, DatasetSchema, ExpertOutputRecord, SplitSizes, SynthConfig,
    TargetKind,
};
use foe::frugal::{
    frugal_evaluate, frugal_traces, lambda_sweep, select_starting_expert, FrugalConfig, FrugalIndex,
    FuserBank, FuserKind, InnerKnn, StopReason,
};
use foe::fusion::TrainConfig;
use foe::neighbors::Query;
use foe::rng::Stream;
use foe::subset::nonempty_subsets;
use foe::{presets, SubsetMask};

fn k4() -> (Dataset, Dataset) {
    let s = generate_synthetic(&presets::k4_mixture(), false).unwrap();
    (s.validation, s.test)
}

#[test]
fn estimates_match_from_scratch_evaluation() {
    let (v, t) = k4();
    assert_eq!(v.len(), 200);
    let lambda = 0.3;
    let costs = [0.01, 0.02, 0.005, 0.013];
    for inner in [InnerKnn::SubsetRestricted, InnerKnn::AllExperts] {
        let cfg = FrugalConfig {
            cost_model: CostModel {
                costs: costs.to_vec(),
                lambda,
            },
            inner_knn: inner,
            ..FrugalConfig::knn(4, 15, 9, lambda)
        };
        let index = FrugalIndex::new(&v, cfg, None).unwrap();
        for q in t.records().iter().take(10) {
            for cand in nonempty_subsets(4).filter(|s| s.len() <= 2) {
                for queried in nonempty_subsets(4).filter(|s| s.is_subset_of(cand)) {
                    let got = index.estimate_loss(&Query::from(q), cand, queried).unwrap();
                    let c = common::bits_to_indices(cand.bits());
                    let inner_set = match inner {
                        InnerKnn::SubsetRestricted => c.clone(),
                        InnerKnn::AllExperts => vec![0, 1, 2, 3],
                    };
                    let want = common::reference_estimate(
                        q,
                        &v,
                        &c,
                        &common::bits_to_indices(queried.bits()),
                        &inner_set,
                        15,
                        9,
                        lambda,
                        &costs,
                    );
                    assert!(
                        (got - want).abs() <= 1e-12,
                        "{inner:?} {cand} {queried}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

#[test]
fn precomputed_losses_match_recomputation() {
    let (v, _) = k4();
    let index = FrugalIndex::new(&v, FrugalConfig::knn(4, 15, 9, 0.0), None).unwrap();
    for s in nonempty_subsets(4).filter(|s| s.len() <= 2) {
        let losses = index.losses(s).unwrap();
        let subset = common::bits_to_indices(s.bits());
        for (r, lost) in v.records().iter().zip(losses.iter()) {
            let (_, pred) = common::brute_knn(r, &subset, &v, 9, Some(r.id));
            assert_eq!(*lost, pred != r.label);
        }
    }
}

#[test]
fn spec_arithmetic_example() {
    // M = 2 neighbors with losses {0, 1}, lambda 0.5, three experts of cost 0.01.
    let schema = DatasetSchema {
        num_experts: 3,
        output_dim: 1,
        num_classes: 2,
        target_kind: TargetKind::ClassLabel,
        prob_outputs: false,
    };
    // Expert outputs are 1-d coordinates; kappa = 1 makes each record's fuser
    // copy the label of its nearest other record.
    let rec = |id, x: f64, label| ExpertOutputRecord::new(id, 0, label, vec![vec![x], vec![x], vec![x]]);
    let v = Dataset::new(
        schema,
        vec![rec(0, 0.0, 0), rec(1, 0.1, 1), rec(2, 0.25, 1), rec(3, 9.0, 0)],
    )
    .unwrap();
    let cfg = FrugalConfig::knn(3, 2, 1, 0.5);
    let index = FrugalIndex::new(&v, cfg, None).unwrap();
    let query = vec![0.2, 0.2, 0.2];
    let est = index
        .estimate_loss(
            &Query::raw(&query, 1),
            SubsetMask::full(3),
            SubsetMask::singleton(0),
        )
        .unwrap();
    // neighbors: id 2 (fuser copies id 1: right), id 1 (copies id 0: wrong)
    assert!((est - 0.515).abs() < 1e-12, "{est}");
}

#[test]
fn exhaustive_solver_matches_enumeration_and_bounds_greedy() {
    let (v, t) = k4();
    let lambda = 0.2;
    let index = FrugalIndex::new(&v, FrugalConfig::knn(4, 15, 9, lambda), None).unwrap();
    let mut equal = 0;
    for q in t.records() {
        let (best, length) = index.exhaustive_shortest_path(&Query::from(q)).unwrap();
        let (bits, want) = common::enumerate_best_subset(q, &v, 15, 9, lambda, &[0.01; 4]);
        assert_eq!(best.bits(), bits);
        assert_eq!(length, want);
        let trace = index.run(&Query::from(q)).unwrap();
        assert!(trace.realized_objective >= length);
        if trace.realized_objective == length {
            equal += 1;
        }
    }
    assert!(equal > 0);
}

#[test]
fn exhaustive_guards() {
    let (v, t) = k4();
    let q = Query::from(&t.records()[0]);
    let huge = FrugalIndex::new(&v, FrugalConfig::knn(4, 15, 9, 1e6), None).unwrap();
    // a minimum-cost singleton wins under a dominating cost term
    assert_eq!(huge.exhaustive_shortest_path(&q).unwrap().0.len(), 1);
    let skewed = FrugalConfig {
        cost_model: CostModel {
            costs: vec![0.02, 0.03, 0.01, 0.04],
            lambda: 1e6,
        },
        ..FrugalConfig::knn(4, 15, 9, 1e6)
    };
    let skewed = FrugalIndex::new(&v, skewed, None).unwrap();
    assert_eq!(
        skewed.exhaustive_shortest_path(&q).unwrap().0,
        SubsetMask::singleton(2)
    );

    let cfg = SynthConfig::uniform(
        16,
        2,
        0.9,
        0.5,
        SplitSizes {
            train: 0,
            validation: 20,
            test: 1,
        },
        1,
    );
    let s = generate_synthetic(&cfg, false).unwrap();
    let index = FrugalIndex::new(&s.validation, FrugalConfig::knn(16, 5, 3, 0.1), None).unwrap();
    let err = index
        .exhaustive_shortest_path(&Query::from(&s.test.records()[0]))
        .unwrap_err();
    assert_eq!(err.code(), "TooManyExperts");

    let one = SynthConfig::uniform(
        1,
        3,
        0.9,
        0.9,
        SplitSizes {
            train: 0,
            validation: 30,
            test: 1,
        },
        2,
    );
    let s = generate_synthetic(&one, false).unwrap();
    let index = FrugalIndex::new(&s.validation, FrugalConfig::knn(1, 5, 3, 0.1), None).unwrap();
    let (best, _) = index
        .exhaustive_shortest_path(&Query::from(&s.test.records()[0]))
        .unwrap();
    assert_eq!(best, SubsetMask::singleton(0));
}

#[test]
fn experts_queried_non_increasing_in_lambda() {
    let (v, t) = k4();
    let index = FrugalIndex::new(&v, FrugalConfig::knn(4, 15, 9, 0.0), None).unwrap();
    let reports: Vec<_> = presets::lambda_grid()
        .into_iter()
        .map(|l| frugal_traces(&index.with_lambda(l), &t).unwrap())
        .collect();
    for w in reports.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            assert!(b.experts_queried <= a.experts_queried);
            assert!(a.query_sequence.starts_with(&b.query_sequence));
        }
    }
}

#[test]
fn large_lambda_stops_at_starting_expert() {
    let (v, t) = k4();
    // lambda * c = 2 exceeds any possible drop in 0-1 loss
    let r = frugal_evaluate(&t, &v, &FrugalConfig::knn(4, 15, 9, 200.0), None).unwrap();
    assert_eq!(r.mean_experts_queried, 1.0);
    assert_eq!(r.query_histogram[1], t.len());
}

#[test]
fn zero_lambda_takes_zero_improvement_steps() {
    let (v, t) = k4();
    let index = FrugalIndex::new(&v, FrugalConfig::knn(4, 15, 9, 0.0), None).unwrap();
    for trace in frugal_traces(&index, &t).unwrap() {
        if trace.stop_reason == StopReason::NoImprovement {
            let last = trace.steps.last().unwrap();
            let (_, est) = last.best_candidate.unwrap();
            assert!(est > last.current_estimate);
        } else {
            assert_eq!(trace.stop_reason, StopReason::AllQueried);
            assert_eq!(trace.experts_queried, 4);
        }
    }
    let strict = FrugalConfig {
        stop_on_zero: true,
        ..FrugalConfig::knn(4, 15, 9, 0.0)
    };
    let index = FrugalIndex::new(&v, strict, None).unwrap();
    for trace in frugal_traces(&index, &t).unwrap() {
        for step in &trace.steps[..trace.steps.len() - 1] {
            assert!(step.best_candidate.unwrap().1 < step.current_estimate);
        }
    }
}

#[test]
fn query_cap_is_respected() {
    let (v, t) = k4();
    let cfg = FrugalConfig {
        max_queries: Some(1),
        ..FrugalConfig::knn(4, 15, 9, 0.0)
    };
    let r = frugal_evaluate(&t, &v, &cfg, None).unwrap();
    assert_eq!(r.mean_experts_queried, 1.0);
    let cfg = FrugalConfig {
        max_queries: Some(2),
        ..FrugalConfig::knn(4, 15, 9, 0.0)
    };
    let index = FrugalIndex::new(&v, cfg, None).unwrap();
    for trace in frugal_traces(&index, &t).unwrap() {
        assert!(trace.experts_queried <= 2);
        if trace.experts_queried == 2 {
            assert_eq!(trace.stop_reason, StopReason::MaxQueries);
        }
    }
}

#[test]
fn traces_are_well_formed_and_deterministic() {
    let (v, t) = k4();
    let index = FrugalIndex::new(&v, FrugalConfig::knn(4, 15, 9, 0.5), None).unwrap();
    let a = frugal_traces(&index, &t).unwrap();
    let b = frugal_traces(
        &FrugalIndex::new(&v, FrugalConfig::knn(4, 15, 9, 0.5), None).unwrap(),
        &t,
    )
    .unwrap();
    assert_eq!(a, b);
    for trace in &a {
        assert_eq!(trace.query_sequence[0], index.starting_expert());
        let mut seen = trace.query_sequence.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), trace.query_sequence.len());
        assert!((trace.total_cost - 0.5 * 0.01 * trace.experts_queried as f64).abs() < 1e-15);
    }
}

/// Records with continuous random probability vectors, so neither neighbor
/// distances nor estimates tie.
fn continuous_dataset(n: usize, k: usize, c: usize, seed: u64, first_id: u64) -> Dataset {
    let mut rng = Stream::new(seed);
    let schema = DatasetSchema {
        num_experts: k,
        output_dim: c,
        num_classes: c,
        target_kind: TargetKind::ClassLabel,
        prob_outputs: true,
    };
    let records = (0..n)
        .map(|i| {
            let domain = rng.below(k);
            let label = rng.below(c);
            let outputs = (0..k)
                .map(|e| {
                    let sharp = if e == domain { 4.0 } else { 1.0 };
                    let raw: Vec<f64> = (0..c)
                        .map(|j| (rng.uniform() + if j == label { 0.5 * sharp } else { 0.0 }).exp())
                        .collect();
                    let z: f64 = raw.iter().sum();
                    let mut v: Vec<f64> = raw.iter().map(|x| x / z).collect();
                    let rest: f64 = v[1..].iter().sum();
                    v[0] = 1.0 - rest;
                    v
                })
                .collect();
            ExpertOutputRecord::new(first_id + i as u64, domain, label, outputs)
        })
        .collect();
    Dataset::new(schema, records).unwrap()
}

#[test]
fn traces_are_permutation_equivariant() {
    let v = continuous_dataset(300, 4, 3, 71, 0);
    let t = continuous_dataset(60, 4, 3, 62, 1000);
    let perm = [2, 0, 3, 1];
    let costs = vec![0.0123, 0.0171, 0.0089, 0.0142];
    let permuted_costs: Vec<f64> = perm.iter().map(|&old| costs[old]).collect();
    let cfg = |costs: Vec<f64>| FrugalConfig {
        cost_model: CostModel { costs, lambda: 0.4 },
        ..FrugalConfig::knn(4, 15, 9, 0.4)
    };
    let a_index = FrugalIndex::new(&v, cfg(costs), None).unwrap();
    let singles = a_index.singleton_losses().unwrap();
    for i in 0..4 {
        for j in 0..i {
            assert_ne!(singles[i], singles[j], "fixture must not tie the starting expert");
        }
    }
    let pv = common::permute_experts(&v, &perm);
    let pt = common::permute_experts(&t, &perm);
    let b_index = FrugalIndex::new(&pv, cfg(permuted_costs), None).unwrap();
    let a = frugal_traces(&a_index, &t).unwrap();
    let b = frugal_traces(&b_index, &pt).unwrap();
    let new_index = |old: usize| perm.iter().position(|&p| p == old).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let mapped: Vec<usize> = x.query_sequence.iter().map(|&e| new_index(e)).collect();
        assert_eq!(mapped, y.query_sequence);
        assert_eq!(x.prediction, y.prediction);
        assert_eq!(x.stop_reason, y.stop_reason);
        assert_eq!(x.correct, y.correct);
        assert!((x.realized_objective - y.realized_objective).abs() < 1e-12);
    }
}

#[test]
fn starting_expert_is_largest_domain_by_loo() {
    let rest = 0.7 / 9.0;
    let mut weights = vec![rest; 10];
    weights[0] = 0.3;
    let total: f64 = weights.iter().sum();
    weights[9] += 1.0 - total;
    let cfg = SynthConfig {
        mixture_weights: weights,
        ..SynthConfig::uniform(
            10,
            20,
            0.9,
            0.55,
            SplitSizes {
                train: 0,
                validation: 1000,
                test: 0,
            },
            7,
        )
    };
    let v = generate_synthetic(&cfg, false).unwrap().validation;
    // brute-force LOO accuracy of each singleton kNN fuser
    let loo: Vec<usize> = (0..10)
        .map(|k| {
            v.records()
                .iter()
                .filter(|r| common::brute_knn(r, &[k], &v, 9, Some(r.id)).1 != r.label)
                .count()
        })
        .collect();
    let brute_best = (0..10).min_by_key(|k| (loo[*k], *k)).unwrap();
    assert_eq!(brute_best, 0);
    assert_eq!(
        select_starting_expert(&v, &FrugalConfig::knn(10, 15, 9, 0.1)).unwrap(),
        0
    );
}

#[test]
fn starting_expert_ties_go_low() {
    let schema = DatasetSchema {
        num_experts: 2,
        output_dim: 1,
        num_classes: 2,
        target_kind: TargetKind::ClassLabel,
        prob_outputs: false,
    };
    let records = (0..10)
        .map(|i| ExpertOutputRecord::new(i, 0, (i % 2) as usize, vec![vec![i as f64], vec![i as f64]]))
        .collect();
    let v = Dataset::new(schema, records).unwrap();
    assert_eq!(
        select_starting_expert(&v, &FrugalConfig::knn(2, 3, 1, 0.0)).unwrap(),
        0
    );
    let empty = Dataset::new(*v.schema(), vec![]).unwrap();
    assert_eq!(
        select_starting_expert(&empty, &FrugalConfig::knn(2, 3, 1, 0.0))
            .unwrap_err()
            .code(),
        "EmptyDataset"
    );
}

#[test]
fn sweep_shares_cache_and_matches_fresh_runs() {
    let (v, t) = k4();
    let index = FrugalIndex::new(&v, FrugalConfig::knn(4, 15, 9, 0.0), None).unwrap();
    let swept = lambda_sweep(&index, &t, &[0.0, 0.5]).unwrap();
    let fresh = frugal_evaluate(&t, &v, &FrugalConfig::knn(4, 15, 9, 0.5), None).unwrap();
    assert_eq!(swept[1], fresh);
}

#[test]
fn mlp_bank_mode_runs_and_reports_missing_fusers() {
    let cfg = SynthConfig::uniform(
        3,
        4,
        0.9,
        0.5,
        SplitSizes {
            train: 300,
            validation: 100,
            test: 30,
        },
        8,
    );
    let s = generate_synthetic(&cfg, false).unwrap();
    let tc = TrainConfig {
        hidden: vec![16, 16],
        epochs: 5,
        ..TrainConfig::default()
    };
    let bank = FuserBank::train(&s.train, 3, &tc).unwrap();
    assert_eq!(bank.len(), 7);
    let fc = FrugalConfig {
        fuser_kind: FuserKind::MlpBank,
        ..FrugalConfig::knn(3, 10, 5, 0.1)
    };
    let r = frugal_evaluate(&s.test, &s.validation, &fc, Some(&bank)).unwrap();
    assert_eq!(r.records, 30);

    let partial = FuserBank::train(&s.train, 1, &tc).unwrap();
    let index = FrugalIndex::new(&s.validation, fc.clone(), Some(&partial)).unwrap();
    let err = index
        .exhaustive_shortest_path(&Query::from(&s.test.records()[0]))
        .unwrap_err();
    assert_eq!(err.code(), "MissingFuser");
    let no_bank = FrugalIndex::new(&s.validation, fc, None).unwrap_err();
    assert_eq!(no_bank.code(), "InvalidConfig");
}
