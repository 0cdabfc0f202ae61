mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{instance, map_values, random_params, rng};
use sim_core::eval::{average_precision, cmc_curve, multi_shot_trials, TrialConfig};
use sim_core::mnnr::{cross_knn, mnnr_distances, reciprocal_neighbors};
use sim_core::pipeline::rank_rows;
use sim_core::sgr::{build_graph, sgr_distances};
use sim_core::synth::{generate, SynthConfig};
use sim_core::{run_baseline, run_sim, Method, SimParams};

fn sgr_params(lambda: f64, big_k: usize, prune_k: usize) -> SimParams {
    SimParams {
        lambda,
        big_k,
        prune_k,
        k_q: 1,
        k_g: 1,
        ..SimParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cheapest_path_never_exceeds_direct_edge(seed in any::<u64>(), nq in 1usize..6, ng in 1usize..12) {
        let mut r = rng(seed);
        let (dqg, dgg) = instance(&mut r, nq, ng);
        let prune_k = r.random_range(1..=ng);
        let p = sgr_params(r.random_range(0.0..=1.0), 1, prune_k);
        let ds = sgr_distances(&build_graph(&dqg, &dgg, &p).unwrap(), &p).unwrap();
        for i in 0..nq {
            for j in 0..ng {
                prop_assert!(ds.values().get(i, j) <= dqg.get(i, j));
            }
        }
    }

    #[test]
    fn graph_distance_non_decreasing_in_k(seed in any::<u64>(), nq in 1usize..5, ng in 2usize..12) {
        let mut r = rng(seed);
        let (dqg, dgg) = instance(&mut r, nq, ng);
        let lambda = r.random_range(0.0..=1.0);
        let graph = build_graph(&dqg, &dgg, &sgr_params(lambda, 1, ng)).unwrap();
        let mut prev = sgr_distances(&graph, &sgr_params(lambda, 1, ng)).unwrap();
        for k in 2..=ng {
            let next = sgr_distances(&graph, &sgr_params(lambda, k, ng)).unwrap();
            for (a, b) in prev.values().as_slice().iter().zip(next.values().as_slice()) {
                // Means of growing sorted prefixes; allow one rounding step.
                prop_assert!(*b >= *a - 1e-12 * a.abs().max(1.0));
            }
            prev = next;
        }
    }

    #[test]
    fn power_of_two_scaling_scales_graph_distance_exactly(seed in any::<u64>(), exp in -4i32..5) {
        let mut r = rng(seed);
        let (dqg, dgg) = instance(&mut r, 4, 9);
        let c = 2f64.powi(exp);
        let p = SimParams { alpha: 1.0, ..random_params(&mut r, 9) };
        let base = run_sim(&dqg, &dgg, &p).unwrap();
        let scaled = run_sim(&dqg.scaled(c).unwrap(), &dgg.scaled(c).unwrap(), &p).unwrap();
        let a = base.d_s.unwrap();
        let b = scaled.d_s.unwrap();
        for (x, y) in a.values().as_slice().iter().zip(b.values().as_slice()) {
            prop_assert_eq!(x * c, *y);
        }
        prop_assert_eq!(base.rankings, scaled.rankings);
    }

    #[test]
    fn unexpanded_sets_are_reciprocal_and_contain_self(seed in any::<u64>(), ng in 1usize..20) {
        let mut r = rng(seed);
        let (_, dgg) = instance(&mut r, 1, ng);
        let k = r.random_range(1..=ng);
        let sets = reciprocal_neighbors(&dgg, k, false).unwrap();
        for (g, s) in sets.iter().enumerate() {
            prop_assert!(s.contains(g));
            for &x in s.members() {
                prop_assert!(sets[x].contains(g));
            }
        }
    }

    #[test]
    fn blend_lies_between_components(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ng = r.random_range(2..15);
        let (dqg, dgg) = instance(&mut r, 5, ng);
        let p = random_params(&mut r, ng);
        let res = run_sim(&dqg, &dgg, &p).unwrap();
        let ds = res.d_s.unwrap();
        let dm = res.d_m.unwrap();
        let beta = 1.0 - p.alpha;
        for ((&v, &s), &m) in res.d_sim.as_slice().iter().zip(ds.values().as_slice()).zip(dm.values().as_slice()) {
            prop_assert_eq!(v, p.alpha * s + beta * m);
            let (lo, hi) = if s < m { (s, m) } else { (m, s) };
            // One rounding step per operation.
            let slack = 4.0 * f64::EPSILON * hi.abs().max(1.0);
            prop_assert!(v >= lo - slack && v <= hi + slack, "{} not in [{}, {}]", v, lo, hi);
        }
        for ranking in &res.rankings {
            let mut sorted = ranking.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..ng).collect::<Vec<_>>());
        }
    }

    #[test]
    fn baseline_matches_naive_argsort(seed in any::<u64>(), nq in 1usize..6, ng in 1usize..10) {
        let mut r = rng(seed);
        let (dqg, _) = instance(&mut r, nq, ng);
        let res = run_baseline(&dqg);
        for i in 0..nq {
            // Selection sort: repeatedly take the smallest remaining value,
            // lowest index on ties.
            let mut left: Vec<usize> = (0..ng).collect();
            let mut expected = Vec::new();
            while !left.is_empty() {
                let mut best = 0;
                for k in 1..left.len() {
                    if dqg.get(i, left[k]) < dqg.get(i, left[best]) {
                        best = k;
                    }
                }
                expected.push(left.remove(best));
            }
            prop_assert_eq!(&res.rankings[i], &expected);
        }
    }

    #[test]
    fn cmc_is_monotone_and_bounded(seed in any::<u64>()) {
        let mut r = rng(seed);
        let nq = r.random_range(1..12);
        let ng = r.random_range(1..15);
        let rankings: Vec<Vec<usize>> = (0..nq).map(|_| {
            let mut v: Vec<usize> = (0..ng).collect();
            rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut r);
            v
        }).collect();
        let relevance: Vec<Vec<bool>> = (0..nq).map(|_| (0..ng).map(|_| r.random_bool(0.3)).collect()).collect();
        let cmc = cmc_curve(&rankings, &relevance, ng);
        prop_assert!(cmc.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(cmc.iter().all(|&v| (0.0..=1.0).contains(&v)));
        for (ranking, rel) in rankings.iter().zip(&relevance) {
            if let Some(ap) = average_precision(ranking, rel) {
                prop_assert!(ap > 0.0 && ap <= 1.0);
            }
        }
    }
}

#[test]
fn mnnr_matrix_unchanged_by_increasing_transforms() {
    let mut r = rng(99);
    for _ in 0..20 {
        let ng = r.random_range(2..25);
        let (dqg, dgg) = instance(&mut r, 6, ng);
        let k_q = r.random_range(1..=ng);
        let k_g = r.random_range(1..=ng);
        let expand = r.random_bool(0.5);
        let reference = mnnr_distances(
            &cross_knn(dqg.values(), k_q).unwrap(),
            &reciprocal_neighbors(&dgg, k_g, expand).unwrap(),
        )
        .unwrap();
        let transforms: [fn(f64) -> f64; 3] = [f64::sqrt, f64::ln_1p, |x| x * x * x + x];
        for f in transforms {
            let q2 = map_values(&dqg, f);
            let g2 = map_values(&dgg, f);
            let m = mnnr_distances(
                &cross_knn(q2.values(), k_q).unwrap(),
                &reciprocal_neighbors(&g2, k_g, expand).unwrap(),
            )
            .unwrap();
            assert_eq!(m, reference);
        }
    }
}

#[test]
fn pipeline_output_independent_of_worker_count() {
    let mut r = rng(5);
    let (dqg, dgg) = instance(&mut r, 30, 80);
    let p = SimParams {
        expand_reciprocal: true,
        ..SimParams::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_sim(&dqg, &dgg, &p).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 8] {
        let other = run(threads);
        let bits =
            |m: &sim_core::Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one.d_sim), bits(&other.d_sim));
        assert_eq!(one, other);
    }
}

#[test]
fn self_distances_are_exactly_symmetric() {
    let mut r = rng(8);
    for _ in 0..10 {
        let ng = r.random_range(1..40);
        let (_, dgg) = instance(&mut r, 1, ng);
        assert_eq!(dgg.values(), &dgg.values().transpose());
        for i in 0..ng {
            assert_eq!(dgg.get(i, i), 0.0);
        }
    }
}

#[test]
fn zero_noise_baseline_is_perfect() {
    let cfg = SynthConfig {
        cluster_spread: 0.0,
        modality_offset: 0.0,
        ..SynthConfig::default()
    };
    let (q, g) = generate(&cfg).unwrap();
    let trial = TrialConfig {
        method: Method::Baseline,
        ..TrialConfig::default()
    };
    let report = multi_shot_trials(&q, &g, &trial, 3, 1).unwrap();
    assert_eq!(report.map, 1.0);
    assert_eq!(report.rank1(), 1.0);
}

#[test]
fn multi_shot_trials_are_seeded() {
    let cfg = SynthConfig {
        n_identities: 12,
        images_per_identity_per_modality: 8,
        cluster_spread: 2.0,
        ..SynthConfig::default()
    };
    let (q, g) = generate(&cfg).unwrap();
    let trial = TrialConfig {
        shot: Some(3),
        params: SimParams {
            k_q: 5,
            k_g: 5,
            big_k: 3,
            prune_k: 3,
            ..SimParams::default()
        },
        ..TrialConfig::default()
    };
    let a = multi_shot_trials(&q, &g, &trial, 4, 17).unwrap();
    let b = multi_shot_trials(&q, &g, &trial, 4, 17).unwrap();
    assert_eq!(a, b);
    let c = multi_shot_trials(&q, &g, &trial, 4, 18).unwrap();
    assert_ne!(a.map, c.map);
    assert_eq!(a.trials, 4);
    let valid: Vec<f64> = a.per_query_ap.iter().flatten().copied().collect();
    assert_eq!(a.map, valid.iter().sum::<f64>() / valid.len() as f64);
    assert!(a.cmc.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn rank_rows_breaks_ties_by_index() {
    let m = sim_core::Matrix::from_rows(&[[1.0, 0.5, 1.0, 0.5]]).unwrap();
    assert_eq!(rank_rows(&m), vec![vec![1, 3, 0, 2]]);
}
