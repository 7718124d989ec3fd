//! Randomized soundness checks on toy models against independently computed near-optimal points.

mod common;

use nearopt::oracle::{closest_near_optimal, separating_cut, value_function_cut};
use nearopt::toy::toy_spec;
use nearopt::{generate_toy_model, run_oracle, ExplorationProblem, Gateway, OracleOptions};
use proptest::prelude::*;

fn problem(seed: u64, n_tech: usize, n_explore: usize) -> ExplorationProblem {
    let model = generate_toy_model(seed, n_tech, 3).unwrap();
    let spec = toy_spec(&model, n_explore, 0.1, 0.01).unwrap();
    ExplorationProblem::solve(model, spec, &Gateway::new(0)).unwrap()
}

fn slack(problem: &ExplorationProblem) -> f64 {
    1e-6 * (1.0 + problem.z_range())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn dual_cuts_keep_near_optimal_points(
        seed in 0u64..500,
        n_explore in 2usize..=3,
        frac in proptest::collection::vec(0.0f64..=1.0, 3),
    ) {
        let pb = problem(seed, 4, n_explore);
        let gw = Gateway::new(0);
        let trial: Vec<f64> = (0..pb.n_z())
            .map(|j| pb.z_lower[j] + frac[j] * (pb.z_upper[j] - pb.z_lower[j]))
            .collect();
        let res = closest_near_optimal(&pb, &trial, &gw).unwrap();
        let samples = common::near_optimal_samples(&pb, 12, seed);
        // The projection itself is near-optimal: its distance is a feasible upper bound.
        for z in &samples {
            let d = z.iter().zip(&trial).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(res.delta <= d + slack(&pb));
        }
        if let Some(cut) = separating_cut(&res) {
            prop_assert!(cut.excess(&trial) > 0.0, "cut does not separate the trial point");
            for z in samples.iter().chain(std::iter::once(&res.z_feasible)) {
                prop_assert!(cut.excess(z) <= slack(&pb), "cut removes {z:?}: excess {}", cut.excess(z));
            }
        } else {
            prop_assert!(res.delta <= 1e-6 * (1.0 + pb.z_range()));
        }
    }

    #[test]
    fn value_cuts_keep_near_optimal_points(
        seed in 0u64..500,
        pick in 0usize..12,
    ) {
        let pb = problem(seed, 4, 2);
        let gw = Gateway::new(0);
        let samples = common::near_optimal_samples(&pb, 12, seed + 1);
        let cut = value_function_cut(&pb, &samples[pick], None, &gw).unwrap();
        let v = common::value_function(&pb, &samples[pick]).unwrap();
        prop_assert!((cut.v_f.unwrap() - v).abs() <= 1e-6 * (1.0 + v.abs()));
        if let Some(h) = cut.halfspace {
            for z in &samples {
                prop_assert!(h.excess(z) <= slack(&pb), "value cut removes {z:?}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn oracle_keeps_regions_nested(seed in 0u64..500) {
        let pb = problem(seed, 4, 2);
        let gw = Gateway::new(0);
        let mut opts = OracleOptions::new(pb.spec.tolerance);
        opts.max_iter = 15;
        opts.record_timings = false;
        let res = run_oracle(&pb, &opts, &gw).unwrap();
        for p in &res.inner.points {
            prop_assert!(res.outer.halfspaces.iter().all(|h| h.excess(&p.z) <= slack(&pb)));
        }
        for z in common::near_optimal_samples(&pb, 10, seed) {
            prop_assert!(res.outer.halfspaces.iter().all(|h| h.excess(&z) <= slack(&pb)));
        }
        for w in res.trace.windows(2) {
            prop_assert!(w[1].inner_m >= w[0].inner_m && w[1].outer_k >= w[0].outer_k);
            if let (Some(a), Some(b)) = (w[0].bound, w[1].bound) {
                prop_assert!(b >= -slack(&pb) && a >= -slack(&pb));
            }
        }
        if res.converged {
            prop_assert!(res.final_d.unwrap() <= pb.spec.tolerance + opts.milp.abs_gap);
        }
    }
}
