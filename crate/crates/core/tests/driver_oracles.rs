mod common;

use common::*;
use ios_bc::channel::{generate_channels, ChannelSet};
use ios_bc::covariance_opt::{optimize_covariances, CovarianceOptions};
use ios_bc::driver::{monte_carlo, monte_carlo_seeds, run_ao, run_seed, AoOptions, RhoStage};
use ios_bc::ios_opt::{IosState, SurfaceMode};
use ios_bc::linalg::CMat;
use rand::Rng;

#[test]
fn without_a_surface_only_covariances_matter() {
    let mut r = rng(50);
    let direct: Vec<CMat> = (0..3).map(|_| rand_mat(&mut r, 2, 4, 1.0)).collect();
    let ch = ChannelSet::from_parts(direct.clone(), CMat::zeros(0, 4), vec![CMat::zeros(2, 0); 3], 2).unwrap();
    let rep = run_ao(&ch, 2.0, &AoOptions::default(), None, None).unwrap();
    let alone = optimize_covariances(&direct, 2.0, &CovarianceOptions::default()).unwrap();
    assert!((rep.final_objective - alone.objective).abs() < 1e-12);
    assert!(rep.final_state.beta_r.is_empty());
    assert_eq!(rep.final_state.rho, AoOptions::default().rho_init);
    for st in &rep.stage_trace {
        assert_eq!(st.after_covariance, st.after_surface);
        assert_eq!(st.after_surface, st.after_rho);
    }
}

#[test]
fn continuous_trace_is_monotone_stage_by_stage() {
    let s = small_scenario("");
    for seed in 0..10 {
        for stage in [RhoStage::SingleStep, RhoStage::Full] {
            let opts = AoOptions {
                rho_stage: stage,
                ..s.solver.clone()
            };
            let rep = run_seed(&s, seed, &opts).unwrap();
            let mut prev = rep.initial_objective;
            for st in &rep.stage_trace {
                for v in [st.after_covariance, st.after_surface, st.after_rho] {
                    assert!(v >= prev - 1e-9, "seed {seed}: {prev} -> {v}");
                    prev = v;
                }
            }
            assert!(rep.final_objective >= rep.objective_trace[0]);
            assert_eq!(rep.objective_trace.len(), rep.iterations_used);
            assert_eq!(rep.rho_trace.len(), rep.iterations_used);
            assert_eq!(rep.side_rate_trace.len(), rep.iterations_used);
        }
    }
}

#[test]
fn final_report_passes_duality_audit() {
    let s = small_scenario("");
    let rep = run_seed(&s, 3, &s.solver).unwrap();
    assert!((rep.bc_sum_rate - rep.final_objective).abs() <= 1e-8 * rep.final_objective);
    let sides = rep.rate_reflection_side + rep.rate_transmission_side;
    assert!((sides - rep.bc_sum_rate).abs() < 1e-9);
    assert!((rep.bc_covariances.total_power() - rep.mac_covariances.total_power()).abs() < 1e-8);
    assert!(rep.mac_covariances.total_power() <= s.power_budget + 1e-8);
    assert_eq!(rep.ordering.pi, vec![0, 1, 2, 3]);
}

#[test]
fn runs_are_bit_identical() {
    let s = small_scenario("");
    let a = run_seed(&s, 8, &s.solver).unwrap();
    let b = run_seed(&s, 8, &s.solver).unwrap();
    assert_eq!(a.objective_trace, b.objective_trace);
    assert_eq!(a.rho_trace, b.rho_trace);
    assert_eq!(a.side_rate_trace, b.side_rate_trace);
    assert_eq!(a.final_state, b.final_state);
}

#[test]
fn discrete_result_is_below_the_joint_optimum() {
    let mut r = rng(51);
    let pairs = placeholder_pairs();
    let opts = AoOptions {
        mode: SurfaceMode::Discrete,
        ..AoOptions::default()
    };
    for _ in 0..5 {
        let ch = random_channels(&mut r, 2, 1, 1, 1, 2, 0.7);
        let rep = run_ao(&ch, 1.0, &opts, None, Some(&pairs)).unwrap();
        assert!(rep.final_state.pairs_are_members());
        let oracle = joint_oracle(&ch, &pairs, 1.0, opts.rho.rho_min, opts.rho.rho_max);
        assert!(rep.final_objective <= oracle + 1e-6, "{} vs {oracle}", rep.final_objective);
    }
}

#[test]
fn discrete_mode_improves_on_random_starts() {
    let s = scenario("[surface]\npairs = [[0.8, 0.0, 0.6, 90.0], [0.8, 180.0, 0.6, -90.0]]\n");
    let pairs = s.pair_set.clone().unwrap();
    let opts = AoOptions {
        mode: SurfaceMode::Discrete,
        ..s.solver.clone()
    };
    let seeds = 40;
    let mut ok = 0;
    for seed in 0..seeds {
        let ch = generate_channels(&s, seed);
        let mut r = rng(1000 + seed);
        let mut init = IosState::discrete(s.n_ios(), opts.rho_init, pairs.clone()).unwrap();
        for e in 0..s.n_ios() {
            let p = pairs[r.random_range(0..pairs.len())];
            init.beta_r[e] = p.reflection;
            init.beta_t[e] = p.transmission;
        }
        let rep = run_ao(&ch, s.power_budget, &opts, Some(init), Some(&pairs)).unwrap();
        assert!(rep.final_state.pairs_are_members());
        if rep.final_objective >= rep.initial_objective {
            ok += 1;
        }
    }
    assert!(ok * 100 >= seeds * 95, "{ok}/{seeds}");
}

#[test]
fn discrete_mode_without_table_is_rejected() {
    let mut r = rng(52);
    let ch = random_channels(&mut r, 2, 1, 1, 1, 3, 1.0);
    let opts = AoOptions {
        mode: SurfaceMode::Discrete,
        ..AoOptions::default()
    };
    let err = run_ao(&ch, 1.0, &opts, None, None).unwrap_err();
    assert!(err.to_string().contains("surface.pairs"), "{err}");
}

#[test]
fn invalid_options_are_rejected() {
    let mut r = rng(53);
    let ch = random_channels(&mut r, 2, 1, 1, 1, 3, 1.0);
    let mut opts = AoOptions::default();
    opts.rho.rho_min = 0.7;
    opts.rho.rho_max = 0.6;
    assert!(run_ao(&ch, 1.0, &opts, None, None).is_err());
}

#[test]
fn single_run_batch_equals_single_run() {
    let s = small_scenario("");
    let mc = monte_carlo(&s, 1, &s.solver).unwrap();
    let single = run_seed(&s, s.seed, &s.solver).unwrap();
    assert_eq!(mc.runs.len(), 1);
    assert_eq!(mc.runs[0].0, s.seed);
    assert_eq!(mc.runs[0].1.objective_trace, single.objective_trace);
    assert_eq!(mc.summary.mean_objective, single.objective_trace);
    assert!(mc.summary.stderr_objective.iter().all(|&e| e == 0.0));
}

#[test]
fn aggregation_is_order_independent_and_padded() {
    let s = small_scenario("");
    let a = monte_carlo_seeds(&s, &[4, 9, 2, 7], &s.solver).unwrap();
    let b = monte_carlo_seeds(&s, &[7, 2, 9, 4], &s.solver).unwrap();
    assert_eq!(a.summary.mean_objective, b.summary.mean_objective);
    assert_eq!(a.summary.stderr_objective, b.summary.stderr_objective);
    let longest = a.runs.iter().map(|(_, r)| r.iterations_used).max().unwrap();
    assert_eq!(a.summary.mean_objective.len(), longest);
    let finals: f64 = a.runs.iter().map(|(_, r)| r.final_objective).sum::<f64>() / 4.0;
    assert!((a.summary.mean_objective.last().unwrap() - finals).abs() < 1e-12);
}
