use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rarl_core::estimators::NominalSampler;
use rarl_core::learners::{robust_rvi_q, robust_rvi_td, LearnerConfig, StepSchedule};
use rarl_core::mdp::gain_and_bias;
use rarl_core::planners::{robust_rvi_control, PlannerConfig};
use rarl_core::{OffsetFn, Policy, QFn, RectangularSet, TabularMdp, UncertaintySetSpec};

fn five_state() -> TabularMdp {
    TabularMdp::from_tables(
        &[
            vec![vec![0.1, 0.4, 0.2, 0.2, 0.1]],
            vec![vec![0.3, 0.1, 0.1, 0.1, 0.4]],
            vec![vec![0.0, 0.6, 0.0, 0.4, 0.0]],
            vec![vec![0.25, 0.25, 0.25, 0.25, 0.0]],
            vec![vec![0.7, 0.0, 0.3, 0.0, 0.0]],
        ],
        &[vec![1.0], vec![-0.5], vec![0.0], vec![3.0], vec![0.2]],
    )
    .unwrap()
}

fn four_by_two() -> TabularMdp {
    TabularMdp::from_tables(
        &[
            vec![vec![0.7, 0.1, 0.1, 0.1], vec![0.1, 0.7, 0.1, 0.1]],
            vec![vec![0.2, 0.2, 0.5, 0.1], vec![0.05, 0.05, 0.1, 0.8]],
            vec![vec![0.4, 0.4, 0.1, 0.1], vec![0.0, 0.3, 0.3, 0.4]],
            vec![vec![0.25, 0.25, 0.25, 0.25], vec![0.6, 0.1, 0.1, 0.2]],
        ],
        &[vec![0.0, 0.5], vec![1.0, -1.0], vec![0.2, 0.4], vec![2.0, 1.0]],
    )
    .unwrap()
}

#[test]
fn nominal_td_tracks_the_exact_gain() {
    let mdp = five_state();
    let pi = Policy::uniform(5, 1);
    let src = NominalSampler::new(&mdp).unwrap();
    let spec = UncertaintySetSpec::Contamination { delta: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trace = robust_rvi_td(&src, mdp.rewards(), &pi, &spec, None, &LearnerConfig::new(50_000), &mut rng).unwrap();
    let g = gain_and_bias(&mdp, &pi, OffsetFn::Mean).unwrap().gain;
    let f = trace.final_offset().unwrap();
    assert!((f - g).abs() <= 0.05, "{f} vs {g}");
}

#[test]
fn nominal_q_learning_tracks_the_optimal_gain() {
    let mdp = four_by_two();
    let src = NominalSampler::new(&mdp).unwrap();
    let spec = UncertaintySetSpec::Contamination { delta: 0.0 };
    let set = RectangularSet::new(&mdp, &spec).unwrap();
    let g_star = robust_rvi_control(&mdp, &set, &PlannerConfig::default()).unwrap().gain;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trace = robust_rvi_q(&src, mdp.rewards(), 2, &spec, None, &LearnerConfig::new(50_000), &mut rng).unwrap();
    let f = trace.final_offset().unwrap();
    assert!((f - g_star).abs() <= 0.05, "{f} vs {g_star}");
}

#[test]
fn identical_seeds_give_identical_traces() {
    let mdp = four_by_two();
    let src = NominalSampler::new(&mdp).unwrap();
    let spec = UncertaintySetSpec::Kl { delta: 0.3 };
    let cfg = LearnerConfig {
        snapshot_every: Some(50),
        ..LearnerConfig::new(500)
    };
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        robust_rvi_q(&src, mdp.rewards(), 2, &spec, None, &cfg, &mut rng).unwrap()
    };
    let (a, b) = (run(9), run(9));
    assert_eq!(a, b);
    assert_ne!(a.final_values, run(10).final_values);
}

#[test]
fn single_action_q_learning_reproduces_td() {
    let mdp = five_state();
    let src = NominalSampler::new(&mdp).unwrap();
    let pi = Policy::uniform(5, 1);
    for spec in [
        UncertaintySetSpec::Contamination { delta: 0.2 },
        UncertaintySetSpec::ChiSquare { delta: 0.2 },
    ] {
        let cfg = LearnerConfig {
            schedule: StepSchedule::RobbinsMonro { c: 1.0, offset: 10.0 },
            ..LearnerConfig::new(300)
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        let td = robust_rvi_td(&src, mdp.rewards(), &pi, &spec, None, &cfg, &mut r1).unwrap();
        let q = robust_rvi_q(&src, mdp.rewards(), 1, &spec, None, &cfg, &mut r2).unwrap();
        assert_eq!(td, q);
    }
}

#[test]
fn reference_state_offset_runs() {
    let mdp = four_by_two();
    let src = NominalSampler::new(&mdp).unwrap();
    let spec = UncertaintySetSpec::TotalVariation { delta: 0.1 };
    let cfg = LearnerConfig {
        offset: OffsetFn::ReferenceState(2),
        ..LearnerConfig::new(200)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let init = QFn::zeros(4, 2);
    let trace = robust_rvi_q(&src, mdp.rewards(), 2, &spec, Some(&init), &cfg, &mut rng).unwrap();
    let last = trace.records.last().unwrap();
    // The reference index addresses the flattened table.
    assert_eq!(last.f_value, trace.final_values[2]);
}
