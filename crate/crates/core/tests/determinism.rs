mod common;

use taco_core::taskworld::{make_suite, Registry};
use taco_core::trainer::{run_pretraining, SamplingMode, TrainConfig};

fn config(sampling: SamplingMode) -> TrainConfig {
    TrainConfig {
        total_env_steps: 900,
        warmup_steps: 200,
        eval_every: 300,
        sampling,
        ..common::small_train_config()
    }
}

#[test]
fn same_seed_gives_identical_run_logs_and_parameters() {
    let tasks = make_suite("mt4-toy", 0).unwrap();
    let world = Registry::builtin().world();
    for sampling in [
        SamplingMode::Uniform,
        SamplingMode::Online {
            eps_scale: 0.5,
            min_pts: 1,
        },
    ] {
        let cfg = TrainConfig {
            batch_size: 32,
            ..config(sampling)
        };
        let a = run_pretraining(&cfg, &tasks, &world, 11).unwrap();
        let b = run_pretraining(&cfg, &tasks, &world, 11).unwrap();
        assert!(a.run.log.same_run(&b.run.log));
        assert_eq!(a.run.log.records.len(), 3);
        assert_eq!(a.learner.to_checkpoint(), b.learner.to_checkpoint());
        let c = run_pretraining(&cfg, &tasks, &world, 12).unwrap();
        assert_ne!(a.learner.to_checkpoint().phi, c.learner.to_checkpoint().phi);
    }
}

#[test]
fn zero_budget_returns_initial_parameters_and_empty_log() {
    let tasks = make_suite("mt4-toy", 0).unwrap();
    let world = Registry::builtin().world();
    let cfg = TrainConfig {
        total_env_steps: 0,
        ..config(SamplingMode::Uniform)
    };
    let out = run_pretraining(&cfg, &tasks, &world, 3).unwrap();
    assert!(out.run.log.records.is_empty());
    assert!(out.best().is_none());
    assert_eq!(out.learner.steps(), 0);
}
