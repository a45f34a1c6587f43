mod common;

use taco_core::taskworld::{make_task, Registry};
use taco_core::transfer::{init_from_checkpoint, run_transfer, TransferConfig};
use taco_core::trainer::{pretrain::layout_for, rng_stream, streams, TrainConfig};
use taco_core::Error;

#[test]
fn warmup_and_fixed_phi_freezes_hold() {
    let v = common::check_freeze();
    assert!(v.passed, "{}", v.detail);
}

#[test]
fn transfer_rejects_mismatched_layout() {
    let cfg = common::small_train_config();
    let pretrained = common::random_pretrained(&cfg, 1);
    let other = TrainConfig {
        hidden_sizes: vec![8, 8],
        ..cfg.clone()
    };
    let world = Registry::builtin().world();
    let layout = layout_for(&other, &world).unwrap();
    let err = init_from_checkpoint(&pretrained, &layout, &mut rng_stream(0, streams::CRITIC_INIT)).unwrap_err();
    assert!(matches!(err, Error::LayoutMismatch { .. }));
    let task = make_task("reach", 0).unwrap();
    let tcfg = TransferConfig {
        n_e: 10,
        n_max: 20,
        ..TransferConfig::default()
    };
    assert!(run_transfer(&other, &tcfg, &pretrained, &task, &world, 0).is_err());
}

#[test]
fn critic_rows_are_redrawn_and_policy_rows_kept() {
    let cfg = common::small_train_config();
    let pretrained = common::random_pretrained(&cfg, 2);
    let world = Registry::builtin().world();
    let layout = layout_for(&cfg, &world).unwrap();
    let phi_star = pretrained.parameter_set().unwrap();
    let phi = init_from_checkpoint(&pretrained, &layout, &mut rng_stream(9, streams::CRITIC_INIT)).unwrap();
    for col in 0..cfg.k {
        assert_eq!(phi.column(col)[layout.policy_range()], phi_star.column(col)[layout.policy_range()]);
        assert_ne!(phi.column(col)[layout.critic_range()], phi_star.column(col)[layout.critic_range()]);
    }
    let again = init_from_checkpoint(&pretrained, &layout, &mut rng_stream(9, streams::CRITIC_INIT)).unwrap();
    assert_eq!(phi, again);
}
