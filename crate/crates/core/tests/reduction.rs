mod common;

#[test]
fn single_column_learner_is_plain_sac() {
    common::sac_reduction(1000).unwrap();
}
