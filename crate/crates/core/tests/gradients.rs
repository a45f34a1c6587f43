mod common;

#[test]
fn sac_and_composition_gradients_match_finite_differences() {
    let v = common::check_gradients();
    assert!(v.passed, "{}", v.detail);
}
