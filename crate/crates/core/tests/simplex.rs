mod common;

use common::simplex_moments;

#[test]
fn reset_and_explore_draws_are_uniform_on_the_simplex() {
    let v = common::check_simplex();
    assert!(v.passed, "{}", v.detail);
}

#[test]
fn moment_check_rejects_a_biased_sampler() {
    let draws: Vec<Vec<f64>> = (0..1000).map(|i| if i % 3 == 0 { vec![1.0, 0.0] } else { vec![0.3, 0.7] }).collect();
    assert!(simplex_moments(&draws).is_err());
    assert!(simplex_moments(&[vec![-0.1, 1.1], vec![0.5, 0.5]]).is_err());
}
