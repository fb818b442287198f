mod common;

use common::{joint_loss_error, primitive_errors, FD_TOL};

#[test]
fn every_primitive_matches_finite_differences() {
    for (name, err) in primitive_errors() {
        assert!(err < FD_TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn joint_loss_gradient_matches_finite_differences() {
    for lambda in [0.0, 0.3, 1.0] {
        let (err, tensors) = joint_loss_error(lambda);
        assert!(tensors > 40);
        assert!(err < FD_TOL, "lambda {lambda}: relative error {err:e}");
    }
}
