mod common;

use lenctl::position::{position_indices, PositionPlan};

#[test]
fn reverse_indices_hold_exhaustively() {
    let cases = common::reverse_index_invariants().unwrap();
    assert!(cases > 64 * 11 * 5);
}

#[test]
fn eight_token_countdown() {
    let plan = PositionPlan::reverse(8, 0, 136);
    assert_eq!(position_indices(&plan, 8).unwrap(), [7, 6, 5, 4, 3, 2, 1, 0]);
}
