//! Central finite-difference checks of every hand-derived gradient.

mod common;

use common::checks::{charbonnier_fd_error, conv_fd_error, leaky_fd_error, network_fd_error};
use spad_core::network::SkipTopology;

const TOL: f64 = 1e-3;

#[test]
fn conv_gradients_match_finite_differences() {
    for seed in 0..10 {
        let err = conv_fd_error(seed);
        assert!(err <= 1e-4, "seed {seed}: {err:e}");
    }
}

#[test]
fn leaky_relu_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let err = leaky_fd_error(seed);
        assert!(err <= 1e-8, "seed {seed}: {err:e}");
    }
}

#[test]
fn charbonnier_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let err = charbonnier_fd_error(seed);
        assert!(err <= TOL, "seed {seed}: {err:e}");
    }
}

#[test]
fn network_gradients_match_finite_differences_on_10_seeds() {
    for seed in 0..10 {
        let err = network_fd_error(SkipTopology::Cascade, seed);
        assert!(err <= TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn raw_input_topology_gradients_match_finite_differences() {
    for seed in 0..3 {
        let err = network_fd_error(SkipTopology::RawInput, seed);
        assert!(err <= TOL, "seed {seed}: relative error {err:e}");
    }
}
