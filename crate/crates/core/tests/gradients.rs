//! Analytic gradients from the tape against central differences of the
//! brute-force reference forward passes.

mod common;

use common::fd;

const INSTANCES: u64 = 20;
const TOL: f64 = 1e-4;

fn check(name: &str, base: u64, tol: f64, f: impl Fn(u64) -> f64) {
    for seed in base..base + INSTANCES {
        let err = f(seed);
        assert!(err < tol, "{name} seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn conv2d_matches_finite_differences() {
    check("conv2d", 0, TOL, fd::conv2d);
}

#[test]
fn dense_matches_finite_differences() {
    check("dense", 100, TOL, fd::dense);
}

#[test]
fn relu_matches_finite_differences() {
    check("relu", 200, TOL, fd::relu);
}

#[test]
fn max_pool_matches_finite_differences() {
    check("max pool", 300, TOL, fd::max_pool);
}

#[test]
fn softmax_matches_finite_differences() {
    check("softmax", 400, TOL, fd::softmax);
}

#[test]
fn softmax_cross_entropy_matches_finite_differences() {
    check("softmax + cross-entropy", 500, 1e-5, fd::softmax_cross_entropy);
}

#[test]
fn small_network_matches_finite_differences_everywhere() {
    check("small network", 600, TOL, fd::small_network);
}

#[test]
fn default_network_matches_finite_differences_on_sampled_coordinates() {
    check("default network", 700, TOL, fd::default_network);
}
