//! End-to-end cross-validation of the two evolution routes for moving point
//! interactions, plus reductions with known behaviour.

use evolve1d::diagnostics::{frame_consistency, FrameLevel};
use evolve1d::hamiltonians::{
    assemble_l, assemble_moving_direct, BasisTerm, MovingDeltaSpec, ScalarProfile, SpatialGrid,
};
use evolve1d::propagator::{evolve_bidirectional, Sampling, WaveFunction};
use evolve1d::transforms::lab_frame_action;

fn linear_profile(a0: f64, a1: f64) -> ScalarProfile {
    ScalarProfile::Expression(vec![
        BasisTerm::Poly {
            coeff: a0,
            power: 0,
        },
        BasisTerm::Poly {
            coeff: a1,
            power: 1,
        },
    ])
}

fn base_level(n: usize, n_slices: usize) -> FrameLevel {
    FrameLevel {
        grid: SpatialGrid::new(10.0, n).unwrap(),
        n_slices,
        substeps: 4,
        quad_step: 1e-3,
    }
}

#[test]
fn stationary_pair_routes_agree_within_discretization_error() {
    // x = 1, y = 0 frozen: the chain reduces to gauge conjugation with the
    // quadratic phase t x^2 / 2, and both routes solve the same static
    // two-delta problem.
    let spec = MovingDeltaSpec::new(
        ScalarProfile::constant(-1.0),
        ScalarProfile::constant(1.0),
        ScalarProfile::constant(1.0),
        ScalarProfile::constant(1.0),
    );
    let base = base_level(321, 16);
    let levels = [base, base.refined(), base.refined().refined()];
    let report = frame_consistency(&spec, 0.0, 1.0, &levels, (0.0, 1.0, 0.0)).unwrap();
    assert!(
        report.monotone,
        "stationary distances not monotone: {:?}",
        report.distances
    );
    let final_distance = *report.distances.last().unwrap();
    assert!(
        final_distance <= 10.0 * report.self_convergence,
        "final distance {final_distance} vs self-convergence {}",
        report.self_convergence
    );
}

#[test]
fn free_packet_in_translating_frame_converges() {
    // kappa = 0 and a uniformly translating pair: the direct route is free
    // evolution; the transformed route exercises the shift and the
    // beta0/a1/a0 coefficient paths (ydot != 0).
    let spec = MovingDeltaSpec::new(
        linear_profile(-1.0, 0.3),
        linear_profile(1.0, 0.3),
        ScalarProfile::constant(0.0),
        ScalarProfile::constant(0.0),
    );
    let base = base_level(321, 16);
    let levels = [base, base.refined(), base.refined().refined()];
    let report = frame_consistency(&spec, 0.0, 1.0, &levels, (0.0, 1.0, 0.0)).unwrap();
    assert!(
        report.monotone,
        "translating-frame distances not monotone: {:?}",
        report.distances
    );
    assert!(
        *report.distances.last().unwrap() < report.distances[0],
        "no improvement across levels: {:?}",
        report.distances
    );
}

#[test]
fn transformed_run_slicing_can_differ_from_lab_slicing() {
    // The chain takes the transformed-frame run as a closure, so its slicing
    // is the caller's choice; matched and finer-than-lab slicings must land
    // near each other.
    let spec = MovingDeltaSpec::new(
        linear_profile(-1.0, -0.1),
        linear_profile(1.0, 0.1),
        ScalarProfile::constant(1.0),
        ScalarProfile::constant(1.0),
    );
    let grid = SpatialGrid::new(10.0, 641).unwrap();
    let psi = WaveFunction::gaussian(grid, 0.0, 1.0, 0.0).unwrap();
    let quad = 5e-4;
    let route = |lambda_slices: usize| {
        lab_frame_action(
            &spec,
            0.0,
            1.0,
            quad,
            |mapped| {
                Ok(evolve_bidirectional(
                    |tau| Ok(assemble_l(&spec, &grid, tau, quad)?.into_matrix()),
                    mapped,
                    0.0,
                    1.0,
                    lambda_slices,
                    4,
                    Sampling::Left,
                )?
                .final_state)
            },
            &psi,
        )
        .unwrap()
    };
    // slicing of the transformed run is independent of any lab schedule:
    // coarser choices approach the fine-slicing limit
    let reference = route(256);
    let d32 = route(32).distance(&reference);
    let d64 = route(64).distance(&reference);
    assert!(
        d64 < d32,
        "independent slicing did not converge: {d32} -> {d64}"
    );
}

#[test]
fn direct_route_norm_is_conserved_while_deltas_move() {
    let spec = MovingDeltaSpec::new(
        linear_profile(-1.0, -0.1),
        linear_profile(1.0, 0.1),
        ScalarProfile::constant(1.0),
        ScalarProfile::constant(1.0),
    );
    let grid = SpatialGrid::new(10.0, 641).unwrap();
    let psi = WaveFunction::gaussian(grid, 0.0, 1.0, 0.0).unwrap();
    let run = evolve_bidirectional(
        |tau| Ok(assemble_moving_direct(&spec, &grid, tau)?.into_matrix()),
        &psi,
        0.0,
        1.0,
        64,
        4,
        Sampling::Left,
    )
    .unwrap();
    let drift = run.max_norm_drift(psi.norm());
    assert!(drift <= 1e-10, "norm drift {drift} while deltas move");
}

#[test]
fn transformed_operator_plus_identity_is_nonnegative() {
    // Term-by-term discretization keeps the transformed generator PSD: the
    // 3-point kinetic stencil dominates the squared centred-difference
    // momentum on the shared sine eigenbasis.
    let spec = MovingDeltaSpec::new(
        linear_profile(-1.0, -0.1),
        linear_profile(1.0, 0.1),
        ScalarProfile::constant(1.0),
        ScalarProfile::constant(1.0),
    );
    let grid = SpatialGrid::new(10.0, 129).unwrap();
    for &t in &[0.0, 0.5, 1.0] {
        let a = assemble_l(&spec, &grid, t, 1e-3)
            .unwrap()
            .into_matrix()
            .shifted(1.0);
        let eig = a.eig_dense().unwrap();
        assert!(
            eig.values[0] >= -1e-10 * a.norm_one(),
            "negative eigenvalue {} at t = {t}",
            eig.values[0]
        );
    }
}
