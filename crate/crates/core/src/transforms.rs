//! Grid realizations of the shift, dilation and gauge unitaries, and the
//! lab-frame propagator assembled from a transformed-frame run.
//!
//! Sign conventions, fixed once and enforced by round-trip tests:
//!
//! * `shift_apply(psi, tau)(x) = psi(x - tau)`, i.e. the action of
//!   `exp(-i tau P)`;
//! * `dilate_apply(psi, theta)(x) = sqrt(theta) psi(theta x)`, the action of
//!   `exp(i ln(theta) L)` with L the dilation generator;
//! * `gauge_apply(psi, phase, +1)` multiplies by `exp(+i phase(x))`.
//!
//! The full lab-frame chain applies, right to left:
//! shift by -y(s), dilate by x(s), inverse gauge at s, the transformed-frame
//! propagator, gauge at t, dilate by 1/x(t), shift by +y(t).
//!
//! Shifts and dilations resample by 4-point Lagrange interpolation rather
//! than FFT because the domain is Dirichlet-truncated, not periodic; nodes
//! outside the domain read as zero.

use num_complex::Complex64;

use crate::error::{EngineError, Result};
use crate::hamiltonians::{simpson, MovingDeltaSpec};
use crate::numkit::ComplexVec;
use crate::propagator::WaveFunction;

type C64 = Complex64;

/// Relative mass allowed in the outer 10% band of the domain after a
/// resampling transform. Genuine support violations show up at O(1); the
/// broadband junk that grid deltas radiate in evolved states stays near 1e-4
/// at desk scales and must pass.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-3;
/// Width of the boundary band used for the mass check.
pub const BOUNDARY_BAND_FRAC: f64 = 0.1;
/// Allowed dilation factors.
pub const DILATION_MIN: f64 = 1e-3;
pub const DILATION_MAX: f64 = 1e3;

/// Quadratic gauge phase `phase(x) = (a2 x^2 + 2 a1 x + a0) / 2` accumulated
/// up to time t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugePhase {
    pub t: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl GaugePhase {
    pub fn at(&self, x: f64) -> f64 {
        0.5 * (self.a2 * x * x + 2.0 * self.a1 * x + self.a0)
    }

    pub fn is_zero(&self) -> bool {
        self.a2 == 0.0 && self.a1 == 0.0 && self.a0 == 0.0
    }
}

/// Fractional-index resample of the interior values: `out[i] =
/// values(map(i))` by 4-point Lagrange interpolation, with indices within
/// 1e-9 of an integer snapped to the exact node value.
fn resample<F: Fn(usize) -> f64>(psi: &WaveFunction, map: F) -> Vec<C64> {
    let values = psi.values().as_slice();
    let n = values.len() as isize;
    let read = |k: isize| -> C64 {
        if k < 0 || k >= n {
            C64::new(0.0, 0.0)
        } else {
            values[k as usize]
        }
    };
    (0..values.len())
        .map(|i| {
            let q = map(i);
            let r = q.round();
            if (q - r).abs() <= 1e-9 * q.abs().max(1.0) {
                return read(r as isize);
            }
            let base = q.floor();
            let f = q - base;
            let b = base as isize;
            // Lagrange weights on nodes at offsets -1, 0, 1, 2
            let wm1 = -f * (f - 1.0) * (f - 2.0) / 6.0;
            let w0 = (f * f - 1.0) * (f - 2.0) / 2.0;
            let w1 = -f * (f + 1.0) * (f - 2.0) / 2.0;
            let w2 = f * (f * f - 1.0) / 6.0;
            read(b - 1) * wm1 + read(b) * w0 + read(b + 1) * w1 + read(b + 2) * w2
        })
        .collect()
}

fn check_boundary_mass(state: &WaveFunction) -> Result<()> {
    let total = state.norm().powi(2);
    if total == 0.0 {
        return Ok(());
    }
    let band = state.boundary_band_mass(BOUNDARY_BAND_FRAC);
    if band > BOUNDARY_MASS_LIMIT * total {
        return Err(EngineError::BoundaryMass {
            mass: band / total,
            limit: BOUNDARY_MASS_LIMIT,
        });
    }
    Ok(())
}

/// Spatial shift `(psi)(x) -> psi(x - tau)`. Lattice-commensurate shifts are
/// pure index shifts, exact to rounding; general shifts interpolate.
pub fn shift_apply(psi: &WaveFunction, tau: f64) -> Result<WaveFunction> {
    if tau == 0.0 {
        return Ok(psi.clone());
    }
    let s = tau / psi.grid().h();
    let out = resample(psi, |i| i as f64 - s);
    let shifted = WaveFunction::new(*psi.grid(), ComplexVec::new(out)?)?;
    check_boundary_mass(&shifted)?;
    Ok(shifted)
}

/// Dilation `(psi)(x) -> sqrt(theta) psi(theta x)`, unitary on the continuum.
pub fn dilate_apply(psi: &WaveFunction, theta: f64) -> Result<WaveFunction> {
    if !(DILATION_MIN..=DILATION_MAX).contains(&theta) {
        return Err(EngineError::DilationRange {
            theta,
            min: DILATION_MIN,
            max: DILATION_MAX,
        });
    }
    if theta == 1.0 {
        return Ok(psi.clone());
    }
    let grid = *psi.grid();
    let h = grid.h();
    let l = grid.half_width();
    let amp = theta.sqrt();
    let out: Vec<C64> = resample(psi, |i| (theta * grid.interior_x(i) + l) / h - 1.0)
        .into_iter()
        .map(|v| v * amp)
        .collect();
    let dilated = WaveFunction::new(grid, ComplexVec::new(out)?)?;
    check_boundary_mass(&dilated)?;
    Ok(dilated)
}

/// Accumulated gauge coefficients at time t:
/// `a2 = int_0^t (xdot^2 + 1) ds`, `a1 = int_0^t xdot ydot ds`,
/// `a0 = int_0^t ydot^2 ds`, by composite Simpson with step <= quad_step.
pub fn gauge_phase(spec: &MovingDeltaSpec, t: f64, quad_step: f64) -> Result<GaugePhase> {
    if !(quad_step > 0.0) {
        return Err(EngineError::InvalidSpec(format!(
            "quad_step must be positive, got {quad_step}"
        )));
    }
    let a2 = simpson(|s| spec.separation_dot(s).powi(2) + 1.0, 0.0, t, quad_step);
    let a1 = simpson(
        |s| spec.separation_dot(s) * spec.center_dot(s),
        0.0,
        t,
        quad_step,
    );
    let a0 = simpson(|s| spec.center_dot(s).powi(2), 0.0, t, quad_step);
    Ok(GaugePhase { t, a2, a1, a0 })
}

/// Pointwise multiplication by `exp(i sign phase(x))`; norm is preserved
/// exactly.
pub fn gauge_apply(psi: &WaveFunction, phase: &GaugePhase, sign: i8) -> WaveFunction {
    if phase.is_zero() {
        return psi.clone();
    }
    let grid = *psi.grid();
    let out: Vec<C64> = psi
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * C64::from_polar(1.0, f64::from(sign) * phase.at(grid.interior_x(i))))
        .collect();
    WaveFunction::new(
        grid,
        ComplexVec::new(out).expect("unit phases keep entries finite"),
    )
    .expect("gauge preserves dimension")
}

/// Applies the lab-frame propagator to one state by conjugating the supplied
/// transformed-frame action with the shift/dilation/gauge chain.
///
/// `transformed` receives the state already mapped into the transformed frame
/// at time s and must return its evolution to time t under the transformed
/// generator.
pub fn lab_frame_action<F>(
    spec: &MovingDeltaSpec,
    s: f64,
    t: f64,
    quad_step: f64,
    transformed: F,
    psi: &WaveFunction,
) -> Result<WaveFunction>
where
    F: FnOnce(&WaveFunction) -> Result<WaveFunction>,
{
    let x_s = spec.separation(s);
    let x_t = spec.separation(t);
    for (time, x) in [(s, x_s), (t, x_t)] {
        if x <= spec.separation_floor {
            return Err(EngineError::SeparationFloor {
                t: time,
                x,
                floor: spec.separation_floor,
            });
        }
    }
    let phase_s = gauge_phase(spec, s, quad_step)?;
    let phase_t = gauge_phase(spec, t, quad_step)?;

    let mut state = shift_apply(psi, -spec.center(s))?;
    state = dilate_apply(&state, x_s)?;
    state = gauge_apply(&state, &phase_s, -1);
    state = transformed(&state)?;
    state = gauge_apply(&state, &phase_t, 1);
    state = dilate_apply(&state, 1.0 / x_t)?;
    state = shift_apply(&state, spec.center(t))?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{BasisTerm, ScalarProfile, SpatialGrid};
    use approx::assert_relative_eq;

    fn gaussian(grid: SpatialGrid, center: f64, width: f64, momentum: f64) -> WaveFunction {
        WaveFunction::gaussian(grid, center, width, momentum).unwrap()
    }

    #[test]
    fn shift_zero_is_identity() {
        let grid = SpatialGrid::new(10.0, 129).unwrap();
        let psi = gaussian(grid, 0.0, 1.0, 0.5);
        assert_eq!(shift_apply(&psi, 0.0).unwrap(), psi);
    }

    #[test]
    fn lattice_commensurate_shift_is_index_shift() {
        let grid = SpatialGrid::new(8.0, 65).unwrap(); // h = 0.25
        let h = grid.h();
        let psi = gaussian(grid, 0.0, 1.0, 0.0);
        let out = shift_apply(&psi, 3.0 * h).unwrap();
        let n = grid.interior_len();
        for i in 0..n {
            let expect = if i >= 3 {
                psi.values().as_slice()[i - 3]
            } else {
                C64::new(0.0, 0.0)
            };
            assert_eq!(out.values().as_slice()[i], expect);
        }
    }

    #[test]
    fn fractional_shift_matches_analytic_gaussian_and_refines() {
        let width = 1.0;
        let err_at = |grid: SpatialGrid| {
            let tau = 0.3 * grid.h();
            let psi = gaussian(grid, 0.0, width, 0.0);
            let shifted = shift_apply(&psi, tau).unwrap();
            let analytic = gaussian(grid, tau, width, 0.0);
            // same normalization: both unit norm, phases real
            shifted.distance(&analytic)
        };
        let coarse = SpatialGrid::new(10.0, 129).unwrap();
        let e1 = err_at(coarse);
        let e2 = err_at(coarse.refined());
        assert!(e1 < 1e-4, "coarse interpolation error {e1}");
        let order = (e1 / e2).log2();
        assert!(
            order > 2.5,
            "interpolation order {order} below cubic expectation (e1 = {e1}, e2 = {e2})"
        );
    }

    #[test]
    fn shift_round_trip_and_norm() {
        let grid = SpatialGrid::new(10.0, 513).unwrap();
        let psi = gaussian(grid, 0.4, 1.2, 1.0);
        let tau = 0.37;
        let there = shift_apply(&psi, tau).unwrap();
        assert!((there.norm() - psi.norm()).abs() <= 1e-6 * psi.norm());
        let back = shift_apply(&there, -tau).unwrap();
        assert!(back.distance(&psi) <= 2e-6);
    }

    #[test]
    fn shift_into_boundary_is_rejected() {
        let grid = SpatialGrid::new(10.0, 129).unwrap();
        let psi = gaussian(grid, 7.0, 1.0, 0.0);
        assert!(matches!(
            shift_apply(&psi, 2.5),
            Err(EngineError::BoundaryMass { .. })
        ));
    }

    #[test]
    fn dilation_identity_and_bounds() {
        let grid = SpatialGrid::new(10.0, 129).unwrap();
        let psi = gaussian(grid, 0.0, 1.0, 0.3);
        assert_eq!(dilate_apply(&psi, 1.0).unwrap(), psi);
        assert!(matches!(
            dilate_apply(&psi, 5e-4),
            Err(EngineError::DilationRange { .. })
        ));
    }

    #[test]
    fn dilation_matches_analytic_gaussian() {
        let grid = SpatialGrid::new(10.0, 513).unwrap();
        let width = 1.0;
        let theta = 1.3;
        let psi = gaussian(grid, 0.0, width, 0.0);
        let dilated = dilate_apply(&psi, theta).unwrap();
        // sqrt(theta) g(theta x) for g of width w is a gaussian of width
        // w/theta, rescaled; both stay unit-norm in the continuum
        let analytic = gaussian(grid, 0.0, width / theta, 0.0);
        assert!(
            dilated.distance(&analytic) < 1e-5,
            "distance {}",
            dilated.distance(&analytic)
        );
        assert!((dilated.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dilation_group_inverse() {
        let grid = SpatialGrid::new(10.0, 513).unwrap();
        let psi = gaussian(grid, 0.2, 1.1, 0.5);
        let theta = 1.25;
        let round = dilate_apply(&dilate_apply(&psi, theta).unwrap(), 1.0 / theta).unwrap();
        assert!(
            round.distance(&psi) <= 2e-6,
            "round trip {}",
            round.distance(&psi)
        );
    }

    fn moving_spec_linear() -> MovingDeltaSpec {
        // x(t) = 1 + 0.1 t, y(t) = 0
        MovingDeltaSpec::new(
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: -1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: -0.1,
                    power: 1,
                },
            ]),
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: 1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: 0.1,
                    power: 1,
                },
            ]),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(1.0),
        )
    }

    #[test]
    fn gauge_phase_at_zero_time_vanishes() {
        let spec = moving_spec_linear();
        let p = gauge_phase(&spec, 0.0, 1e-3).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn gauge_phase_stationary_trajectories() {
        let spec = MovingDeltaSpec::new(
            ScalarProfile::constant(-1.0),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(1.0),
        );
        let p = gauge_phase(&spec, 2.0, 1e-3).unwrap();
        assert_relative_eq!(p.a2, 2.0, max_relative = 1e-12);
        assert_eq!(p.a1, 0.0);
        assert_eq!(p.a0, 0.0);
    }

    #[test]
    fn gauge_phase_hand_integrated() {
        let spec = moving_spec_linear();
        let p = gauge_phase(&spec, 1.0, 1e-3).unwrap();
        assert_relative_eq!(p.a2, 1.01, max_relative = 1e-12);
        assert!(p.a1.abs() < 1e-14);
        assert!(p.a0.abs() < 1e-14);
    }

    #[test]
    fn gauge_apply_round_trip_is_exact() {
        let grid = SpatialGrid::new(10.0, 129).unwrap();
        let psi = gaussian(grid, 0.0, 1.0, 0.7);
        let phase = GaugePhase {
            t: 1.0,
            a2: 0.8,
            a1: 0.1,
            a0: 0.3,
        };
        let forth = gauge_apply(&psi, &phase, 1);
        assert_eq!(forth.norm(), psi.norm());
        let back = gauge_apply(&forth, &phase, -1);
        assert!(back.distance(&psi) <= 1e-15 * psi.norm().max(1.0) * grid.interior_len() as f64);
    }

    #[test]
    fn gauge_zero_phase_is_identity() {
        let grid = SpatialGrid::new(10.0, 129).unwrap();
        let psi = gaussian(grid, 0.0, 1.0, 0.7);
        let phase = GaugePhase {
            t: 0.0,
            a2: 0.0,
            a1: 0.0,
            a0: 0.0,
        };
        assert_eq!(gauge_apply(&psi, &phase, 1), psi);
    }

    #[test]
    fn lab_frame_chain_at_equal_times_is_near_identity() {
        let grid = SpatialGrid::new(10.0, 513).unwrap();
        let spec = moving_spec_linear();
        let psi = gaussian(grid, 0.0, 1.0, 0.5);
        let out = lab_frame_action(&spec, 0.7, 0.7, 1e-3, |w| Ok(w.clone()), &psi).unwrap();
        assert!(
            out.distance(&psi) <= 1e-4,
            "identity-chain distance {}",
            out.distance(&psi)
        );
    }

    #[test]
    fn lab_frame_chain_preserves_norm() {
        let grid = SpatialGrid::new(10.0, 513).unwrap();
        let spec = moving_spec_linear();
        let psi = gaussian(grid, 0.0, 1.0, 0.5);
        let out = lab_frame_action(&spec, 0.0, 1.0, 1e-3, |w| Ok(w.clone()), &psi).unwrap();
        assert!(
            (out.norm() - psi.norm()).abs() <= 5.0 * 1e-6 * psi.norm(),
            "norm drift {}",
            (out.norm() - psi.norm()).abs()
        );
    }
}
