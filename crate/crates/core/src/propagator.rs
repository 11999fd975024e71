//! Product-formula propagators with unitary Cayley sub-stepping.
//!
//! A run freezes the operator family on each time slice and applies the
//! Cayley transform `(I + i dt/2 H)^{-1} (I - i dt/2 H)` a fixed number of
//! times per slice. The Cayley factor is exactly unitary for Hermitian H (up
//! to the linear-solve residual), so norm conservation is structural rather
//! than asymptotic. Forward runs sample the family at `s + k w` (left) or
//! `s + (k + 1/2) w` (midpoint); backward runs reuse the same kernel with the
//! time step negated and sample points marching downward.

use num_complex::Complex64;

use crate::error::{EngineError, Result};
use crate::hamiltonians::SpatialGrid;
use crate::numkit::{solve_tridiag, ComplexVec, HermitianBanded, DEFAULT_SOLVE_TOL};

type C64 = Complex64;

/// Complex state on the interior nodes of a grid, with the h-weighted norm
/// convention `|psi|^2 = h * sum |psi_k|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: SpatialGrid,
    values: ComplexVec,
}

impl WaveFunction {
    pub fn new(grid: SpatialGrid, values: ComplexVec) -> Result<Self> {
        if values.len() != grid.interior_len() {
            return Err(EngineError::DimensionMismatch {
                op_dim: grid.interior_len(),
                vec_len: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Normalized Gaussian packet `exp(-(x-c)^2/(4 w^2) + i p x)`.
    pub fn gaussian(grid: SpatialGrid, center: f64, width: f64, momentum: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(EngineError::InvalidSpec(format!(
                "gaussian width must be positive, got {width}"
            )));
        }
        let values = ComplexVec::new(
            (0..grid.interior_len())
                .map(|i| {
                    let x = grid.interior_x(i);
                    let envelope = (-(x - center).powi(2) / (4.0 * width * width)).exp();
                    C64::from_polar(envelope, momentum * x)
                })
                .collect(),
        )?;
        let mut wf = Self { grid, values };
        wf.normalize();
        Ok(wf)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &ComplexVec {
        &self.values
    }

    pub fn into_values(self) -> ComplexVec {
        self.values
    }

    /// h-weighted L2 norm.
    pub fn norm(&self) -> f64 {
        self.grid.h().sqrt() * self.values.norm()
    }

    /// h-weighted inner product, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.values.dot(&other.values) * self.grid.h()
    }

    /// h-weighted L2 distance to another state on the same grid.
    pub fn distance(&self, other: &Self) -> f64 {
        self.grid.h().sqrt() * self.values.sub(&other.values).norm()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.values = self.values.scale(C64::new(1.0 / n, 0.0));
        }
    }

    /// Mass inside the outer `frac` band of the domain on each side.
    pub fn boundary_band_mass(&self, frac: f64) -> f64 {
        let cutoff = self.grid.half_width() * (1.0 - frac);
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            if self.grid.interior_x(i).abs() >= cutoff {
                acc += v.norm_sqr();
            }
        }
        acc * self.grid.h()
    }

    /// Multiplies by a cosine-squared taper over the outer `frac` band and
    /// renormalizes; used to make test states safe near the boundary.
    pub fn damp_boundary(&mut self, frac: f64) {
        let l = self.grid.half_width();
        let cutoff = l * (1.0 - frac);
        let band = l - cutoff;
        let damped = ComplexVec::new(
            self.values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = self.grid.interior_x(i).abs();
                    if x <= cutoff {
                        *v
                    } else {
                        let u = ((x - cutoff) / band).min(1.0);
                        v * (std::f64::consts::FRAC_PI_2 * u).cos().powi(2)
                    }
                })
                .collect(),
        )
        .expect("damping preserves finiteness");
        self.values = damped;
        self.normalize();
    }

    /// Restriction to a coarser grid whose nodes are a subset of this one.
    pub fn restrict_to(&self, coarse: SpatialGrid) -> Result<Self> {
        if coarse.half_width() != self.grid.half_width()
            || (self.grid.n() - 1) % (coarse.n() - 1) != 0
        {
            return Err(EngineError::InvalidSpec(
                "grids do not nest for restriction".into(),
            ));
        }
        let stride = (self.grid.n() - 1) / (coarse.n() - 1);
        let values = ComplexVec::new(
            (0..coarse.interior_len())
                .map(|i| self.values.as_slice()[(i + 1) * stride - 1])
                .collect(),
        )?;
        Self::new(coarse, values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.is_finite()
    }
}

/// Family sampling rule within each slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Sample at the slice start, matching the product-formula factors.
    Left,
    /// Sample at the slice midpoint (accuracy option).
    Midpoint,
}

/// Time-slicing plan for a product-formula run from s to t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductSchedule {
    pub s: f64,
    pub t: f64,
    pub n_slices: usize,
    pub substeps: usize,
    pub sampling: Sampling,
}

impl ProductSchedule {
    pub fn new(
        s: f64,
        t: f64,
        n_slices: usize,
        substeps: usize,
        sampling: Sampling,
    ) -> Result<Self> {
        if n_slices == 0 || substeps == 0 {
            return Err(EngineError::InvalidSchedule(format!(
                "n_slices = {n_slices}, substeps = {substeps}; both must be >= 1"
            )));
        }
        if !s.is_finite() || !t.is_finite() {
            return Err(EngineError::InvalidSchedule("non-finite endpoint".into()));
        }
        Ok(Self {
            s,
            t,
            n_slices,
            substeps,
            sampling,
        })
    }

    /// Signed slice width (t - s)/n.
    pub fn slice_width(&self) -> f64 {
        (self.t - self.s) / self.n_slices as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Per-slice bookkeeping: the frozen sample time and the norm after the slice.
#[derive(Debug, Clone, Copy)]
pub struct SliceRecord {
    pub sample_time: f64,
    pub norm: f64,
}

/// A completed product-formula run applied to one state.
#[derive(Debug, Clone)]
pub struct PropagatorRun {
    pub schedule: ProductSchedule,
    pub direction: Direction,
    pub slices: Vec<SliceRecord>,
    pub final_state: WaveFunction,
}

impl PropagatorRun {
    /// Largest relative norm deviation across the run.
    pub fn max_norm_drift(&self, initial_norm: f64) -> f64 {
        self.slices
            .iter()
            .map(|r| (r.norm - initial_norm).abs() / initial_norm)
            .fold(0.0, f64::max)
    }
}

/// One Cayley (Crank-Nicolson) step `(I + i dt/2 H)^{-1} (I - i dt/2 H) psi`,
/// the unitary rational approximation of `exp(-i dt H)`.
pub fn cayley_step(h_op: &HermitianBanded, psi: &WaveFunction, dt: f64) -> Result<WaveFunction> {
    let n = h_op.dim();
    if psi.values.len() != n {
        return Err(EngineError::DimensionMismatch {
            op_dim: n,
            vec_len: psi.values.len(),
        });
    }
    if dt == 0.0 {
        return Ok(psi.clone());
    }
    let tau = C64::new(0.0, 0.5 * dt);
    let h_psi = h_op.apply(&psi.values)?;
    let rhs: Vec<C64> = psi
        .values
        .iter()
        .zip(h_psi.iter())
        .map(|(p, hp)| p - tau * hp)
        .collect();

    let diag: Vec<C64> = h_op.diag().iter().map(|&d| 1.0 + tau * d).collect();
    let upper: Vec<C64> = (0..n - 1).map(|k| tau * h_op.off(k)).collect();
    let lower: Vec<C64> = (0..n - 1).map(|k| tau * h_op.off(k).conj()).collect();
    let scale = 1.0 + 0.5 * dt.abs() * h_op.norm_one();
    let out = solve_tridiag(&lower, &diag, &upper, &rhs, scale, DEFAULT_SOLVE_TOL)?;
    WaveFunction::new(psi.grid, ComplexVec::new(out)?)
}

fn run_slices<F>(
    family: F,
    psi0: &WaveFunction,
    sample_times: &[f64],
    slice_dt: f64,
    substeps: usize,
) -> Result<(Vec<SliceRecord>, WaveFunction)>
where
    F: Fn(f64) -> Result<HermitianBanded>,
{
    let dt_sub = slice_dt / substeps as f64;
    let mut state = psi0.clone();
    let mut records = Vec::with_capacity(sample_times.len());
    for (slice, &sample_time) in sample_times.iter().enumerate() {
        let frozen = family(sample_time)?;
        for _ in 0..substeps {
            state = cayley_step(&frozen, &state, dt_sub)?;
        }
        if !state.is_finite() {
            return Err(EngineError::NonFiniteState { slice });
        }
        records.push(SliceRecord {
            sample_time,
            norm: state.norm(),
        });
    }
    Ok((records, state))
}

/// Forward product-formula run: freezes the family at
/// `s + k w` (left sampling) or `s + (k+1/2) w` (midpoint) for slices
/// k = 0..n-1 of width `w = (t-s)/n` and applies `substeps` Cayley steps per
/// slice. Requires t > s.
pub fn evolve_forward<F>(
    family: F,
    psi0: &WaveFunction,
    schedule: &ProductSchedule,
) -> Result<PropagatorRun>
where
    F: Fn(f64) -> Result<HermitianBanded>,
{
    if !(schedule.t > schedule.s) {
        return Err(EngineError::InvalidSchedule(format!(
            "forward run needs t > s, got s = {}, t = {}",
            schedule.s, schedule.t
        )));
    }
    let w = schedule.slice_width();
    let offset = match schedule.sampling {
        Sampling::Left => 0.0,
        Sampling::Midpoint => 0.5,
    };
    let samples: Vec<f64> = (0..schedule.n_slices)
        .map(|k| schedule.s + (k as f64 + offset) * w)
        .collect();
    let (slices, final_state) = run_slices(family, psi0, &samples, w, schedule.substeps)?;
    Ok(PropagatorRun {
        schedule: *schedule,
        direction: Direction::Forward,
        slices,
        final_state,
    })
}

/// Backward product-formula run towards an earlier time: the mirror of
/// [`evolve_forward`] with the step negated and samples marching downward
/// from s. Requires t < s.
pub fn evolve_backward<F>(
    family: F,
    psi0: &WaveFunction,
    schedule: &ProductSchedule,
) -> Result<PropagatorRun>
where
    F: Fn(f64) -> Result<HermitianBanded>,
{
    if !(schedule.t < schedule.s) {
        return Err(EngineError::InvalidSchedule(format!(
            "backward run needs t < s, got s = {}, t = {}",
            schedule.s, schedule.t
        )));
    }
    let w = schedule.slice_width(); // negative
    let offset = match schedule.sampling {
        Sampling::Left => 0.0,
        Sampling::Midpoint => 0.5,
    };
    let samples: Vec<f64> = (0..schedule.n_slices)
        .map(|k| schedule.s + (k as f64 + offset) * w)
        .collect();
    let (slices, final_state) = run_slices(family, psi0, &samples, w, schedule.substeps)?;
    Ok(PropagatorRun {
        schedule: *schedule,
        direction: Direction::Backward,
        slices,
        final_state,
    })
}

/// Bidirectional dispatch: forward for t > s, backward for t < s, and the
/// exact identity for t = s.
pub fn evolve_bidirectional<F>(
    family: F,
    psi0: &WaveFunction,
    s: f64,
    t: f64,
    n_slices: usize,
    substeps: usize,
    sampling: Sampling,
) -> Result<PropagatorRun>
where
    F: Fn(f64) -> Result<HermitianBanded>,
{
    if t == s {
        let schedule = ProductSchedule::new(s, t, n_slices.max(1), substeps.max(1), sampling)?;
        return Ok(PropagatorRun {
            schedule,
            direction: Direction::Forward,
            slices: Vec::new(),
            final_state: psi0.clone(),
        });
    }
    let schedule = ProductSchedule::new(s, t, n_slices, substeps, sampling)?;
    if t > s {
        evolve_forward(family, psi0, &schedule)
    } else {
        evolve_backward(family, psi0, &schedule)
    }
}
