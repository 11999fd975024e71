//! Assembly of the discretized time-dependent operator families.
//!
//! Three families are built here, all as Hermitian tridiagonal operators on a
//! truncated Dirichlet grid:
//!
//! * the static-point family: kinetic term in conservative-flux form
//!   `-(1/2) D^- (1/m) D^+` with harmonic-mean mass at half-nodes, a bounded
//!   potential, and grid deltas `kappa_j(t)/h` at fixed points;
//! * the lab-frame moving-delta family: free kinetic term `-(1/2) d^2/dx^2`
//!   plus two grid deltas following trajectories `x_1(t) < x_2(t)`;
//! * the transformed-frame generator `L(t)` obtained from the moving problem
//!   by the shift/dilation/gauge chain, with kinetic prefactor `1/(2 x(t)^2)`,
//!   first-order terms that make the off-diagonal complex, a confining
//!   `x^2/2`, and rescaled deltas pinned at -1 and +1.

use rand::Rng;

use crate::error::{EngineError, Result};
use crate::numkit::HermitianBanded;

/// Default floor for the relative separation x(t) of the moving pair.
pub const SEPARATION_FLOOR: f64 = 1e-6;
/// Number of random (t, s) pairs used when the Lipschitz constant is estimated.
const LIPSCHITZ_SAMPLES: usize = 1000;

/// Uniform truncated 1D grid with Dirichlet boundary.
///
/// Node k sits at `-L + k h`, k = 0..n-1, with `h = 2L/(n-1)`. State vectors
/// store the n-2 interior nodes only; the boundary nodes carry the Dirichlet
/// condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    half_width: f64,
    n: usize,
}

impl SpatialGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(EngineError::InvalidSpec(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        if n < 8 {
            return Err(EngineError::InvalidSpec(format!(
                "grid needs at least 8 nodes, got {n}"
            )));
        }
        Ok(Self { half_width, n })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n as f64 - 1.0)
    }

    /// Number of interior nodes (the state dimension).
    pub fn interior_len(&self) -> usize {
        self.n - 2
    }

    /// Coordinate of full-grid node k (0 and n-1 are the boundary).
    pub fn node(&self, k: usize) -> f64 {
        -self.half_width + k as f64 * self.h()
    }

    /// Coordinate of interior node i (i = 0 is the first node inside the
    /// left boundary).
    pub fn interior_x(&self, i: usize) -> f64 {
        self.node(i + 1)
    }

    /// Index of the interior node nearest to x.
    pub fn nearest_interior(&self, x: f64) -> Result<usize> {
        let k = ((x + self.half_width) / self.h()).round() as isize;
        if k < 1 || k as usize > self.n - 2 {
            return Err(EngineError::PointNearBoundary {
                x,
                two_h: 2.0 * self.h(),
            });
        }
        Ok(k as usize - 1)
    }

    /// Checks that x keeps at least 2h clearance from both boundaries.
    pub fn check_point_clearance(&self, x: f64) -> Result<()> {
        let two_h = 2.0 * self.h();
        if x.abs() > self.half_width - two_h {
            return Err(EngineError::PointNearBoundary { x, two_h });
        }
        Ok(())
    }

    /// Grid with the spacing halved (same half-width, nodes are a superset).
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            n: 2 * self.n - 1,
        }
    }
}

/// Scalar function of one variable (time or space) from a fixed basis, with
/// analytic derivatives where available and segment slopes for tables.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarProfile {
    Constant(f64),
    /// Piecewise-linear table with strictly increasing knots; evaluation
    /// outside the knot range extrapolates with the boundary segment.
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    /// Sum of basis terms.
    Expression(Vec<BasisTerm>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisTerm {
    /// coeff * t^power
    Poly { coeff: f64, power: u32 },
    /// amp * sin(freq * t + phase)
    Sin { amp: f64, freq: f64, phase: f64 },
    /// amp * cos(freq * t + phase)
    Cos { amp: f64, freq: f64, phase: f64 },
    /// amp * exp(rate * t)
    Exp { amp: f64, rate: f64 },
}

impl BasisTerm {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            BasisTerm::Poly { coeff, power } => coeff * t.powi(power as i32),
            BasisTerm::Sin { amp, freq, phase } => amp * (freq * t + phase).sin(),
            BasisTerm::Cos { amp, freq, phase } => amp * (freq * t + phase).cos(),
            BasisTerm::Exp { amp, rate } => amp * (rate * t).exp(),
        }
    }

    fn deriv(&self, t: f64) -> f64 {
        match *self {
            BasisTerm::Poly { coeff, power } => {
                if power == 0 {
                    0.0
                } else {
                    coeff * power as f64 * t.powi(power as i32 - 1)
                }
            }
            BasisTerm::Sin { amp, freq, phase } => amp * freq * (freq * t + phase).cos(),
            BasisTerm::Cos { amp, freq, phase } => -amp * freq * (freq * t + phase).sin(),
            BasisTerm::Exp { amp, rate } => amp * rate * (rate * t).exp(),
        }
    }
}

impl ScalarProfile {
    pub fn constant(value: f64) -> Self {
        ScalarProfile::Constant(value)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarProfile::Constant(v) => {
                if !v.is_finite() {
                    return Err(EngineError::InvalidProfile("non-finite constant".into()));
                }
            }
            ScalarProfile::PiecewiseLinear { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(EngineError::InvalidProfile(
                        "piecewise table needs >= 2 knots and matching values".into(),
                    ));
                }
                if knots.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(EngineError::InvalidProfile(
                        "piecewise knots must be strictly increasing".into(),
                    ));
                }
                if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
                    return Err(EngineError::InvalidProfile("non-finite table entry".into()));
                }
            }
            ScalarProfile::Expression(terms) => {
                if terms.is_empty() {
                    return Err(EngineError::InvalidProfile("empty expression".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScalarProfile::Constant(v) => *v,
            ScalarProfile::PiecewiseLinear { knots, values } => {
                let seg = pick_segment(knots, t);
                let slope = (values[seg + 1] - values[seg]) / (knots[seg + 1] - knots[seg]);
                values[seg] + slope * (t - knots[seg])
            }
            ScalarProfile::Expression(terms) => terms.iter().map(|b| b.eval(t)).sum(),
        }
    }

    /// Derivative; piecewise tables return the slope of the active segment
    /// (right-segment convention at knots).
    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            ScalarProfile::Constant(_) => 0.0,
            ScalarProfile::PiecewiseLinear { knots, values } => {
                let seg = pick_segment(knots, t);
                (values[seg + 1] - values[seg]) / (knots[seg + 1] - knots[seg])
            }
            ScalarProfile::Expression(terms) => terms.iter().map(|b| b.deriv(t)).sum(),
        }
    }

    /// Supremum over [a, b] by dense sampling (exact for constants).
    pub fn sup_on(&self, a: f64, b: f64, samples: usize) -> f64 {
        match self {
            ScalarProfile::Constant(v) => *v,
            _ => sample_points(a, b, samples)
                .map(|t| self.eval(t))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Infimum over [a, b] by dense sampling (exact for constants).
    pub fn inf_on(&self, a: f64, b: f64, samples: usize) -> f64 {
        match self {
            ScalarProfile::Constant(v) => *v,
            _ => sample_points(a, b, samples)
                .map(|t| self.eval(t))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

fn pick_segment(knots: &[f64], t: f64) -> usize {
    if t <= knots[0] {
        return 0;
    }
    if t >= knots[knots.len() - 1] {
        return knots.len() - 2;
    }
    match knots.binary_search_by(|k| k.total_cmp(&t)) {
        Ok(i) => i.min(knots.len() - 2),
        Err(i) => i - 1,
    }
}

fn sample_points(a: f64, b: f64, samples: usize) -> impl Iterator<Item = f64> {
    let m = samples.max(2);
    (0..m).map(move |i| a + (b - a) * i as f64 / (m as f64 - 1.0))
}

/// Composite Simpson quadrature with panel width at most `max_step`.
/// Signed: integrating from a to b with b < a negates the result.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, max_step: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let span = (b - a).abs();
    let mut panels = (span / max_step.abs().max(f64::MIN_POSITIVE)).ceil() as usize;
    panels = panels.max(2);
    if panels % 2 == 1 {
        panels += 1;
    }
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// How the time-Lipschitz constant of the couplings is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lipschitz {
    /// Declared in the spec.
    Declared(f64),
    /// Estimated by random sampling of difference quotients; flagged in reports.
    Estimate,
}

/// Declarative description of the static-point family: mass and potential
/// profiles over x, fixed interaction points, time-dependent couplings.
#[derive(Debug, Clone)]
pub struct StaticDeltaFamilySpec {
    pub mass: ScalarProfile,
    pub potential: ScalarProfile,
    pub points: Vec<f64>,
    pub couplings: Vec<ScalarProfile>,
    pub lipschitz: Lipschitz,
}

impl StaticDeltaFamilySpec {
    /// Validates profiles, positivity and point placement against a grid and
    /// a time window.
    pub fn validate(&self, grid: &SpatialGrid, window: (f64, f64)) -> Result<()> {
        self.mass.validate()?;
        self.potential.validate()?;
        if self.points.len() != self.couplings.len() {
            return Err(EngineError::InvalidSpec(format!(
                "{} points but {} couplings",
                self.points.len(),
                self.couplings.len()
            )));
        }
        for c in &self.couplings {
            c.validate()?;
        }
        for (i, &xi) in self.points.iter().enumerate() {
            grid.check_point_clearance(xi)?;
            for &xj in &self.points[i + 1..] {
                if xi == xj {
                    return Err(EngineError::InvalidSpec(format!(
                        "duplicate interaction point x = {xi}"
                    )));
                }
            }
        }
        let l = grid.half_width();
        let samples = 4 * grid.n();
        if self.mass.inf_on(-l, l, samples) <= 0.0 {
            return Err(EngineError::InvalidSpec("mass must be positive".into()));
        }
        if self.potential.inf_on(-l, l, samples) < 0.0 {
            return Err(EngineError::InvalidSpec(
                "potential must be non-negative".into(),
            ));
        }
        for c in &self.couplings {
            if c.inf_on(window.0, window.1, 512) < 0.0 {
                return Err(EngineError::InvalidSpec(
                    "couplings must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// sup of m over the truncated domain (dense sampling).
    pub fn sup_mass(&self, grid: &SpatialGrid) -> f64 {
        self.mass
            .sup_on(-grid.half_width(), grid.half_width(), 4 * grid.n())
    }

    /// The Lipschitz constant of t -> sum_j kappa_j(t), either declared or
    /// estimated from random difference quotients over the window.
    pub fn lipschitz_constant<R: Rng>(&self, window: (f64, f64), rng: &mut R) -> (f64, bool) {
        match self.lipschitz {
            Lipschitz::Declared(c) => (c, false),
            Lipschitz::Estimate => {
                let mut best: f64 = 0.0;
                for _ in 0..LIPSCHITZ_SAMPLES {
                    let t = rng.gen_range(window.0..=window.1);
                    let s = rng.gen_range(window.0..=window.1);
                    if (t - s).abs() < 1e-12 {
                        continue;
                    }
                    let total: f64 = self
                        .couplings
                        .iter()
                        .map(|k| (k.eval(t) - k.eval(s)).abs())
                        .sum();
                    best = best.max(total / (t - s).abs());
                }
                (best, true)
            }
        }
    }
}

/// Assembled operator together with any assembly warnings (currently only
/// point-collision notes).
#[derive(Debug, Clone)]
pub struct Assembled {
    pub matrix: HermitianBanded,
    pub warnings: Vec<String>,
}

impl Assembled {
    pub fn into_matrix(self) -> HermitianBanded {
        self.matrix
    }
}

/// Discretizes the static-point operator at time t.
pub fn assemble_static(
    spec: &StaticDeltaFamilySpec,
    grid: &SpatialGrid,
    t: f64,
) -> Result<Assembled> {
    let n = grid.interior_len();
    let h = grid.h();
    let inv_m: Vec<f64> = (0..grid.n())
        .map(|k| {
            let m = spec.mass.eval(grid.node(k));
            if m > 0.0 {
                Ok(1.0 / m)
            } else {
                Err(EngineError::InvalidSpec(format!(
                    "mass {m} <= 0 at x = {}",
                    grid.node(k)
                )))
            }
        })
        .collect::<Result<_>>()?;
    // flux weight (1/(2m)) on the edge between full nodes k and k+1,
    // with 1/m at the half-node taken as the harmonic mean of m
    let w = |k: usize| (inv_m[k] + inv_m[k + 1]) / 4.0;

    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n - 1);
    for i in 0..n {
        let k = i + 1;
        let x = grid.interior_x(i);
        let v = spec.potential.eval(x);
        if v < 0.0 {
            return Err(EngineError::InvalidSpec(format!(
                "potential {v} < 0 at x = {x}"
            )));
        }
        diag.push((w(k - 1) + w(k)) / (h * h) + v);
        if i + 1 < n {
            off.push(-w(k) / (h * h));
        }
    }

    let mut warnings = Vec::new();
    let mut occupied: Vec<Option<usize>> = vec![None; n];
    for (j, (&xj, kappa)) in spec.points.iter().zip(&spec.couplings).enumerate() {
        grid.check_point_clearance(xj)?;
        let kv = kappa.eval(t);
        if kv < 0.0 {
            return Err(EngineError::InvalidSpec(format!(
                "coupling {j} is negative ({kv}) at t = {t}"
            )));
        }
        let node = grid.nearest_interior(xj)?;
        if let Some(prev) = occupied[node] {
            warnings.push(format!(
                "points {prev} and {j} share grid node {node}; couplings summed"
            ));
        } else {
            occupied[node] = Some(j);
        }
        diag[node] += kv / h;
    }

    Ok(Assembled {
        matrix: HermitianBanded::new(diag, off)?,
        warnings,
    })
}

/// Two moving point interactions over the free kinetic term -(1/2) d^2/dx^2.
#[derive(Debug, Clone)]
pub struct MovingDeltaSpec {
    pub x1: ScalarProfile,
    pub x2: ScalarProfile,
    pub kappa1: ScalarProfile,
    pub kappa2: ScalarProfile,
    /// Numerical floor for the relative separation x(t).
    pub separation_floor: f64,
}

impl MovingDeltaSpec {
    pub fn new(
        x1: ScalarProfile,
        x2: ScalarProfile,
        kappa1: ScalarProfile,
        kappa2: ScalarProfile,
    ) -> Self {
        Self {
            x1,
            x2,
            kappa1,
            kappa2,
            separation_floor: SEPARATION_FLOOR,
        }
    }

    /// Centre coordinate y(t) = (x1(t) + x2(t))/2.
    pub fn center(&self, t: f64) -> f64 {
        0.5 * (self.x1.eval(t) + self.x2.eval(t))
    }

    pub fn center_dot(&self, t: f64) -> f64 {
        0.5 * (self.x1.deriv(t) + self.x2.deriv(t))
    }

    /// Relative separation x(t) = (x2(t) - x1(t))/2, positive while the
    /// ordering x1 < x2 holds.
    pub fn separation(&self, t: f64) -> f64 {
        0.5 * (self.x2.eval(t) - self.x1.eval(t))
    }

    pub fn separation_dot(&self, t: f64) -> f64 {
        0.5 * (self.x2.deriv(t) - self.x1.deriv(t))
    }

    /// Checks profiles, the ordering x1(t) < x2(t) and coupling positivity
    /// over the window by dense sampling.
    pub fn validate(&self, window: (f64, f64)) -> Result<()> {
        self.x1.validate()?;
        self.x2.validate()?;
        self.kappa1.validate()?;
        self.kappa2.validate()?;
        for t in sample_points(window.0, window.1, 512) {
            self.separation_checked(t)?;
            if self.kappa1.eval(t) < 0.0 || self.kappa2.eval(t) < 0.0 {
                return Err(EngineError::InvalidSpec(format!(
                    "negative coupling at t = {t}"
                )));
            }
        }
        Ok(())
    }

    fn separation_checked(&self, t: f64) -> Result<f64> {
        let x = self.separation(t);
        if x <= self.separation_floor {
            return Err(EngineError::SeparationFloor {
                t,
                x,
                floor: self.separation_floor,
            });
        }
        Ok(x)
    }
}

/// Discretizes the lab-frame moving-delta operator at time t: free kinetic
/// stencil plus kappa_j(t)/h at the node nearest x_j(t).
pub fn assemble_moving_direct(
    spec: &MovingDeltaSpec,
    grid: &SpatialGrid,
    t: f64,
) -> Result<Assembled> {
    let n = grid.interior_len();
    let h = grid.h();
    let mut diag = vec![1.0 / (h * h); n];
    let off = vec![-0.5 / (h * h); n - 1];

    let mut warnings = Vec::new();
    let mut first_node = None;
    for (xj, kappa) in [
        (spec.x1.eval(t), &spec.kappa1),
        (spec.x2.eval(t), &spec.kappa2),
    ] {
        if grid.check_point_clearance(xj).is_err() {
            return Err(EngineError::TrajectoryOutOfRange { t, x: xj });
        }
        let kv = kappa.eval(t);
        if kv < 0.0 {
            return Err(EngineError::InvalidSpec(format!(
                "negative coupling {kv} at t = {t}"
            )));
        }
        let node = grid.nearest_interior(xj)?;
        if first_node == Some(node) {
            warnings.push(format!(
                "trajectories share grid node {node} at t = {t}; couplings summed"
            ));
        }
        first_node.get_or_insert(node);
        diag[node] += kv / h;
    }

    Ok(Assembled {
        matrix: HermitianBanded::new(diag, off)?,
        warnings,
    })
}

/// The two first-order coefficients of the transformed-frame generator:
/// `beta1 = integral_0^t (xdot^2 + 1) ds - x(t) xdot(t)` and
/// `beta0 = integral_0^t ydot xdot ds - x(t) ydot(t)`.
pub fn beta_coefficients(spec: &MovingDeltaSpec, t: f64, quad_step: f64) -> Result<(f64, f64)> {
    if !(quad_step > 0.0) {
        return Err(EngineError::InvalidSpec(format!(
            "quad_step must be positive, got {quad_step}"
        )));
    }
    let beta1 = simpson(|s| spec.separation_dot(s).powi(2) + 1.0, 0.0, t, quad_step)
        - spec.separation(t) * spec.separation_dot(t);
    let beta0 = simpson(
        |s| spec.center_dot(s) * spec.separation_dot(s),
        0.0,
        t,
        quad_step,
    ) - spec.separation(t) * spec.center_dot(t);
    Ok((beta0, beta1))
}

/// Rescaled couplings of the transformed frame: kappa_j(t) / x(t).
pub fn kappa_scaled(spec: &MovingDeltaSpec, t: f64) -> Result<(f64, f64)> {
    let x = spec.separation_checked(t)?;
    Ok((spec.kappa1.eval(t) / x, spec.kappa2.eval(t) / x))
}

/// Discretizes the transformed-frame generator
/// `L(t) = (P + beta1 X + beta0)^2 / (2 x(t)^2) + X^2/2
///        + kappa1(t)/x(t) delta(x+1) + kappa2(t)/x(t) delta(x-1)`.
///
/// The square expands to `P^2 + beta1 (PX + XP) + 2 beta0 P + beta1^2 X^2 +
/// 2 beta0 beta1 X + beta0^2`. `P^2` takes the 3-point stencil, `P` the
/// centred antisymmetric stencil, and the cross term the symmetrized product
/// of the P stencil with the diagonal coordinate matrix; the result stays
/// tridiagonal with a complex-Hermitian off-diagonal.
pub fn assemble_l(
    spec: &MovingDeltaSpec,
    grid: &SpatialGrid,
    t: f64,
    quad_step: f64,
) -> Result<Assembled> {
    let x = spec.separation_checked(t)?;
    let (beta0, beta1) = beta_coefficients(spec, t, quad_step)?;
    let (varkappa1, varkappa2) = kappa_scaled(spec, t)?;

    grid.check_point_clearance(-1.0)?;
    grid.check_point_clearance(1.0)?;
    let node_minus = grid.nearest_interior(-1.0)?;
    let node_plus = grid.nearest_interior(1.0)?;

    let n = grid.interior_len();
    let h = grid.h();
    let pref = 1.0 / (2.0 * x * x);

    let mut diag = Vec::with_capacity(n);
    let mut off_re = Vec::with_capacity(n - 1);
    let mut off_im = Vec::with_capacity(n - 1);
    for i in 0..n {
        let xi = grid.interior_x(i);
        diag.push(
            pref * (2.0 / (h * h)
                + beta1 * beta1 * xi * xi
                + 2.0 * beta0 * beta1 * xi
                + beta0 * beta0)
                + 0.5 * xi * xi,
        );
        if i + 1 < n {
            let xi1 = grid.interior_x(i + 1);
            off_re.push(pref * (-1.0 / (h * h)));
            off_im.push(pref * (-(beta1 * (xi + xi1) / (2.0 * h) + beta0 / h)));
        }
    }
    diag[node_minus] += varkappa1 / h;
    diag[node_plus] += varkappa2 / h;

    Ok(Assembled {
        matrix: HermitianBanded::new_complex(diag, off_re, off_im)?,
        warnings: Vec::new(),
    })
}

/// Result of the form-growth rate bound: gamma = C_I/2 * max(1, 2 sup m).
#[derive(Debug, Clone, Copy)]
pub struct GammaBound {
    pub gamma: f64,
    pub c_lipschitz: f64,
    pub sup_mass: f64,
    /// True when the Lipschitz constant was estimated by sampling rather
    /// than declared.
    pub lipschitz_estimated: bool,
}

/// Growth-rate constant of the form norms for a static-point family.
pub fn gamma_bound<R: Rng>(
    spec: &StaticDeltaFamilySpec,
    grid: &SpatialGrid,
    window: (f64, f64),
    rng: &mut R,
) -> GammaBound {
    let (c_lipschitz, lipschitz_estimated) = spec.lipschitz_constant(window, rng);
    let sup_mass = spec.sup_mass(grid);
    GammaBound {
        gamma: 0.5 * c_lipschitz * 1.0_f64.max(2.0 * sup_mass),
        c_lipschitz,
        sup_mass,
        lipschitz_estimated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::ComplexVec;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn free_static_spec(mass: f64) -> StaticDeltaFamilySpec {
        StaticDeltaFamilySpec {
            mass: ScalarProfile::constant(mass),
            potential: ScalarProfile::constant(0.0),
            points: vec![],
            couplings: vec![],
            lipschitz: Lipschitz::Declared(0.0),
        }
    }

    fn two_delta_spec() -> StaticDeltaFamilySpec {
        // kappa1(t) = 1 + sin^2(t) = 1.5 - cos(2t)/2, kappa2 = 2
        StaticDeltaFamilySpec {
            mass: ScalarProfile::constant(0.5),
            potential: ScalarProfile::constant(0.0),
            points: vec![-1.0, 1.0],
            couplings: vec![
                ScalarProfile::Expression(vec![
                    BasisTerm::Poly {
                        coeff: 1.5,
                        power: 0,
                    },
                    BasisTerm::Cos {
                        amp: -0.5,
                        freq: 2.0,
                        phase: 0.0,
                    },
                ]),
                ScalarProfile::constant(2.0),
            ],
            lipschitz: Lipschitz::Declared(1.0),
        }
    }

    #[test]
    fn grid_geometry() {
        let grid = SpatialGrid::new(10.0, 11).unwrap();
        assert_relative_eq!(grid.h(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(grid.node(0), -10.0, max_relative = 1e-15);
        assert_relative_eq!(grid.node(10), 10.0, max_relative = 1e-15);
        assert_eq!(grid.interior_len(), 9);
        assert_relative_eq!(grid.interior_x(0), -8.0, max_relative = 1e-15);
        let fine = grid.refined();
        assert_relative_eq!(fine.h(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(fine.node(2), grid.node(1), max_relative = 1e-15);
    }

    #[test]
    fn profile_piecewise_and_expression() {
        let p = ScalarProfile::PiecewiseLinear {
            knots: vec![0.0, 1.0, 3.0],
            values: vec![0.0, 2.0, 2.0],
        };
        p.validate().unwrap();
        assert_relative_eq!(p.eval(0.5), 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.deriv(0.5), 2.0, max_relative = 1e-15);
        assert_relative_eq!(p.eval(2.0), 2.0, max_relative = 1e-15);
        assert_relative_eq!(p.deriv(2.0), 0.0, max_relative = 1e-15);
        // extrapolation uses the boundary segment
        assert_relative_eq!(p.eval(-1.0), -2.0, max_relative = 1e-15);

        let e = ScalarProfile::Expression(vec![
            BasisTerm::Poly {
                coeff: 1.0,
                power: 2,
            },
            BasisTerm::Sin {
                amp: 3.0,
                freq: 2.0,
                phase: 0.0,
            },
        ]);
        assert_relative_eq!(e.eval(1.0), 1.0 + 3.0 * 2.0_f64.sin(), max_relative = 1e-14);
        assert_relative_eq!(
            e.deriv(1.0),
            2.0 + 6.0 * 2.0_f64.cos(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn simpson_is_exact_on_cubics_and_signed() {
        let val = simpson(|t| t * t * t - t, 0.0, 2.0, 0.1);
        assert_relative_eq!(val, 2.0, max_relative = 1e-13);
        let rev = simpson(|t| t * t * t - t, 2.0, 0.0, 0.1);
        assert_relative_eq!(rev, -2.0, max_relative = 1e-13);
        assert_eq!(simpson(|_| 1.0, 1.0, 1.0, 0.1), 0.0);
    }

    #[test]
    fn free_operator_has_exact_stencil() {
        // m = 1/2, V = 0, no deltas: (1/h^2) tridiag(-1, 2, -1)
        let grid = SpatialGrid::new(5.0, 21).unwrap();
        let h = grid.h();
        let a = assemble_static(&free_static_spec(0.5), &grid, 0.0)
            .unwrap()
            .into_matrix();
        for d in a.diag() {
            assert_eq!(*d, 2.0 / (h * h));
        }
        for o in a.offdiag() {
            assert_eq!(*o, -1.0 / (h * h));
        }
    }

    #[test]
    fn delta_adds_kappa_over_h_on_the_node() {
        let grid = SpatialGrid::new(5.0, 21).unwrap();
        let h = grid.h();
        let mut spec = free_static_spec(0.5);
        spec.points = vec![0.0];
        spec.couplings = vec![ScalarProfile::constant(1.0)];
        let free = assemble_static(&free_static_spec(0.5), &grid, 0.0)
            .unwrap()
            .into_matrix();
        let with_delta = assemble_static(&spec, &grid, 0.0).unwrap().into_matrix();
        let node = grid.nearest_interior(0.0).unwrap();
        for i in 0..grid.interior_len() {
            let expect = if i == node {
                free.diag()[i] + 1.0 / h
            } else {
                free.diag()[i]
            };
            assert_eq!(with_delta.diag()[i], expect);
        }
    }

    #[test]
    fn autonomous_spec_is_time_independent() {
        let grid = SpatialGrid::new(5.0, 33).unwrap();
        let mut spec = free_static_spec(1.0);
        spec.points = vec![-1.0, 1.5];
        spec.couplings = vec![ScalarProfile::constant(2.0), ScalarProfile::constant(0.3)];
        let a = assemble_static(&spec, &grid, 0.3).unwrap().into_matrix();
        let b = assemble_static(&spec, &grid, 7.1).unwrap().into_matrix();
        assert_eq!(a, b);
    }

    #[test]
    fn colliding_points_sum_with_warning() {
        let grid = SpatialGrid::new(5.0, 21).unwrap();
        let h = grid.h();
        let mut spec = free_static_spec(0.5);
        // h = 0.5: both points round to the node at 0.0
        spec.points = vec![-0.1, 0.1];
        spec.couplings = vec![ScalarProfile::constant(1.0), ScalarProfile::constant(2.0)];
        let out = assemble_static(&spec, &grid, 0.0).unwrap();
        assert_eq!(out.warnings.len(), 1);
        let node = grid.nearest_interior(0.0).unwrap();
        assert_relative_eq!(
            out.matrix.diag()[node],
            2.0 / (h * h) + 3.0 / h,
            max_relative = 1e-14
        );
    }

    #[test]
    fn point_near_boundary_is_rejected() {
        let grid = SpatialGrid::new(5.0, 21).unwrap();
        let mut spec = free_static_spec(0.5);
        spec.points = vec![4.5];
        spec.couplings = vec![ScalarProfile::constant(1.0)];
        assert!(matches!(
            assemble_static(&spec, &grid, 0.0),
            Err(EngineError::PointNearBoundary { .. })
        ));
    }

    fn frozen_moving_spec() -> MovingDeltaSpec {
        MovingDeltaSpec::new(
            ScalarProfile::constant(-1.0),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(2.0),
            ScalarProfile::constant(0.7),
        )
    }

    #[test]
    fn frozen_trajectories_reduce_to_static_assembly() {
        // the moving family's kinetic term -(1/2) d^2/dx^2 is the m = 1 case
        // of the conservative-flux convention
        let grid = SpatialGrid::new(5.0, 41).unwrap();
        let moving = assemble_moving_direct(&frozen_moving_spec(), &grid, 0.4)
            .unwrap()
            .into_matrix();
        let static_spec = StaticDeltaFamilySpec {
            mass: ScalarProfile::constant(1.0),
            potential: ScalarProfile::constant(0.0),
            points: vec![-1.0, 1.0],
            couplings: vec![ScalarProfile::constant(2.0), ScalarProfile::constant(0.7)],
            lipschitz: Lipschitz::Declared(0.0),
        };
        let fixed = assemble_static(&static_spec, &grid, 0.4)
            .unwrap()
            .into_matrix();
        assert_eq!(moving, fixed);
    }

    #[test]
    fn half_node_crossing_moves_delta_by_one_node() {
        let grid = SpatialGrid::new(5.0, 21).unwrap(); // h = 0.5
        let spec = MovingDeltaSpec::new(
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: -1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: 1.0,
                    power: 1,
                },
            ]),
            ScalarProfile::constant(3.0),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(0.0),
        );
        // x1(t) = -1 + t crosses the half-node at -0.75 between the samples
        let before = assemble_moving_direct(&spec, &grid, 0.2)
            .unwrap()
            .into_matrix();
        let after = assemble_moving_direct(&spec, &grid, 0.3)
            .unwrap()
            .into_matrix();
        let differing: Vec<usize> = (0..grid.interior_len())
            .filter(|&i| before.diag()[i] != after.diag()[i])
            .collect();
        assert_eq!(differing.len(), 2);
        assert_eq!(differing[1], differing[0] + 1);
        assert_eq!(before.offdiag(), after.offdiag());
    }

    #[test]
    fn zero_couplings_give_time_independent_free_operator() {
        let grid = SpatialGrid::new(5.0, 41).unwrap();
        let h = grid.h();
        let spec = MovingDeltaSpec::new(
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: -1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: -0.3,
                    power: 1,
                },
            ]),
            ScalarProfile::constant(2.0),
            ScalarProfile::constant(0.0),
            ScalarProfile::constant(0.0),
        );
        let a = assemble_moving_direct(&spec, &grid, 0.0)
            .unwrap()
            .into_matrix();
        let b = assemble_moving_direct(&spec, &grid, 2.0)
            .unwrap()
            .into_matrix();
        assert_eq!(a, b);
        for d in a.diag() {
            assert_eq!(*d, 1.0 / (h * h));
        }
    }

    #[test]
    fn trajectory_out_of_range_names_time() {
        let grid = SpatialGrid::new(5.0, 21).unwrap();
        let spec = MovingDeltaSpec::new(
            ScalarProfile::constant(-1.0),
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: 1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: 10.0,
                    power: 1,
                },
            ]),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(1.0),
        );
        let err = assemble_moving_direct(&spec, &grid, 1.0).unwrap_err();
        match err {
            EngineError::TrajectoryOutOfRange { t, .. } => assert_eq!(t, 1.0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn beta_at_zero_is_boundary_term_only() {
        let spec = MovingDeltaSpec::new(
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: -1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: -0.2,
                    power: 1,
                },
            ]),
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: 1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: 0.4,
                    power: 1,
                },
            ]),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(1.0),
        );
        let (beta0, beta1) = beta_coefficients(&spec, 0.0, 1e-3).unwrap();
        let x0 = spec.separation(0.0);
        assert_relative_eq!(beta1, -x0 * spec.separation_dot(0.0), max_relative = 1e-13);
        assert_relative_eq!(beta0, -x0 * spec.center_dot(0.0), max_relative = 1e-13);
    }

    #[test]
    fn beta_for_stationary_deltas() {
        let spec = frozen_moving_spec();
        let (beta0, beta1) = beta_coefficients(&spec, 2.5, 1e-3).unwrap();
        assert_relative_eq!(beta1, 2.5, max_relative = 1e-12);
        assert_eq!(beta0, 0.0);
    }

    #[test]
    fn beta_hand_integrated_linear_separation() {
        // x(t) = 1 + 0.1 t, y = 0, t = 1:
        // beta1 = int_0^1 (0.01 + 1) ds - 1.1 * 0.1 = 1.01 - 0.11 = 0.90
        let spec = MovingDeltaSpec::new(
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
        );
        let (beta0, beta1) = beta_coefficients(&spec, 1.0, 1e-3).unwrap();
        assert_relative_eq!(beta1, 0.90, max_relative = 1e-12);
        assert_relative_eq!(beta0, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn kappa_scaled_quotients() {
        let mut spec = frozen_moving_spec();
        spec.kappa1 = ScalarProfile::constant(2.0);
        // x(t) = 1
        assert_relative_eq!(kappa_scaled(&spec, 0.0).unwrap().0, 2.0);
        // x(t) = 2
        spec.x1 = ScalarProfile::constant(-2.0);
        spec.x2 = ScalarProfile::constant(2.0);
        assert_relative_eq!(kappa_scaled(&spec, 0.0).unwrap().0, 1.0);
        // kappa(t) = t, x(t) = 1 + t at t = 1 -> 0.5
        let spec = MovingDeltaSpec::new(
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: -1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: -1.0,
                    power: 1,
                },
            ]),
            ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: 1.0,
                    power: 0,
                },
                BasisTerm::Poly {
                    coeff: 1.0,
                    power: 1,
                },
            ]),
            ScalarProfile::Expression(vec![BasisTerm::Poly {
                coeff: 1.0,
                power: 1,
            }]),
            ScalarProfile::constant(1.0),
        );
        assert_relative_eq!(kappa_scaled(&spec, 1.0).unwrap().0, 0.5);
    }

    #[test]
    fn separation_floor_is_enforced() {
        let spec = MovingDeltaSpec::new(
            ScalarProfile::constant(0.0),
            ScalarProfile::constant(0.0),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(1.0),
        );
        assert!(matches!(
            kappa_scaled(&spec, 0.0),
            Err(EngineError::SeparationFloor { .. })
        ));
    }

    #[test]
    fn transformed_frame_stationary_pair_is_oscillator_plus_deltas() {
        // x = 1, y = 0, t = 0: beta terms vanish, L = P^2/2 + X^2/2 + deltas
        let grid = SpatialGrid::new(10.0, 201).unwrap();
        let h = grid.h();
        let spec = frozen_moving_spec();
        let a = assemble_l(&spec, &grid, 0.0, 1e-3).unwrap().into_matrix();
        assert!(a.has_complex_offdiag());
        let node_minus = grid.nearest_interior(-1.0).unwrap();
        let node_plus = grid.nearest_interior(1.0).unwrap();
        for i in 0..grid.interior_len() {
            let xi = grid.interior_x(i);
            let mut expect = 1.0 / (h * h) + 0.5 * xi * xi;
            if i == node_minus {
                expect += 2.0 / h;
            }
            if i == node_plus {
                expect += 0.7 / h;
            }
            assert_relative_eq!(a.diag()[i], expect, max_relative = 1e-12);
        }
        for k in 0..grid.interior_len() - 1 {
            assert_relative_eq!(a.off(k).re, -0.5 / (h * h), max_relative = 1e-12);
            assert!(a.off(k).im.abs() < 1e-15);
        }
    }

    #[test]
    fn transformed_frame_is_hermitian_under_inner_product() {
        let grid = SpatialGrid::new(10.0, 101).unwrap();
        let spec = MovingDeltaSpec::new(
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
        );
        let a = assemble_l(&spec, &grid, 0.8, 1e-3).unwrap().into_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng as _;
        let n = grid.interior_len();
        let f = ComplexVec::new(
            (0..n)
                .map(|_| {
                    num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
                .collect(),
        )
        .unwrap();
        let g = ComplexVec::new(
            (0..n)
                .map(|_| {
                    num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
                .collect(),
        )
        .unwrap();
        let fg = f.dot(&a.apply(&g).unwrap());
        let gf = g.dot(&a.apply(&f).unwrap());
        assert!((fg - gf.conj()).norm() <= 1e-12 * a.norm_one() * f.norm() * g.norm());
    }

    #[test]
    fn transformed_frame_ground_energy_matches_oscillator() {
        // kappa = 0, stationary unit separation: ground energy of
        // P^2/2 + X^2/2 is 1/2 up to O(h^2) and truncation error.
        let grid = SpatialGrid::new(10.0, 201).unwrap();
        let spec = MovingDeltaSpec::new(
            ScalarProfile::constant(-1.0),
            ScalarProfile::constant(1.0),
            ScalarProfile::constant(0.0),
            ScalarProfile::constant(0.0),
        );
        let a = assemble_l(&spec, &grid, 0.0, 1e-3).unwrap().into_matrix();
        let eig = a.eig_dense().unwrap();
        assert!(
            (eig.values[0] - 0.5).abs() < 5e-3,
            "ground energy {} too far from 0.5",
            eig.values[0]
        );
    }

    #[test]
    fn gamma_bound_formula_cases() {
        let grid = SpatialGrid::new(5.0, 33).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // C = 2, sup m = 1/2 -> gamma = 1
        let mut spec = two_delta_spec();
        spec.lipschitz = Lipschitz::Declared(2.0);
        let g = gamma_bound(&spec, &grid, (0.0, 1.0), &mut rng);
        assert_relative_eq!(g.gamma, 1.0, max_relative = 1e-15);
        // C = 0 (autonomous) -> gamma = 0
        spec.lipschitz = Lipschitz::Declared(0.0);
        assert_eq!(gamma_bound(&spec, &grid, (0.0, 1.0), &mut rng).gamma, 0.0);
        // C = 4, sup m = 3 -> gamma = 12
        spec.lipschitz = Lipschitz::Declared(4.0);
        spec.mass = ScalarProfile::constant(3.0);
        assert_relative_eq!(
            gamma_bound(&spec, &grid, (0.0, 1.0), &mut rng).gamma,
            12.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn lipschitz_estimate_recovers_known_rate() {
        let grid = SpatialGrid::new(5.0, 33).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut spec = two_delta_spec();
        spec.lipschitz = Lipschitz::Estimate;
        // d/dt (1 + sin^2 t) = sin 2t, so C_I = 1 on [0, 1] is approached
        let (c, estimated) = spec.lipschitz_constant((0.0, 2.0), &mut rng);
        assert!(estimated);
        assert!(c <= 1.0 + 1e-9, "estimate {c} above the true rate");
        assert!(c > 0.9, "estimate {c} far below the true rate");
        let _ = grid;
    }

    #[test]
    fn assembled_plus_identity_is_nonnegative() {
        let grid = SpatialGrid::new(8.0, 65).unwrap();
        let spec = two_delta_spec();
        for &t in &[0.0, 0.4, 1.0] {
            let a = assemble_static(&spec, &grid, t).unwrap().into_matrix();
            let shifted = a.shifted(1.0);
            let eig = shifted.eig_dense().unwrap();
            assert!(
                eig.values[0] >= -1e-10 * shifted.norm_one(),
                "negative eigenvalue {} at t = {t}",
                eig.values[0]
            );
        }
    }

    #[test]
    fn quadratic_form_converges_at_second_order() {
        // smooth state, kinetic + potential only: h-weighted form converges
        // at rate ~ h^2 under grid refinement
        let spec = StaticDeltaFamilySpec {
            mass: ScalarProfile::Expression(vec![
                BasisTerm::Poly {
                    coeff: 0.6,
                    power: 0,
                },
                BasisTerm::Cos {
                    amp: 0.1,
                    freq: 0.5,
                    phase: 0.0,
                },
            ]),
            potential: ScalarProfile::Expression(vec![BasisTerm::Exp {
                amp: 0.2,
                rate: 0.05,
            }]),
            points: vec![],
            couplings: vec![],
            lipschitz: Lipschitz::Declared(0.0),
        };
        let f = |x: f64| (-x * x / 2.0).exp();
        let mut forms = Vec::new();
        let mut grid = SpatialGrid::new(8.0, 65).unwrap();
        for _ in 0..3 {
            let a = assemble_static(&spec, &grid, 0.0).unwrap().into_matrix();
            let v = ComplexVec::from_real(
                &(0..grid.interior_len())
                    .map(|i| f(grid.interior_x(i)))
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            forms.push(grid.h() * a.quadratic_form(&v).unwrap());
            grid = grid.refined();
        }
        let ratio = (forms[0] - forms[1]) / (forms[1] - forms[2]);
        assert!(
            (ratio - 4.0).abs() < 0.8,
            "refinement ratio {ratio} not close to second order"
        );
    }

    #[test]
    fn coupling_lipschitz_controls_matrix_difference() {
        let grid = SpatialGrid::new(8.0, 65).unwrap();
        let spec = two_delta_spec();
        let h = grid.h();
        for &(t, s) in &[(0.0, 0.3), (0.2, 0.9), (0.5, 0.6)] {
            let a = assemble_static(&spec, &grid, t).unwrap().into_matrix();
            let b = assemble_static(&spec, &grid, s).unwrap().into_matrix();
            let diff_norm: f64 = (0..grid.interior_len())
                .map(|i| (a.diag()[i] - b.diag()[i]).abs())
                .fold(0.0, f64::max);
            assert!(diff_norm <= 1.0 * (t - s).abs() / h + 1e-12);
        }
    }
}
