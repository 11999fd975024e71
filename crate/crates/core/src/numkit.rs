//! Minimal complex linear algebra for the evolution engine.
//!
//! Everything here is specialised to the operators the discretization
//! produces: Hermitian tridiagonal matrices with real diagonal and (optionally
//! complex) off-diagonal, applied to complex state vectors. A dense
//! eigendecomposition is provided as an oracle for small dimensions.

use num_complex::Complex64;

use crate::error::{EngineError, Result};

pub type C64 = Complex64;

/// Default relative residual tolerance for tridiagonal solves.
pub const DEFAULT_SOLVE_TOL: f64 = 1e-12;
/// Default relative residual tolerance for the dense eigensolver.
pub const DEFAULT_EIG_TOL: f64 = 1e-10;
/// Dimension cap for the dense eigendecomposition oracle.
pub const EIG_DENSE_CAP: usize = 2048;
/// Pivot magnitudes below this abort the unpivoted tridiagonal LU.
const PIVOT_FLOOR: f64 = 1e-300;

/// Complex state vector with at least one entry and no NaN/Inf.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec {
    data: Vec<C64>,
}

impl ComplexVec {
    pub fn new(data: Vec<C64>) -> Result<Self> {
        if data.is_empty() {
            return Err(EngineError::InvalidSpec("empty vector".into()));
        }
        for (index, v) in data.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(EngineError::NonFinite { index });
            }
        }
        Ok(Self { data })
    }

    /// Builds from real entries.
    pub fn from_real(data: &[f64]) -> Result<Self> {
        Self::new(data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![C64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.data.iter()
    }

    /// Inner product, conjugate-linear in `self`: sum conj(self_k) * other_k.
    pub fn dot(&self, other: &Self) -> C64 {
        assert_eq!(self.len(), other.len(), "inner product length mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Plain Euclidean norm (no grid weight).
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "vector sum length mismatch");
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "vector difference length mismatch");
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Hermitian tridiagonal operator.
///
/// The diagonal is always real. The single stored off-diagonal serves both
/// sides, which makes self-adjointness structural: entry (k, k+1) is
/// `offdiag[k] + i*offdiag_im[k]` and entry (k+1, k) its conjugate. The
/// imaginary channel is only allocated for operators that need it (the
/// transformed-frame generator); everything assembled from real stencils
/// stays in the real-symmetric fast path.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianBanded {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
    offdiag_im: Option<Vec<f64>>,
}

impl HermitianBanded {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        Self::build(diag, offdiag, None)
    }

    /// Hermitian tridiagonal with a complex off-diagonal channel.
    pub fn new_complex(diag: Vec<f64>, offdiag: Vec<f64>, offdiag_im: Vec<f64>) -> Result<Self> {
        if offdiag.len() != offdiag_im.len() {
            return Err(EngineError::InvalidSpec(
                "off-diagonal channels differ in length".into(),
            ));
        }
        Self::build(diag, offdiag, Some(offdiag_im))
    }

    fn build(diag: Vec<f64>, offdiag: Vec<f64>, offdiag_im: Option<Vec<f64>>) -> Result<Self> {
        if diag.is_empty() {
            return Err(EngineError::InvalidSpec("empty diagonal".into()));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(EngineError::InvalidSpec(format!(
                "off-diagonal length {} does not match dim {}",
                offdiag.len(),
                diag.len()
            )));
        }
        for (index, v) in diag.iter().enumerate() {
            if !v.is_finite() {
                return Err(EngineError::NonFinite { index });
            }
        }
        for (index, v) in offdiag.iter().enumerate() {
            if !v.is_finite() {
                return Err(EngineError::NonFinite { index });
            }
        }
        if let Some(im) = &offdiag_im {
            for (index, v) in im.iter().enumerate() {
                if !v.is_finite() {
                    return Err(EngineError::NonFinite { index });
                }
            }
        }
        Ok(Self {
            diag,
            offdiag,
            offdiag_im,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            diag: vec![1.0; dim],
            offdiag: vec![0.0; dim.saturating_sub(1)],
            offdiag_im: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn has_complex_offdiag(&self) -> bool {
        self.offdiag_im.is_some()
    }

    /// Upper off-diagonal entry (k, k+1) as a complex number.
    pub fn off(&self, k: usize) -> C64 {
        let im = self.offdiag_im.as_ref().map_or(0.0, |v| v[k]);
        C64::new(self.offdiag[k], im)
    }

    /// Adds `value` to diagonal entry `k`.
    pub fn add_to_diag(&mut self, k: usize, value: f64) {
        self.diag[k] += value;
    }

    /// Returns A + c*I.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for d in &mut out.diag {
            *d += c;
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|k| {
                let mut s = self.diag[k].abs();
                if k > 0 {
                    s += self.off(k - 1).norm();
                }
                if k + 1 < n {
                    s += self.off(k).norm();
                }
                s
            })
            .fold(0.0_f64, f64::max)
    }

    /// Matrix-vector product A·v.
    pub fn apply(&self, v: &ComplexVec) -> Result<ComplexVec> {
        let n = self.dim();
        if v.len() != n {
            return Err(EngineError::DimensionMismatch {
                op_dim: n,
                vec_len: v.len(),
            });
        }
        let x = v.as_slice();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = x[k] * self.diag[k];
            if k > 0 {
                acc += self.off(k - 1).conj() * x[k - 1];
            }
            if k + 1 < n {
                acc += self.off(k) * x[k + 1];
            }
            out.push(acc);
        }
        ComplexVec::new(out)
    }

    /// Solves (A + z)x = b with the default residual tolerance.
    pub fn solve_shifted(&self, z: C64, b: &ComplexVec) -> Result<ComplexVec> {
        self.solve_shifted_with_tol(z, b, DEFAULT_SOLVE_TOL)
    }

    /// Solves (A + z)x = b.
    ///
    /// Unpivoted tridiagonal LU first; the residual is checked against
    /// `tol * (norm_one(A) + |z|) * norm(x)` and a pivoted dense solve is used
    /// as fallback when the fast path fails or is inaccurate.
    pub fn solve_shifted_with_tol(&self, z: C64, b: &ComplexVec, tol: f64) -> Result<ComplexVec> {
        let n = self.dim();
        if b.len() != n {
            return Err(EngineError::DimensionMismatch {
                op_dim: n,
                vec_len: b.len(),
            });
        }
        let diag: Vec<C64> = self.diag.iter().map(|&d| C64::new(d, 0.0) + z).collect();
        let upper: Vec<C64> = (0..n.saturating_sub(1)).map(|k| self.off(k)).collect();
        let lower: Vec<C64> = upper.iter().map(|c| c.conj()).collect();
        let scale = self.norm_one() + z.norm();
        let x = solve_tridiag(&lower, &diag, &upper, b.as_slice(), scale, tol)?;
        let x = ComplexVec::new(x)?;
        // residual on the original operator form
        let residual = {
            let ax = self.apply(&x)?;
            let mut r2 = 0.0;
            for k in 0..n {
                let r = ax.as_slice()[k] + z * x.as_slice()[k] - b.as_slice()[k];
                r2 += r.norm_sqr();
            }
            r2.sqrt()
        };
        let bound = tol * scale * x.norm().max(f64::MIN_POSITIVE);
        if residual > bound {
            return Err(EngineError::SolveResidual {
                residual,
                tolerance: bound,
            });
        }
        Ok(x)
    }

    /// Real quadratic form <f, A f>, symmetrized through the real part.
    pub fn quadratic_form(&self, f: &ComplexVec) -> Result<f64> {
        let af = self.apply(f)?;
        Ok(f.dot(&af).re)
    }

    /// Dense eigendecomposition oracle: ascending eigenvalues and orthonormal
    /// eigenvectors. Complex off-diagonals are reduced to the real symmetric
    /// case by a diagonal phase similarity.
    pub fn eig_dense(&self) -> Result<Eig> {
        let n = self.dim();
        if n > EIG_DENSE_CAP {
            return Err(EngineError::OracleCapExceeded {
                dim: n,
                cap: EIG_DENSE_CAP,
            });
        }
        // Phase reduction: pick unit u_k so that conj(u_k) c_k u_{k+1} = |c_k|.
        let mut phases = vec![C64::new(1.0, 0.0); n];
        let mut offdiag_abs = vec![0.0; n.saturating_sub(1)];
        for k in 0..n.saturating_sub(1) {
            let c = self.off(k);
            let m = c.norm();
            offdiag_abs[k] = m;
            phases[k + 1] = if m > 0.0 {
                phases[k] * c.conj() / m
            } else {
                phases[k]
            };
        }
        let mut d = self.diag.clone();
        let mut e = offdiag_abs;
        let mut z = vec![vec![0.0; n]; n];
        for (k, row) in z.iter_mut().enumerate() {
            row[k] = 1.0;
        }
        tql2(&mut d, &mut e, &mut z)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        let values: Vec<f64> = order.iter().map(|&j| d[j]).collect();
        let vectors: Vec<ComplexVec> = order
            .iter()
            .map(|&j| {
                ComplexVec::new((0..n).map(|k| phases[k] * z[k][j]).collect())
                    .expect("eigenvector entries are finite")
            })
            .collect();
        Ok(Eig { values, vectors })
    }
}

/// Result of the dense eigendecomposition oracle.
#[derive(Debug, Clone)]
pub struct Eig {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, `vectors[j]` paired with `values[j]`.
    pub vectors: Vec<ComplexVec>,
}

/// Solves a general complex tridiagonal system by unpivoted LU with a
/// residual check, falling back to a pivoted dense solve.
pub fn solve_tridiag(
    lower: &[C64],
    diag: &[C64],
    upper: &[C64],
    b: &[C64],
    scale: f64,
    tol: f64,
) -> Result<Vec<C64>> {
    let n = diag.len();
    match thomas(lower, diag, upper, b) {
        Ok(x) => {
            let residual = tridiag_residual(lower, diag, upper, &x, b);
            let xnorm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if residual <= tol * scale * xnorm.max(f64::MIN_POSITIVE) {
                return Ok(x);
            }
        }
        Err(EngineError::SingularPivot { .. }) => {}
        Err(e) => return Err(e),
    }
    // Pivoted dense fallback.
    let mut dense = vec![vec![C64::new(0.0, 0.0); n]; n];
    for k in 0..n {
        dense[k][k] = diag[k];
        if k + 1 < n {
            dense[k][k + 1] = upper[k];
            dense[k + 1][k] = lower[k];
        }
    }
    let x = dense_solve(dense, b.to_vec())?;
    let residual = tridiag_residual(lower, diag, upper, &x, b);
    let xnorm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let bound = tol * scale * xnorm.max(f64::MIN_POSITIVE);
    if residual > bound {
        return Err(EngineError::SolveResidual {
            residual,
            tolerance: bound,
        });
    }
    Ok(x)
}

fn thomas(lower: &[C64], diag: &[C64], upper: &[C64], b: &[C64]) -> Result<Vec<C64>> {
    let n = diag.len();
    let mut w = vec![C64::new(0.0, 0.0); n.saturating_sub(1)];
    let mut g = vec![C64::new(0.0, 0.0); n];
    let mut denom = diag[0];
    if denom.norm() < PIVOT_FLOOR {
        return Err(EngineError::SingularPivot {
            index: 0,
            magnitude: denom.norm(),
        });
    }
    if n > 1 {
        w[0] = upper[0] / denom;
    }
    g[0] = b[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * w[i - 1];
        if denom.norm() < PIVOT_FLOOR {
            return Err(EngineError::SingularPivot {
                index: i,
                magnitude: denom.norm(),
            });
        }
        if i + 1 < n {
            w[i] = upper[i] / denom;
        }
        g[i] = (b[i] - lower[i - 1] * g[i - 1]) / denom;
    }
    let mut x = g;
    for i in (0..n.saturating_sub(1)).rev() {
        let next = x[i + 1];
        x[i] -= w[i] * next;
    }
    Ok(x)
}

fn tridiag_residual(lower: &[C64], diag: &[C64], upper: &[C64], x: &[C64], b: &[C64]) -> f64 {
    let n = diag.len();
    let mut r2 = 0.0;
    for k in 0..n {
        let mut acc = diag[k] * x[k] - b[k];
        if k > 0 {
            acc += lower[k - 1] * x[k - 1];
        }
        if k + 1 < n {
            acc += upper[k] * x[k + 1];
        }
        r2 += acc.norm_sqr();
    }
    r2.sqrt()
}

/// Dense complex solve with partial pivoting. Consumes the matrix.
pub fn dense_solve(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Result<Vec<C64>> {
    let n = b.len();
    for col in 0..n {
        let (pivot_row, pivot_mag) = (col..n)
            .map(|r| (r, a[r][col].norm()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty column");
        if pivot_mag < PIVOT_FLOOR {
            return Err(EngineError::SingularPivot {
                index: col,
                magnitude: pivot_mag,
            });
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col][col];
        for r in col + 1..n {
            let factor = a[r][col] / pivot;
            if factor.norm() == 0.0 {
                continue;
            }
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= factor * v;
            }
            let bv = b[col];
            b[r] -= factor * bv;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Eigenvalues of a dense real symmetric matrix by cyclic Jacobi sweeps.
/// Used by the generalized-quotient diagnostics at oracle scale.
pub fn sym_dense_eigvals(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.len();
    if n == 0 {
        return Err(EngineError::InvalidSpec("empty matrix".into()));
    }
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v * v))
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut offnorm = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                offnorm += 2.0 * a[i][j] * a[i][j];
            }
        }
        if offnorm.sqrt() <= 1e-14 * scale {
            let mut vals: Vec<f64> = (0..n).map(|k| a[k][k]).collect();
            vals.sort_by(f64::total_cmp);
            return Ok(vals);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(EngineError::EigNoConvergence { index: 0 })
}

/// Implicit-shift QL iteration for a real symmetric tridiagonal matrix with
/// eigenvector accumulation (EISPACK tql2 lineage). `d` holds the diagonal,
/// `e` the off-diagonal (length n-1 used), `z` starts as identity.
fn tql2(d: &mut [f64], e: &mut Vec<f64>, z: &mut [Vec<f64>]) -> Result<()> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    e.push(0.0); // sentinel slot e[n-1]
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(EngineError::EigNoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    e.pop();
    Ok(())
}
