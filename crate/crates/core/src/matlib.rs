//! Dense small-matrix kernels.
//!
//! Everything here operates on matrices of at most a few dozen rows: symmetric
//! eigendecomposition by cyclic Jacobi rotations, a one-sided Jacobi SVD,
//! quadratic-form signatures, hyperbolic invariant subspaces through the
//! matrix sign function, and principal angles between subspaces.

use nalgebra::{DMatrix, DVector};

use crate::error::{validation, Error, Result};

/// Absolute tolerance for the symmetry check on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Default rank / intersection tolerance.
pub const RANK_TOL: f64 = 1e-7;

const SIGN_ITER_TOL: f64 = 1e-12;
const SIGN_ITER_MAX: usize = 100;
const JACOBI_MAX_SWEEPS: usize = 100;

/// A real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return validation(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols()));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (m[(i, j)] - m[(j, i)]).abs();
                if !(d <= SYMMETRY_TOL) {
                    return validation(format!(
                        "matrix is not symmetric: |m[{i}][{j}] - m[{j}][{i}]| = {d:.3e}"
                    ));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Symmetric part `(m + mᵀ)/2`, for matrices that are symmetric up to rounding.
    pub fn symmetrize(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrize needs a square matrix");
        SymMatrix((m + m.transpose()) * 0.5)
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return validation("rows must form a square matrix");
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix(&self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    /// Linear combination `self + s * other`.
    pub fn axpy(&self, s: f64, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0 * s)
    }

    /// Congruence `Bᵀ M B`; `B` may be rectangular.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Self {
        Self::symmetrize(&(b.transpose() * &self.0 * b))
    }

    /// Block-diagonal `[[M, 0], [0, M]]`: the real form of the complexified operator.
    pub fn complex_embedding(&self) -> Self {
        let m = self.dim();
        let mut out = DMatrix::zeros(2 * m, 2 * m);
        out.view_mut((0, 0), (m, m)).copy_from(&self.0);
        out.view_mut((m, m), (m, m)).copy_from(&self.0);
        SymMatrix(out)
    }
}

/// Eigenvalues in ascending order with an orthonormal eigenvector frame.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    /// Smallest absolute eigenvalue.
    pub fn min_abs(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    pub fn count_negative(&self) -> usize {
        self.values.iter().filter(|&&v| v < 0.0).count()
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvectors are sign-normalized so that their first component of
/// magnitude above `1e-12` is positive; within a cluster of equal eigenvalues
/// vectors are ordered by the position of that component.
pub fn sym_eig(m: &SymMatrix) -> Spectrum {
    let n = m.dim();
    let mut a = m.0.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    if n == 0 || scale == 0.0 {
        return Spectrum { values: vec![0.0; n], vectors: v };
    }

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, DVector<f64>, usize)> = (0..n)
        .map(|j| {
            let mut col: DVector<f64> = v.column(j).into_owned();
            let lead = col.iter().position(|x| x.abs() > 1e-12).unwrap_or(0);
            if col[lead] < 0.0 {
                col.neg_mut();
            }
            (a[(j, j)], col, lead)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    // order within clusters of numerically equal eigenvalues
    let tie = 1e-12 * (1.0 + scale);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && pairs[end].0 - pairs[end - 1].0 <= tie {
            end += 1;
        }
        pairs[start..end].sort_by_key(|p| p.2);
        start = end;
    }

    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = DMatrix::from_columns(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    Spectrum { values, vectors: if n == 0 { DMatrix::zeros(0, 0) } else { vectors } }
}

/// Inertia of a symmetric quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Signature {
    pub plus: usize,
    pub zero: usize,
    pub minus: usize,
}

impl Signature {
    /// `n_plus - n_minus`.
    pub fn value(&self) -> i64 {
        self.plus as i64 - self.minus as i64
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.zero == 0
    }
}

pub fn signature(q: &SymMatrix, tol: f64) -> Result<Signature> {
    if !(tol > 0.0) {
        return validation(format!("signature tolerance must be positive, got {tol}"));
    }
    let spec = sym_eig(q);
    let mut sig = Signature { plus: 0, zero: 0, minus: 0 };
    for &v in &spec.values {
        if v > tol {
            sig.plus += 1;
        } else if v < -tol {
            sig.minus += 1;
        } else {
            sig.zero += 1;
        }
    }
    Ok(sig)
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ` by one-sided Jacobi
/// rotations, singular values descending. Requires `rows >= cols`.
pub fn svd_jacobi(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    assert!(m >= n, "svd_jacobi needs rows >= cols");
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let up = u[(k, p)];
                    let uq = u[(k, q)];
                    u[(k, p)] = c * up - s * uq;
                    u[(k, q)] = s * up + c * uq;
                }
                for k in 0..n {
                    let vp = v[(k, p)];
                    let vq = v[(k, q)];
                    v[(k, p)] = c * vp - s * vq;
                    v[(k, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (u.column(j).norm(), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0));
    let sigma: Vec<f64> = order.iter().map(|o| o.0).collect();
    let mut uu = DMatrix::zeros(m, n);
    let mut vv = DMatrix::zeros(n, n);
    for (dst, &(s, src)) in order.iter().enumerate() {
        if s > 0.0 {
            uu.set_column(dst, &(u.column(src) / s));
        }
        vv.set_column(dst, &v.column(src));
    }
    (uu, sigma, vv)
}

/// Orthonormal column frame spanning a subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    columns: DMatrix<f64>,
}

impl Frame {
    /// Wraps columns that are already orthonormal to `1e-10`.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let d = columns.ncols();
        let gram = columns.transpose() * &columns;
        let err = (gram - DMatrix::<f64>::identity(d, d)).amax();
        if !(err <= 1e-10) {
            return validation(format!("frame columns are not orthonormal (defect {err:.3e})"));
        }
        Ok(Frame { columns })
    }

    /// Orthonormal basis for the span of `m` (assumed full column rank).
    pub fn orthonormalize(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        if cols == 0 {
            return Ok(Self::empty(rows));
        }
        if cols > rows {
            return validation("more columns than ambient dimension");
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite frame entries".into()));
        }
        let q = m.clone().qr().q();
        Ok(Frame { columns: q.columns(0, cols).into_owned() })
    }

    pub fn from_vectors(vs: &[DVector<f64>]) -> Result<Self> {
        if vs.is_empty() {
            return validation("no vectors given");
        }
        Self::orthonormalize(&DMatrix::from_columns(vs))
    }

    pub fn empty(ambient: usize) -> Self {
        Frame { columns: DMatrix::zeros(ambient, 0) }
    }

    /// Span of the given standard basis vectors.
    pub fn coordinate(ambient: usize, axes: &[usize]) -> Self {
        let mut m = DMatrix::zeros(ambient, axes.len());
        for (j, &i) in axes.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        Frame { columns: m }
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// Orthogonal projector onto the span.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.columns * self.columns.transpose()
    }
}

/// Sines of the principal angles between two subspaces, ascending.
///
/// Small angles are recovered from `‖F1 u - F2 v‖ = 2 sin(θ/2)` on the
/// principal vector pairs, which keeps them accurate well below `1e-8`.
pub fn principal_sines(f1: &Frame, f2: &Frame) -> Vec<f64> {
    principal_pairs(f1, f2).into_iter().map(|p| p.0).collect()
}

fn principal_pairs(f1: &Frame, f2: &Frame) -> Vec<(f64, DVector<f64>, DVector<f64>)> {
    let (d1, d2) = (f1.dim(), f2.dim());
    if d1 == 0 || d2 == 0 {
        return Vec::new();
    }
    let m = f1.columns.transpose() * &f2.columns;
    let (u, sigma, v) = if d1 >= d2 {
        svd_jacobi(&m)
    } else {
        let (u, s, v) = svd_jacobi(&m.transpose());
        (v, s, u)
    };
    let r = d1.min(d2);
    (0..r)
        .map(|i| {
            let x = &f1.columns * u.column(i);
            let y = &f2.columns * v.column(i);
            if sigma[i] <= 1e-300 {
                return (1.0, x, y);
            }
            let h = ((&x - &y).norm() / 2.0).min(1.0);
            let sine = 2.0 * h * (1.0 - h * h).max(0.0).sqrt();
            (sine, x, y)
        })
        .collect()
}

/// Distance between equal-dimensional subspaces: sine of the largest principal angle.
pub fn subspace_distance(f1: &Frame, f2: &Frame) -> f64 {
    assert_eq!(f1.dim(), f2.dim(), "subspace_distance needs equal dimensions");
    principal_sines(f1, f2).into_iter().fold(0.0, f64::max)
}

/// Numerical intersection of two subspaces.
#[derive(Debug, Clone)]
pub struct Intersection {
    pub dim: usize,
    pub basis: Frame,
    /// All principal-angle sines, ascending.
    pub sines: Vec<f64>,
}

/// Intersection of two subspaces: principal directions whose angle has sine at most `tol`.
pub fn intersection(f1: &Frame, f2: &Frame, tol: f64) -> Result<Intersection> {
    if f1.ambient_dim() != f2.ambient_dim() {
        return validation(format!(
            "frames live in different spaces ({} vs {})",
            f1.ambient_dim(),
            f2.ambient_dim()
        ));
    }
    let pairs = principal_pairs(f1, f2);
    let sines: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let close: Vec<DVector<f64>> = pairs
        .into_iter()
        .filter(|p| p.0 <= tol)
        .map(|(_, x, y)| (x + y) * 0.5)
        .collect();
    let basis = if close.is_empty() {
        Frame::empty(f1.ambient_dim())
    } else {
        Frame::from_vectors(&close)?
    };
    Ok(Intersection { dim: close.len(), basis, sines })
}

/// Smallest `|Re μ|` over the eigenvalues of a general real matrix.
pub fn min_real_gap(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().fold(f64::INFINITY, |g, z| g.min(z.re.abs()))
}

fn count_negative_real(m: &DMatrix<f64>) -> usize {
    m.complex_eigenvalues().iter().filter(|z| z.re < 0.0).count()
}

/// Orthonormal frame for the invariant subspace of `m` belonging to
/// eigenvalues with negative real part, via the Newton iteration for the
/// matrix sign function.
pub fn stable_projector(m: &DMatrix<f64>, tol: f64) -> Result<Frame> {
    let n = m.nrows();
    if n != m.ncols() {
        return validation("stable_projector needs a square matrix");
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entries".into()));
    }
    let gap = min_real_gap(m);
    if !(gap > tol) {
        return Err(Error::Hyperbolicity { gap, tol });
    }
    let expected = count_negative_real(m);

    let mut s = m.clone();
    let mut converged = false;
    for _ in 0..SIGN_ITER_MAX {
        let inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular iterate in sign iteration".into()))?;
        let next = (&s + inv) * 0.5;
        let step = (&next - &s).norm();
        s = next;
        if step <= SIGN_ITER_TOL * s.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("sign iteration did not converge in 100 steps".into()));
    }

    // (I - S)/2 is the spectral projector; its range is spanned by the
    // eigenvectors of P Pᵀ with eigenvalue >= 1.
    let p = (DMatrix::<f64>::identity(n, n) - s) * 0.5;
    let spec = sym_eig(&SymMatrix::symmetrize(&(&p * p.transpose())));
    let cols: Vec<DVector<f64>> = spec
        .values
        .iter()
        .zip(spec.vectors.column_iter())
        .filter(|(v, _)| **v > 0.5)
        .map(|(_, c)| c.into_owned())
        .collect();
    if cols.len() != expected {
        return Err(Error::Numerical(format!(
            "projector rank {} does not match {} stable eigenvalues",
            cols.len(),
            expected
        )));
    }
    if cols.is_empty() {
        return Ok(Frame::empty(n));
    }
    Frame::new(DMatrix::from_columns(&cols)).or_else(|_| Frame::from_vectors(&cols))
}

/// Invariant subspace for eigenvalues with positive real part.
pub fn unstable_projector(m: &DMatrix<f64>, tol: f64) -> Result<Frame> {
    stable_projector(&(-m), tol)
}

/// True iff the real embedding of the complexified operator doubles every
/// eigenvalue multiplicity of `m`.
pub fn complexify_eig_check(m: &SymMatrix) -> bool {
    let real = sym_eig(m).values;
    let embedded = sym_eig(&m.complex_embedding()).values;
    let mut doubled: Vec<f64> = real.iter().flat_map(|&v| [v, v]).collect();
    doubled.sort_by(f64::total_cmp);
    let tol = 1e-9 * m.norm().max(1.0);
    embedded.len() == doubled.len()
        && embedded.iter().zip(&doubled).all(|(a, b)| (a - b).abs() <= tol)
}

/// Standard symplectic matrix `[[0, -I], [I, 0]]` on `R^{2n}`.
pub fn symplectic_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// Canonical symplectic form `ω₀(u, v) = ⟨J u, v⟩`.
pub fn omega(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let n = u.len() / 2;
    let mut acc = 0.0;
    for i in 0..n {
        // (J u)_i = -u_{n+i}, (J u)_{n+i} = u_i
        acc += -u[n + i] * v[i] + u[i] * v[n + i];
    }
    acc
}

/// `max |ω₀(f_i, f_j)|` over pairs of frame columns; zero for Lagrangian frames.
pub fn lagrangian_defect(frame: &DMatrix<f64>) -> f64 {
    let d = frame.ncols();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let w = omega(&frame.column(i).into_owned(), &frame.column(j).into_owned());
            worst = worst.max(w.abs());
        }
    }
    worst
}
