//! Hamiltonian families `λ ↦ A(λ, t)` over the torus `T^k`.
//!
//! The linear system is `J u' + A(λ, t) u = 0`, i.e. `u' = J A(λ, t) u`.
//! Coordinates on `R^{2n}` are ordered `(q_1..q_n, p_1..p_n)`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::matlib::{min_real_gap, symplectic_j, SymMatrix};

/// Step of the central difference used when no analytic parameter derivative exists.
pub const DERIVATIVE_STEP: f64 = 1e-5;

/// A point of `T^k`, angles normalized to `(-π, π]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    /// Wraps arbitrary real angles onto the torus.
    pub fn new(angles: &[f64]) -> Self {
        TorusPoint(angles.iter().map(|&a| wrap_angle(a)).collect())
    }

    /// Like [`TorusPoint::new`] but rejects angles outside `[-π, π]`.
    pub fn checked(angles: &[f64]) -> Result<Self> {
        if let Some(a) = angles.iter().find(|a| !(a.abs() <= PI + 1e-12)) {
            return validation(format!("angle {a} outside [-pi, pi]"));
        }
        Ok(Self::new(angles))
    }

    pub fn zero(k: usize) -> Self {
        TorusPoint(vec![0.0; k])
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn angle_sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a:.6}")?;
        }
        write!(f, ")")
    }
}

/// Piecewise-linear path in the universal cover of `T^k`, parametrized by knots.
///
/// Positions are stored unwrapped so that a coordinate loop from `-π` to `π`
/// is a genuine closed loop rather than a constant path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusPath {
    knots: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl TorusPath {
    pub fn new(knots: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != points.len() {
            return validation("a torus path needs matching knots and points, at least two");
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return validation("path knots must be strictly increasing");
        }
        let k = points[0].len();
        if k == 0 || points.iter().any(|p| p.len() != k || p.iter().any(|a| !a.is_finite())) {
            return validation("path points must be finite and of equal dimension");
        }
        Ok(TorusPath { knots, points })
    }

    /// Waypoints joined by shortest arcs, parametrized by waypoint index.
    pub fn from_waypoints(waypoints: &[Vec<f64>]) -> Result<Self> {
        if waypoints.len() < 2 {
            return validation("need at least two waypoints");
        }
        let mut points = vec![waypoints[0].clone()];
        for w in waypoints.windows(2) {
            if w[1].len() != w[0].len() {
                return validation("waypoints differ in dimension");
            }
            let prev = points.last().expect("non-empty").clone();
            points.push(prev.iter().zip(w[0].iter().zip(&w[1])).map(|(p, (a, b))| p + wrap_angle(b - a)).collect());
        }
        Self::new((0..waypoints.len()).map(|i| i as f64).collect(), points)
    }

    /// Loop in which angle `axis` runs over `[-π + shift, π + shift]` and the
    /// other angles stay at `base`; the parameter is the running angle.
    pub fn coordinate_loop(base: &TorusPoint, axis: usize, shift: f64) -> Self {
        let start = -PI + shift;
        let end = PI + shift;
        let mut p0 = base.angles().to_vec();
        let mut p1 = p0.clone();
        p0[axis] = start;
        p1[axis] = end;
        TorusPath { knots: vec![start, end], points: vec![p0, p1] }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn torus_dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn segment(&self, s: f64) -> usize {
        let last = self.knots.len() - 2;
        match self.knots.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }

    /// Unwrapped angles at parameter `s`.
    pub fn position(&self, s: f64) -> Vec<f64> {
        let i = self.segment(s);
        let (k0, k1) = (self.knots[i], self.knots[i + 1]);
        let w = (s - k0) / (k1 - k0);
        self.points[i].iter().zip(&self.points[i + 1]).map(|(a, b)| a + w * (b - a)).collect()
    }

    pub fn point(&self, s: f64) -> TorusPoint {
        TorusPoint::new(&self.position(s))
    }

    /// `dγ/ds`; the right derivative at interior knots.
    pub fn velocity(&self, s: f64) -> Vec<f64> {
        let i = self.segment(s);
        let dk = self.knots[i + 1] - self.knots[i];
        self.points[i].iter().zip(&self.points[i + 1]).map(|(a, b)| (b - a) / dk).collect()
    }

    /// Same geometric path traversed backwards on the same parameter interval.
    pub fn reversed(&self) -> Self {
        let (a, b) = self.domain();
        let knots = self.knots.iter().rev().map(|k| a + b - k).collect();
        let points = self.points.iter().rev().cloned().collect();
        TorusPath { knots, points }
    }

    /// Reparametrization: knots spread uniformly over the same domain, placed
    /// at the positions `γ(params[i])`. `params` must increase from `a` to `b`.
    pub fn regridded(&self, params: &[f64]) -> Result<Self> {
        let (a, b) = self.domain();
        if params.len() < 2 || params[0] != a || params[params.len() - 1] != b {
            return validation("regrid parameters must start at a and end at b");
        }
        if params.windows(2).any(|w| !(w[1] > w[0])) {
            return validation("regrid parameters must increase");
        }
        let m = params.len() - 1;
        let knots = (0..=m).map(|i| if i == m { b } else { a + (b - a) * i as f64 / m as f64 }).collect();
        Self::new(knots, params.iter().map(|&p| self.position(p)).collect())
    }
}

/// Maps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `S_θ = [[cos θ, sin θ], [sin θ, -cos θ]]`: symmetric, trace 0, determinant -1.
pub fn s_theta(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
}

/// Entrywise θ-derivative of [`s_theta`].
pub fn s_theta_prime(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[-s, c, c, s])
}

/// Growth data `(p, C, g)` of the nonlinearity; stored and reported, never evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthMeta {
    pub p: f64,
    pub c: f64,
    pub g: String,
}

/// A continuous family of symmetric coefficient matrices with hyperbolic asymptotics.
pub trait HamiltonianFamily: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Half-dimension `n`; states live in `R^{2n}`.
    fn half_dim(&self) -> usize;

    /// Torus dimension `k`.
    fn torus_dim(&self) -> usize;

    fn coefficient(&self, lambda: &TorusPoint, t: f64) -> SymMatrix;

    /// Directional derivative `Σ_j dir_j ∂A/∂Θ_j` at `(λ, t)`.
    fn parameter_derivative(&self, lambda: &TorusPoint, direction: &[f64], t: f64) -> SymMatrix {
        let shifted = |sign: f64| {
            let angles: Vec<f64> = lambda
                .angles()
                .iter()
                .zip(direction)
                .map(|(a, d)| a + sign * DERIVATIVE_STEP * d)
                .collect();
            self.coefficient(&TorusPoint::new(&angles), t)
        };
        shifted(1.0)
            .axpy(-1.0, &shifted(-1.0))
            .scale(1.0 / (2.0 * DERIVATIVE_STEP))
    }

    /// Limit of `A(λ, t)` as `t → +∞`.
    fn asymptote_plus(&self, lambda: &TorusPoint) -> SymMatrix;

    /// Limit of `A(λ, t)` as `t → -∞`.
    fn asymptote_minus(&self, lambda: &TorusPoint) -> SymMatrix;

    /// Times where `A` is not differentiable in `t`; integrators step onto them.
    fn breakpoints(&self) -> &[f64] {
        &[]
    }

    /// Bound on `‖A(λ, ±T) - A_±(λ)‖`.
    fn decay_bound(&self, horizon: f64) -> f64;

    fn growth_meta(&self) -> Option<&GrowthMeta> {
        None
    }

    /// `J A(λ, t)`, the generator of the flow.
    fn generator(&self, lambda: &TorusPoint, t: f64) -> DMatrix<f64> {
        symplectic_j(self.half_dim()) * self.coefficient(lambda, t).as_matrix()
    }
}

/// `A = (arctan t) J S_{Θ_1+...+Θ_k}` for `t >= 0` and `(arctan t) J S_0` for `t < 0`.
#[derive(Debug, Clone)]
pub struct ExampleFamily {
    k: usize,
    growth: Option<GrowthMeta>,
}

const BREAK_AT_ZERO: [f64; 1] = [0.0];

fn j2() -> DMatrix<f64> {
    symplectic_j(1)
}

fn j_times(m: DMatrix<f64>) -> SymMatrix {
    // J S is symmetric whenever S is symmetric and traceless in 2D
    SymMatrix::symmetrize(&(j2() * m))
}

impl HamiltonianFamily for ExampleFamily {
    fn name(&self) -> &str {
        "example"
    }

    fn half_dim(&self) -> usize {
        1
    }

    fn torus_dim(&self) -> usize {
        self.k
    }

    fn coefficient(&self, lambda: &TorusPoint, t: f64) -> SymMatrix {
        let theta = if t >= 0.0 { lambda.angle_sum() } else { 0.0 };
        j_times(s_theta(theta)).scale(t.atan())
    }

    // J A = -(arctan t) S_θ, built directly: this sits in the integrator's inner loop.
    fn generator(&self, lambda: &TorusPoint, t: f64) -> DMatrix<f64> {
        let theta = if t >= 0.0 { lambda.angle_sum() } else { 0.0 };
        s_theta(theta) * -t.atan()
    }

    fn parameter_derivative(&self, lambda: &TorusPoint, direction: &[f64], t: f64) -> SymMatrix {
        if t < 0.0 {
            return SymMatrix::zeros(2);
        }
        let rate: f64 = direction.iter().sum();
        j_times(s_theta_prime(lambda.angle_sum())).scale(t.atan() * rate)
    }

    fn asymptote_plus(&self, lambda: &TorusPoint) -> SymMatrix {
        j_times(s_theta(lambda.angle_sum())).scale(PI / 2.0)
    }

    fn asymptote_minus(&self, _lambda: &TorusPoint) -> SymMatrix {
        j_times(s_theta(0.0)).scale(-PI / 2.0)
    }

    fn breakpoints(&self) -> &[f64] {
        &BREAK_AT_ZERO
    }

    fn decay_bound(&self, horizon: f64) -> f64 {
        2.0 / horizon
    }

    fn growth_meta(&self) -> Option<&GrowthMeta> {
        self.growth.as_ref()
    }
}

pub fn example_family(k: usize) -> Result<ExampleFamily> {
    if k == 0 {
        return validation("example family needs k >= 1");
    }
    Ok(ExampleFamily { k, growth: None })
}

/// Constant family `A₀ = [[0, 1], [1, 0]]` with `J A₀ = diag(-1, 1)`.
#[derive(Debug, Clone)]
pub struct CompactControlFamily {
    k: usize,
}

impl CompactControlFamily {
    fn a0() -> SymMatrix {
        SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).expect("constant is symmetric")
    }
}

impl HamiltonianFamily for CompactControlFamily {
    fn name(&self) -> &str {
        "compact-control"
    }

    fn half_dim(&self) -> usize {
        1
    }

    fn torus_dim(&self) -> usize {
        self.k
    }

    fn coefficient(&self, _lambda: &TorusPoint, _t: f64) -> SymMatrix {
        Self::a0()
    }

    fn parameter_derivative(&self, _lambda: &TorusPoint, _direction: &[f64], _t: f64) -> SymMatrix {
        SymMatrix::zeros(2)
    }

    fn asymptote_plus(&self, _lambda: &TorusPoint) -> SymMatrix {
        Self::a0()
    }

    fn asymptote_minus(&self, _lambda: &TorusPoint) -> SymMatrix {
        Self::a0()
    }

    fn decay_bound(&self, _horizon: f64) -> f64 {
        0.0
    }
}

pub fn compact_control_family(k: usize) -> Result<CompactControlFamily> {
    if k == 0 {
        return validation("compact-control family needs k >= 1");
    }
    Ok(CompactControlFamily { k })
}

// ---------------------------------------------------------------------------
// Declarative families

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Example,
    CompactControl,
    Composed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `arctan t`, limits `±π/2`.
    Arctan,
    /// `tanh t`, limits `±1`.
    Tanh,
    /// `1`.
    Constant,
}

impl Profile {
    fn eval(self, t: f64) -> f64 {
        match self {
            Profile::Arctan => t.atan(),
            Profile::Tanh => t.tanh(),
            Profile::Constant => 1.0,
        }
    }

    fn limit(self, sign: f64) -> f64 {
        match self {
            Profile::Arctan => sign * PI / 2.0,
            Profile::Tanh => sign,
            Profile::Constant => 1.0,
        }
    }

    /// Bound on `|profile(±T) - limit|`.
    fn tail(self, horizon: f64) -> f64 {
        match self {
            Profile::Arctan => 1.0 / horizon,
            Profile::Tanh => 2.0 * (-2.0 * horizon).exp(),
            Profile::Constant => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    #[default]
    All,
    /// `t >= 0` only.
    Positive,
    /// `t < 0` only.
    Negative,
}

impl Support {
    fn contains(self, t: f64) -> bool {
        match self {
            Support::All => true,
            Support::Positive => t >= 0.0,
            Support::Negative => t < 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TermMatrix {
    /// `J S_θ` placed in the symplectic plane `(q_plane, p_plane)`,
    /// with `θ = offset + Σ_j weights_j Θ_j`.
    JSTheta {
        weights: Vec<f64>,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        plane: usize,
    },
    /// A fixed symmetric `2n × 2n` matrix.
    Constant { entries: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub profile: Profile,
    #[serde(default)]
    pub support: Support,
    #[serde(default = "one")]
    pub scale: f64,
    pub matrix: TermMatrix,
}

fn one() -> f64 {
    1.0
}

/// Family description as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthMeta>,
}

impl FamilyConfig {
    pub fn builtin(kind: FamilyKind, k: usize) -> Self {
        FamilyConfig { kind, k, n: None, terms: Vec::new(), growth: None }
    }

    /// Validates and fills defaults (`n`) so that the config round-trips to the same family.
    pub fn normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        match self.kind {
            FamilyKind::Example | FamilyKind::CompactControl => {
                if !self.terms.is_empty() {
                    return validation("terms are only allowed for kind = \"composed\"");
                }
                if self.n.is_some_and(|n| n != 1) {
                    return validation("built-in families have n = 1");
                }
                out.n = Some(1);
            }
            FamilyKind::Composed => {
                if self.n.is_none() {
                    return validation("composed family needs n");
                }
                ComposedFamily::new(self.k, self.n.unwrap_or(0), self.terms.clone(), None)?;
            }
        }
        if self.k == 0 {
            return validation("k must be >= 1");
        }
        if let Some(g) = &self.growth {
            if !(g.p > 0.0) || !(g.c >= 0.0) {
                return validation("growth metadata needs p > 0 and C >= 0");
            }
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<Box<dyn HamiltonianFamily>> {
        let cfg = self.normalized()?;
        Ok(match cfg.kind {
            FamilyKind::Example => {
                let mut f = example_family(cfg.k)?;
                f.growth = cfg.growth;
                Box::new(f)
            }
            FamilyKind::CompactControl => Box::new(compact_control_family(cfg.k)?),
            FamilyKind::Composed => Box::new(ComposedFamily::new(
                cfg.k,
                cfg.n.unwrap_or(1),
                cfg.terms,
                cfg.growth,
            )?),
        })
    }
}

/// Family assembled from profile-weighted matrix terms:
/// `A(λ, t) = Σ scale · profile(t) · M(λ)` over the terms whose support contains `t`.
#[derive(Debug, Clone)]
pub struct ComposedFamily {
    k: usize,
    n: usize,
    terms: Vec<TermConfig>,
    constants: Vec<Option<SymMatrix>>,
    breakpoints: Vec<f64>,
    growth: Option<GrowthMeta>,
}

impl ComposedFamily {
    pub fn new(k: usize, n: usize, terms: Vec<TermConfig>, growth: Option<GrowthMeta>) -> Result<Self> {
        if k == 0 || n == 0 {
            return validation("composed family needs k >= 1 and n >= 1");
        }
        if terms.is_empty() {
            return validation("composed family needs at least one term");
        }
        let mut constants = Vec::with_capacity(terms.len());
        for (i, term) in terms.iter().enumerate() {
            if !term.scale.is_finite() {
                return validation(format!("term {i}: scale must be finite"));
            }
            match &term.matrix {
                TermMatrix::JSTheta { weights, offset, plane } => {
                    if weights.len() != k {
                        return validation(format!("term {i}: expected {k} weights, got {}", weights.len()));
                    }
                    if *plane >= n {
                        return validation(format!("term {i}: plane {plane} out of range for n = {n}"));
                    }
                    if !offset.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                        return validation(format!("term {i}: non-finite angle data"));
                    }
                    constants.push(None);
                }
                TermMatrix::Constant { entries } => {
                    if entries.len() != 2 * n {
                        return validation(format!("term {i}: constant matrix must be {0}x{0}", 2 * n));
                    }
                    let m = SymMatrix::from_rows(entries)
                        .map_err(|e| crate::Error::Validation(format!("term {i}: {e}")))?;
                    constants.push(Some(m));
                }
            }
        }
        let breakpoints = if terms.iter().any(|t| t.support != Support::All) {
            vec![0.0]
        } else {
            Vec::new()
        };
        Ok(ComposedFamily { k, n, terms, constants, breakpoints, growth })
    }

    fn angle(weights: &[f64], offset: f64, lambda: &TorusPoint) -> f64 {
        offset + weights.iter().zip(lambda.angles()).map(|(w, a)| w * a).sum::<f64>()
    }

    fn plane_block(&self, plane: usize, block: DMatrix<f64>) -> SymMatrix {
        let mut m = DMatrix::zeros(2 * self.n, 2 * self.n);
        let idx = [plane, self.n + plane];
        for r in 0..2 {
            for c in 0..2 {
                m[(idx[r], idx[c])] = block[(r, c)];
            }
        }
        SymMatrix::symmetrize(&m)
    }

    fn term_matrix(&self, i: usize, lambda: &TorusPoint) -> SymMatrix {
        match (&self.terms[i].matrix, &self.constants[i]) {
            (_, Some(c)) => c.clone(),
            (TermMatrix::JSTheta { weights, offset, plane }, None) => {
                self.plane_block(*plane, j2() * s_theta(Self::angle(weights, *offset, lambda)))
            }
            (TermMatrix::Constant { .. }, None) => unreachable!("constants are prebuilt"),
        }
    }

    fn limit(&self, lambda: &TorusPoint, sign: f64) -> SymMatrix {
        let probe = sign;
        let mut acc = SymMatrix::zeros(2 * self.n);
        for (i, term) in self.terms.iter().enumerate() {
            if term.support.contains(probe) {
                acc = acc.axpy(term.scale * term.profile.limit(sign), &self.term_matrix(i, lambda));
            }
        }
        acc
    }
}

impl HamiltonianFamily for ComposedFamily {
    fn name(&self) -> &str {
        "composed"
    }

    fn half_dim(&self) -> usize {
        self.n
    }

    fn torus_dim(&self) -> usize {
        self.k
    }

    fn coefficient(&self, lambda: &TorusPoint, t: f64) -> SymMatrix {
        let mut acc = SymMatrix::zeros(2 * self.n);
        for (i, term) in self.terms.iter().enumerate() {
            if term.support.contains(t) {
                acc = acc.axpy(term.scale * term.profile.eval(t), &self.term_matrix(i, lambda));
            }
        }
        acc
    }

    fn parameter_derivative(&self, lambda: &TorusPoint, direction: &[f64], t: f64) -> SymMatrix {
        let mut acc = SymMatrix::zeros(2 * self.n);
        for term in &self.terms {
            if !term.support.contains(t) {
                continue;
            }
            if let TermMatrix::JSTheta { weights, offset, plane } = &term.matrix {
                let rate: f64 = weights.iter().zip(direction).map(|(w, d)| w * d).sum();
                let theta = Self::angle(weights, *offset, lambda);
                let block = self.plane_block(*plane, j2() * s_theta_prime(theta));
                acc = acc.axpy(term.scale * term.profile.eval(t) * rate, &block);
            }
        }
        acc
    }

    fn asymptote_plus(&self, lambda: &TorusPoint) -> SymMatrix {
        self.limit(lambda, 1.0)
    }

    fn asymptote_minus(&self, lambda: &TorusPoint) -> SymMatrix {
        self.limit(lambda, -1.0)
    }

    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn decay_bound(&self, horizon: f64) -> f64 {
        let probe = TorusPoint::zero(self.k);
        self.terms
            .iter()
            .enumerate()
            .map(|(i, term)| term.scale.abs() * term.profile.tail(horizon) * self.term_matrix(i, &probe).norm())
            .sum()
    }

    fn growth_meta(&self) -> Option<&GrowthMeta> {
        self.growth.as_ref()
    }
}

/// Result of [`check_hyperbolic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperbolicCheck {
    pub ok: bool,
    pub min_real_gap: f64,
}

/// Both asymptotic generators `J A_±(λ)` must keep their spectrum off the imaginary axis.
pub fn check_hyperbolic(family: &dyn HamiltonianFamily, lambda: &TorusPoint, tol: f64) -> HyperbolicCheck {
    let j = symplectic_j(family.half_dim());
    let plus = min_real_gap(&(&j * family.asymptote_plus(lambda).as_matrix()));
    let minus = min_real_gap(&(&j * family.asymptote_minus(lambda).as_matrix()));
    let gap = plus.min(minus);
    HyperbolicCheck { ok: gap > tol, min_real_gap: gap }
}

/// Sampled conformance checks of a family against its declared structure.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyValidation {
    pub samples: usize,
    pub max_asymmetry: f64,
    /// `(T, observed, bound)` for the asymptotic decay at `T ∈ {50, 100}`.
    pub decay: Vec<(f64, f64, f64)>,
    pub min_hyperbolic_gap: f64,
    pub ok: bool,
}

/// Checks symmetry, decay towards `A_±` and hyperbolicity on a deterministic
/// grid of `per_axis^k` parameter points (capped at 4096).
pub fn validate_family(family: &dyn HamiltonianFamily, per_axis: usize) -> FamilyValidation {
    let k = family.torus_dim();
    let per_axis = per_axis.max(1);
    let total = per_axis.saturating_pow(k as u32).min(4096);
    let times = [-7.5, -1.0, -0.25, 0.0, 0.3, 2.0, 11.0];
    let mut max_asym: f64 = 0.0;
    let mut decay = vec![(50.0, 0.0f64, family.decay_bound(50.0)), (100.0, 0.0f64, family.decay_bound(100.0))];
    let mut min_gap = f64::INFINITY;
    for idx in 0..total {
        let mut rem = idx;
        let angles: Vec<f64> = (0..k)
            .map(|_| {
                let i = rem % per_axis;
                rem /= per_axis;
                -PI + (i as f64 + 0.5) * 2.0 * PI / per_axis as f64
            })
            .collect();
        let lambda = TorusPoint::new(&angles);
        for &t in &times {
            let a = family.coefficient(&lambda, t).into_inner();
            max_asym = max_asym.max((&a - a.transpose()).amax());
        }
        for d in decay.iter_mut() {
            let horizon = d.0;
            let plus = (family.coefficient(&lambda, horizon).into_inner() - family.asymptote_plus(&lambda).into_inner()).norm();
            let minus = (family.coefficient(&lambda, -horizon).into_inner() - family.asymptote_minus(&lambda).into_inner()).norm();
            d.1 = d.1.max(plus).max(minus);
        }
        min_gap = min_gap.min(check_hyperbolic(family, &lambda, 0.0).min_real_gap);
    }
    let ok = max_asym <= crate::matlib::SYMMETRY_TOL
        && decay.iter().all(|d| d.1 <= d.2 + 1e-12)
        && min_gap > 1e-8;
    FamilyValidation { samples: total, max_asymmetry: max_asym, decay, min_hyperbolic_gap: min_gap, ok }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlib::sym_eig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn s_theta_invariants() {
        for i in 0..50 {
            let th = -PI + i as f64 * 0.13;
            let s = s_theta(th);
            assert!(close(&(&s * &s), &DMatrix::identity(2, 2), 1e-14));
            assert!((s.determinant() + 1.0).abs() < 1e-14);
            assert!(s.trace().abs() < 1e-15);
            let e = sym_eig(&SymMatrix::symmetrize(&s)).values;
            assert!((e[0] + 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn example_values() {
        let f = example_family(1).unwrap();
        let a = f.coefficient(&TorusPoint::zero(1), 1.0);
        let expect = j2() * s_theta(0.0) * (PI / 4.0);
        assert!(close(a.as_matrix(), &expect, 1e-15));

        let f3 = example_family(3).unwrap();
        let a1 = f3.coefficient(&TorusPoint::new(&[0.3, -1.0, 2.0]), -3.0);
        let a2 = f3.coefficient(&TorusPoint::new(&[-2.0, 0.1, 1.1]), -3.0);
        assert_eq!(a1, a2);

        let f2 = example_family(2).unwrap();
        let lam = TorusPoint::new(&[PI / 2.0, PI / 2.0]);
        let jap = j2() * f2.asymptote_plus(&lam).as_matrix();
        assert!(close(&jap, &(s_theta(PI) * (-PI / 2.0)), 1e-14));
        let jam = j2() * f2.asymptote_minus(&lam).as_matrix();
        assert!(close(&jam, &(s_theta(0.0) * (PI / 2.0)), 1e-14));
        assert!(example_family(0).is_err());
    }

    #[test]
    fn example_depends_only_on_angle_sum() {
        let f = example_family(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let a = rng.gen_range(-PI..PI);
            let b = rng.gen_range(-PI..PI);
            let shift = rng.gen_range(-1.0..1.0);
            let p = TorusPoint::new(&[a, b]);
            let q = TorusPoint::new(&[a + shift, b - shift]);
            for _ in 0..20 {
                let t = rng.gen_range(-20.0..20.0);
                assert!(close(f.coefficient(&p, t).as_matrix(), f.coefficient(&q, t).as_matrix(), 1e-13));
            }
        }
    }

    #[test]
    fn analytic_derivative_matches_central_differences() {
        let f = example_family(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let lam = TorusPoint::new(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let dir = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let t = rng.gen_range(-10.0..10.0);
            let h = 1e-5;
            let plus: Vec<f64> = lam.angles().iter().zip(&dir).map(|(a, d)| a + h * d).collect();
            let minus: Vec<f64> = lam.angles().iter().zip(&dir).map(|(a, d)| a - h * d).collect();
            let fd = (f.coefficient(&TorusPoint::new(&plus), t).into_inner()
                - f.coefficient(&TorusPoint::new(&minus), t).into_inner())
                / (2.0 * h);
            assert!(close(f.parameter_derivative(&lam, &dir, t).as_matrix(), &fd, 1e-6));
        }
    }

    #[test]
    fn hyperbolicity() {
        let f = example_family(2).unwrap();
        for lam in [TorusPoint::zero(2), TorusPoint::new(&[1.0, -2.5]), TorusPoint::new(&[PI, 0.0])] {
            let h = check_hyperbolic(&f, &lam, 1e-8);
            assert!(h.ok);
            assert!((h.min_real_gap - PI / 2.0).abs() < 1e-12);
        }
        let c = compact_control_family(2).unwrap();
        let h = check_hyperbolic(&c, &TorusPoint::zero(2), 1e-8);
        assert!(h.ok && (h.min_real_gap - 1.0).abs() < 1e-12);

        let zero = ComposedFamily::new(
            1,
            1,
            vec![TermConfig {
                profile: Profile::Constant,
                support: Support::All,
                scale: 1.0,
                matrix: TermMatrix::Constant { entries: vec![vec![0.0, 0.0], vec![0.0, 0.0]] },
            }],
            None,
        )
        .unwrap();
        assert!(!check_hyperbolic(&zero, &TorusPoint::zero(1), 1e-8).ok);
    }

    #[test]
    fn compact_control_is_constant() {
        let c = compact_control_family(3).unwrap();
        let a0 = c.coefficient(&TorusPoint::zero(3), 0.0);
        assert_eq!(c.coefficient(&TorusPoint::new(&[1.0, 2.0, -3.0]), -40.0), a0);
        let ja = j2() * a0.as_matrix();
        assert!(close(&ja, &DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]), 0.0));
    }

    fn composed_example(k: usize) -> FamilyConfig {
        let toml = format!(
            r#"
kind = "composed"
k = {k}
n = 1

[[terms]]
profile = "arctan"
support = "positive"
matrix = {{ type = "j-s-theta", weights = [{w}] }}

[[terms]]
profile = "arctan"
support = "negative"
matrix = {{ type = "j-s-theta", weights = [{z}] }}
"#,
            w = vec!["1.0"; k].join(", "),
            z = vec!["0.0"; k].join(", ")
        );
        toml::from_str(&toml).unwrap()
    }

    #[test]
    fn composed_reproduces_example() {
        let cfg = composed_example(2);
        let fam = cfg.build().unwrap();
        let ex = example_family(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..40 {
            let lam = TorusPoint::new(&[rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)]);
            let t = rng.gen_range(-30.0..30.0);
            assert!(close(fam.coefficient(&lam, t).as_matrix(), ex.coefficient(&lam, t).as_matrix(), 1e-14));
            let dir = [0.3, -1.2];
            assert!(close(
                fam.parameter_derivative(&lam, &dir, t).as_matrix(),
                ex.parameter_derivative(&lam, &dir, t).as_matrix(),
                1e-14
            ));
            assert!(close(fam.asymptote_plus(&lam).as_matrix(), ex.asymptote_plus(&lam).as_matrix(), 1e-14));
            assert!(close(fam.asymptote_minus(&lam).as_matrix(), ex.asymptote_minus(&lam).as_matrix(), 1e-14));
        }
        assert_eq!(fam.breakpoints(), &[0.0]);
        assert!(validate_family(fam.as_ref(), 6).ok);
    }

    #[test]
    fn config_validation() {
        let bad: std::result::Result<FamilyConfig, _> = toml::from_str("kind = \"example\"\nk = 1\nbogus = 3\n");
        assert!(bad.is_err());
        let unknown_kind: std::result::Result<FamilyConfig, _> = toml::from_str("kind = \"nope\"\nk = 1\n");
        assert!(unknown_kind.is_err());
        let mut cfg = composed_example(2);
        if let TermMatrix::JSTheta { weights, .. } = &mut cfg.terms[0].matrix {
            weights.pop();
        }
        assert!(cfg.build().is_err());
        let asym: FamilyConfig = toml::from_str(
            "kind = \"composed\"\nk = 1\nn = 1\n[[terms]]\nprofile = \"constant\"\nmatrix = { type = \"constant\", entries = [[0.0, 1.0], [2.0, 0.0]] }\n",
        )
        .unwrap();
        assert!(asym.build().is_err());
        let ex = FamilyConfig::builtin(FamilyKind::Example, 2).normalized().unwrap();
        assert_eq!(ex.n, Some(1));
        assert!(FamilyConfig::builtin(FamilyKind::Example, 0).build().is_err());
    }

    #[test]
    fn builtin_families_validate() {
        assert!(validate_family(&example_family(2).unwrap(), 8).ok);
        assert!(validate_family(&compact_control_family(2).unwrap(), 8).ok);
    }

    #[test]
    fn example_generator_override_matches_default() {
        let f = example_family(2).unwrap();
        let lam = TorusPoint::new(&[0.4, 1.1]);
        for t in [-3.0, -0.5, 0.0, 0.7, 12.0] {
            let direct = f.generator(&lam, t);
            let generic = symplectic_j(1) * f.coefficient(&lam, t).as_matrix();
            assert!((direct - generic).norm() < 1e-14);
        }
    }

    #[test]
    fn torus_paths() {
        let lp = TorusPath::coordinate_loop(&TorusPoint::new(&[0.0, 0.5]), 0, 0.0);
        assert_eq!(lp.domain(), (-PI, PI));
        assert!((lp.position(0.3)[0] - 0.3).abs() < 1e-14 && lp.position(0.3)[1] == 0.5);
        assert_eq!(lp.velocity(0.3), vec![1.0, 0.0]);
        let rev = lp.reversed();
        assert!((rev.position(-PI)[0] - PI).abs() < 1e-14);
        assert_eq!(rev.velocity(0.0), vec![-1.0, 0.0]);

        let w = TorusPath::from_waypoints(&[vec![3.0, 0.0], vec![-3.0, 0.0]]).unwrap();
        // shortest arc crosses ±π rather than passing through 0
        assert!((w.position(1.0)[0] - (3.0 + 2.0 * PI - 6.0)).abs() < 1e-12);
        let re = lp.regridded(&[-PI, -2.0, 1.0, PI]).unwrap();
        assert_eq!(re.domain(), (-PI, PI));
        assert!((re.position(-PI / 3.0)[0] + 2.0).abs() < 1e-12);
        assert!(lp.regridded(&[-PI, 1.0, 0.0, PI]).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5 + 2.0 * PI) - 0.5).abs() < 1e-12);
        assert!(TorusPoint::checked(&[4.0]).is_err());
    }
}
