//! Frame propagation for `u' = J A(λ, t) u`.
//!
//! Frames are advanced with classical RK4 on a fixed step that never
//! straddles a breakpoint of the family, and re-orthonormalized by QR when
//! they degenerate. Discarded growth is accumulated in `log_scale`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::matlib::{subspace_distance, Frame};
use crate::systems::{HamiltonianFamily, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepControl {
    pub initial_step: f64,
    pub max_halvings: u32,
    /// Accept once two successive halvings agree to this subspace angle.
    pub angle_tol: f64,
    /// Renormalize once the frame condition number exceeds this.
    pub renorm_condition: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { initial_step: 0.05, max_halvings: 10, angle_tol: 1e-9, renorm_condition: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub t: f64,
    pub frame: Frame,
    /// Accumulated `log |det R|` of the QR factors removed during renormalization.
    pub log_scale: f64,
}

impl TrajectoryFrame {
    pub fn new(t: f64, frame: Frame) -> Self {
        TrajectoryFrame { t, frame, log_scale: 0.0 }
    }
}

/// A converged propagation together with the step that achieved it.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub end: TrajectoryFrame,
    pub step: f64,
}

/// Time grid from `t0` to `t1` (either direction) with steps of at most `h`,
/// containing every breakpoint strictly between the endpoints.
pub fn step_grid(t0: f64, t1: f64, h: f64, breakpoints: &[f64]) -> Vec<f64> {
    let (lo, hi) = (t0.min(t1), t0.max(t1));
    let mut knots = vec![t0];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > lo && b < hi).collect();
    if t1 < t0 {
        inner.reverse();
    } else {
        inner.sort_by(f64::total_cmp);
    }
    knots.extend(inner);
    knots.push(t1);

    let mut grid = vec![t0];
    for w in knots.windows(2) {
        let len = (w[1] - w[0]).abs();
        let steps = ((len / h).ceil() as usize).max(1);
        for i in 1..=steps {
            grid.push(if i == steps { w[1] } else { w[0] + (w[1] - w[0]) * i as f64 / steps as f64 });
        }
    }
    grid
}

/// One classical RK4 step; `g0` is the generator at `t`. Returns the new
/// state and the generator at `t + dt` for reuse by the next step.
fn rk4_step(
    family: &dyn HamiltonianFamily,
    lambda: &TorusPoint,
    x: &DMatrix<f64>,
    g0: &DMatrix<f64>,
    t: f64,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let gm = family.generator(lambda, t + dt / 2.0);
    let g1 = family.generator(lambda, t + dt);
    let mut out = x.clone();
    let mut stage = x.clone();
    let k1 = g0 * x;
    out.zip_apply(&k1, |a, b| *a += dt / 6.0 * b);
    stage.zip_apply(&k1, |a, b| *a += dt / 2.0 * b);
    let k2 = &gm * &stage;
    out.zip_apply(&k2, |a, b| *a += dt / 3.0 * b);
    stage.copy_from(x);
    stage.zip_apply(&k2, |a, b| *a += dt / 2.0 * b);
    let k3 = &gm * &stage;
    out.zip_apply(&k3, |a, b| *a += dt / 3.0 * b);
    stage.copy_from(x);
    stage.zip_apply(&k3, |a, b| *a += dt * b);
    let k4 = &g1 * &stage;
    out.zip_apply(&k4, |a, b| *a += dt / 6.0 * b);
    (out, g1)
}

/// QR with a positive diagonal in `R`.
fn positive_qr(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let qr = x.clone().qr();
    let mut q = qr.q().columns(0, d).into_owned();
    let mut r = qr.r().rows(0, d).into_owned();
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// Steps between the (costlier) conditioning checks of multi-column frames.
const CONDITION_CHECK_EVERY: usize = 8;

fn needs_renorm(x: &DMatrix<f64>, limit: f64, check_condition: bool) -> bool {
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let (lo, hi) = norms.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &n| (a.min(n), b.max(n)));
    if hi > limit || lo < 1.0 / limit {
        return true;
    }
    if check_condition && x.ncols() > 1 {
        let g = crate::matlib::SymMatrix::symmetrize(&(x.transpose() * x));
        let ev = crate::matlib::sym_eig(&g).values;
        let (mn, mx) = (ev[0].max(0.0), ev[ev.len() - 1]);
        return mn * limit * limit < mx;
    }
    false
}

fn check_finite(x: &DMatrix<f64>, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite state at t = {t}")))
    }
}

/// Propagates on a fixed maximum step `h`.
pub fn propagate_fixed(
    family: &dyn HamiltonianFamily,
    lambda: &TorusPoint,
    start: &TrajectoryFrame,
    t_end: f64,
    h: f64,
    renorm_condition: f64,
) -> Result<TrajectoryFrame> {
    if start.frame.ambient_dim() != 2 * family.half_dim() {
        return validation("frame dimension does not match the family");
    }
    if !(h > 0.0) || !t_end.is_finite() {
        return validation("step must be positive and t_end finite");
    }
    if t_end == start.t {
        return Ok(start.clone());
    }
    let grid = step_grid(start.t, t_end, h, family.breakpoints());
    let mut x = start.frame.columns().clone();
    let mut log_scale = start.log_scale;
    let mut g = family.generator(lambda, start.t);
    for (i, w) in grid.windows(2).enumerate() {
        let (next, g_next) = rk4_step(family, lambda, &x, &g, w[0], w[1] - w[0]);
        x = next;
        g = g_next;
        check_finite(&x, w[1])?;
        if needs_renorm(&x, renorm_condition, i % CONDITION_CHECK_EVERY == 0) {
            let (q, r) = positive_qr(&x);
            log_scale += r.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            x = q;
        }
    }
    let (q, r) = positive_qr(&x);
    log_scale += r.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    check_finite(&q, t_end)?;
    Ok(TrajectoryFrame { t: t_end, frame: Frame::orthonormalize(&q)?, log_scale })
}

/// Propagates with step halving until two successive answers agree.
pub fn propagate_with_report(
    family: &dyn HamiltonianFamily,
    lambda: &TorusPoint,
    start: &TrajectoryFrame,
    t_end: f64,
    control: &StepControl,
) -> Result<Propagation> {
    let mut h = control.initial_step;
    if t_end == start.t {
        return Ok(Propagation { end: start.clone(), step: h });
    }
    let mut prev = propagate_fixed(family, lambda, start, t_end, h, control.renorm_condition)?;
    for _ in 0..control.max_halvings {
        h /= 2.0;
        let next = propagate_fixed(family, lambda, start, t_end, h, control.renorm_condition)?;
        let diff = subspace_distance(&prev.frame, &next.frame);
        prev = next;
        if diff < control.angle_tol {
            return Ok(Propagation { end: prev, step: h });
        }
    }
    Err(Error::Numerical(format!(
        "step halving did not converge after {} halvings (t = {} -> {})",
        control.max_halvings, start.t, t_end
    )))
}

pub fn propagate(
    family: &dyn HamiltonianFamily,
    lambda: &TorusPoint,
    start: &TrajectoryFrame,
    t_end: f64,
    control: &StepControl,
) -> Result<TrajectoryFrame> {
    propagate_with_report(family, lambda, start, t_end, control).map(|p| p.end)
}

/// Orthonormal frames along a uniform grid with the QR factors linking them:
/// `Ψ(t_{i+1}, t_i) Q_i = Q_{i+1} R_i` where `Ψ` is the flow.
#[derive(Debug, Clone)]
pub struct RecordedFlow {
    pub times: Vec<f64>,
    pub frames: Vec<DMatrix<f64>>,
    pub factors: Vec<DMatrix<f64>>,
}

impl RecordedFlow {
    /// Transports `frames[last] · c` against the direction of propagation,
    /// returning the solution values at every recorded time (same order as `times`).
    ///
    /// This is the stable way to follow a solution in a subspace that contracts
    /// in the reverse direction: each step solves with an upper-triangular factor.
    pub fn transport_back(&self, c_last: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let n = self.frames.len();
        let mut coeffs = vec![DVector::zeros(c_last.len()); n];
        coeffs[n - 1] = c_last.clone();
        for i in (0..n - 1).rev() {
            let next = self.factors[i]
                .solve_upper_triangular(&coeffs[i + 1])
                .ok_or_else(|| Error::Numerical("singular transport factor".into()))?;
            coeffs[i] = next;
        }
        Ok(self.frames.iter().zip(&coeffs).map(|(q, c)| q * c).collect())
    }
}

/// Propagates `start` from `t0` to `t1` in `steps` equal RK4 steps, orthonormalizing every step.
pub fn propagate_recorded(
    family: &dyn HamiltonianFamily,
    lambda: &TorusPoint,
    start: &Frame,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<RecordedFlow> {
    if steps == 0 {
        return validation("recorded propagation needs at least one step");
    }
    let (lo, hi) = (t0.min(t1), t0.max(t1));
    if family.breakpoints().iter().any(|&b| b > lo && b < hi) {
        return validation("recorded propagation must not straddle a breakpoint");
    }
    let dt = (t1 - t0) / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut frames = Vec::with_capacity(steps + 1);
    let mut factors = Vec::with_capacity(steps);
    let mut x = start.columns().clone();
    times.push(t0);
    frames.push(x.clone());
    let mut g = family.generator(lambda, t0);
    for i in 0..steps {
        let t = t0 + dt * i as f64;
        let (y, g_next) = rk4_step(family, lambda, &x, &g, t, dt);
        g = g_next;
        check_finite(&y, t + dt)?;
        let (q, r) = positive_qr(&y);
        factors.push(r);
        x = q;
        times.push(if i + 1 == steps { t1 } else { t0 + dt * (i + 1) as f64 });
        frames.push(x.clone());
    }
    Ok(RecordedFlow { times, frames, factors })
}

/// Solution samples on an increasing time grid.
#[derive(Debug, Clone)]
pub struct SampledSolution {
    times: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl SampledSolution {
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return validation("times and values differ in length");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return validation("times must be strictly increasing");
        }
        if let Some(first) = values.first() {
            if values.iter().any(|v| v.len() != first.len()) {
                return validation("values have inconsistent dimensions");
            }
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return validation("values must be finite");
        }
        Ok(SampledSolution { times, values })
    }

    /// Samples `f` on `points` equally spaced times covering `[a, b]`.
    pub fn sample(a: f64, b: f64, points: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        if points < 2 {
            return validation("need at least two sample points");
        }
        let times: Vec<f64> = (0..points)
            .map(|i| if i + 1 == points { b } else { a + (b - a) * i as f64 / (points - 1) as f64 })
            .collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        SampledSolution { times: self.times.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }
}

/// `max_i ‖J u'(t_i) + A(λ, t_i) u(t_i)‖ / max_t ‖u(t)‖` over interior samples,
/// with `u'` from centered differences.
pub fn residual(family: &dyn HamiltonianFamily, lambda: &TorusPoint, sol: &SampledSolution) -> Result<f64> {
    if sol.len() < 5 {
        return validation(format!("residual needs at least 5 samples, got {}", sol.len()));
    }
    if sol.values[0].len() != 2 * family.half_dim() {
        return validation("solution dimension does not match the family");
    }
    let j = crate::matlib::symplectic_j(family.half_dim());
    let scale = sol.values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut worst: f64 = 0.0;
    for i in 1..sol.len() - 1 {
        let du = (&sol.values[i + 1] - &sol.values[i - 1]) / (sol.times[i + 1] - sol.times[i - 1]);
        let a = family.coefficient(lambda, sol.times[i]);
        let r = &j * du + a.as_matrix() * &sol.values[i];
        worst = worst.max(r.norm());
    }
    Ok(worst / scale)
}
