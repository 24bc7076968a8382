//! Global analysis over the parameter torus: Chern vector from coordinate
//! loops, an existence certificate, and a scan of the degeneracy set
//! `{λ : J d/dt + A(λ, ·) has nontrivial kernel}`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{boundary_data, ShootingOptions};
use crate::error::{validation, Error, Result};
use crate::sflow::{sfl_crossing, CrossingControl, CrossingRecord, HomoclinicPath, SflResult};
use crate::systems::{check_hyperbolic, wrap_angle, HamiltonianFamily, TorusPath, TorusPoint};

/// Number of loop start angles tried when the base point is degenerate.
pub const PROBE_POINTS: usize = 64;

/// Gaps within this of the maximum are ties; the first wins.
const TIE_TOL: f64 = 1e-9;

/// Spectral flow along one coordinate loop.
#[derive(Debug, Clone, Serialize)]
pub struct LoopFlow {
    /// 1-based axis index.
    pub axis: usize,
    /// Angle at which the loop starts and ends.
    pub start: f64,
    pub sfl: i64,
    pub crossings: Vec<CrossingRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChernVector {
    pub base: TorusPoint,
    pub components: Vec<i64>,
    pub loops: Vec<LoopFlow>,
}

impl ChernVector {
    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|&c| c == 0)
    }
}

fn gap_at(family: &dyn HamiltonianFamily, angles: &[f64], opts: &ShootingOptions) -> Result<f64> {
    Ok(boundary_data(family, &TorusPoint::new(angles), opts)?.gap())
}

/// Start angle of loop `axis`: the base angle itself when the loop endpoint is
/// invertible, otherwise the best of [`PROBE_POINTS`] equally spaced angles.
fn loop_start(
    family: &dyn HamiltonianFamily,
    base: &TorusPoint,
    axis: usize,
    opts: &ShootingOptions,
    tol: f64,
) -> Result<f64> {
    if gap_at(family, base.angles(), opts)? > tol {
        return Ok(base.angles()[axis]);
    }
    let probes: Vec<(f64, f64)> = (0..PROBE_POINTS)
        .into_par_iter()
        .map(|i| {
            let start = wrap_angle(-PI + 2.0 * PI * i as f64 / PROBE_POINTS as f64);
            let mut angles = base.angles().to_vec();
            angles[axis] = start;
            gap_at(family, &angles, opts).map(|g| (start, g))
        })
        .collect::<Result<_>>()?;
    let best = probes.iter().fold(0.0f64, |m, p| m.max(p.1));
    if best <= tol {
        return Err(Error::BasePoint(format!(
            "every probed start of loop {} through {base} is degenerate (best gap {best:.3e})",
            axis + 1
        )));
    }
    Ok(probes.iter().find(|p| p.1 >= best - TIE_TOL).expect("maximum exists").0)
}

/// Coordinate loop along `axis` through `base`, starting and ending at angle `start`.
pub fn coordinate_loop(base: &TorusPoint, axis: usize, start: f64) -> TorusPath {
    TorusPath::coordinate_loop(base, axis, start + PI)
}

/// Spectral flow along every coordinate loop through `base`.
pub fn chern_vector(
    family: &dyn HamiltonianFamily,
    base: &TorusPoint,
    opts: &ShootingOptions,
    control: &CrossingControl,
) -> Result<ChernVector> {
    let k = family.torus_dim();
    if base.dim() != k {
        return validation(format!("base point has {} angles, family expects {k}", base.dim()));
    }
    let mut loops = Vec::with_capacity(k);
    for axis in 0..k {
        let start = loop_start(family, base, axis, opts, control.tol)?;
        let path = HomoclinicPath::new(family, coordinate_loop(base, axis, start), *opts)?;
        let r: SflResult = sfl_crossing(&path, control)?;
        loops.push(LoopFlow {
            axis: axis + 1,
            start,
            sfl: r.value,
            crossings: r.crossings.iter().map(|c| c.record()).collect(),
        });
    }
    Ok(ChernVector { base: base.clone(), components: loops.iter().map(|l| l.sfl).collect(), loops })
}

/// Proof that the degeneracy set is nonempty, together with its inputs.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub invertible_point: TorusPoint,
    pub gap: f64,
    pub chern: ChernVector,
    /// 1-based index of the first nonzero Chern component.
    pub nonzero_component: usize,
    pub conclusion: String,
}

/// Grid nodes `-π + i·2π/m` per axis, normalized to `(-π, π]`, in lexicographic order.
fn coarse_nodes(k: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let total = per_axis.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            let mut angles = vec![0.0; k];
            for a in angles.iter_mut().rev() {
                *a = wrap_angle(-PI + 2.0 * PI * (idx % per_axis) as f64 / per_axis as f64);
                idx /= per_axis;
            }
            angles
        })
        .collect()
}

/// Nodes per axis of the coarse certification grid: 8, reduced so that the
/// grid has at most 4096 nodes.
pub fn coarse_resolution(k: usize) -> usize {
    (2..=8).rev().find(|m: &usize| m.pow(k as u32) <= 4096).unwrap_or(2)
}

/// Certifies a nontrivial homoclinic solution somewhere on `T^k`:
/// the asymptotes are hyperbolic, some point `λ₀` is invertible, and the
/// coordinate loops through `λ₀` have a nonzero Chern component.
pub fn certify(family: &dyn HamiltonianFamily, opts: &ShootingOptions, control: &CrossingControl) -> Result<Certificate> {
    let k = family.torus_dim();
    let nodes = coarse_nodes(k, coarse_resolution(k));

    let unavailable = |hypothesis: &str, detail: String| Error::CertificateUnavailable {
        hypothesis: hypothesis.to_string(),
        detail,
    };

    for angles in &nodes {
        let check = check_hyperbolic(family, &TorusPoint::new(angles), opts.hyperbolic_tol);
        if !check.ok {
            return Err(unavailable(
                "hyperbolic asymptotes",
                format!("at {} the asymptotic gap is {:.3e}", TorusPoint::new(angles), check.min_real_gap),
            ));
        }
    }

    let gaps: Vec<f64> = nodes
        .par_iter()
        .map(|a| gap_at(family, a, opts))
        .collect::<Result<_>>()
        .map_err(|e| unavailable("invertible point", e.to_string()))?;
    let best = gaps.iter().copied().fold(0.0f64, f64::max);
    if best <= control.tol {
        return Err(unavailable("invertible point", format!("largest gap on the coarse grid is {best:.3e}")));
    }
    let i0 = gaps.iter().position(|&g| g >= best - TIE_TOL).expect("maximum exists");
    let point = TorusPoint::new(&nodes[i0]);

    let chern = chern_vector(family, &point, opts, control).map_err(|e| unavailable("nonzero Chern component", e.to_string()))?;
    let Some(j) = chern.components.iter().position(|&c| c != 0) else {
        return Err(unavailable(
            "nonzero Chern component",
            format!("all coordinate loops through {point} have zero spectral flow"),
        ));
    };
    let conclusion = format!(
        "coordinate loop {} through {point} has spectral flow {}; every loop freely homotopic to it meets \
         parameters at which the linearized system has a nontrivial homoclinic solution, so homoclinic \
         solutions bifurcate from the trivial branch",
        j + 1,
        chern.components[j]
    );
    Ok(Certificate { invertible_point: point, gap: gaps[i0], chern, nonzero_component: j + 1, conclusion })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanControl {
    /// Cells per axis at the coarsest level; each further level doubles it.
    pub resolution: usize,
    pub levels: usize,
    pub tol: f64,
    /// Safety factor on the Lipschitz part of the flagging threshold.
    pub lipschitz_factor: f64,
    pub chern: bool,
    pub certificate: bool,
}

impl Default for ScanControl {
    fn default() -> Self {
        ScanControl { resolution: 32, levels: 3, tol: 1e-6, lipschitz_factor: 1.5, chern: true, certificate: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateCell {
    pub resolution: usize,
    pub indices: Vec<usize>,
    /// Cell center.
    pub angles: Vec<f64>,
    /// Number of principal-angle sines below the threshold.
    pub kernel_dim: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanLevel {
    pub resolution: usize,
    pub cell_width: f64,
    /// Per-axis Lipschitz estimate of the gap.
    pub lipschitz: Vec<f64>,
    pub threshold: f64,
    pub cells: Vec<DegenerateCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub levels: Vec<ScanLevel>,
    /// Box-counting dimension; absent if some level flags no cell.
    pub dimension: Option<f64>,
    pub chern: Option<ChernVector>,
    pub certificate: Option<Certificate>,
    /// Why the certificate is missing, when it was requested.
    pub certificate_error: Option<String>,
}

fn cell_index(mut flat: usize, k: usize, r: usize) -> Vec<usize> {
    let mut idx = vec![0; k];
    for i in idx.iter_mut().rev() {
        *i = flat % r;
        flat /= r;
    }
    idx
}

fn scan_level(family: &dyn HamiltonianFamily, opts: &ShootingOptions, r: usize, control: &ScanControl) -> Result<ScanLevel> {
    let k = family.torus_dim();
    let h = 2.0 * PI / r as f64;
    let total = r.checked_pow(k as u32).ok_or_else(|| Error::Validation("scan grid too large".into()))?;
    let center = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| -PI + (i as f64 + 0.5) * h).collect() };

    let sines: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let idx = cell_index(flat, k, r);
            Ok(boundary_data(family, &TorusPoint::new(&center(&idx)), opts)?.sines())
        })
        .collect::<Result<_>>()?;
    let gap = |flat: usize| sines[flat].first().copied().unwrap_or(1.0);

    // neighbour differences along each axis, periodic
    let mut lipschitz = vec![0.0f64; k];
    for flat in 0..total {
        let idx = cell_index(flat, k, r);
        let mut stride = 1;
        for axis in (0..k).rev() {
            let next = if idx[axis] + 1 == r { flat + stride - r * stride } else { flat + stride };
            lipschitz[axis] = lipschitz[axis].max((gap(next) - gap(flat)).abs() / h);
            stride *= r;
        }
    }
    let threshold = control.tol + control.lipschitz_factor * lipschitz.iter().map(|l| l * h / 2.0).sum::<f64>();

    let cells = (0..total)
        .filter(|&flat| gap(flat) <= threshold)
        .map(|flat| {
            let indices = cell_index(flat, k, r);
            DegenerateCell {
                resolution: r,
                angles: center(&indices),
                indices,
                kernel_dim: sines[flat].iter().filter(|&&s| s <= threshold).count(),
                gap: gap(flat),
            }
        })
        .collect();
    Ok(ScanLevel { resolution: r, cell_width: h, lipschitz, threshold, cells })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Flags cells of `T^k` where the gap is small at resolutions
/// `r, 2r, 4r, …`, and estimates the box-counting dimension of the
/// degeneracy set from the flagged-cell counts.
pub fn scan_degeneracy(
    family: &dyn HamiltonianFamily,
    opts: &ShootingOptions,
    control: &ScanControl,
    crossing: &CrossingControl,
) -> Result<ScanResult> {
    if control.resolution < 2 || control.levels == 0 {
        return validation("scan needs resolution >= 2 and at least one level");
    }
    let mut levels = Vec::with_capacity(control.levels);
    for l in 0..control.levels {
        levels.push(scan_level(family, opts, control.resolution << l, control)?);
    }
    let counts: Vec<(f64, f64)> = levels.iter().map(|l| (l.resolution as f64, l.cells.len() as f64)).collect();
    let dimension = if levels.len() >= 2 { log_log_slope(&counts) } else { None };

    let chern = if control.chern {
        Some(chern_vector(family, &TorusPoint::zero(family.torus_dim()), opts, crossing)?)
    } else {
        None
    };
    let (certificate, certificate_error) = if control.certificate {
        match certify(family, opts, crossing) {
            Ok(c) => (Some(c), None),
            Err(e @ Error::CertificateUnavailable { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    Ok(ScanResult { levels, dimension, chern, certificate, certificate_error })
}
