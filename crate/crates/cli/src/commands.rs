use std::fmt;
use std::io::Write;
use std::path::Path;

use hamflow_core::boundary::ShootingOptions;
use hamflow_core::matlib::{complexify_eig_check, sym_eig, SymMatrix};
use hamflow_core::odeflow::{residual, SampledSolution};
use hamflow_core::sflow::{
    sample_gap, sfl_crossing, sfl_eigcount, CrossingControl, CrossingRecord, HomoclinicPath, MatrixPath,
    PartitionControl, PathKernel, SflDiagnostics, SflMethod, SflResult,
};
use hamflow_core::systems::{validate_family, FamilyConfig, FamilyKind, FamilyValidation, TorusPath, TorusPoint};
use hamflow_core::toruscan::{certify, chern_vector, scan_degeneracy, Certificate, ChernVector, ScanLevel};
use hamflow_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{self, Mode, Resolved};
use crate::output::{write_degeneracy_csv, write_gap_profile, write_report, Check, Report, SCHEMA_VERSION};

/// Crossing-form value of the example loop: `-I_q / N` with
/// `I_q = 1/2` and `N = ∫_ℝ (t²+1) e^{-2t·arctan t} dt`.
pub const EXAMPLE_GAMMA: f64 = -0.5 / 1.958_580_240_324_845_5;
const GAMMA_REL_TOL: f64 = 1e-3;
const LOCATION_TOL: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-5;
const SHAPE_TOL: f64 = 1e-4;

#[derive(Debug)]
pub enum Failure {
    /// A verification ran but its checks failed.
    Verify(String),
    Config(String),
    Numerical(Error),
    Io(std::io::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Verify(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) | Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Verify(m) => write!(f, "verification failed: {m}"),
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(e) => write!(f, "{}: {e}", e.name()),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numerical(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = Result<(), Failure>;

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report values serialize")
}

#[derive(Debug, Serialize)]
struct LoopResult {
    sfl: i64,
    method: SflMethod,
    crossings: Vec<CrossingRecord>,
    diagnostics: SflDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    regrid_sfl: Option<i64>,
}

impl LoopResult {
    fn new(r: &SflResult) -> Self {
        LoopResult {
            sfl: r.value,
            method: r.method,
            crossings: r.crossings.iter().map(|c| c.record()).collect(),
            diagnostics: r.diagnostics.clone(),
            regrid_sfl: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct VerifyResult {
    #[serde(flatten)]
    flow: LoopResult,
    verified: bool,
}

fn u_star(t: f64) -> f64 {
    (t * t + 1.0).sqrt() * (-t * t.atan()).exp()
}

/// Largest deviation of a kernel trajectory, scaled to unit peak, from `u*·(1, 0)` on `[-10, 10]`.
fn shape_error(sol: &SampledSolution) -> f64 {
    let peak = sol.values().iter().fold(0.0f64, |m, u| m.max(u.norm()));
    let mid = sol.values()[sol.len() / 2][0];
    let scale = if mid < 0.0 { -1.0 / peak } else { 1.0 / peak };
    sol.times()
        .iter()
        .zip(sol.values())
        .filter(|(t, _)| t.abs() <= 10.0)
        .map(|(&t, u)| (u * scale - DVector::from_vec(vec![u_star(t), 0.0])).norm())
        .fold(0.0, f64::max)
}

pub fn verify_example(k: usize, kind: FamilyKind, grid: usize, out: &Path) -> Outcome {
    let cfg = FamilyConfig::builtin(kind, k).normalized().map_err(|e| Failure::Config(e.to_string()))?;
    let family = cfg.build().map_err(|e| Failure::Config(e.to_string()))?;
    let opts = ShootingOptions::default();
    let control = CrossingControl { grid, ..CrossingControl::default() };
    // Θ₁ runs once around from -π with the other angles at 0
    let path = TorusPath::coordinate_loop(&TorusPoint::zero(k), 0, 0.0);
    let hp = HomoclinicPath::new(family.as_ref(), path, opts)?;
    let r = sfl_crossing(&hp, &control)?;
    let profile = sample_gap(&hp, grid)?;

    let mut checks = Vec::new();
    match kind {
        FamilyKind::CompactControl => {
            checks.push(Check::near("sfl", r.value as f64, 0.0, 0.0));
            checks.push(Check::near("crossings", r.crossings.len() as f64, 0.0, 0.0));
            let min_gap = profile.iter().fold(f64::INFINITY, |m, p| m.min(p.1));
            checks.push(Check::near("min_gap", min_gap, 1.0, 1e-6));
        }
        _ => {
            checks.push(Check::near("sfl", r.value as f64, -1.0, 0.0));
            checks.push(Check::near("crossings", r.crossings.len() as f64, 1.0, 0.0));
            if let Some(c) = r.crossings.first() {
                checks.push(Check::near("crossing_location", c.lambda0, 0.0, LOCATION_TOL));
                let gamma = if c.form.dim() == 1 { c.form.as_matrix()[(0, 0)] } else { f64::NAN };
                checks.push(Check::near("crossing_form", gamma, EXAMPLE_GAMMA, GAMMA_REL_TOL * EXAMPLE_GAMMA.abs()));
                if let PathKernel::Homoclinic(kb) = &c.kernel {
                    if let Some(sol) = kb.trajectories.first() {
                        checks.push(Check::at_most("kernel_shape_error", shape_error(sol), SHAPE_TOL));
                    }
                }
            }
            let lambda = TorusPoint::zero(k);
            let exact = SampledSolution::sample(-10.0, 10.0, 20_001, |t| DVector::from_vec(vec![u_star(t), 0.0]))?;
            checks.push(Check::at_most("closed_form_residual", residual(family.as_ref(), &lambda, &exact)?, RESIDUAL_TOL));
        }
    }
    let verified = checks.iter().all(|c| c.passed);
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "verify-example",
        family: to_json(&cfg),
        numerics: to_json(&opts),
        result: VerifyResult { flow: LoopResult::new(&r), verified },
        checks: checks.clone(),
    };
    write_report(out, &report)?;
    write_gap_profile(out, &profile)?;

    for c in &checks {
        println!("{} {:<22} value {:>14.6e}  expected {:>10.3e}  tol {:.1e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.expected, c.tol);
    }
    println!("spectral flow {} with {} crossing(s); report in {}", r.value, r.crossings.len(), out.display());
    if verified {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Verify(failed.join(", ")))
    }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum AnalysisResult {
    Loop(LoopResult),
    Chern(ChernVector),
    Certificate(Certificate),
    CertificateError { certificate: Option<Certificate>, error: String, hypothesis: String },
    Scan(ScanSummary),
}

#[derive(Debug, Serialize)]
struct ScanSummary {
    dimension: Option<f64>,
    levels: Vec<LevelSummary>,
    chern: Option<ChernVector>,
    certificate: Option<Certificate>,
    certificate_error: Option<String>,
}

#[derive(Debug, Serialize)]
struct LevelSummary {
    resolution: usize,
    cell_width: f64,
    lipschitz: Vec<f64>,
    threshold: f64,
    flagged: usize,
}

impl From<&ScanLevel> for LevelSummary {
    fn from(l: &ScanLevel) -> Self {
        LevelSummary {
            resolution: l.resolution,
            cell_width: l.cell_width,
            lipschitz: l.lipschitz.clone(),
            threshold: l.threshold,
            flagged: l.cells.len(),
        }
    }
}

/// Random monotone reparametrization nodes from `a` to `b`.
fn random_params(rng: &mut ChaCha8Rng, a: f64, b: f64, m: usize) -> Vec<f64> {
    let mut inner: Vec<f64> = (0..m).map(|_| rng.gen_range(a..b)).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    std::iter::once(a).chain(inner.into_iter().filter(|&x| x > a && x < b)).chain(std::iter::once(b)).collect()
}

pub fn analyze(cfg: &Resolved, force_scan: bool, out: &Path) -> Outcome {
    let family = cfg.family.build().map_err(|e| Failure::Config(e.to_string()))?;
    let family = family.as_ref();
    let a = &cfg.analysis;
    let mode = if force_scan { Mode::Scan } else { a.mode };
    let command = if force_scan { "scan" } else { "analyze" };
    let report = |result: AnalysisResult| Report {
        schema_version: SCHEMA_VERSION,
        command,
        family: to_json(&cfg.family),
        numerics: to_json(&cfg.options),
        result,
        checks: Vec::new(),
    };

    match mode {
        Mode::Loop => match &a.waypoints {
            Some(wp) => {
                let path = TorusPath::from_waypoints(wp).map_err(|e| Failure::Config(e.to_string()))?;
                let hp = HomoclinicPath::new(family, path.clone(), cfg.options)?;
                let r = sfl_crossing(&hp, &a.crossing())?;
                let mut result = LoopResult::new(&r);
                if a.regrid_check {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    let (lo, hi) = path.domain();
                    let regridded = path.regridded(&random_params(&mut rng, lo, hi, 4 * path.knots().len()))?;
                    let r2 = sfl_crossing(&HomoclinicPath::new(family, regridded, cfg.options)?, &a.crossing())?;
                    result.regrid_sfl = Some(r2.value);
                }
                write_gap_profile(out, &sample_gap(&hp, a.grid)?)?;
                println!("spectral flow along the path: {}", result.sfl);
                if let Some(v) = result.regrid_sfl {
                    println!("after reparametrization: {v}");
                }
                let consistent = result.regrid_sfl.is_none_or(|v| v == result.sfl);
                write_report(out, &report(AnalysisResult::Loop(result)))?;
                if !consistent {
                    return Err(Failure::Verify("spectral flow changed under reparametrization".into()));
                }
            }
            None => {
                let base = TorusPoint::new(a.base.as_deref().unwrap_or(&vec![0.0; cfg.family.k]));
                let c = chern_vector(family, &base, &cfg.options, &a.crossing())?;
                println!("chern vector at {}: {:?}", c.base, c.components);
                write_report(out, &report(AnalysisResult::Chern(c)))?;
            }
        },
        Mode::Certify => match certify(family, &cfg.options, &a.crossing()) {
            Ok(cert) => {
                println!("certificate: invertible point {}, chern {:?}", cert.invertible_point, cert.chern.components);
                println!("{}", cert.conclusion);
                write_report(out, &report(AnalysisResult::Certificate(cert)))?;
            }
            Err(e @ Error::CertificateUnavailable { .. }) => {
                let hypothesis = match &e {
                    Error::CertificateUnavailable { hypothesis, .. } => hypothesis.clone(),
                    _ => unreachable!(),
                };
                write_report(
                    out,
                    &report(AnalysisResult::CertificateError { certificate: None, error: e.to_string(), hypothesis }),
                )?;
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        },
        Mode::Scan => {
            let r = scan_degeneracy(family, &cfg.options, &a.scan(), &a.crossing())?;
            write_degeneracy_csv(out, &r.levels)?;
            for l in &r.levels {
                println!("resolution {:>4}: {} flagged cells", l.resolution, l.cells.len());
            }
            match r.dimension {
                Some(d) => println!("box-counting dimension {d:.4}"),
                None => println!("box-counting dimension unavailable (empty level)"),
            }
            let summary = ScanSummary {
                dimension: r.dimension,
                levels: r.levels.iter().map(LevelSummary::from).collect(),
                chern: r.chern,
                certificate: r.certificate,
                certificate_error: r.certificate_error,
            };
            write_report(out, &report(AnalysisResult::Scan(summary)))?;
        }
    }
    println!("report in {}", out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct FamilyCheck {
    family: FamilyConfig,
    validation: FamilyValidation,
}

pub fn check_family(cfg: &Resolved) -> Outcome {
    let family = cfg.family.build().map_err(|e| Failure::Config(e.to_string()))?;
    let validation = validate_family(family.as_ref(), 4);
    let ok = validation.ok;
    let text = serde_json::to_string_pretty(&FamilyCheck { family: cfg.family.clone(), validation })
        .map_err(|e| Failure::Io(std::io::Error::other(e)))?;
    // a closed pipe (e.g. `| head`) is not an error
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Verify("family fails its structural checks".into()))
    }
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    SymMatrix::symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)))
}

/// Quick internal consistency checks; deterministic for a given seed.
pub fn selftest(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut report = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures.push(name.to_string());
        }
    };

    let mut agree = 0;
    let paths = 20;
    for _ in 0..paths {
        let n = rng.gen_range(3..=6);
        let (base, slope) = loop {
            let (b, s) = (random_sym(&mut rng, n), random_sym(&mut rng, n).scale(2.0));
            if sym_eig(&b.axpy(-1.0, &s)).min_abs() > 1e-3 && sym_eig(&b.axpy(1.0, &s)).min_abs() > 1e-3 {
                break (b, s);
            }
        };
        let p = MatrixPath::affine(base, slope, -1.0, 1.0)?;
        let a = sfl_eigcount(&p, &PartitionControl::default())?.value;
        let b = sfl_crossing(&p, &CrossingControl { grid: 256, tol: 1e-6 })?.value;
        agree += usize::from(a == b);
    }
    report("engines agree", agree == paths, format!("{agree}/{paths} random affine paths"));

    let spectra = 50;
    let doubled = (0..spectra)
        .filter(|_| {
            let n = rng.gen_range(1..=6);
            complexify_eig_check(&random_sym(&mut rng, n))
        })
        .count();
    report("complexification", doubled == spectra, format!("{doubled}/{spectra} spectra doubled"));

    let f = FamilyConfig::builtin(FamilyKind::Example, 1).build()?;
    let hp = HomoclinicPath::new(f.as_ref(), TorusPath::coordinate_loop(&TorusPoint::zero(1), 0, 0.0), ShootingOptions::default())?;
    let r = sfl_crossing(&hp, &CrossingControl { grid: 32, tol: 1e-6 })?;
    report("example loop", r.value == -1, format!("sfl {}", r.value));

    let f = FamilyConfig::builtin(FamilyKind::CompactControl, 1).build()?;
    let hp = HomoclinicPath::new(f.as_ref(), TorusPath::coordinate_loop(&TorusPoint::zero(1), 0, 0.0), ShootingOptions::default())?;
    let r = sfl_crossing(&hp, &CrossingControl { grid: 16, tol: 1e-6 })?;
    report("compact-control loop", r.value == 0 && r.crossings.is_empty(), format!("sfl {}", r.value));

    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(failures.join(", ")))
    }
}

pub fn load_config(path: &Path) -> Result<Resolved, Failure> {
    config::load(path).map_err(Failure::Config)
}
