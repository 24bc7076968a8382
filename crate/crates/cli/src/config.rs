//! Run configuration read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use hamflow_core::boundary::ShootingOptions;
use hamflow_core::sflow::CrossingControl;
use hamflow_core::systems::FamilyConfig;
use hamflow_core::toruscan::ScanControl;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Spectral flow along `waypoints`, or the Chern vector at `base` if none are given.
    #[default]
    Loop,
    Certify,
    Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub mode: Mode,
    pub waypoints: Option<Vec<Vec<f64>>>,
    pub base: Option<Vec<f64>>,
    /// Gap samples per path in the crossing search.
    pub grid: usize,
    pub tol: f64,
    /// Coarsest scan resolution (cells per axis).
    pub resolution: usize,
    pub levels: usize,
    /// Also attempt a certificate during a scan.
    pub certificate: bool,
    /// Recompute the loop flow on a random monotone reparametrization.
    pub regrid_check: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let c = CrossingControl::default();
        let s = ScanControl::default();
        AnalysisConfig {
            mode: Mode::Loop,
            waypoints: None,
            base: None,
            grid: c.grid,
            tol: c.tol,
            resolution: s.resolution,
            levels: s.levels,
            certificate: false,
            regrid_check: false,
        }
    }
}

impl AnalysisConfig {
    pub fn crossing(&self) -> CrossingControl {
        CrossingControl { grid: self.grid, tol: self.tol }
    }

    pub fn scan(&self) -> ScanControl {
        ScanControl {
            resolution: self.resolution,
            levels: self.levels,
            tol: self.tol,
            certificate: self.certificate,
            ..ScanControl::default()
        }
    }
}

/// Overrides of the shooting and integration defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub horizon: Option<f64>,
    pub horizon_max: Option<f64>,
    pub accept_angle: Option<f64>,
    pub hyperbolic_tol: Option<f64>,
    pub intersection_tol: Option<f64>,
    pub kernel_step: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_halvings: Option<u32>,
    pub angle_tol: Option<f64>,
}

impl NumericsConfig {
    pub fn shooting_options(&self) -> Result<ShootingOptions, String> {
        let mut o = ShootingOptions::default();
        o.horizon = self.horizon.unwrap_or(o.horizon);
        o.horizon_max = self.horizon_max.unwrap_or(o.horizon_max);
        o.accept_angle = self.accept_angle.unwrap_or(o.accept_angle);
        o.hyperbolic_tol = self.hyperbolic_tol.unwrap_or(o.hyperbolic_tol);
        o.intersection_tol = self.intersection_tol.unwrap_or(o.intersection_tol);
        o.kernel_step = self.kernel_step.unwrap_or(o.kernel_step);
        o.step.initial_step = self.initial_step.unwrap_or(o.step.initial_step);
        o.step.max_halvings = self.max_halvings.unwrap_or(o.step.max_halvings);
        o.step.angle_tol = self.angle_tol.unwrap_or(o.step.angle_tol);
        let positive = [
            ("horizon", o.horizon),
            ("accept_angle", o.accept_angle),
            ("hyperbolic_tol", o.hyperbolic_tol),
            ("intersection_tol", o.intersection_tol),
            ("kernel_step", o.kernel_step),
            ("initial_step", o.step.initial_step),
            ("angle_tol", o.step.angle_tol),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(format!("numerics.{name} must be positive and finite, got {v}"));
        }
        if o.horizon_max < o.horizon {
            return Err("numerics.horizon_max must be at least numerics.horizon".into());
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<FamilyConfig>,
    /// TOML file holding the family table; relative to the config file.
    pub family_file: Option<PathBuf>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub family: FamilyConfig,
    pub analysis: AnalysisConfig,
    pub options: ShootingOptions,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
    pub seed: u64,
}

pub const DEFAULT_OUTPUT_DIR: &str = "hamflow-out";

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

pub fn load(path: &Path) -> Result<Resolved, String> {
    let text = read(path)?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let family = match (cfg.family, cfg.family_file) {
        (Some(f), None) => f,
        (None, Some(file)) => {
            let file = path.parent().unwrap_or(Path::new(".")).join(file);
            toml::from_str(&read(&file)?).map_err(|e| format!("{}: {e}", file.display()))?
        }
        (Some(_), Some(_)) => return Err("give either [family] or family_file, not both".into()),
        (None, None) => return Err("missing [family] table or family_file".into()),
    };
    let family = family.normalized().map_err(|e| e.to_string())?;
    let a = &cfg.analysis;
    if a.grid < 3 {
        return Err("analysis.grid must be at least 3".into());
    }
    if a.tol.is_nan() || a.tol <= 0.0 {
        return Err("analysis.tol must be positive".into());
    }
    if a.resolution < 2 || a.levels == 0 {
        return Err("analysis.resolution must be >= 2 and analysis.levels >= 1".into());
    }
    for p in a.waypoints.iter().flatten().chain(a.base.iter()) {
        if p.len() != family.k {
            return Err(format!("point {p:?} has {} angles but the family has k = {}", p.len(), family.k));
        }
    }
    if cfg.workers == Some(0) {
        return Err("workers must be at least 1".into());
    }
    Ok(Resolved {
        family,
        analysis: cfg.analysis.clone(),
        options: cfg.numerics.shooting_options()?,
        output_dir: cfg.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        workers: cfg.workers,
        seed: cfg.seed.unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn inline_family() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "run.toml",
            r#"
            seed = 7
            [family]
            kind = "example"
            k = 2
            [analysis]
            mode = "certify"
            grid = 32
            [numerics]
            horizon = 30.0
            "#,
        );
        let r = load(&p).unwrap();
        assert_eq!(r.family.n, Some(1));
        assert_eq!(r.analysis.mode, Mode::Certify);
        assert_eq!(r.analysis.grid, 32);
        assert_eq!(r.options.horizon, 30.0);
        assert_eq!(r.seed, 7);
        assert_eq!(r.output_dir, PathBuf::from(DEFAULT_OUTPUT_DIR));
    }

    #[test]
    fn family_file_is_relative() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "fam.toml", "kind = \"compact-control\"\nk = 1\n");
        let p = write(dir.path(), "run.toml", "family_file = \"fam.toml\"\n");
        assert_eq!(load(&p).unwrap().family.k, 1);
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            "[family]\nkind = \"example\"\nk = 1\nbogus = 1\n",
            "[family]\nkind = \"nope\"\nk = 1\n",
            "workers = 2\n",
            "[family]\nkind = \"example\"\nk = 0\n",
            "[family]\nkind = \"example\"\nk = 2\n[analysis]\nwaypoints = [[0.0], [1.0]]\n",
            "[family]\nkind = \"example\"\nk = 1\n[numerics]\nhorizon = -1.0\n",
            "[family]\nkind = \"example\"\nk = 1\n[analysis]\nmode = \"sideways\"\n",
        ];
        for (i, text) in cases.iter().enumerate() {
            let p = write(dir.path(), &format!("bad{i}.toml"), text);
            assert!(load(&p).is_err(), "case {i} accepted");
        }
    }
}
