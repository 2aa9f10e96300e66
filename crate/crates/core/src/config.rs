//! Flat key-value configuration files (TOML syntax).
//!
//! Every [`SolverConfig`] field, the trial limits, the sensor, and the forest
//! parameters are top-level keys; unknown keys are rejected. Optional
//! `[[variants]]` and `[[environments]]` tables describe a benchmark suite.
//! See the README for the full key list.

use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::bench::{SensorConfig, TrialLimits, TrialSettings};
use crate::error::{Error, Result};
use crate::model::{validate_config, BandwidthMode, CostWeights, SolverConfig, Variant, Vec3};
use crate::world::{Bounds, DensityTier, ForestSpec, FOREST_CYLINDER_RADIUS};

/// One suite row: a solver variant at a sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub variant: Variant,
    /// Overrides the top-level `samples`.
    pub samples: Option<usize>,
    /// Overrides the top-level `shift_warm_start`.
    pub shift_warm_start: Option<bool>,
}

impl VariantSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            samples: None,
            shift_warm_start: None,
        }
    }
}

/// One suite column: a density tier or an environment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub density: Option<String>,
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub samples: usize,
    pub horizon: usize,
    pub control_points: usize,
    pub svgd_iterations: usize,
    pub lambda: f64,
    pub svgd_step: f64,
    pub sigma: [f64; 3],
    pub dt: f64,
    pub u_max: [f64; 3],
    pub fd_step: f64,
    /// Diagonal (3 values) or row-major full matrix (9 values).
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub w_d: f64,
    pub w_v: f64,
    pub variant: Variant,
    pub likelihood_offset: f64,
    pub collision_penalty: f64,
    pub robot_radius: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub bandwidth_mode: BandwidthMode,
    /// Unset means on for vanilla MPPI and off for the sparse variants.
    pub shift_warm_start: Option<bool>,

    pub goal_tol: f64,
    pub max_time: f64,
    pub stuck_window: f64,
    pub stuck_radius: f64,
    pub lidar_beams: usize,
    pub lidar_range: f64,

    /// `[min_x, min_y, max_x, max_y]`
    pub field: [f64; 4],
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub corridor_clearance: f64,
    pub density_low: f64,
    pub density_mid: f64,
    pub density_high: f64,

    pub trials: usize,
    pub seed: u64,
    pub variants: Vec<VariantSpec>,
    pub environments: Vec<EnvironmentSpec>,
}

fn diag3(m: &Matrix3<f64>) -> Vec<f64> {
    if *m == Matrix3::from_diagonal(&m.diagonal()) {
        m.diagonal().iter().copied().collect()
    } else {
        m.transpose().iter().copied().collect()
    }
}

impl Default for FileConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        let limits = TrialLimits::default();
        let sensor = SensorConfig::default();
        let forest = ForestSpec::field(0.0);
        Self {
            samples: s.samples,
            horizon: s.horizon,
            control_points: s.control_points,
            svgd_iterations: s.svgd_iterations,
            lambda: s.lambda,
            svgd_step: s.svgd_step,
            sigma: s.sigma.into(),
            dt: s.dt,
            u_max: s.u_max.into(),
            fd_step: s.fd_step,
            q: diag3(&s.weights.q),
            r: diag3(&s.weights.r),
            w_d: s.weights.w_d,
            w_v: s.weights.w_v,
            variant: s.variant,
            likelihood_offset: s.likelihood_offset,
            collision_penalty: s.collision_penalty,
            robot_radius: s.robot_radius,
            d_min: s.d_min,
            d_max: s.d_max,
            bandwidth_mode: s.bandwidth_mode,
            shift_warm_start: None,
            goal_tol: limits.goal_tol,
            max_time: limits.max_time,
            stuck_window: limits.stuck_window,
            stuck_radius: limits.stuck_radius,
            lidar_beams: sensor.beams,
            lidar_range: sensor.max_range,
            field: [
                forest.bounds.min.x,
                forest.bounds.min.y,
                forest.bounds.max.x,
                forest.bounds.max.y,
            ],
            start: forest.start.into(),
            goal: forest.goal.into(),
            corridor_clearance: forest.corridor_clearance,
            density_low: DensityTier::Low.default_density(),
            density_mid: DensityTier::Mid.default_density(),
            density_high: DensityTier::High.default_density(),
            trials: 10,
            seed: 0,
            variants: Vec::new(),
            environments: Vec::new(),
        }
    }
}

fn matrix(name: &str, values: &[f64]) -> Result<Matrix3<f64>> {
    match values.len() {
        3 => Ok(Matrix3::from_diagonal(&Vec3::from_column_slice(values))),
        9 => Ok(Matrix3::from_row_slice(values)),
        n => Err(Error::InvalidConfig {
            violations: vec![format!("{name} needs 3 (diagonal) or 9 (row-major) values, got {n}")],
        }),
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Applies `KEY=VALUE` overrides. Values use TOML syntax
    /// (`lambda=5`, `sigma=[0.5,0.5,0.05]`); bare words become strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let origin = Path::new("<overrides>");
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            message,
        };
        let mut table = toml::Table::try_from(self).map_err(|e| parse_err(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgs(format!("override `{item}` is not KEY=VALUE")))?;
            let raw = raw.trim();
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.trim().to_string(), value);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Solver settings for the top-level variant, validated.
    pub fn solver(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            samples: self.samples,
            horizon: self.horizon,
            control_points: self.control_points,
            svgd_iterations: self.svgd_iterations,
            lambda: self.lambda,
            svgd_step: self.svgd_step,
            sigma: Vec3::from(self.sigma),
            dt: self.dt,
            u_max: Vec3::from(self.u_max),
            fd_step: self.fd_step,
            weights: CostWeights {
                q: matrix("q", &self.q)?,
                r: matrix("r", &self.r)?,
                w_d: self.w_d,
                w_v: self.w_v,
            },
            variant: self.variant,
            likelihood_offset: self.likelihood_offset,
            collision_penalty: self.collision_penalty,
            robot_radius: self.robot_radius,
            d_min: self.d_min,
            d_max: self.d_max,
            bandwidth_mode: self.bandwidth_mode,
            shift_warm_start: self.shift_warm_start.unwrap_or(self.variant == Variant::Mppi),
        };
        validate_config(cfg)
    }

    /// Solver settings for a suite row: vanilla MPPI always gets a knot on
    /// every step (`M = T`).
    pub fn solver_for(&self, spec: &VariantSpec) -> Result<SolverConfig> {
        let mut file = self.clone();
        file.variant = spec.variant;
        if let Some(k) = spec.samples {
            file.samples = k;
        }
        if let Some(shift) = spec.shift_warm_start {
            file.shift_warm_start = Some(shift);
        }
        if spec.variant == Variant::Mppi {
            file.control_points = file.horizon;
        }
        file.solver()
    }

    pub fn trial_settings(&self) -> TrialSettings {
        TrialSettings {
            limits: TrialLimits {
                goal_tol: self.goal_tol,
                max_time: self.max_time,
                stuck_window: self.stuck_window,
                stuck_radius: self.stuck_radius,
            },
            sensor: SensorConfig {
                beams: self.lidar_beams,
                max_range: self.lidar_range,
            },
            capture_candidates: false,
        }
    }

    pub fn tier_density(&self, tier: DensityTier) -> f64 {
        match tier {
            DensityTier::Low => self.density_low,
            DensityTier::Mid => self.density_mid,
            DensityTier::High => self.density_high,
        }
    }

    pub fn forest(&self, tier: DensityTier) -> ForestSpec {
        let [x0, y0, x1, y1] = self.field;
        ForestSpec {
            density: self.tier_density(tier),
            bounds: Bounds::new(x0, y0, x1, y1),
            start: Vec3::from(self.start),
            goal: Vec3::from(self.goal),
            corridor_clearance: self.corridor_clearance,
            robot_radius: self.robot_radius,
            cylinder_radius: FOREST_CYLINDER_RADIUS,
        }
    }

    /// Suite rows, defaulting to all three variants at `samples`.
    pub fn variant_specs(&self) -> Vec<VariantSpec> {
        if self.variants.is_empty() {
            Variant::ALL
                .iter()
                .map(|&variant| VariantSpec::new(variant))
                .collect()
        } else {
            self.variants.clone()
        }
    }

    /// Suite columns, defaulting to the three density tiers.
    pub fn environment_specs(&self) -> Vec<EnvironmentSpec> {
        if self.environments.is_empty() {
            DensityTier::ALL
                .iter()
                .map(|t| EnvironmentSpec {
                    density: Some(t.as_str().to_string()),
                    file: None,
                })
                .collect()
        } else {
            self.environments.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = FileConfig::parse("", Path::new("mem")).unwrap();
        assert_eq!(cfg, FileConfig::default());
        assert_eq!(cfg.solver().unwrap(), SolverConfig::default());
    }

    #[test]
    fn flat_keys_override_defaults() {
        let text = r#"
samples = 20
lambda = 5.0
sigma = [0.5, 0.5, 0.1]
q = [1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]
variant = "scp"
bandwidth_mode = "pairwise"
trials = 3

[[variants]]
variant = "mppi"
samples = 1000

[[environments]]
density = "high"
"#;
        let f = FileConfig::parse(text, Path::new("mem")).unwrap();
        let s = f.solver().unwrap();
        assert_eq!(s.samples, 20);
        assert_eq!(s.lambda, 5.0);
        assert_eq!(s.sigma, Vec3::new(0.5, 0.5, 0.1));
        assert_eq!(s.weights.q[(2, 2)], 3.0);
        assert_eq!(s.variant, Variant::ScpNoSvgd);
        assert_eq!(s.bandwidth_mode, BandwidthMode::Pairwise);
        let mppi = f.solver_for(&f.variant_specs()[0]).unwrap();
        assert_eq!((mppi.samples, mppi.control_points), (1000, 150));
        assert!(mppi.shift_warm_start && !s.shift_warm_start);
        let pinned = FileConfig::parse("shift_warm_start = false", Path::new("mem")).unwrap();
        assert!(!pinned.solver_for(&VariantSpec::new(Variant::Mppi)).unwrap().shift_warm_start);
        assert_eq!(f.environment_specs().len(), 1);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(FileConfig::parse("sampels = 3", Path::new("mem")).is_err());
        let bad = FileConfig::parse("control_points = 0", Path::new("mem")).unwrap();
        assert!(matches!(bad.solver(), Err(Error::InvalidConfig { .. })));
        let bad_q = FileConfig::parse("q = [1.0, 2.0]", Path::new("mem")).unwrap();
        assert!(bad_q.solver().is_err());
    }

    #[test]
    fn overrides_use_toml_values() {
        let f = FileConfig::default()
            .with_overrides(&["lambda=5", "sigma = [0.5, 0.5, 0.05]", "variant=mppi", "trials=2"])
            .unwrap();
        assert_eq!(f.lambda, 5.0);
        assert_eq!(f.sigma, [0.5, 0.5, 0.05]);
        assert_eq!(f.variant, Variant::Mppi);
        assert_eq!(f.trials, 2);
        assert!(FileConfig::default().with_overrides(&["nokey"]).is_err());
        assert!(FileConfig::default().with_overrides(&["lamda=1"]).is_err());
        assert!(FileConfig::default().with_overrides(&["lambda=fast"]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let f = FileConfig::default();
        assert_eq!(FileConfig::parse(&f.to_toml(), Path::new("mem")).unwrap(), f);
    }
}
