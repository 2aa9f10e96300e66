//! Domain types shared by the solver, the simulator and the benchmark
//! harness, plus [`validate_config`].
//!
//! All types here are plain values: cloning is cheap enough for the sizes
//! involved and nothing holds interior mutability, so every type is `Send +
//! Sync` and can be handed to rollout workers as-is.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-component real vector (meters or meters/second depending on use).
pub type Vec3 = Vector3<f64>;

/// A velocity command `(vx, vy, vz)` in m/s.
pub type ControlInput = Vec3;

/// Point-mass state: position plus the discrete step it belongs to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    pub position: Vec3,
    pub time_index: usize,
}

impl State {
    pub fn new(position: Vec3) -> Self {
        Self {
            position,
            time_index: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
    }
}

/// Dense control sequence `U = (u_0, ..., u_{T-1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSequence {
    pub inputs: Vec<ControlInput>,
}

impl ControlSequence {
    pub fn new(inputs: Vec<ControlInput>) -> Self {
        Self { inputs }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            inputs: vec![Vec3::zeros(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.inputs.iter().all(|u| u.iter().all(|v| v.is_finite()))
    }
}

/// Sparse control points: `M` velocity knots placed at `knot_indices` on the
/// `0..T` horizon grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseControlPoints {
    points: Vec<ControlInput>,
    knot_indices: Vec<usize>,
}

impl SparseControlPoints {
    /// Builds a knot set, checking that the indices are strictly increasing,
    /// start at 0, and that there are at least two of them.
    pub fn new(points: Vec<ControlInput>, knot_indices: Vec<usize>) -> Result<Self> {
        if points.len() != knot_indices.len() {
            return Err(Error::InvalidArgs(format!(
                "{} points but {} knot indices",
                points.len(),
                knot_indices.len()
            )));
        }
        if points.len() < 2 {
            return Err(Error::InvalidArgs(format!(
                "need at least 2 control points, got {}",
                points.len()
            )));
        }
        if knot_indices[0] != 0 {
            return Err(Error::InvalidArgs("first knot index must be 0".into()));
        }
        for (i, w) in knot_indices.windows(2).enumerate() {
            if w[1] == w[0] {
                return Err(Error::DegenerateKnots(i, i + 1));
            }
            if w[1] < w[0] {
                return Err(Error::InvalidArgs(format!(
                    "knot indices not increasing at position {}",
                    i + 1
                )));
            }
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgs("non-finite control point".into()));
        }
        Ok(Self {
            points,
            knot_indices,
        })
    }

    /// All-zero knots on the uniform grid for horizon `horizon`.
    pub fn zeros(count: usize, horizon: usize) -> Result<Self> {
        let knots = crate::spline::uniform_knots(count, horizon)?;
        Self::new(vec![Vec3::zeros(); count], knots)
    }

    pub fn points(&self) -> &[ControlInput] {
        &self.points
    }

    pub fn knot_indices(&self) -> &[usize] {
        &self.knot_indices
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Horizon implied by the last knot (`last index + 1`).
    pub fn horizon(&self) -> usize {
        self.knot_indices[self.knot_indices.len() - 1] + 1
    }

    /// Same knots, new values. Panics if the count differs.
    pub fn with_points(&self, points: Vec<ControlInput>) -> Self {
        assert_eq!(points.len(), self.points.len(), "control point count mismatch");
        Self {
            points,
            knot_indices: self.knot_indices.clone(),
        }
    }

    /// Knot values shifted by `noise` (`ũ_m + Δũ_m`).
    pub fn perturbed(&self, noise: &NoiseMatrix) -> Self {
        assert_eq!(noise.deltas.len(), self.points.len(), "noise shape mismatch");
        self.with_points(
            self.points
                .iter()
                .zip(&noise.deltas)
                .map(|(p, d)| p + d)
                .collect(),
        )
    }
}

/// Per-knot perturbation `ΔŨ` (M rows, one 3-vector each).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMatrix {
    pub deltas: Vec<Vec3>,
}

impl NoiseMatrix {
    pub fn zeros(rows: usize) -> Self {
        Self {
            deltas: vec![Vec3::zeros(); rows],
        }
    }

    /// Row-major flattening `[Δu_0x, Δu_0y, Δu_0z, Δu_1x, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.deltas.iter().flat_map(|d| d.iter().copied()).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len() % 3, 0, "flat noise length must be a multiple of 3");
        Self {
            deltas: flat
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect(),
        }
    }
}

/// Which member of the MPPI family `solve` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Noise on every step, `M = T`, no transport.
    #[serde(rename = "mppi")]
    Mppi,
    /// Spline-interpolated sparse knots without transport.
    #[serde(rename = "scp")]
    ScpNoSvgd,
    /// Spline-interpolated sparse knots transported by SVGD.
    #[serde(rename = "scp-svgd")]
    ScpSvgd,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Mppi, Variant::ScpNoSvgd, Variant::ScpSvgd];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mppi => "mppi",
            Variant::ScpNoSvgd => "scp",
            Variant::ScpSvgd => "scp-svgd",
        }
    }

    /// Human-readable label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Mppi => "MPPI",
            Variant::ScpNoSvgd => "SCP-MPPI w/o SVGD",
            Variant::ScpSvgd => "SCP-MPPI",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mppi" => Ok(Variant::Mppi),
            "scp" | "scp-no-svgd" => Ok(Variant::ScpNoSvgd),
            "scp-svgd" => Ok(Variant::ScpSvgd),
            other => Err(Error::InvalidArgs(format!("unknown variant `{other}`"))),
        }
    }
}

/// How the RBF kernel width is chosen each SVGD iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthMode {
    /// Median of the particles' own squared norms over `log K`.
    #[default]
    Paper,
    /// Median of pairwise squared distances over `log K`.
    Pairwise,
}

/// Weights of the stage cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    /// Position-error weight.
    pub q: Matrix3<f64>,
    /// Control-effort weight.
    pub r: Matrix3<f64>,
    /// Obstacle-proximity weight.
    pub w_d: f64,
    /// Speed-limit violation slope.
    pub w_v: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q: Matrix3::from_diagonal(&Vec3::new(0.045, 0.045, 0.5)),
            r: Matrix3::from_diagonal(&Vec3::repeat(0.95)),
            w_d: 0.0225,
            w_v: 1.75,
        }
    }
}

/// All solver tunables.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Sample count `K`.
    pub samples: usize,
    /// Horizon length `T` in steps.
    pub horizon: usize,
    /// Control-point count `M`.
    pub control_points: usize,
    /// SVGD iterations `L`.
    pub svgd_iterations: usize,
    /// Inverse temperature of the MPPI weights.
    pub lambda: f64,
    /// SVGD step size.
    pub svgd_step: f64,
    /// Diagonal of the sampling covariance, (m/s)^2.
    pub sigma: Vec3,
    /// Step duration in seconds.
    pub dt: f64,
    /// Speed limit; only its Euclidean norm is used.
    pub u_max: ControlInput,
    /// Finite-difference perturbation in m/s.
    pub fd_step: f64,
    pub weights: CostWeights,
    pub variant: Variant,
    /// Additive constant of the optimality likelihood.
    pub likelihood_offset: f64,
    /// Cost added to rollouts that penetrate a sensed obstacle.
    pub collision_penalty: f64,
    pub robot_radius: f64,
    /// Lower clamp of the obstacle distance.
    pub d_min: f64,
    /// Obstacle distance used when nothing is sensed, and upper clamp.
    pub d_max: f64,
    pub bandwidth_mode: BandwidthMode,
    /// Shift the warm start left by one knot between solves.
    pub shift_warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            horizon: 150,
            control_points: 4,
            svgd_iterations: 3,
            lambda: 1.0,
            svgd_step: 0.05,
            sigma: Vec3::new(0.045, 0.045, 0.01),
            dt: 0.1,
            u_max: Vec3::new(1.85, 0.0, 0.0),
            fd_step: 0.05,
            weights: CostWeights::default(),
            variant: Variant::ScpSvgd,
            likelihood_offset: 1000.0,
            collision_penalty: 1e6,
            robot_radius: 0.25,
            d_min: 0.01,
            d_max: 100.0,
            bandwidth_mode: BandwidthMode::Paper,
            shift_warm_start: false,
        }
    }
}

impl SolverConfig {
    /// Default configuration for `variant`. Vanilla MPPI gets `M = T` and a
    /// one-step warm-start shift.
    pub fn for_variant(variant: Variant) -> Self {
        let mut cfg = Self {
            variant,
            ..Self::default()
        };
        if variant == Variant::Mppi {
            cfg.control_points = cfg.horizon;
            cfg.shift_warm_start = true;
        }
        cfg
    }

    /// Number of SVGD iterations that actually run for this variant.
    pub fn effective_svgd_iterations(&self) -> usize {
        match self.variant {
            Variant::ScpSvgd => self.svgd_iterations,
            Variant::Mppi | Variant::ScpNoSvgd => 0,
        }
    }

    pub fn u_max_norm(&self) -> f64 {
        self.u_max.norm()
    }
}

fn is_symmetric_psd(m: &Matrix3<f64>) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return false;
    }
    SymmetricEigen::new(*m)
        .eigenvalues
        .iter()
        .all(|&l| l >= -1e-12 * scale)
}

/// Returns `config` unchanged if every invariant holds, otherwise an error
/// listing all violations.
pub fn validate_config(config: SolverConfig) -> Result<SolverConfig> {
    let mut v = Vec::new();
    let c = &config;
    if c.samples < 1 {
        v.push(format!("samples (K) must be >= 1, got {}", c.samples));
    }
    if c.horizon < 2 {
        v.push(format!("horizon (T) must be >= 2, got {}", c.horizon));
    }
    if c.control_points < 2 {
        v.push(format!("control_points (M) must be >= 2, got {}", c.control_points));
    }
    if c.control_points > c.horizon {
        v.push(format!(
            "control_points (M={}) must not exceed horizon (T={})",
            c.control_points, c.horizon
        ));
    }
    if c.variant == Variant::Mppi && c.control_points != c.horizon {
        v.push(format!(
            "variant mppi requires control_points == horizon, got M={} T={}",
            c.control_points, c.horizon
        ));
    }
    let positive = [
        ("lambda", c.lambda),
        ("svgd_step", c.svgd_step),
        ("dt", c.dt),
        ("fd_step", c.fd_step),
        ("likelihood_offset", c.likelihood_offset),
        ("d_min", c.d_min),
    ];
    for (name, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            v.push(format!("{name} must be finite and > 0, got {value}"));
        }
    }
    if !(c.d_max.is_finite() && c.d_max >= c.d_min) {
        v.push(format!("d_max must be finite and >= d_min, got {}", c.d_max));
    }
    let nonneg = [
        ("collision_penalty", c.collision_penalty),
        ("robot_radius", c.robot_radius),
        ("w_d", c.weights.w_d),
        ("w_v", c.weights.w_v),
    ];
    for (name, value) in nonneg {
        if !(value.is_finite() && value >= 0.0) {
            v.push(format!("{name} must be finite and >= 0, got {value}"));
        }
    }
    if c.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        v.push(format!(
            "sigma diagonal must be finite and >= 0, got [{}, {}, {}]",
            c.sigma.x, c.sigma.y, c.sigma.z
        ));
    }
    if c.u_max.iter().any(|s| !s.is_finite()) {
        v.push("u_max must be finite".into());
    }
    if !is_symmetric_psd(&c.weights.q) {
        v.push("Q must be symmetric positive semi-definite".into());
    }
    if !is_symmetric_psd(&c.weights.r) {
        v.push("R must be symmetric positive semi-definite".into());
    }
    if v.is_empty() {
        Ok(config)
    } else {
        Err(Error::InvalidConfig { violations: v })
    }
}

/// A simulated trajectory with its sequence cost.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// `T + 1` states starting at the rollout's initial state.
    pub trajectory: Vec<State>,
    pub cost: f64,
    /// Some predicted state penetrated a sensed obstacle.
    pub collided: bool,
}
