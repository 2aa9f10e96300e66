use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlInput, SolverConfig, State, Vec3};
use crate::solver::{solve_with, warm_start_from, SolveOptions};
use crate::world::{collision, integrate_scan_in_place, lidar_scan, Environment, SensedObstacles};

use super::compute_smoothness;

/// Termination thresholds for one closed-loop trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialLimits {
    /// Distance to goal that counts as reached, meters.
    pub goal_tol: f64,
    /// Simulated-time budget, seconds.
    pub max_time: f64,
    /// Window for the stuck test, seconds.
    pub stuck_window: f64,
    /// Minimum displacement over the window, meters.
    pub stuck_radius: f64,
}

impl Default for TrialLimits {
    fn default() -> Self {
        Self {
            goal_tol: 0.5,
            max_time: 120.0,
            stuck_window: 10.0,
            stuck_radius: 0.3,
        }
    }
}

/// Planar LiDAR parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorConfig {
    pub beams: usize,
    pub max_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            beams: 360,
            max_range: 8.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrialSettings {
    pub limits: TrialLimits,
    pub sensor: SensorConfig,
    /// Keep the sampled trajectories of the final solve for plotting.
    pub capture_candidates: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Reached,
    Collided,
    Stuck,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Collided => "collided",
            Outcome::Stuck => "stuck",
            Outcome::Timeout => "timeout",
        }
    }

    /// Integer code written to trajectory files.
    pub fn code(self) -> u8 {
        match self {
            Outcome::Reached => 1,
            Outcome::Collided => 2,
            Outcome::Stuck => 3,
            Outcome::Timeout => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Outcome::Reached),
            2 => Some(Outcome::Collided),
            3 => Some(Outcome::Stuck),
            4 => Some(Outcome::Timeout),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reached" => Ok(Outcome::Reached),
            "collided" => Ok(Outcome::Collided),
            "stuck" => Ok(Outcome::Stuck),
            "timeout" => Ok(Outcome::Timeout),
            other => Err(Error::InvalidArgs(format!("unknown outcome `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub outcome: Outcome,
    /// Executed steps × dt, seconds.
    pub flight_time: f64,
    /// Path length / flight time, m/s (0 for a zero-length trial).
    pub avg_speed: f64,
    pub path_length: f64,
    /// Executed states, starting with the start state.
    pub path: Vec<State>,
    /// Executed commands; `controls[i]` moved `path[i]` to `path[i + 1]`.
    pub controls: Vec<ControlInput>,
    /// `None` with fewer than three executed commands.
    pub smoothness: Option<f64>,
    /// Solves per wall-clock second.
    pub solve_rate: f64,
    pub max_command_norm: f64,
    pub dt: f64,
    /// Sampled trajectories of the last solve, when captured.
    pub candidates: Option<Vec<Vec<Vec3>>>,
}

impl TrialResult {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (step as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Closed-loop run: scan, update the sensed map, solve, execute the first
/// command for one step, until the goal is reached, a ground-truth collision
/// happens, the vehicle stalls, or time runs out.
pub fn run_trial(env: &Environment, cfg: &SolverConfig, settings: &TrialSettings, seed: u64) -> Result<TrialResult> {
    let limits = &settings.limits;
    let dt = cfg.dt;
    let max_steps = (limits.max_time / dt).round() as usize;
    let window = (limits.stuck_window / dt).round().max(1.0) as usize;

    let mut state = State::new(env.start);
    let mut path = vec![state];
    let mut controls: Vec<ControlInput> = Vec::new();
    let mut sensed = SensedObstacles::new();
    let mut warm = warm_start_from(None, cfg)?;
    let mut solve_time = 0.0;
    let mut candidates = None;
    let options = SolveOptions {
        capture_candidates: settings.capture_candidates,
    };

    let outcome = loop {
        if (state.position - env.goal).norm() <= limits.goal_tol {
            break Outcome::Reached;
        }
        if controls.len() >= max_steps {
            break Outcome::Timeout;
        }
        let scan = lidar_scan(&state, env, settings.sensor.beams, settings.sensor.max_range);
        integrate_scan_in_place(&mut sensed, &scan, env);

        let out = solve_with(&state, &env.goal, &sensed, &warm, cfg, step_seed(seed, controls.len()), options)?;
        solve_time += out.diagnostics.elapsed;
        let u = out.first_command;
        warm = warm_start_from(Some(&out), cfg)?;
        if out.candidates.is_some() {
            candidates = out.candidates;
        }

        state = crate::cost::step(&state, &u, dt);
        controls.push(u);
        path.push(state);

        if collision(&state.position, env, cfg.robot_radius) {
            break Outcome::Collided;
        }
        let n = path.len();
        if n > window && (state.position - path[n - 1 - window].position).norm() < limits.stuck_radius {
            break Outcome::Stuck;
        }
    };

    let steps = controls.len();
    let flight_time = steps as f64 * dt;
    let path_length: f64 = path
        .windows(2)
        .map(|w| (w[1].position - w[0].position).norm())
        .sum();
    Ok(TrialResult {
        outcome,
        flight_time,
        avg_speed: if flight_time > 0.0 { path_length / flight_time } else { 0.0 },
        path_length,
        smoothness: compute_smoothness(&controls).ok(),
        solve_rate: if solve_time > 0.0 { steps as f64 / solve_time } else { 0.0 },
        max_command_norm: controls.iter().map(|u| u.norm()).fold(0.0, f64::max),
        path,
        controls,
        dt,
        candidates,
    })
}
