//! Point-mass dynamics, the navigation stage cost, rollouts, and the
//! optimality likelihood that drives SVGD.

use crate::error::{Error, Result};
use crate::model::{ControlInput, ControlSequence, CostWeights, RolloutResult, SolverConfig, State, Vec3};
use crate::world::{raw_surface_distance, DistanceClamp, SensedObstacles};

/// Stage-cost terms, summed over a rollout or for a single step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    /// `Δxᵀ Q Δx`
    pub tracking: f64,
    /// `½ uᵀ R u`
    pub effort: f64,
    /// `w_d / d`
    pub obstacle: f64,
    /// Speed-limit penalty.
    pub constraint: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn add(&mut self, other: &CostBreakdown) {
        self.tracking += other.tracking;
        self.effort += other.effort;
        self.obstacle += other.obstacle;
        self.constraint += other.constraint;
        self.total += other.total;
    }
}

/// `x_{t+1} = x_t + u_t·dt`
pub fn step(x: &State, u: &ControlInput, dt: f64) -> State {
    State {
        position: x.position + u * dt,
        time_index: x.time_index + 1,
    }
}

/// Zero up to and on the speed sphere `‖u‖ = ‖u_max‖`; above it
/// `1 + w_v(‖u‖ − ‖u_max‖)`.
pub fn constraint_penalty(u: &ControlInput, u_max: &ControlInput, w_v: f64) -> f64 {
    speed_penalty(u.norm(), u_max.norm(), w_v)
}

#[inline]
pub(crate) fn speed_penalty(speed: f64, limit: f64, w_v: f64) -> f64 {
    if speed > limit {
        1.0 + w_v * (speed - limit)
    } else {
        0.0
    }
}

/// All four terms at one step, `d` already clamped.
pub fn stage_cost_breakdown(
    x: &State,
    u: &ControlInput,
    goal: &Vec3,
    d: f64,
    w: &CostWeights,
    u_max: &ControlInput,
) -> CostBreakdown {
    let err = x.position - goal;
    let tracking = (err.transpose() * w.q * err)[0];
    let effort = 0.5 * (u.transpose() * w.r * u)[0];
    let obstacle = w.w_d / d;
    let constraint = constraint_penalty(u, u_max, w.w_v);
    CostBreakdown {
        tracking,
        effort,
        obstacle,
        constraint,
        total: tracking + effort + obstacle + constraint,
    }
}

pub fn stage_cost(
    x: &State,
    u: &ControlInput,
    goal: &Vec3,
    d: f64,
    w: &CostWeights,
    u_max: &ControlInput,
) -> f64 {
    stage_cost_breakdown(x, u, goal, d, w, u_max).total
}

pub(crate) fn clamp_of(cfg: &SolverConfig) -> DistanceClamp {
    DistanceClamp {
        min: cfg.d_min,
        max: cfg.d_max,
    }
}

/// Rollout with an explicit terminal cost `ψ(x_T)`.
///
/// Stage costs are charged at `x_0 .. x_{T-1}` together with the control
/// applied there. A rollout counts as collided when any predicted state
/// `x_1 .. x_T` touches a sensed obstacle inflated by the robot radius; the
/// configured collision penalty is then added once.
pub fn rollout_with_terminal(
    x0: &State,
    seq: &ControlSequence,
    sensed: &SensedObstacles,
    goal: &Vec3,
    cfg: &SolverConfig,
    terminal: impl Fn(&State) -> f64,
) -> (RolloutResult, CostBreakdown) {
    let clamp = clamp_of(cfg);
    let obstacles = sensed.known();
    let mut trajectory = Vec::with_capacity(seq.len() + 1);
    trajectory.push(*x0);
    let mut sum = CostBreakdown::default();
    let mut collided = false;
    let mut x = *x0;
    for u in &seq.inputs {
        let raw = raw_surface_distance(&x.position, obstacles, cfg.robot_radius);
        let stage = stage_cost_breakdown(&x, u, goal, clamp.apply(raw), &cfg.weights, &cfg.u_max);
        sum.add(&stage);
        x = step(&x, u, cfg.dt);
        if let Some(d) = raw_surface_distance(&x.position, obstacles, cfg.robot_radius) {
            collided |= d <= 0.0;
        }
        trajectory.push(x);
    }
    let mut cost = sum.total + terminal(&x);
    if collided {
        cost += cfg.collision_penalty;
    }
    (
        RolloutResult {
            trajectory,
            cost,
            collided,
        },
        sum,
    )
}

/// Rollout with zero terminal cost.
pub fn rollout(
    x0: &State,
    seq: &ControlSequence,
    sensed: &SensedObstacles,
    goal: &Vec3,
    cfg: &SolverConfig,
) -> RolloutResult {
    rollout_with_terminal(x0, seq, sensed, goal, cfg, |_| 0.0).0
}

/// Cost-only rollout without materializing the trajectory.
pub(crate) fn rollout_cost(
    x0: &Vec3,
    inputs: &[ControlInput],
    obstacles: &[crate::world::Cylinder],
    goal: &Vec3,
    cfg: &SolverConfig,
) -> f64 {
    let clamp = clamp_of(cfg);
    let w = &cfg.weights;
    let limit = cfg.u_max.norm();
    let mut x = *x0;
    let mut total = 0.0;
    let mut collided = false;
    let mut raw = raw_surface_distance(&x, obstacles, cfg.robot_radius);
    for u in inputs {
        let err = x - goal;
        total += (err.transpose() * w.q * err)[0]
            + 0.5 * (u.transpose() * w.r * u)[0]
            + w.w_d / clamp.apply(raw)
            + speed_penalty(u.norm(), limit, w.w_v);
        x += u * cfg.dt;
        // The distance at x_{t+1} is both this step's collision check and
        // the next step's obstacle term.
        raw = raw_surface_distance(&x, obstacles, cfg.robot_radius);
        collided |= raw.is_some_and(|d| d <= 0.0);
    }
    if collided {
        total += cfg.collision_penalty;
    }
    total
}

/// `p_k = ((S_k − β) + offset)⁻¹` with `β = min_k S_k`.
pub fn optimality_likelihood(costs: &[f64], offset: f64) -> Result<Vec<f64>> {
    let beta = costs
        .iter()
        .copied()
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyBatch)?;
    Ok(costs.iter().map(|c| 1.0 / ((c - beta) + offset)).collect())
}
