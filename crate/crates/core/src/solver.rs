//! Sampling, weighting and update machinery shared by vanilla MPPI and the
//! sparse-control-point variants.
//!
//! One [`solve`] call:
//!
//! 1. draws `K` noise matrices at the sparse knots,
//! 2. spline-interpolates `warm + ΔŨ⁽ᵏ⁾` and scores each rollout,
//! 3. for [`Variant::ScpSvgd`], transports the noise particles with SVGD and
//!    re-scores them,
//! 4. forms softmax weights `exp(−(S_k − β)/λ)/η` and moves every knot by
//!    the weighted mean noise.
//!
//! The nominal sequence is the warm start itself, so the cross term between
//! the previous optimum and the nominal sequence vanishes and the weights
//! depend on the sequence costs alone.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cost::{clamp_of, rollout, rollout_cost, speed_penalty};
use crate::error::{Error, Result};
use crate::model::{
    validate_config, ControlInput, ControlSequence, NoiseMatrix, SolverConfig, SparseControlPoints,
    State, Vec3,
};
use crate::spline;
use crate::svgd::{self, ParticleBatch, ParticleScorer};
use crate::world::{Cylinder, SensedObstacles, Vec2};

#[derive(Clone, Debug, PartialEq)]
pub struct SolveDiagnostics {
    /// Lowest sequence cost among the samples that were weighted.
    pub best_cost: f64,
    /// Shannon entropy of the weights, nats.
    pub weights_entropy: f64,
    /// `(Σw)²/Σw²`, in `[1, K]`.
    pub effective_sample_size: f64,
    /// Costs right after sampling.
    pub initial_costs: Vec<f64>,
    /// Costs after SVGD transport; `None` when no transport ran.
    pub transported_costs: Option<Vec<f64>>,
    /// Wall-clock time of the solve, seconds.
    pub elapsed: f64,
}

impl SolveDiagnostics {
    /// Field-wise equality ignoring the wall-clock time.
    pub fn same_values(&self, other: &Self) -> bool {
        self.best_cost == other.best_cost
            && self.weights_entropy == other.weights_entropy
            && self.effective_sample_size == other.effective_sample_size
            && self.initial_costs == other.initial_costs
            && self.transported_costs == other.transported_costs
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    /// `U* = CubicSpline(Ũ*)`
    pub dense_sequence: ControlSequence,
    /// `Ũ*`, the warm start for the next call.
    pub sparse_points: SparseControlPoints,
    /// `u₀*`, the command to execute.
    pub first_command: ControlInput,
    pub diagnostics: SolveDiagnostics,
    /// Predicted positions of every weighted sample, when requested.
    pub candidates: Option<Vec<Vec<Vec3>>>,
}

impl SolveOutput {
    /// Equality of everything except timing.
    pub fn same_values(&self, other: &Self) -> bool {
        self.dense_sequence == other.dense_sequence
            && self.sparse_points == other.sparse_points
            && self.first_command == other.first_command
            && self.diagnostics.same_values(&other.diagnostics)
            && self.candidates == other.candidates
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Keep the predicted trajectory of each weighted sample.
    pub capture_candidates: bool,
}

/// `K` noise matrices of `M` rows with independent zero-mean Gaussian
/// entries of per-axis variance `sigma`.
pub fn sample_noise(samples: usize, rows: usize, sigma: &Vec3, seed: u64) -> Vec<NoiseMatrix> {
    let std = sigma.map(|v| v.max(0.0).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| NoiseMatrix {
            deltas: (0..rows)
                .map(|_| {
                    let z: [f64; 3] = [
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ];
                    Vec3::new(std.x * z[0], std.y * z[1], std.z * z[2])
                })
                .collect(),
        })
        .collect()
}

/// Softmax weights `exp(−(S_k − β)/λ) / η` with `β = min S`.
pub fn compute_weights(costs: &[f64], lambda: f64) -> Vec<f64> {
    let beta = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = costs.iter().map(|c| (-(c - beta) / lambda).exp()).collect();
    let eta: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / eta).collect()
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let sum: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    sum * sum / sq
}

fn entropy(weights: &[f64]) -> f64 {
    -weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|w| w * w.ln())
        .sum::<f64>()
}

/// `ũ*_m = ũ_m + Σ_k w_k Δũ⁽ᵏ⁾_m`
pub fn weighted_update(
    base: &SparseControlPoints,
    noises: &[NoiseMatrix],
    weights: &[f64],
) -> Result<SparseControlPoints> {
    if noises.len() != weights.len() {
        return Err(Error::WeightMismatch {
            weights: weights.len(),
            samples: noises.len(),
        });
    }
    let mut points = base.points().to_vec();
    for (noise, &w) in noises.iter().zip(weights) {
        if noise.deltas.len() != points.len() {
            return Err(Error::InvalidArgs("noise rows do not match knot count".into()));
        }
        for (p, d) in points.iter_mut().zip(&noise.deltas) {
            *p += w * d;
        }
    }
    Ok(base.with_points(points))
}

/// Next warm start: the previous optimum, or zero knots on the uniform grid
/// when there is none. With `shift_warm_start` the knots move one slot
/// earlier and the last knot value is repeated.
pub fn warm_start_from(previous: Option<&SolveOutput>, cfg: &SolverConfig) -> Result<SparseControlPoints> {
    match previous {
        None => SparseControlPoints::zeros(cfg.control_points, cfg.horizon),
        Some(out) if !cfg.shift_warm_start => Ok(out.sparse_points.clone()),
        Some(out) => {
            let pts = out.sparse_points.points();
            let mut shifted = pts[1..].to_vec();
            shifted.push(pts[pts.len() - 1]);
            Ok(out.sparse_points.with_points(shifted))
        }
    }
}

/// Scores flattened noise particles by interpolating `warm + Δ` and rolling
/// out the dense sequence.
pub struct SequenceScorer<'a> {
    x0: Vec3,
    goal: Vec3,
    obstacles: &'a [Cylinder],
    warm: &'a SparseControlPoints,
    cfg: &'a SolverConfig,
    probe: Option<ProbeTables>,
}

/// Precomputed spline basis for incremental finite-difference probes.
struct ProbeTables {
    /// `T × M`, row-major.
    basis: Vec<f64>,
    /// `(T+1) × M` running sums of the basis rows, row-major.
    prefix: Vec<f64>,
    /// `max_m |prefix[t][m]|` per row.
    prefix_bound: Vec<f64>,
    /// `max_m |basis[t][m]|` per row.
    basis_bound: Vec<f64>,
    /// Second-order coefficient of the quadratic terms per knot and axis,
    /// `Σ_t (dt·P[t][m])²·Q_aa + ½·B[t][m]²·R_aa`.
    curvature: Vec<[f64; 3]>,
}

impl ProbeTables {
    fn new(knots: &[usize], cfg: &SolverConfig) -> Result<Self> {
        let horizon = cfg.horizon;
        let m = knots.len();
        let basis = spline::basis(knots, horizon)?;
        let mut prefix = vec![0.0; (horizon + 1) * m];
        for t in 0..horizon {
            for j in 0..m {
                prefix[(t + 1) * m + j] = prefix[t * m + j] + basis[t * m + j];
            }
        }
        let row_bound = |rows: &[f64]| -> Vec<f64> {
            rows.chunks_exact(m)
                .map(|row| row.iter().fold(0.0f64, |a, v| a.max(v.abs())))
                .collect()
        };
        let w = &cfg.weights;
        let curvature = (0..m)
            .map(|j| {
                let mut c = [0.0; 3];
                for t in 0..horizon {
                    let p = cfg.dt * prefix[t * m + j];
                    let b = basis[t * m + j];
                    for (a, ca) in c.iter_mut().enumerate() {
                        *ca += p * p * w.q[(a, a)] + 0.5 * b * b * w.r[(a, a)];
                    }
                }
                c
            })
            .collect();
        Ok(Self {
            prefix_bound: row_bound(&prefix),
            basis_bound: row_bound(&basis),
            basis,
            prefix,
            curvature,
        })
    }
}

/// Only x and y enter the obstacle distance.
const PLANAR_AXES: usize = 2;

impl<'a> SequenceScorer<'a> {
    pub fn new(
        x0: &State,
        goal: &Vec3,
        sensed: &'a SensedObstacles,
        warm: &'a SparseControlPoints,
        cfg: &'a SolverConfig,
    ) -> Result<Self> {
        let probe = if cfg.effective_svgd_iterations() > 0 {
            Some(ProbeTables::new(warm.knot_indices(), cfg)?)
        } else {
            None
        };
        Ok(Self {
            x0: x0.position,
            goal: *goal,
            obstacles: sensed.known(),
            warm,
            cfg,
            probe,
        })
    }

    fn dense(&self, particle: &[f64]) -> ControlSequence {
        let points = self.warm.perturbed(&NoiseMatrix::from_flat(particle));
        spline::interpolate(&points, self.cfg.horizon).expect("knots validated on construction")
    }

    fn cost_of(&self, seq: &ControlSequence) -> f64 {
        rollout_cost(&self.x0, &seq.inputs, self.obstacles, &self.goal, self.cfg)
    }

    /// Incremental central probes, equal to re-scoring each perturbed
    /// particle up to rounding. The dense sequence is linear in the knots,
    /// so shifting knot `m` on axis `a` by `s` shifts `u_t` by `s·B[t][m]`
    /// and `x_t` by `s·dt·P[t][m]` on that axis only. The quadratic terms
    /// change by `s·g + s²·c` with `g` a weighted sum over the base rollout.
    /// The speed penalty is re-evaluated only on steps where the perturbed
    /// speed can exceed the limit, and the obstacle distance only against
    /// obstacles that could become nearest within the largest possible
    /// displacement.
    fn fast_probes(&self, tables: &ProbeTables, particle: &[f64], h: f64) -> Vec<(f64, f64)> {
        let cfg = self.cfg;
        let w = &cfg.weights;
        let clamp = clamp_of(cfg);
        let horizon = cfg.horizon;
        let knots = self.warm.len();
        let dt = cfg.dt;
        let limit = cfg.u_max.norm();
        let seq = self.dense(particle);
        let u = &seq.inputs;

        let mut xs = Vec::with_capacity(horizon + 1);
        let mut x = self.x0;
        xs.push(x);
        for ut in u {
            x += ut * dt;
            xs.push(x);
        }

        // Candidate obstacles per state, flattened as (center − x_t, radius
        // + robot radius) so a probe only adds its planar offset.
        let mut cand_start = Vec::with_capacity(horizon + 2);
        let mut cand: Vec<(Vec2, f64)> = Vec::new();
        let mut raws = Vec::with_capacity(self.obstacles.len());
        let mut base_terms = Vec::with_capacity(horizon + 1);
        let mut base_collided = false;
        for (t, xt) in xs.iter().enumerate() {
            cand_start.push(cand.len());
            raws.clear();
            raws.extend(self.obstacles.iter().map(|c| c.surface_distance(xt, cfg.robot_radius)));
            let raw_min = raws.iter().copied().fold(f64::INFINITY, f64::min);
            if !raws.is_empty() {
                let reach = raw_min + 2.0 * h * dt * tables.prefix_bound[t] * (1.0 + 1e-9) + 1e-12;
                cand.extend(
                    raws.iter()
                        .zip(self.obstacles)
                        .filter(|(&r, _)| r <= reach)
                        .map(|(_, c)| (c.center - xt.xy(), c.radius + cfg.robot_radius)),
                );
            }
            let raw = (!raws.is_empty()).then_some(raw_min);
            base_terms.push(w.w_d / clamp.apply(raw));
            if t > 0 {
                base_collided |= raw.is_some_and(|d| d <= 0.0);
            }
        }
        cand_start.push(cand.len());
        let base_obstacle: f64 = base_terms[..horizon].iter().sum();

        let q_err: Vec<Vec3> = xs[..horizon].iter().map(|x| w.q * (x - self.goal)).collect();
        let r_u: Vec<Vec3> = u.iter().map(|ut| w.r * ut).collect();
        let base_quad: f64 = (0..horizon)
            .map(|t| (xs[t] - self.goal).dot(&q_err[t]) + 0.5 * u[t].dot(&r_u[t]))
            .sum();
        let speeds: Vec<f64> = u.iter().map(|ut| ut.norm()).collect();
        let base_penalty: f64 = speeds.iter().map(|&v| speed_penalty(v, limit, w.w_v)).sum();
        // Steps whose speed can cross the limit under some probe.
        let near_limit: Vec<usize> = (0..horizon)
            .filter(|&t| speeds[t] + h * tables.basis_bound[t] > limit)
            .collect();

        // Nearest surface distance at x_t shifted by `shift` along `axis`.
        let nearest = |t: usize, axis: usize, shift: f64| -> Option<f64> {
            cand[cand_start[t]..cand_start[t + 1]]
                .iter()
                .map(|(offset, radius)| {
                    let mut o = *offset;
                    o[axis] -= shift;
                    o.norm() - radius
                })
                .min_by(f64::total_cmp)
        };

        // Costs at +s and −s.
        let eval = |m: usize, axis: usize, gradient: f64| -> (f64, f64) {
            let s = h;
            let curv = s * s * tables.curvature[m][axis];
            let mut total = [base_quad + s * gradient + curv, base_quad - s * gradient + curv];
            for (sign, tot) in [1.0, -1.0].into_iter().zip(total.iter_mut()) {
                let mut penalty = base_penalty;
                for &t in &near_limit {
                    let du = sign * s * tables.basis[t * knots + m];
                    let sp = (speeds[t] * speeds[t] + 2.0 * du * u[t][axis] + du * du).max(0.0).sqrt();
                    penalty += speed_penalty(sp, limit, w.w_v) - speed_penalty(speeds[t], limit, w.w_v);
                }
                *tot += penalty;
            }
            if axis < PLANAR_AXES && !self.obstacles.is_empty() {
                // x_0 never moves.
                let mut obstacle = [base_terms[0]; 2];
                let mut collided = [false; 2];
                for t in 1..=horizon {
                    let shift = s * dt * tables.prefix[t * knots + m];
                    for (j, sh) in [shift, -shift].into_iter().enumerate() {
                        let d = nearest(t, axis, sh);
                        if t < horizon {
                            obstacle[j] += w.w_d / clamp.apply(d);
                        }
                        collided[j] |= d.is_some_and(|d| d <= 0.0);
                    }
                }
                for j in 0..2 {
                    total[j] += obstacle[j] + if collided[j] { cfg.collision_penalty } else { 0.0 };
                }
            } else {
                let extra = base_obstacle + if base_collided { cfg.collision_penalty } else { 0.0 };
                total[0] += extra;
                total[1] += extra;
            }
            (total[0], total[1])
        };

        (0..knots * 3)
            .map(|coord| {
                let (m, axis) = (coord / 3, coord % 3);
                let gradient: f64 = (0..horizon)
                    .map(|t| {
                        2.0 * dt * tables.prefix[t * knots + m] * q_err[t][axis]
                            + tables.basis[t * knots + m] * r_u[t][axis]
                    })
                    .sum();
                eval(m, axis, gradient)
            })
            .collect()
    }
}

impl ParticleScorer for SequenceScorer<'_> {
    fn score(&self, particle: &[f64]) -> f64 {
        self.cost_of(&self.dense(particle))
    }

    fn central_probes(&self, particle: &[f64], h: f64) -> Vec<(f64, f64)> {
        match &self.probe {
            Some(tables) => self.fast_probes(tables, particle, h),
            None => {
                let mut x = particle.to_vec();
                (0..x.len())
                    .map(|i| {
                        let orig = x[i];
                        x[i] = orig + h;
                        let plus = self.score(&x);
                        x[i] = orig - h;
                        let minus = self.score(&x);
                        x[i] = orig;
                        (plus, minus)
                    })
                    .collect()
            }
        }
    }
}

/// One MPC solve from `x0` towards `goal`.
pub fn solve(
    x0: &State,
    goal: &Vec3,
    sensed: &SensedObstacles,
    warm: &SparseControlPoints,
    cfg: &SolverConfig,
    rng_seed: u64,
) -> Result<SolveOutput> {
    solve_with(x0, goal, sensed, warm, cfg, rng_seed, SolveOptions::default())
}

pub fn solve_with(
    x0: &State,
    goal: &Vec3,
    sensed: &SensedObstacles,
    warm: &SparseControlPoints,
    cfg: &SolverConfig,
    rng_seed: u64,
    options: SolveOptions,
) -> Result<SolveOutput> {
    let started = Instant::now();
    let cfg = &validate_config(cfg.clone())?;
    if warm.len() != cfg.control_points || warm.horizon() != cfg.horizon {
        return Err(Error::InvalidArgs(format!(
            "warm start has {} knots over horizon {}, config wants M={} T={}",
            warm.len(),
            warm.horizon(),
            cfg.control_points,
            cfg.horizon
        )));
    }

    let scorer = SequenceScorer::new(x0, goal, sensed, warm, cfg)?;
    let mut noises = sample_noise(cfg.samples, cfg.control_points, &cfg.sigma, rng_seed);
    let initial_costs: Vec<f64> = noises
        .par_iter()
        .map(|n| scorer.score(&n.to_flat()))
        .collect();

    let mut costs = initial_costs.clone();
    let mut transported_costs = None;
    if cfg.effective_svgd_iterations() > 0 {
        let batch = ParticleBatch::new(noises.iter().map(NoiseMatrix::to_flat).collect(), costs)?;
        let moved = svgd::transport(batch, &scorer, cfg)?;
        noises = moved
            .particles
            .iter()
            .map(|p| NoiseMatrix::from_flat(p))
            .collect();
        costs = moved.particles.par_iter().map(|p| scorer.score(p)).collect();
        transported_costs = Some(costs.clone());
    }
    if let Some(k) = costs.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteScore(k));
    }

    let weights = compute_weights(&costs, cfg.lambda);
    let sparse_points = weighted_update(warm, &noises, &weights)?;
    let dense_sequence = spline::interpolate(&sparse_points, cfg.horizon)?;
    let first_command = dense_sequence.inputs[0];

    let candidates = options.capture_candidates.then(|| {
        noises
            .par_iter()
            .map(|n| {
                let seq = scorer.dense(&n.to_flat());
                rollout(x0, &seq, sensed, goal, cfg)
                    .trajectory
                    .iter()
                    .map(|s| s.position)
                    .collect()
            })
            .collect()
    });

    Ok(SolveOutput {
        dense_sequence,
        sparse_points,
        first_command,
        diagnostics: SolveDiagnostics {
            best_cost: costs.iter().copied().fold(f64::INFINITY, f64::min),
            weights_entropy: entropy(&weights),
            effective_sample_size: effective_sample_size(&weights),
            initial_costs,
            transported_costs,
            elapsed: started.elapsed().as_secs_f64(),
        },
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostWeights, Variant};
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    #[test]
    fn zero_sigma_gives_zero_noise() {
        let n = sample_noise(5, 4, &Vec3::zeros(), 3);
        assert!(n.iter().all(|m| m.deltas.iter().all(|d| *d == Vec3::zeros())));
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let s = Vec3::new(0.25, 0.5, 0.1);
        assert_eq!(sample_noise(7, 4, &s, 42), sample_noise(7, 4, &s, 42));
        assert_ne!(sample_noise(7, 4, &s, 42), sample_noise(7, 4, &s, 43));
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let n = sample_noise(10_000, 4, &Vec3::repeat(0.25), 9);
        for axis in 0..3 {
            let vals: Vec<f64> = n.iter().flat_map(|m| m.deltas.iter().map(move |d| d[axis])).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            assert!((var - 0.25).abs() < 0.05 * 0.25, "axis {axis}: {var}");
        }
    }

    #[test]
    fn weight_examples() {
        assert!(compute_weights(&[3.0; 4], 1.0).iter().all(|&w| w == 0.25));
        let w = compute_weights(&[0.0, 1e9], 1.0);
        assert!((w[0] - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12);
        // Direct softmax of the negated costs.
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|c| (-c).exp()).collect();
        let z: f64 = e.iter().sum();
        let w = compute_weights(&[1.0, 2.0, 3.0], 1.0);
        for (a, b) in w.iter().zip(e.iter().map(|v| v / z)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w[0] - 0.66524).abs() < 1e-5);
        assert!((w[1] - 0.24473).abs() < 1e-5);
        assert!((w[2] - 0.09003).abs() < 1e-5);
    }

    fn base() -> SparseControlPoints {
        SparseControlPoints::new(
            vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.5, 0.0, 1.0), Vec3::new(1.0, 1.0, 1.0)],
            vec![0, 4, 9],
        )
        .unwrap()
    }

    fn noise(vals: [[f64; 3]; 3]) -> NoiseMatrix {
        NoiseMatrix {
            deltas: vals.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect(),
        }
    }

    #[test]
    fn weighted_update_examples() {
        let n = vec![
            noise([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]]),
            noise([[-1.0, 0.5, 0.0], [0.0, 0.0, 0.0], [2.0, 2.0, 2.0]]),
            noise([[0.3, 0.3, 0.3], [-0.1, -0.2, -0.3], [0.0, 1.0, 0.0]]),
        ];
        let close = |a: &SparseControlPoints, b: &SparseControlPoints| {
            a.points().iter().zip(b.points()).all(|(p, q)| (p - q).amax() < 1e-15)
        };
        let one_hot = weighted_update(&base(), &n, &[0.0, 1.0, 0.0]).unwrap();
        assert!(close(&one_hot, &base().perturbed(&n[1])));

        let sym = vec![n[0].clone(), NoiseMatrix { deltas: n[0].deltas.iter().map(|d| -d).collect() }];
        assert!(close(&weighted_update(&base(), &sym, &[0.5, 0.5]).unwrap(), &base()));

        let w = [0.5, 0.3, 0.2];
        let got = weighted_update(&base(), &n, &w).unwrap();
        for m in 0..3 {
            for a in 0..3 {
                let mut want = base().points()[m][a];
                for k in 0..3 {
                    want += w[k] * n[k].deltas[m][a];
                }
                assert!((got.points()[m][a] - want).abs() < 1e-15);
            }
        }
        assert_eq!(got.knot_indices(), base().knot_indices());
        assert!(matches!(
            weighted_update(&base(), &n, &[1.0]),
            Err(Error::WeightMismatch { weights: 1, samples: 3 })
        ));
    }

    fn small_cfg(variant: Variant) -> SolverConfig {
        let mut cfg = SolverConfig::for_variant(variant);
        cfg.samples = 16;
        cfg.horizon = 30;
        cfg.control_points = if variant == Variant::Mppi { 30 } else { 4 };
        cfg.svgd_iterations = 2;
        cfg
    }

    #[test]
    fn zero_sigma_without_transport_keeps_warm_start() {
        let mut cfg = small_cfg(Variant::ScpNoSvgd);
        cfg.sigma = Vec3::zeros();
        let warm = SparseControlPoints::new(vec![Vec3::new(0.3, 0.1, 0.0); 4], spline::uniform_knots(4, 30).unwrap()).unwrap();
        let out = solve(&State::new(Vec3::zeros()), &Vec3::new(5.0, 0.0, 0.0), &SensedObstacles::new(), &warm, &cfg, 1).unwrap();
        assert_eq!(out.sparse_points, warm);
        assert_eq!(out.first_command, out.dense_sequence.inputs[0]);
    }

    #[test]
    fn mppi_equals_scp_with_dense_knots() {
        let sensed = SensedObstacles::from_cylinders([Cylinder::new(2.0, 0.3, 0.75)]);
        let mppi = small_cfg(Variant::Mppi);
        let scp = SolverConfig {
            variant: Variant::ScpNoSvgd,
            ..mppi.clone()
        };
        let warm = warm_start_from(None, &mppi).unwrap();
        for seed in 0..5 {
            let a = solve(&State::new(Vec3::zeros()), &Vec3::new(4.0, 0.0, 0.0), &sensed, &warm, &mppi, seed).unwrap();
            let b = solve(&State::new(Vec3::zeros()), &Vec3::new(4.0, 0.0, 0.0), &sensed, &warm, &scp, seed).unwrap();
            assert!(a.same_values(&b));
        }
    }

    #[test]
    fn warm_start_round_trip() {
        let cfg = small_cfg(Variant::ScpSvgd);
        let cold = warm_start_from(None, &cfg).unwrap();
        assert!(cold.points().iter().all(|p| *p == Vec3::zeros()));
        assert_eq!(cold.knot_indices(), spline::uniform_knots(4, 30).unwrap().as_slice());
        let out = solve(&State::new(Vec3::zeros()), &Vec3::new(3.0, 1.0, 0.0), &SensedObstacles::new(), &cold, &cfg, 4).unwrap();
        let next = warm_start_from(Some(&out), &cfg).unwrap();
        assert_eq!(next, out.sparse_points);
        SparseControlPoints::new(next.points().to_vec(), next.knot_indices().to_vec()).unwrap();

        let shifted_cfg = SolverConfig { shift_warm_start: true, ..cfg };
        let shifted = warm_start_from(Some(&out), &shifted_cfg).unwrap();
        assert_eq!(shifted.points()[0], out.sparse_points.points()[1]);
        assert_eq!(shifted.points()[3], out.sparse_points.points()[3]);
    }

    #[test]
    fn free_space_command_points_at_goal() {
        // λ on the scale of the cost spread so the update averages many
        // samples instead of copying the single best one.
        let mut cfg = SolverConfig::for_variant(Variant::ScpNoSvgd);
        cfg.samples = 128;
        cfg.horizon = 40;
        cfg.lambda = 100.0;
        cfg.weights = CostWeights {
            q: Matrix3::identity(),
            r: Matrix3::zeros(),
            w_d: 1.0,
            w_v: 10.0,
        };
        let x0 = State::new(Vec3::new(0.0, 0.0, 1.0));
        let goal = Vec3::new(6.0, 2.0, 1.0);
        for seed in 0..20 {
            let mut warm = warm_start_from(None, &cfg).unwrap();
            let mut out = None;
            for i in 0..3 {
                let o = solve(&x0, &goal, &SensedObstacles::new(), &warm, &cfg, 100 * seed + i).unwrap();
                warm = warm_start_from(Some(&o), &cfg).unwrap();
                out = Some(o);
            }
            let u = out.unwrap().first_command;
            assert!(u.dot(&(goal - x0.position)) > 0.0, "seed {seed}: {u:?}");
        }
    }

    #[test]
    fn solve_is_bit_reproducible() {
        let cfg = small_cfg(Variant::ScpSvgd);
        let sensed = SensedObstacles::from_cylinders([Cylinder::new(2.0, 0.2, 0.75)]);
        let warm = warm_start_from(None, &cfg).unwrap();
        let x0 = State::new(Vec3::new(0.0, 0.0, 1.0));
        let goal = Vec3::new(5.0, 0.0, 1.0);
        let a = solve(&x0, &goal, &sensed, &warm, &cfg, 11).unwrap();
        let b = solve(&x0, &goal, &sensed, &warm, &cfg, 11).unwrap();
        assert!(a.same_values(&b));
        assert!(a.diagnostics.transported_costs.is_some());
    }

    #[test]
    fn capture_returns_one_candidate_per_sample() {
        let cfg = small_cfg(Variant::ScpNoSvgd);
        let warm = warm_start_from(None, &cfg).unwrap();
        let out = solve_with(
            &State::new(Vec3::zeros()),
            &Vec3::new(2.0, 0.0, 0.0),
            &SensedObstacles::new(),
            &warm,
            &cfg,
            0,
            SolveOptions { capture_candidates: true },
        )
        .unwrap();
        let c = out.candidates.unwrap();
        assert_eq!(c.len(), cfg.samples);
        assert!(c.iter().all(|traj| traj.len() == cfg.horizon + 1));
    }

    #[test]
    fn fast_probes_match_direct_scoring() {
        let mut cfg = SolverConfig::for_variant(Variant::ScpSvgd);
        cfg.horizon = 60;
        cfg.weights.q = Matrix3::new(1.0, 0.2, 0.0, 0.2, 0.5, 0.1, 0.0, 0.1, 2.0);
        cfg.weights.r = Matrix3::from_diagonal(&Vec3::new(0.3, 0.4, 0.5));
        let sensed = SensedObstacles::from_cylinders([
            Cylinder::new(2.0, 0.4, 0.75),
            Cylinder::new(3.5, -1.0, 0.75),
            Cylinder::new(1.0, -2.0, 0.5),
            Cylinder::new(6.0, 2.0, 0.75),
        ]);
        let warm = SparseControlPoints::new(
            vec![Vec3::new(0.8, 0.1, 0.0), Vec3::new(1.2, -0.3, 0.1), Vec3::new(0.6, 0.5, 0.0), Vec3::new(0.2, 0.0, -0.1)],
            spline::uniform_knots(4, 60).unwrap(),
        )
        .unwrap();
        let x0 = State::new(Vec3::new(0.0, 0.0, 1.0));
        let goal = Vec3::new(8.0, 0.0, 1.0);
        let scorer = SequenceScorer::new(&x0, &goal, &sensed, &warm, &cfg).unwrap();
        let tables = scorer.probe.as_ref().unwrap();
        for (seed, h) in [(0, 0.05), (1, 0.2), (2, 0.5)] {
            for noise in sample_noise(6, 4, &Vec3::repeat(0.5), seed) {
                let flat = noise.to_flat();
                let fast = scorer.fast_probes(tables, &flat, h);
                let mut x = flat.clone();
                for (i, (p, m)) in fast.iter().enumerate() {
                    x[i] = flat[i] + h;
                    let dp = scorer.score(&x);
                    x[i] = flat[i] - h;
                    let dm = scorer.score(&x);
                    x[i] = flat[i];
                    assert!((p - dp).abs() <= 1e-9 * dp.abs().max(1.0), "coord {i}: {p} vs {dp}");
                    assert!((m - dm).abs() <= 1e-9 * dm.abs().max(1.0), "coord {i}: {m} vs {dm}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn weights_are_a_shift_invariant_distribution(
            costs in prop::collection::vec(0.0..500.0f64, 1..40),
            shift in -1e3..1e3f64,
            lambda in 1.0..50.0f64,
        ) {
            let w = compute_weights(&costs, lambda);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = costs.iter().map(|c| c + shift).collect();
            for (a, b) in w.iter().zip(compute_weights(&shifted, lambda)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let ess = effective_sample_size(&w);
            prop_assert!(ess >= 1.0 - 1e-12 && ess <= costs.len() as f64 + 1e-9);
        }
    }
}
