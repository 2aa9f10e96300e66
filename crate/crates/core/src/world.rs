//! Forest environments of vertical cylinders, a planar LiDAR, collision and
//! distance queries, and the environment text format.
//!
//! Obstacles are infinite vertical cylinders; all geometry is evaluated in
//! the xy plane and altitude is left to the cost function.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{State, Vec3};

pub type Vec2 = Vector2<f64>;

/// Obstacle radius used by the generated forests, meters.
pub const FOREST_CYLINDER_RADIUS: f64 = 0.75;

const MAX_FOREST_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cylinder {
    pub center: Vec2,
    pub radius: f64,
}

impl Cylinder {
    pub fn new(x: f64, y: f64, radius: f64) -> Self {
        Self {
            center: Vec2::new(x, y),
            radius,
        }
    }

    /// Signed distance from `p` (xy) to the surface inflated by `inflate`.
    pub fn surface_distance(&self, p: &Vec3, inflate: f64) -> f64 {
        (p.xy() - self.center).norm() - self.radius - inflate
    }

    /// Distance along the unit ray `origin + s·dir` to the first surface
    /// crossing with `s >= 0`, if any.
    pub fn ray_intersection(&self, origin: &Vec2, dir: &Vec2) -> Option<f64> {
        let f = origin - self.center;
        let b = f.dot(dir);
        let c = f.norm_squared() - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        let near = -b - root;
        if near >= 0.0 {
            return Some(near);
        }
        let far = -b + root;
        (far >= 0.0).then_some(far)
    }
}

/// Axis-aligned rectangle in the xy plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: Vec2::new(min_x, min_y),
            max: Vec2::new(max_x, max_y),
        }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub obstacles: Vec<Cylinder>,
    pub bounds: Bounds,
    pub start: Vec3,
    pub goal: Vec3,
    pub seed: u64,
}

impl Environment {
    /// Obstacle-free field with start and goal.
    pub fn empty(bounds: Bounds, start: Vec3, goal: Vec3) -> Self {
        Self {
            obstacles: Vec::new(),
            bounds,
            start,
            goal,
            seed: 0,
        }
    }

    /// Checks the start/goal/bounds invariants.
    pub fn validate(&self, robot_radius: f64) -> Result<()> {
        for (name, p) in [("start", &self.start), ("goal", &self.goal)] {
            if !self.bounds.contains(&p.xy()) {
                return Err(Error::InvalidArgs(format!("{name} outside bounds")));
            }
            if self
                .obstacles
                .iter()
                .any(|c| c.surface_distance(p, robot_radius) <= 0.0)
            {
                return Err(Error::InvalidArgs(format!("{name} inside an obstacle")));
            }
        }
        if self
            .obstacles
            .iter()
            .any(|c| !(c.radius > 0.0) || !self.bounds.contains(&c.center))
        {
            return Err(Error::InvalidArgs(
                "obstacle with non-positive radius or center outside bounds".into(),
            ));
        }
        Ok(())
    }
}

/// Obstacles discovered so far. Only ever grows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensedObstacles {
    known: Vec<Cylinder>,
}

impl SensedObstacles {
    pub fn new() -> Self {
        Self::default()
    }

    /// Treats every given cylinder as sensed.
    pub fn from_cylinders(cylinders: impl IntoIterator<Item = Cylinder>) -> Self {
        let mut s = Self::new();
        for c in cylinders {
            s.insert(c);
        }
        s
    }

    /// Adds `c` unless an identical cylinder is already known. Returns
    /// whether it was new.
    pub fn insert(&mut self, c: Cylinder) -> bool {
        if self.known.contains(&c) {
            false
        } else {
            self.known.push(c);
            true
        }
    }

    pub fn known(&self) -> &[Cylinder] {
        &self.known
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LidarScan {
    /// Sensor position in the plane.
    pub origin: Vec2,
    pub ranges: Vec<f64>,
    pub angles: Vec<f64>,
    pub max_range: f64,
}

fn first_hit(origin: &Vec2, dir: &Vec2, obstacles: &[Cylinder]) -> Option<(usize, f64)> {
    obstacles
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.ray_intersection(origin, dir).map(|s| (i, s)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Casts `beams` evenly spaced rays over the full circle from the state's
/// xy position. Ranges beyond `max_range` read as `max_range`.
pub fn lidar_scan(x: &State, env: &Environment, beams: usize, max_range: f64) -> LidarScan {
    let origin = x.position.xy();
    let step = std::f64::consts::TAU / beams.max(1) as f64;
    let angles: Vec<f64> = (0..beams).map(|i| i as f64 * step).collect();
    let ranges = angles
        .iter()
        .map(|&a| {
            let dir = Vec2::new(a.cos(), a.sin());
            match first_hit(&origin, &dir, &env.obstacles) {
                Some((_, s)) if s > 0.0 && s < max_range => s,
                _ => max_range,
            }
        })
        .collect();
    LidarScan {
        origin,
        ranges,
        angles,
        max_range,
    }
}

/// Adds every obstacle that produced a sub-max-range return to `known`.
pub fn integrate_scan(known: &SensedObstacles, scan: &LidarScan, env: &Environment) -> SensedObstacles {
    let mut out = known.clone();
    integrate_scan_in_place(&mut out, scan, env);
    out
}

pub(crate) fn integrate_scan_in_place(known: &mut SensedObstacles, scan: &LidarScan, env: &Environment) {
    for (&range, &angle) in scan.ranges.iter().zip(&scan.angles) {
        if range >= scan.max_range {
            continue;
        }
        let dir = Vec2::new(angle.cos(), angle.sin());
        if let Some((i, _)) = first_hit(&scan.origin, &dir, &env.obstacles) {
            known.insert(env.obstacles[i]);
        }
    }
}

/// Unclamped minimum surface distance (inflated by `robot_radius`), or
/// `None` when `obstacles` is empty.
pub fn raw_surface_distance(p: &Vec3, obstacles: &[Cylinder], robot_radius: f64) -> Option<f64> {
    obstacles
        .iter()
        .map(|c| c.surface_distance(p, robot_radius))
        .min_by(f64::total_cmp)
}

/// Clamp range applied to the obstacle distance seen by the cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceClamp {
    pub min: f64,
    pub max: f64,
}

impl DistanceClamp {
    pub fn apply(&self, raw: Option<f64>) -> f64 {
        match raw {
            Some(d) => d.clamp(self.min, self.max),
            None => self.max,
        }
    }
}

impl Default for DistanceClamp {
    fn default() -> Self {
        Self { min: 0.01, max: 100.0 }
    }
}

/// Distance from `p` to the nearest known obstacle surface, clamped.
pub fn nearest_surface_distance(
    p: &Vec3,
    known: &SensedObstacles,
    robot_radius: f64,
    clamp: DistanceClamp,
) -> f64 {
    clamp.apply(raw_surface_distance(p, known.known(), robot_radius))
}

/// Ground-truth collision: inside any inflated obstacle (closed) or out of
/// bounds.
pub fn collision(p: &Vec3, env: &Environment, robot_radius: f64) -> bool {
    !env.bounds.contains(&p.xy())
        || env
            .obstacles
            .iter()
            .any(|c| c.surface_distance(p, robot_radius) <= 0.0)
}

/// Parameters for [`generate_forest`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForestSpec {
    /// Expected obstacles per square meter.
    pub density: f64,
    pub bounds: Bounds,
    pub start: Vec3,
    pub goal: Vec3,
    /// Minimum clearance between any cylinder surface and start or goal.
    pub corridor_clearance: f64,
    /// Inflation used by the solvability check.
    pub robot_radius: f64,
    pub cylinder_radius: f64,
}

impl ForestSpec {
    /// 20 m × 15 m field, start and goal 1.5 m in from the short edges.
    pub fn field(density: f64) -> Self {
        let bounds = Bounds::new(0.0, 0.0, 20.0, 15.0);
        Self {
            density,
            bounds,
            start: Vec3::new(1.5, 7.5, 1.0),
            goal: Vec3::new(18.5, 7.5, 1.0),
            corridor_clearance: 1.0,
            robot_radius: 0.25,
            cylinder_radius: FOREST_CYLINDER_RADIUS,
        }
    }
}

/// Named density tiers standing in for the easy/medium/hard forests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DensityTier {
    Low,
    Mid,
    High,
}

impl DensityTier {
    pub const ALL: [DensityTier; 3] = [DensityTier::Low, DensityTier::Mid, DensityTier::High];

    pub fn default_density(self) -> f64 {
        match self {
            DensityTier::Low => 0.02,
            DensityTier::Mid => 0.05,
            DensityTier::High => 0.08,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DensityTier::Low => "low",
            DensityTier::Mid => "mid",
            DensityTier::High => "high",
        }
    }
}

impl std::str::FromStr for DensityTier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" | "a" => Ok(DensityTier::Low),
            "mid" | "b" => Ok(DensityTier::Mid),
            "high" | "c" => Ok(DensityTier::High),
            other => Err(Error::InvalidArgs(format!("unknown density tier `{other}`"))),
        }
    }
}

pub(crate) fn derived_seed(seed: u64, attempt: u64) -> u64 {
    // splitmix64 step
    let mut z = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn place_cylinders(spec: &ForestSpec, rng: &mut ChaCha8Rng) -> Vec<Cylinder> {
    let mean = spec.density * spec.bounds.area();
    let count = if mean > 0.0 {
        Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let b = &spec.bounds;
    let r = spec.cylinder_radius;
    let mut out = Vec::with_capacity(count);
    // Rejected draws are retried so the realized count tracks the density.
    let mut tries = 0;
    while out.len() < count && tries < 50 * count.max(1) {
        tries += 1;
        let c = Cylinder::new(
            rng.gen_range(b.min.x..=b.max.x),
            rng.gen_range(b.min.y..=b.max.y),
            r,
        );
        let clear = |p: &Vec3| c.surface_distance(p, 0.0) >= spec.corridor_clearance;
        if clear(&spec.start) && clear(&spec.goal) {
            out.push(c);
        }
    }
    out
}

/// Seeded Poisson forest that is guaranteed to have a free path from start
/// to goal. Unsolvable draws are regenerated with derived seeds.
pub fn generate_forest(spec: &ForestSpec, seed: u64) -> Result<Environment> {
    for attempt in 0..MAX_FOREST_ATTEMPTS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, attempt));
        let env = Environment {
            obstacles: place_cylinders(spec, &mut rng),
            bounds: spec.bounds,
            start: spec.start,
            goal: spec.goal,
            seed,
        };
        if path_exists(&env, spec.robot_radius, 0.1) {
            return Ok(env);
        }
    }
    Err(Error::Unsatisfiable(MAX_FOREST_ATTEMPTS))
}

/// Coarse 4-connected flood fill over grid cells whose centers are clear of
/// every inflated obstacle.
pub fn path_exists(env: &Environment, robot_radius: f64, cell: f64) -> bool {
    let b = &env.bounds;
    let nx = (b.width() / cell).ceil() as usize + 1;
    let ny = (b.height() / cell).ceil() as usize + 1;
    let center = |i: usize, j: usize| {
        Vec3::new(
            (b.min.x + i as f64 * cell).min(b.max.x),
            (b.min.y + j as f64 * cell).min(b.max.y),
            0.0,
        )
    };
    let free = |i: usize, j: usize| !collision(&center(i, j), env, robot_radius);
    let to_cell = |p: &Vec3| {
        (
            (((p.x - b.min.x) / cell).round() as usize).min(nx - 1),
            (((p.y - b.min.y) / cell).round() as usize).min(ny - 1),
        )
    };
    let start = to_cell(&env.start);
    let goal = to_cell(&env.goal);
    if !free(start.0, start.1) || !free(goal.0, goal.1) {
        return false;
    }
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::from([start]);
    seen[start.1 * nx + start.0] = true;
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == goal {
            return true;
        }
        let neighbors = [
            (i.wrapping_sub(1), j),
            (i + 1, j),
            (i, j.wrapping_sub(1)),
            (i, j + 1),
        ];
        for (a, c) in neighbors {
            if a < nx && c < ny && !seen[c * nx + a] && free(a, c) {
                seen[c * nx + a] = true;
                queue.push_back((a, c));
            }
        }
    }
    false
}

/// Serializes an environment to the line-oriented text format:
///
/// ```text
/// # scp-mppi environment v1
/// bounds <min_x> <min_y> <max_x> <max_y>
/// start <x> <y> <z>
/// goal <x> <y> <z>
/// seed <u64>
/// cylinder <x> <y> <radius>      (one line per obstacle, in order)
/// ```
///
/// Numbers use Rust's shortest round-trip formatting, so reading back gives
/// bit-identical values.
pub fn environment_to_string(env: &Environment) -> String {
    let mut s = String::from("# scp-mppi environment v1\n");
    let b = &env.bounds;
    let _ = writeln!(s, "bounds {:?} {:?} {:?} {:?}", b.min.x, b.min.y, b.max.x, b.max.y);
    let _ = writeln!(s, "start {:?} {:?} {:?}", env.start.x, env.start.y, env.start.z);
    let _ = writeln!(s, "goal {:?} {:?} {:?}", env.goal.x, env.goal.y, env.goal.z);
    let _ = writeln!(s, "seed {}", env.seed);
    for c in &env.obstacles {
        let _ = writeln!(s, "cylinder {:?} {:?} {:?}", c.center.x, c.center.y, c.radius);
    }
    s
}

pub fn parse_environment(text: &str, origin: &Path) -> Result<Environment> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut bounds = None;
    let mut start = None;
    let mut goal = None;
    let mut seed = 0;
    let mut obstacles = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let key = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        let nums = |want: usize| -> Result<Vec<f64>> {
            if rest.len() != want {
                return Err(err(line_no, format!("`{key}` expects {want} numbers")));
            }
            rest.iter()
                .map(|f| f.parse::<f64>().map_err(|e| err(line_no, format!("`{f}`: {e}"))))
                .collect()
        };
        match key {
            "bounds" => {
                let v = nums(4)?;
                bounds = Some(Bounds::new(v[0], v[1], v[2], v[3]));
            }
            "start" => {
                let v = nums(3)?;
                start = Some(Vec3::new(v[0], v[1], v[2]));
            }
            "goal" => {
                let v = nums(3)?;
                goal = Some(Vec3::new(v[0], v[1], v[2]));
            }
            "seed" => {
                let [s] = rest[..] else {
                    return Err(err(line_no, "`seed` expects one integer".into()));
                };
                seed = s.parse().map_err(|e| err(line_no, format!("`{s}`: {e}")))?;
            }
            "cylinder" => {
                let v = nums(3)?;
                obstacles.push(Cylinder::new(v[0], v[1], v[2]));
            }
            other => return Err(err(line_no, format!("unknown record `{other}`"))),
        }
    }
    let missing = |what: &str| err(0, format!("missing `{what}` record"));
    Ok(Environment {
        obstacles,
        bounds: bounds.ok_or_else(|| missing("bounds"))?,
        start: start.ok_or_else(|| missing("start"))?,
        goal: goal.ok_or_else(|| missing("goal"))?,
        seed,
    })
}

pub fn load_environment(path: &Path) -> Result<Environment> {
    let text = std::fs::read_to_string(path)?;
    parse_environment(&text, path)
}

pub fn save_environment(env: &Environment, path: &Path) -> Result<()> {
    std::fs::write(path, environment_to_string(env))?;
    Ok(())
}
