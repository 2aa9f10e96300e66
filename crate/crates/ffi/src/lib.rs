//! C ABI over the `scp-mppi` crate.
//!
//! Handles are opaque heap objects created by `*_new`/`*_load`/`*_default`
//! and released by the matching `*_free`. Every fallible call returns a
//! [`ScpStatus`]; on failure a message is kept per thread and can be copied
//! out with [`scp_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use scp_mppi::bench::run_trial;
use scp_mppi::config::FileConfig;
use scp_mppi::solver::warm_start_from;
use scp_mppi::world::{generate_forest, load_environment, save_environment, Cylinder, DensityTier};
use scp_mppi::{solve, Environment, Error, SensedObstacles, SolverConfig, SparseControlPoints, State, Vec3};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Parse = 4,
    Io = 5,
    Solver = 6,
    Panic = 7,
}

/// Opaque suite configuration (solver, trial limits, sensor, forest).
pub struct ScpConfig {
    file: FileConfig,
}

/// Opaque receding-horizon controller that keeps its warm start between calls.
pub struct ScpController {
    cfg: SolverConfig,
    warm: SparseControlPoints,
}

/// Opaque environment: bounds, start, goal and cylinder obstacles.
pub struct ScpEnvironment {
    env: Environment,
}

/// A vertical cylinder obstacle in the horizontal plane.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScpCylinder {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Metrics of one closed-loop trial.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScpTrialSummary {
    /// 1 reached, 2 collided, 3 stuck, 4 timeout.
    pub outcome: u32,
    pub steps: usize,
    pub flight_time: f64,
    pub avg_speed: f64,
    /// NaN when fewer than three commands were executed.
    pub smoothness: f64,
    pub solve_rate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(e: &Error) -> ScpStatus {
    match e {
        Error::InvalidConfig { .. } => ScpStatus::InvalidConfig,
        Error::InvalidArgs(_) | Error::DegenerateKnots(..) => ScpStatus::InvalidArgument,
        Error::Parse { .. } | Error::Csv(_) => ScpStatus::Parse,
        Error::Io(_) => ScpStatus::Io,
        _ => ScpStatus::Solver,
    }
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ScpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            ScpStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ScpStatus::NullPointer
        }
        Ok(Err(Failure::Arg(m))) => {
            set_error(m);
            ScpStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            ScpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn vec3(p: *const f64, what: &'static str) -> Result<Vec3, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vec3::new(s[0], s[1], s[2]))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes, into `buf`. Returns the full message length
/// (excluding the terminator), so a call with `len = 0` sizes the buffer.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn scp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a configuration holding the built-in defaults.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn scp_config_default(out: *mut *mut ScpConfig) -> ScpStatus {
    guard(|| emit(out, ScpConfig { file: FileConfig::default() }))
}

/// Loads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn scp_config_load(path: *const c_char, out: *mut *mut ScpConfig) -> ScpStatus {
    guard(|| {
        let path = text(path, "path")?;
        let file = FileConfig::load(Path::new(path))?;
        emit(out, ScpConfig { file })
    })
}

/// Sets one key with a TOML-syntax value, e.g. `("lambda", "5.0")` or
/// `("sigma", "[0.5, 0.5, 0.05]")`. The configuration is left unchanged
/// on failure.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn scp_config_set(cfg: *mut ScpConfig, key: *const c_char, value: *const c_char) -> ScpStatus {
    guard(|| {
        let cfg = deref_mut(cfg, "cfg")?;
        let key = text(key, "key")?;
        let value = text(value, "value")?;
        cfg.file = cfg.file.with_overrides(&[format!("{key}={value}")])?;
        Ok(())
    })
}

/// Checks the solver settings without building a controller.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn scp_config_validate(cfg: *const ScpConfig) -> ScpStatus {
    guard(|| {
        deref(cfg, "cfg")?.file.solver()?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn scp_config_free(cfg: *mut ScpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds a controller from validated solver settings, cold-started.
///
/// # Safety
/// `cfg` must come from this library; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn scp_controller_new(cfg: *const ScpConfig, out: *mut *mut ScpController) -> ScpStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?.file.solver()?;
        let warm = warm_start_from(None, &cfg)?;
        emit(out, ScpController { cfg, warm })
    })
}

/// One receding-horizon step: plans from `position` toward `goal` given the
/// obstacles sensed so far, writes the first command (m/s) to `command`,
/// and keeps the plan as the next warm start.
///
/// # Safety
/// `position`, `goal` and `command` must each point at 3 doubles;
/// `obstacles` must be valid for `count` elements (may be null when 0).
#[no_mangle]
pub unsafe extern "C" fn scp_controller_solve(
    ctrl: *mut ScpController,
    position: *const f64,
    goal: *const f64,
    obstacles: *const ScpCylinder,
    count: usize,
    seed: u64,
    command: *mut f64,
) -> ScpStatus {
    guard(|| {
        let ctrl = deref_mut(ctrl, "ctrl")?;
        let x0 = State::new(vec3(position, "position")?);
        let goal = vec3(goal, "goal")?;
        if command.is_null() {
            return Err(Failure::Null("command"));
        }
        let cylinders: &[ScpCylinder] = if count == 0 {
            &[]
        } else if obstacles.is_null() {
            return Err(Failure::Null("obstacles"));
        } else {
            std::slice::from_raw_parts(obstacles, count)
        };
        if let Some(bad) = cylinders
            .iter()
            .find(|c| !(c.x.is_finite() && c.y.is_finite() && c.radius.is_finite() && c.radius >= 0.0))
        {
            return Err(Failure::Arg(format!("invalid obstacle {bad:?}")));
        }
        let sensed = SensedObstacles::from_cylinders(cylinders.iter().map(|c| Cylinder::new(c.x, c.y, c.radius)));
        let out = solve(&x0, &goal, &sensed, &ctrl.warm, &ctrl.cfg, seed)?;
        ctrl.warm = warm_start_from(Some(&out), &ctrl.cfg)?;
        let u = out.first_command;
        std::slice::from_raw_parts_mut(command, 3).copy_from_slice(&[u.x, u.y, u.z]);
        Ok(())
    })
}

/// Drops the warm start so the next solve starts from zero controls.
///
/// # Safety
/// `ctrl` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn scp_controller_reset(ctrl: *mut ScpController) -> ScpStatus {
    guard(|| {
        let ctrl = deref_mut(ctrl, "ctrl")?;
        ctrl.warm = warm_start_from(None, &ctrl.cfg)?;
        Ok(())
    })
}

/// # Safety
/// `ctrl` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn scp_controller_free(ctrl: *mut ScpController) {
    if !ctrl.is_null() {
        drop(Box::from_raw(ctrl));
    }
}

/// Loads an environment file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn scp_environment_load(path: *const c_char, out: *mut *mut ScpEnvironment) -> ScpStatus {
    guard(|| {
        let env = load_environment(Path::new(text(path, "path")?))?;
        emit(out, ScpEnvironment { env })
    })
}

/// Saves an environment file.
///
/// # Safety
/// `env` must come from this library; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn scp_environment_save(env: *const ScpEnvironment, path: *const c_char) -> ScpStatus {
    guard(|| {
        let env = deref(env, "env")?;
        save_environment(&env.env, Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// Generates a solvable forest for a density tier (`"low"`, `"mid"`,
/// `"high"`) using the field settings in `cfg`.
///
/// # Safety
/// `cfg` must come from this library; `tier` NUL-terminated; `out` valid
/// for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn scp_environment_generate(
    cfg: *const ScpConfig,
    tier: *const c_char,
    seed: u64,
    out: *mut *mut ScpEnvironment,
) -> ScpStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        let tier: DensityTier = text(tier, "tier")?.parse()?;
        let env = generate_forest(&cfg.file.forest(tier), seed)?;
        emit(out, ScpEnvironment { env })
    })
}

/// Number of obstacles, or 0 for a null handle.
///
/// # Safety
/// `env` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn scp_environment_obstacle_count(env: *const ScpEnvironment) -> usize {
    env.as_ref().map_or(0, |e| e.env.obstacles.len())
}

/// Copies up to `capacity` obstacles into `out` and returns how many were
/// written.
///
/// # Safety
/// `env` must be null or come from this library; `out` valid for
/// `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn scp_environment_obstacles(
    env: *const ScpEnvironment,
    out: *mut ScpCylinder,
    capacity: usize,
) -> usize {
    let Some(env) = env.as_ref() else { return 0 };
    if out.is_null() {
        return 0;
    }
    let n = env.env.obstacles.len().min(capacity);
    for (i, c) in env.env.obstacles.iter().take(n).enumerate() {
        *out.add(i) = ScpCylinder {
            x: c.center.x,
            y: c.center.y,
            radius: c.radius,
        };
    }
    n
}

/// # Safety
/// `env` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn scp_environment_free(env: *mut ScpEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Runs one closed-loop trial with the solver variant and limits in `cfg`.
///
/// # Safety
/// `env` and `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scp_run_trial(
    env: *const ScpEnvironment,
    cfg: *const ScpConfig,
    seed: u64,
    out: *mut ScpTrialSummary,
) -> ScpStatus {
    guard(|| {
        let env = deref(env, "env")?;
        let cfg = deref(cfg, "cfg")?;
        let out = deref_mut(out, "out")?;
        let solver = cfg.file.solver()?;
        env.env.validate(solver.robot_radius)?;
        let r = run_trial(&env.env, &solver, &cfg.file.trial_settings(), seed)?;
        *out = ScpTrialSummary {
            outcome: u32::from(r.outcome.code()),
            steps: r.steps(),
            flight_time: r.flight_time,
            avg_speed: r.avg_speed,
            smoothness: r.smoothness.unwrap_or(f64::NAN),
            solve_rate: r.solve_rate,
        };
        Ok(())
    })
}
