use std::ffi::{c_char, CString};
use std::ptr;

use scp_mppi_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe {
        let n = scp_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as c_char; n + 1];
        scp_last_error_message(buf.as_mut_ptr(), buf.len());
        let bytes: Vec<u8> = buf[..n].iter().map(|&b| b as u8).collect();
        String::from_utf8(bytes).unwrap()
    }
}

unsafe fn small_config() -> *mut ScpConfig {
    let mut cfg = ptr::null_mut();
    assert_eq!(scp_config_default(&mut cfg), ScpStatus::Ok);
    for (k, v) in [("samples", "16"), ("horizon", "40"), ("control_points", "4"), ("svgd_iterations", "1")] {
        assert_eq!(scp_config_set(cfg, c(k).as_ptr(), c(v).as_ptr()), ScpStatus::Ok, "{k}");
    }
    cfg
}

#[test]
fn controller_moves_toward_goal_in_free_space() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(scp_config_default(&mut cfg), ScpStatus::Ok);
        assert_eq!(scp_config_set(cfg, c("variant").as_ptr(), c("scp").as_ptr()), ScpStatus::Ok);
        let mut ctrl = ptr::null_mut();
        assert_eq!(scp_controller_new(cfg, &mut ctrl), ScpStatus::Ok);
        let pos = [0.0, 0.0, 1.0];
        let goal = [10.0, 0.0, 1.0];
        let mut u = [0.0; 3];
        for seed in 0..10 {
            assert_eq!(
                scp_controller_solve(ctrl, pos.as_ptr(), goal.as_ptr(), ptr::null(), 0, seed, u.as_mut_ptr()),
                ScpStatus::Ok
            );
        }
        assert!(u[0] > u[1].abs() && u[0] > u[2].abs(), "command {u:?}");
        assert_eq!(scp_controller_reset(ctrl), ScpStatus::Ok);
        scp_controller_free(ctrl);
        scp_config_free(cfg);
    }
}

#[test]
fn solve_accepts_obstacle_arrays() {
    unsafe {
        let cfg = small_config();
        let mut ctrl = ptr::null_mut();
        assert_eq!(scp_controller_new(cfg, &mut ctrl), ScpStatus::Ok);
        let obstacles = [ScpCylinder { x: 3.0, y: 0.0, radius: 0.75 }];
        let mut u = [f64::NAN; 3];
        let status = scp_controller_solve(
            ctrl,
            [0.0, 0.0, 1.0].as_ptr(),
            [10.0, 0.0, 1.0].as_ptr(),
            obstacles.as_ptr(),
            1,
            7,
            u.as_mut_ptr(),
        );
        assert_eq!(status, ScpStatus::Ok);
        assert!(u.iter().all(|v| v.is_finite()));

        let bad = [ScpCylinder { x: f64::NAN, y: 0.0, radius: 1.0 }];
        let status = scp_controller_solve(
            ctrl,
            [0.0, 0.0, 1.0].as_ptr(),
            [10.0, 0.0, 1.0].as_ptr(),
            bad.as_ptr(),
            1,
            7,
            u.as_mut_ptr(),
        );
        assert_eq!(status, ScpStatus::InvalidArgument);
        assert!(last_error().contains("invalid obstacle"));
        scp_controller_free(ctrl);
        scp_config_free(cfg);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(scp_config_default(&mut cfg), ScpStatus::Ok);
        assert_eq!(scp_config_set(cfg, c("lamda").as_ptr(), c("1").as_ptr()), ScpStatus::Parse);
        assert!(last_error().contains("lamda"));

        assert_eq!(scp_config_set(cfg, c("control_points").as_ptr(), c("0").as_ptr()), ScpStatus::Ok);
        assert_eq!(scp_config_validate(cfg), ScpStatus::InvalidConfig);
        let mut ctrl = ptr::null_mut();
        assert_eq!(scp_controller_new(cfg, &mut ctrl), ScpStatus::InvalidConfig);
        assert!(ctrl.is_null());

        assert_eq!(scp_controller_reset(ptr::null_mut()), ScpStatus::NullPointer);
        assert_eq!(scp_config_load(ptr::null(), &mut cfg), ScpStatus::NullPointer);
        let mut missing = ptr::null_mut();
        assert_eq!(
            scp_config_load(c("/nonexistent/scp.toml").as_ptr(), &mut missing),
            ScpStatus::Io
        );
        // Freeing null is a no-op.
        scp_config_free(ptr::null_mut());
        scp_controller_free(ptr::null_mut());
        scp_environment_free(ptr::null_mut());
        scp_config_free(cfg);
    }
}

#[test]
fn truncated_error_message_is_terminated() {
    unsafe {
        assert_eq!(scp_controller_reset(ptr::null_mut()), ScpStatus::NullPointer);
        let mut buf = [1 as c_char; 5];
        let n = scp_last_error_message(buf.as_mut_ptr(), buf.len());
        assert!(n > 4);
        assert_eq!(buf[4], 0);
    }
}

#[test]
fn environment_generate_save_load_and_trial() {
    unsafe {
        let cfg = small_config();
        let mut env = ptr::null_mut();
        assert_eq!(scp_environment_generate(cfg, c("low").as_ptr(), 3, &mut env), ScpStatus::Ok);
        let n = scp_environment_obstacle_count(env);
        assert!(n > 0);
        let mut cyl = vec![ScpCylinder { x: 0.0, y: 0.0, radius: 0.0 }; n];
        assert_eq!(scp_environment_obstacles(env, cyl.as_mut_ptr(), n), n);
        assert!(cyl.iter().all(|c| c.radius == 0.75));

        let dir = tempfile::tempdir().unwrap();
        let path = c(dir.path().join("forest.txt").to_str().unwrap());
        assert_eq!(scp_environment_save(env, path.as_ptr()), ScpStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(scp_environment_load(path.as_ptr(), &mut loaded), ScpStatus::Ok);
        assert_eq!(scp_environment_obstacle_count(loaded), n);

        assert_eq!(scp_environment_generate(cfg, c("dense").as_ptr(), 3, &mut env), ScpStatus::InvalidArgument);

        assert_eq!(scp_config_set(cfg, c("max_time").as_ptr(), c("1.0").as_ptr()), ScpStatus::Ok);
        let mut summary = ScpTrialSummary {
            outcome: 0,
            steps: 0,
            flight_time: 0.0,
            avg_speed: 0.0,
            smoothness: 0.0,
            solve_rate: 0.0,
        };
        assert_eq!(scp_run_trial(loaded, cfg, 0, &mut summary), ScpStatus::Ok);
        assert!((1..=4).contains(&summary.outcome));
        assert!(summary.steps <= 10);
        assert!((summary.flight_time - summary.steps as f64 * 0.1).abs() < 1e-12);

        scp_environment_free(env);
        scp_environment_free(loaded);
        scp_config_free(cfg);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/scp_mppi.h")).unwrap();
    for name in [
        "SCP_STATUS_OK",
        "SCP_STATUS_PANIC",
        "typedef struct ScpConfig ScpConfig",
        "typedef struct ScpController ScpController",
        "ScpStatus scp_controller_solve(",
        "ScpStatus scp_run_trial(",
        "size_t scp_last_error_message(",
    ] {
        assert!(header.contains(name), "header lacks `{name}`");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"scp_mppi.h\"\nint main(void) { ScpConfig *c = 0; return scp_config_default(&c) == SCP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}
