//! Closed-loop benchmark harness: trials, metrics, suites and exports.

mod export;
mod suite;
mod trial;

pub use export::{
    export_plot, export_trajectory, load_trajectory, render_svg, trajectory_rows, PlotContent,
    TrajectoryRow, TRAJECTORY_HEADER,
};
pub use suite::{
    format_report, read_records, run_suite, run_suite_config, write_outputs, write_records,
    write_summary_csv, CellSummary, SuiteOptions, SuiteReport, SuiteRun, TrialRecord, ANOMALY_FACTOR,
    ERROR_OUTCOME,
};
pub use trial::{run_trial, Outcome, SensorConfig, TrialLimits, TrialResult, TrialSettings};

use crate::error::{Error, Result};
use crate::model::ControlInput;

/// Mean squared second difference `‖u_{t+1} − 2u_t + u_{t−1}‖²` over the
/// executed commands.
pub fn compute_smoothness(controls: &[ControlInput]) -> Result<f64> {
    if controls.len() < 3 {
        return Err(Error::TooShort(controls.len()));
    }
    let total: f64 = controls
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).norm_squared())
        .sum();
    Ok(total / (controls.len() - 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vec3;

    #[test]
    fn smoothness_examples() {
        let constant = vec![Vec3::new(0.3, -0.2, 0.1); 10];
        assert_eq!(compute_smoothness(&constant).unwrap(), 0.0);
        let ramp: Vec<Vec3> = (0..10).map(|i| Vec3::new(0.5 * i as f64, -0.25 * i as f64, 0.0)).collect();
        assert_eq!(compute_smoothness(&ramp).unwrap(), 0.0);
        let bump = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()];
        assert_eq!(compute_smoothness(&bump).unwrap(), 4.0);
        assert!(matches!(compute_smoothness(&bump[..2]), Err(Error::TooShort(2))));
    }
}
