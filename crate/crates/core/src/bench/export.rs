//! Trajectory CSV and SVG plot export.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Vec3;
use crate::world::Environment;

use super::{Outcome, TrialResult};

/// Column header of trajectory files.
pub const TRAJECTORY_HEADER: [&str; 8] = ["t", "x", "y", "z", "ux", "uy", "uz", "outcome_flag"];

/// One row of a trajectory file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub position: Vec3,
    /// Command applied from this position; zero on the final row.
    pub control: Vec3,
    /// 0 on every row but the last, which carries [`Outcome::code`].
    pub outcome_flag: u8,
}

pub fn trajectory_rows(result: &TrialResult) -> Vec<TrajectoryRow> {
    let last = result.path.len() - 1;
    result
        .path
        .iter()
        .enumerate()
        .map(|(i, s)| TrajectoryRow {
            t: i as f64 * result.dt,
            position: s.position,
            control: result.controls.get(i).copied().unwrap_or_else(Vec3::zeros),
            outcome_flag: if i == last { result.outcome.code() } else { 0 },
        })
        .collect()
}

/// Writes `t,x,y,z,ux,uy,uz,outcome_flag`, one row per executed state.
pub fn export_trajectory(result: &TrialResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for row in trajectory_rows(result) {
        let p = row.position;
        let u = row.control;
        w.write_record(
            [row.t, p.x, p.y, p.z, u.x, u.y, u.z]
                .iter()
                .map(|v| format!("{v:?}"))
                .chain(std::iter::once(row.outcome_flag.to_string())),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unexpected header {header:?}"),
        });
    }
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("row {line}: {message}"),
    };
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                rec[j].parse().map_err(|e| parse_err(i + 1, format!("{e}")))
            };
            let outcome_flag: u8 = rec[7].parse().map_err(|e| parse_err(i + 1, format!("{e}")))?;
            if outcome_flag != 0 && Outcome::from_code(outcome_flag).is_none() {
                return Err(parse_err(i + 1, format!("bad outcome flag {outcome_flag}")));
            }
            Ok(TrajectoryRow {
                t: num(0)?,
                position: Vec3::new(num(1)?, num(2)?, num(3)?),
                control: Vec3::new(num(4)?, num(5)?, num(6)?),
                outcome_flag,
            })
        })
        .collect()
}

/// What to draw on top of the environment.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlotContent<'a> {
    pub path: &'a [Vec3],
    pub candidates: &'a [Vec<Vec3>],
}

impl<'a> PlotContent<'a> {
    pub fn from_positions(path: &'a [Vec3], candidates: Option<&'a [Vec<Vec3>]>) -> Self {
        Self {
            path,
            candidates: candidates.unwrap_or(&[]),
        }
    }
}

const PX_PER_M: f64 = 40.0;

/// Standalone SVG of the field, obstacles, start/goal, executed path and
/// optional candidate rollouts (one `polyline.candidate` each).
pub fn render_svg(env: &Environment, content: &PlotContent<'_>) -> String {
    let b = &env.bounds;
    let w = b.width() * PX_PER_M;
    let h = b.height() * PX_PER_M;
    // y axis points up in the world, down in SVG.
    let px = |p: &Vec3| ((p.x - b.min.x) * PX_PER_M, (b.max.y - p.y) * PX_PER_M);
    let points = |ps: &[Vec3]| {
        ps.iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(
        s,
        r##"<rect class="bounds" x="0" y="0" width="{w:.2}" height="{h:.2}" fill="#ffffff" stroke="#000000" stroke-width="2"/>"##
    );
    for c in &env.obstacles {
        let (cx, cy) = px(&Vec3::new(c.center.x, c.center.y, 0.0));
        let _ = writeln!(
            s,
            r##"<circle class="obstacle" cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="#5a6b5a"/>"##,
            c.radius * PX_PER_M
        );
    }
    for cand in content.candidates {
        let _ = writeln!(
            s,
            r##"<polyline class="candidate" points="{}" fill="none" stroke="#d04040" stroke-opacity="0.25" stroke-width="1"/>"##,
            points(cand)
        );
    }
    if !content.path.is_empty() {
        let _ = writeln!(
            s,
            r##"<polyline class="path" points="{}" fill="none" stroke="#1f4fd0" stroke-width="3"/>"##,
            points(content.path)
        );
    }
    for (class, p, color) in [("start", &env.start, "#f08020"), ("goal", &env.goal, "#2060f0")] {
        let (cx, cy) = px(p);
        let _ = writeln!(
            s,
            r##"<circle class="{class}" cx="{cx:.2}" cy="{cy:.2}" r="8" fill="{color}"/>"##
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn export_plot(env: &Environment, result: Option<&TrialResult>, path: &Path) -> Result<()> {
    let positions: Vec<Vec3> = result
        .map(|r| r.path.iter().map(|s| s.position).collect())
        .unwrap_or_default();
    let content = PlotContent::from_positions(
        &positions,
        result.and_then(|r| r.candidates.as_deref()),
    );
    std::fs::write(path, render_svg(env, &content))?;
    Ok(())
}
