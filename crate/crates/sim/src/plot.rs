//! SVG figures: XY trajectories and filtered controls with round counts.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Result, SimError};
use crate::trace::TraceLog;

pub const TRAJECTORY_SVG: &str = "trajectory.svg";
pub const CONTROLS_SVG: &str = "controls.svg";

fn plot_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Trace {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = ((hi - lo) * 0.05).max(0.5);
    (lo - pad, hi + pad)
}

/// Writes both figures into `dir` and returns their paths. An empty log
/// writes nothing.
pub fn emit_plots(log: &TraceLog, dir: &Path) -> Result<Vec<PathBuf>> {
    if log.steps.is_empty() {
        log::warn!("empty trace, no plots written");
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let a = dir.join(TRAJECTORY_SVG);
    trajectories(log, &a)?;
    let b = dir.join(CONTROLS_SVG);
    controls(log, &b)?;
    Ok(vec![a, b])
}

fn trajectories(log: &TraceLog, path: &Path) -> Result<()> {
    let n = log.scenario.agents.len();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in &log.steps {
        for a in &s.agents {
            x0 = x0.min(a.p.x);
            x1 = x1.max(a.p.x);
            y0 = y0.min(a.p.y);
            y1 = y1.max(a.p.y);
        }
    }
    let last = log.steps.len() - 1;
    let dt = log.scenario.dt;
    let obstacles: Vec<(f64, f64, f64, f64, f64)> = log
        .scenario
        .obstacles
        .iter()
        .map(|o| {
            let t_end = last as f64 * dt;
            (o.position[0], o.position[1], o.velocity[0] * t_end, o.velocity[1] * t_end, o.radius)
        })
        .collect();
    for &(x, y, dx, dy, r) in &obstacles {
        x0 = x0.min(x.min(x + dx) - r);
        x1 = x1.max(x.max(x + dx) + r);
        y0 = y0.min(y.min(y + dy) - r);
        y1 = y1.max(y.max(y + dy) + r);
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);

    let root = SVGBackend::new(path, (900, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{}: trajectories", log.scenario.name), ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("x [m]")
        .y_desc("y [m]")
        .draw()
        .map_err(|e| plot_err(path, e))?;

    // Discs at their final positions, outlines at the start for moving ones.
    let px_per_m = 820.0 / (x1 - x0);
    for &(x, y, dx, dy, r) in &obstacles {
        let radius = (r * px_per_m).round() as i32;
        chart
            .draw_series(std::iter::once(Circle::new((x + dx, y + dy), radius, BLACK.mix(0.35).filled())))
            .map_err(|e| plot_err(path, e))?;
        if dx != 0.0 || dy != 0.0 {
            chart
                .draw_series(std::iter::once(Circle::new((x, y), radius, BLACK.mix(0.5))))
                .map_err(|e| plot_err(path, e))?;
        }
    }
    for i in 0..n {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(
                log.steps.iter().map(|s| (s.agents[i].p.x, s.agents[i].p.y)),
                color,
            ))
            .map_err(|e| plot_err(path, e))?
            .label(format!("agent {i}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], color));
        let start = log.steps[0].agents[i].p;
        let end = log.steps[last].agents[i].p;
        chart
            .draw_series([
                Circle::new((start.x, start.y), 4, color.filled()),
            ])
            .map_err(|e| plot_err(path, e))?;
        chart
            .draw_series([TriangleMarker::new((end.x, end.y), 6, color.filled())])
            .map_err(|e| plot_err(path, e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))?;
    Ok(())
}

fn controls(log: &TraceLog, path: &Path) -> Result<()> {
    let n = log.scenario.agents.len();
    let t0 = log.steps[0].t;
    let t1 = log.steps[log.steps.len() - 1].t.max(t0 + log.scenario.dt);
    let root = SVGBackend::new(path, (900, 900)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let panels = root.split_evenly((3, 1));

    for (axis, panel) in panels.iter().take(2).enumerate() {
        let value = |a: &crate::trace::AgentRecord| if axis == 0 { a.u_s.x } else { a.u_s.y };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &log.steps {
            for a in &s.agents {
                lo = lo.min(value(a));
                hi = hi.max(value(a));
            }
        }
        let (lo, hi) = padded(lo, hi);
        let label = if axis == 0 { "u_s x" } else { "u_s y" };
        let mut chart = ChartBuilder::on(panel)
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(50)
            .build_cartesian_2d(t0..t1, lo..hi)
            .map_err(|e| plot_err(path, e))?;
        chart
            .configure_mesh()
            .y_desc(label)
            .draw()
            .map_err(|e| plot_err(path, e))?;
        for i in 0..n {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(
                    log.steps.iter().map(|s| (s.t, value(&s.agents[i]))),
                    color,
                ))
                .map_err(|e| plot_err(path, e))?;
        }
    }

    let max_tau = log.steps.iter().map(|s| s.tau).max().unwrap_or(1) as f64;
    let mut chart = ChartBuilder::on(&panels[2])
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(t0..t1, 0.0..max_tau + 1.0)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc("tau")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    chart
        .draw_series(LineSeries::new(log.steps.iter().map(|s| (s.t, s.tau as f64)), BLUE))
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))?;
    Ok(())
}
