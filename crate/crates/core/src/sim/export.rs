//! Trajectory export: CSV table and SVG top view.

use std::fmt::Write as _;

use crate::gait::LEGS;
use crate::scalar::Scalar;

use super::engine::Trajectory;

pub const CSV_HEADER: &str = "tick,x,y,heading,roll,pitch,c0,c1,c2,c3,c4,c5,fallen";

pub fn trajectory_csv<S: Scalar>(tr: &Trajectory<S>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (k, (pose, contacts)) in tr.poses.iter().zip(&tr.contacts).enumerate() {
        let fallen = tr.fall_tick.is_some_and(|f| k >= f);
        let _ = write!(out, "{k},{},{},{},{},{}", pose.x, pose.y, pose.heading, pose.roll, pose.pitch);
        for &c in contacts.iter().take(LEGS) {
            let _ = write!(out, ",{}", u8::from(c));
        }
        let _ = writeln!(out, ",{}", u8::from(fallen));
    }
    out
}

/// One polyline of a top-view plot.
pub struct TraceStyle<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
}

/// Top view of several trajectories in meters, x to the right and y up,
/// with a 10 cm grid and a start marker. Each trajectory becomes exactly one
/// `<path>` element.
pub fn svg_top_view<S: Scalar>(traces: &[(&Trajectory<S>, TraceStyle<'_>)], comment: &str) -> String {
    const PX_PER_M: f64 = 400.0;
    const MARGIN: f64 = 0.1;
    const GRID: f64 = 0.1;

    let points: Vec<Vec<(f64, f64)>> = traces
        .iter()
        .map(|(tr, _)| tr.poses.iter().map(|p| (p.x.as_f64(), p.y.as_f64())).collect())
        .collect();
    let all = points.iter().flatten();
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &(x, y) in all {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let snap_down = |v: f64| ((v - MARGIN) / GRID).floor() * GRID;
    let snap_up = |v: f64| ((v + MARGIN) / GRID).ceil() * GRID;
    let (x0, x1, y0, y1) = (snap_down(min_x), snap_up(max_x), snap_down(min_y), snap_up(max_y));
    let width = (x1 - x0) * PX_PER_M;
    let height = (y1 - y0) * PX_PER_M;
    let px = |x: f64| (x - x0) * PX_PER_M;
    let py = |y: f64| (y1 - y) * PX_PER_M;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(svg, "<!-- {} -->", comment.replace("--", "- -"));
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{width:.1}" height="{height:.1}" fill="#ffffff"/>"##);
    let _ = writeln!(svg, r##"<g stroke="#dddddd" stroke-width="1">"##);
    let lines_x = ((x1 - x0) / GRID).round() as i64;
    for i in 0..=lines_x {
        let x = px(x0 + i as f64 * GRID);
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="0" x2="{x:.1}" y2="{height:.1}"/>"#);
    }
    let lines_y = ((y1 - y0) / GRID).round() as i64;
    for i in 0..=lines_y {
        let y = py(y0 + i as f64 * GRID);
        let _ = writeln!(svg, r#"<line x1="0" y1="{y:.1}" x2="{width:.1}" y2="{y:.1}"/>"#);
    }
    svg.push_str("</g>\n");
    let _ = writeln!(
        svg,
        r##"<text x="4" y="{:.1}" font-size="11" fill="#888888">grid 0.1 m</text>"##,
        height - 4.0
    );
    for ((_, style), pts) in traces.iter().zip(&points) {
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(x), py(y));
        }
        if pts.len() == 1 {
            let (x, y) = pts[0];
            let _ = write!(d, "L{:.2} {:.2}", px(x), py(y));
        }
        let dash = if style.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="2" stroke-linecap="round"{dash}><title>{}</title></path>"#,
            d.trim_end(),
            style.color,
            style.label
        );
        if let Some(&(x, y)) = pts.first() {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, px(x), py(y), style.color);
        }
    }
    svg.push_str("</svg>\n");
    svg
}
