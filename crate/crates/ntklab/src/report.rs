//! Static SVG plots and CSV summaries of sweep results: error-vs-width
//! box plots, learning curves, weight-distance curves against their
//! theoretical envelope, and breakpoint histograms.
//!
//! The SVG output is plain static markup (polylines, rects, text) with no
//! scripts, so it renders anywhere and diffs cleanly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{NtkLabError, Result};
use crate::sweep::{breakpoint_histogram, histogram_csv, RunRecord};
use crate::training::Trajectory;

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN: f64 = 60.0;

struct SvgCanvas {
    body: String,
}

impl SvgCanvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
             viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n"
        );
        let _ = write!(
            body,
            "<rect x=\"0\" y=\"0\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"white\"/>\n"
        );
        let _ = write!(
            body,
            "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\" \
             text-anchor=\"middle\">{}</text>\n",
            PLOT_W / 2.0,
            escape(title)
        );
        let _ = write!(
            body,
            "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" \
             stroke=\"black\"/>\n",
            PLOT_W - 2.0 * MARGIN,
            PLOT_H - 2.0 * MARGIN
        );
        SvgCanvas { body }
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str) {
        if points.len() < 2 {
            return;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", x, y))
            .collect();
        let _ = write!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: &str) {
        let _ = write!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{color}\"/>\n"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = write!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\" \
             stroke=\"black\"/>\n"
        );
    }

    fn text(&mut self, x: f64, y: f64, content: &str) {
        let _ = write!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
            escape(content)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Affine map from data range to plot pixels (y axis flipped).
struct Axes {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Axes {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_lo) / (self.x_hi - self.x_lo).max(1e-300) * (PLOT_W - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        PLOT_H - MARGIN
            - (v - self.y_lo) / (self.y_hi - self.y_lo).max(1e-300) * (PLOT_H - 2.0 * MARGIN)
    }
}

const COLORS: [&str; 6] = ["#1f6fb2", "#d9541e", "#2c8a4b", "#8041a8", "#b0243c", "#5a5a5a"];

#[derive(Debug)]
pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Five-number summary of one (target, m) group.
struct BoxStats {
    target: String,
    m: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

fn box_stats(records: &[RunRecord]) -> Vec<BoxStats> {
    let mut keys: Vec<(String, usize)> = records
        .iter()
        .filter(|r| r.error.is_none() && r.final_l2_error.is_finite())
        .map(|r| (r.target.clone(), r.m))
        .collect();
    keys.sort();
    keys.dedup();
    keys.iter()
        .filter_map(|(target, m)| {
            let mut vals: Vec<f64> = records
                .iter()
                .filter(|r| {
                    &r.target == target && r.m == *m && r.error.is_none() && r.final_l2_error.is_finite()
                })
                .map(|r| r.final_l2_error)
                .collect();
            if vals.is_empty() {
                return None;
            }
            vals.sort_by(f64::total_cmp);
            let q = |p: f64| {
                let pos = p * (vals.len() - 1) as f64;
                let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
                vals[lo] + (vals[hi] - vals[lo]) * (pos - lo as f64)
            };
            Some(BoxStats {
                target: target.clone(),
                m: *m,
                min: vals[0],
                q1: q(0.25),
                median: q(0.5),
                q3: q(0.75),
                max: *vals.last().unwrap(),
            })
        })
        .collect()
}

fn error_boxes_svg(stats: &[BoxStats]) -> String {
    let mut canvas = SvgCanvas::new("final L2 error vs width (log-log)");
    let xs: Vec<f64> = stats.iter().map(|s| (s.m as f64).ln()).collect();
    let ys_lo = stats.iter().map(|s| s.min.max(1e-12).ln()).fold(f64::INFINITY, f64::min);
    let ys_hi = stats.iter().map(|s| s.max.max(1e-12).ln()).fold(f64::NEG_INFINITY, f64::max);
    let axes = Axes {
        x_lo: xs.iter().cloned().fold(f64::INFINITY, f64::min) - 0.2,
        x_hi: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.2,
        y_lo: ys_lo - 0.2,
        y_hi: ys_hi + 0.2,
    };
    let mut targets: Vec<&str> = stats.iter().map(|s| s.target.as_str()).collect();
    targets.sort();
    targets.dedup();
    for (ti, target) in targets.iter().enumerate() {
        let color = COLORS[ti % COLORS.len()];
        let group: Vec<&BoxStats> = stats.iter().filter(|s| &s.target == target).collect();
        let medians: Vec<(f64, f64)> = group
            .iter()
            .map(|s| (axes.x((s.m as f64).ln()), axes.y(s.median.max(1e-12).ln())))
            .collect();
        canvas.polyline(&medians, color);
        for s in &group {
            let x = axes.x((s.m as f64).ln()) + ti as f64 * 4.0;
            let (yq1, yq3) = (axes.y(s.q1.max(1e-12).ln()), axes.y(s.q3.max(1e-12).ln()));
            canvas.rect(x - 4.0, yq3, 8.0, (yq1 - yq3).abs().max(0.5), color);
            canvas.line(x, axes.y(s.min.max(1e-12).ln()), x, yq1, color);
            canvas.line(x, yq3, x, axes.y(s.max.max(1e-12).ln()), color);
        }
        canvas.text(MARGIN + 8.0, MARGIN + 16.0 + 14.0 * ti as f64, target);
        canvas.line(
            MARGIN + 60.0,
            MARGIN + 12.0 + 14.0 * ti as f64,
            MARGIN + 80.0,
            MARGIN + 12.0 + 14.0 * ti as f64,
            color,
        );
    }
    for s in stats {
        canvas.text(axes.x((s.m as f64).ln()) - 10.0, PLOT_H - MARGIN + 16.0, &format!("{}", s.m));
    }
    canvas.text(10.0, MARGIN - 8.0, "ln error");
    canvas.finish()
}

fn learning_curves_svg(trajectories: &[(String, Trajectory)]) -> String {
    let mut canvas = SvgCanvas::new("learning curves (log loss)");
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    let mut x_hi = 0.0f64;
    for (_, traj) in trajectories {
        for r in &traj.records {
            let l = r.loss.max(1e-16).ln();
            y_lo = y_lo.min(l);
            y_hi = y_hi.max(l);
            x_hi = x_hi.max(r.t);
        }
    }
    let axes = Axes {
        x_lo: 0.0,
        x_hi: x_hi.max(1e-9),
        y_lo: y_lo - 0.2,
        y_hi: y_hi + 0.2,
    };
    for (i, (run_id, traj)) in trajectories.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = traj
            .records
            .iter()
            .map(|r| (axes.x(r.t), axes.y(r.loss.max(1e-16).ln())))
            .collect();
        canvas.polyline(&pts, color);
        if i < 6 {
            canvas.text(MARGIN + 8.0, MARGIN + 16.0 + 14.0 * i as f64, run_id);
        }
    }
    canvas.text(10.0, MARGIN - 8.0, "ln loss");
    canvas.text(PLOT_W - MARGIN - 40.0, PLOT_H - MARGIN + 16.0, "t / step");
    canvas.finish()
}

fn weight_distance_svg(trajectories: &[(String, Trajectory)]) -> String {
    let mut canvas = SvgCanvas::new("weight distance and Lemma-style envelope");
    let mut y_hi = 0.0f64;
    let mut x_hi = 0.0f64;
    for (_, traj) in trajectories {
        let m = traj.final_net.width() as f64;
        for r in &traj.records {
            y_hi = y_hi.max(r.wdist_inf).max((2.0 / m).sqrt() * r.kappa_time_integral);
            x_hi = x_hi.max(r.t);
        }
    }
    let axes = Axes {
        x_lo: 0.0,
        x_hi: x_hi.max(1e-9),
        y_lo: 0.0,
        y_hi: y_hi.max(1e-9) * 1.05,
    };
    for (i, (run_id, traj)) in trajectories.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let m = traj.final_net.width() as f64;
        let dist: Vec<(f64, f64)> = traj
            .records
            .iter()
            .map(|r| (axes.x(r.t), axes.y(r.wdist_inf)))
            .collect();
        canvas.polyline(&dist, color);
        // dashed-style envelope drawn as a second polyline in grey
        let has_envelope = traj.records.iter().any(|r| r.kappa_time_integral > 0.0);
        if has_envelope {
            let env: Vec<(f64, f64)> = traj
                .records
                .iter()
                .map(|r| (axes.x(r.t), axes.y((2.0 / m).sqrt() * r.kappa_time_integral)))
                .collect();
            canvas.polyline(&env, "#999999");
        }
        if i < 6 {
            canvas.text(MARGIN + 8.0, MARGIN + 16.0 + 14.0 * i as f64, run_id);
        }
    }
    canvas.text(10.0, MARGIN - 8.0, "||theta(t)-theta(0)||_inf");
    canvas.finish()
}

fn histogram_svg(title: &str, counts: &[usize]) -> String {
    let mut canvas = SvgCanvas::new(title);
    let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let axes = Axes {
        x_lo: -1.0,
        x_hi: 1.0,
        y_lo: 0.0,
        y_hi: max * 1.05,
    };
    let width = 2.0 / counts.len() as f64;
    for (i, &c) in counts.iter().enumerate() {
        let lo = -1.0 + i as f64 * width;
        let x = axes.x(lo);
        let y = axes.y(c as f64);
        canvas.rect(x, y, axes.x(lo + width) - x, (PLOT_H - MARGIN) - y, "#1f6fb2");
    }
    canvas.text(MARGIN, PLOT_H - MARGIN + 16.0, "-1");
    canvas.text(PLOT_W - MARGIN - 10.0, PLOT_H - MARGIN + 16.0, "1");
    canvas.finish()
}

fn errors_csv(stats: &[BoxStats]) -> String {
    let mut out = String::from("target,m,min,q1,median,q3,max\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            s.target, s.m, s.min, s.q1, s.median, s.q3, s.max
        );
    }
    out
}

/// Renders the full report bundle. With an empty trajectory set only the
/// record-driven plots are produced and a warning is returned.
pub fn render_report(
    records: &[RunRecord],
    trajectories: &[(String, Trajectory)],
    out_dir: &Path,
) -> Result<ReportOutput> {
    if records.is_empty() {
        return Err(NtkLabError::Config("render_report needs at least one record".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let emit = |name: &str, content: String, files: &mut Vec<PathBuf>| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, content)?;
        files.push(path);
        Ok(())
    };

    let stats = box_stats(records);
    emit("errors_vs_m.svg", error_boxes_svg(&stats), &mut files)?;
    emit("errors_vs_m.csv", errors_csv(&stats), &mut files)?;

    if trajectories.is_empty() {
        warnings.push("no trajectories supplied; skipping learning-curve and weight-distance plots".into());
    } else {
        emit("learning_curves.svg", learning_curves_svg(trajectories), &mut files)?;
        let mut curves = String::from("run_id,t_or_step,loss,l2_err,s_norm,wdist_inf,kappa_time_integral\n");
        for (run_id, traj) in trajectories {
            for line in traj.to_csv(run_id).lines().skip(1) {
                curves.push_str(line);
                curves.push('\n');
            }
        }
        emit("learning_curves.csv", curves, &mut files)?;
        emit("weight_distance.svg", weight_distance_svg(trajectories), &mut files)?;
    }

    // breakpoint histograms from the final networks, pooled per target
    let mut targets: Vec<String> = records.iter().map(|r| r.target.clone()).collect();
    targets.sort();
    targets.dedup();
    for target in &targets {
        let pooled: Vec<f64> = trajectories
            .iter()
            .filter(|(run_id, _)| run_id.starts_with(&format!("{target}-")))
            .flat_map(|(_, traj)| traj.final_net.biases.iter().copied())
            .collect();
        if pooled.is_empty() {
            continue;
        }
        let hist = breakpoint_histogram(&pooled, 40)?;
        emit(
            &format!("breakpoints_{target}.svg"),
            histogram_svg(&format!("final breakpoints: {target}"), &hist.counts),
            &mut files,
        )?;
        emit(&format!("breakpoints_{target}.csv"), histogram_csv(&hist), &mut files)?;
    }
    if trajectories.is_empty() {
        warnings.push("no final networks available; breakpoint histograms skipped".into());
    }

    Ok(ReportOutput { files, warnings })
}
