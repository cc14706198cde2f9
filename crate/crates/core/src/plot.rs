//! Plot data from an [`EvalReport`]: one CSV per figure plus a bare SVG line
//! chart of the same series.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::EvalReport;

/// A named polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Line chart with linear axes fitted to the data.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 150.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 45.0;
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 15.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT + 10.0,
            W - RIGHT + 28.0,
            W - RIGHT + 32.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: PathBuf, text: String, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes `loss_curves`, `cumulative_d1` and `entropy` as `.csv` and `.svg`
/// into `dir`, returning the files written.
pub fn write_plots(report: &EvalReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let mut loss_csv = String::from("layers,seed,step,loss\n");
    let mut cum_csv = String::from("layers,seed,asset,step,cumulative_d1\n");
    let mut ent_csv = String::from("layers,seed,t,entropy_bits,max_bits\n");
    let mut loss = Vec::new();
    let mut cum = Vec::new();
    let mut ent = Vec::new();
    for run in &report.models {
        for s in &run.seeds {
            let Some(r) = &s.result else { continue };
            let tag = format!("L{} s{}", run.n_layers, s.seed);
            for &(step, l) in &r.loss_history {
                let _ = writeln!(loss_csv, "{},{},{step},{l:.16e}", run.n_layers, s.seed);
            }
            loss.push(Series {
                label: tag.clone(),
                points: r.loss_history.iter().map(|&(i, l)| (i as f64, l)).collect(),
            });
            for (a, fit) in r.cumulative.iter().enumerate() {
                for (j, c) in fit.curve.iter().enumerate() {
                    let _ = writeln!(cum_csv, "{},{},{},{},{c}", run.n_layers, s.seed, report.asset_ids[a], j + 1);
                }
                cum.push(Series {
                    label: format!("{tag} {}", report.asset_ids[a]),
                    points: fit.curve.iter().enumerate().map(|(j, &c)| ((j + 1) as f64, c)).collect(),
                });
            }
            for (t, e) in r.entropy.entropy_bits.iter().enumerate() {
                let _ = writeln!(ent_csv, "{},{},{},{e:.16e},{}", run.n_layers, s.seed, t + 1, r.entropy.max_bits);
            }
            ent.push(Series {
                label: tag,
                points: r.entropy.entropy_bits.iter().enumerate().map(|(t, &e)| ((t + 1) as f64, e)).collect(),
            });
        }
    }
    let title = |what: &str| format!("{} {what}", report.dataset);
    write(dir.join("loss_curves.csv"), loss_csv, &mut written)?;
    write(dir.join("loss_curves.svg"), line_chart_svg(&title("training loss"), "step", "loss (nats)", &loss), &mut written)?;
    write(dir.join("cumulative_d1.csv"), cum_csv, &mut written)?;
    write(
        dir.join("cumulative_d1.svg"),
        line_chart_svg(&title("cumulative Manhattan distance"), "step", "cumulative D1", &cum),
        &mut written,
    )?;
    write(dir.join("entropy.csv"), ent_csv, &mut written)?;
    write(
        dir.join("entropy.svg"),
        line_chart_svg(&title("entanglement entropy"), "t", "entropy (bits)", &ent),
        &mut written,
    )?;
    Ok(written)
}
