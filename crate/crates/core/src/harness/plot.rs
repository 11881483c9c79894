use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use super::metrics::{read_csv, MetricsRow};
use super::HarnessError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;
const GRID_POINTS: usize = 100;

/// `(step, return)` points of one run, returns averaged over rows sharing a
/// step and non-finite returns dropped.
pub fn trace_from_rows(rows: &[MetricsRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows.iter().filter(|r| r.episode_return.is_finite()) {
        let x = r.step as f64;
        match out.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += r.episode_return;
                last.2 += 1;
            }
            _ => out.push((x, r.episode_return, 1)),
        }
    }
    out.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect()
}

fn interpolate(trace: &[(f64, f64)], x: f64) -> f64 {
    let i = trace.partition_point(|p| p.0 < x);
    if i == 0 {
        return trace[0].1;
    }
    if i == trace.len() {
        return trace[i - 1].1;
    }
    let (x0, y0) = trace[i - 1];
    let (x1, y1) = trace[i];
    if x1 == x0 {
        y1
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Cross-run mean and sample std on a common step grid: the shared steps
/// when every trace has the same ones, otherwise an even grid over the
/// overlapping range with linear interpolation.
pub fn band(traces: &[Vec<(f64, f64)>]) -> Vec<(f64, f64, f64)> {
    let same_steps = traces.windows(2).all(|w| {
        w[0].len() == w[1].len() && w[0].iter().zip(&w[1]).all(|(a, b)| a.0 == b.0)
    });
    let grid: Vec<f64> = if same_steps {
        traces[0].iter().map(|p| p.0).collect()
    } else {
        let lo = traces.iter().map(|t| t[0].0).fold(f64::NEG_INFINITY, f64::max);
        let hi = traces.iter().map(|t| t[t.len() - 1].0).fold(f64::INFINITY, f64::min);
        if hi <= lo {
            vec![lo]
        } else {
            (0..GRID_POINTS).map(|k| lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64).collect()
        }
    };
    grid.into_iter()
        .map(|x| {
            let ys: Vec<f64> = traces.iter().map(|t| interpolate(t, x)).collect();
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let std = if ys.len() > 1 {
                (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (x, mean, std)
        })
        .collect()
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|k| lo + (hi - lo) * k as f64 / count as f64).collect()
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders per-run traces, their mean and a ±1 std band as a standalone SVG.
pub fn render_svg(traces: &[Vec<(f64, f64)>], title: &str) -> Result<String, HarnessError> {
    if traces.is_empty() || traces.iter().any(Vec::is_empty) {
        return Err(HarnessError::Empty("no finite returns to plot".into()));
    }
    let stats = band(traces);
    let xs = traces.iter().flatten().map(|p| p.0);
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = traces
        .iter()
        .flatten()
        .map(|p| p.1)
        .chain(stats.iter().flat_map(|s| [s.1 - s.2, s.1 + s.2]));
    let (mut y_lo, mut y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if y_hi - y_lo < 1e-9 {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_lo) / x_span * plot_w;
    let py = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));

    // axes and ticks
    let (x0, y0) = (MARGIN_LEFT, MARGIN_TOP + plot_h);
    let _ = writeln!(svg, r#"<g stroke="black" stroke-width="1">"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}"/>"#, x0 + plot_w);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}"/>"#);
    for t in nice_ticks(x_lo, x_lo + x_span, 5) {
        let _ = writeln!(svg, r#"<line x1="{0:.2}" y1="{y0}" x2="{0:.2}" y2="{1}"/>"#, px(t), y0 + 5.0);
    }
    for t in nice_ticks(y_lo, y_hi, 5) {
        let _ = writeln!(svg, r#"<line x1="{}" y1="{1:.2}" x2="{x0}" y2="{1:.2}"/>"#, x0 - 5.0, py(t));
    }
    let _ = writeln!(svg, "</g>");
    for t in nice_ticks(x_lo, x_lo + x_span, 5) {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, px(t), y0 + 20.0, fmt_tick(t));
    }
    for t in nice_ticks(y_lo, y_hi, 5) {
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, py(t) + 4.0, fmt_tick(t));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, x0 + plot_w / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">return</text>"#,
        MARGIN_TOP + plot_h / 2.0
    );

    // std band
    let mut band_pts: Vec<String> = stats.iter().map(|s| format!("{:.2},{:.2}", px(s.0), py(s.1 + s.2))).collect();
    band_pts.extend(stats.iter().rev().map(|s| format!("{:.2},{:.2}", px(s.0), py(s.1 - s.2))));
    let _ = writeln!(svg, r#"<polygon class="band" points="{}" fill="steelblue" fill-opacity="0.2" stroke="none"/>"#, band_pts.join(" "));

    for trace in traces {
        let pts: Vec<String> = trace.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="seed" points="{}" fill="none" stroke="gray" stroke-opacity="0.4" stroke-width="1"/>"#,
            pts.join(" ")
        );
    }
    let mean_pts: Vec<String> = stats.iter().map(|s| format!("{:.2},{:.2}", px(s.0), py(s.1))).collect();
    let _ = writeln!(
        svg,
        r#"<polyline class="mean" points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        mean_pts.join(" ")
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Reads metrics CSVs (one per run) and writes a learning-curve SVG.
pub fn emit_learning_curve(csv_paths: &[PathBuf], out: &Path, title: &str) -> Result<(), HarnessError> {
    if csv_paths.is_empty() {
        return Err(HarnessError::Empty("at least one CSV is required".into()));
    }
    let mut traces = Vec::with_capacity(csv_paths.len());
    for path in csv_paths {
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        let rows = read_csv(BufReader::new(file)).map_err(|e| e.in_file(path))?;
        let trace = trace_from_rows(&rows);
        if trace.is_empty() {
            return Err(HarnessError::Empty(format!("{}: no finite returns", path.display())));
        }
        traces.push(trace);
    }
    let svg = render_svg(&traces, title)?;
    fs::write(out, svg).map_err(|e| HarnessError::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_on_shared_steps() {
        let a = vec![(0.0, 1.0), (10.0, 3.0)];
        let b = vec![(0.0, 3.0), (10.0, 5.0)];
        let s = band(&[a, b]);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].1, 2.0);
        assert!((s[1].2 - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn band_interpolates_misaligned_traces() {
        let a = vec![(0.0, 0.0), (100.0, 100.0)];
        let b = vec![(0.0, 0.0), (50.0, 50.0), (100.0, 100.0)];
        let s = band(&[a, b]);
        assert_eq!(s.len(), GRID_POINTS);
        assert!(s.iter().all(|p| (p.1 - p.0).abs() < 1e-9 && p.2 < 1e-9));
    }

    #[test]
    fn single_trace_has_degenerate_band() {
        let svg = render_svg(&[vec![(1.0, 2.0), (2.0, 4.0)]], "t").unwrap();
        assert_eq!(svg.matches("class=\"seed\"").count(), 1);
        assert!(svg.contains("class=\"band\""));
    }
}
