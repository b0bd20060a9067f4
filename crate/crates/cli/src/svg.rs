//! Minimal static SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use odmr_core::io_formats::FormatError;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn scale(v: f64, (lo, hi): (f64, f64), a: f64, b: f64) -> f64 {
    a + (v - lo) / (hi - lo) * (b - a)
}

/// Blue to yellow ramp for `t` in [0, 1].
fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (68.0 + t * (253.0 - 68.0)).round();
    let g = (1.0 + t * (231.0 - 1.0)).round();
    let b = (84.0 + t * (37.0 - 84.0)).round();
    format!("rgb({r},{g},{b})")
}

fn frame(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{x_label} [{:.4e} .. {:.4e}]</text>"#,
        W / 2.0,
        H - 16.0,
        x.0,
        x.1
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle" font-family="sans-serif" font-size="12">{y_label} [{:.4e} .. {:.4e}]</text>"#,
        H / 2.0,
        H / 2.0,
        y.0,
        y.1
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    s
}

fn save(path: &Path, mut body: String) -> Result<(), FormatError> {
    body.push_str("</svg>\n");
    fs::write(path, body).map_err(|e| FormatError::IoFailure {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Heatmap of `values[iy * x.len() + ix]`; `None` cells are left blank.
pub fn heatmap(
    path: &Path,
    title: &str,
    (x_label, x): (&str, &[f64]),
    (y_label, y): (&str, &[f64]),
    values: &[Option<f64>],
) -> Result<(), FormatError> {
    let xr = range(x.iter().copied());
    let yr = range(y.iter().copied());
    let vr = range(values.iter().flatten().copied());
    let mut s = frame(title, x_label, y_label, xr, yr);
    let cw = (W - 2.0 * MARGIN) / x.len().max(1) as f64;
    let ch = (H - 2.0 * MARGIN) / y.len().max(1) as f64;
    for iy in 0..y.len() {
        for ix in 0..x.len() {
            if let Some(v) = values[iy * x.len() + ix] {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    MARGIN + ix as f64 * cw,
                    H - MARGIN - (iy + 1) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05,
                    color(scale(v, vr, 0.0, 1.0))
                );
            }
        }
    }
    save(path, s)
}

/// Line plot of several `(x, y, stroke)` series on shared axes.
pub fn lines(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&[f64], &[f64], &str)],
) -> Result<(), FormatError> {
    let xr = range(series.iter().flat_map(|s| s.0.iter().copied()));
    let yr = range(series.iter().flat_map(|s| s.1.iter().copied()));
    let mut s = frame(title, x_label, y_label, xr, yr);
    for (xs, ys, stroke) in series {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys.iter())
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| {
                format!(
                    "{:.2},{:.2}",
                    scale(a, xr, MARGIN, W - MARGIN),
                    scale(b, yr, H - MARGIN, MARGIN)
                )
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.2" points="{}"/>"#,
            pts.join(" ")
        );
    }
    save(path, s)
}
