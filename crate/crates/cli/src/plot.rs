//! Minimal SVG log–log plot of a sweep.

use std::fmt::Write as _;

use perforate::rates::{SweepRecord, Verdict};

const W: f64 = 640.0;
const H: f64 = 440.0;
const PAD: f64 = 60.0;

pub fn sweep_svg(records: &[SweepRecord], verdicts: &[Verdict]) -> String {
    let series: Vec<(&str, &str, Vec<(f64, f64)>)> = vec![
        ("L2", "#1f77b4", records.iter().map(|r| (r.eps, r.l2_norm / r.f_norm)).collect()),
        ("W12", "#d62728", records.iter().map(|r| (r.eps, r.w12_norm / r.f_norm)).collect()),
    ];
    let pts: Vec<(f64, f64)> =
        series.iter().flat_map(|s| s.2.iter().copied()).filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.log10(), y.log10())).collect();
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if pts.is_empty() {
        svg.push_str("<text x=\"20\" y=\"30\">no positive data</text>\n</svg>\n");
        return svg;
    }
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (mx, my) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
    let (x0, x1, y0, y1) = (x0 - mx, x1 + mx, y0 - my, y1 + my);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let _ = writeln!(svg, r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - 2.0 * PAD, H - 2.0 * PAD);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">log10 ε</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(svg, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">log10 ‖u‖/‖f‖</text>"#, H / 2.0, H / 2.0);
    for (i, (name, color, data)) in series.iter().enumerate() {
        let logs: Vec<(f64, f64)> = data.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.log10(), y.log10())).collect();
        for (x, y) in &logs {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, sx(*x), sy(*y));
        }
        let v = verdicts.iter().find(|v| format!("{:?}", v.norm) == *name);
        if let (Some(v), Some(first), Some(last)) = (v, logs.first(), logs.last()) {
            let mean = logs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
            let (cx, cy) = (mean.0 / logs.len() as f64, mean.1 / logs.len() as f64);
            if let Some(s) = v.fitted_slope {
                let line = |x: f64| cy + s * (x - cx);
                let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#, sx(first.0), sy(line(first.0)), sx(last.0), sy(line(last.0)));
            }
            if let Some(p) = v.predicted_exponent {
                let line = |x: f64| cy + p * (x - cx);
                let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="5,4"/>"#, sx(first.0), sy(line(first.0)), sx(last.0), sy(line(last.0)));
            }
            let label = match (v.fitted_slope, v.predicted_exponent) {
                (Some(s), Some(p)) => format!("{name}: slope {s:.3} (predicted {p:.3})"),
                _ => format!("{name}: insufficient points"),
            };
            let _ = writeln!(svg, r#"<text x="{}" y="{}" fill="{color}">{label}</text>"#, PAD + 10.0, PAD + 18.0 * (i as f64 + 1.0));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
