//! Static SVG line plot of MSE against step, log10 y axis.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub label: String,
    /// `(k, mse)`; non-positive values are skipped on the log axis.
    pub points: Vec<(usize, f64)>,
}

pub fn render(title: &str, series: &[Series]) -> String {
    let pos = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1 > 0.0 && p.1.is_finite());
    let k_max = series.iter().flat_map(|s| s.points.iter()).map(|p| p.0).max().unwrap_or(1).max(1);
    let (lo, hi) = pos().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let l = p.1.log10();
        (lo.min(l), hi.max(l))
    });
    let (y0, y1) = if lo.is_finite() { (lo.floor(), hi.ceil().max(lo.floor() + 1.0)) } else { (-1.0, 0.0) };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |k: usize| LEFT + pw * k as f64 / k_max as f64;
    let sy = |l: f64| TOP + ph * (y1 - l) / (y1 - y0);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );

    // decade grid; thin out when the range is wide
    let decades = (y1 - y0) as i64;
    let every = (decades / 10 + 1).max(1);
    for d in (y0 as i64..=y1 as i64).filter(|d| (d - y0 as i64) % every == 0) {
        let y = sy(d as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>
<text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for k in x_ticks(k_max) {
        let x = sx(k);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#000"/>
<text x="{x:.1}" y="{:.1}" text-anchor="middle">{k}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>
<text x="{:.1}" y="{:.1}" text-anchor="middle">step k</text>
<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">MSE (m², log scale)</text>"##,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        for &(k, m) in s.points.iter().filter(|p| p.1 > 0.0 && p.1.is_finite()) {
            let _ = write!(pts, "{:.1},{:.1} ", sx(k), sy(m.log10()));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 16.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>
<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Roughly six ticks at 1, 2 or 5 times a power of ten.
fn x_ticks(k_max: usize) -> Vec<usize> {
    let raw = (k_max as f64 / 6.0).max(1.0);
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag) as usize;
    (0..=k_max).step_by(step.max(1)).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_has_one_polyline_per_series() {
        let series: Vec<Series> = (1..=3)
            .map(|v| Series {
                label: format!("vehicle {v}"),
                points: (1..=50).map(|k| (k, 10f64.powi(-(k as i32) / 5) * v as f64)).collect(),
            })
            .collect();
        let svg = render("MSE <test>", &series);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("vehicle 2") && svg.contains("MSE &lt;test&gt;"));
        assert_eq!(svg, render("MSE <test>", &series));
    }

    #[test]
    fn ticks() {
        assert_eq!(x_ticks(500), vec![0, 100, 200, 300, 400, 500]);
        assert_eq!(x_ticks(3), vec![0, 1, 2, 3]);
    }

    #[test]
    fn zero_series_still_renders() {
        let svg = render("flat", &[Series { label: "v".into(), points: vec![(1, 0.0)] }]);
        assert!(svg.contains("<polyline"));
    }
}
