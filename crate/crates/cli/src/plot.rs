//! Minimal SVG line plots.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub y: &'a [f64],
    pub dashed: bool,
}

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders `series` against the shared abscissa `x`. Long series are
/// thinned to roughly one point per horizontal pixel.
pub fn line_plot(title: &str, xlabel: &str, x: &[f64], series: &[Series]) -> String {
    let finite = |v: &&f64| v.is_finite();
    let (xmin, xmax) = x.iter().filter(finite).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let (mut ymin, mut ymax) = series
        .iter()
        .flat_map(|s| s.y.iter())
        .filter(finite)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !ymin.is_finite() {
        (ymin, ymax) = (0.0, 1.0);
    }
    if ymax - ymin < 1e-12 * (1.0 + ymax.abs()) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let pad = 0.05 * (ymax - ymin);
    let (ymin, ymax) = (ymin - pad, ymax + pad);
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let px = |v: f64| LEFT + (v - xmin) / xspan * (W - LEFT - RIGHT);
    let py = |v: f64| TOP + (ymax - v) / (ymax - ymin) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for t in nice_ticks(xmin, xmax, 8) {
        let xp = px(t);
        let _ = writeln!(s, r#"<line x1="{xp:.1}" y1="{y1}" x2="{xp:.1}" y2="{}" stroke="black"/><text x="{xp:.1}" y="{}" text-anchor="middle">{}</text>"#, y1 + 5.0, y1 + 18.0, tick_label(t));
    }
    for t in nice_ticks(ymin, ymax, 6) {
        let yp = py(t);
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{yp:.1}" x2="{x1}" y2="{yp:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##, x0 - 6.0, yp + 4.0, tick_label(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(xlabel));

    let stride = (x.len() / (W as usize)).max(1);
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let mut pen_up = true;
        for (k, (xv, yv)) in x.iter().zip(ser.y).enumerate() {
            if k % stride != 0 && k + 1 != x.len() {
                continue;
            }
            if !yv.is_finite() {
                pen_up = true;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_up { "M" } else { "L" }, px(*xv), py(*yv));
            pen_up = false;
        }
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, d.trim_end());
        let ly = y0 + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            x1 - 150.0,
            x1 - 125.0,
            x1 - 120.0,
            ly + 4.0,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 400.0, 8);
        assert_eq!(t.first(), Some(&0.0));
        assert_eq!(t.last(), Some(&400.0));
    }

    #[test]
    fn renders_each_series() {
        let x = [0.0, 1.0, 2.0];
        let a = [1.0, 0.5, 0.25];
        let b = [0.0, f64::NAN, 1.0];
        let svg = line_plot(
            "t < 3",
            "t",
            &x,
            &[
                Series { label: "z", y: &a, dashed: false },
                Series { label: "zhat", y: &b, dashed: true },
            ],
        );
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("t &lt; 3"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
