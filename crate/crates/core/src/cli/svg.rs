//! Minimal log-log scatter plot with an optional fitted power line.

use std::fmt::Write as _;

const W: f64 = 560.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;

pub struct LogLogPlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub points: Vec<(f64, f64)>,
    /// `y = e^intercept x^slope`.
    pub fit: Option<(f64, f64)>,
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
    let mut out = Vec::new();
    for e in a..=b {
        for m in [1.0, 2.0, 5.0] {
            let v = m * 10f64.powi(e);
            if v >= lo && v <= hi {
                out.push(v);
            }
        }
    }
    if out.len() < 2 {
        out = vec![lo, hi];
    }
    out
}

impl LogLogPlot<'_> {
    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .copied()
            .filter(|&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
            .collect();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, self.title);
        if pts.is_empty() {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">no positive data</text>"#, W / 2.0, H / 2.0);
            s.push_str("</svg>\n");
            return s;
        }
        let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| pts.iter().map(sel).fold(init, f);
        let (mut x0, mut x1) = (fold(f64::min, f64::INFINITY, |p| p.0), fold(f64::max, 0.0, |p| p.0));
        let (mut y0, mut y1) = (fold(f64::min, f64::INFINITY, |p| p.1), fold(f64::max, 0.0, |p| p.1));
        if x1 <= x0 {
            x0 /= 1.5;
            x1 *= 1.5;
        }
        if y1 <= y0 {
            y0 /= 1.5;
            y1 *= 1.5;
        }
        let (lx0, lx1, ly0, ly1) = (x0.ln(), x1.ln(), y0.ln(), y1.ln());
        let (pad_x, pad_y) = (0.05 * (lx1 - lx0), 0.05 * (ly1 - ly0));
        let (lx0, lx1, ly0, ly1) = (lx0 - pad_x, lx1 + pad_x, ly0 - pad_y, ly1 + pad_y);
        let px = |x: f64| MARGIN + (x.ln() - lx0) / (lx1 - lx0) * (W - 2.0 * MARGIN);
        let py = |y: f64| H - MARGIN - (y.ln() - ly0) / (ly1 - ly0) * (H - 2.0 * MARGIN);

        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        for t in ticks(lx0.exp(), lx1.exp()) {
            let x = px(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
                H - MARGIN,
                H - MARGIN + 5.0,
                H - MARGIN + 18.0,
                tick_label(t)
            );
        }
        for t in ticks(ly0.exp(), ly1.exp()) {
            let y = py(t);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{y:.2}" x2="{MARGIN}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN - 5.0,
                MARGIN - 8.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 15.0,
            self.x_label
        );
        let _ = writeln!(
            s,
            r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            self.y_label
        );
        if let Some((slope, intercept)) = self.fit {
            let (xa, xb) = (lx0.exp(), lx1.exp());
            let f = |x: f64| (intercept + slope * x.ln()).exp();
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c03" stroke-dasharray="6 4" clip-path="url(#plot)"/>"##,
                px(xa),
                py(f(xa)),
                px(xb),
                py(f(xb))
            );
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{}" text-anchor="end" fill="#c03">slope {:.4}</text>"##,
                W - MARGIN - 5.0,
                MARGIN + 15.0,
                slope
            );
        }
        for (x, y) in pts {
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="#036"/>"##, px(x), py(y));
        }
        let _ = writeln!(
            s,
            r#"<defs><clipPath id="plot"><rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}"/></clipPath></defs>"#,
            W - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        s.push_str("</svg>\n");
        s
    }
}

fn tick_label(v: f64) -> String {
    if (0.01..1e4).contains(&v) {
        format!("{}", (v * 1e3).round() / 1e3)
    } else {
        format!("{v:.0e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_points_and_fit() {
        let p = LogLogPlot {
            title: "t",
            x_label: "u",
            y_label: "-D(u)",
            points: vec![(2.0, 1.0), (4.0, 1.6), (8.0, 2.5)],
            fit: Some((0.66, 0.0)),
        };
        let s = p.render();
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(s.contains("slope 0.6600"));
    }

    #[test]
    fn empty_plot_is_valid() {
        let p = LogLogPlot {
            title: "t",
            x_label: "u",
            y_label: "y",
            points: vec![(1.0, -1.0)],
            fit: None,
        };
        assert!(p.render().contains("no positive data"));
    }
}
