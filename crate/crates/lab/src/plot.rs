//! Minimal SVG line plots. Each series is drawn as a polyline; the values
//! come straight from the CSV columns named in the series.

use std::fmt::Write;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_R: f64 = 12.0;
const MARGIN_T: f64 = 26.0;
const MARGIN_B: f64 = 30.0;
const PALETTE: [&str; 8] = [
    "#000000", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            xs,
            ys,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
    pub log_y: bool,
}

impl Panel {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e3 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn render_panel(out: &mut String, panel: &Panel, x0: f64, y0: f64) {
    let ty = |v: f64| {
        if panel.log_y {
            v.max(1e-300).log10()
        } else {
            v
        }
    };
    let xb = bounds(panel.series.iter().flat_map(|s| s.xs.iter().copied()));
    let yb = bounds(
        panel
            .series
            .iter()
            .flat_map(|s| s.ys.iter().map(|&v| ty(v))),
    );
    let w = PANEL_W - MARGIN_L - MARGIN_R;
    let h = PANEL_H - MARGIN_T - MARGIN_B;
    let (left, top) = (x0 + MARGIN_L, y0 + MARGIN_T);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        left + w / 2.0,
        y0 + 16.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#888"/>"##
    );
    let (Some((xl, xh)), Some((yl, yh))) = (xb, yb) else {
        return;
    };
    let px = |x: f64| left + (x - xl) / (xh - xl) * w;
    let py = |y: f64| top + h - (y - yl) / (yh - yl) * h;
    let ylab = |v: f64| {
        if panel.log_y {
            tick(10f64.powf(v))
        } else {
            tick(v)
        }
    };
    for (v, anchor_y) in [(yl, top + h), (yh, top + 8.0)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{}</text>"#,
            left - 4.0,
            anchor_y,
            ylab(v)
        );
    }
    for (v, anchor) in [(xl, "start"), (xh, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="{anchor}">{}</text>"#,
            px(v),
            top + h + 12.0,
            tick(v)
        );
    }
    for (k, s) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut points = String::new();
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            let y = ty(y);
            if x.is_finite() && y.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", px(x), py(y));
            }
        }
        let dash = if s.dashed {
            r#" stroke-dasharray="5,3""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} points="{}"/>"#,
            points.trim_end()
        );
        let ly = top + 10.0 + 11.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}"{dash}/>"#,
            left + w - 96.0,
            ly - 3.0,
            left + w - 80.0,
            ly - 3.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="9">{}</text>"#,
            left + w - 76.0,
            escape(&s.label)
        );
    }
}

/// Lays the panels out row by row, `cols` per row.
pub fn render(title: &str, panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let width = PANEL_W * cols as f64;
    let height = PANEL_H * rows as f64 + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (i, panel) in panels.iter().enumerate() {
        let x0 = PANEL_W * (i % cols) as f64;
        let y0 = 30.0 + PANEL_H * (i / cols) as f64;
        render_panel(&mut out, panel, x0, y0);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_series_once() {
        let panel = Panel::new("a < b")
            .with(Series::new("one", vec![0.0, 1.0], vec![1.0, 2.0]))
            .with(Series::new("two", vec![0.0, 1.0], vec![f64::NAN, 3.0]).dashed());
        let svg = render("demo", &[panel.clone(), panel], 2);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn empty_panel_is_still_valid() {
        let svg = render("empty", &[Panel::new("nothing")], 1);
        assert!(svg.contains("<rect"));
        assert!(!svg.contains("<polyline"));
    }
}
