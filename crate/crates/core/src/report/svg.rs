//! Minimal hand-written SVG: axes, bars, points, lines.

use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;

pub(crate) struct Canvas {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

fn pad((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Range of `values` widened by 5% on each side.
pub(crate) fn auto_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (lo, hi) = pad((lo, hi));
    let w = 0.05 * (hi - lo);
    (lo - w, hi + w)
}

impl Canvas {
    pub(crate) fn new(
        title: &str,
        xlabel: &str,
        ylabel: &str,
        x: (f64, f64),
        y: (f64, f64),
    ) -> Self {
        let mut c = Canvas {
            x: pad(x),
            y: pad(y),
            body: String::new(),
        };
        let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2.0, MARGIN / 2.0);
        let _ = writeln!(
            c.body,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for (i, v) in ticks(c.x).into_iter().enumerate() {
            let px = c.px(v);
            let anchor = if i == 0 { "start" } else { "middle" };
            let _ = writeln!(
                c.body,
                r#"<text x="{px:.2}" y="{:.2}" font-size="10" text-anchor="{anchor}">{}</text>"#,
                y0 + 14.0,
                tick_label(v)
            );
        }
        for v in ticks(c.y) {
            let py = c.py(v);
            let _ = writeln!(
                c.body,
                r#"<text x="{:.2}" y="{py:.2}" font-size="10" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                tick_label(v)
            );
        }
        let _ = writeln!(
            c.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(xlabel)
        );
        let _ = writeln!(
            c.body,
            r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
        let _ = writeln!(
            c.body,
            r#"<text x="{:.2}" y="16" font-size="13" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        c
    }

    fn px(&self, v: f64) -> f64 {
        MARGIN + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 1.5 * MARGIN)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 1.5 * MARGIN)
    }

    pub(crate) fn bar(&mut self, x_lo: f64, x_hi: f64, height: f64) {
        let (a, b) = (self.px(x_lo), self.px(x_hi));
        let (top, base) = (self.py(height), self.py(self.y.0.max(0.0)));
        let _ = writeln!(
            self.body,
            r##"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#8da0cb" stroke="white"/>"##,
            b - a,
            (base - top).max(0.0)
        );
    }

    pub(crate) fn point(&mut self, x: f64, y: f64) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="black" fill-opacity="0.6"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    pub(crate) fn line(&mut self, from: (f64, f64), to: (f64, f64), dashed: bool) {
        let dash = if dashed {
            r#" stroke-dasharray="4 3""#
        } else {
            ""
        };
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="red"{dash}/>"#,
            self.px(from.0),
            self.py(from.1),
            self.px(to.0),
            self.py(to.1)
        );
    }

    pub(crate) fn hline(&mut self, y: f64) {
        self.line((self.x.0, y), (self.x.1, y), true);
    }

    pub(crate) fn vline(&mut self, x: f64) {
        self.line((x, self.y.0), (x, self.y.1), true);
    }

    /// Draws the identity line across the visible box.
    pub(crate) fn diagonal(&mut self) {
        let lo = self.x.0.max(self.y.0);
        let hi = self.x.1.min(self.y.1);
        if hi > lo {
            self.line((lo, lo), (hi, hi), true);
        }
    }

    pub(crate) fn polyline(&mut self, pts: &[(f64, f64)]) {
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2}",
                if i == 0 { "" } else { " " },
                self.px(*x),
                self.py(*y)
            );
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{d}" fill="none" stroke="black"/>"#
        );
    }

    pub(crate) fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n{}</svg>\n",
            self.body
        )
    }
}

fn ticks((lo, hi): (f64, f64)) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
