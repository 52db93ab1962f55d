//! Minimal static SVG charts.

use std::fmt::Write;

use crate::stats::CorrMatrix;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Roughly `n` round tick values covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / n.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Lower and upper edge of a shaded band.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub note: Option<String>,
    pub series: Vec<Series>,
}

impl LineChart {
    pub fn render(&self) -> String {
        let (w, h) = (860.0, 500.0);
        let (ml, mr, mt, mb) = (80.0, 200.0, 50.0, 60.0);
        let (pw, ph) = (w - ml - mr, h - mt - mb);
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &x in &s.x {
                xs = (xs.0.min(x), xs.1.max(x));
            }
            let mut take = |v: &[f64]| {
                for &y in v.iter().filter(|y| y.is_finite()) {
                    ys = (ys.0.min(y), ys.1.max(y));
                }
            };
            take(&s.y);
            if let Some((lo, hi)) = &s.band {
                take(lo);
                take(hi);
            }
        }
        if !xs.0.is_finite() {
            xs = (0.0, 1.0);
            ys = (0.0, 1.0);
        }
        if xs.1 == xs.0 {
            xs.1 = xs.0 + 1.0;
        }
        if ys.1 == ys.0 {
            ys = (ys.0 - 0.5, ys.1 + 0.5);
        }
        let pad = (ys.1 - ys.0) * 0.05;
        ys = (ys.0 - pad, ys.1 + pad);
        let px = |x: f64| ml + (x - xs.0) / (xs.1 - xs.0) * pw;
        let py = |y: f64| mt + ph - (y - ys.0) / (ys.1 - ys.0) * ph;

        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            o,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            ml + pw / 2.0,
            escape(&self.title)
        );
        for t in ticks(xs.0, xs.1, 6) {
            let x = px(t);
            let _ = writeln!(
                o,
                r##"<line x1="{x:.1}" y1="{mt}" x2="{x:.1}" y2="{:.1}" stroke="#eee"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                mt + ph,
                mt + ph + 16.0,
                fmt_tick(t)
            );
        }
        for t in ticks(ys.0, ys.1, 6) {
            let y = py(t);
            let _ = writeln!(
                o,
                r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#eee"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                ml + pw,
                ml - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            o,
            r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            o,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            ml + pw / 2.0,
            h - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            o,
            r#"<text transform="translate(20 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            mt + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let c = color(i);
            if let Some((lo, hi)) = &s.band {
                let mut pts = String::new();
                for (x, y) in s.x.iter().zip(hi) {
                    let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
                }
                for (x, y) in s.x.iter().zip(lo).rev() {
                    let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
                }
                let _ = writeln!(o, r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, pts.trim_end());
            }
            let mut pts = String::new();
            for (x, y) in s.x.iter().zip(&s.y) {
                let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
            }
            let _ = writeln!(
                o,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                pts.trim_end()
            );
            let ly = mt + 14.0 + 18.0 * i as f64;
            let lx = ml + pw + 12.0;
            let _ = writeln!(
                o,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        if let Some(note) = &self.note {
            let _ = writeln!(
                o,
                r##"<text x="{:.1}" y="{:.1}" fill="#555" font-size="11">{}</text>"##,
                ml + pw + 12.0,
                mt + ph,
                escape(note)
            );
        }
        o.push_str("</svg>\n");
        o
    }
}

fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!("rgb({},{},{})", r.round(), g.round(), b.round())
}

/// Side-by-side correlation heatmaps; masked entries are grey.
pub fn heatmaps(title: &str, panels: &[(String, &CorrMatrix)]) -> String {
    let cell = 16.0;
    let dim = panels.first().map_or(0, |p| p.1.dim) as f64;
    let side = dim * cell;
    let gap = 40.0;
    let w = 40.0 + panels.len() as f64 * (side + gap);
    let h = side + 100.0;
    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="20" y="22" font-size="15">{}</text>"#, escape(title));
    for (p, (name, m)) in panels.iter().enumerate() {
        let x0 = 20.0 + p as f64 * (side + gap);
        let y0 = 60.0;
        let _ = writeln!(o, r#"<text x="{x0}" y="{}">{}</text>"#, y0 - 8.0, escape(name));
        for i in 0..m.dim {
            for j in 0..m.dim {
                let fill = m.get(i, j).map_or_else(|| "#bbb".to_string(), diverging);
                let _ = writeln!(
                    o,
                    r#"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="{fill}"/>"#,
                    x0 + j as f64 * cell,
                    y0 + i as f64 * cell
                );
            }
        }
        let _ = writeln!(
            o,
            r#"<rect x="{x0}" y="{y0}" width="{side}" height="{side}" fill="none" stroke="black"/>"#
        );
    }
    let _ = writeln!(
        o,
        r##"<text x="20" y="{}" fill="#555" font-size="11">red = +1, blue = -1, grey = zero-variance component (masked)</text>"##,
        h - 14.0
    );
    o.push_str("</svg>\n");
    o
}

pub struct Bar {
    pub group: String,
    pub label: String,
    pub value: f64,
    pub err: f64,
}

/// Grouped bars with ± error whiskers.
pub fn bar_chart(title: &str, y_label: &str, bars: &[Bar]) -> String {
    let mut groups: Vec<&str> = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    for b in bars {
        if !groups.contains(&b.group.as_str()) {
            groups.push(&b.group);
        }
        if !labels.contains(&b.label.as_str()) {
            labels.push(&b.label);
        }
    }
    let (w, h) = (160.0 + 110.0 * groups.len().max(1) as f64, 420.0);
    let (ml, mt, mb) = (80.0, 50.0, 60.0);
    let (pw, ph) = (w - ml - 120.0, h - mt - mb);
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    for b in bars {
        lo = lo.min(b.value - b.err);
        hi = hi.max(b.value + b.err);
    }
    if hi == lo {
        hi = lo + 1.0;
    }
    let py = |y: f64| mt + ph - (y - lo) / (hi - lo) * ph;
    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, escape(title));
    for t in ticks(lo, hi, 6) {
        let y = py(t);
        let _ = writeln!(
            o,
            r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#eee"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            ml + pw,
            ml - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        o,
        r#"<text transform="translate(20 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        mt + ph / 2.0,
        escape(y_label)
    );
    let gw = pw / groups.len().max(1) as f64;
    let bw = gw * 0.8 / labels.len().max(1) as f64;
    for b in bars {
        let g = groups.iter().position(|x| *x == b.group).unwrap();
        let l = labels.iter().position(|x| *x == b.label).unwrap();
        let x = ml + g as f64 * gw + gw * 0.1 + l as f64 * bw;
        let (top, bottom) = (py(b.value.max(0.0)), py(b.value.min(0.0)));
        let _ = writeln!(
            o,
            r#"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
            bw * 0.9,
            bottom - top,
            color(l)
        );
        let cx = x + bw * 0.45;
        let _ = writeln!(
            o,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            py(b.value - b.err),
            py(b.value + b.err)
        );
    }
    for (g, name) in groups.iter().enumerate() {
        let _ = writeln!(
            o,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            ml + g as f64 * gw + gw / 2.0,
            mt + ph + 18.0,
            escape(name)
        );
    }
    for (l, name) in labels.iter().enumerate() {
        let ly = mt + 14.0 + 18.0 * l as f64;
        let _ = writeln!(
            o,
            r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ml + pw + 12.0,
            ly - 10.0,
            color(l),
            ml + pw + 30.0,
            ly,
            escape(name)
        );
    }
    let _ = writeln!(o, r#"<line x1="{ml}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#, py(0.0), ml + pw, py(0.0));
    o.push_str("</svg>\n");
    o
}
