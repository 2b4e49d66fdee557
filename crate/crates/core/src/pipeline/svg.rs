//! Minimal SVG 1.1 plotter. Coordinates are printed with two decimals so
//! output bytes depend only on the data.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = ["#1b6ca8", "#d9822b", "#3a9d5d", "#b8336a", "#7d5ba6", "#8c6d31", "#4a4a4a", "#17becf"];

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
    let _ =
        writeln!(out, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title));
}

fn legend(out: &mut String, x: f64, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let y = TOP + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="10" height="10" fill="{}"/>"#,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 14.0, y + 9.0, esc(n));
    }
}

/// Rounded tick step giving about five ticks over `span`.
fn tick_step(span: f64) -> f64 {
    if !(span > 0.0) {
        return 1.0;
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, px_lo, px_hi }
    }

    fn at(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn ticks(&self) -> Vec<f64> {
        let step = tick_step(self.hi - self.lo);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + step * 1e-9 {
            out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn y_axis(out: &mut String, y: &Axis, x0: f64, x1: f64, label: &str) {
    for t in y.ticks() {
        let py = y.at(t);
        let _ = writeln!(out, r##"<line x1="{x0:.2}" y1="{py:.2}" x2="{x1:.2}" y2="{py:.2}" stroke="#dddddd"/>"##);
        let _ =
            writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 4.0, py + 4.0, fmt_tick(t));
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y.px_lo + y.px_hi) / 2.0,
        (y.px_lo + y.px_hi) / 2.0,
        esc(label)
    );
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Grouped vertical bars: one group per category, one bar per series.
/// Missing values leave a gap.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[(String, Vec<Option<f64>>)]) -> String {
    let mut out = String::new();
    open(&mut out, W, H, title);
    let vals = series.iter().flat_map(|s| s.1.iter().flatten().copied());
    let (lo, hi) = vals.fold((0.0_f64, 0.0_f64), |(a, b), v| (a.min(v), b.max(v)));
    let y = Axis::new(lo, if hi == lo { lo + 1.0 } else { hi * 1.05 }, H - BOTTOM, TOP);
    y_axis(&mut out, &y, LEFT, W - RIGHT, y_label);
    let slot = (W - RIGHT - LEFT) / categories.len().max(1) as f64;
    let bw = slot * 0.8 / series.len().max(1) as f64;
    let base = y.at(0.0);
    for (c, name) in categories.iter().enumerate() {
        let x0 = LEFT + slot * c as f64 + slot * 0.1;
        for (s, (_, v)) in series.iter().enumerate() {
            if let Some(v) = v.get(c).copied().flatten() {
                let py = y.at(v);
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                    x0 + bw * s as f64,
                    py.min(base),
                    (py - base).abs(),
                    PALETTE[s % PALETTE.len()]
                );
            }
        }
        let cx = LEFT + slot * (c as f64 + 0.5);
        let ly = H - BOTTOM + 14.0;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{ly:.2}" text-anchor="end" transform="rotate(-30 {cx:.2} {ly:.2})">{}</text>"#,
            esc(name)
        );
    }
    let _ =
        writeln!(out, r#"<line x1="{LEFT:.2}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="black"/>"#, W - RIGHT);
    legend(&mut out, W - RIGHT + 12.0, &series.iter().map(|s| s.0.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Points `(x, y, group)`, colored by group.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64, usize)], groups: &[String]) -> String {
    let mut out = String::new();
    open(&mut out, W, H, title);
    let fold = |f: fn(&(f64, f64, usize)) -> f64| {
        points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let ((x0, x1), (y0, y1)) =
        if points.is_empty() { ((0.0, 1.0), (0.0, 1.0)) } else { (fold(|p| p.0), fold(|p| p.1)) };
    let pad = |a: f64, b: f64| ((b - a) * 0.05).max(1e-9);
    let x = Axis::new(x0 - pad(x0, x1), x1 + pad(x0, x1), LEFT, W - RIGHT);
    let y = Axis::new(y0 - pad(y0, y1), y1 + pad(y0, y1), H - BOTTOM, TOP);
    y_axis(&mut out, &y, LEFT, W - RIGHT, y_label);
    for t in x.ticks() {
        let px = x.at(t);
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 16.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - BOTTOM + 40.0,
        esc(x_label)
    );
    for &(px, py, g) in points {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}" fill-opacity="0.6"/>"#,
            x.at(px),
            y.at(py),
            PALETTE[g % PALETTE.len()]
        );
    }
    legend(&mut out, W - RIGHT + 12.0, groups);
    out.push_str("</svg>\n");
    out
}

/// Square matrix of values in [-1, 1] on a blue-white-red scale; missing
/// cells are grey.
pub fn heatmap(title: &str, labels: &[String], m: &[Vec<Option<f64>>]) -> String {
    let n = labels.len().max(1);
    let cell = (360.0 / n as f64).clamp(8.0, 40.0);
    let left = 200.0;
    let top = 50.0;
    let w = left + cell * n as f64 + 90.0;
    let h = top + cell * n as f64 + 170.0;
    let mut out = String::new();
    open(&mut out, w, h, title);
    let color = |v: f64| {
        let v = v.clamp(-1.0, 1.0);
        let (r, g, b) = if v >= 0.0 {
            (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
        } else {
            (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
        };
        format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
    };
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let fill = v.map_or_else(|| "#bbbbbb".to_string(), color);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}"/>"#,
                left + cell * j as f64,
                top + cell * i as f64
            );
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let c = cell * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 4.0,
            top + c + 4.0,
            esc(l)
        );
        let (lx, ly) = (left + c, top + cell * n as f64 + 8.0);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="end" transform="rotate(-60 {lx:.2} {ly:.2})">{}</text>"#,
            esc(l)
        );
    }
    let sx = left + cell * n as f64 + 20.0;
    for k in 0..=20 {
        let v = 1.0 - k as f64 / 10.0;
        let _ = writeln!(
            out,
            r#"<rect x="{sx:.2}" y="{:.2}" width="14" height="8" fill="{}"/>"#,
            top + 8.0 * k as f64,
            color(v)
        );
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">1</text>"#, sx + 18.0, top + 8.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">-1</text>"#, sx + 18.0, top + 168.0);
    out.push_str("</svg>\n");
    out
}
