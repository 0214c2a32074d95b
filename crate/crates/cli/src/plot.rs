//! Self-contained SVG figure: x(t), y(t), z(t), the XY path, and a
//! histogram of per-point errors.

use std::fmt::Write;

use audiotrack::Trajectory;

const REF_COLOR: &str = "#2a9d55";
const PRED_COLOR: &str = "#c0392b";
const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 760.0;
const HIST_BINS: usize = 20;

#[derive(Clone, Copy)]
struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-9 {
            return Self {
                lo: lo - 0.5,
                hi: hi + 0.5,
            };
        }
        let pad = 0.05 * (hi - lo);
        Self {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, r: Rect, xs: Scale, ys: Scale, pts: &[(f64, f64)], color: &str, dashed: bool, class: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|&(x, y)| {
            format!(
                "{:.2},{:.2}",
                r.x + xs.frac(x) * r.w,
                r.y + (1.0 - ys.frac(y)) * r.h
            )
        })
        .collect();
    let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
    let _ = writeln!(
        out,
        r#"    <polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.6"{dash} points="{}"/>"#,
        coords.join(" ")
    );
}

fn frame(out: &mut String, r: Rect, xs: Scale, ys: Scale, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r##"    <rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#ffffff" stroke="#444444"/>"##,
        r.x, r.y, r.w, r.h
    );
    let _ = writeln!(
        out,
        r#"    <text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
        r.x + r.w / 2.0,
        r.y - 8.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"    <text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
        r.x + r.w / 2.0,
        r.y + r.h + 30.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"    <text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        r.x - 42.0,
        r.y + r.h / 2.0,
        r.x - 42.0,
        r.y + r.h / 2.0,
        escape(ylabel)
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xs.lo + f * (xs.hi - xs.lo);
        let yv = ys.lo + f * (ys.hi - ys.lo);
        let _ = writeln!(
            out,
            r#"    <text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">{}</text>"#,
            r.x + f * r.w,
            r.y + r.h + 14.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"    <text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{}</text>"#,
            r.x - 4.0,
            r.y + (1.0 - f) * r.h + 3.0,
            tick(yv)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

/// Renders the comparison figure. The reference is dashed, the prediction
/// solid. `errors` feeds the histogram.
pub fn render(pred: &Trajectory, reference: &Trajectory, errors: &[f64]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r##"  <rect width="100%" height="100%" fill="#fafafa"/>"##);

    let times = |t: &Trajectory| t.times().into_iter();
    let ts = Scale::fit(times(pred).chain(times(reference)));
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        let r = Rect {
            x: 70.0,
            y: 40.0 + axis as f64 * 240.0,
            w: 480.0,
            h: 180.0,
        };
        let series = |t: &Trajectory| -> Vec<(f64, f64)> {
            t.points().iter().map(|p| (p.t, p.p[axis])).collect()
        };
        let (rp, pp) = (series(reference), series(pred));
        let vs = Scale::fit(rp.iter().chain(&pp).map(|p| p.1));
        let _ = writeln!(out, r#"  <g class="panel" id="panel-{name}">"#);
        frame(&mut out, r, ts, vs, &format!("{name}(t)"), "t [s]", &format!("{name} [m]"));
        polyline(&mut out, r, ts, vs, &rp, REF_COLOR, true, "reference");
        polyline(&mut out, r, ts, vs, &pp, PRED_COLOR, false, "prediction");
        let _ = writeln!(out, "  </g>");
    }

    let r = Rect {
        x: 650.0,
        y: 40.0,
        w: 300.0,
        h: 300.0,
    };
    let xy = |t: &Trajectory| -> Vec<(f64, f64)> { t.points().iter().map(|p| (p.p[0], p.p[1])).collect() };
    let (rp, pp) = (xy(reference), xy(pred));
    let xs = Scale::fit(rp.iter().chain(&pp).map(|p| p.0));
    let ys = Scale::fit(rp.iter().chain(&pp).map(|p| p.1));
    let _ = writeln!(out, r#"  <g class="panel" id="panel-xy">"#);
    frame(&mut out, r, xs, ys, "XY path", "x [m]", "y [m]");
    polyline(&mut out, r, xs, ys, &rp, REF_COLOR, true, "reference");
    polyline(&mut out, r, xs, ys, &pp, PRED_COLOR, false, "prediction");
    let _ = writeln!(out, "  </g>");

    let r = Rect {
        x: 650.0,
        y: 430.0,
        w: 300.0,
        h: 230.0,
    };
    let max_err = errors.iter().copied().fold(0.0, f64::max).max(1e-9);
    let mut counts = [0usize; HIST_BINS];
    for &e in errors {
        let b = ((e / max_err) * HIST_BINS as f64) as usize;
        counts[b.min(HIST_BINS - 1)] += 1;
    }
    let max_count = counts.iter().copied().max().unwrap_or(0).max(1);
    let xs = Scale { lo: 0.0, hi: max_err };
    let ys = Scale {
        lo: 0.0,
        hi: max_count as f64,
    };
    let _ = writeln!(out, r#"  <g class="histogram" id="panel-errors">"#);
    frame(&mut out, r, xs, ys, "Error distribution", "error [m]", "count");
    let bw = r.w / HIST_BINS as f64;
    for (i, &c) in counts.iter().enumerate() {
        let h = r.h * c as f64 / max_count as f64;
        let _ = writeln!(
            out,
            r##"    <rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#5b7db1"/>"##,
            r.x + i as f64 * bw,
            r.y + r.h - h,
            bw * 0.9,
            h
        );
    }
    let _ = writeln!(out, "  </g>");

    let _ = writeln!(out, r#"  <g class="legend">"#);
    let _ = writeln!(
        out,
        r#"    <line x1="650" y1="710" x2="690" y2="710" stroke="{REF_COLOR}" stroke-width="2" stroke-dasharray="6,4"/>"#
    );
    let _ = writeln!(out, r#"    <text x="698" y="714" font-size="12">reference</text>"#);
    let _ = writeln!(
        out,
        r#"    <line x1="800" y1="710" x2="840" y2="710" stroke="{PRED_COLOR}" stroke-width="2"/>"#
    );
    let _ = writeln!(out, r#"    <text x="848" y="714" font-size="12">prediction</text>"#);
    let _ = writeln!(out, "  </g>");
    out.push_str("</svg>\n");
    out
}
