//! Pole diagrams: crosses for HTF-path loci, squares for oracle loci.

use std::fmt::Write;

use htf_core::feedback::LocusRow;
use htf_core::Complex64;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PAD: f64 = 0.05;
const TICKS: usize = 5;

/// Plot range `(x_lo, x_hi, y_lo, y_hi)` in the plotted units, padded by
/// 5% of the span on every side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 {
        PAD * span
    } else if lo != 0.0 {
        PAD * lo.abs()
    } else {
        1.0
    };
    (lo - pad, hi + pad)
}

/// Plotted coordinate of a pole: `(Re s, Im s) / 2π`, in Hz.
pub fn coords(p: Complex64) -> (f64, f64) {
    let tau = std::f64::consts::TAU;
    (p.re / tau, p.im / tau)
}

pub fn bounds(points: &[(f64, f64)]) -> Bounds {
    if points.is_empty() {
        return Bounds { x: (-1.0, 1.0), y: (-1.0, 1.0) };
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x_lo, x_hi) = fold(|p| p.0);
    let (y_lo, y_hi) = fold(|p| p.1);
    Bounds {
        x: padded(x_lo, x_hi),
        y: padded(y_lo, y_hi),
    }
}

fn poles(rows: &[LocusRow]) -> Vec<(f64, f64)> {
    rows.iter().filter_map(|r| r.pole).map(coords).collect()
}

pub fn render(htf: &[LocusRow], oracle: &[LocusRow]) -> String {
    let htf_pts = poles(htf);
    let oracle_pts = poles(oracle);
    let all: Vec<_> = htf_pts.iter().chain(&oracle_pts).copied().collect();
    let b = bounds(&all);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - b.x.0) / (b.x.1 - b.x.0) * pw;
    let sy = |y: f64| TOP + (b.y.1 - y) / (b.y.1 - b.y.0) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="white" stroke="black"/>"#).unwrap();
    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let xv = b.x.0 + t * (b.x.1 - b.x.0);
        let yv = b.y.0 + t * (b.y.1 - b.y.0);
        let (px, py) = (sx(xv), sy(yv));
        writeln!(s, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 4.0).unwrap();
        writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3e}</text>"#, TOP + ph + 16.0).unwrap();
        writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 4.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3e}</text>"#, LEFT - 6.0, py + 4.0).unwrap();
    }
    if b.x.0 < 0.0 && b.x.1 > 0.0 {
        let px = sx(0.0);
        writeln!(s, r#"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="grey" stroke-dasharray="4 3"/>"#, TOP + ph).unwrap();
    }
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Re(s)/2π [Hz]</text>"#, LEFT + pw / 2.0, HEIGHT - 8.0).unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">Im(s)/2π [Hz]</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();

    writeln!(s, r#"<g class="oracle" fill="none" stroke="blue">"#).unwrap();
    for &(x, y) in &oracle_pts {
        writeln!(s, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8"/>"#, sx(x) - 4.0, sy(y) - 4.0).unwrap();
    }
    s.push_str("</g>\n");
    writeln!(s, r#"<g class="htf" stroke="red">"#).unwrap();
    for &(x, y) in &htf_pts {
        let (px, py) = (sx(x), sy(y));
        writeln!(
            s,
            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}"/>"#,
            px - 4.0,
            py - 4.0,
            px + 4.0,
            py + 4.0,
            px - 4.0,
            py + 4.0,
            px + 4.0,
            py - 4.0
        )
        .unwrap();
    }
    s.push_str("</g>\n</svg>\n");
    s
}
