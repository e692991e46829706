//! A minimal line chart, written as SVG text.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Per-epoch loss with a dashed horizontal reference line.
pub fn loss_curve_svg(losses: &[f64], reference: f64) -> String {
    let finite = losses.iter().copied().filter(|l| l.is_finite());
    let (mut lo, mut hi) = finite.fold((reference, reference), |(l, h), v| (l.min(v), h.max(v)));
    let pad = ((hi - lo) * 0.05).max(1e-3);
    lo -= pad;
    hi += pad;
    let n = losses.len().max(2);
    let sx = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let sy = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    writeln!(s, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#).unwrap();
    for v in [lo + pad, hi - pad] {
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, x0 - 6.0, sy(v) + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{x0}" y="{}" text-anchor="middle">1</text>"#, y0 + 18.0).unwrap();
    writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, losses.len()).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, WIDTH / 2.0, HEIGHT - 12.0).unwrap();
    writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">loss</text>"#, HEIGHT / 2.0, HEIGHT / 2.0).unwrap();

    let ry = sy(reference);
    writeln!(s, r##"<line x1="{x0}" y1="{ry}" x2="{x1}" y2="{ry}" stroke="#999" stroke-dasharray="6 4"/>"##).unwrap();
    writeln!(s, r##"<text x="{}" y="{}" text-anchor="end" fill="#666">chance</text>"##, x1, ry - 6.0).unwrap();

    let points: Vec<String> = losses
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .map(|(i, l)| format!("{:.2},{:.2}", sx(i), sy(*l)))
        .collect();
    writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, points.join(" ")).unwrap();
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_per_finite_epoch() {
        let svg = loss_curve_svg(&[2.7, 2.5, f64::NAN, 2.0], 16f64.ln());
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 3);
        assert!(svg.ends_with("</svg>\n"));
    }
}
