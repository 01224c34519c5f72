//! Scatter plot of proxy accuracy against domain distance.

use std::fmt::Write;

use crate::experiments::ConfusionReport;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps `v` from `[lo, hi]` onto `[a, b]`; a degenerate range maps to the middle.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi - lo <= f64::EPSILON {
        return 0.5 * (a + b);
    }
    a + (v - lo) / (hi - lo) * (b - a)
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(0.01);
    (lo - pad, hi + pad)
}

/// x is d_A, y is z. The target's blob is drawn in a second colour.
pub fn confusion_scatter(report: &ConfusionReport) -> String {
    let (x0, x1) = padded_range(report.subsets.iter().map(|s| s.d_a));
    let (y0, y1) = padded_range(report.subsets.iter().map(|s| s.z));
    let px = |v: f64| scale(v, x0, x1, MARGIN, WIDTH - MARGIN / 2.0);
    let py = |v: f64| scale(v, y0, y1, HEIGHT - MARGIN, MARGIN / 2.0);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN / 2.0, MARGIN / 2.0, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">proxy A-distance</text>"#,
        (left + right) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">proxy accuracy z</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{v:.2}</text>"#,
            px(v),
            bottom + 16.0
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            left - 6.0,
            py(v) + 4.0
        );
    }
    for s in &report.subsets {
        let colour = if s.blob == report.target_blob {
            "#d62728"
        } else {
            "#1f77b4"
        };
        let (cx, cy) = (px(s.d_a), py(s.z));
        let _ = writeln!(out, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="5" fill="{colour}"/>"#);
        let label = escape(&format!("S{} (blob {})", s.subset, s.blob));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{label}</text>"#, cx + 8.0, cy - 6.0);
    }
    let title = match report.spearman_z_d_a {
        Some(r) => format!("Spearman(z, d_A) = {r:.3}"),
        None => "Spearman(z, d_A) undefined".to_owned(),
    };
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
        right,
        top + 12.0,
        escape(&title)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::SubsetConfusion;

    fn report(points: &[(f64, f64)]) -> ConfusionReport {
        ConfusionReport {
            target_blob: 1,
            subsets: points
                .iter()
                .enumerate()
                .map(|(i, &(z, d_a))| SubsetConfusion {
                    subset: i,
                    blob: i,
                    size: 10,
                    z,
                    epsilon: 0.5 - d_a / 4.0,
                    d_a,
                })
                .collect(),
            spearman_z_d_a: Some(-1.0),
            argmax_z_blob: 1,
            argmin_d_a_blob: 1,
            flags: Vec::new(),
        }
    }

    #[test]
    fn one_marker_per_subset() {
        let svg = confusion_scatter(&report(&[(0.5, 1.5), (0.9, 0.1), (0.7, 0.8)]));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("#d62728").count(), 1);
    }

    #[test]
    fn degenerate_ranges_stay_inside_the_canvas() {
        let svg = confusion_scatter(&report(&[(0.5, 0.0), (0.5, 0.0)]));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn higher_z_is_drawn_higher() {
        let (y0, y1) = (0.0, 1.0);
        assert!(scale(0.9, y0, y1, HEIGHT - MARGIN, MARGIN / 2.0) < scale(0.1, y0, y1, HEIGHT - MARGIN, MARGIN / 2.0));
    }
}
