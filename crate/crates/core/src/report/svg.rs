//! Minimal standalone SVG plots. Coordinates are printed with two decimals
//! so output bytes are stable.

use crate::stats::{BandPoint, ConfusionMatrix, RocCurve};
use std::fmt::Write;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLOURS: [&str; 4] = ["#1f4e79", "#b03a2e", "#1e8449", "#7d3c98"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn px(fpr: f64) -> f64 {
    MARGIN + fpr * SIZE
}

fn py(sens: f64) -> f64 {
    MARGIN + (1.0 - sens) * SIZE
}

/// ROC curves in (false positive rate, sensitivity) space with an optional
/// bootstrap band drawn under the first curve.
pub fn roc_svg(title: &str, curves: &[(&str, &RocCurve)], band: Option<&[BandPoint]>) -> String {
    let full = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full:.0}" height="{:.0}" font-family="sans-serif" font-size="12">"#,
        full + 20.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="25" text-anchor="middle" font-size="14">{}</text>"#,
        full / 2.0,
        escape(title)
    );
    if let Some(band) = band {
        let mut pts: Vec<String> =
            band.iter().map(|b| format!("{:.2},{:.2}", px(b.false_positive_rate), py(b.upper_sensitivity))).collect();
        pts.extend(
            band.iter().rev().map(|b| format!("{:.2},{:.2}", px(b.false_positive_rate), py(b.lower_sensitivity))),
        );
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
            pts.join(" "),
            COLOURS[0]
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{m:.2}" y="{m:.2}" width="{SIZE:.2}" height="{SIZE:.2}" fill="none" stroke="#444"/>"##,
        m = MARGIN
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="#444"/><text x="{x:.2}" y="{ty:.2}" text-anchor="middle">{t:.1}</text>"##,
            x = px(t),
            y0 = py(0.0),
            y1 = py(0.0) + 5.0,
            ty = py(0.0) + 18.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#444"/><text x="{tx:.2}" y="{ty:.2}" text-anchor="end">{t:.1}</text>"##,
            x0 = px(0.0) - 5.0,
            x1 = px(0.0),
            y = py(t),
            tx = px(0.0) - 8.0,
            ty = py(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">1 - specificity</text>"#,
        px(0.5),
        py(0.0) + 36.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">sensitivity</text>"#,
        py(0.5),
        py(0.5)
    );
    for (i, (label, curve)) in curves.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> =
            curve.points.iter().map(|p| format!("{:.2},{:.2}", px(p.false_positive_rate), py(p.sensitivity))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{colour}">{} (AUC {:.3})</text>"#,
            px(0.45),
            py(0.1) + 16.0 * i as f64,
            escape(label),
            curve.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Shaded grid with counts; rows are reference, columns prediction.
pub fn confusion_svg(title: &str, cm: &ConfusionMatrix, labels: &[&str]) -> String {
    let k = cm.k();
    let cell = 50.0;
    let left = 90.0;
    let top = 70.0;
    let width = left + cell * k as f64 + 20.0;
    let height = top + cell * k as f64 + 50.0;
    let max = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| cm.get(i, j)).max().unwrap_or(0).max(1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    let _ =
        writeln!(s, r#"<text x="{:.2}" y="42" text-anchor="middle">predicted</text>"#, left + cell * k as f64 / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{y:.2}" text-anchor="middle" transform="rotate(-90 14 {y:.2})">reference</text>"#,
        y = top + cell * k as f64 / 2.0
    );
    for j in 0..k {
        let label = labels.get(j).copied().unwrap_or("?");
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 6.0,
            escape(label)
        );
    }
    for i in 0..k {
        let label = labels.get(i).copied().unwrap_or("?");
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            top + cell * (i as f64 + 0.5) + 4.0,
            escape(label)
        );
        for j in 0..k {
            let n = cm.get(i, j);
            let shade = n as f64 / max as f64;
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            let _ = writeln!(
                s,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="#1f4e79" fill-opacity="{shade:.3}" stroke="#444"/>"##
            );
            let ink = if shade > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="{ink}">{n}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::roc;

    #[test]
    fn plots_are_well_formed_and_stable() {
        let curve = roc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        let a = roc_svg("ROC <test>", &[("system", &curve)], None);
        assert_eq!(a, roc_svg("ROC <test>", &[("system", &curve)], None));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("&lt;test&gt;"));
        let cm = ConfusionMatrix::from_indices(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        let c = confusion_svg("cm", &cm, &["benign", "malignant"]);
        assert_eq!(c.matches("<rect").count(), 1 + 4);
    }
}
