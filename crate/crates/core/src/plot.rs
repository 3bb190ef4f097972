//! ROC plots as plain SVG.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::roc::RocCurve;

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 20.0;
const SIDE: f64 = 440.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn x(pfa: f64) -> f64 {
    LEFT + pfa.clamp(0.0, 1.0) * SIDE
}

fn y(pd: f64) -> f64 {
    TOP + (1.0 - pd.clamp(0.0, 1.0)) * SIDE
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders PD against PFA, one polyline per curve with a ±1 standard
/// error band.
pub fn roc_svg(curves: &[(String, &RocCurve)], title: &str) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::InvalidParameter("nothing to plot".into()));
    }
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(w, r#"<text x="{:.1}" y="14" text-anchor="middle">{}</text>"#, LEFT + SIDE / 2.0, escape(title));
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            w,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            x(v),
            y(0.0),
            x(v),
            y(1.0)
        );
        let _ = writeln!(
            w,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            x(0.0),
            y(v),
            x(1.0),
            y(v)
        );
        let _ = writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, x(v), y(0.0) + 16.0);
        let _ = writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, x(0.0) - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{SIDE}" height="{SIDE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">PFA</text>"#, LEFT + SIDE / 2.0, TOP + SIDE + 34.0);
    let _ = writeln!(
        w,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">PD</text>"#,
        TOP + SIDE / 2.0,
        TOP + SIDE / 2.0
    );

    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", x(p.pfa), y(p.pd + p.se))).collect();
        let lower: Vec<String> =
            curve.points.iter().rev().map(|p| format!("{:.2},{:.2}", x(p.pfa), y(p.pd - p.se))).collect();
        let _ = writeln!(
            w,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", x(p.pfa), y(p.pd))).collect();
        let _ = writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = y(0.0) - 14.0 - 18.0 * (curves.len() - 1 - i) as f64;
        let _ = writeln!(
            w,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            x(0.62),
            x(0.68)
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}">{} (AUC {:.3})</text>"#,
            x(0.70),
            ly + 4.0,
            escape(name),
            curve.auc
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roc::{roc, Thresholds};

    #[test]
    fn perfect_curve_polyline() {
        let c = roc(&[1.0, 0.0], &[true, false], Thresholds::AllUnique).unwrap();
        let svg = roc_svg(&[("perfect".into(), &c)], "test").unwrap();
        assert!(svg.contains(r#"<polyline points="60.00,460.00 60.00,20.00 500.00,20.00""#));
        assert_eq!(svg, roc_svg(&[("perfect".into(), &c)], "test").unwrap());
        assert!(roc_svg(&[], "empty").is_err());
    }
}
