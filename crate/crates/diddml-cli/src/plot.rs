//! Static SVG error-bar charts.
//!
//! Text-based output: every marker carries `data-*` attributes with the raw
//! numbers, so tests (and downstream tooling) can read values back without a
//! raster pipeline.

use diddml::report::EstimateRecord;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 70.0;

/// Render point estimates with 95% confidence bars, one per record, in the
/// given order.
pub fn error_bar_svg(title: &str, records: &[(String, EstimateRecord)]) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, r) in records {
        lo = lo.min(r.ci95[0]);
        hi = hi.max(r.ci95[1]);
    }
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    if !lo.is_finite() || !hi.is_finite() || records.is_empty() {
        lo = -1.0;
        hi = 1.0;
    }
    let pad = 0.08 * (hi - lo).max(1e-12);
    lo -= pad;
    hi += pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (hi - v) / (hi - lo);
    let x_of = |i: usize| {
        MARGIN_LEFT + plot_w * (i as f64 + 0.5) / records.len().max(1) as f64
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));
    // Axes and zero line.
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h
    ));
    let y0 = y_of(0.0);
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
        MARGIN_LEFT + plot_w
    ));
    for tick in 0..=4 {
        let v = lo + (hi - lo) * tick as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_LEFT}\" y2=\"{y}\" stroke=\"black\"/>\n",
            MARGIN_LEFT - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{v:.3}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0
        ));
    }

    for (i, (name, r)) in records.iter().enumerate() {
        let x = x_of(i);
        let (y_lo, y_hi, y_c) = (y_of(r.ci95[0]), y_of(r.ci95[1]), y_of(r.atet));
        svg.push_str(&format!(
            "  <g class=\"estimate\" data-name=\"{}\" data-atet=\"{}\" data-lo=\"{}\" data-hi=\"{}\">\n",
            xml_escape(name),
            r.atet,
            r.ci95[0],
            r.ci95[1]
        ));
        svg.push_str(&format!(
            "    <line class=\"error-bar\" x1=\"{x}\" y1=\"{y_lo}\" x2=\"{x}\" y2=\"{y_hi}\" stroke=\"black\" stroke-width=\"1.5\"/>\n"
        ));
        for y in [y_lo, y_hi] {
            svg.push_str(&format!(
                "    <line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"black\"/>\n",
                x - 5.0,
                x + 5.0
            ));
        }
        svg.push_str(&format!(
            "    <circle class=\"center\" cx=\"{x}\" cy=\"{y_c}\" r=\"4\" fill=\"black\"/>\n"
        ));
        svg.push_str(&format!(
            "    <text x=\"{x}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\" transform=\"rotate(-35 {x} {})\">{}</text>\n",
            MARGIN_TOP + plot_h + 14.0,
            MARGIN_TOP + plot_h + 14.0,
            xml_escape(name)
        ));
        svg.push_str("  </g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use diddml::report::SCHEMA_VERSION;

    fn record(atet: f64, se: f64) -> EstimateRecord {
        EstimateRecord {
            schema_version: SCHEMA_VERSION,
            estimator: "diddml".into(),
            label: "test".into(),
            atet,
            se,
            p_value: 0.5,
            ci95: [atet - 1.96 * se, atet + 1.96 * se],
            n_used: 100,
            n_trimmed: 0,
            n_total: 100,
            clustered: false,
            n_clusters: None,
            k_folds: Some(2),
            seed: 1,
            pi_hat: None,
            learner: None,
            diagnostics: None,
            coefficients: None,
        }
    }

    #[test]
    fn chart_carries_one_group_per_estimate_with_values() {
        let records = vec![
            ("a".to_string(), record(-0.03, 0.01)),
            ("b".to_string(), record(0.01, 0.02)),
            ("c".to_string(), record(-0.005, 0.003)),
            ("d".to_string(), record(0.02, 0.015)),
        ];
        let svg = error_bar_svg("effects", &records);
        assert_eq!(svg.matches("class=\"estimate\"").count(), 4);
        assert_eq!(svg.matches("class=\"error-bar\"").count(), 4);
        for (name, r) in &records {
            assert!(svg.contains(&format!("data-name=\"{name}\"")));
            assert!(svg.contains(&format!("data-atet=\"{}\"", r.atet)));
        }
        // Deterministic output.
        assert_eq!(svg, error_bar_svg("effects", &records));
    }

    #[test]
    fn titles_are_escaped() {
        let svg = error_bar_svg("a < b & c", &[("x".into(), record(0.0, 1.0))]);
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
