//! Text tables and SVG bar charts rendered from stored artifacts.

use crate::evalharness::EvalReport;

/// Fixed-width metrics table, one row per configuration.
pub fn format_metrics_table(rows: &[(String, EvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18}{:>8}{:>8}{:>8}{:>8}\n",
        "", "Prec.", "Rec.", "F1", "Acc."
    ));
    for (label, r) in rows {
        out.push_str(&format!(
            "{:<18}{:>8.1}{:>8.1}{:>8.1}{:>8.1}{}\n",
            label,
            100.0 * r.precision,
            100.0 * r.recall,
            100.0 * r.f1,
            100.0 * r.accuracy,
            if r.degenerate { "  (degenerate)" } else { "" }
        ));
    }
    out
}

/// One labeled group of bars (one value per series).
#[derive(Debug, Clone)]
pub struct BarGroup {
    pub label: String,
    pub values: Vec<f64>,
}

const SERIES_COLORS: [&str; 4] = ["#4878a8", "#e49444", "#6a9f58", "#d1605e"];

/// Horizontal grouped bar chart with a centered zero axis, written as a
/// standalone SVG document.
pub fn svg_bar_chart(title: &str, series: &[&str], groups: &[BarGroup]) -> String {
    let label_w = 150.0;
    let chart_w = 560.0;
    let bar_h = 16.0;
    let group_gap = 8.0;
    let top = 48.0;
    let legend_h = 20.0;
    let group_h = bar_h * series.len() as f64 + group_gap;
    let height = top + legend_h + groups.len() as f64 * group_h + 20.0;
    let width = label_w + chart_w + 40.0;

    let max_abs = groups
        .iter()
        .flat_map(|g| g.values.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-12);
    let zero_x = label_w + chart_w / 2.0;
    let scale = (chart_w / 2.0 - 10.0) / max_abs;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"10\" y=\"20\" font-size=\"14\" font-weight=\"bold\">{}</text>\n",
        escape(title)
    ));
    for (si, name) in series.iter().enumerate() {
        let x = 10.0 + si as f64 * 140.0;
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        svg.push_str(&format!(
            "  <rect x=\"{x:.1}\" y=\"30\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"40\" font-size=\"11\">{}</text>\n",
            x + 16.0,
            escape(name)
        ));
    }
    svg.push_str(&format!(
        "  <line x1=\"{zero_x:.1}\" y1=\"{top:.1}\" x2=\"{zero_x:.1}\" y2=\"{:.1}\" stroke=\"#888\"/>\n",
        height - 16.0
    ));
    for (gi, group) in groups.iter().enumerate() {
        let gy = top + legend_h + gi as f64 * group_h;
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            label_w - 6.0,
            gy + group_h / 2.0,
            escape(&group.label)
        ));
        for (si, &v) in group.values.iter().enumerate() {
            let y = gy + si as f64 * bar_h;
            let w = v.abs() * scale;
            let x = if v >= 0.0 { zero_x } else { zero_x - w };
            let color = SERIES_COLORS[si % SERIES_COLORS.len()];
            svg.push_str(&format!(
                "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{w:.1}\" height=\"{:.1}\" fill=\"{color}\"/>\n",
                bar_h - 2.0
            ));
            let tx = if v >= 0.0 { zero_x + w + 4.0 } else { zero_x - w - 4.0 };
            let anchor = if v >= 0.0 { "start" } else { "end" };
            svg.push_str(&format!(
                "  <text x=\"{tx:.1}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"{anchor}\">{v:.3}</text>\n",
                y + bar_h - 5.0
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
