use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 240.0;
const PAD: f64 = 30.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Static SVG of per-frame branch scores over shaded anomalous frames.
pub fn score_plot_svg(title: &str, series: &[(String, Vec<f64>)], labels: &[u8]) -> String {
    let n = labels.len().max(2);
    let lo = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (0.0, 1.0)
    };
    let x = |t: usize| PAD + (WIDTH - 2.0 * PAD) * t as f64 / (n - 1) as f64;
    let y = |v: f64| HEIGHT - PAD - (HEIGHT - 2.0 * PAD) * (v - lo) / (hi - lo);
    let step = (WIDTH - 2.0 * PAD) / (n - 1) as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (t, _) in labels.iter().enumerate().filter(|(_, &l)| l == 1) {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{PAD}" width="{:.2}" height="{:.2}" fill="#f4c7c3"/>"##,
            x(t) - step / 2.0,
            step,
            HEIGHT - 2.0 * PAD
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * PAD,
        HEIGHT - 2.0 * PAD
    );
    for (i, (name, values)) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", x(t), y(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" fill="{colour}">{name}</text>"#,
            PAD + 5.0 + 150.0 * i as f64,
            PAD - 8.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{title}</text>"#,
        WIDTH - PAD,
        PAD - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{PAD}" y="{:.2}">frame 0</text>"#,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">frame {}</text>"#,
        WIDTH - PAD,
        HEIGHT - 10.0,
        labels.len().saturating_sub(1)
    );
    svg.push_str("</svg>\n");
    svg
}
