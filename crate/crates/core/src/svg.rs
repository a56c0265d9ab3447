//! Minimal standalone SVG boxplots.

use std::fmt::Write as _;

/// Quartiles by linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const W: f64 = 120.0;
const H: f64 = 320.0;
const PAD: f64 = 50.0;

/// One box per series: whiskers at min/max, box at the quartiles, line at the median.
pub(crate) fn boxplot(title: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let finite: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite()).collect();
    let (mut lo, mut hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if finite.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = PAD * 2.0 + W * series.len().max(1) as f64;
    let height = H + PAD * 2.0;
    let y = |v: f64| PAD + H - (v - lo) / (hi - lo) * H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        PAD + H / 2.0,
        PAD + H / 2.0,
        escape(y_label)
    );
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#, PAD + H);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            PAD - 4.0,
            y(v) + 4.0,
            format_tick(v)
        );
    }
    for (j, (name, values)) in series.iter().enumerate() {
        let cx = PAD + W * (j as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{cx}" y="{}" text-anchor="middle">{}</text>"#, PAD + H + 18.0, escape(name));
        let mut v: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let (min, max) = (v[0], v[v.len() - 1]);
        let half = W * 0.25;
        let _ = writeln!(s, r#"<line x1="{cx}" y1="{:.2}" x2="{cx}" y2="{:.2}" stroke="black"/>"#, y(max), y(min));
        for w in [min, max] {
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(w),
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{:.2}" width="{}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(q3),
            2.0 * half,
            (y(q1) - y(q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(med),
            cx + half,
            y(med)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
