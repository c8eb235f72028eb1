//! Minimal SVG figures written as plain text.

use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

fn legend(out: &mut String, names: &[&str], x: f64) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#,
            y - 9.0,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 14.0, escape(name));
    }
}

/// Grouped bars on a [0, 1] axis: one group per label, one bar per series.
pub fn bar_chart(title: &str, groups: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let mut out = String::new();
    let legend_w = 110.0;
    open(&mut out, WIDTH + legend_w, HEIGHT, title);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let base = HEIGHT - MARGIN;
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = base - v * plot_h;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            MARGIN + plot_w
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            MARGIN - 4.0,
            y + 4.0
        );
    }
    let slot = plot_w / groups.len().max(1) as f64;
    let bar = slot * 0.8 / series.len().max(1) as f64;
    for (g, label) in groups.iter().enumerate() {
        let x0 = MARGIN + slot * g as f64 + slot * 0.1;
        for (s, (_, values)) in series.iter().enumerate() {
            let v = values[g].clamp(0.0, 1.0);
            let h = v * plot_h;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar:.2}" height="{h:.2}" fill="{}"><title>{v:.4}</title></rect>"#,
                x0 + bar * s as f64,
                base - h,
                PALETTE[s % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN + slot * (g as f64 + 0.5),
            base + 16.0,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN}" y1="{base}" x2="{:.2}" y2="{base}" stroke="#333"/>"##,
        MARGIN + plot_w
    );
    let names: Vec<&str> = series.iter().map(|(n, _)| *n).collect();
    legend(&mut out, &names, WIDTH);
    out.push_str("</svg>\n");
    out
}

/// Count grid with rows labelled by the predicted class.
pub fn heatmap(title: &str, labels: &[String], counts: &[Vec<u64>]) -> String {
    let n = labels.len().max(1);
    let cell = 56.0;
    let left = 130.0;
    let top = 70.0;
    let width = left + cell * n as f64 + 20.0;
    let height = top + cell * n as f64 + 30.0;
    let mut out = String::new();
    open(&mut out, width, height, title);
    let peak = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">actual</text>"#,
        left + cell * n as f64 / 2.0,
        top - 28.0
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{:.2}" transform="rotate(-90 12 {:.2})" text-anchor="middle">predicted</text>"#,
        top + cell * n as f64 / 2.0,
        top + cell * n as f64 / 2.0
    );
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="9">{}</text>"#,
            left + cell * (i as f64 + 0.5),
            top - 8.0,
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="9">{}</text>"#,
            left - 6.0,
            top + cell * (i as f64 + 0.5) + 3.0,
            escape(label)
        );
    }
    for (r, row) in counts.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let shade = 255 - (count as f64 / peak * 200.0).round() as u8;
            let (x, y) = (left + cell * c as f64, top + cell * r as f64);
            let _ = writeln!(
                out,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="#888"/>"##
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{count}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Polylines on the unit square with a chance diagonal.
pub fn roc_chart(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let legend_w = 150.0;
    let side = HEIGHT - 2.0 * MARGIN;
    let mut out = String::new();
    open(&mut out, MARGIN * 2.0 + side + legend_w, HEIGHT, title);
    let to_px = |(fx, fy): (f64, f64)| (MARGIN + fx * side, MARGIN + (1.0 - fy) * side);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{side}" height="{side}" fill="none" stroke="#333"/>"##
    );
    let (ax, ay) = to_px((0.0, 0.0));
    let (bx, by) = to_px((1.0, 1.0));
    let _ = writeln!(
        out,
        r##"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="#aaa" stroke-dasharray="4 3"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">false positive rate</text>"#,
        MARGIN + side / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" transform="rotate(-90 14 {:.2})" text-anchor="middle">true positive rate</text>"#,
        MARGIN + side / 2.0,
        MARGIN + side / 2.0
    );
    for (i, (_, points)) in curves.iter().enumerate() {
        let path: Vec<String> = points
            .iter()
            .map(|&p| {
                let (x, y) = to_px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            path.join(" "),
            PALETTE[i % PALETTE.len()]
        );
    }
    let names: Vec<&str> = curves.iter().map(|(n, _)| n.as_str()).collect();
    legend(&mut out, &names, MARGIN * 2.0 + side);
    out.push_str("</svg>\n");
    out
}
