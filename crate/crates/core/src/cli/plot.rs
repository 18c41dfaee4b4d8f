//! Static SVG figures built from a summary: a modal-level heatmap and
//! per-class stacked bars of item-response probabilities.

use std::fmt::Write as _;

use super::report::SummaryReport;

const PALETTE: [&str; 8] = ["#f7fbff", "#9ecae1", "#4292c6", "#08306b", "#fdae6b", "#e6550d", "#a1d99b", "#31a354"];

fn color(level: usize) -> &'static str {
    PALETTE[(level - 1) % PALETTE.len()]
}

fn max_levels(s: &SummaryReport) -> usize {
    s.item_levels.iter().copied().max().unwrap_or(1)
}

/// Items as rows, classes as columns, each cell colored by the class's modal level.
pub fn patterns_svg(s: &SummaryReport) -> String {
    let (cell_w, cell_h, left, top) = (70.0, 16.0, 70.0, 40.0);
    let n_items = s.item_levels.len();
    let k = s.classes.len();
    let legend_w = 110.0;
    let width = left + cell_w * k as f64 + legend_w;
    let height = top + cell_h * n_items as f64 + 20.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<text x="{left}" y="14" font-size="13">Modal level by class</text>"#);
    for (c, class) in s.classes.iter().enumerate() {
        let x = left + cell_w * c as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Class {} ({:.2})</text>"#,
            x + cell_w / 2.0,
            top - 6.0,
            class.class,
            class.pi.median
        );
        for (j, &level) in class.modal_levels.iter().enumerate() {
            let y = top + cell_h * j as f64;
            let _ = writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell_w:.1}" height="{cell_h:.1}" fill="{}" stroke="#ffffff"/>"##,
                color(level)
            );
        }
    }
    for j in 0..n_items {
        let y = top + cell_h * j as f64 + cell_h * 0.75;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">item {}</text>"#, left - 6.0, j + 1);
    }
    let lx = left + cell_w * k as f64 + 15.0;
    for level in 1..=max_levels(s) {
        let y = top + 18.0 * (level - 1) as f64;
        let _ = writeln!(
            out,
            r##"<rect x="{lx:.1}" y="{y:.1}" width="12" height="12" fill="{}" stroke="#555555"/><text x="{:.1}" y="{:.1}">level {level}</text>"##,
            color(level),
            lx + 18.0,
            y + 10.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One panel per class; each item is a horizontal bar split by level probability.
pub fn probabilities_svg(s: &SummaryReport) -> String {
    let (bar_w, bar_h, left, top, gap) = (220.0, 12.0, 60.0, 40.0, 40.0);
    let n_items = s.item_levels.len();
    let k = s.classes.len();
    let panel_w = bar_w + gap;
    let width = left + panel_w * k as f64 + 90.0;
    let height = top + (bar_h + 4.0) * n_items as f64 + 20.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<text x="{left}" y="14" font-size="13">Item-response probabilities (posterior medians)</text>"#);
    for (c, class) in s.classes.iter().enumerate() {
        let x0 = left + panel_w * c as f64;
        let _ = writeln!(out, r#"<text x="{x0:.1}" y="{:.1}">Class {}</text>"#, top - 6.0, class.class);
        for (j, levels) in class.theta.iter().enumerate() {
            let y = top + (bar_h + 4.0) * j as f64;
            let total: f64 = levels.iter().map(|iv| iv.median).sum();
            let mut x = x0;
            for (r, iv) in levels.iter().enumerate() {
                let w = bar_w * iv.median / total;
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{bar_h:.1}" fill="{}"><title>item {} level {}: {:.3}</title></rect>"#,
                    color(r + 1),
                    j + 1,
                    r + 1,
                    iv.median
                );
                x += w;
            }
            if c == 0 {
                let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">item {}</text>"#, left - 6.0, y + 10.0, j + 1);
            }
        }
    }
    let lx = left + panel_w * k as f64;
    for level in 1..=max_levels(s) {
        let y = top + 18.0 * (level - 1) as f64;
        let _ = writeln!(
            out,
            r##"<rect x="{lx:.1}" y="{y:.1}" width="12" height="12" fill="{}" stroke="#555555"/><text x="{:.1}" y="{:.1}">level {level}</text>"##,
            color(level),
            lx + 18.0,
            y + 10.0
        );
    }
    out.push_str("</svg>\n");
    out
}
