//! Minimal SVG renderings. The CSV files are the authoritative output; these
//! are for quick inspection only.

use std::fmt::Write;

use nalgebra::DMatrix;

const MAX_CELLS: usize = 100;

fn open(width: f64, height: f64, title: &str, provenance: &str) -> String {
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#).unwrap();
    writeln!(s, "<!-- {provenance} -->").unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="8" y="16" font-family="sans-serif" font-size="12">{}</text>"#, escape(title)).unwrap();
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Averages `m` over contiguous blocks so it has at most `MAX_CELLS` rows and columns.
pub fn block_average(m: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = m.nrows().min(MAX_CELLS);
    let cols = m.ncols().min(MAX_CELLS);
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(rows, cols);
    }
    let edge = |i: usize, n: usize, cells: usize| i * n / cells;
    DMatrix::from_fn(rows, cols, |i, j| {
        let (r0, r1) = (edge(i, m.nrows(), rows), edge(i + 1, m.nrows(), rows));
        let (c0, c1) = (edge(j, m.ncols(), cols), edge(j + 1, m.ncols(), cols));
        let block = m.view((r0, c0), (r1 - r0, c1 - c0));
        block.sum() / block.len() as f64
    })
}

/// Grayscale heatmap of values in `[0, 1]` (black = 1).
pub fn heatmap(m: &DMatrix<f64>, title: &str, provenance: &str) -> String {
    let cells = block_average(m);
    let size = 4.0;
    let top = 24.0;
    let mut s = open(cells.ncols() as f64 * size + 16.0, cells.nrows() as f64 * size + top + 8.0, title, provenance);
    for i in 0..cells.nrows() {
        for j in 0..cells.ncols() {
            let shade = (255.0 * (1.0 - cells[(i, j)].clamp(0.0, 1.0))).round() as u8;
            writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{size}" height="{size}" fill="rgb({shade},{shade},{shade})"/>"#,
                8.0 + j as f64 * size,
                top + i as f64 * size
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Bar chart of one spectrum per group, bars scaled to the largest value.
pub fn bars(groups: &[(String, Vec<f64>)], title: &str, provenance: &str) -> String {
    let bar = 6.0;
    let gap = 14.0;
    let plot_h = 160.0;
    let top = 28.0;
    let total: usize = groups.iter().map(|(_, v)| v.len()).sum();
    let width = total as f64 * bar + groups.len() as f64 * gap + 16.0;
    let max = groups.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut s = open(width.max(200.0), plot_h + top + 24.0, title, provenance);
    let mut x = 8.0;
    for (label, values) in groups {
        writeln!(s, r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="10">{}</text>"#, top + plot_h + 16.0, escape(label)).unwrap();
        for &v in values {
            let h = plot_h * (v / max).clamp(0.0, 1.0);
            writeln!(s, r##"<rect x="{x}" y="{}" width="{}" height="{h}" fill="#3366aa"/>"##, top + plot_h - h, bar - 1.0).unwrap();
            x += bar;
        }
        x += gap;
    }
    s.push_str("</svg>\n");
    s
}

/// Histogram of `values` with `bins` equal-width bins over their range.
pub fn histogram(values: &[f64], bins: usize, title: &str, provenance: &str) -> String {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0usize; bins.max(1)];
    if lo.is_finite() && hi.is_finite() {
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let last = counts.len() - 1;
        for &v in values {
            let b = (((v - lo) / span) * counts.len() as f64) as usize;
            counts[b.min(last)] += 1;
        }
    }
    let label = if lo.is_finite() { format!("{title} [{lo:.3e}, {hi:.3e}]") } else { title.to_string() };
    let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    bars(&[(String::new(), as_f64)], &label, provenance)
}
