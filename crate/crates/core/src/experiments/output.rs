use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::presets::ResultTable;

pub const BUILD_ID: &str = concat!("homsim ", env!("CARGO_PKG_VERSION"));

/// CSV text: `#` metadata lines (build, config echo, results), then
/// `sweep,counts_<class>...,rate,err`. Floats use the shortest exact form.
pub fn render_csv(table: &ResultTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# table = {}", table.name);
    let _ = writeln!(out, "# build = {BUILD_ID}");
    for (k, v) in &table.config {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for (k, v) in &table.results {
        let _ = writeln!(out, "# result.{k} = {v}");
    }
    out.push_str("sweep");
    for c in &table.classes {
        let _ = write!(out, ",counts_{c}");
    }
    out.push_str(",rate,err\n");
    for row in &table.rows {
        let _ = write!(out, "{}", row.sweep);
        for c in &row.counts {
            let _ = write!(out, ",{c}");
        }
        let _ = writeln!(out, ",{},{}", row.rate, row.err);
    }
    out
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> io::Result<()> {
    fs::write(path, render_csv(table))
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

/// Standalone 800×500 plot of rate against sweep value with ±err bars.
/// Non-finite rates are left out.
pub fn render_svg(table: &ResultTable) -> String {
    let pts: Vec<(f64, f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.rate.is_finite())
        .map(|r| {
            let err = if r.err.is_finite() { r.err } else { 0.0 };
            (r.sweep * table.plot_scale + table.plot_offset, r.rate, err)
        })
        .collect();
    let (mut x0, mut x1) = bounds(pts.iter().map(|p| p.0));
    let (_, mut y1) = bounds(pts.iter().map(|p| p.1 + p.2));
    let (mut y0, _) = bounds(pts.iter().map(|p| p.1 - p.2));
    y0 = y0.min(0.0);
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = SVG_WIDTH - LEFT - RIGHT;
    let ph = SVG_HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="500" viewBox="0 0 800 500" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="500" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        SVG_WIDTH / 2.0,
        escape(&table.name)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{:.2},{:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        LEFT,
        TOP,
        TOP + ph,
        LEFT + pw
    );
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        SVG_HEIGHT - 15.0,
        escape(&table.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&table.y_label)
    );
    for &(x, y, e) in &pts {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray"/>"#,
            sx(x),
            sy(y - e),
            sx(x),
            sy(y + e)
        );
    }
    let poly: Vec<String> = pts
        .iter()
        .map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        poly.join(" ")
    );
    for &(x, y, _) in &pts {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="steelblue"/>"#,
            sx(x),
            sy(y)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg(table: &ResultTable, path: &Path) -> io::Result<()> {
    fs::write(path, render_svg(table))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".to_string() } else { s.to_string() }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::presets::Row;

    fn table(rates: &[f64]) -> ResultTable {
        ResultTable {
            name: "t".into(),
            classes: vec!["11".into()],
            rows: rates
                .iter()
                .enumerate()
                .map(|(i, &r)| Row {
                    sweep: i as f64,
                    counts: vec![(r * 100.0) as u64],
                    rate: r,
                    err: 0.01,
                })
                .collect(),
            config: vec![("seed".into(), "1".into()), ("trials".into(), "100".into())],
            results: vec![("rate".into(), "P(1,1)".into())],
            x_label: "x".into(),
            y_label: "y".into(),
            plot_offset: 0.0,
            plot_scale: 1.0,
        }
    }

    #[test]
    fn two_point_csv_layout() {
        let csv = render_csv(&table(&[0.1, 0.2]));
        let lines: Vec<&str> = csv.lines().collect();
        let comments = lines.iter().filter(|l| l.starts_with('#')).count();
        assert!(comments >= 3);
        let data: Vec<&&str> = lines.iter().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        assert_eq!(*data[0], "sweep,counts_11,rate,err");
        assert_eq!(*data[1], "0,10,0.1,0.01");
        assert!(csv.contains("# seed = 1"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn monotone_rates_give_monotone_polyline() {
        let svg = render_svg(&table(&[0.1, 0.2, 0.3, 0.5]));
        assert!(svg.contains(r#"viewBox="0 0 800 500""#));
        let poly = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<f64> = poly
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(ys.windows(2).all(|w| w[1] < w[0]), "{ys:?}");
        assert_eq!(svg, render_svg(&table(&[0.1, 0.2, 0.3, 0.5])));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn tick_labels() {
        assert_eq!(tick_label(0.0), "0");
        assert_eq!(tick_label(155.0), "155");
        assert_eq!(tick_label(0.25), "0.25");
        assert_eq!(tick_label(2e-5), "2.00e-5");
    }
}
