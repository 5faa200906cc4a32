//! Static SVG of an FRM series with the cross-sectional lambda spread.

use std::collections::BTreeMap;
use std::fmt::Write;

use chrono::NaiveDate;
use frm_core::frm::FrmSeries;
use frm_core::io::date;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;

/// Per-date (min, q1, q3, max) of the lambdas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub date: NaiveDate,
    pub min: f64,
    pub q1: f64,
    pub q3: f64,
    pub max: f64,
}

fn quartile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn bands(lambdas: &BTreeMap<NaiveDate, Vec<(String, f64)>>) -> Vec<Band> {
    lambdas
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(&d, v)| {
            let mut s: Vec<f64> = v.iter().map(|(_, l)| *l).collect();
            s.sort_by(f64::total_cmp);
            Band { date: d, min: s[0], q1: quartile(&s, 0.25), q3: quartile(&s, 0.75), max: s[s.len() - 1] }
        })
        .collect()
}

fn polyline(points: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (k, (x, y)) in points.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.2},{y:.2}");
    }
    s
}

pub fn frm_chart(series: &FrmSeries, bands: Option<&[Band]>) -> String {
    let n = series.values.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &series.values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let bands: Vec<Band> = bands
        .unwrap_or(&[])
        .iter()
        .filter(|b| series.dates.contains(&b.date))
        .copied()
        .collect();
    for b in &bands {
        lo = lo.min(b.min);
        hi = hi.max(b.max);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let x_of = |k: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * if n > 1 { k as f64 / (n - 1) as f64 } else { 0.5 };
    let y_of = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let index: BTreeMap<NaiveDate, usize> = series.dates.iter().enumerate().map(|(k, &d)| (d, k)).collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !bands.is_empty() {
        let x = |b: &Band| x_of(index[&b.date]);
        let mut outer: Vec<(f64, f64)> = bands.iter().map(|b| (x(b), y_of(b.max))).collect();
        outer.extend(bands.iter().rev().map(|b| (x(b), y_of(b.min))));
        let mut inner: Vec<(f64, f64)> = bands.iter().map(|b| (x(b), y_of(b.q3))).collect();
        inner.extend(bands.iter().rev().map(|b| (x(b), y_of(b.q1))));
        let _ = writeln!(svg, r##"<polygon points="{}" fill="#dde6f0"/>"##, polyline(&outer));
        let _ = writeln!(svg, r##"<polygon points="{}" fill="#a9bfd8"/>"##, polyline(&inner));
    }
    let line: Vec<(f64, f64)> = series.values.iter().enumerate().map(|(k, &v)| (x_of(k), y_of(v))).collect();
    let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#1f3b73" stroke-width="1.5"/>"##, polyline(&line));
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<polyline points="{x0},{y0} {x0},{y1} {x1},{y1}" fill="none" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<text x="{x0}" y="{}">FRM, tau = {}</text>"#, MARGIN / 2.0, series.tau);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{hi:.4}</text>"#, x0 - 4.0, y0 + 4.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{lo:.4}</text>"#, x0 - 4.0, y1);
    if n > 0 {
        let _ = writeln!(svg, r#"<text x="{x0}" y="{}">{}</text>"#, y1 + 18.0, date(series.dates[0]));
        let _ = writeln!(svg, r#"<text x="{x1}" y="{}" text-anchor="end">{}</text>"#, y1 + 18.0, date(series.dates[n - 1]));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_point_per_window() {
        let d = |k| NaiveDate::from_ymd_opt(2020, 1, k).unwrap();
        let series = FrmSeries { tau: 0.05, dates: vec![d(1), d(2), d(3)], values: vec![0.1, 0.3, 0.2] };
        let mut lambdas = BTreeMap::new();
        for k in 1..=3 {
            lambdas.insert(d(k), vec![("A".to_string(), 0.05), ("B".to_string(), 0.4)]);
        }
        let svg = frm_chart(&series, Some(&bands(&lambdas)));
        let line = svg.lines().find(|l| l.starts_with("<polyline points") && l.contains("#1f3b73")).unwrap();
        assert_eq!(line.matches(',').count(), 3);
        assert_eq!(svg.matches("<polygon").count(), 2);
    }
}
