//! SVG histogram overlaying two consumption samples on shared bins.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::skewness;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 72.0;
const MARGIN_BOTTOM: f64 = 56.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

/// A labelled sample to plot.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

/// Sturges' rule: `ceil(log2 n) + 1` bins.
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        1
    } else {
        (n as f64).log2().ceil() as usize + 1
    }
}

/// Bin edges and per-series counts on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Binned {
    pub edges: Vec<f64>,
    pub counts: Vec<Vec<usize>>,
}

pub fn bin(series: &[Series<'_>]) -> Result<Binned> {
    for s in series {
        if s.values.is_empty() {
            return Err(Error::param("sample", format!("sample `{}` is empty", s.label)));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sample", format!("sample `{}` contains a non-finite value", s.label)));
        }
    }
    let all = series.iter().flat_map(|s| s.values.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(1);
    let bins = sturges_bins(n);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * width }).collect();
    let counts = series
        .iter()
        .map(|s| {
            let mut c = vec![0usize; bins];
            for &v in s.values {
                let i = (((v - lo) / width).floor() as usize).min(bins - 1);
                c[i] += 1;
            }
            c
        })
        .collect();
    Ok(Binned { edges, counts })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn skew_label(values: &[f64]) -> String {
    skewness(values).map_or_else(|_| "undefined".to_string(), |s| format!("{s:.3}"))
}

/// Renders the overlay. `header` lines are embedded as an XML comment.
pub fn render_svg(series: &[Series<'_>; 2], title: &str, header: &[String]) -> Result<String> {
    let binned = bin(series)?;
    let bins = binned.edges.len() - 1;
    let lo = binned.edges[0];
    let hi = binned.edges[bins];
    let peak = binned.counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |v: f64| MARGIN_LEFT + (v - lo) / (hi - lo) * plot_w;
    let y_of = |c: f64| MARGIN_TOP + plot_h - c / peak * plot_h;

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let comment: Vec<String> = header.iter().map(|h| h.replace("--", "- -")).collect();
    let _ = writeln!(s, "<!--\n{}\n-->", comment.join("\n"));
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>", WIDTH / 2.0, escape(title));

    for (k, (sr, counts)) in series.iter().zip(&binned.counts).enumerate() {
        let _ = writeln!(s, "<g fill=\"{}\" fill-opacity=\"0.45\" stroke=\"{}\" stroke-width=\"1\">", COLORS[k], COLORS[k]);
        for (i, &c) in counts.iter().enumerate() {
            let x0 = x_of(binned.edges[i]);
            let x1 = x_of(binned.edges[i + 1]);
            let y = y_of(c as f64);
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\"/>",
                (x1 - x0).max(0.0),
                (MARGIN_TOP + plot_h - y).max(0.0)
            );
        }
        s.push_str("</g>\n");
        let ly = 44.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\" fill-opacity=\"0.45\"/>",
            WIDTH - 260.0,
            ly - 10.0,
            COLORS[k]
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{ly}\">{} (n = {}, skewness = {})</text>",
            WIDTH - 242.0,
            escape(sr.label),
            sr.values.len(),
            skew_label(sr.values)
        );
    }

    let base = MARGIN_TOP + plot_h;
    let _ = writeln!(
        s,
        "<g stroke=\"black\" stroke-width=\"1\"><line x1=\"{MARGIN_LEFT}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\"/><line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{base}\"/></g>",
        MARGIN_LEFT + plot_w
    );
    for (i, edge) in binned.edges.iter().enumerate() {
        if bins > 12 && i % 2 == 1 && i != bins {
            continue;
        }
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>", x_of(*edge), base + 16.0, tick(*edge));
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", MARGIN_LEFT - 6.0, MARGIN_TOP + 4.0, peak as usize);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">0</text>", MARGIN_LEFT - 6.0, base + 4.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">consumption</text>", MARGIN_LEFT + plot_w / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">agents</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

/// Writes the overlay of two samples to `path`.
pub fn emit_histogram(series: &[Series<'_>; 2], title: &str, header: &[String], path: &Path) -> Result<()> {
    let svg = render_svg(series, title, header)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sturges() {
        assert_eq!(sturges_bins(1), 1);
        assert_eq!(sturges_bins(2), 2);
        assert_eq!(sturges_bins(100), 8);
        assert_eq!(sturges_bins(1024), 11);
        assert_eq!(sturges_bins(1025), 12);
    }

    #[test]
    fn equal_samples_bin_identically() {
        let v = [1.0, 2.0, 2.5, 3.0, 7.0];
        let b = bin(&[Series { label: "0", values: &v }, Series { label: "Ab", values: &v }]).unwrap();
        assert_eq!(b.counts[0], b.counts[1]);
        assert_eq!(b.counts[0].iter().sum::<usize>(), 5);
        assert_eq!(b.edges.len(), sturges_bins(5) + 1);
    }

    #[test]
    fn single_value_gives_one_bin() {
        let b = bin(&[Series { label: "0", values: &[3.0] }, Series { label: "Ab", values: &[3.0] }]).unwrap();
        assert_eq!(b.counts, vec![vec![1], vec![1]]);
        assert!(render_svg(&[Series { label: "0", values: &[3.0] }, Series { label: "Ab", values: &[3.0] }], "t", &[]).is_ok());
    }

    #[test]
    fn maximum_lands_in_last_bin() {
        let v: Vec<f64> = (0..16).map(f64::from).collect();
        let b = bin(&[Series { label: "a", values: &v }, Series { label: "b", values: &[15.0] }]).unwrap();
        assert_eq!(*b.counts[1].last().unwrap(), 1);
        assert_eq!(b.counts[0].iter().sum::<usize>(), 16);
    }

    #[test]
    fn empty_sample_is_rejected() {
        let err = bin(&[Series { label: "0", values: &[] }, Series { label: "Ab", values: &[1.0] }]).unwrap_err();
        assert!(err.to_string().contains("`0` is empty"));
    }

    #[test]
    fn svg_has_labels_and_skewness() {
        let a = [1.0, 1.0, 1.0, 2.0, 9.0];
        let b = [1.0, 2.0, 3.0];
        let svg = render_svg(&[Series { label: "Strategy 0", values: &b }, Series { label: "Strategy Ab", values: &a }], "x < y", &["seed = 1".into()]).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert!(svg.contains("Strategy Ab (n = 5, skewness = "));
        assert!(svg.contains("skewness = 0.000"));
        assert!(svg.contains("x &lt; y"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
