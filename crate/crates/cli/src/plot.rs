//! Deterministic SVG line plots of CSV columns.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XMap {
    Identity,
    Log10,
    /// `ln(1/x)`, for `δ` columns.
    LogInverse,
}

impl FromStr for XMap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "identity" => Ok(XMap::Identity),
            "log10" => Ok(XMap::Log10),
            "log-inverse" => Ok(XMap::LogInverse),
            _ => Err(format!("unknown x map `{s}` (identity, log10, log-inverse)")),
        }
    }
}

impl XMap {
    fn apply(self, x: f64) -> f64 {
        match self {
            XMap::Identity => x,
            XMap::Log10 => x.log10(),
            XMap::LogInverse => -x.ln(),
        }
    }

    pub fn label(self, col: &str) -> String {
        match self {
            XMap::Identity => col.to_string(),
            XMap::Log10 => format!("log10({col})"),
            XMap::LogInverse => format!("ln(1/{col})"),
        }
    }
}

/// Series `(x, y)` for each `y` column. Cells that are empty or not finite after the map
/// are skipped.
pub fn read_series(csv_text: &[u8], x: &str, ys: &[String], map: XMap) -> Result<Vec<Vec<(f64, f64)>>, CliError> {
    let mut r = csv::Reader::from_reader(csv_text);
    let header = r.headers().map_err(|e| CliError::Io(e.to_string()))?.clone();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            let have: Vec<&str> = header.iter().collect();
            CliError::Config(format!("column `{name}` not found (columns: {})", have.join(", ")))
        })
    };
    let xi = find(x)?;
    let yis = ys.iter().map(|y| find(y)).collect::<Result<Vec<_>, _>>()?;
    let mut series = vec![Vec::new(); ys.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Io(e.to_string()))?;
        let Some(xv) = rec.get(xi).and_then(|s| s.parse::<f64>().ok()).map(|v| map.apply(v)) else {
            continue;
        };
        for (s, &yi) in series.iter_mut().zip(&yis) {
            if let Some(yv) = rec.get(yi).and_then(|s| s.parse::<f64>().ok()) {
                if xv.is_finite() && yv.is_finite() {
                    s.push((xv, yv));
                }
            }
        }
    }
    Ok(series)
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        let pad = 0.5 * lo.abs().max(1.0);
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG with fixed viewport, axes, five ticks per axis and one polyline per series.
pub fn render(series: &[Vec<(f64, f64)>], x_label: &str, y_labels: &[String]) -> String {
    let (x0, x1) = span(series.iter().flatten().map(|p| p.0));
    let (y0, y1) = span(series.iter().flatten().map(|p| p.1));
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    for i in 0..5 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" font-size="10" text-anchor="middle">{xv:.3e}</text>"#,
            bottom + 4.0,
            bottom + 16.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{yv:.3e}</text>"#,
            left - 4.0,
            left - 6.0,
            py + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    for (i, (pts, label)) in series.iter().zip(y_labels).enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, coords.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{}</text>"#,
            right - 120.0,
            top + 14.0 * (i as f64 + 1.0),
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
