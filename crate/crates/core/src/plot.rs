//! Deterministic SVG charts from the CSV reports.
//!
//! Output depends only on the CSV contents: no timestamps, no random ids,
//! and fixed-precision coordinates.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;

/// Blue first and orange second, matching the group/comparison convention.
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    OffsetCurve,
    Trajectory,
    Sweep,
    Bar,
}

impl PlotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::OffsetCurve => "offset-curve",
            PlotKind::Trajectory => "trajectory",
            PlotKind::Sweep => "sweep",
            PlotKind::Bar => "bar",
        }
    }

    /// Required columns, then optional ones.
    fn schema(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            PlotKind::OffsetCurve => (&["offset", "mean", "se"], &["series", "n_pairs"]),
            PlotKind::Trajectory => (&["year", "mean"], &["se", "series", "n"]),
            PlotKind::Sweep => (&["embedder", "draws", "accuracy"], &[]),
            PlotKind::Bar => (&["label", "value"], &[]),
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "offset-curve" => PlotKind::OffsetCurve,
            "trajectory" => PlotKind::Trajectory,
            "sweep" => PlotKind::Sweep,
            "bar" => PlotKind::Bar,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown plot kind {s:?} (offset-curve, trajectory, sweep, bar)"
                )))
            }
        })
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::InvalidArgument(format!("CSV header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .map(|r| {
                r.map(|r| r.iter().map(str::to_string).collect())
                    .map_err(|e| Error::InvalidArgument(format!("CSV: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(Table { header, rows })
    }

    fn check(&self, kind: PlotKind) -> Result<()> {
        let (required, _) = kind.schema();
        if required.iter().all(|c| self.header.iter().any(|h| h == c)) {
            return Ok(());
        }
        Err(Error::Schema {
            expected: required.iter().map(|s| s.to_string()).collect(),
            found: self.header.clone(),
        })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn num(&self, row: usize, col: usize) -> Result<f64> {
        let s = &self.rows[row][col];
        s.parse::<f64>().map_err(|_| {
            Error::InvalidArgument(format!(
                "row {}: column {:?} is not a number: {s:?}",
                row + 2,
                self.header[col]
            ))
        })
    }
}

struct Point {
    x: f64,
    y: f64,
    se: Option<f64>,
}

struct Series {
    name: String,
    points: Vec<Point>,
}

fn collect_series(t: &Table, x: &str, y: &str, se: Option<&str>, series: Option<&str>) -> Result<Vec<Series>> {
    let (xc, yc) = (t.col(x).unwrap(), t.col(y).unwrap());
    let sc = se.and_then(|c| t.col(c));
    let nc = series.and_then(|c| t.col(c));
    let mut out: Vec<Series> = Vec::new();
    for r in 0..t.rows.len() {
        let name = nc.map_or("", |c| t.rows[r][c].as_str());
        let p = Point {
            x: t.num(r, xc)?,
            y: t.num(r, yc)?,
            se: sc.map(|c| t.num(r, c)).transpose()?,
        };
        match out.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push(p),
            None => out.push(Series {
                name: name.to_string(),
                points: vec![p],
            }),
        }
    }
    for s in &mut out {
        s.points.sort_by(|a, b| a.x.total_cmp(&b.x));
    }
    Ok(out)
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (mut x0, mut x1) = min_max(xs);
        let (mut y0, mut y1) = min_max(ys);
        if x1 - x0 <= 0.0 {
            x0 -= 1.0;
            x1 += 1.0;
        }
        let pad = if y1 - y0 > 0.0 { (y1 - y0) * 0.05 } else { 0.5 };
        y0 -= pad;
        y1 += pad;
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn min_max(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        esc(title)
    );
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" fill="none"><path d="M{l:.2},{t:.2} L{l:.2},{b:.2} L{r:.2},{b:.2}"/></g>"#
    );
    let _ = writeln!(svg, r#"<g class="ticks" text-anchor="middle">"#);
    for i in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            f.px(x),
            b + 16.0,
            tick(x)
        );
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 6.0,
            f.py(y) + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 8.0,
        esc(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        esc(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(svg: &mut String, series: &[Series]) {
    if series.len() < 2 {
        return;
    }
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 8.0 + 16.0 * i as f64;
        let x = WIDTH - RIGHT - 140.0;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{c}"/>"#,
            y - 10.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 18.0, esc(&s.name));
    }
    let _ = writeln!(svg, "</g>");
}

fn lines(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    let all = series.iter().flat_map(|s| &s.points);
    let f = Frame::fit(
        all.clone().map(|p| p.x),
        all.flat_map(|p| {
            let se = p.se.unwrap_or(0.0);
            [p.y - se, p.y + se]
        }),
    );
    let mut svg = String::new();
    open(&mut svg, title);
    axes(&mut svg, &f, xlabel, ylabel);
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        if s.points.iter().any(|p| p.se.is_some()) {
            let upper = s.points.iter().map(|p| (p.x, p.y + p.se.unwrap_or(0.0)));
            let lower = s.points.iter().rev().map(|p| (p.x, p.y - p.se.unwrap_or(0.0)));
            let d = path(&f, upper.chain(lower));
            let _ = writeln!(
                svg,
                r#"<path class="band" d="{d} Z" fill="{c}" fill-opacity="0.25" stroke="none"/>"#
            );
        }
        let d = path(&f, s.points.iter().map(|p| (p.x, p.y)));
        let _ = writeln!(
            svg,
            r#"<path class="line" d="{d}" fill="none" stroke="{c}" stroke-width="2"/>"#
        );
    }
    legend(&mut svg, series);
    svg.push_str("</svg>\n");
    svg
}

fn path(f: &Frame, pts: impl Iterator<Item = (f64, f64)>) -> String {
    pts.enumerate()
        .map(|(i, (x, y))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, f.px(x), f.py(y)))
        .collect()
}

fn bars(t: &Table, title: &str) -> Result<String> {
    let (lc, vc) = (t.col("label").unwrap(), t.col("value").unwrap());
    let vals: Vec<(String, f64)> = (0..t.rows.len())
        .map(|r| Ok((t.rows[r][lc].clone(), t.num(r, vc)?)))
        .collect::<Result<_>>()?;
    let top = vals.iter().map(|v| v.1).fold(0.0f64, f64::max);
    let bottom = vals.iter().map(|v| v.1).fold(0.0f64, f64::min);
    let f = Frame {
        x0: 0.0,
        x1: vals.len().max(1) as f64,
        y0: bottom,
        y1: if top > bottom { top } else { bottom + 1.0 },
    };
    let mut svg = String::new();
    open(&mut svg, title);
    let (l, r, b) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" fill="none"><path d="M{l:.2},{TOP:.2} L{l:.2},{b:.2} L{r:.2},{b:.2}"/></g>"#
    );
    let slot = f.px(1.0) - f.px(0.0);
    for (i, (label, v)) in vals.iter().enumerate() {
        let x = f.px(i as f64) + slot * 0.1;
        let (y_hi, y_lo) = (f.py(v.max(0.0)), f.py(v.min(0.0)));
        let _ = writeln!(
            svg,
            r#"<rect class="bar" x="{x:.2}" y="{y_hi:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{}: {v}</title></rect>"#,
            slot * 0.8,
            y_lo - y_hi,
            PALETTE[0],
            esc(label)
        );
        if vals.len() <= 40 {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="9">{}</text>"#,
                x + slot * 0.4,
                b + 12.0,
                esc(label)
            );
        }
    }
    for i in 0..=4 {
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 6.0,
            f.py(y) + 4.0,
            tick(y)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders CSV text as an SVG document.
pub fn render_plot(csv_text: &str, kind: PlotKind, title: &str) -> Result<String> {
    let t = Table::parse(csv_text)?;
    t.check(kind)?;
    match kind {
        PlotKind::OffsetCurve => {
            let s = collect_series(&t, "offset", "mean", Some("se"), Some("series"))?;
            Ok(lines(&s, title, "offset (years)", "mean similarity"))
        }
        PlotKind::Trajectory => {
            let s = collect_series(&t, "year", "mean", Some("se"), Some("series"))?;
            Ok(lines(&s, title, "year", "mean similarity"))
        }
        PlotKind::Sweep => {
            let s = collect_series(&t, "draws", "accuracy", None, Some("embedder"))?;
            Ok(lines(&s, title, "passages per document", "accuracy"))
        }
        PlotKind::Bar => bars(&t, title),
    }
}

/// Reads `input`, writes the SVG to `output`; the title is the input file stem.
pub fn render_file(input: &Path, kind: PlotKind, output: &Path) -> Result<()> {
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let title = input.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let svg = render_plot(&text, kind, title)?;
    fs::write(output, svg).map_err(|e| Error::io(output, e))
}
