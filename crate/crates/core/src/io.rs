//! Network files, curve CSV and SVG plots.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Caps, Tolerances};
use crate::error::{Error, Result};
use crate::graph::{build_cost_model, enumerate_paths, order_paths, Network, Path, PathCostModel};
use crate::sweep::PiecewiseAffineCurve;

/// On-disk network description.
///
/// ```json
/// {
///   "vertices": 4,
///   "edges": [{"tail": 0, "head": 1, "alpha": 1.0, "beta": 0.0}],
///   "origin": 0,
///   "destination": 3,
///   "paths": [[0, 1], [2, 3]]
/// }
/// ```
///
/// Vertices and edges are numbered from 0. The optional `paths` list fixes the
/// path numbering; it must contain every simple origin-destination path exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub network: Network,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<usize>>>,
}

impl NetworkFile {
    pub fn from_network(network: Network) -> Self {
        Self { name: None, network, paths: None }
    }

    /// Simple paths in file order if given, lexicographic otherwise.
    pub fn ordered_paths(&self, cap: usize) -> Result<Vec<Path>> {
        let all = enumerate_paths(&self.network, cap)?;
        match &self.paths {
            Some(order) => order_paths(&all, order),
            None => Ok(all),
        }
    }

    pub fn cost_model(&self, cap: usize) -> Result<PathCostModel> {
        build_cost_model(&self.network, &self.ordered_paths(cap)?)
    }
}

pub fn parse_network_str(text: &str) -> Result<NetworkFile> {
    let file: NetworkFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    file.network.validate()?;
    Ok(file)
}

pub fn parse_network(path: &FsPath) -> Result<NetworkFile> {
    let text = std::fs::read_to_string(path)?;
    parse_network_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn network_to_json(file: &NetworkFile) -> String {
    serde_json::to_string_pretty(file).expect("network serialization cannot fail")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tolerances: Tolerances,
    pub caps: Caps,
    pub out_dir: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { tolerances: Tolerances::default(), caps: Caps::default(), out_dir: None, formats: vec![OutputFormat::Text] }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        if ![t.kkt, t.feas, t.class].iter().all(|x| x.is_finite() && *x > 0.0) {
            return Err(Error::InvalidNetwork("tolerances must be positive".into()));
        }
        let c = &self.caps;
        if [c.paths, c.breakpoints, c.subsets, c.solver_iterations].contains(&0) {
            return Err(Error::InvalidNetwork("caps must be positive".into()));
        }
        Ok(())
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}

/// Samples per interval, excluding the endpoints.
pub const SAMPLES_PER_INTERVAL: usize = 20;

/// Demands in `[lo, hi]` at which to tabulate a curve: every breakpoint once plus evenly spaced samples.
/// Each demand comes with the index of the interval containing it.
pub fn sample_demands(curve: &PiecewiseAffineCurve, lo: f64, hi: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    if lo.is_nan() || hi.is_nan() || lo > hi || curve.intervals.is_empty() {
        return out;
    }
    let mut push = |d: f64, i: usize| {
        if out.last().is_none_or(|&(last, _)| d > last) {
            out.push((d, i));
        }
    };
    for iv in &curve.intervals {
        let a = iv.start.max(lo);
        let b = iv.end.map_or(hi, |e| e.min(hi));
        if a > b {
            continue;
        }
        push(a, iv.index);
        for k in 1..=SAMPLES_PER_INTERVAL {
            let d = a + (b - a) * k as f64 / (SAMPLES_PER_INTERVAL + 1) as f64;
            push(d, iv.index);
        }
        if iv.end.is_none_or(|e| e > hi) || iv.index + 1 == curve.intervals.len() {
            push(b, iv.index);
        }
    }
    out
}

/// Writes `D, lambda_we, lambda_p1.., interval_index` rows for demands in `[lo, hi]`.
pub fn emit_curve_csv(curve: &PiecewiseAffineCurve, lo: f64, hi: f64, sink: &mut impl Write) -> Result<()> {
    let mut header = String::from("D,lambda_we");
    for p in 0..curve.n_paths {
        write!(header, ",lambda_{}", PathCostModel::label(p)).unwrap();
    }
    writeln!(sink, "{header},interval_index")?;
    for (d, i) in sample_demands(curve, lo, hi) {
        let iv = &curve.intervals[i];
        let mut row = format!("{d},{}", iv.we_cost(d));
        for c in iv.cost(d) {
            write!(row, ",{c}").unwrap();
        }
        writeln!(sink, "{row},{i}")?;
    }
    Ok(())
}

fn labels(set: &[usize]) -> String {
    set.iter().map(|&p| PathCostModel::label(p)).collect::<Vec<_>>().join(";")
}

/// One row per interval: bounds, affine form and path sets.
pub fn emit_intervals_csv(curve: &PiecewiseAffineCurve, sink: &mut impl Write) -> Result<()> {
    writeln!(sink, "interval_index,start,end,lambda_start,slope,intercept,active,used")?;
    for iv in &curve.intervals {
        let (slope, intercept) = iv.affine();
        let end = iv.end.map_or("inf".to_string(), |e| e.to_string());
        writeln!(
            sink,
            "{},{},{end},{},{slope},{intercept},{},{}",
            iv.index,
            iv.start,
            iv.we_cost_start,
            labels(&iv.active),
            labels(&iv.used)
        )?;
    }
    Ok(())
}

/// A labelled polyline for [`render_svg`].
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points }
    }
}

/// Equilibrium cost of `curve` on `[0, hi]`.
pub fn we_cost_series(curve: &PiecewiseAffineCurve, hi: f64, label: &str) -> Series {
    let pts = sample_demands(curve, 0.0, hi).into_iter().map(|(d, _)| (d, curve.we_cost(d))).collect();
    Series::new(label, pts)
}

/// Cost of path `p` along `curve` on `[0, hi]`.
pub fn path_cost_series(curve: &PiecewiseAffineCurve, p: usize, hi: f64) -> Series {
    let pts = sample_demands(curve, 0.0, hi).into_iter().map(|(d, _)| (d, curve.cost_vector(d)[p])).collect();
    Series::new(PathCostModel::label(p), pts)
}

/// Beckmann potential of `curve` on `[0, hi]`.
pub fn beckmann_series(curve: &PiecewiseAffineCurve, hi: f64, label: &str) -> Series {
    let pts = sample_demands(curve, 0.0, hi).into_iter().map(|(d, _)| (d, curve.beckmann(d))).collect();
    Series::new(label, pts)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Line plot with x-axis ticks at `ticks`. Output depends only on the inputs.
pub fn render_svg(series: &[Series], ticks: &[f64], title: &str) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 640 400" width="640" height="400">"#).unwrap();
    writeln!(s, r#"<rect width="640" height="400" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="320" y="24" text-anchor="middle" font-size="14">{}</text>"#, escape(title)).unwrap();
    let (bx, by) = (MARGIN, HEIGHT - MARGIN);
    writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{:.2}" y2="{by}" stroke="black"/>"#, WIDTH - MARGIN).unwrap();
    writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{bx}" y2="{MARGIN}" stroke="black"/>"#).unwrap();
    for &t in ticks.iter().filter(|t| (x0..=x1).contains(*t)) {
        let x = sx(t);
        writeln!(s, r#"<line x1="{x:.2}" y1="{by}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, by + 5.0).unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#, by + 18.0, fmt_tick(t))
            .unwrap();
    }
    for (y, label) in [(y0, y0), (y1, y1)] {
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#, bx - 6.0, sy(y) + 3.0, fmt_tick(label))
            .unwrap();
    }
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> =
            ser.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" ")).unwrap();
        let ly = MARGIN + 14.0 * k as f64;
        writeln!(s, r#"<text x="{:.2}" y="{ly:.2}" font-size="11" fill="{color}">{}</text>"#, WIDTH - MARGIN + 4.0, escape(&ser.label))
            .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
