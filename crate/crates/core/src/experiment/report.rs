use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blm::LexType;
use crate::util::write_json;

use super::eval::{ErrorAnalysis, TraversalStep};
use super::project::Projection;
use super::{io_err, ExperimentError};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    /// False when either label is not on the axis.
    pub fn add(&mut self, truth: &str, predicted: &str) -> bool {
        let pos = |l: &str| self.labels.iter().position(|x| x == l);
        match (pos(truth), pos(predicted)) {
            (Some(t), Some(p)) => {
                self.counts[t][p] += 1;
                true
            }
            _ => false,
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            s.push_str(l);
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, path: &str) -> Result<Self, ExperimentError> {
        let err = |line: usize, msg: &str| ExperimentError::Csv {
            path: path.to_string(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file"))?;
        let mut cells = header.split(',');
        if cells.next() != Some("true\\pred") {
            return Err(err(1, "header must start with true\\pred"));
        }
        let labels: Vec<String> = cells.map(String::from).collect();
        let mut counts = Vec::with_capacity(labels.len());
        for (k, line) in lines.enumerate() {
            let mut cells = line.split(',');
            if cells.next() != labels.get(k).map(String::as_str) {
                return Err(err(k + 2, "row label does not match the header"));
            }
            let row = cells
                .map(str::parse::<u64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| err(k + 2, "bad count"))?;
            if row.len() != labels.len() {
                return Err(err(k + 2, "wrong number of cells"));
            }
            counts.push(row);
        }
        if counts.len() != labels.len() {
            return Err(err(counts.len() + 2, "missing rows"));
        }
        Ok(Self { labels, counts })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunF1 {
    pub seed: u64,
    pub f1: f64,
}

/// One train/test pairing across runs. `confusion` and `errors` come from
/// the first listed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub task: String,
    pub lex_train: Option<LexType>,
    pub lex_test: Option<LexType>,
    pub runs: Vec<RunF1>,
    pub f1_mean: f64,
    /// Population standard deviation over `runs`.
    pub f1_std: f64,
    pub confusion: ConfusionMatrix,
    pub errors: BTreeMap<String, u64>,
}

impl PairResult {
    pub fn tag(&self) -> String {
        match (self.lex_train, self.lex_test) {
            (Some(a), Some(b)) => format!("{a}-{b}"),
            _ => "sentence".to_string(),
        }
    }
}

/// Mean and population standard deviation; identical values give exactly 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.first().is_some_and(|&x| xs.iter().all(|&y| y == x)) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub task: String,
    pub model: String,
    pub results: Vec<PairResult>,
}

/// Latents with their sentence ids and the 2-D projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionArtifact {
    pub ids: Vec<String>,
    pub latents: Vec<Vec<f64>>,
    pub projection: Projection,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub metrics: Option<Metrics>,
    /// Full error analysis per pair tag.
    pub errors: Vec<(String, ErrorAnalysis)>,
    pub traversal: Vec<TraversalStep>,
    pub projection: Option<ProjectionArtifact>,
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn errors_csv(e: &ErrorAnalysis) -> String {
    let mut s = String::from("label,count,log10_percent\n");
    let logs = e.log_percent();
    for (label, count) in &e.counts {
        let _ = writeln!(s, "{label},{count},{}", logs[label]);
    }
    s
}

pub fn traversal_summary_csv(steps: &[TraversalStep]) -> String {
    let mut s = String::from("unit,step,value,accuracy\n");
    for t in steps {
        let _ = writeln!(s, "{},{},{},{}", t.unit, t.step, t.value, t.accuracy);
    }
    s
}

pub fn projection_csv(p: &ProjectionArtifact) -> String {
    let d = p.latents.first().map_or(0, Vec::len);
    let mut s = String::from("sentence_id,label,pc1,pc2");
    for k in 0..d {
        let _ = write!(s, ",z{k}");
    }
    s.push('\n');
    for ((id, z), (xy, label)) in p
        .ids
        .iter()
        .zip(&p.latents)
        .zip(p.projection.coords.iter().zip(&p.projection.labels))
    {
        let _ = write!(s, "{id},{label},{},{}", xy[0], xy[1]);
        for v in z {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

const PALETTE: [&str; 14] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#ad494a", "#8ca252", "#de9ed6",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn projection_svg(p: &Projection) -> String {
    let (w, h, pad, legend) = (520.0, 440.0, 20.0, 160.0);
    let mut labels: Vec<&str> = p.labels.iter().map(String::as_str).collect();
    labels.sort_unstable();
    labels.dedup();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in &p.coords {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let span = |k: usize| if hi[k] > lo[k] { hi[k] - lo[k] } else { 1.0 };
    let plot_w = w - legend - 2.0 * pad;
    let plot_h = h - 2.0 * pad;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for (c, l) in p.coords.iter().zip(&p.labels) {
        let k = labels.binary_search(&l.as_str()).expect("label present");
        let x = pad + (c[0] - lo[0]) / span(0) * plot_w;
        let y = pad + plot_h - (c[1] - lo[1]) / span(1) * plot_h;
        let _ = writeln!(
            s,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\"/>",
            PALETTE[k % PALETTE.len()]
        );
    }
    for (k, l) in labels.iter().enumerate() {
        let y = pad + 14.0 * k as f64;
        let x = w - legend;
        let _ = writeln!(
            s,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{}</text>",
            PALETTE[k % PALETTE.len()],
            x + 8.0,
            y + 3.0,
            escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn errors_svg(e: &ErrorAnalysis) -> String {
    let logs = e.log_percent();
    let (bar, gap, h) = (36.0, 12.0, 260.0);
    let w = 40.0 + (bar + gap) * logs.len().max(1) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    // log10 of a percentage lies in [0, 2] for shares of at least 1%
    let scale = (h - 60.0) / 2.0;
    for (k, (label, v)) in logs.iter().enumerate() {
        let x = 30.0 + (bar + gap) * k as f64;
        let height = (v.max(0.0) * scale).max(1.0);
        let y = h - 40.0 - height;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar}\" height=\"{height:.2}\" fill=\"#1f77b4\"/>\
             <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"10\">{}</text>",
            h - 25.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Train-on rows by test-on columns, each cell `mean (std)`.
pub fn summary_markdown(m: &Metrics) -> String {
    let mut s = format!("# {} results\n\nModel preset: {}.\n\n", m.task, m.model);
    let cell = |r: &PairResult| format!("{:.4} ({:.4})", r.f1_mean, r.f1_std);
    if m.results.iter().all(|r| r.lex_train.is_none()) {
        s.push_str("| runs | F1 mean (std) |\n|---|---|\n");
        for r in &m.results {
            let seeds: Vec<String> = r.runs.iter().map(|x| x.seed.to_string()).collect();
            let _ = writeln!(s, "| seeds {} | {} |", seeds.join(", "), cell(r));
        }
        return s;
    }
    let mut trains: Vec<LexType> = m.results.iter().filter_map(|r| r.lex_train).collect();
    let mut tests: Vec<LexType> = m.results.iter().filter_map(|r| r.lex_test).collect();
    trains.dedup();
    tests.sort();
    tests.dedup();
    s.push_str("| train on \\ test on |");
    for t in &tests {
        let _ = write!(s, " {t} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(tests.len()));
    s.push('\n');
    for a in &trains {
        let _ = write!(s, "| {a} |");
        for b in &tests {
            match m
                .results
                .iter()
                .find(|r| r.lex_train == Some(*a) && r.lex_test == Some(*b))
            {
                Some(r) => {
                    let _ = write!(s, " {} |", cell(r));
                }
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    s
}

/// Write every artifact present in `report` under `out`; returns the paths.
pub fn emit_report(report: &Report, out: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut written = Vec::new();
    let mut put = |rel: String, text: String| -> Result<(), ExperimentError> {
        let p = out.join(rel);
        write_text(&p, &text)?;
        written.push(p);
        Ok(())
    };
    if let Some(m) = &report.metrics {
        let p = out.join("metrics.json");
        write_json(&p, m).map_err(io_err(&p))?;
        put("summary.md".into(), summary_markdown(m))?;
        for r in &m.results {
            put(format!("confusion_{}.csv", r.tag()), r.confusion.to_csv())?;
        }
    }
    for (tag, e) in &report.errors {
        put(format!("errors_{tag}.csv"), errors_csv(e))?;
        if e.total > 0 {
            put(format!("plots/errors_{tag}.svg"), errors_svg(e))?;
        }
    }
    if !report.traversal.is_empty() {
        put(
            "traversal/summary.csv".into(),
            traversal_summary_csv(&report.traversal),
        )?;
        for t in &report.traversal {
            put(
                format!("traversal/unit{}_step{}.csv", t.unit, t.step),
                t.confusion.to_csv(),
            )?;
        }
    }
    if let Some(p) = &report.projection {
        put("projection.csv".into(), projection_csv(p))?;
        put("plots/projection.svg".into(), projection_svg(&p.projection))?;
    }
    if report.metrics.is_some() {
        written.insert(0, out.join("metrics.json"));
    }
    Ok(written)
}
