//! Reading trajectory files back for audits and plot tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use geoscvx::geometry::{Leaf, ManifoldChart};

use crate::error::{CliError, Result};
use crate::export::{block_violation, fmt, manifold_blocks, Block};

#[derive(Debug, Clone)]
pub struct TrajectoryFile {
    pub path: PathBuf,
    pub state_chart: ManifoldChart,
    pub control_chart: ManifoldChart,
    /// State then control column labels.
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// State then control ambient coordinates per node.
    pub rows: Vec<Vec<f64>>,
}

fn chart_from(sig: &str) -> geoscvx::Result<ManifoldChart> {
    let leaves = sig.split_whitespace().map(Leaf::from_tag).collect::<geoscvx::Result<Vec<_>>>()?;
    Ok(ManifoldChart::from_leaves(&leaves))
}

impl TrajectoryFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| CliError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let (mut state, mut control, mut header) = (None, None, None);
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.split_once(':') {
                    let chart = || chart_from(value.trim()).map_err(|e| err(line_no, e.to_string()));
                    match key.trim() {
                        "state_chart" => state = Some(chart()?),
                        "control_chart" => control = Some(chart()?),
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let Some(names) = &header else {
                if fields.len() < 3 || fields[..3] != ["segment", "node", "t"] {
                    return Err(err(line_no, "expected a 'segment,node,t,...' header row".into()));
                }
                let (Some(x), Some(u)) = (&state, &control) else {
                    return Err(err(line_no, "state_chart and control_chart metadata must precede the header".into()));
                };
                let want = 3 + x.ambient_dim() + u.ambient_dim();
                if fields.len() != want {
                    return Err(err(line_no, format!("header has {} columns, charts need {want}", fields.len())));
                }
                header = Some(fields[3..].iter().map(|s| s.to_string()).collect::<Vec<_>>());
                continue;
            };
            if fields.len() != names.len() + 3 {
                return Err(err(line_no, format!("expected {} fields, found {}", names.len() + 3, fields.len())));
            }
            let mut vals = Vec::with_capacity(fields.len() - 2);
            for (j, f) in fields.iter().enumerate() {
                if j < 2 {
                    f.parse::<usize>().map_err(|_| err(line_no, format!("column {}: '{f}' is not an index", j + 1)))?;
                    continue;
                }
                vals.push(f.parse::<f64>().map_err(|_| err(line_no, format!("column {}: '{f}' is not a number", j + 1)))?);
            }
            times.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        let labels = header.ok_or_else(|| err(text.lines().count(), "no header row".into()))?;
        Ok(Self {
            path: path.to_path_buf(),
            state_chart: state.expect("checked with header"),
            control_chart: control.expect("checked with header"),
            labels,
            times,
            rows,
        })
    }

    pub fn blocks(&self) -> Vec<Block> {
        manifold_blocks(&self.state_chart, &self.control_chart, &self.labels)
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub max: f64,
    pub mean: f64,
    pub nodes: usize,
}

pub fn audit(file: &TrajectoryFile) -> Vec<BlockReport> {
    file.blocks()
        .into_iter()
        .map(|b| {
            let v: Vec<f64> = file.rows.iter().map(|r| block_violation(&r[b.columns.clone()])).collect();
            BlockReport {
                name: b.name,
                max: v.iter().copied().fold(0.0, f64::max),
                mean: v.iter().sum::<f64>() / v.len().max(1) as f64,
                nodes: v.len(),
            }
        })
        .collect()
}

pub fn audit_text(file: &TrajectoryFile) -> String {
    let reports = audit(file);
    if reports.is_empty() {
        return format!("{}: no manifold blocks\n", file.path.display());
    }
    let mut s = String::new();
    for r in &reports {
        let _ = writeln!(s, "{}: max {} mean {} over {} nodes", r.name, fmt(r.max), fmt(r.mean), r.nodes);
    }
    let worst = reports.iter().map(|r| r.max).fold(0.0, f64::max);
    let _ = writeln!(s, "overall max violation {}", fmt(worst));
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    Trajectory3d,
    Qnorm,
    Udirnorm,
    Mass,
    Thrust,
}

/// Columnar plot table with a header row.
pub fn plotdata(file: &TrajectoryFile, q: Quantity) -> Result<String> {
    let need = |name: &str| {
        file.column(name)
            .ok_or_else(|| CliError::Usage(format!("{}: no column named '{name}'", file.path.display())))
    };
    let first_block = |kind: &str, leaf: &str| {
        file.blocks()
            .into_iter()
            .find(|b| b.name.starts_with(&format!("{kind} {leaf} ")))
            .ok_or_else(|| CliError::Usage(format!("{}: no {kind} {leaf} block", file.path.display())))
    };
    let mut s = String::new();
    match q {
        Quantity::Trajectory3d => {
            let cols = [need("r_x")?, need("r_y")?, need("r_z")?];
            s.push_str("r_x,r_y,r_z\n");
            for r in &file.rows {
                let _ = writeln!(s, "{},{},{}", fmt(r[cols[0]]), fmt(r[cols[1]]), fmt(r[cols[2]]));
            }
        }
        Quantity::Qnorm | Quantity::Udirnorm => {
            let (b, title) = match q {
                Quantity::Qnorm => (first_block("state", "Q")?, "q_norm_violation"),
                _ => (first_block("control", "S2")?, "udir_norm_violation"),
            };
            let _ = writeln!(s, "t,{title}");
            for (t, r) in file.times.iter().zip(&file.rows) {
                let _ = writeln!(s, "{},{}", fmt(*t), fmt(block_violation(&r[b.columns.clone()])));
            }
        }
        Quantity::Mass | Quantity::Thrust => {
            let name = if q == Quantity::Mass { "m" } else { "T" };
            let c = need(name)?;
            let _ = writeln!(s, "t,{name}");
            for (t, r) in file.times.iter().zip(&file.rows) {
                let _ = writeln!(s, "{},{}", fmt(*t), fmt(r[c]));
            }
        }
    }
    Ok(s)
}
