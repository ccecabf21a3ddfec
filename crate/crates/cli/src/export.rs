//! CSV artifacts: trajectory, iteration history and norm audit.

use std::fmt::Write as _;
use std::path::Path;

use geoscvx::collocation::HpGrid;
use geoscvx::geometry::{Component, ManifoldChart};
use geoscvx::scvx::IterationRecord;
use geoscvx::transcription::{ProblemDefinition, ReferenceTrajectory};

use crate::error::{CliError, Result};

/// Full-precision float text; parses back to the same bits.
pub fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

/// `|‖c‖ − 1|` of one manifold block.
pub fn block_violation(coords: &[f64]) -> f64 {
    (coords.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs()
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

/// A named manifold block of the state or control vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    /// Column range inside a trajectory row (after segment, node, t).
    pub columns: std::ops::Range<usize>,
}

/// Manifold blocks for a state/control chart pair, with names built from
/// the first and last column labels.
pub fn manifold_blocks(state: &ManifoldChart, control: &ManifoldChart, labels: &[String]) -> Vec<Block> {
    let nx = state.ambient_dim();
    let mk = |kind: &str, c: &Component, shift: usize| {
        let r = c.ambient_offset + shift..c.ambient_offset + shift + c.leaf.ambient_dim();
        Block {
            name: format!("{kind} {} ({}..{})", c.leaf.tag(), labels[r.start], labels[r.end - 1]),
            columns: r,
        }
    };
    let xs = state.components().into_iter().filter(|c| c.leaf.is_manifold()).map(|c| mk("state", &c, 0));
    let us = control.components().into_iter().filter(|c| c.leaf.is_manifold()).map(|c| mk("control", &c, nx));
    xs.chain(us).collect()
}

fn labels(problem: &dyn ProblemDefinition) -> (Vec<String>, Vec<String>) {
    let (x, u) = (problem.state_labels(), problem.control_labels());
    let names = x.iter().chain(&u).map(|(n, _)| n.clone()).collect();
    let units = x.iter().chain(&u).map(|(_, u)| u.clone()).collect();
    (names, units)
}

/// One row per node and segment (`N·(p+1)` rows): index, time, state and
/// control ambient coordinates.
pub fn trajectory_csv(problem: &dyn ProblemDefinition, grid: &HpGrid, reference: &ReferenceTrajectory, status: &str) -> String {
    let (names, units) = labels(problem);
    let mut s = String::new();
    let _ = writeln!(s, "# geoscvx trajectory");
    let _ = writeln!(s, "# problem: {}", problem.name());
    let _ = writeln!(s, "# status: {status}");
    let _ = writeln!(s, "# state_chart: {}", problem.state_chart().signature());
    let _ = writeln!(s, "# control_chart: {}", problem.control_chart().signature());
    let _ = writeln!(s, "# sigma: {}", fmt(reference.sigma));
    let _ = writeln!(s, "# node 0 of each segment carries a copy of the adjacent collocated control");
    let _ = writeln!(s, "# units: -,-,time,{}", units.join(","));
    let _ = writeln!(s, "segment,node,t,{}", names.join(","));
    for h in 0..reference.segments() {
        for (i, (x, u)) in reference.states[h].iter().zip(&reference.controls[h]).enumerate() {
            let _ = write!(s, "{h},{i},{}", fmt(grid.time(h, i, reference.sigma)));
            for v in x.coords.iter().chain(u.coords.iter()) {
                let _ = write!(s, ",{}", fmt(*v));
            }
            s.push('\n');
        }
    }
    s
}

pub const HISTORY_COLUMNS: [&str; 18] = [
    "iteration",
    "objective",
    "cost",
    "virtual_control_penalty",
    "slack_penalty",
    "trust_region_penalty",
    "max_defect",
    "max_virtual_control",
    "max_slack",
    "eta_norm",
    "xi_norm",
    "dsigma",
    "sigma",
    "true_cost",
    "membership_violation",
    "status",
    "solver_iterations",
    "wall_time",
];

pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# geoscvx iteration history");
    let _ = writeln!(s, "# units: all dimensionless except wall_time [s]");
    let _ = writeln!(s, "{}", HISTORY_COLUMNS.join(","));
    for r in history {
        let nums = [
            r.objective,
            r.cost,
            r.virtual_control_penalty,
            r.slack_penalty,
            r.trust_region_penalty,
            r.max_defect,
            r.max_virtual_control,
            r.max_slack,
            r.eta_norm,
            r.xi_norm,
            r.dsigma,
            r.sigma,
            r.true_cost,
            r.membership_violation,
        ];
        let _ = write!(s, "{}", r.iteration);
        for v in nums {
            let _ = write!(s, ",{}", fmt(v));
        }
        let _ = writeln!(s, ",{:?},{},{}", r.status, r.solver_iterations, fmt(r.wall_time));
    }
    s
}

/// Per-node unit-norm violations of every manifold block, plus the
/// overall maximum.
pub fn audit_csv(problem: &dyn ProblemDefinition, grid: &HpGrid, reference: &ReferenceTrajectory) -> (String, f64) {
    let (names, _) = labels(problem);
    let blocks = manifold_blocks(problem.state_chart(), problem.control_chart(), &names);
    let mut s = String::new();
    let _ = writeln!(s, "# geoscvx norm audit: |‖block‖ − 1| per node");
    let _ = writeln!(s, "# problem: {}", problem.name());
    let header: Vec<String> = blocks.iter().map(|b| b.name.replace(' ', "_")).collect();
    let _ = writeln!(s, "segment,node,t{}", header.iter().map(|h| format!(",{h}")).collect::<String>());
    let mut worst: f64 = 0.0;
    for h in 0..reference.segments() {
        for (i, (x, u)) in reference.states[h].iter().zip(&reference.controls[h]).enumerate() {
            let row: Vec<f64> = x.coords.iter().chain(u.coords.iter()).copied().collect();
            let _ = write!(s, "{h},{i},{}", fmt(grid.time(h, i, reference.sigma)));
            for b in &blocks {
                let v = block_violation(&row[b.columns.clone()]);
                worst = worst.max(v);
                let _ = write!(s, ",{}", fmt(v));
            }
            s.push('\n');
        }
    }
    (s, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips_bits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 1.953_92, f64::MIN_POSITIVE] {
            assert_eq!(fmt(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn blocks_follow_chart_layout() {
        let state = ManifoldChart::product(vec![ManifoldChart::Euclidean(7), ManifoldChart::UnitQuaternion, ManifoldChart::Euclidean(3)]);
        let control = ManifoldChart::product(vec![ManifoldChart::Euclidean(1), ManifoldChart::Sphere2]);
        let labels: Vec<String> = (0..18).map(|k| format!("c{k}")).collect();
        let b = manifold_blocks(&state, &control, &labels);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].columns, 7..11);
        assert_eq!(b[1].columns, 15..18);
        assert_eq!(b[1].name, "control S2 (c15..c17)");
    }
}
