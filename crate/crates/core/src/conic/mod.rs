//! Canonical convex programs: linear objective, linear equalities, linear
//! inequalities and second-order cones, with pluggable solver backends.
//!
//! ```text
//! minimize    cᵀx + c₀
//! subject to  a_k·x  = b_k          (equalities)
//!             a_k·x <= b_k          (inequalities)
//!             ‖U x + u‖₂ <= tᵀx + t₀  (second-order cones)
//! ```

mod clarabel_backend;
mod dense;
pub mod encode;

use std::fmt::Write as _;
use std::io::Write;

pub use clarabel_backend::ClarabelBackend;
pub use dense::DenseIpm;
pub use encode::{encode_l1_penalty, encode_positive_part, encode_quadratic, encode_trust_region};

use crate::error::{Error, Result};

/// `Σ coef·x[idx] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(idx: usize) -> Self {
        Self::term(idx, 1.0)
    }

    pub fn term(idx: usize, coef: f64) -> Self {
        Self {
            terms: vec![(idx, coef)],
            constant: 0.0,
        }
    }

    pub fn plus_term(mut self, idx: usize, coef: f64) -> Self {
        self.terms.push((idx, coef));
        self
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }

    fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(i, a)| (a * x[i]).abs())
            .fold(self.constant.abs(), f64::max)
    }
}

/// `Σ coef·x[idx]` compared against `rhs`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum()
    }

    fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(i, a)| (a * x[i]).abs())
            .fold(self.rhs.abs(), f64::max)
    }
}

/// `‖u‖₂ <= t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SocConstraint {
    pub t: AffineExpr,
    pub u: Vec<AffineExpr>,
}

impl SocConstraint {
    /// `t - ‖u‖`; non-negative when satisfied.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let un: f64 = self.u.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        self.t.eval(x) - un
    }
}

/// A named contiguous range of variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl VarBlock {
    pub fn index(&self, k: usize) -> usize {
        debug_assert!(k < self.len);
        self.offset + k
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub blocks: Vec<VarBlock>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
    pub cones: Vec<SocConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub message: String,
}

impl ConicSolution {
    pub fn failed(status: ConicStatus, n: usize, iterations: u32, message: impl Into<String>) -> Self {
        Self {
            status,
            x: vec![f64::NAN; n],
            objective: f64::NAN,
            iterations,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            message: message.into(),
        }
    }

    pub fn block<'a>(&'a self, b: &VarBlock) -> &'a [f64] {
        &self.x[b.indices()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Clarabel,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub backend: Backend,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iters: u32,
    /// Relative residual bound used to certify an Optimal answer.
    pub certify_tol: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            backend: Backend::Clarabel,
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            max_iters: 200,
            certify_tol: 1e-8,
            verbose: false,
        }
    }
}

/// Row-wise constraint residuals of a candidate point, each scaled by
/// `max(1, largest |term|)` of its row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub equality: f64,
    pub inequality: f64,
    pub cone: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.equality.max(self.inequality).max(self.cone)
    }
}

/// Cone layout of the standard form `A x + s = b, s ∈ K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeLayout {
    pub zero: usize,
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

/// Sparse standard form shared by all backends.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub n: usize,
    pub c: Vec<f64>,
    /// `(row, col, value)` with duplicates merged.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: ConeLayout,
}

impl StandardForm {
    pub fn rows(&self) -> usize {
        self.b.len()
    }
}

/// A conic solver operating on [`StandardForm`].
pub trait ConicBackend {
    fn name(&self) -> &'static str;
    fn solve(&self, form: &StandardForm, settings: &SolverSettings) -> ConicSolution;
}

fn merge_terms(terms: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut t: Vec<(usize, f64)> = terms.to_vec();
    t.sort_by_key(|&(i, _)| i);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(t.len());
    for (i, a) in t {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += a,
            _ => out.push((i, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_block(&mut self, name: impl Into<String>, len: usize) -> VarBlock {
        let b = VarBlock {
            name: name.into(),
            offset: self.objective.len(),
            len,
        };
        self.objective.resize(b.offset + len, 0.0);
        self.blocks.push(b.clone());
        b
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.add_block(name, 1).offset
    }

    pub fn add_objective(&mut self, idx: usize, coef: f64) {
        self.objective[idx] += coef;
    }

    pub fn add_eq(&mut self, row: LinearRow) {
        self.equalities.push(row);
    }

    pub fn add_le(&mut self, row: LinearRow) {
        self.inequalities.push(row);
    }

    pub fn add_soc(&mut self, soc: SocConstraint) {
        self.cones.push(soc);
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Checks indices and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if let Some(i) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::Argument(format!("objective coefficient {i} is not finite")));
        }
        let check = |terms: &[(usize, f64)], k: f64, what: &str| -> Result<()> {
            for &(i, a) in terms {
                if i >= n {
                    return Err(Error::Argument(format!("{what} references variable {i} of {n}")));
                }
                if !a.is_finite() {
                    return Err(Error::Argument(format!("{what} has a non-finite coefficient")));
                }
            }
            if !k.is_finite() {
                return Err(Error::Argument(format!("{what} has a non-finite constant")));
            }
            Ok(())
        };
        for (k, r) in self.equalities.iter().enumerate() {
            check(&r.terms, r.rhs, &format!("equality {k}"))?;
        }
        for (k, r) in self.inequalities.iter().enumerate() {
            check(&r.terms, r.rhs, &format!("inequality {k}"))?;
        }
        for (k, c) in self.cones.iter().enumerate() {
            check(&c.t.terms, c.t.constant, &format!("cone {k}"))?;
            for e in &c.u {
                check(&e.terms, e.constant, &format!("cone {k}"))?;
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn residuals(&self, x: &[f64]) -> Residuals {
        let equality = self
            .equalities
            .iter()
            .map(|r| (r.lhs(x) - r.rhs).abs() / r.magnitude(x).max(1.0))
            .fold(0.0, f64::max);
        let inequality = self
            .inequalities
            .iter()
            .map(|r| (r.lhs(x) - r.rhs).max(0.0) / r.magnitude(x).max(1.0))
            .fold(0.0, f64::max);
        let cone = self
            .cones
            .iter()
            .map(|c| {
                let scale = c.u.iter().map(|e| e.magnitude(x)).fold(c.t.magnitude(x), f64::max);
                (-c.margin(x)).max(0.0) / scale.max(1.0)
            })
            .fold(0.0, f64::max);
        Residuals {
            equality,
            inequality,
            cone,
        }
    }

    pub fn to_standard_form(&self) -> StandardForm {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut row = 0;
        for r in &self.equalities {
            for (j, v) in merge_terms(&r.terms) {
                a.push((row, j, v));
            }
            b.push(r.rhs);
            row += 1;
        }
        for r in &self.inequalities {
            for (j, v) in merge_terms(&r.terms) {
                a.push((row, j, v));
            }
            b.push(r.rhs);
            row += 1;
        }
        let mut soc = Vec::with_capacity(self.cones.len());
        for c in &self.cones {
            for e in std::iter::once(&c.t).chain(c.u.iter()) {
                for (j, v) in merge_terms(&e.terms) {
                    a.push((row, j, -v));
                }
                b.push(e.constant);
                row += 1;
            }
            soc.push(1 + c.u.len());
        }
        StandardForm {
            n: self.num_vars(),
            c: self.objective.clone(),
            a,
            b,
            cones: ConeLayout {
                zero: self.equalities.len(),
                nonneg: self.inequalities.len(),
                soc,
            },
        }
    }

    /// Writes the plain-text dump: a header, the objective, then one
    /// constraint per line. Terms are `index:coefficient`.
    ///
    /// ```text
    /// # conic program
    /// vars <n>
    /// block <name> <offset> <len>
    /// obj <constant> i:c ...
    /// eq <rhs> i:a ...
    /// le <rhs> i:a ...
    /// soc <t0> i:a ... | <u0> i:a ... | ...
    /// ```
    pub fn dump(&self, mut w: impl Write) -> std::io::Result<()> {
        fn terms(out: &mut String, t: &[(usize, f64)]) {
            for (i, a) in t {
                let _ = write!(out, " {i}:{a:e}");
            }
        }
        writeln!(w, "# conic program")?;
        writeln!(w, "vars {}", self.num_vars())?;
        for b in &self.blocks {
            writeln!(w, "block {} {} {}", b.name, b.offset, b.len)?;
        }
        let mut line = format!("obj {:e}", self.objective_constant);
        let obj: Vec<(usize, f64)> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, *c))
            .collect();
        terms(&mut line, &obj);
        writeln!(w, "{line}")?;
        for r in &self.equalities {
            let mut line = format!("eq {:e}", r.rhs);
            terms(&mut line, &r.terms);
            writeln!(w, "{line}")?;
        }
        for r in &self.inequalities {
            let mut line = format!("le {:e}", r.rhs);
            terms(&mut line, &r.terms);
            writeln!(w, "{line}")?;
        }
        for c in &self.cones {
            let mut line = format!("soc {:e}", c.t.constant);
            terms(&mut line, &c.t.terms);
            for e in &c.u {
                let _ = write!(line, " | {:e}", e.constant);
                terms(&mut line, &e.terms);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Solves `program` with the configured backend and independently
/// re-checks the constraint residuals of an Optimal answer.
pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> ConicSolution {
    if let Err(e) = program.validate() {
        return ConicSolution::failed(ConicStatus::NumericalFailure, program.num_vars(), 0, e.to_string());
    }
    let form = program.to_standard_form();
    match settings.backend {
        Backend::Clarabel => {
            let first = certify(program, ClarabelBackend.solve_with(&form, settings, false), settings);
            if first.status == ConicStatus::Optimal
                || first.status == ConicStatus::Infeasible
                || first.status == ConicStatus::Unbounded
            {
                return first;
            }
            log::debug!("retrying clarabel with tighter settings after: {}", first.message);
            let second = certify(program, ClarabelBackend.solve_with(&form, settings, true), settings);
            if second.status == ConicStatus::Optimal {
                second
            } else {
                ConicSolution {
                    message: format!("{}; retry: {}", first.message, second.message),
                    ..second
                }
            }
        }
        Backend::Dense => certify(program, DenseIpm.solve(&form, settings), settings),
    }
}

/// Re-checks an Optimal answer against the program's own residuals.
fn certify(program: &ConicProgram, mut sol: ConicSolution, settings: &SolverSettings) -> ConicSolution {
    if sol.status == ConicStatus::Optimal {
        if sol.x.iter().any(|v| !v.is_finite()) {
            sol.status = ConicStatus::NumericalFailure;
            sol.message = "backend returned non-finite primal values".into();
            return sol;
        }
        let res = program.residuals(&sol.x);
        if res.max() > settings.certify_tol {
            sol.status = ConicStatus::NumericalFailure;
            sol.message = format!(
                "certification failed: equality {:.3e}, inequality {:.3e}, cone {:.3e}",
                res.equality, res.inequality, res.cone
            );
        }
        sol.objective = program.objective_value(&sol.x);
    }
    sol
}
