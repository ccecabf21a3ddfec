//! Flipped Legendre–Gauss–Radau collocation.
//!
//! A segment of order `p` carries `p + 1` interpolation nodes on `[-1, 1]`:
//! the uncollocated node `τ₀ = -1` followed by the `p` roots of
//! `P_p - P_{p-1}`, the last of which is `+1`. Collocation rows and
//! quadrature weights exist for nodes `1..=p` only.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 64;

/// Nodes, differentiation matrix and quadrature weights of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct RadauSegment {
    pub order: usize,
    /// `p + 1` nodes, `nodes[0] = -1`, `nodes[p] = 1`.
    pub nodes: Vec<f64>,
    /// `p × (p + 1)`; row `i - 1` holds `L'_j(τ_i)` for collocation node `i`.
    pub diff: DMatrix<f64>,
    /// Quadrature weights of collocation nodes `1..=p`.
    pub weights: Vec<f64>,
    bary: Vec<f64>,
}

/// Legendre `P_n(x)`, `P_{n-1}(x)` and their derivatives by recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64, f64, f64) {
    // returns (P_n, P_{n-1}, P'_n, P'_{n-1})
    let (mut p_prev, mut p) = (1.0, x);
    let (mut d_prev, mut d) = (0.0, 1.0);
    if n == 0 {
        return (1.0, 0.0, 0.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        let d_next = d_prev + (2.0 * kf - 1.0) * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, p_prev, d, d_prev)
}

/// Double-double value `hi + lo`, used only to polish nodes and weights.
#[derive(Debug, Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn from(x: f64) -> Self {
        Dd(x, 0.0)
    }

    fn norm(s: f64, e: f64) -> Self {
        let hi = s + e;
        Dd(hi, e - (hi - s))
    }

    fn add(self, o: Dd) -> Self {
        let s = self.0 + o.0;
        let bb = s - self.0;
        let e = (self.0 - (s - bb)) + (o.0 - bb) + self.1 + o.1;
        Dd::norm(s, e)
    }

    fn mul(self, o: Dd) -> Self {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + self.0 * o.1 + self.1 * o.0;
        Dd::norm(p, e)
    }

    fn scale(self, b: f64) -> Self {
        self.mul(Dd::from(b))
    }

    fn div(self, b: f64) -> Self {
        let q1 = self.0 / b;
        let r = self.add(Dd::from(b).scale(-q1));
        Dd::norm(q1, r.0 / b)
    }

    fn value(self) -> f64 {
        self.0 + self.1
    }
}

/// `(P_n(x), P_{n-1}(x))` in double-double precision.
fn legendre_pair_dd(n: usize, x: Dd) -> (Dd, Dd) {
    let (mut p_prev, mut p) = (Dd::from(1.0), x);
    for k in 2..=n {
        let kf = k as f64;
        let next = x
            .mul(p)
            .scale(2.0 * kf - 1.0)
            .add(p_prev.scale(-(kf - 1.0)))
            .div(kf);
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Flipped Radau collocation points (roots of `P_p - P_{p-1}`), ascending.
///
/// Golub's Gauss–Radau modification of the Legendre Jacobi matrix with the
/// fixed node at `+1`, followed by a Newton polish of each free root.
fn flipped_radau_points(p: usize) -> Vec<Dd> {
    if p == 1 {
        return vec![Dd::from(1.0)];
    }
    let beta = |k: usize| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    };
    // Solve (J_{p-1} - I) δ = β_{p-1}² e_{p-1} for the modified last diagonal.
    let m = p - 1;
    let mut jm = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        jm[(k, k)] = -1.0;
        if k + 1 < m {
            jm[(k, k + 1)] = beta(k + 1);
            jm[(k + 1, k)] = beta(k + 1);
        }
    }
    let mut rhs = DVector::zeros(m);
    rhs[m - 1] = beta(m).powi(2);
    let delta = jm.lu().solve(&rhs).expect("Radau modification is nonsingular");
    let mut jac = DMatrix::<f64>::zeros(p, p);
    for k in 0..p - 1 {
        jac[(k, k + 1)] = beta(k + 1);
        jac[(k + 1, k)] = beta(k + 1);
    }
    jac[(p - 1, p - 1)] = 1.0 + delta[m - 1];
    let mut roots: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().cloned().collect();
    roots.sort_by(f64::total_cmp);
    let last = roots.len() - 1;
    let mut polished: Vec<Dd> = roots.iter().map(|&r| Dd::from(r)).collect();
    polished[last] = Dd::from(1.0);
    for r in polished.iter_mut().take(last) {
        for _ in 0..6 {
            let (_, _, dn, dm) = legendre_pair(p, r.value());
            let (pn, pm) = legendre_pair_dd(p, *r);
            let step = pn.add(pm.scale(-1.0)).value() / (dn - dm);
            *r = r.add(Dd::from(-step));
            if step.abs() < 1e-30 {
                break;
            }
        }
    }
    polished
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| xj - xk)
                .product();
            1.0 / prod
        })
        .collect()
}

impl RadauSegment {
    /// Builds the segment of order `p` (`1 ≤ p ≤ 64`).
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 || p > MAX_ORDER {
            return Err(Error::Argument(format!(
                "collocation order {p} outside 1..={MAX_ORDER}"
            )));
        }
        let points = flipped_radau_points(p);
        let mut nodes = Vec::with_capacity(p + 1);
        nodes.push(-1.0);
        nodes.extend(points.iter().map(|t| t.value()));

        let p2 = (p * p) as f64;
        let weights: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                if k + 1 == p {
                    2.0 / p2
                } else {
                    let (_, pm) = legendre_pair_dd(p, t);
                    t.add(Dd::from(1.0)).value() / (p2 * pm.mul(pm).value())
                }
            })
            .collect();

        let bary = barycentric_weights(&nodes);
        let mut full = DMatrix::<f64>::zeros(p + 1, p + 1);
        for i in 0..=p {
            let mut diag = 0.0;
            for j in 0..=p {
                if i != j {
                    let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    full[(i, j)] = v;
                    diag -= v;
                }
            }
            full[(i, i)] = diag;
        }
        let diff = full.rows(1, p).into_owned();
        Ok(Self {
            order: p,
            nodes,
            diff,
            weights,
            bary,
        })
    }

    /// Collocation nodes `τ_1..τ_p`.
    pub fn collocation_nodes(&self) -> &[f64] {
        &self.nodes[1..]
    }

    /// Lagrange interpolant of `values` (one per node) evaluated at `tau`.
    pub fn lagrange_eval(&self, values: &[f64], tau: f64) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        if let Some(j) = self.nodes.iter().position(|&t| t == tau) {
            return values[j];
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, (&t, &b)) in self.nodes.iter().zip(&self.bary).enumerate() {
            let c = b / (tau - t);
            num += c * values[j];
            den += c;
        }
        num / den
    }

    /// Lagrange basis `L_j(tau)` for all nodes.
    pub fn lagrange_basis(&self, tau: f64) -> Vec<f64> {
        let n = self.nodes.len();
        if let Some(j) = self.nodes.iter().position(|&t| t == tau) {
            let mut out = vec![0.0; n];
            out[j] = 1.0;
            return out;
        }
        let c: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.bary)
            .map(|(&t, &b)| b / (tau - t))
            .collect();
        let den: f64 = c.iter().sum();
        c.into_iter().map(|v| v / den).collect()
    }

    /// `Σ w_i f_i` over the collocation nodes.
    pub fn quadrature(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.order {
            return Err(Error::Argument(format!(
                "quadrature expects {} values, got {}",
                self.order,
                values.len()
            )));
        }
        Ok(self.weights.iter().zip(values).map(|(w, f)| w * f).sum())
    }

    /// Max deviation of `D · τ^k` from `k τ^{k-1}` on the collocation nodes.
    pub fn diff_exactness_check(&self, k: u32) -> f64 {
        let samples = DVector::from_iterator(self.nodes.len(), self.nodes.iter().map(|t| t.powi(k as i32)));
        let d = &self.diff * samples;
        self.collocation_nodes()
            .iter()
            .zip(d.iter())
            .map(|(&t, &v)| {
                let exact = if k == 0 { 0.0 } else { k as f64 * t.powi(k as i32 - 1) };
                (v - exact).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Uniform hp layout: `N` segments sharing one Radau segment.
#[derive(Debug, Clone, PartialEq)]
pub struct HpGrid {
    pub segments: usize,
    pub segment: RadauSegment,
    pub t0: f64,
    /// `(t_f - t_0) / (2N)`.
    pub sigma: f64,
}

impl HpGrid {
    pub fn new(segments: usize, order: usize, t0: f64, tf: f64) -> Result<Self> {
        if segments == 0 {
            return Err(Error::Argument("segment count must be at least 1".into()));
        }
        if !(tf > t0) {
            return Err(Error::Argument(format!("final time {tf} must exceed t0 {t0}")));
        }
        Ok(Self {
            segments,
            segment: RadauSegment::new(order)?,
            t0,
            sigma: (tf - t0) / (2.0 * segments as f64),
        })
    }

    pub fn order(&self) -> usize {
        self.segment.order
    }

    pub fn nodes_per_segment(&self) -> usize {
        self.segment.order + 1
    }

    /// Physical time of node `i` of segment `h` for time scaling `sigma`.
    pub fn time(&self, h: usize, i: usize, sigma: f64) -> f64 {
        self.t0 + sigma * (2.0 * h as f64 + 1.0 + self.segment.nodes[i])
    }

    pub fn final_time(&self, sigma: f64) -> f64 {
        self.t0 + 2.0 * sigma * self.segments as f64
    }
}
