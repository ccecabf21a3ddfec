//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use geoscvx::collocation::HpGrid;
use geoscvx::transcription::ReferenceTrajectory;
use nalgebra::{DMatrix, DVector};

/// Monomial coefficients (lowest first) of the Legendre polynomial `P_n`.
pub fn legendre_coeffs(n: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for k in 1..n {
        // (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}
        let mut next = vec![0.0; k + 2];
        for (j, c) in cur.iter().enumerate() {
            next[j + 1] += (2 * k + 1) as f64 * c;
        }
        for (j, c) in prev.iter().enumerate() {
            next[j] -= k as f64 * c;
        }
        for c in next.iter_mut() {
            *c /= (k + 1) as f64;
        }
        prev = cur;
        cur = next;
    }
    cur
}

fn horner(c: &[f64], x: f64) -> (f64, f64) {
    let (mut v, mut d) = (0.0, 0.0);
    for &a in c.iter().rev() {
        d = d * x + v;
        v = v * x + a;
    }
    (v, d)
}

/// Flipped Radau collocation points: roots of `P_p - P_{p-1}`, ascending,
/// the last one being `+1`. Companion-matrix eigenvalues polished by Newton.
pub fn radau_points(p: usize) -> Vec<f64> {
    let a = legendre_coeffs(p);
    let b = legendre_coeffs(p - 1);
    let mut q = a.clone();
    for (j, c) in b.iter().enumerate() {
        q[j] -= c;
    }
    let lead = q[p];
    let mut comp = DMatrix::zeros(p, p);
    for j in 0..p {
        comp[(0, j)] = -q[p - 1 - j] / lead;
        if j + 1 < p {
            comp[(j + 1, j)] = 1.0;
        }
    }
    let mut roots: Vec<f64> = comp.complex_eigenvalues().iter().map(|z| z.re.clamp(-1.0, 1.0)).collect();
    for r in roots.iter_mut() {
        for _ in 0..50 {
            let (v, d) = horner(&q, *r);
            if d == 0.0 {
                break;
            }
            let step = v / d;
            *r -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Full node set `-1, τ_1, …, τ_p`.
pub fn radau_nodes(p: usize) -> Vec<f64> {
    let mut v = vec![-1.0];
    v.extend(radau_points(p));
    v
}

/// `D = V' V⁻¹` on the monomial basis, rows restricted to collocation points.
pub fn radau_diff(p: usize) -> DMatrix<f64> {
    let t = radau_nodes(p);
    let n = p + 1;
    let v = DMatrix::from_fn(n, n, |i, j| t[i].powi(j as i32));
    let vd = DMatrix::from_fn(n, n, |i, j| if j == 0 { 0.0 } else { j as f64 * t[i].powi(j as i32 - 1) });
    let d = vd * v.try_inverse().expect("distinct nodes");
    d.rows(1, p).into_owned()
}

/// Weights matching the moments `∫τ^k` for `k < p`.
pub fn radau_weights(p: usize) -> Vec<f64> {
    let t = radau_points(p);
    let m = DMatrix::from_fn(p, p, |k, i| t[i].powi(k as i32));
    let rhs = DVector::from_fn(p, |k, _| if k % 2 == 0 { 2.0 / (k + 1) as f64 } else { 0.0 });
    m.lu().solve(&rhs).expect("moment system").iter().copied().collect()
}

/// First-iteration step of the double integrator `ẋ₁ = x₂, ẋ₂ = u`,
/// cost `½∫u²`, from an equality-constrained QP solved through its KKT
/// system. The transcription is rebuilt here from scratch: shared
/// interface nodes, collocation rows on the classical scheme, fixed ends
/// and the control trust-region penalty `μ_r w ξ²` (the cone is tight at
/// the optimum). Returns `(η per global node, ξ per collocation node)`.
pub fn lq_first_step(
    grid: &HpGrid,
    reference: &ReferenceTrajectory,
    x0: [f64; 2],
    xf: [f64; 2],
    mu_r: f64,
) -> (Vec<[f64; 2]>, Vec<f64>) {
    let p = grid.order();
    let segs = grid.segments;
    let d = radau_diff(p);
    let w = radau_weights(p);
    let sigma = reference.sigma;
    let nx = segs * p + 1;
    let nu = segs * p;
    let nz = 2 * nx + nu;
    let gx = |h: usize, i: usize| h * p + i;
    let xbar = |g: usize| -> [f64; 2] {
        let (h, i) = if g == 0 { (0, 0) } else { ((g - 1) / p, (g - 1) % p + 1) };
        let c = &reference.states[h][i].coords;
        [c[0], c[1]]
    };
    let ubar = |h: usize, i: usize| reference.controls[h][i].coords[0];

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for h in 0..segs {
        for r in 0..p {
            let i = r + 1;
            let g = gx(h, i);
            let ui = 2 * nx + h * p + r;
            // Σ D (x̄+η)_1 - σ (x̄+η)_2 = 0
            let mut t1 = Vec::new();
            let mut t2 = Vec::new();
            let (mut c1, mut c2) = (0.0, 0.0);
            for k in 0..=p {
                let gk = gx(h, k);
                t1.push((2 * gk, d[(r, k)]));
                t2.push((2 * gk + 1, d[(r, k)]));
                c1 += d[(r, k)] * xbar(gk)[0];
                c2 += d[(r, k)] * xbar(gk)[1];
            }
            t1.push((2 * g + 1, -sigma));
            c1 -= sigma * xbar(g)[1];
            t2.push((ui, -sigma));
            c2 -= sigma * ubar(h, i);
            rows.push((t1, -c1));
            rows.push((t2, -c2));
        }
    }
    let last = nx - 1;
    for c in 0..2 {
        rows.push((vec![(c, 1.0)], x0[c] - xbar(0)[c]));
        rows.push((vec![(2 * last + c, 1.0)], xf[c] - xbar(last)[c]));
    }

    let nc = rows.len();
    let mut kkt = DMatrix::zeros(nz + nc, nz + nc);
    let mut rhs = DVector::zeros(nz + nc);
    for h in 0..segs {
        for r in 0..p {
            let k = 2 * nx + h * p + r;
            kkt[(k, k)] = w[r] * (sigma + 2.0 * mu_r);
            rhs[k] = -w[r] * sigma * ubar(h, r + 1);
        }
    }
    for (j, (terms, b)) in rows.iter().enumerate() {
        for &(v, a) in terms {
            kkt[(nz + j, v)] += a;
            kkt[(v, nz + j)] += a;
        }
        rhs[nz + j] = *b;
    }
    let z = kkt.lu().solve(&rhs).expect("nonsingular KKT system");
    let eta = (0..nx).map(|g| [z[2 * g], z[2 * g + 1]]).collect();
    let xi = (0..nu).map(|k| z[2 * nx + k]).collect();
    (eta, xi)
}
