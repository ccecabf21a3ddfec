//! Small dense primal-dual interior-point method on the homogeneous
//! self-dual embedding, with Nesterov–Todd scaling and a Mehrotra
//! predictor-corrector. Meant for regression checks on modest problems.

use nalgebra::{DMatrix, DVector};

use super::{ConeLayout, ConicBackend, ConicSolution, ConicStatus, SolverSettings, StandardForm};

#[derive(Debug, Clone, Copy, Default)]
pub struct DenseIpm;

/// Cone `R₊^l × Q^{d₁} × … ` for the inequality part.
#[derive(Debug, Clone)]
struct Cone {
    nonneg: usize,
    soc: Vec<usize>,
}

/// NT scaling for one second-order cone.
#[derive(Debug, Clone)]
struct SocScale {
    eta: f64,
    w: DVector<f64>,
}

#[derive(Debug, Clone)]
struct Scaling {
    nonneg: Vec<f64>,
    soc: Vec<SocScale>,
}

impl Cone {
    fn dim(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    fn soc_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let mut off = self.nonneg;
        self.soc.iter().map(move |&d| {
            let r = off..off + d;
            off += d;
            r
        })
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        e.rows_mut(0, self.nonneg).fill(1.0);
        for r in self.soc_ranges() {
            e[r.start] = 1.0;
        }
        e
    }

    /// Jordan product `u ∘ v`.
    fn product(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.nonneg {
            out[i] = u[i] * v[i];
        }
        for r in self.soc_ranges() {
            let (a, b) = (u.rows(r.start, r.len()), v.rows(r.start, r.len()));
            out[r.start] = a.dot(&b);
            for k in 1..r.len() {
                out[r.start + k] = a[0] * b[k] + b[0] * a[k];
            }
        }
        out
    }

    /// Solves `λ ∘ x = v` for `x`.
    fn divide(&self, lam: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.nonneg {
            out[i] = v[i] / lam[i];
        }
        for r in self.soc_ranges() {
            let l = lam.rows(r.start, r.len());
            let w = v.rows(r.start, r.len());
            let l0 = l[0];
            let l1 = l.rows(1, r.len() - 1);
            let w1 = w.rows(1, r.len() - 1);
            let det = l0 * l0 - l1.norm_squared();
            let dot = l1.dot(&w1);
            let x0 = (l0 * w[0] - dot) / det;
            out[r.start] = x0;
            for k in 1..r.len() {
                out[r.start + k] = (w1[k - 1] - x0 * l1[k - 1]) / l0;
            }
        }
        out
    }

    /// Largest `α ≥ 0` keeping `x + α d` in the cone, capped at `cap`.
    fn max_step(&self, x: &DVector<f64>, d: &DVector<f64>, cap: f64) -> f64 {
        let mut alpha = cap;
        for i in 0..self.nonneg {
            if d[i] < 0.0 {
                alpha = alpha.min(-x[i] / d[i]);
            }
        }
        for r in self.soc_ranges() {
            let (x0, d0) = (x[r.start], d[r.start]);
            let x1 = x.rows(r.start + 1, r.len() - 1);
            let d1 = d.rows(r.start + 1, r.len() - 1);
            let a = d0 * d0 - d1.norm_squared();
            let b = x0 * d0 - x1.dot(&d1);
            let c = (x0 * x0 - x1.norm_squared()).max(0.0);
            alpha = alpha.min(first_positive_root(a, b, c));
        }
        alpha
    }

    fn scaling(&self, s: &DVector<f64>, z: &DVector<f64>) -> Scaling {
        let nonneg = (0..self.nonneg).map(|i| (s[i] / z[i]).sqrt()).collect();
        let soc = self
            .soc_ranges()
            .map(|r| soc_scaling(&s.rows(r.start, r.len()).into_owned(), &z.rows(r.start, r.len()).into_owned()))
            .collect();
        Scaling { nonneg, soc }
    }
}

/// Smallest positive root of `a α² + 2 b α + c` with `c ≥ 0`, or infinity.
fn first_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let mut best = f64::INFINITY;
    if a.abs() < 1e-300 {
        if b < 0.0 {
            best = -c / (2.0 * b);
        }
        return best;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return best;
    }
    let sq = disc.sqrt();
    let q = -(b + b.signum() * sq);
    for root in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
        if root > 0.0 && root < best {
            best = root;
        }
    }
    best
}

fn soc_scaling(s: &DVector<f64>, z: &DVector<f64>) -> SocScale {
    let jdot = |v: &DVector<f64>| v[0] * v[0] - v.rows(1, v.len() - 1).norm_squared();
    let sn = jdot(s).max(1e-300).sqrt();
    let zn = jdot(z).max(1e-300).sqrt();
    let sb = s / sn;
    let zb = z / zn;
    let gamma = ((1.0 + sb.dot(&zb)) / 2.0).sqrt();
    let mut w = &sb + {
        let mut jz = zb.clone();
        jz.rows_mut(1, jz.len() - 1).neg_mut();
        jz
    };
    w /= 2.0 * gamma;
    SocScale {
        eta: (sn / zn).sqrt(),
        w,
    }
}

impl SocScale {
    fn matrix(&self, inverse: bool) -> DMatrix<f64> {
        let d = self.w.len();
        let w0 = self.w[0];
        let w1 = self.w.rows(1, d - 1);
        let sign = if inverse { -1.0 } else { 1.0 };
        let mut m = DMatrix::zeros(d, d);
        m[(0, 0)] = w0;
        for k in 1..d {
            m[(0, k)] = sign * w1[k - 1];
            m[(k, 0)] = sign * w1[k - 1];
        }
        let outer = w1 * w1.transpose() / (1.0 + w0);
        for i in 1..d {
            for j in 1..d {
                m[(i, j)] = outer[(i - 1, j - 1)] + if i == j { 1.0 } else { 0.0 };
            }
        }
        if inverse {
            m / self.eta
        } else {
            m * self.eta
        }
    }
}

impl Scaling {
    fn apply(&self, cone: &Cone, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..cone.nonneg {
            out[i] = if inverse { v[i] / self.nonneg[i] } else { v[i] * self.nonneg[i] };
        }
        for (sc, r) in self.soc.iter().zip(cone.soc_ranges()) {
            let block = sc.matrix(inverse) * v.rows(r.start, r.len());
            out.rows_mut(r.start, r.len()).copy_from(&block);
        }
        out
    }

    /// `W²` as a dense block-diagonal matrix.
    fn squared(&self, cone: &Cone) -> DMatrix<f64> {
        let m = cone.dim();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..cone.nonneg {
            out[(i, i)] = self.nonneg[i] * self.nonneg[i];
        }
        for (sc, r) in self.soc.iter().zip(cone.soc_ranges()) {
            let w = sc.matrix(false);
            out.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&(&w * &w));
        }
        out
    }
}

struct Data {
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    cone: Cone,
}

impl Data {
    fn from_form(form: &StandardForm) -> Self {
        let ConeLayout { zero, nonneg, ref soc } = form.cones;
        let n = form.n;
        let m = form.rows() - zero;
        let mut a = DMatrix::zeros(zero, n);
        let mut g = DMatrix::zeros(m, n);
        for &(r, c, v) in &form.a {
            if r < zero {
                a[(r, c)] += v;
            } else {
                g[(r - zero, c)] += v;
            }
        }
        Self {
            c: DVector::from_column_slice(&form.c),
            a,
            b: DVector::from_column_slice(&form.b[..zero]),
            g,
            h: DVector::from_column_slice(&form.b[zero..]),
            cone: Cone {
                nonneg,
                soc: soc.clone(),
            },
        }
    }
}

/// KKT operator `[[δI, Aᵀ, Gᵀ], [A, −δI, 0], [G, 0, −W²]]` with iterative
/// refinement against the unregularized matrix.
struct Kkt {
    exact: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Kkt {
    fn new(d: &Data, w2: &DMatrix<f64>) -> Self {
        let (n, p, m) = (d.c.len(), d.b.len(), d.h.len());
        let dim = n + p + m;
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, n), (n, p)).copy_from(&d.a.transpose());
        k.view_mut((0, n + p), (n, m)).copy_from(&d.g.transpose());
        k.view_mut((n, 0), (p, n)).copy_from(&d.a);
        k.view_mut((n + p, 0), (m, n)).copy_from(&d.g);
        k.view_mut((n + p, n + p), (m, m)).copy_from(&(-w2));
        let mut reg = k.clone();
        let delta = 1e-11;
        for i in 0..n {
            reg[(i, i)] += delta;
        }
        for i in n..n + p {
            reg[(i, i)] -= delta;
        }
        Self { exact: k, lu: reg.lu() }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.lu.solve(rhs)?;
        for _ in 0..8 {
            let r = rhs - &self.exact * &x;
            if r.amax() <= 1e-14 * rhs.amax().max(1.0) {
                break;
            }
            x += self.lu.solve(&r)?;
        }
        if x.iter().all(|v| v.is_finite()) {
            Some(x)
        } else {
            None
        }
    }
}

struct Direction {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

impl ConicBackend for DenseIpm {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn solve(&self, form: &StandardForm, settings: &SolverSettings) -> ConicSolution {
        let d = Data::from_form(form);
        let (n, p, m) = (d.c.len(), d.b.len(), d.h.len());
        let cone = &d.cone;
        let deg = cone.degree() as f64;

        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(p);
        let mut s = cone.identity();
        let mut z = cone.identity();
        let (mut tau, mut kappa) = (1.0_f64, 1.0_f64);

        let bn = d.b.norm().max(d.h.norm()).max(1.0);
        let cn = d.c.norm().max(1.0);

        for iter in 0..settings.max_iters {
            let r1 = d.a.tr_mul(&y) + d.g.tr_mul(&z) + &d.c * tau;
            let r2 = -(&d.a * &x) + &d.b * tau;
            let r3 = -(&d.g * &x) + &d.h * tau - &s;
            let ctx = d.c.dot(&x);
            let byhz = d.b.dot(&y) + d.h.dot(&z);
            let r4 = -ctx - byhz - kappa;
            let mu = (s.dot(&z) + tau * kappa) / (deg + 1.0);

            // Termination on the de-homogenized iterate.
            let pres = r2.norm().max(r3.norm()) / tau / bn;
            let dres = r1.norm() / tau / cn;
            let pcost = ctx / tau;
            let dcost = -byhz / tau;
            let gap = s.dot(&z) / (tau * tau);
            let rel_gap = gap / pcost.abs().min(dcost.abs()).max(1.0);
            if pres < settings.feas_tol && dres < settings.feas_tol && (gap < settings.gap_tol || rel_gap < settings.gap_tol) {
                return ConicSolution {
                    status: ConicStatus::Optimal,
                    x: (&x / tau).data.into(),
                    objective: pcost,
                    iterations: iter,
                    primal_residual: pres,
                    dual_residual: dres,
                    message: "dense ipm converged".into(),
                };
            }
            if byhz < 0.0 {
                let t = -byhz;
                if (d.a.tr_mul(&y) + d.g.tr_mul(&z)).norm() / t < settings.feas_tol * cn {
                    return ConicSolution::failed(ConicStatus::Infeasible, n, iter, "dense ipm: primal infeasibility certificate");
                }
            }
            if ctx < 0.0 {
                let t = -ctx;
                let ax = (&d.a * &x).norm();
                let gxs = (&d.g * &x + &s).norm();
                if ax.max(gxs) / t < settings.feas_tol * bn {
                    return ConicSolution::failed(ConicStatus::Unbounded, n, iter, "dense ipm: dual infeasibility certificate");
                }
            }

            let w = cone.scaling(&s, &z);
            let lam = w.apply(cone, &z, false);
            let kkt = Kkt::new(&d, &w.squared(cone));
            let mut rhs1 = DVector::zeros(n + p + m);
            rhs1.rows_mut(0, n).copy_from(&(-&d.c));
            rhs1.rows_mut(n, p).copy_from(&d.b);
            rhs1.rows_mut(n + p, m).copy_from(&d.h);
            let Some(u1) = kkt.solve(&rhs1) else {
                return ConicSolution::failed(ConicStatus::NumericalFailure, n, iter, "dense ipm: singular KKT system");
            };
            let (x1, y1, z1) = (u1.rows(0, n), u1.rows(n, p), u1.rows(n + p, m));
            let denom_base = d.c.dot(&x1) + d.b.dot(&y1) + d.h.dot(&z1);

            let direction = |eta: f64, ds: &DVector<f64>, dk: f64| -> Option<Direction> {
                let q = cone.divide(&lam, ds);
                let wq = w.apply(cone, &q, false);
                let mut rhs2 = DVector::zeros(n + p + m);
                rhs2.rows_mut(0, n).copy_from(&(-eta * &r1));
                rhs2.rows_mut(n, p).copy_from(&(eta * &r2));
                rhs2.rows_mut(n + p, m).copy_from(&(eta * &r3 + &wq));
                let u2 = kkt.solve(&rhs2)?;
                let (x2, y2, z2) = (u2.rows(0, n), u2.rows(n, p), u2.rows(n + p, m));
                let dtau = (-eta * r4 + d.c.dot(&x2) + d.b.dot(&y2) + d.h.dot(&z2) - dk / tau) / (kappa / tau - denom_base);
                let u = &u2 + &u1 * dtau;
                let dz = u.rows(n + p, m).into_owned();
                // From the linearized conic rows: −G dx + h dτ − ds = −η r₃.
                let dx = u.rows(0, n).into_owned();
                let dsv = -(&d.g * &dx) + &d.h * dtau + eta * &r3;
                Some(Direction {
                    x: dx,
                    y: u.rows(n, p).into_owned(),
                    z: dz,
                    s: dsv,
                    tau: dtau,
                    kappa: -(dk + kappa * dtau) / tau,
                })
            };
            let step = |dir: &Direction| -> f64 {
                let mut a = cone.max_step(&s, &dir.s, f64::INFINITY).min(cone.max_step(&z, &dir.z, f64::INFINITY));
                if dir.tau < 0.0 {
                    a = a.min(-tau / dir.tau);
                }
                if dir.kappa < 0.0 {
                    a = a.min(-kappa / dir.kappa);
                }
                a
            };

            let ds_aff = cone.product(&lam, &lam);
            let Some(aff) = direction(1.0, &ds_aff, tau * kappa) else {
                return ConicSolution::failed(ConicStatus::NumericalFailure, n, iter, "dense ipm: affine step failed");
            };
            let alpha_aff = step(&aff).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3);

            let ws = w.apply(cone, &aff.s, true);
            let wz = w.apply(cone, &aff.z, false);
            let ds_cc = &ds_aff + cone.product(&ws, &wz) - cone.identity() * (sigma * mu);
            let dk_cc = tau * kappa + aff.tau * aff.kappa - sigma * mu;
            let Some(dir) = direction(1.0 - sigma, &ds_cc, dk_cc) else {
                return ConicSolution::failed(ConicStatus::NumericalFailure, n, iter, "dense ipm: corrector step failed");
            };
            let alpha = (0.99 * step(&dir)).min(1.0);
            x += &dir.x * alpha;
            y += &dir.y * alpha;
            z += &dir.z * alpha;
            s += &dir.s * alpha;
            tau += dir.tau * alpha;
            kappa += dir.kappa * alpha;
            if settings.verbose {
                log::debug!("dense ipm {iter}: pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} step {alpha:.3}");
            }
            if !(tau.is_finite() && kappa.is_finite()) || alpha < 1e-12 {
                return ConicSolution::failed(ConicStatus::NumericalFailure, n, iter, "dense ipm: stalled");
            }
        }
        ConicSolution::failed(ConicStatus::NumericalFailure, n, settings.max_iters, "dense ipm: iteration limit")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nt_scaling_maps_z_to_winv_s() {
        let s = DVector::from_vec(vec![3.0, 1.0, -0.5, 0.7]);
        let z = DVector::from_vec(vec![2.0, -0.3, 0.9, 0.1]);
        let sc = soc_scaling(&s, &z);
        let wz = sc.matrix(false) * &z;
        let winv_s = sc.matrix(true) * &s;
        assert!((wz - winv_s).norm() < 1e-12);
        let id = sc.matrix(false) * sc.matrix(true);
        assert!((id - DMatrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn jordan_division_inverts_product() {
        let cone = Cone { nonneg: 2, soc: vec![3] };
        let lam = DVector::from_vec(vec![1.5, 0.5, 2.0, 0.3, -0.4]);
        let v = DVector::from_vec(vec![0.2, -1.0, 0.7, 0.1, 0.5]);
        let x = cone.divide(&lam, &v);
        assert!((cone.product(&lam, &x) - v).norm() < 1e-12);
    }

    #[test]
    fn max_step_hits_boundary() {
        let cone = Cone { nonneg: 1, soc: vec![2] };
        let x = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let d = DVector::from_vec(vec![0.0, -1.0, 1.0]);
        // (1 - α) = α  →  α = 0.5
        assert!((cone.max_step(&x, &d, f64::INFINITY) - 0.5).abs() < 1e-14);
        let d = DVector::from_vec(vec![-2.0, 1.0, 0.0]);
        assert!((cone.max_step(&x, &d, f64::INFINITY) - 0.5).abs() < 1e-14);
    }
}
