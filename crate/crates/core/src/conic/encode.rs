//! Epigraph encodings of the penalty and cost terms used by the subproblem.

use nalgebra::DMatrix;

use super::{AffineExpr, ConicProgram, LinearRow, SocConstraint};

/// Adds `weight·Σ|x_j|` through epigraph variables `t_j ≥ ±x_j`.
/// Returns the epigraph indices; nothing is added when `weight == 0`.
pub fn encode_l1_penalty(p: &mut ConicProgram, vars: &[usize], weight: f64) -> Vec<usize> {
    debug_assert!(weight >= 0.0);
    if weight == 0.0 || vars.is_empty() {
        return Vec::new();
    }
    let t = p.add_block("l1_epi", vars.len());
    for (k, &v) in vars.iter().enumerate() {
        let tk = t.index(k);
        p.add_le(LinearRow::new(vec![(v, 1.0), (tk, -1.0)], 0.0));
        p.add_le(LinearRow::new(vec![(v, -1.0), (tk, -1.0)], 0.0));
        p.add_objective(tk, weight);
    }
    t.indices().collect()
}

/// Adds `weight·max(0, x)` through `t ≥ x, t ≥ 0`.
pub fn encode_positive_part(p: &mut ConicProgram, var: usize, weight: f64) -> Option<usize> {
    debug_assert!(weight >= 0.0);
    if weight == 0.0 {
        return None;
    }
    let t = p.add_var("pos_epi");
    p.add_le(LinearRow::new(vec![(var, 1.0), (t, -1.0)], 0.0));
    p.add_le(LinearRow::new(vec![(t, -1.0)], 0.0));
    p.add_objective(t, weight);
    Some(t)
}

/// Constrains `‖ξ‖² ≤ r` as `‖(2ξ, r − 1)‖ ≤ r + 1` (which also forces
/// `r ≥ 0`) and adds `weight·r` to the objective.
pub fn encode_trust_region(p: &mut ConicProgram, xi: &[usize], r: usize, weight: f64) {
    let mut u: Vec<AffineExpr> = xi.iter().map(|&i| AffineExpr::term(i, 2.0)).collect();
    u.push(AffineExpr::var(r).plus_constant(-1.0));
    p.add_soc(SocConstraint {
        t: AffineExpr::var(r).plus_constant(1.0),
        u,
    });
    if weight != 0.0 {
        p.add_objective(r, weight);
    }
}

/// Adds `weight·‖F (z + offset)‖²` for `z = x[vars]` through an epigraph
/// variable `t` with `‖(2F(z + offset), t − 1)‖ ≤ t + 1`.
pub fn encode_quadratic(
    p: &mut ConicProgram,
    f: &DMatrix<f64>,
    vars: &[usize],
    offset: &[f64],
    weight: f64,
) -> Option<usize> {
    assert_eq!(f.ncols(), vars.len());
    assert_eq!(offset.len(), vars.len());
    if weight == 0.0 || f.nrows() == 0 || f.iter().all(|v| *v == 0.0) {
        return None;
    }
    let t = p.add_var("quad_epi");
    let mut u = Vec::with_capacity(f.nrows() + 1);
    for r in 0..f.nrows() {
        let mut e = AffineExpr::default();
        for (c, &v) in vars.iter().enumerate() {
            let a = f[(r, c)];
            if a != 0.0 {
                e.terms.push((v, 2.0 * a));
                e.constant += 2.0 * a * offset[c];
            }
        }
        u.push(e);
    }
    u.push(AffineExpr::var(t).plus_constant(-1.0));
    p.add_soc(SocConstraint {
        t: AffineExpr::var(t).plus_constant(1.0),
        u,
    });
    p.add_objective(t, weight);
    Some(t)
}

/// Returns `F` with `FᵀF = H` for a symmetric positive semidefinite `H`;
/// negative eigenvalues within `tol·max|λ|` are clipped to zero.
pub fn psd_factor(h: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = h.nrows();
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut rows = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -tol * scale.max(1.0) {
            return None;
        }
        if lam > tol * scale {
            rows.push(eig.eigenvectors.column(k).transpose() * lam.sqrt());
        }
    }
    if rows.is_empty() {
        return Some(DMatrix::zeros(0, n));
    }
    Some(DMatrix::from_rows(&rows))
}

#[cfg(test)]
mod tests {
    use super::super::{solve, Backend, ConicStatus, SolverSettings};
    use super::*;
    use proptest::prelude::*;

    fn fix(p: &mut ConicProgram, var: usize, value: f64) {
        p.add_eq(LinearRow::new(vec![(var, 1.0)], value));
    }

    fn optimum(p: &ConicProgram) -> f64 {
        let sol = solve(p, &SolverSettings::default());
        assert_eq!(sol.status, ConicStatus::Optimal, "{}", sol.message);
        sol.objective
    }

    #[test]
    fn l1_of_fixed_vector() {
        let mut p = ConicProgram::new();
        let nu = p.add_block("nu", 2);
        fix(&mut p, nu.index(0), 3.0);
        fix(&mut p, nu.index(1), -4.0);
        let t = encode_l1_penalty(&mut p, &nu.indices().collect::<Vec<_>>(), 1.0);
        assert_eq!(t.len(), 2);
        // LP oracle: with ν fixed, the epigraph LP decouples into min t s.t. t ≥ |ν_j|.
        let oracle: f64 = [3.0_f64, -4.0].iter().map(|v| v.abs()).sum();
        assert!((optimum(&p) - oracle).abs() < 1e-7);
    }

    #[test]
    fn l1_weight_zero_adds_nothing() {
        let mut p = ConicProgram::new();
        let nu = p.add_block("nu", 3);
        assert!(encode_l1_penalty(&mut p, &nu.indices().collect::<Vec<_>>(), 0.0).is_empty());
        assert_eq!(p.num_vars(), 3);
        assert!(p.inequalities.is_empty());
    }

    #[test]
    fn l1_zero_is_free() {
        let mut p = ConicProgram::new();
        let nu = p.add_block("nu", 2);
        encode_l1_penalty(&mut p, &nu.indices().collect::<Vec<_>>(), 5.0);
        assert!(optimum(&p).abs() < 1e-7);
    }

    #[test]
    fn positive_part_examples() {
        for (s, w, expect) in [(-2.0, 1.0, 0.0), (2.0, 0.1, 0.2)] {
            let mut p = ConicProgram::new();
            let v = p.add_var("s");
            fix(&mut p, v, s);
            encode_positive_part(&mut p, v, w);
            assert!((optimum(&p) - expect).abs() < 1e-7, "s={s}");
        }
        let mut p = ConicProgram::new();
        let v = p.add_var("s");
        p.add_le(LinearRow::new(vec![(v, -1.0)], 0.5)); // s ≥ -0.5
        let t = encode_positive_part(&mut p, v, 1.0).unwrap();
        let sol = solve(&p, &SolverSettings::default());
        assert!(sol.x[t].abs() < 1e-7);
    }

    #[test]
    fn trust_region_examples() {
        for (xi, expect) in [([0.0; 3], 0.0), ([1.0; 3], 3.0)] {
            let mut p = ConicProgram::new();
            let x = p.add_block("xi", 3);
            let r = p.add_var("r");
            for k in 0..3 {
                fix(&mut p, x.index(k), xi[k]);
            }
            encode_trust_region(&mut p, &x.indices().collect::<Vec<_>>(), r, 1.0);
            let sol = solve(&p, &SolverSettings::default());
            assert!((sol.x[r] - expect).abs() < 1e-7, "{:?}", sol.x);
        }
    }

    #[test]
    fn trust_region_tracks_square_at_optimum() {
        // min 1e-2·r - ξ with ‖ξ‖² ≤ r: optimum ξ = 50, r = 2500.
        let mut p = ConicProgram::new();
        let x = p.add_var("xi");
        let r = p.add_var("r");
        encode_trust_region(&mut p, &[x], r, 1e-2);
        p.add_objective(x, -1.0);
        let sol = solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, ConicStatus::Optimal);
        let xi = sol.x[x];
        assert!((sol.x[r] - xi * xi).abs() <= 1e-6 * sol.x[r].max(1.0));
        assert!((xi - 50.0).abs() < 1e-2);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let h = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        let f = psd_factor(&h, 1e-12).unwrap();
        assert_eq!(f.nrows(), 2);
        assert!((f.transpose() * &f - &h).norm() < 1e-12);
        let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(psd_factor(&neg, 1e-12).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        // With the original variables fixed, the minimal epigraph objective
        // equals the closed-form penalty evaluated term by term.
        #[test]
        fn encoding_soundness(
            nu in proptest::collection::vec(-5.0..5.0f64, 1..4),
            s in -3.0..3.0f64,
            xi in proptest::collection::vec(-2.0..2.0f64, 1..4),
            mu_nu in 0.0..10.0f64,
            mu_s in 0.0..1.0f64,
            mu_r in 0.001..1.0f64,
            dense in any::<bool>(),
        ) {
            let mut p = ConicProgram::new();
            let nb = p.add_block("nu", nu.len());
            let sv = p.add_var("s");
            let xb = p.add_block("xi", xi.len());
            let r = p.add_var("r");
            for (k, v) in nu.iter().enumerate() { fix(&mut p, nb.index(k), *v); }
            fix(&mut p, sv, s);
            for (k, v) in xi.iter().enumerate() { fix(&mut p, xb.index(k), *v); }
            encode_l1_penalty(&mut p, &nb.indices().collect::<Vec<_>>(), mu_nu);
            encode_positive_part(&mut p, sv, mu_s);
            encode_trust_region(&mut p, &xb.indices().collect::<Vec<_>>(), r, mu_r);
            let settings = SolverSettings {
                backend: if dense { Backend::Dense } else { Backend::Clarabel },
                ..SolverSettings::default()
            };
            let sol = solve(&p, &settings);
            prop_assert_eq!(sol.status, ConicStatus::Optimal);
            let oracle = mu_nu * nu.iter().map(|v| v.abs()).sum::<f64>()
                + mu_s * s.max(0.0)
                + mu_r * xi.iter().map(|v| v * v).sum::<f64>();
            prop_assert!((sol.objective - oracle).abs() < 1e-6 * oracle.max(1.0),
                "objective {} oracle {}", sol.objective, oracle);
        }
    }
}
