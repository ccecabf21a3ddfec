mod common;

use geoscvx::collocation::RadauSegment;
use proptest::prelude::*;

#[test]
fn nodes_diff_and_weights_match_independent_construction() {
    for p in 1..=14 {
        let seg = RadauSegment::new(p).unwrap();
        let nodes = common::radau_nodes(p);
        for (a, b) in seg.nodes.iter().zip(&nodes) {
            assert!((a - b).abs() < 1e-13, "p={p} node {a} vs {b}");
        }
        let d = common::radau_diff(p);
        let scale = d.amax();
        assert!((&seg.diff - &d).amax() < 1e-9 * scale, "p={p} diff {:e}", (&seg.diff - &d).amax());
        for (a, b) in seg.weights.iter().zip(common::radau_weights(p)) {
            assert!((a - b).abs() < 1e-11, "p={p} weight {a} vs {b}");
        }
        assert!((seg.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}

#[test]
fn differentiation_exact_through_degree_p() {
    for p in 1..=16 {
        let seg = RadauSegment::new(p).unwrap();
        for k in 0..=p as u32 {
            let err = seg.diff_exactness_check(k);
            assert!(err <= 1e-10 * (p * p) as f64, "p={p} k={k} err={err:e}");
        }
    }
}

fn exp_residual(p: usize) -> f64 {
    let seg = RadauSegment::new(p).unwrap();
    let x: Vec<f64> = seg.nodes.iter().map(|t| t.exp()).collect();
    (0..p)
        .map(|r| {
            let dx: f64 = (0..=p).map(|k| seg.diff[(r, k)] * x[k]).sum();
            (dx - seg.nodes[r + 1].exp()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn exponential_residual_decays_spectrally() {
    let (r4, r8) = (exp_residual(4), exp_residual(8));
    assert!(r4 / r8 > 1e3, "p=4 {r4:e}, p=8 {r8:e}");
}

#[test]
fn quadrature_exact_through_degree_2p_minus_2() {
    for p in 1..=14 {
        let seg = RadauSegment::new(p).unwrap();
        for k in 0..=(2 * p - 2) {
            let vals: Vec<f64> = seg.collocation_nodes().iter().map(|t| t.powi(k as i32)).collect();
            let exact = if k % 2 == 0 { 2.0 / (k + 1) as f64 } else { 0.0 };
            let q = seg.quadrature(&vals).unwrap();
            assert!((q - exact).abs() < 1e-12, "p={p} k={k} {q} vs {exact}");
        }
    }
}

proptest! {
    #[test]
    fn interpolation_reproduces_polynomials(p in 2usize..12, coeffs in proptest::collection::vec(-2.0..2.0f64, 12), tau in -1.0..1.0f64) {
        let seg = RadauSegment::new(p).unwrap();
        let poly = |t: f64| coeffs[..=p].iter().rev().fold(0.0, |acc, c| acc * t + c);
        let vals: Vec<f64> = seg.nodes.iter().map(|&t| poly(t)).collect();
        prop_assert!((seg.lagrange_eval(&vals, tau) - poly(tau)).abs() < 1e-10);
    }
}
