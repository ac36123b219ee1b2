use proptest::prelude::*;
use rand::Rng;
use scatterbrain::genmodel::{
    generate_clustered, generate_separation, ClusterModel, SeparationSpec, SeparationVariant,
};
use scatterbrain::oracles::{
    budgeted_sl_decomposition, lowrank_error, robust_pca, taylor_degree_for, taylor_lowrank,
    topk_error, topk_sparse, truncated_svd, RpcaParams,
};
use scatterbrain::rng;
use scatterbrain::Matrix;

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations.
fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Smallest per-row error over every `k`-subset of kept columns.
fn brute_topk_error(m: &Matrix, k: usize) -> f64 {
    let cols = m.cols();
    let mut total = 0.0;
    for i in 0..m.rows() {
        let row = m.row(i);
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << cols) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let dropped: f64 = (0..cols)
                .filter(|&j| mask & (1 << j) == 0)
                .map(|j| row[j] * row[j])
                .sum();
            best = best.min(dropped);
        }
        total += best;
    }
    total.sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn topk_matches_exhaustive_search(rows in 1usize..=8, cols in 1usize..=8, k in 0usize..=3, seed in any::<u64>()) {
        let k = k.min(cols);
        let m: Matrix = rng::gaussian_matrix(rows, cols, &mut rng::stream(seed, 0));
        let got = topk_error(&m, k).unwrap();
        prop_assert!((got - brute_topk_error(&m, k)).abs() < 1e-12);
        prop_assert!(topk_sparse(&m, k).unwrap().max_row_nnz() <= k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn svd_error_falls_with_rank(rows in 1usize..14, cols in 1usize..14, seed in any::<u64>()) {
        let m: Matrix = rng::gaussian_matrix(rows, cols, &mut rng::stream(seed, 0));
        let full = rows.min(cols);
        let errors: Vec<f64> = (0..=full).map(|r| lowrank_error(&m, r).unwrap()).collect();
        prop_assert!(errors.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(errors[full] <= 1e-10);
        let svd = truncated_svd(&m, full).unwrap();
        prop_assert!(svd.sigma.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(svd.sigma.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn taylor_degree_rule_meets_tolerance(n in 1usize..12, d in 1usize..6, beta in 0.0f64..=2.0, seed in any::<u64>()) {
        let mut q: Matrix = rng::gaussian_matrix(n, d, &mut rng::stream(seed, 0));
        for i in 0..n {
            let len = q.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            q.row_mut(i).iter_mut().for_each(|x| *x /= len);
        }
        let a = q.matmul_t(&q).unwrap();
        let eps = 1e-3;
        let degree = taylor_degree_for(eps, beta * a.max_abs());
        let approx = taylor_lowrank(&q, beta, degree).unwrap();
        let exact = a.map(|x| (beta * x).exp());
        prop_assert!(approx.matrix.sub(&exact).unwrap().max_abs() <= eps);
    }
}

#[test]
fn svd_error_matches_independent_eigensolver() {
    for seed in 0..10u64 {
        let m: Matrix = rng::gaussian_matrix(12, 12, &mut rng::stream(seed, 0));
        let ev = symmetric_eigenvalues(&m.t_matmul(&m).unwrap());
        for r in [1, 3, 6, 11] {
            let tail: f64 = ev[r..].iter().map(|&x| x.max(0.0)).sum();
            let got = lowrank_error(&m, r).unwrap();
            assert!(
                (got - tail.sqrt()).abs() < 1e-8,
                "seed {seed} r {r}: {got} vs {}",
                tail.sqrt()
            );
        }
    }
}

fn planted(seed: u64) -> (Matrix, Matrix) {
    let n = 100;
    let mut g = rng::stream(seed, 0);
    let u: Matrix = rng::gaussian_matrix(n, 2, &mut g);
    let v: Matrix = rng::gaussian_matrix(n, 2, &mut g);
    let low = u.matmul_t(&v).unwrap();
    let mut m = low.clone();
    for x in m.as_mut_slice() {
        if g.random::<f64>() < 0.05 {
            *x += if g.random::<bool>() { 5.0 } else { -5.0 };
        }
    }
    (low, m)
}

#[test]
fn robust_pca_recovers_planted_rank_two() {
    for seed in 0..10 {
        let (low, m) = planted(seed);
        let r = robust_pca(&m, RpcaParams::default()).unwrap();
        assert!(r.converged && r.iterations <= 1000);
        assert!(r.primal_residual < 1e-7);
        let rel = r.l.sub(&low).unwrap().frobenius_norm() / low.frobenius_norm();
        assert!(rel < 1e-3, "seed {seed}: {rel}");
        assert_eq!(r.rank, 2);
    }
}

#[test]
fn robust_pca_reports_rank_and_support_of_its_parts() {
    let model = ClusterModel {
        n: 64,
        d: 16,
        clusters: 16,
        delta: 0.1,
        beta: 2.0,
        seed: 3,
    };
    let m = generate_clustered(&model).unwrap().m_beta;
    let r = robust_pca(&m, RpcaParams::default()).unwrap();
    assert!(r.converged);
    let residual = m.sub(&r.l).unwrap().sub(&r.s).unwrap().frobenius_norm() / m.frobenius_norm();
    assert!((residual - r.primal_residual).abs() < 1e-12);
    assert_eq!(r.nnz, r.s.as_slice().iter().filter(|x| **x != 0.0).count());
    let sigma = truncated_svd(&r.l, 64).unwrap().sigma;
    let numeric_rank = sigma.iter().filter(|&&x| x > 1e-9 * sigma[0]).count();
    assert_eq!(numeric_rank, r.rank);
}

#[test]
fn alternation_separates_example_one() {
    let spec = SeparationSpec {
        variant: SeparationVariant::Example1,
        n: 64,
        epsilon: 0.1,
        gamma: None,
        seed: 9,
    };
    let m = generate_separation(&spec).unwrap().m;
    // one diagonal entry plus a rank-1 pair: 3 numbers per row
    let combined = budgeted_sl_decomposition(&m, 1, 1).unwrap();
    let sparse = topk_error(&m, 3).unwrap();
    let lowrank = lowrank_error(&m, 1).unwrap();
    assert!(combined.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(
        combined.error < 0.5 * sparse.min(lowrank),
        "{} vs {sparse} / {lowrank}",
        combined.error
    );
}
