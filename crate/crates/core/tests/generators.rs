use scatterbrain::approx::BudgetConfig;
use scatterbrain::genmodel::{
    generate_clustered, generate_separation, regime_sweep, threshold_support, ClusterModel,
    SeparationSpec, SeparationVariant,
};
use scatterbrain::lsh::{build_support, HashFamily};
use scatterbrain::oracles::lowrank_error;

fn model(n: usize, d: usize, clusters: usize, delta: f64, seed: u64) -> ClusterModel {
    ClusterModel {
        n,
        d,
        clusters,
        delta,
        beta: 1.0,
        seed,
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

#[test]
fn intra_cluster_products_dominate() {
    for seed in 0..20 {
        let s = generate_clustered(&model(200, 64, 50, 0.1, seed)).unwrap();
        let (mut intra, mut inter) = (Vec::new(), Vec::new());
        for i in 0..200 {
            for j in 0..i {
                let bucket = if s.labels[i] == s.labels[j] {
                    &mut intra
                } else {
                    &mut inter
                };
                bucket.push(s.a[(i, j)]);
            }
        }
        assert!(median(intra) > median(inter), "seed {seed}");
    }
}

/// ‖z‖² also fluctuates by about √(2/d) around 1 through the centers, so
/// the dimension is kept large enough for that term to sit inside the band.
#[test]
fn row_norms_concentrate() {
    for delta in [0.05, 0.1, 0.2] {
        for seed in 0..5 {
            let s = generate_clustered(&model(200, 256, 40, delta, seed)).unwrap();
            let inside = (0..200)
                .filter(|&i| {
                    let sq: f64 = s.q.row(i).iter().map(|x| x * x).sum();
                    (sq - 1.0).abs() <= 5.0 * delta
                })
                .count();
            assert!(
                inside as f64 >= 0.95 * 200.0,
                "delta {delta} seed {seed}: {inside}"
            );
        }
    }
}

#[test]
fn large_entries_stay_inside_clusters() {
    for seed in 0..20 {
        for delta in [0.02, 0.05] {
            let s = generate_clustered(&model(200, 64, 50, delta, seed)).unwrap();
            let h = threshold_support(&s.a, delta);
            assert!(!h.is_empty());
            for &(i, j) in h.pairs() {
                assert_eq!(
                    s.labels[i as usize], s.labels[j as usize],
                    "seed {seed} delta {delta}"
                );
            }
        }
    }
}

#[test]
fn hashing_prefers_intra_cluster_pairs() {
    for seed in 0..20 {
        let s = generate_clustered(&model(200, 32, 40, 0.1, seed)).unwrap();
        let family = HashFamily::<f64>::new(32, 2, seed).unwrap();
        let support = build_support(&family, &s.q, &s.q, false, None).unwrap();
        let (mut hit_intra, mut hit_inter, mut intra, mut inter) = (0usize, 0usize, 0usize, 0usize);
        for i in 0..200 {
            for j in 0..200 {
                let same = s.labels[i] == s.labels[j];
                let hit = support.contains(i, j) as usize;
                if same {
                    intra += 1;
                    hit_intra += hit;
                } else {
                    inter += 1;
                    hit_inter += hit;
                }
            }
        }
        assert!(
            hit_intra as f64 / intra as f64 > hit_inter as f64 / inter as f64,
            "seed {seed}"
        );
    }
}

#[test]
fn example_one_is_symmetric() {
    for seed in 0..5 {
        let s = generate_separation(&SeparationSpec {
            variant: SeparationVariant::Example1,
            n: 48,
            epsilon: 0.3,
            gamma: None,
            seed,
        })
        .unwrap();
        assert_eq!(s.m, s.m.transpose());
        assert!(s.error <= 0.09 * 48.0);
    }
}

#[test]
fn example_two_defeats_half_rank_svd() {
    let n = 64;
    let s = generate_separation(&SeparationSpec {
        variant: SeparationVariant::Example2 { r: (n as f64).ln() },
        n,
        epsilon: 0.25,
        gamma: None,
        seed: 1,
    })
    .unwrap();
    for i in 0..n {
        assert_eq!(s.m[(i, i)], (n as f64).ln().exp());
    }
    let svd_error = lowrank_error(&s.m, n / 2).unwrap();
    assert!(svd_error >= 10.0 * s.error, "{svd_error} vs {}", s.error);
}

#[test]
fn regime_sweep_extremes_order_the_methods() {
    let template = ClusterModel {
        n: 256,
        d: 48,
        clusters: 64,
        delta: 0.1,
        beta: 0.0,
        seed: 4,
    };
    let ln = 256f64.ln();
    let betas = [0.1 * ln, 2.0 * ln];
    let rows = regime_sweep(
        &template,
        &betas,
        BudgetConfig::new(1.0 / 32.0, 3.0).unwrap(),
    )
    .unwrap();
    let err = |beta: f64, method: &str| {
        rows.iter()
            .find(|r| r.beta == beta && r.method == method)
            .unwrap()
            .rel_error
    };
    assert!(err(betas[0], "lowrank") < err(betas[0], "sparse"));
    assert!(err(betas[1], "sparse") < err(betas[1], "lowrank"));
}
