use proptest::prelude::*;
use scatterbrain::approx::{run_scatterbrain, ScatterbrainOptions};
use scatterbrain::attention::{row_softmax, softmax_attention, unnormalized_attention};
use scatterbrain::genmodel::gaussian_batch;
use scatterbrain::{rng, Batch, Matrix};

/// `diag(exp(QKᵀ)1)⁻¹ exp(QKᵀ) V` with plain loops and no max-shift.
fn naive_softmax_attention(b: &Batch) -> Matrix {
    let (q, k, v) = (b.q(), b.k(), b.v());
    let mut out = Matrix::zeros(q.rows(), v.cols());
    for i in 0..q.rows() {
        let mut weights = vec![0.0; k.rows()];
        for (j, w) in weights.iter_mut().enumerate() {
            if b.causal() && j > i {
                continue;
            }
            let logit: f64 = q.row(i).iter().zip(k.row(j)).map(|(a, c)| a * c).sum();
            *w = logit.exp();
        }
        let total: f64 = weights.iter().sum();
        for (j, w) in weights.iter().enumerate() {
            for c in 0..v.cols() {
                out[(i, c)] += w / total * v[(j, c)];
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn softmax_matches_naive_oracle(nq in 1usize..64, nk in 1usize..64, d in 1usize..16, dv in 1usize..6, seed in any::<u64>(), causal in any::<bool>()) {
        let nk = if causal { nq } else { nk };
        let b: Batch = gaussian_batch(nq, nk, d, dv, seed, causal).unwrap();
        let got = softmax_attention(&b).unwrap();
        let want = naive_softmax_attention(&b);
        prop_assert!(got.sub(&want).unwrap().max_abs() <= 1e-12 * want.max_abs().max(1.0));
    }

    #[test]
    fn row_softmax_ignores_row_shifts(rows in 1usize..5, cols in 1usize..20, shift in -1000.0f64..1000.0, seed in any::<u64>()) {
        let logits: Matrix = rng::gaussian_matrix(rows, cols, &mut rng::stream(seed, 0));
        let shifted = logits.map(|x| x + shift);
        let (a, b) = (row_softmax(&logits), row_softmax(&shifted));
        prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-12);
        for s in a.row_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn causal_rows_ignore_future_keys_and_values() {
    let b: Batch = gaussian_batch(20, 20, 5, 3, 8, true).unwrap();
    let cut = 7;
    let mut k = b.k().clone();
    let mut v = b.v().clone();
    for i in cut + 1..20 {
        k.row_mut(i).iter_mut().for_each(|x| *x = 2.0 - *x);
        v.row_mut(i).iter_mut().for_each(|x| *x *= -50.0);
    }
    let edited = Batch::new(b.q().clone(), k, v, true).unwrap();
    let (before, after) = (
        softmax_attention(&b).unwrap(),
        softmax_attention(&edited).unwrap(),
    );
    let (ub, ua) = (
        unnormalized_attention(&b).unwrap(),
        unnormalized_attention(&edited).unwrap(),
    );
    for i in 0..=cut {
        assert_eq!(before.row(i), after.row(i));
        assert_eq!(ub.row(i), ua.row(i));
    }
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let b: Batch = gaussian_batch(300, 300, 16, 8, 5, false).unwrap();
    let run = |threads| {
        in_pool(threads, || {
            let r = run_scatterbrain(&b, &ScatterbrainOptions::default(), 9).unwrap();
            (
                r.output.normalized,
                r.correction.values().to_vec(),
                softmax_attention(&b).unwrap(),
            )
        })
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.0, four.0);
    assert_eq!(one.1, four.1);
    assert_eq!(one.2, four.2);
}
