//! Measurement helpers: entropy, errors, correlation coefficients, and
//! Monte-Carlo statistics of the per-entry estimators.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::approx::BudgetConfig;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::genmodel::{generate_clustered, ClusterModel, RegimeBudget};
use crate::lsh::sampled_collision;
use crate::matrix::{dot, DenseMatrix};
use crate::oracles::{lowrank_error, topk_error};
use crate::rng;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyProfile {
    /// Shannon entropy of every row in nats.
    pub per_row: Vec<f64>,
    pub mean: f64,
}

/// Row entropies of `M`. Unless `already_normalized`, each row is first
/// divided by its sum, i.e. `M` is read as unnormalized attention weights.
pub fn row_entropy<T: Real>(
    m: &DenseMatrix<T>,
    already_normalized: bool,
) -> Result<EntropyProfile> {
    let mut per_row = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = m.row(i);
        if let Some(j) = row.iter().position(|&x| x < T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "negative weight at ({i}, {j})"
            )));
        }
        let total: f64 = row.iter().map(|x| x.as_f64()).sum();
        if total == 0.0 {
            return Err(Error::ZeroRow { row: i });
        }
        let scale = if already_normalized { 1.0 } else { total };
        let h = row
            .iter()
            .map(|x| x.as_f64() / scale)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum::<f64>();
        per_row.push(h.max(0.0));
    }
    let mean = if per_row.is_empty() {
        0.0
    } else {
        per_row.iter().sum::<f64>() / per_row.len() as f64
    };
    Ok(EntropyProfile { per_row, mean })
}

/// `‖M − M̂‖_F`, divided by `‖M‖_F` when `relative`.
pub fn frob_error<T: Real>(
    m: &DenseMatrix<T>,
    approx: &DenseMatrix<T>,
    relative: bool,
) -> Result<T> {
    if m.shape() != approx.shape() {
        return Err(Error::mismatch(
            "frob_error",
            format!("{:?} vs {:?}", m.shape(), approx.shape()),
        ));
    }
    let err = m.sub(approx)?.frobenius_norm();
    Ok(if relative {
        err / m.frobenius_norm()
    } else {
        err
    })
}

/// `‖M − M̂‖_F²`.
pub fn frob_error_sq<T: Real>(m: &DenseMatrix<T>, approx: &DenseMatrix<T>) -> Result<T> {
    let e = frob_error(m, approx, false)?;
    Ok(e * e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub spearman: f64,
    pub pearson: f64,
    pub kendall_tau_b: f64,
    pub n_points: usize,
}

pub fn correlate(xs: &[f64], ys: &[f64]) -> Result<CorrelationReport> {
    if xs.len() != ys.len() {
        return Err(Error::mismatch(
            "correlate",
            format!("{} vs {} points", xs.len(), ys.len()),
        ));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(
            "correlation needs at least 3 points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    Ok(CorrelationReport {
        spearman: pearson(&average_ranks(xs), &average_ranks(ys))?,
        pearson: pearson(xs, ys)?,
        kendall_tau_b: kendall_tau_b(xs, ys)?,
        n_points: xs.len(),
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("xs"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("ys"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Result<f64> {
    use std::cmp::Ordering::Equal;
    let n = xs.len();
    // pairs tied only in x / only in y; pairs tied in both count nowhere
    let (mut concordant, mut discordant, mut only_x, mut only_y) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i].total_cmp(&xs[j]);
            let dy = ys[i].total_cmp(&ys[j]);
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => only_x += 1,
                (_, Equal) => only_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let untied_x = concordant + discordant + only_y;
    let untied_y = concordant + discordant + only_x;
    if untied_x == 0 {
        return Err(Error::ZeroVariance("xs"));
    }
    if untied_y == 0 {
        return Err(Error::ZeroVariance("ys"));
    }
    let tau = (concordant as f64 - discordant as f64) / (untied_x as f64 * untied_y as f64).sqrt();
    Ok(tau.clamp(-1.0, 1.0))
}

/// Per-entry Monte-Carlo summary for one `(q, k)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McStats {
    pub exact: f64,
    pub mean_pfe: f64,
    pub var_pfe: f64,
    pub mean_sbe: f64,
    pub var_sbe: f64,
    /// Fraction of draws in which `q` and `k` collided.
    pub p_hat: f64,
    pub mse_pfe: f64,
    pub mse_sbe: f64,
    /// MSE of the estimate that is `exp(qᵀk)` on collision and 0 otherwise.
    pub mse_sparse: f64,
    pub draws: usize,
}

impl McStats {
    pub fn stderr_pfe(&self) -> f64 {
        (self.var_pfe / self.draws as f64).sqrt()
    }

    pub fn stderr_sbe(&self) -> f64 {
        (self.var_sbe / self.draws as f64).sqrt()
    }
}

/// Draws `draws` independent (feature map, hash family) pairs. Draw `t`
/// uses stream `t` of `seed`, so results do not depend on the thread count.
///
/// Per draw: the low-rank estimate is `φ(q)ᵀφ(k)` with `m` features; the
/// combined estimate is `exp(qᵀk)` when the codes collide in any of
/// `rounds` rounds and the low-rank estimate otherwise.
pub fn mc_entry_stats(
    q: &[f64],
    k: &[f64],
    m: usize,
    rounds: usize,
    draws: usize,
    seed: u64,
) -> Result<McStats> {
    if q.len() != k.len() || q.is_empty() {
        return Err(Error::mismatch(
            "mc_entry_stats",
            "q and k must be nonempty and of equal length",
        ));
    }
    for (name, v) in [("q", q), ("k", k)] {
        if (dot(v, v).sqrt() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "{name} must be a unit vector"
            )));
        }
    }
    if draws < 10_000 || m == 0 || rounds == 0 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10^4 draws, m >= 1 and rounds >= 1; got N={draws}, m={m}, rounds={rounds}"
        )));
    }
    let d = q.len();
    let exact = dot(q, k).exp();
    let samples: Vec<(f64, bool)> = (0..draws as u64)
        .into_par_iter()
        .map(|t| {
            let mut g = rng::stream(seed, t);
            let map = FeatureMap::<f64>::sample(d, m, &mut g);
            let pq = map.phi(q)?;
            let pk = map.phi(k)?;
            Ok((dot(&pq, &pk), sampled_collision(q, k, rounds, &mut g)))
        })
        .collect::<Result<_>>()?;
    let n = draws as f64;
    let pfe: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let sbe: Vec<f64> = samples
        .iter()
        .map(|&(v, c)| if c { exact } else { v })
        .collect();
    let sparse_sq: f64 = samples
        .iter()
        .map(|&(_, c)| if c { 0.0 } else { exact * exact })
        .sum();
    let collisions = samples.iter().filter(|s| s.1).count();
    let (mean_pfe, var_pfe) = mean_var(&pfe);
    let (mean_sbe, var_sbe) = mean_var(&sbe);
    let mse = |xs: &[f64]| xs.iter().map(|x| (x - exact) * (x - exact)).sum::<f64>() / n;
    Ok(McStats {
        exact,
        mean_pfe,
        var_pfe,
        mean_sbe,
        var_sbe,
        p_hat: collisions as f64 / n,
        mse_pfe: mse(&pfe),
        mse_sbe: mse(&sbe),
        mse_sparse: sparse_sq / n,
        draws,
    })
}

/// Sample mean and unbiased variance, two-pass around the first sample so
/// a constant sample has variance exactly 0.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let shift = xs[0];
    let mean_d = xs.iter().map(|x| x - shift).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - shift - mean_d).powi(2)).sum::<f64>() / (n - 1.0);
    (shift + mean_d, var)
}

/// Variance of the `m`-feature positive random-feature estimate of
/// `exp(qᵀk)`: `(1/m)·exp(‖q+k‖²)·exp(2qᵀk)·(1 − exp(−‖q+k‖²))`.
pub fn performer_variance(q: &[f64], k: &[f64], m: usize) -> f64 {
    let sum_sq: f64 = q.iter().zip(k).map(|(a, b)| (a + b) * (a + b)).sum();
    let qk = dot(q, k);
    sum_sq.exp() * (2.0 * qk).exp() * (-(-sum_sq).exp_m1()) / m as f64
}

/// Unit vectors in `d ≥ 2` dimensions with `qᵀk = s`.
pub fn unit_pair(d: usize, s: f64) -> (Vec<f64>, Vec<f64>) {
    let mut q = vec![0.0; d];
    let mut k = vec![0.0; d];
    q[0] = 1.0;
    k[0] = s;
    k[1] = (1.0 - s * s).max(0.0).sqrt();
    (q, k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseCurve {
    pub grid: Vec<f64>,
    pub d: usize,
    pub m: usize,
    pub rounds: usize,
    pub draws: usize,
    pub analytic_pfe: Vec<f64>,
    pub mse_pfe: Vec<f64>,
    pub mse_sbe: Vec<f64>,
    pub mse_sparse: Vec<f64>,
    pub p_hat: Vec<f64>,
}

/// `points` evenly spaced values of `s` covering `[−1, 1]`.
pub fn default_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Empirical per-entry MSE of the three estimators along `grid`. Grid point
/// `i` uses seed `derive(seed, i)`, and all three estimators share its draws.
pub fn mse_curves(
    d: usize,
    m: usize,
    grid: &[f64],
    rounds: usize,
    draws: usize,
    seed: u64,
) -> Result<MseCurve> {
    if d < 2 {
        return Err(Error::InvalidParameter("mse curves need d >= 2".into()));
    }
    let mut grid = grid.to_vec();
    if grid.iter().any(|s| !(s.abs() <= 1.0)) {
        return Err(Error::InvalidParameter(
            "grid values must lie in [-1, 1]".into(),
        ));
    }
    grid.sort_by(f64::total_cmp);
    let mut curve = MseCurve {
        grid: grid.clone(),
        d,
        m,
        rounds,
        draws,
        analytic_pfe: Vec::new(),
        mse_pfe: Vec::new(),
        mse_sbe: Vec::new(),
        mse_sparse: Vec::new(),
        p_hat: Vec::new(),
    };
    for (i, &s) in grid.iter().enumerate() {
        let (q, k) = unit_pair(d, s);
        let st = mc_entry_stats(&q, &k, m, rounds, draws, rng::derive(seed, i as u64))?;
        curve.analytic_pfe.push(performer_variance(&q, &k, m));
        curve.mse_pfe.push(st.mse_pfe);
        curve.mse_sbe.push(st.mse_sbe);
        curve.mse_sparse.push(st.mse_sparse);
        curve.p_hat.push(st.p_hat);
    }
    Ok(curve)
}

/// Divides every row by its sum, turning `exp(βA)` into softmax attention.
pub fn row_normalize<T: Real>(m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let mut out = m.clone();
    for (i, total) in m.row_sums().into_iter().enumerate() {
        if !(total > T::zero()) {
            return Err(Error::ZeroRow { row: i });
        }
        out.row_mut(i).iter_mut().for_each(|x| *x /= total);
    }
    Ok(out)
}

/// Oracle errors for one clustered matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleErrors {
    pub delta: f64,
    pub beta: f64,
    pub entropy: f64,
    pub sparse_error: f64,
    pub lowrank_error: f64,
}

/// Top-k and truncated-SVD Frobenius errors on the row-normalized
/// attention at matched budgets for `count` clustered matrices with `Δ ~ U[0.02, 0.5]` and `β ~ U[1, ln n]`.
pub fn oracle_error_pairs(
    n: usize,
    d: usize,
    clusters: usize,
    count: usize,
    budget: BudgetConfig,
    seed: u64,
) -> Result<Vec<OracleErrors>> {
    let plan = RegimeBudget::new(n, budget);
    let beta_max = (n as f64).ln().max(1.0);
    (0..count as u64)
        .into_par_iter()
        .map(|idx| {
            let mut g = rng::stream(seed, idx);
            let model = ClusterModel {
                n,
                d,
                clusters,
                delta: g.random_range(0.02..=0.5),
                beta: g.random_range(1.0..=beta_max),
                seed: rng::derive(seed, idx),
            };
            let s = generate_clustered(&model)?;
            let attn = row_normalize(&s.m_beta)?;
            Ok(OracleErrors {
                delta: model.delta,
                beta: model.beta,
                entropy: row_entropy(&attn, true)?.mean,
                sparse_error: topk_error(&attn, plan.sparse_k)?,
                lowrank_error: lowrank_error(&attn, plan.lowrank_r)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_endpoints() {
        let uniform = DenseMatrix::<f64>::filled(1, 1024, 1.0);
        let h = row_entropy(&uniform, false).unwrap();
        assert!((h.mean - 1024f64.ln()).abs() < 1e-9);
        let mut onehot = DenseMatrix::<f64>::zeros(1, 5);
        onehot[(0, 2)] = 1.0;
        assert_eq!(row_entropy(&onehot, true).unwrap().per_row, vec![0.0]);
        let r = DenseMatrix::<f64>::from_rows(&[&[0.5, 0.25, 0.25]]).unwrap();
        assert!((row_entropy(&r, true).unwrap().mean - 1.5 * 2f64.ln()).abs() < 1e-14);
        assert!(matches!(
            row_entropy(&DenseMatrix::<f64>::zeros(2, 3), false),
            Err(Error::ZeroRow { row: 0 })
        ));
    }

    #[test]
    fn frob_error_examples() {
        let m = DenseMatrix::<f64>::from_rows(&[&[3.0, 4.0]]).unwrap();
        assert_eq!(frob_error(&m, &m, false).unwrap(), 0.0);
        assert_eq!(
            frob_error(&m, &DenseMatrix::zeros(1, 2), true).unwrap(),
            1.0
        );
        assert_eq!(frob_error_sq(&m, &DenseMatrix::zeros(1, 2)).unwrap(), 25.0);
        assert!(frob_error(&m, &DenseMatrix::zeros(2, 1), false).is_err());
    }

    #[test]
    fn correlation_examples() {
        let xs = [1.0, 2.0, 3.0, 5.0];
        let r = correlate(&xs, &xs).unwrap();
        assert!((r.pearson - 1.0).abs() < 1e-15 && r.spearman == 1.0 && r.kendall_tau_b == 1.0);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let r = correlate(&xs, &neg).unwrap();
        assert!((r.pearson + 1.0).abs() < 1e-15 && r.spearman == -1.0 && r.kendall_tau_b == -1.0);
        let r = correlate(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert!((r.pearson + 0.5).abs() < 1e-15);
        assert!((r.spearman + 0.5).abs() < 1e-15);
        assert!((r.kendall_tau_b + 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            correlate(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ZeroVariance(_))
        ));
        assert!(matches!(
            correlate(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]),
            Err(Error::ZeroVariance(_))
        ));
        assert!(correlate(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tau_b_tie_correction_by_hand() {
        // pairs: (0,1) tie in x, (0,2) C, (1,2) C  -> 2/√(2·3)
        let r = correlate(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.kendall_tau_b - 2.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 5.0]),
            vec![2.5, 4.0, 2.5, 1.0]
        );
    }

    #[test]
    fn identical_pair_always_collides() {
        let (q, _) = unit_pair(8, 1.0);
        let st = mc_entry_stats(&q, &q, 4, 1, 10_000, 3).unwrap();
        assert_eq!(st.p_hat, 1.0);
        assert_eq!(st.var_sbe, 0.0);
        assert_eq!(st.mse_sbe, 0.0);
        assert_eq!(st.mse_sparse, 0.0);
    }

    #[test]
    fn many_features_orthogonal_pair_mean_is_one() {
        let (q, k) = unit_pair(8, 0.0);
        let st = mc_entry_stats(&q, &k, 256, 1, 10_000, 5).unwrap();
        assert!((st.mean_pfe - 1.0).abs() < 4.0 * st.stderr_pfe());
        assert!(st.var_pfe < 0.05);
    }

    #[test]
    fn rejects_non_unit_inputs_and_small_n() {
        assert!(mc_entry_stats(&[2.0, 0.0], &[1.0, 0.0], 1, 1, 10_000, 0).is_err());
        assert!(mc_entry_stats(&[1.0, 0.0], &[1.0, 0.0], 1, 1, 100, 0).is_err());
    }

    #[test]
    fn performer_variance_special_cases() {
        let (q, k) = unit_pair(4, -1.0);
        assert_eq!(performer_variance(&q, &k, 3), 0.0);
        let (q, k) = unit_pair(4, 0.0);
        let want = 2f64.exp() * (1.0 - (-2f64).exp());
        assert!((performer_variance(&q, &k, 1) - want).abs() < 1e-12);
    }

    #[test]
    fn unit_pair_has_requested_cosine() {
        for s in default_grid(9) {
            let (q, k) = unit_pair(3, s);
            assert!((dot(&q, &k) - s).abs() < 1e-15);
            assert!((dot(&k, &k) - 1.0).abs() < 1e-15);
        }
    }
}
