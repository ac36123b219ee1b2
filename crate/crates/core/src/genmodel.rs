//! Synthetic attention matrices.
//!
//! * Clustered points: `C` centers `c ~ N(0, I/d)`, members `z = c + r` with
//!   `r ~ N(0, Δ²I/d)`, so `‖z‖² ≈ 1 + Δ²` and intra-cluster dot products are
//!   close to 1. `A = ZZᵀ` and `M_β = exp(βA)` entrywise.
//! * Separation examples: random sign matrices whose Gram matrix is nearly
//!   diagonal, giving an `exp` matrix that is "identity plus all-ones" up to
//!   small noise.

use rayon::prelude::*;
use serde::Serialize;

use crate::approx::{guard, BudgetConfig};
use crate::attention::AttentionBatch;
use crate::error::{Error, Result};
use crate::lsh::SupportSet;
use crate::matrix::DenseMatrix;
use crate::oracles::{
    budgeted_sl_decomposition, taylor_lowrank, taylor_rank_bound, topk_sparse, truncated_svd,
};
use crate::rng::{self, normal};
use crate::scalar::Real;
use rand::Rng as _;

/// Random Q, K (entries `N(0,1)·d^{-1/4}`, so logits have unit variance) and
/// V (entries `N(0,1)`).
pub fn gaussian_batch<T: Real>(
    n_q: usize,
    n_k: usize,
    d: usize,
    dv: usize,
    seed: u64,
    causal: bool,
) -> Result<AttentionBatch<T>> {
    let scale = T::of((d.max(1) as f64).powf(-0.25));
    let q = rng::gaussian_matrix::<T>(n_q, d, &mut rng::stream(seed, 0)).scale(scale);
    let k = rng::gaussian_matrix::<T>(n_k, d, &mut rng::stream(seed, 1)).scale(scale);
    let v = rng::gaussian_matrix::<T>(n_k, dv, &mut rng::stream(seed, 2));
    AttentionBatch::new(q, k, v, causal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterModel {
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
    /// Member spread `Δ` around the center.
    pub delta: f64,
    /// Inverse temperature `β`.
    pub beta: f64,
    pub seed: u64,
}

impl ClusterModel {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.clusters == 0 || self.clusters > self.n {
            return Err(Error::InvalidParameter(format!(
                "need n >= C >= 1 and d >= 1, got n={}, C={}, d={}",
                self.n, self.clusters, self.d
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(
                "delta must be >= 0 and beta finite".into(),
            ));
        }
        Ok(())
    }

    /// Conditions under which the clustered structure is expected to hold
    /// with high probability; violating them is allowed.
    pub fn warnings(&self) -> Vec<String> {
        let ln_n = (self.n.max(2) as f64).ln();
        let mut w = Vec::new();
        if (self.d as f64) < ln_n.powf(1.5) {
            w.push(format!(
                "d = {} is below ln(n)^1.5 = {:.1}",
                self.d,
                ln_n.powf(1.5)
            ));
        }
        if self.delta > ln_n.powf(-0.25) {
            w.push(format!(
                "delta = {} exceeds ln(n)^-0.25 = {:.3}",
                self.delta,
                ln_n.powf(-0.25)
            ));
        }
        w
    }

    /// Cluster sizes drawn uniformly from `1..=max(1, 2n/C)`, then rescaled
    /// so they sum to `n` with every size at least 1.
    pub fn cluster_sizes(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let mut g = rng::stream(self.seed, 0);
        let hi = (2 * self.n / self.clusters).max(1);
        let raw: Vec<usize> = (0..self.clusters).map(|_| g.random_range(1..=hi)).collect();
        let total: usize = raw.iter().sum();
        let mut sizes: Vec<usize> = raw.iter().map(|&s| (s * self.n / total).max(1)).collect();
        let mut sum: usize = sizes.iter().sum();
        let mut c = 0;
        while sum != self.n {
            if sum < self.n {
                sizes[c] += 1;
                sum += 1;
            } else if sizes[c] > 1 {
                sizes[c] -= 1;
                sum -= 1;
            }
            c = (c + 1) % self.clusters;
        }
        Ok(sizes)
    }
}

#[derive(Debug, Clone)]
pub struct ClusteredSample {
    /// Points `z`, one per row, grouped by cluster.
    pub q: DenseMatrix<f64>,
    /// `QQᵀ`.
    pub a: DenseMatrix<f64>,
    /// `exp(βA)`.
    pub m_beta: DenseMatrix<f64>,
    /// Cluster index of every row.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
}

pub fn generate_clustered(model: &ClusterModel) -> Result<ClusteredSample> {
    guard(model.n, model.n)?;
    let sizes = model.cluster_sizes()?;
    let d = model.d;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut centers = rng::stream(model.seed, 1);
    let mut members = rng::stream(model.seed, 2);
    let mut data = Vec::with_capacity(model.n * d);
    let mut labels = Vec::with_capacity(model.n);
    for (c, &size) in sizes.iter().enumerate() {
        let center: Vec<f64> = (0..d).map(|_| normal(&mut centers) * inv_sqrt_d).collect();
        for _ in 0..size {
            data.extend(
                center
                    .iter()
                    .map(|&x| x + model.delta * inv_sqrt_d * normal(&mut members)),
            );
            labels.push(c);
        }
    }
    let q = DenseMatrix::new(model.n, d, data)?;
    let a = q.matmul_t(&q)?;
    let m_beta = exp_scaled(&a, model.beta)?;
    Ok(ClusteredSample {
        q,
        a,
        m_beta,
        labels,
        sizes,
    })
}

/// `exp(β·A)` entrywise, failing on the first entry whose exponent exceeds
/// the `f64` range limit.
pub fn exp_scaled(a: &DenseMatrix<f64>, beta: f64) -> Result<DenseMatrix<f64>> {
    let limit = f64::exp_limit();
    for i in 0..a.rows() {
        for (j, &x) in a.row(i).iter().enumerate() {
            if beta * x > limit {
                return Err(Error::ExpOverflow {
                    row: i,
                    col: j,
                    exponent: beta * x,
                });
            }
        }
    }
    Ok(a.map(|x| (beta * x).exp()))
}

/// Pairs with `A_ij ≥ 1 − Δ²`: the large-entry part of a clustered Gram matrix.
pub fn threshold_support(a: &DenseMatrix<f64>, delta: f64) -> SupportSet {
    let cut = 1.0 - delta * delta;
    let pairs = (0..a.rows())
        .flat_map(|i| {
            a.row(i)
                .iter()
                .enumerate()
                .filter(move |(_, &x)| x >= cut)
                .map(move |(j, _)| (i as u32, j as u32))
        })
        .collect();
    SupportSet::from_pairs(a.rows(), a.cols(), pairs).expect("indices come from the matrix")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SeparationVariant {
    /// Entries `±1/√d`; `exp(QQᵀ)` has `e` on the diagonal.
    Example1,
    /// Entries `±√(r/d)`; `exp(QQᵀ)` has `e^r` on the diagonal.
    Example2 { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationSpec {
    pub variant: SeparationVariant,
    pub n: usize,
    pub epsilon: f64,
    /// If set (first variant only), overrides `epsilon` with `√γ / n^{1/4}`.
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl SeparationSpec {
    pub fn effective_epsilon(&self) -> f64 {
        match (self.variant, self.gamma) {
            (SeparationVariant::Example1, Some(g)) => g.sqrt() / (self.n as f64).powf(0.25),
            _ => self.epsilon,
        }
    }

    /// `⌈6ε⁻² ln n⌉`, times `r` for the second variant.
    pub fn dimension(&self) -> usize {
        let eps = self.effective_epsilon();
        let r = match self.variant {
            SeparationVariant::Example1 => 1.0,
            SeparationVariant::Example2 { r } => r,
        };
        (6.0 * r * (self.n as f64).ln() / (eps * eps)).ceil() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SeparationSample {
    pub q: DenseMatrix<f64>,
    /// `exp(QQᵀ)`.
    pub m: DenseMatrix<f64>,
    /// Diagonal sparse part of the constructive estimator.
    pub sparse: DenseMatrix<f64>,
    /// Low-rank part (`J + QQᵀ`, or `J`).
    pub lowrank: DenseMatrix<f64>,
    /// `sparse + lowrank`.
    pub e_sl: DenseMatrix<f64>,
    /// `‖M − E_SL‖_F`.
    pub error: f64,
    pub d: usize,
    pub epsilon: f64,
}

pub fn generate_separation(spec: &SeparationSpec) -> Result<SeparationSample> {
    let n = spec.n;
    let eps = spec.effective_epsilon();
    if n < 2 {
        return Err(Error::InvalidParameter("need n >= 2".into()));
    }
    let magnitude_sq = match spec.variant {
        SeparationVariant::Example1 => {
            if !(eps > 0.0 && eps <= 0.5) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon must lie in (0, 1/2], got {eps}"
                )));
            }
            1.0
        }
        SeparationVariant::Example2 { r } => {
            if !(r > 0.0 && eps > 0.0) {
                return Err(Error::InvalidParameter("need r > 0 and epsilon > 0".into()));
            }
            r
        }
    };
    guard(n, n)?;
    let d = spec.dimension();
    guard(n, d)?;
    let entry = (magnitude_sq / d as f64).sqrt();
    let mut g = rng::stream(spec.seed, 0);
    let data = (0..n * d)
        .map(|_| if g.random::<bool>() { entry } else { -entry })
        .collect();
    let q = DenseMatrix::new(n, d, data)?;
    let gram = q.matmul_t(&q)?;
    // the diagonal is ‖q_i‖² = r exactly up to rounding in the sum; pin it
    let m = DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            magnitude_sq.exp()
        } else {
            gram[(i, j)].exp()
        }
    });
    let (diag, lowrank) = match spec.variant {
        SeparationVariant::Example1 => (
            std::f64::consts::E - 2.0,
            DenseMatrix::from_fn(n, n, |i, j| 1.0 + if i == j { 1.0 } else { gram[(i, j)] }),
        ),
        SeparationVariant::Example2 { r } => (r.exp() - 1.0, DenseMatrix::filled(n, n, 1.0)),
    };
    let sparse = DenseMatrix::from_diag(&vec![diag; n]);
    let e_sl = sparse.add(&lowrank)?;
    let error = m.sub(&e_sl)?.frobenius_norm();
    Ok(SeparationSample {
        q,
        m,
        sparse,
        lowrank,
        e_sl,
        error,
        d,
        epsilon: eps,
    })
}

/// One method's error at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow {
    pub beta: f64,
    pub method: &'static str,
    /// `‖M_β − approx‖_F / ‖M_β‖_F`.
    pub rel_error: f64,
    pub params: u64,
}

pub const REGIME_METHODS: [&str; 4] = ["sparse", "lowrank", "sparse+lowrank", "taylor+block"];

/// Parameters per row and the resulting oracle sizes for a regime sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegimeBudget {
    pub per_row: usize,
    pub sparse_k: usize,
    pub lowrank_r: usize,
    pub combined_k: usize,
    pub combined_r: usize,
}

impl RegimeBudget {
    /// `per_row = ⌊fraction·n⌋`. A rank-`r` factor pair costs `2r` per row, so
    /// the pure low-rank oracle gets `r = per_row/2`. The combined oracle
    /// splits `per_row` by the sparse:low-rank ratio.
    pub fn new(n: usize, budget: BudgetConfig) -> Self {
        let per_row = ((budget.total_fraction * n as f64).floor() as usize).clamp(1, n);
        let ratio = budget.sparse_to_lowrank;
        let combined_k = ((per_row as f64 * ratio / (1.0 + ratio)).round() as usize).min(per_row);
        Self {
            per_row,
            sparse_k: per_row,
            lowrank_r: (per_row / 2).min(n),
            combined_k,
            combined_r: (per_row - combined_k) / 2,
        }
    }
}

/// Relative errors of the four approximations of `exp(βA)` for every `β`,
/// all built from the same clustered sample.
///
/// The fourth method keeps `exp(βA)` exactly on the thresholded large-entry
/// support and uses the Taylor polynomial of the largest degree whose rank
/// bound fits the low-rank budget elsewhere.
pub fn regime_sweep(
    template: &ClusterModel,
    betas: &[f64],
    budget: BudgetConfig,
) -> Result<Vec<RegimeRow>> {
    let sample = generate_clustered(&ClusterModel {
        beta: 0.0,
        ..*template
    })?;
    let n = template.n;
    let plan = RegimeBudget::new(n, budget);
    let h = threshold_support(&sample.a, template.delta);
    let mut degree = 0;
    while taylor_rank_bound(template.d, degree + 1) <= plan.lowrank_r as u64 {
        degree += 1;
    }
    let per_beta: Vec<Vec<RegimeRow>> = betas
        .par_iter()
        .map(|&beta| -> Result<Vec<RegimeRow>> {
            let m = exp_scaled(&sample.a, beta)?;
            let norm = m.frobenius_norm();
            let rel = |approx: &DenseMatrix<f64>| -> Result<f64> {
                Ok(m.sub(approx)?.frobenius_norm() / norm)
            };
            let sparse = topk_sparse(&m, plan.sparse_k)?.to_dense();
            let lowrank = truncated_svd(&m, plan.lowrank_r)?.reconstruct();
            let combined = budgeted_sl_decomposition(&m, plan.combined_k, plan.combined_r)?;
            let mut block = taylor_lowrank(&sample.q, beta, degree)?.matrix;
            for &(i, j) in h.pairs() {
                block[(i as usize, j as usize)] = m[(i as usize, j as usize)];
            }
            let row = |method, rel_error, params| RegimeRow {
                beta,
                method,
                rel_error,
                params,
            };
            let n64 = n as u64;
            Ok(vec![
                row(REGIME_METHODS[0], rel(&sparse)?, plan.sparse_k as u64 * n64),
                row(
                    REGIME_METHODS[1],
                    rel(&lowrank)?,
                    2 * plan.lowrank_r as u64 * n64,
                ),
                row(
                    REGIME_METHODS[2],
                    combined.error / norm,
                    (plan.combined_k + 2 * plan.combined_r) as u64 * n64,
                ),
                row(
                    REGIME_METHODS[3],
                    rel(&block)?,
                    h.len() as u64 + taylor_rank_bound(template.d, degree).saturating_mul(2 * n64),
                ),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(per_beta.into_iter().flatten().collect())
}
