//! The combined estimator: low-rank pass, corrective sparse pass, and joint
//! normalization.
//!
//! Parameter accounting: the low-rank side stores `Q̃` and `K̃`, so `m`
//! features cost `m·(n_q + n_k)`; the sparse side costs one parameter per
//! support pair. A budget fraction `f` of full attention with a
//! sparse-to-low-rank ratio `ρ` gives
//!
//! ```text
//! total  = f · n_q · n_k
//! m      = max(1, ⌊total / (1 + ρ) / (n_q + n_k)⌋)
//! sparse = ⌊total · ρ / (1 + ρ)⌋
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::attention::AttentionBatch;
use crate::error::{Error, Result};
use crate::features::{lowrank_attention, make_feature_map, FeatureMap};
use crate::lsh::{self, HashFamily, SparseCorrection, SupportSet};
use crate::matrix::{dot, DenseMatrix};
use crate::rng;
use crate::scalar::Real;

/// Largest `n_q·n_k` that [`implicit_matrix`] will materialize.
pub const MATERIALIZE_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetConfig {
    pub total_fraction: f64,
    pub sparse_to_lowrank: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            total_fraction: 0.125,
            sparse_to_lowrank: 3.0,
        }
    }
}

impl BudgetConfig {
    pub fn new(total_fraction: f64, sparse_to_lowrank: f64) -> Result<Self> {
        if !(total_fraction > 0.0 && total_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "budget fraction must lie in (0, 1], got {total_fraction}"
            )));
        }
        if !(sparse_to_lowrank >= 0.0 && sparse_to_lowrank.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sparse:low-rank ratio must be a nonnegative number, got {sparse_to_lowrank}"
            )));
        }
        Ok(Self {
            total_fraction,
            sparse_to_lowrank,
        })
    }

    pub fn plan(&self, n_q: usize, n_k: usize) -> BudgetPlan {
        let total = self.total_fraction * (n_q * n_k) as f64;
        let lowrank_share = total / (1.0 + self.sparse_to_lowrank);
        let raw = (lowrank_share / (n_q + n_k).max(1) as f64).floor() as usize;
        BudgetPlan {
            total_params: total,
            features: raw.max(1),
            features_clamped: raw == 0,
            sparse_target: (total - lowrank_share).max(0.0).floor() as usize,
            lowrank_params: raw.max(1) * (n_q + n_k),
        }
    }
}

/// Budget converted to concrete sizes for one `n_q × n_k` problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetPlan {
    pub total_params: f64,
    /// Feature count `m`.
    pub features: usize,
    /// True when the low-rank share was below one feature and `m` was raised to 1.
    pub features_clamped: bool,
    /// Maximum support size the hashing calibration aims for.
    pub sparse_target: usize,
    pub lowrank_params: usize,
}

/// Hash rounds and bucket cap actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HashPlan {
    pub rounds: usize,
    pub max_bucket: Option<usize>,
}

impl Default for HashPlan {
    fn default() -> Self {
        Self {
            rounds: 4,
            max_bucket: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HashingMode {
    /// Add rounds (up to `max_rounds`) while the support stays within the
    /// sparse budget; if one round already overshoots, cap bucket sizes.
    Calibrated {
        max_rounds: usize,
    },
    Fixed(HashPlan),
}

impl Default for HashingMode {
    fn default() -> Self {
        Self::Calibrated { max_rounds: 16 }
    }
}

/// Where the sparse support comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportMode {
    Lsh(HashingMode),
    /// Every pair (lower triangle when causal).
    Full,
    Empty,
    Given(SupportSet),
}

impl Default for SupportMode {
    fn default() -> Self {
        Self::Lsh(HashingMode::default())
    }
}

/// What to do when `D_lr + D_s` is not positive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub enum NormalizerPolicy {
    #[default]
    Strict,
    /// Replace the normalizer by `max(value, eps)`. Breaks unbiasedness.
    Clamp(f64),
}

#[derive(Debug, Clone, Default)]
pub struct ScatterbrainOptions {
    pub budget: BudgetConfig,
    pub support: SupportMode,
    pub normalizer: NormalizerPolicy,
    /// Overrides the budget-derived feature count.
    pub features: Option<usize>,
}

/// Unnormalized parts and the normalized output.
#[derive(Debug, Clone)]
pub struct ApproxOutput<T> {
    pub o_lr: DenseMatrix<T>,
    pub o_s: DenseMatrix<T>,
    pub d_lr: Vec<T>,
    pub d_s: Vec<T>,
    pub normalized: DenseMatrix<T>,
}

/// Output plus everything needed to inspect or materialize the estimate.
#[derive(Debug, Clone)]
pub struct ScatterbrainRun<T> {
    pub output: ApproxOutput<T>,
    pub feature_map: FeatureMap<T>,
    pub correction: SparseCorrection<T>,
    pub plan: BudgetPlan,
    /// `None` when the support was not produced by hashing.
    pub hashing: Option<HashPlan>,
    /// Rows whose normalizer was clamped.
    pub clamped_rows: usize,
}

pub fn scatterbrain_attention<T: Real>(
    batch: &AttentionBatch<T>,
    budget: BudgetConfig,
    seed: u64,
) -> Result<ApproxOutput<T>> {
    let opts = ScatterbrainOptions {
        budget,
        ..Default::default()
    };
    Ok(run_scatterbrain(batch, &opts, seed)?.output)
}

/// Like [`scatterbrain_attention`] but insists on a causal batch.
pub fn scatterbrain_attention_causal<T: Real>(
    batch: &AttentionBatch<T>,
    budget: BudgetConfig,
    seed: u64,
) -> Result<ApproxOutput<T>> {
    if !batch.causal() {
        return Err(Error::InvalidParameter("batch is not marked causal".into()));
    }
    scatterbrain_attention(batch, budget, seed)
}

/// Full pipeline with explicit options. The feature map is drawn from
/// `derive(seed, 0)` and the hash family from `derive(seed, 1)`.
pub fn run_scatterbrain<T: Real>(
    batch: &AttentionBatch<T>,
    opts: &ScatterbrainOptions,
    seed: u64,
) -> Result<ScatterbrainRun<T>> {
    let (n_q, n_k) = (batch.n_q(), batch.n_k());
    let plan = opts.budget.plan(n_q, n_k);
    let m = opts.features.unwrap_or(plan.features);
    let map = make_feature_map(batch.head_dim(), m, rng::derive(seed, 0))?;
    let (support, hashing) = match &opts.support {
        SupportMode::Full => (SupportSet::full(n_q, n_k, batch.causal()), None),
        SupportMode::Empty => (SupportSet::empty(n_q, n_k), None),
        SupportMode::Given(s) => {
            if s.n_q() != n_q || s.n_k() != n_k {
                return Err(Error::mismatch(
                    "run_scatterbrain",
                    "given support does not match the batch",
                ));
            }
            if batch.causal() && !s.is_lower_triangular() {
                return Err(Error::InvalidParameter(
                    "causal batch with a support above the diagonal".into(),
                ));
            }
            (s.clone(), None)
        }
        SupportMode::Lsh(mode) => {
            let (s, h) = lsh_support(batch, mode, plan.sparse_target, rng::derive(seed, 1))?;
            (s, Some(h))
        }
    };
    let (output, correction, clamped_rows) = combine(batch, &map, support, opts.normalizer)?;
    Ok(ScatterbrainRun {
        output,
        feature_map: map,
        correction,
        plan,
        hashing,
        clamped_rows,
    })
}

fn lsh_support<T: Real>(
    batch: &AttentionBatch<T>,
    mode: &HashingMode,
    target: usize,
    seed: u64,
) -> Result<(SupportSet, HashPlan)> {
    let (q, k, causal) = (batch.q(), batch.k(), batch.causal());
    match *mode {
        HashingMode::Fixed(plan) => {
            let family = HashFamily::new(batch.head_dim(), plan.rounds, seed)?;
            Ok((
                lsh::build_support(&family, q, k, causal, plan.max_bucket)?,
                plan,
            ))
        }
        HashingMode::Calibrated { max_rounds } => {
            let family = HashFamily::new(batch.head_dim(), max_rounds.max(1), seed)?;
            let qc = lsh::hash_codes(&family, q)?;
            let kc = lsh::hash_codes(&family, k)?;
            let buckets = 2 * family.dim();
            let n_k = batch.n_k();
            let mut packed = Vec::new();
            let mut best: Option<(SupportSet, usize)> = None;
            for l in 0..family.rounds() {
                packed.extend(lsh::round_pairs(
                    &qc.round_column(l),
                    &kc.round_column(l),
                    buckets,
                    causal,
                    None,
                ));
                let s = SupportSet::union_packed(batch.n_q(), n_k, std::mem::take(&mut packed));
                if s.len() > target {
                    break;
                }
                packed = s
                    .pairs()
                    .iter()
                    .map(|&(i, j)| ((i as u64) << 32) | j as u64)
                    .collect();
                best = Some((s, l + 1));
            }
            if let Some((s, rounds)) = best {
                return Ok((
                    s,
                    HashPlan {
                        rounds,
                        max_bucket: None,
                    },
                ));
            }
            // one round overshoots: largest bucket cap that fits
            let (q0, k0) = (qc.round_column(0), kc.round_column(0));
            let with_cap = |cap| {
                SupportSet::union_packed(
                    batch.n_q(),
                    n_k,
                    lsh::round_pairs(&q0, &k0, buckets, causal, Some(cap)),
                )
            };
            let (mut lo, mut hi) = (0usize, n_k);
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if with_cap(mid).len() <= target {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            Ok((
                with_cap(lo),
                HashPlan {
                    rounds: 1,
                    max_bucket: Some(lo),
                },
            ))
        }
    }
}

/// Low-rank pass, sparse correction with the same map, and normalization.
/// Returns the output, the correction, and the number of clamped rows.
pub fn combine<T: Real>(
    batch: &AttentionBatch<T>,
    map: &FeatureMap<T>,
    support: SupportSet,
    policy: NormalizerPolicy,
) -> Result<(ApproxOutput<T>, SparseCorrection<T>, usize)> {
    if support.n_q() != batch.n_q() || support.n_k() != batch.n_k() {
        return Err(Error::mismatch(
            "combine",
            "support does not match the batch",
        ));
    }
    let factors = map.factors(batch.q(), batch.k())?;
    let (o_lr, d_lr) = lowrank_attention(&factors, batch.v(), batch.causal())?;
    let correction = lsh::build_correction_with_factors(support, batch.q(), batch.k(), &factors)?;
    let (o_s, d_s) = lsh::sparse_apply(&correction, batch.v())?;
    let mut normalized = o_lr.add(&o_s)?;
    let mut clamped = 0;
    for i in 0..normalized.rows() {
        let mut z = d_lr[i] + d_s[i];
        if !(z > T::zero() && z.is_finite()) {
            match policy {
                NormalizerPolicy::Strict => {
                    return Err(Error::NonPositiveNormalizer {
                        row: i,
                        value: z.as_f64(),
                    });
                }
                NormalizerPolicy::Clamp(eps) => {
                    z = if z.is_finite() {
                        z.max(T::of(eps))
                    } else {
                        T::of(eps)
                    };
                    clamped += 1;
                }
            }
        }
        normalized.row_mut(i).iter_mut().for_each(|x| *x /= z);
    }
    normalized.ensure_finite()?;
    let output = ApproxOutput {
        o_lr,
        o_s,
        d_lr,
        d_s,
        normalized,
    };
    Ok((output, correction, clamped))
}

/// Materializes `Q̃K̃ᵀ + S` (masked above the diagonal when causal).
pub fn implicit_matrix<T: Real>(
    q: &DenseMatrix<T>,
    k: &DenseMatrix<T>,
    map: &FeatureMap<T>,
    correction: &SparseCorrection<T>,
    causal: bool,
) -> Result<DenseMatrix<T>> {
    guard(q.rows(), k.rows())?;
    let f = map.factors(q, k)?;
    let mut m = f.qt().matmul_t(f.kt())?;
    if causal {
        for i in 0..m.rows() {
            m.row_mut(i)
                .iter_mut()
                .skip(i + 1)
                .for_each(|x| *x = T::zero());
        }
    }
    if correction.support().n_q() != q.rows() || correction.support().n_k() != k.rows() {
        return Err(Error::mismatch(
            "implicit_matrix",
            "correction does not match Q/K",
        ));
    }
    for (i, j, s) in correction.iter() {
        m[(i, j)] += s;
    }
    Ok(m)
}

/// Error of the implicit matrix `Q̃K̃ᵀ + S` against `exp(QKᵀ)` over the
/// visible region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImplicitErrors {
    /// `‖Q̃K̃ᵀ + S − exp(QKᵀ)‖_F`.
    pub frobenius: f64,
    /// `frobenius / ‖exp(QKᵀ)‖_F`.
    pub relative: f64,
    /// Largest `|Q̃K̃ᵀ + S − exp(QKᵀ)|` over the support.
    pub max_on_support: f64,
}

/// Same numbers as comparing [`implicit_matrix`] with the exact matrix, but
/// computed one row at a time in `O(n_k)` extra memory, so it has no size
/// guard. Costs `O(n_q·n_k·(d + m))` time.
pub fn implicit_errors<T: Real>(
    batch: &AttentionBatch<T>,
    map: &FeatureMap<T>,
    correction: &SparseCorrection<T>,
) -> Result<ImplicitErrors> {
    let support = correction.support();
    if support.n_q() != batch.n_q() || support.n_k() != batch.n_k() {
        return Err(Error::mismatch(
            "implicit_errors",
            "correction does not match the batch",
        ));
    }
    let f = map.factors(batch.q(), batch.k())?;
    let pairs = support.pairs();
    let values = correction.values();
    let rows: Vec<(f64, f64, f64)> = (0..batch.n_q())
        .into_par_iter()
        .map(|i| {
            let lo = pairs.partition_point(|p| (p.0 as usize) < i);
            let hi = pairs.partition_point(|p| (p.0 as usize) <= i);
            let mut on_support = pairs[lo..hi].iter().zip(&values[lo..hi]).peekable();
            let (mut err_sq, mut norm_sq, mut worst) = (0.0, 0.0, 0.0f64);
            for j in 0..batch.visible_keys(i) {
                let mut est = f.entry(i, j).as_f64();
                let hit = on_support.next_if(|(p, _)| p.1 as usize == j);
                if let Some((_, s)) = hit {
                    est += s.as_f64();
                }
                let exact = dot(batch.q().row(i), batch.k().row(j)).as_f64().exp();
                let diff = est - exact;
                if hit.is_some() {
                    worst = worst.max(diff.abs());
                }
                err_sq += diff * diff;
                norm_sq += exact * exact;
            }
            (err_sq, norm_sq, worst)
        })
        .collect();
    let (err_sq, norm_sq, worst) = rows.iter().fold((0.0, 0.0, 0.0f64), |acc, r| {
        (acc.0 + r.0, acc.1 + r.1, acc.2.max(r.2))
    });
    let frobenius = err_sq.sqrt();
    if !frobenius.is_finite() || !norm_sq.is_finite() {
        return Err(Error::InvalidParameter(
            "error accumulation overflowed".into(),
        ));
    }
    Ok(ImplicitErrors {
        frobenius,
        relative: if norm_sq > 0.0 {
            frobenius / norm_sq.sqrt()
        } else {
            0.0
        },
        max_on_support: worst,
    })
}

/// Fails with [`Error::SizeGuard`] above [`MATERIALIZE_LIMIT`] entries.
pub fn guard(rows: usize, cols: usize) -> Result<()> {
    if rows.saturating_mul(cols) > MATERIALIZE_LIMIT {
        return Err(Error::SizeGuard {
            rows,
            cols,
            limit: MATERIALIZE_LIMIT,
        });
    }
    Ok(())
}
