//! `approx`: one estimator run on a generated or loaded batch.
//!
//! Generated batches use seed `derive(seed, 2)`; the estimator draws its
//! feature map from `derive(seed, 0)` and its hash family from
//! `derive(seed, 1)`. Errors are computed row by row, so no `n × n` matrix
//! is built unless `--support full` is requested.

use std::path::PathBuf;

use clap::ValueEnum;
use scatterbrain::approx::{
    implicit_errors, run_scatterbrain, BudgetConfig, HashPlan, HashingMode, ImplicitErrors,
    NormalizerPolicy, ScatterbrainOptions, SupportMode,
};
use scatterbrain::attention::softmax_attention;
use scatterbrain::genmodel::gaussian_batch;
use scatterbrain::io::write_correction_csv;
use scatterbrain::{rng, Batch};
use serde::{Deserialize, Serialize};

use super::{find_matrix, usage};
use crate::artifacts::Run;
use crate::error::CliResult;
use crate::load_input;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SupportKind {
    Lsh,
    Full,
    Empty,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Query rows.
    #[arg(long)]
    n: Option<usize>,
    /// Key rows (default: n).
    #[arg(long)]
    nk: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Value columns (default: d).
    #[arg(long)]
    dv: Option<usize>,
    /// Parameter budget as a fraction of n_q·n_k.
    #[arg(long)]
    budget: Option<f64>,
    /// Sparse to low-rank split of the budget.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    causal: bool,
    /// Directory with q, k and v as .csv or .bin (as written by `gen --kind batch`).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    support: Option<SupportKind>,
    /// Fixed number of hash rounds instead of budget calibration.
    #[arg(long)]
    rounds: Option<usize>,
    /// Bucket cap for fixed-round hashing.
    #[arg(long)]
    max_bucket: Option<usize>,
    /// Round limit for budget calibration.
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Feature count, overriding the budget.
    #[arg(long)]
    features: Option<usize>,
    /// Also write the sparse correction as triplets.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    save_support: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub n: usize,
    pub nk: Option<usize>,
    pub d: usize,
    pub dv: Option<usize>,
    pub budget: f64,
    pub ratio: f64,
    pub causal: bool,
    pub input: Option<PathBuf>,
    pub support: SupportKind,
    pub rounds: Option<usize>,
    pub max_bucket: Option<usize>,
    pub max_rounds: usize,
    pub features: Option<usize>,
    pub save_support: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            n: 64,
            nk: None,
            d: 16,
            dv: None,
            budget: 0.125,
            ratio: 3.0,
            causal: false,
            input: None,
            support: SupportKind::Lsh,
            rounds: None,
            max_bucket: None,
            max_rounds: 16,
            features: None,
            save_support: false,
        }
    }
}

#[derive(Debug, Serialize)]
struct Report {
    n_q: usize,
    n_k: usize,
    d: usize,
    dv: usize,
    causal: bool,
    budget_fraction: f64,
    sparse_to_lowrank: f64,
    total_params: f64,
    sparse_target: usize,
    features: usize,
    features_clamped: bool,
    support: SupportKind,
    hash_rounds: Option<usize>,
    max_bucket: Option<usize>,
    support_size: usize,
    lowrank_params: usize,
    sparse_params: usize,
    params_used: usize,
    used_fraction: f64,
    normalizer: String,
    clamped_rows: usize,
    /// `‖approx − softmax‖_F / ‖softmax‖_F` on the attention output.
    output_rel_error: f64,
    output_max_abs_error: f64,
    implicit: ImplicitErrors,
}

fn load_batch(s: &Settings, seed: u64) -> CliResult<Batch> {
    if let Some(dir) = &s.input {
        let q = load_input(&find_matrix(dir, "q")?)?;
        let k = load_input(&find_matrix(dir, "k")?)?;
        let v = load_input(&find_matrix(dir, "v")?)?;
        return Ok(Batch::new(q, k, v, s.causal)?);
    }
    let nk = s.nk.unwrap_or(s.n);
    if s.causal && nk != s.n {
        return Err(usage("--causal needs nk == n"));
    }
    Ok(gaussian_batch(
        s.n,
        nk,
        s.d,
        s.dv.unwrap_or(s.d),
        rng::derive(seed, 2),
        s.causal,
    )?)
}

pub fn run(run: &mut Run, s: &Settings) -> CliResult<()> {
    let seed = run.seed();
    let budget = BudgetConfig::new(s.budget, s.ratio)?;
    let batch = run.timed("input", || load_batch(s, seed))?;
    let (n_q, n_k) = (batch.n_q(), batch.n_k());
    if s.input.is_some() {
        // record the loaded shapes rather than the unused generator defaults
        let loaded = Settings {
            n: n_q,
            nk: Some(n_k),
            d: batch.q().cols(),
            dv: Some(batch.v().cols()),
            ..s.clone()
        };
        run.set_settings("approx", &serde_json::to_value(&loaded)?);
    }
    let support = match s.support {
        SupportKind::Lsh => SupportMode::Lsh(match s.rounds {
            Some(rounds) => HashingMode::Fixed(HashPlan {
                rounds,
                max_bucket: s.max_bucket,
            }),
            None if s.max_bucket.is_some() => return Err(usage("--max-bucket needs --rounds")),
            None => HashingMode::Calibrated {
                max_rounds: s.max_rounds,
            },
        }),
        SupportKind::Full => {
            run.check_materialize(n_q.max(n_k), "--support full")?;
            SupportMode::Full
        }
        SupportKind::Empty => SupportMode::Empty,
    };
    let normalizer = match run.globals.clamp_normalizer {
        Some(eps) => NormalizerPolicy::Clamp(eps),
        None => NormalizerPolicy::Strict,
    };
    let opts = ScatterbrainOptions {
        budget,
        support,
        normalizer,
        features: s.features,
    };
    let sb = run.timed("approximate", || run_scatterbrain(&batch, &opts, seed))?;
    let exact = run.timed("exact", || softmax_attention(&batch))?;
    let implicit = run.timed("implicit_errors", || {
        implicit_errors(&batch, &sb.feature_map, &sb.correction)
    })?;
    let diff = sb.output.normalized.sub(&exact)?;
    let exact_norm = exact.frobenius_norm();
    let m = sb.feature_map.features();
    let lowrank_params = m * (n_q + n_k);
    let sparse_params = sb.correction.len();
    let report = Report {
        n_q,
        n_k,
        d: batch.head_dim(),
        dv: batch.value_dim(),
        causal: batch.causal(),
        budget_fraction: budget.total_fraction,
        sparse_to_lowrank: budget.sparse_to_lowrank,
        total_params: sb.plan.total_params,
        sparse_target: sb.plan.sparse_target,
        features: m,
        features_clamped: s.features.is_none() && sb.plan.features_clamped,
        support: s.support,
        hash_rounds: sb.hashing.map(|h| h.rounds),
        max_bucket: sb.hashing.and_then(|h| h.max_bucket),
        support_size: sparse_params,
        lowrank_params,
        sparse_params,
        params_used: lowrank_params + sparse_params,
        used_fraction: (lowrank_params + sparse_params) as f64 / (n_q * n_k) as f64,
        normalizer: match normalizer {
            NormalizerPolicy::Strict => "strict".into(),
            NormalizerPolicy::Clamp(eps) => format!("clamp({eps})"),
        },
        clamped_rows: sb.clamped_rows,
        output_rel_error: if exact_norm > 0.0 {
            diff.frobenius_norm() / exact_norm
        } else {
            0.0
        },
        output_max_abs_error: diff.max_abs(),
        implicit,
    };
    run.write_matrix("output", &sb.output.normalized)?;
    if s.save_support {
        run.write_plain("correction.csv", |w| {
            Ok(write_correction_csv(&sb.correction, w)?)
        })?;
    }
    run.write_report("report", &report)
}
