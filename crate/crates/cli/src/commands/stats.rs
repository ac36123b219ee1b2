//! Monte-Carlo estimator statistics (`mc-stats`, `mse-curve`) and the
//! sparse/low-rank error correlation study (`correlate`).
//!
//! Pairs are unit vectors with `qᵀk = s`; a distance `τ = ‖q − k‖` maps to
//! `s = 1 − τ²/2`.

use scatterbrain::analysis::{
    correlate, default_grid, mc_entry_stats, mse_curves, oracle_error_pairs, performer_variance,
    unit_pair, CorrelationReport,
};
use scatterbrain::approx::BudgetConfig;
use scatterbrain::rng;
use serde::{Deserialize, Serialize};

use super::usage;
use crate::artifacts::Run;
use crate::error::CliResult;

#[derive(Debug, clap::Args, Serialize)]
pub struct McArgs {
    #[arg(long)]
    d: Option<usize>,
    /// Feature counts.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Hash rounds per draw.
    #[arg(long)]
    rounds: Option<usize>,
    /// Monte-Carlo draws per pair (at least 10^4).
    #[arg(long)]
    draws: Option<usize>,
    /// Inner products qᵀk; takes precedence over --dists.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    s: Option<Vec<f64>>,
    /// Distances ‖q − k‖.
    #[arg(long, value_delimiter = ',')]
    dists: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    pub d: usize,
    pub m: Vec<usize>,
    pub rounds: usize,
    pub draws: usize,
    pub s: Option<Vec<f64>>,
    pub dists: Vec<f64>,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            d: 64,
            m: vec![8],
            rounds: 1,
            draws: 100_000,
            s: None,
            dists: vec![0.3, 0.7],
        }
    }
}

#[derive(Debug, Serialize)]
struct McRow {
    m: usize,
    s: f64,
    dist: f64,
    exact: f64,
    mean_pfe: f64,
    stderr_pfe: f64,
    var_pfe: f64,
    /// Closed-form variance of the positive random-feature estimate.
    analytic_var_pfe: f64,
    mean_sbe: f64,
    stderr_sbe: f64,
    /// `(mean_sbe − exact) / stderr_sbe`.
    z_sbe: f64,
    var_sbe: f64,
    p_hat: f64,
    var_ratio: f64,
    one_minus_p: f64,
    mse_pfe: f64,
    mse_sbe: f64,
    mse_sparse: f64,
    draws: usize,
}

/// Row `i` of the output (feature counts outer, pairs inner) uses seed
/// `derive(seed, i)`.
pub fn run_mc(run: &mut Run, s: &McSettings) -> CliResult<()> {
    if s.d < 2 {
        return Err(usage("mc-stats needs d >= 2"));
    }
    let points: Vec<f64> = match &s.s {
        Some(xs) => xs.clone(),
        None => s.dists.iter().map(|t| 1.0 - t * t / 2.0).collect(),
    };
    if points.is_empty() || s.m.is_empty() {
        return Err(usage("need at least one pair and one feature count"));
    }
    if let Some(bad) = points.iter().find(|x| !(x.abs() <= 1.0)) {
        return Err(usage(format!(
            "inner product {bad} is outside [-1, 1]; distances must lie in [0, 2]"
        )));
    }
    let seed = run.seed();
    let mut rows = Vec::new();
    for &m in &s.m {
        for &sv in &points {
            let idx = rows.len() as u64;
            let (q, k) = unit_pair(s.d, sv);
            let st = run.timed(&format!("row_{idx}"), || {
                mc_entry_stats(&q, &k, m, s.rounds, s.draws, rng::derive(seed, idx))
            })?;
            let z = if st.stderr_sbe() > 0.0 {
                (st.mean_sbe - st.exact) / st.stderr_sbe()
            } else {
                0.0
            };
            rows.push(McRow {
                m,
                s: sv,
                dist: (2.0 - 2.0 * sv).max(0.0).sqrt(),
                exact: st.exact,
                mean_pfe: st.mean_pfe,
                stderr_pfe: st.stderr_pfe(),
                var_pfe: st.var_pfe,
                analytic_var_pfe: performer_variance(&q, &k, m),
                mean_sbe: st.mean_sbe,
                stderr_sbe: st.stderr_sbe(),
                z_sbe: z,
                var_sbe: st.var_sbe,
                p_hat: st.p_hat,
                var_ratio: st.var_sbe / st.var_pfe,
                one_minus_p: 1.0 - st.p_hat,
                mse_pfe: st.mse_pfe,
                mse_sbe: st.mse_sbe,
                mse_sparse: st.mse_sparse,
                draws: st.draws,
            });
        }
    }
    run.write_table("mc_stats", &rows)
}

#[derive(Debug, clap::Args, Serialize)]
pub struct CurveArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Grid points evenly covering s ∈ [−1, 1].
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSettings {
    pub d: usize,
    pub m: usize,
    pub points: usize,
    pub rounds: usize,
    pub draws: usize,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self {
            d: 64,
            m: 8,
            points: 41,
            rounds: 1,
            draws: 100_000,
        }
    }
}

#[derive(Debug, Serialize)]
struct CurveRow {
    s: f64,
    analytic_pfe: f64,
    mse_pfe: f64,
    mse_sbe: f64,
    mse_sparse: f64,
    p_hat: f64,
}

pub fn run_curve(run: &mut Run, s: &CurveSettings) -> CliResult<()> {
    let grid = default_grid(s.points);
    let seed = run.seed();
    let c = run.timed("curve", || {
        mse_curves(s.d, s.m, &grid, s.rounds, s.draws, seed)
    })?;
    let rows: Vec<CurveRow> = (0..c.grid.len())
        .map(|i| CurveRow {
            s: c.grid[i],
            analytic_pfe: c.analytic_pfe[i],
            mse_pfe: c.mse_pfe[i],
            mse_sbe: c.mse_sbe[i],
            mse_sparse: c.mse_sparse[i],
            p_hat: c.p_hat[i],
        })
        .collect();
    run.write_table("mse_curve", &rows)
}

#[derive(Debug, clap::Args, Serialize)]
pub struct CorrelateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, alias = "C")]
    clusters: Option<usize>,
    /// Number of random clustered matrices.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateSettings {
    pub n: usize,
    pub d: usize,
    #[serde(alias = "C")]
    pub clusters: usize,
    pub count: usize,
    pub budget: f64,
    pub ratio: f64,
}

impl Default for CorrelateSettings {
    fn default() -> Self {
        Self {
            n: 128,
            d: 32,
            clusters: 32,
            count: 200,
            budget: 0.125,
            ratio: 3.0,
        }
    }
}

#[derive(Debug, Serialize)]
struct PairRow {
    index: usize,
    delta: f64,
    beta: f64,
    entropy: f64,
    sparse_error: f64,
    lowrank_error: f64,
}

#[derive(Debug, Serialize)]
struct CorrelationRow {
    x: &'static str,
    y: &'static str,
    spearman: f64,
    pearson: f64,
    kendall_tau_b: f64,
    n_points: usize,
}

impl CorrelationRow {
    fn new(x: &'static str, y: &'static str, c: CorrelationReport) -> Self {
        Self {
            x,
            y,
            spearman: c.spearman,
            pearson: c.pearson,
            kendall_tau_b: c.kendall_tau_b,
            n_points: c.n_points,
        }
    }
}

pub fn run_correlate(run: &mut Run, s: &CorrelateSettings) -> CliResult<()> {
    run.check_materialize(s.n, "correlate")?;
    let budget = BudgetConfig::new(s.budget, s.ratio)?;
    let seed = run.seed();
    let pairs = run.timed("oracles", || {
        oracle_error_pairs(s.n, s.d, s.clusters, s.count, budget, seed)
    })?;
    let col = |f: fn(&scatterbrain::analysis::OracleErrors) -> f64| {
        pairs.iter().map(f).collect::<Vec<f64>>()
    };
    let (entropy, sparse, lowrank) = (
        col(|p| p.entropy),
        col(|p| p.sparse_error),
        col(|p| p.lowrank_error),
    );
    let table = vec![
        CorrelationRow::new(
            "sparse_error",
            "lowrank_error",
            correlate(&sparse, &lowrank)?,
        ),
        CorrelationRow::new("entropy", "sparse_error", correlate(&entropy, &sparse)?),
        CorrelationRow::new("entropy", "lowrank_error", correlate(&entropy, &lowrank)?),
    ];
    let rows: Vec<PairRow> = pairs
        .iter()
        .enumerate()
        .map(|(index, p)| PairRow {
            index,
            delta: p.delta,
            beta: p.beta,
            entropy: p.entropy,
            sparse_error: p.sparse_error,
            lowrank_error: p.lowrank_error,
        })
        .collect();
    run.write_table("oracle_errors", &rows)?;
    run.write_table("correlation", &table)
}
