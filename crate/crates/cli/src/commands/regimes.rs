//! `regimes`: the four budget-matched approximations of clustered
//! `exp(βA)` across a temperature sweep, for one or more seeds.

use scatterbrain::approx::BudgetConfig;
use scatterbrain::genmodel::{regime_sweep, ClusterModel};
use scatterbrain::rng;
use serde::{Deserialize, Serialize};

use super::usage;
use crate::artifacts::Run;
use crate::error::CliResult;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, alias = "C")]
    clusters: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Inverse temperatures (default: 5 points from 0.1·ln n to 2·ln n).
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    /// Number of independent samples; sample `i` uses seed `derive(seed, i)`.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub n: usize,
    pub d: usize,
    #[serde(alias = "C")]
    pub clusters: usize,
    pub delta: f64,
    pub betas: Option<Vec<f64>>,
    pub budget: f64,
    pub ratio: f64,
    pub seeds: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            n: 512,
            d: 64,
            clusters: 128,
            delta: 0.1,
            betas: None,
            budget: 0.125,
            ratio: 3.0,
            seeds: 1,
        }
    }
}

#[derive(Debug, Serialize)]
struct Row {
    sample: usize,
    beta: f64,
    method: &'static str,
    rel_error: f64,
    params: u64,
}

/// Which orderings one sample shows.
#[derive(Debug, Serialize)]
struct Ordering {
    sample: usize,
    lowrank_beats_sparse_at_min_beta: bool,
    sparse_beats_lowrank_at_max_beta: bool,
    combined_best_at_some_interior_beta: bool,
}

pub fn run(run: &mut Run, s: &Settings) -> CliResult<()> {
    run.check_materialize(s.n, "regimes")?;
    let budget = BudgetConfig::new(s.budget, s.ratio)?;
    let ln_n = (s.n.max(2) as f64).ln();
    let betas = s.betas.clone().unwrap_or_else(|| {
        (0..5)
            .map(|i| ln_n * (0.1 + 1.9 * i as f64 / 4.0))
            .collect()
    });
    if betas.is_empty() || s.seeds == 0 {
        return Err(usage("need at least one beta and one seed"));
    }
    let mut rows = Vec::new();
    let mut orderings = Vec::new();
    for sample in 0..s.seeds {
        let template = ClusterModel {
            n: s.n,
            d: s.d,
            clusters: s.clusters,
            delta: s.delta,
            beta: 0.0,
            seed: rng::derive(run.seed(), sample as u64),
        };
        let sweep = run.timed(&format!("sample_{sample}"), || {
            regime_sweep(&template, &betas, budget)
        })?;
        let err = |beta: f64, method: &str| {
            sweep
                .iter()
                .find(|r| r.beta == beta && r.method == method)
                .map_or(f64::NAN, |r| r.rel_error)
        };
        let lo = betas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        orderings.push(Ordering {
            sample,
            lowrank_beats_sparse_at_min_beta: err(lo, "lowrank") < err(lo, "sparse"),
            sparse_beats_lowrank_at_max_beta: err(hi, "sparse") < err(hi, "lowrank"),
            combined_best_at_some_interior_beta: betas
                .iter()
                .filter(|&&b| b > lo && b < hi)
                .any(|&b| err(b, "sparse+lowrank") <= err(b, "sparse").min(err(b, "lowrank"))),
        });
        rows.extend(sweep.into_iter().map(|r| Row {
            sample,
            beta: r.beta,
            method: r.method,
            rel_error: r.rel_error,
            params: r.params,
        }));
    }
    run.write_table("regimes", &rows)?;
    run.write_table("orderings", &orderings)
}
