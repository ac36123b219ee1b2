//! `bench`: wall time and peak heap of exact attention, the estimator and
//! a pure low-rank estimate as the sequence length grows.
//!
//! The per-row parameter count is fixed at `budget × min(ns)` for every
//! `n`, so the estimator's budget fraction is `budget` at the smallest `n`
//! and shrinks as `1/n` above it. The low-rank baseline spends the same
//! per-row count on features alone (`m = per_row / 2`).

use std::time::Instant;

use clap::ValueEnum;
use scatterbrain::alloc_track::{current_bytes, peak_bytes, reset_peak};
use scatterbrain::approx::{run_scatterbrain, BudgetConfig, ScatterbrainOptions, SupportMode};
use scatterbrain::attention::materialized_attention;
use scatterbrain::genmodel::gaussian_batch;
use scatterbrain::{rng, Batch};
use serde::{Deserialize, Serialize};

use super::usage;
use crate::artifacts::Run;
use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Lowrank,
    Scatterbrain,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Lowrank => "lowrank",
            Method::Scatterbrain => "scatterbrain",
        }
    }
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Sequence lengths, ascending.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    methods: Option<Vec<Method>>,
    /// Budget fraction at the smallest n.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    dv: Option<usize>,
    /// Timed runs per point; the median is reported.
    #[arg(long)]
    repeats: Option<usize>,
    /// Wall-time limit per point in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub ns: Vec<usize>,
    pub methods: Vec<Method>,
    pub budget: f64,
    pub ratio: f64,
    pub d: usize,
    pub dv: usize,
    pub repeats: usize,
    pub time_limit: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            ns: vec![512, 1024, 2048, 4096],
            methods: vec![Method::Exact, Method::Scatterbrain, Method::Lowrank],
            budget: 0.125,
            ratio: 3.0,
            d: 64,
            dv: 64,
            repeats: 5,
            time_limit: 60.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub method: &'static str,
    pub n: usize,
    /// Median over the completed runs.
    pub wall_ms: f64,
    /// Largest heap growth above the pre-run level over the completed runs.
    pub peak_bytes: usize,
    pub budget_fraction: f64,
    pub per_row_params: usize,
    pub features: Option<usize>,
    pub support_size: Option<usize>,
    pub runs: usize,
    pub timed_out: bool,
}

struct Measured {
    features: Option<usize>,
    support_size: Option<usize>,
}

fn once(
    method: Method,
    batch: &Batch,
    per_row: usize,
    ratio: f64,
    seed: u64,
) -> CliResult<Measured> {
    let n = batch.n_q();
    match method {
        Method::Exact => {
            materialized_attention(batch)?;
            Ok(Measured {
                features: None,
                support_size: None,
            })
        }
        Method::Scatterbrain | Method::Lowrank => {
            let fraction = (per_row as f64 / n as f64).min(1.0);
            let mut opts = ScatterbrainOptions {
                budget: BudgetConfig::new(fraction, ratio)?,
                ..Default::default()
            };
            if method == Method::Lowrank {
                opts.support = SupportMode::Empty;
                opts.features = Some((per_row / 2).max(1));
            }
            let r = run_scatterbrain(batch, &opts, seed)?;
            Ok(Measured {
                features: Some(r.feature_map.features()),
                support_size: Some(r.correction.len()),
            })
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let h = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[h]
    } else {
        (xs[h - 1] + xs[h]) / 2.0
    }
}

pub fn run(run: &mut Run, s: &Settings) -> CliResult<()> {
    if s.ns.is_empty() || s.methods.is_empty() || s.repeats == 0 {
        return Err(usage("need at least one n, one method and one repeat"));
    }
    if s.ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("--ns must be strictly ascending"));
    }
    if !(s.budget > 0.0 && s.budget <= 1.0) || !(s.time_limit > 0.0) {
        return Err(usage("need 0 < budget <= 1 and a positive time limit"));
    }
    if s.methods.contains(&Method::Exact) {
        run.check_materialize(*s.ns.last().expect("nonempty"), "exact attention")?;
    }
    let per_row = ((s.budget * s.ns[0] as f64).floor() as usize).max(2);
    let seed = run.seed();
    let mut records = Vec::new();
    for &n in &s.ns {
        let batch: Batch = gaussian_batch(n, n, s.d, s.dv, rng::derive(seed, n as u64), false)?;
        for &method in &s.methods {
            let (mut walls, mut peak, mut timed_out) = (Vec::new(), 0usize, false);
            let mut measured = None;
            let start = Instant::now();
            for _ in 0..s.repeats {
                reset_peak();
                let base = current_bytes();
                let t = Instant::now();
                measured = Some(once(method, &batch, per_row, s.ratio, seed)?);
                walls.push(t.elapsed().as_secs_f64() * 1e3);
                peak = peak.max(peak_bytes().saturating_sub(base));
                if start.elapsed().as_secs_f64() > s.time_limit {
                    timed_out = walls.len() < s.repeats;
                    break;
                }
            }
            let measured = measured.expect("at least one run");
            records.push(Record {
                method: method.name(),
                n,
                wall_ms: median(walls.clone()).max(f64::MIN_POSITIVE),
                peak_bytes: peak,
                budget_fraction: match method {
                    Method::Exact => 1.0,
                    _ => (per_row as f64 / n as f64).min(1.0),
                },
                per_row_params: if method == Method::Exact { n } else { per_row },
                features: measured.features,
                support_size: measured.support_size,
                runs: walls.len(),
                timed_out,
            });
        }
    }
    records.sort_by(|a, b| (a.method, a.n).cmp(&(b.method, b.n)));
    run.write_table("bench", &records)
}
