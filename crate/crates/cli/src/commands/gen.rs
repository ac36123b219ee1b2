//! `gen`: synthetic matrices and attention batches written to files.
//!
//! `batch` uses the same seed derivation as `approx`, so `approx --input`
//! on its output reproduces a generated `approx` run with the same seed.

use clap::ValueEnum;
use scatterbrain::genmodel::{
    gaussian_batch, generate_clustered, generate_separation, ClusterModel, SeparationSpec,
    SeparationVariant,
};
use scatterbrain::io::{write_matrix_bin, MatrixFormat};
use scatterbrain::{rng, Batch, Matrix};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::Run;
use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Clustered points: q, a = qqᵀ, m = exp(βa) and labels.
    Clustered,
    /// Sign matrix with a nearly diagonal Gram matrix; exp(qqᵀ) ≈ identity + ones.
    Example1,
    /// Scaled sign matrix; exp(qqᵀ) ≈ (e^r − 1)·identity + ones.
    Example2,
    /// Gaussian q, k and v as read by `approx --input`.
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, alias = "C")]
    clusters: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Gram off-diagonal scale for the sign examples.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sets epsilon to √γ / n^{1/4} for example1.
    #[arg(long)]
    gamma: Option<f64>,
    /// Diagonal logit for example2 (default ln n).
    #[arg(long)]
    r: Option<f64>,
    /// Key rows for batches (default n).
    #[arg(long)]
    nk: Option<usize>,
    #[arg(long)]
    dv: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    causal: bool,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub kind: Kind,
    pub n: usize,
    pub d: usize,
    #[serde(alias = "C")]
    pub clusters: usize,
    pub delta: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub gamma: Option<f64>,
    pub r: Option<f64>,
    pub nk: Option<usize>,
    pub dv: Option<usize>,
    pub causal: bool,
    pub format: Format,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            kind: Kind::Clustered,
            n: 128,
            d: 32,
            clusters: 32,
            delta: 0.1,
            beta: 1.0,
            epsilon: 0.25,
            gamma: None,
            r: None,
            nk: None,
            dv: None,
            causal: false,
            format: Format::Csv,
        }
    }
}

fn save(run: &mut Run, format: Format, stem: &str, m: &Matrix) -> CliResult<()> {
    match format {
        Format::Csv => run.write_matrix(stem, m),
        Format::Bin => {
            let name = format!("{stem}.{}", MatrixFormat::Bin.extension());
            run.write_plain(&name, |w| Ok(write_matrix_bin(m, w)?))
        }
    }
}

#[derive(Debug, Serialize)]
struct Label {
    row: usize,
    cluster: usize,
}

pub fn run(run: &mut Run, s: &Settings) -> CliResult<()> {
    let seed = run.seed();
    match s.kind {
        Kind::Clustered => {
            run.check_materialize(s.n, "gen clustered")?;
            let model = ClusterModel {
                n: s.n,
                d: s.d,
                clusters: s.clusters,
                delta: s.delta,
                beta: s.beta,
                seed,
            };
            let sample = run.timed("generate", || generate_clustered(&model))?;
            save(run, s.format, "q", &sample.q)?;
            save(run, s.format, "a", &sample.a)?;
            save(run, s.format, "m", &sample.m_beta)?;
            let labels: Vec<Label> = sample
                .labels
                .iter()
                .enumerate()
                .map(|(row, &cluster)| Label { row, cluster })
                .collect();
            run.write_table("labels", &labels)?;
            run.write_json(
                "report.json",
                &json!({ "cluster_sizes": sample.sizes, "warnings": model.warnings() }),
            )
        }
        Kind::Example1 | Kind::Example2 => {
            run.check_materialize(s.n, "gen example")?;
            let variant = match s.kind {
                Kind::Example1 => SeparationVariant::Example1,
                _ => SeparationVariant::Example2 {
                    r: s.r.unwrap_or((s.n as f64).ln()),
                },
            };
            let spec = SeparationSpec {
                variant,
                n: s.n,
                epsilon: s.epsilon,
                gamma: s.gamma,
                seed,
            };
            let sample = run.timed("generate", || generate_separation(&spec))?;
            save(run, s.format, "q", &sample.q)?;
            save(run, s.format, "m", &sample.m)?;
            save(run, s.format, "e_sl", &sample.e_sl)?;
            let bound =
                (s.kind == Kind::Example1).then_some(sample.epsilon * sample.epsilon * s.n as f64);
            run.write_json(
                "report.json",
                &json!({
                    "d": sample.d,
                    "epsilon": sample.epsilon,
                    "error": sample.error,
                    "error_bound": bound,
                }),
            )
        }
        Kind::Batch => {
            let nk = s.nk.unwrap_or(s.n);
            let dv = s.dv.unwrap_or(s.d);
            let b: Batch = run.timed("generate", || {
                gaussian_batch(s.n, nk, s.d, dv, rng::derive(seed, 2), s.causal)
            })?;
            save(run, s.format, "q", b.q())?;
            save(run, s.format, "k", b.k())?;
            save(run, s.format, "v", b.v())
        }
    }
}
