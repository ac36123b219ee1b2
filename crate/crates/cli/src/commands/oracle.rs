//! `oracle`: best sparse, best low-rank, robust PCA and budgeted
//! sparse + low-rank decompositions of one matrix.
//!
//! Budgets follow the estimator's accounting on an `rows × cols` matrix
//! with `total = budget·rows·cols`: top-k keeps `⌊total/rows⌋` entries per
//! row, the SVD keeps rank `⌊total/(rows + cols)⌋`, and the budgeted
//! decomposition splits `total` by `ratio` between the two.

use std::path::PathBuf;

use clap::ValueEnum;
use scatterbrain::analysis::row_normalize;
use scatterbrain::genmodel::{generate_clustered, ClusterModel};
use scatterbrain::oracles::{
    budgeted_sl_decomposition, robust_pca, topk_sparse, truncated_svd, RpcaParams,
};
use scatterbrain::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::usage;
use crate::artifacts::Run;
use crate::error::CliResult;
use crate::load_input;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    All,
    Topk,
    Svd,
    Rpca,
    Budgeted,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Matrix file (.csv or .bin). Without it a clustered exp(βA) is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Divide every row by its sum before decomposing.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    normalize: bool,
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
    /// Budget fraction that sizes the oracles.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    /// Entries per row for top-k (overrides the budget).
    #[arg(long)]
    k: Option<usize>,
    /// Rank for the SVD (overrides the budget).
    #[arg(long)]
    rank: Option<usize>,
    /// Robust PCA sparsity weight (default 1/√max(rows, cols)).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub method: Method,
    pub normalize: bool,
    pub n: usize,
    pub d: usize,
    #[serde(alias = "C")]
    pub clusters: usize,
    pub delta: f64,
    pub beta: f64,
    pub budget: f64,
    pub ratio: f64,
    pub k: Option<usize>,
    pub rank: Option<usize>,
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub mu0: Option<f64>,
    pub rho: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let rpca = RpcaParams::default();
        Self {
            input: None,
            method: Method::All,
            normalize: false,
            n: 128,
            d: 32,
            clusters: 32,
            delta: 0.1,
            beta: 2.0,
            budget: 0.125,
            ratio: 3.0,
            k: None,
            rank: None,
            lambda: rpca.lambda,
            tol: rpca.tol,
            max_iter: rpca.max_iter,
            mu0: rpca.mu0,
            rho: rpca.rho,
        }
    }
}

/// One decomposition in the summary table.
#[derive(Debug, Serialize)]
struct Row {
    method: &'static str,
    sparse_per_row: Option<usize>,
    rank: Option<usize>,
    nnz: Option<usize>,
    params: usize,
    error: f64,
    rel_error: f64,
}

fn input_matrix(run: &Run, s: &Settings) -> CliResult<Matrix> {
    let m = match &s.input {
        Some(path) => {
            let m = load_input(path)?;
            run.check_materialize(m.rows().max(m.cols()), "oracle")?;
            m
        }
        None => {
            run.check_materialize(s.n, "oracle")?;
            let model = ClusterModel {
                n: s.n,
                d: s.d,
                clusters: s.clusters,
                delta: s.delta,
                beta: s.beta,
                seed: run.seed(),
            };
            generate_clustered(&model)?.m_beta
        }
    };
    Ok(if s.normalize { row_normalize(&m)? } else { m })
}

pub fn run(run: &mut Run, s: &Settings) -> CliResult<()> {
    if !(s.budget > 0.0 && s.budget <= 1.0) || !(s.ratio >= 0.0 && s.ratio.is_finite()) {
        return Err(usage("need 0 < budget <= 1 and ratio >= 0"));
    }
    let m = input_matrix(run, s)?;
    let (rows, cols) = m.shape();
    let norm = m.frobenius_norm();
    let rel = |e: f64| if norm > 0.0 { e / norm } else { 0.0 };
    let total = s.budget * (rows * cols) as f64;
    let k =
        s.k.unwrap_or((total / rows as f64).floor() as usize)
            .min(cols);
    let r = s
        .rank
        .unwrap_or((total / (rows + cols) as f64).floor() as usize)
        .min(rows.min(cols));
    let sparse_share = total * s.ratio / (1.0 + s.ratio);
    let k_s = ((sparse_share / rows as f64).floor() as usize).min(cols);
    let r_c =
        (((total - sparse_share) / (rows + cols) as f64).floor() as usize).min(rows.min(cols));
    let wants = |x: Method| s.method == Method::All || s.method == x;

    let mut table = Vec::new();
    let mut details = serde_json::Map::new();
    if wants(Method::Topk) {
        let sparse = run.timed("topk", || topk_sparse(&m, k))?;
        let dense = sparse.to_dense();
        let error = m.sub(&dense)?.frobenius_norm();
        table.push(Row {
            method: "topk",
            sparse_per_row: Some(k),
            rank: None,
            nnz: Some(sparse.nnz()),
            params: sparse.nnz(),
            error,
            rel_error: rel(error),
        });
        run.write_matrix("topk_s", &dense)?;
    }
    if wants(Method::Svd) {
        let svd = run.timed("svd", || truncated_svd(&m, r))?;
        let l = svd.reconstruct();
        let error = m.sub(&l)?.frobenius_norm();
        table.push(Row {
            method: "svd",
            sparse_per_row: None,
            rank: Some(svd.rank()),
            nnz: None,
            params: svd.rank() * (rows + cols),
            error,
            rel_error: rel(error),
        });
        details.insert("svd".into(), json!({ "sigma": svd.sigma }));
        run.write_matrix("svd_l", &l)?;
    }
    if wants(Method::Rpca) {
        let params = RpcaParams {
            lambda: s.lambda,
            tol: s.tol,
            max_iter: s.max_iter,
            mu0: s.mu0,
            rho: s.rho,
        };
        let res = run.timed("rpca", || robust_pca(&m, params))?;
        let error = m.sub(&res.l)?.sub(&res.s)?.frobenius_norm();
        table.push(Row {
            method: "rpca",
            sparse_per_row: None,
            rank: Some(res.rank),
            nnz: Some(res.nnz),
            params: res.rank * (rows + cols) + res.nnz,
            error,
            rel_error: rel(error),
        });
        details.insert(
            "rpca".into(),
            json!({
                "lambda": res.lambda,
                "iterations": res.iterations,
                "converged": res.converged,
                "primal_residual": res.primal_residual,
                "trace": res.trace,
            }),
        );
        run.write_matrix("rpca_l", &res.l)?;
        run.write_matrix("rpca_s", &res.s)?;
    }
    if wants(Method::Budgeted) {
        let dec = run.timed("budgeted", || budgeted_sl_decomposition(&m, k_s, r_c))?;
        let s_dense = dec.sparse_part.to_dense();
        table.push(Row {
            method: "budgeted",
            sparse_per_row: Some(k_s),
            rank: Some(dec.lowrank_part.rank()),
            nnz: Some(dec.sparse_part.nnz()),
            params: dec.sparse_part.nnz() + dec.lowrank_part.rank() * (rows + cols),
            error: dec.error,
            rel_error: rel(dec.error),
        });
        details.insert("budgeted".into(), json!({ "trace": dec.trace }));
        run.write_matrix("budgeted_l", &dec.lowrank_part.reconstruct())?;
        run.write_matrix("budgeted_s", &s_dense)?;
    }
    let report = json!({
        "rows": rows,
        "cols": cols,
        "frobenius_norm": norm,
        "source": if s.input.is_some() { "file" } else { "clustered" },
        "budget_params": total,
        "methods": table,
        "details": details,
    });
    run.write_json("report.json", &report)?;
    run.write_table("oracle", &table)
}
