use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Categorical latent Gaussian process: embeddings and densities for
/// multivariate categorical tables.
///
/// Exit codes: 0 success, 2 bad input, 3 numerical failure.
/// Set CATLGP_THREADS to cap the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "catlgp", version, about, long_about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic categorical dataset with known latent structure
    Simulate(SimulateArgs),
    /// Fit a model to a categorical CSV table
    Fit(FitArgs),
    /// Fit one model per candidate latent dimension and compare their ELBOs
    SelectDim(SelectDimArgs),
    /// Export the latent means and variances of a fitted model
    Embed(EmbedArgs),
    /// Evaluate the latent density of a fitted model on a grid
    Density(DensityArgs),
    /// Training misclassification rate against the majority-rule baseline
    Error(ErrorArgs),
    /// Render embeddings or a density grid as an SVG figure
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterKind {
    /// Two Gaussian clusters on one latent axis
    TwoGaussian,
    /// 42-variable clinical-style schema with three latent clusters in 2-D
    Table1,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Number of observations
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Number of variables (two-gaussian only) [default: 10]
    #[arg(long)]
    pub d: Option<usize>,
    /// Categories per variable (two-gaussian only) [default: 2]
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value_t = ClusterKind::TwoGaussian)]
    pub clusters: ClusterKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth CSV of latent inputs and cluster labels [default: <out>.truth.csv]
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Options shared by every command that trains models.
#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Input CSV with a header row; one column per variable
    #[arg(long)]
    pub data: PathBuf,
    /// Cell value treated as missing, in addition to empty cells
    #[arg(long, default_value = "NA")]
    pub missing_token: String,
    /// Number of inducing inputs
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    /// Maximum number of optimizer iterations
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Monte Carlo samples per training step
    #[arg(long, default_value_t = 10)]
    pub mc_train: usize,
    /// Monte Carlo samples for final ELBO evaluation and prediction
    #[arg(long, default_value_t = 500)]
    pub mc_eval: usize,
    /// Adam step size
    #[arg(long, default_value_t = 0.01)]
    pub step_size: f64,
    /// Relative change of the smoothed ELBO that stops training; 0 disables
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Prior variance of the latent inputs
    #[arg(long, default_value_t = 1.0)]
    pub prior_var: f64,
    /// Keep the inducing inputs fixed at their initial locations
    #[arg(long)]
    pub freeze_z: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    /// Latent dimension
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    /// Independent restarts; the fit with the largest ELBO is kept
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Directory receiving model.json, trace.jsonl and manifest.json
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectDimArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    /// Comma-separated latent dimensions to compare, e.g. 1,2,5
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub q_candidates: Vec<usize>,
    /// A dimension is effective when its relevance is at least this fraction of the largest
    #[arg(long, default_value_t = 0.05)]
    pub relevance_ratio: f64,
    /// Output CSV with columns Q,elbo,mc_std_error,effective_dims
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV supplying one label per observation
    #[arg(long, requires = "label_column")]
    pub labels: Option<PathBuf>,
    /// Column of --labels to attach as the label column
    #[arg(long, requires = "labels")]
    pub label_column: Option<String>,
    /// Output embeddings CSV
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Latent dimensions on the two axes, zero-based
    #[arg(long, value_parser = parse_dims, default_value = "0,1")]
    pub dims: (usize, usize),
    /// Cells per axis
    #[arg(long, default_value_t = 100)]
    pub resolution: usize,
    /// Axis margin beyond the extreme means, in posterior standard deviations
    #[arg(long, default_value_t = 4.0)]
    pub coverage_sd: f64,
    /// Output density file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ErrorArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// The training CSV the model was fitted to
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "NA")]
    pub missing_token: String,
    /// Monte Carlo samples for the predictive distribution [default: the model's evaluation setting]
    #[arg(long)]
    pub mc_eval: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON report
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("input").required(true).args(["embeddings", "density"])))]
pub struct PlotArgs {
    /// Embeddings CSV to draw as a scatter plot
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Density file to draw as a heat map
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Column of the embeddings CSV used to color the points
    #[arg(long, conflicts_with = "density")]
    pub label_column: Option<String>,
    /// Latent dimensions on the two axes, zero-based [default: 0,1 for embeddings, the grid's own for densities]
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<(usize, usize)>,
    /// Figure title
    #[arg(long)]
    pub title: Option<String>,
    /// Output SVG
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err(format!("expected two comma-separated indices, got '{s}'"));
    };
    let parse = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| format!("'{v}' is not a non-negative integer"))
    };
    Ok((parse(a)?, parse(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn dims_parser() {
        assert_eq!(parse_dims("0,1"), Ok((0, 1)));
        assert_eq!(parse_dims(" 2 , 0 "), Ok((2, 0)));
        assert!(parse_dims("1").is_err());
        assert!(parse_dims("1,2,3").is_err());
        assert!(parse_dims("a,1").is_err());
    }
}
