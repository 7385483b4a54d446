use std::fs::File;
use std::path::{Path, PathBuf};

use catlgp::data_io::{self, GridSpec};
use catlgp::inference::NoiseSeed;
use catlgp::model::{CategoricalDataset, ModelConfig};
use catlgp::training::{self, FittedModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::args::{
    ClusterKind, DensityArgs, EmbedArgs, ErrorArgs, FitArgs, PlotArgs, SelectDimArgs, SimulateArgs, TrainArgs,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{sidecar_path, Recorder};
use crate::svg;

const DEFAULT_D: usize = 10;
const DEFAULT_K: usize = 2;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn load_data(path: &Path, missing_token: &str) -> CliResult<CategoricalDataset> {
    let (_, data) = data_io::load_csv(path, &["", missing_token])?;
    Ok(data)
}

/// Every cell of column `name` in the CSV at `path`.
fn read_column(path: &Path, name: &str) -> CliResult<Vec<String>> {
    let file = File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |e: csv::Error| catlgp::Error::MalformedCsv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(malformed)?;
    let idx = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::InvalidFlag(format!("column '{name}' not found in {}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(malformed)?;
        out.push(rec[idx].to_string());
    }
    Ok(out)
}

fn model_config(t: &TrainArgs, q: usize) -> CliResult<ModelConfig<f64>> {
    if t.mc_train == 0 || t.mc_eval == 0 {
        return Err(CliError::InvalidFlag(
            "--mc-train and --mc-eval must be at least 1".into(),
        ));
    }
    if !(t.step_size > 0.0 && t.step_size.is_finite()) {
        return Err(CliError::InvalidFlag("--step-size must be positive".into()));
    }
    if !(t.prior_var > 0.0 && t.prior_var.is_finite()) {
        return Err(CliError::InvalidFlag("--prior-var must be positive".into()));
    }
    if t.tol.is_nan() {
        return Err(CliError::InvalidFlag("--tol must be a number".into()));
    }
    Ok(ModelConfig {
        latent_dim: q,
        n_inducing: t.m,
        prior_var_x: t.prior_var,
        mc_samples_train: t.mc_train,
        mc_samples_eval: t.mc_eval,
        step_size: t.step_size,
        max_iters: t.iters,
        convergence_tol: t.tol,
        freeze_inducing: t.freeze_z,
        rng_seed: t.seed,
        ..ModelConfig::default()
    })
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.n == 0 {
        return Err(CliError::InvalidFlag("--n must be at least 1".into()));
    }
    let mut rec = Recorder::start("simulate", args, Some(args.seed))?;
    let mut r = rng(args.seed);
    let sim = match args.clusters {
        ClusterKind::TwoGaussian => {
            let (d, k) = (args.d.unwrap_or(DEFAULT_D), args.k.unwrap_or(DEFAULT_K));
            if d == 0 {
                return Err(CliError::InvalidFlag("--d must be at least 1".into()));
            }
            if k < 2 {
                return Err(CliError::InvalidFlag("--k must be at least 2".into()));
            }
            rec.set_config("d", d)?;
            rec.set_config("k", k)?;
            data_io::generate_two_cluster::<f64, _>(args.n, d, k, &mut r)?
        }
        ClusterKind::Table1 => {
            if args.d.is_some() || args.k.is_some() {
                return Err(CliError::InvalidFlag(
                    "--d and --k do not apply to --clusters table1".into(),
                ));
            }
            data_io::generate_table1_like::<f64, _>(args.n, &mut r)?
        }
    };
    let truth = args
        .truth
        .clone()
        .unwrap_or_else(|| args.out.with_extension("truth.csv"));
    rec.set_config("truth", &truth)?;

    data_io::write_atomic(&args.out, |w| data_io::write_table(w, &sim.schema, &sim.data, "NA"))?;
    data_io::write_atomic(&truth, |w| data_io::write_ground_truth(w, &sim.latent, &sim.clusters))?;
    rec.finish(&[&args.out, &truth], &sidecar_path(&args.out))?;
    println!(
        "wrote {} ({} rows, {} variables) and {}",
        args.out.display(),
        sim.data.n_obs(),
        sim.data.n_vars(),
        truth.display()
    );
    Ok(())
}

fn summarize(model: &FittedModel<f64>, data: &CategoricalDataset, seed: NoiseSeed) -> CliResult<serde_json::Value> {
    let est = model.evaluate(data, seed)?;
    Ok(json!({
        "elbo": est.value,
        "mc_std_error": est.mc_std_error,
        "kl_x": est.kl_x,
        "kl_u": est.kl_u,
        "iterations": model.trace.len(),
        "relevance": training::dimension_relevance(&model.kernels),
        "effective_dims": training::effective_dims(model, training::DEFAULT_RELEVANCE_RATIO),
    }))
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    if args.restarts == 0 {
        return Err(CliError::InvalidFlag("--restarts must be at least 1".into()));
    }
    let config = model_config(&args.train, args.q)?;
    let mut rec = Recorder::start("fit", args, Some(args.train.seed))?;
    rec.set_config("model", &config)?;
    rec.input(&args.train.data);
    let data = load_data(&args.train.data, &args.train.missing_token)?;

    let mut r = rng(args.train.seed);
    let model = training::fit_with_restarts(&data, &config, args.restarts, &mut r)?;
    let summary = summarize(&model, &data, NoiseSeed::draw(&mut r))?;

    create_dir(&args.out_dir)?;
    let model_path = args.out_dir.join("model.json");
    let trace_path = args.out_dir.join("trace.jsonl");
    data_io::save_model(&model, &model_path)?;
    data_io::export_trace(&model.trace, &trace_path)?;
    println!(
        "fitted Q={} in {} iterations: elbo {:.4} (mc std error {:.4}), effective dims {}",
        args.q,
        model.trace.len(),
        summary["elbo"].as_f64().unwrap_or(f64::NAN),
        summary["mc_std_error"].as_f64().unwrap_or(f64::NAN),
        join_dims(&training::effective_dims(&model, training::DEFAULT_RELEVANCE_RATIO))
    );
    rec.summary(summary);
    rec.finish(&[&model_path, &trace_path], &args.out_dir.join("manifest.json"))
}

fn join_dims(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn select_dim(args: &SelectDimArgs) -> CliResult<()> {
    if args.q_candidates.contains(&0) {
        return Err(CliError::InvalidFlag("--q-candidates must be positive".into()));
    }
    if !(args.relevance_ratio >= 0.0 && args.relevance_ratio <= 1.0) {
        return Err(CliError::InvalidFlag("--relevance-ratio must lie in [0, 1]".into()));
    }
    let config = model_config(&args.train, args.q_candidates[0])?;
    let mut rec = Recorder::start("select-dim", args, Some(args.train.seed))?;
    rec.set_config("model", &config)?;
    rec.input(&args.train.data);
    let data = load_data(&args.train.data, &args.train.missing_token)?;

    let sel = training::select_latent_dim(&data, &args.q_candidates, &config, &mut rng(args.train.seed))?;
    let mut rows = Vec::new();
    for c in &sel.candidates {
        match (c.estimate(), c.effective_dims(args.relevance_ratio)) {
            (Some(e), Some(dims)) => rows.push(json!({
                "q": c.latent_dim, "elbo": e.value, "mc_std_error": e.mc_std_error, "effective_dims": dims,
            })),
            _ => {
                let msg = c.result.as_ref().err().cloned().unwrap_or_default();
                eprintln!("warning: Q={} failed: {msg}", c.latent_dim);
                rows.push(json!({ "q": c.latent_dim, "error": msg }));
            }
        }
    }
    data_io::write_atomic(&args.out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let io = |e: csv::Error| catlgp::Error::Io(e.into());
        csv.write_record(["Q", "elbo", "mc_std_error", "effective_dims"])
            .map_err(io)?;
        for c in &sel.candidates {
            let row = match (c.estimate(), c.effective_dims(args.relevance_ratio)) {
                (Some(e), Some(dims)) => [
                    c.latent_dim.to_string(),
                    data_io::fmt_real(e.value),
                    data_io::fmt_real(e.mc_std_error),
                    join_dims(&dims),
                ],
                _ => [c.latent_dim.to_string(), "NA".into(), "NA".into(), "NA".into()],
            };
            csv.write_record(&row).map_err(io)?;
        }
        csv.flush()?;
        Ok(())
    })?;

    let best = sel.best();
    let est = best.estimate().expect("best candidate has an estimate");
    println!(
        "recommended Q = {} (elbo {:.4}, mc std error {:.4}, effective dims {})",
        best.latent_dim,
        est.value,
        est.mc_std_error,
        join_dims(&best.effective_dims(args.relevance_ratio).unwrap_or_default())
    );
    rec.summary(json!({ "recommended_q": best.latent_dim, "candidates": rows }));
    rec.finish(&[&args.out], &sidecar_path(&args.out))
}

pub fn embed(args: &EmbedArgs) -> CliResult<()> {
    let mut rec = Recorder::start("embed", args, None)?;
    rec.input(&args.model);
    let model: FittedModel<f64> = data_io::load_model(&args.model)?;
    let labels = match (&args.labels, &args.label_column) {
        (Some(path), Some(col)) => {
            rec.input(path);
            Some(read_column(path, col)?)
        }
        _ => None,
    };
    data_io::export_embeddings(&model.posterior, labels.as_deref(), &args.out)?;
    println!(
        "wrote {} ({} observations, Q={})",
        args.out.display(),
        model.posterior.n_obs(),
        model.latent_dim()
    );
    rec.finish(&[&args.out], &sidecar_path(&args.out))
}

pub fn density(args: &DensityArgs) -> CliResult<()> {
    if args.resolution == 0 {
        return Err(CliError::InvalidFlag("--resolution must be at least 1".into()));
    }
    if !(args.coverage_sd >= 0.0 && args.coverage_sd.is_finite()) {
        return Err(CliError::InvalidFlag("--coverage-sd must be non-negative".into()));
    }
    let mut rec = Recorder::start("density", args, None)?;
    rec.input(&args.model);
    let model: FittedModel<f64> = data_io::load_model(&args.model)?;
    let spec = GridSpec {
        dims: args.dims,
        resolution: (args.resolution, args.resolution),
        coverage_sd: args.coverage_sd,
        bounds: None,
    };
    let grid = data_io::latent_density(&model.posterior, &spec)?;
    data_io::export_density(&grid, &args.out)?;
    println!(
        "wrote {} (integral over the grid {:.6})",
        args.out.display(),
        grid.integral()
    );
    rec.summary(json!({ "integral": grid.integral(), "x_range": grid.x_range, "y_range": grid.y_range }));
    rec.finish(&[&args.out], &sidecar_path(&args.out))
}

fn check_shapes(model: &FittedModel<f64>, data: &CategoricalDataset) -> CliResult<()> {
    let post = &model.posterior;
    if data.n_obs() != post.n_obs() {
        return Err(catlgp::Error::DimensionMismatch {
            expected: post.n_obs(),
            found: data.n_obs(),
        }
        .into());
    }
    let model_cards: Vec<usize> = post.u_means.iter().map(|m| m.rows()).collect();
    if data.cardinalities() != model_cards.as_slice() {
        return Err(catlgp::Error::InvalidDataset("data categories do not match the model".into()).into());
    }
    Ok(())
}

pub fn error(args: &ErrorArgs) -> CliResult<()> {
    let mut rec = Recorder::start("error", args, Some(args.seed))?;
    rec.input(&args.model);
    rec.input(&args.data);
    let mut model: FittedModel<f64> = data_io::load_model(&args.model)?;
    if let Some(s) = args.mc_eval {
        if s == 0 {
            return Err(CliError::InvalidFlag("--mc-eval must be at least 1".into()));
        }
        model.config.mc_samples_eval = s;
    }
    let data = load_data(&args.data, &args.missing_token)?;
    check_shapes(&model, &data)?;
    let err = training::train_error(&model, &data, &mut rng(args.seed))?;
    let baseline = training::majority_baseline_error(&data);
    let report = json!({
        "train_error": err,
        "majority_baseline_error": baseline,
        "observed_entries": data.observed_count(),
        "mc_samples": model.config.mc_samples_eval,
    });
    data_io::write_atomic(&args.out, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)?;
        Ok(())
    })?;
    let show = |v: Option<f64>| v.map_or("NA".to_string(), |e| format!("{e:.4}"));
    println!("train error {} (majority baseline {})", show(err), show(baseline));
    rec.summary(report);
    rec.finish(&[&args.out], &sidecar_path(&args.out))
}

pub fn plot(args: &PlotArgs) -> CliResult<()> {
    let mut rec = Recorder::start("plot", args, None)?;
    let doc = match (&args.embeddings, &args.density) {
        (Some(path), None) => {
            rec.input(path);
            scatter_from_file(path, args)?
        }
        (None, Some(path)) => {
            rec.input(path);
            let file = File::open(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            let grid = data_io::read_density(std::io::BufReader::new(file))?;
            if let Some(d) = args.dims {
                if d != grid.dims {
                    return Err(CliError::InvalidFlag(format!(
                        "--dims {},{} does not match the density grid's dims {},{}",
                        d.0, d.1, grid.dims.0, grid.dims.1
                    )));
                }
            }
            svg::heatmap(&grid, args.title.as_deref())
        }
        _ => {
            return Err(CliError::InvalidFlag(
                "pass exactly one of --embeddings and --density".into(),
            ))
        }
    };
    data_io::write_atomic(&args.out, |w| {
        w.write_all(doc.as_bytes())?;
        Ok(())
    })?;
    println!("wrote {}", args.out.display());
    rec.finish(&[&args.out], &sidecar_path(&args.out))
}

fn scatter_from_file(path: &PathBuf, args: &PlotArgs) -> CliResult<String> {
    let file = File::open(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let emb = data_io::read_embeddings(std::io::BufReader::new(file))?;
    let q = emb.means.cols();
    let (i, j) = args.dims.unwrap_or((0, 1));
    let column = |dim: usize| -> CliResult<(Vec<f64>, String)> {
        if dim < q {
            Ok((
                (0..emb.means.rows()).map(|n| emb.means[(n, dim)]).collect(),
                format!("dim {dim}"),
            ))
        } else if q == 1 && args.dims.is_none() {
            // one-dimensional embedding: spread along a constant axis
            Ok((vec![0.0; emb.means.rows()], String::new()))
        } else {
            Err(catlgp::Error::DimensionOutOfRange {
                index: dim,
                latent_dim: q,
            }
            .into())
        }
    };
    let (xs, xn) = column(i)?;
    let (ys, yn) = column(j)?;
    let labels = match &args.label_column {
        Some(col) => Some(read_column(path, col)?),
        None => None,
    };
    svg::scatter(&xs, &ys, labels.as_deref(), (&xn, &yn), args.title.as_deref())
}
