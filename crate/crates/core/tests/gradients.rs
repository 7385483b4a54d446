use catlgp::inference::{evaluate_elbo, NoiseSeed, Parameters, VariationalPosterior};
use catlgp::kernel::KernelParams;
use catlgp::linalg::Matrix;
use catlgp::model::{CategoricalDataset, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn tiny_problem(seed: u64) -> (CategoricalDataset, Parameters<f64>, ModelConfig<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, q, m) = (5, 2, 3);
    let cards = vec![3, 3];
    let values: Vec<Option<usize>> = (0..n * 2)
        .map(|i| if i == 7 { None } else { Some(rng.random_range(0..3)) })
        .collect();
    let data = CategoricalDataset::new(cards.clone(), values).unwrap();
    let mut normal = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let x = Matrix::from_fn(n, q, |_, _| normal(1.0));
    let z = Matrix::from_fn(m, q, |_, _| normal(1.0));
    let mut post = VariationalPosterior::new(x, 0.2, z, &cards, 0.3).unwrap();
    for v in post.x_log_vars.as_mut_slice() {
        *v += normal(0.3);
    }
    for mu in &mut post.u_means {
        for v in mu.as_mut_slice() {
            *v = normal(0.8);
        }
    }
    for raw in &mut post.u_cov_raw {
        for v in raw.iter_mut() {
            *v += normal(0.2);
        }
    }
    let kernels = vec![
        KernelParams::new(1.4, &[0.7, 1.3]).unwrap(),
        KernelParams::new(0.8, &[1.1, 0.5]).unwrap(),
    ];
    let config = ModelConfig {
        latent_dim: q,
        n_inducing: m,
        ..ModelConfig::default()
    };
    (
        data,
        Parameters {
            posterior: post,
            kernels,
        },
        config,
    )
}

fn value(data: &CategoricalDataset, p: &Parameters<f64>, cfg: &ModelConfig<f64>, seed: NoiseSeed, s: usize) -> f64 {
    evaluate_elbo(data, &p.posterior, &p.kernels, cfg, seed, s, false)
        .unwrap()
        .estimate
        .value
}

#[test]
fn analytic_gradients_match_central_differences() {
    let h = 1e-5;
    for problem_seed in [1u64, 2] {
        let (data, params, cfg) = tiny_problem(problem_seed);
        let seed = NoiseSeed(17 + problem_seed);
        let s = 3;
        let eval = evaluate_elbo(&data, &params.posterior, &params.kernels, &cfg, seed, s, true).unwrap();
        assert_eq!(eval.clamped_variances, 0);
        let analytic = eval.gradients.unwrap().to_flat();
        let base = params.to_flat();
        assert_eq!(analytic.len(), base.len());
        for group in params.groups() {
            let mut worst = 0.0f64;
            for i in group.range.clone() {
                let mut p = params.clone();
                let mut theta = base.clone();
                theta[i] = base[i] + h;
                p.set_flat(&theta).unwrap();
                let up = value(&data, &p, &cfg, seed, s);
                theta[i] = base[i] - h;
                p.set_flat(&theta).unwrap();
                let down = value(&data, &p, &cfg, seed, s);
                let fd = (up - down) / (2.0 * h);
                let err = (analytic[i] - fd).abs();
                assert!(
                    err <= 1e-4 * fd.abs() + 1e-7,
                    "{} [{}]: analytic {} vs fd {}",
                    group.name,
                    i - group.range.start,
                    analytic[i],
                    fd
                );
                worst = worst.max(err / (fd.abs() + 1e-3));
            }
            eprintln!("{}: worst scaled error {worst:.2e}", group.name);
        }
    }
}

#[test]
fn frozen_inducing_inputs_get_zero_gradient() {
    let (data, params, mut cfg) = tiny_problem(3);
    cfg.freeze_inducing = true;
    let eval = evaluate_elbo(&data, &params.posterior, &params.kernels, &cfg, NoiseSeed(5), 2, true).unwrap();
    let g = eval.gradients.unwrap();
    assert!(g.posterior.inducing_inputs.as_slice().iter().all(|&v| v == 0.0));
    assert!(g.posterior.x_means.as_slice().iter().any(|&v| v != 0.0));
}
