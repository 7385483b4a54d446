//! Synthetic datasets drawn from the generative model over clustered latent inputs.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::linalg::Matrix;
use crate::model::{forward_simulate, make_two_cluster_inputs, std_normal, CategoricalDataset};
use crate::scalar::Scalar;

use super::format::fmt_real;
use super::table::{Schema, Variable};

/// Signal variance of the weight functions used to simulate data.
pub const SIM_SIGNAL_VARIANCE: f64 = 16.0;
/// ARD weight of every latent dimension used to simulate data.
pub const SIM_ARD_WEIGHT: f64 = 0.25;
/// Redraws allowed per variable before giving up on observing two categories.
const MAX_REDRAWS: usize = 100;

/// Three-cluster centers of the clinical-style generator.
const THREE_CLUSTER_CENTERS: [[f64; 2]; 3] = [[0.0, 2.5], [-2.165, -1.25], [2.165, -1.25]];
const THREE_CLUSTER_SD: f64 = 0.7;

/// Simulated dataset with its ground-truth latent inputs and cluster labels.
#[derive(Clone, Debug)]
pub struct SimulatedData<T> {
    pub schema: Schema,
    pub data: CategoricalDataset,
    pub latent: Matrix<T>,
    pub clusters: Vec<usize>,
}

fn padded(i: usize, max: usize) -> String {
    let width = max.to_string().len();
    format!("{i:0width$}")
}

/// Draws every variable from its GP-softmax model at `x`. A variable that
/// shows fewer than two distinct categories is redrawn so that the table can
/// be reloaded.
fn simulate_columns<T: Scalar, R: Rng + ?Sized>(
    x: &Matrix<T>,
    cardinalities: &[usize],
    rng: &mut R,
) -> Result<CategoricalDataset> {
    let n = x.rows();
    let kernel = KernelParams::new(T::lit(SIM_SIGNAL_VARIANCE), &vec![T::lit(SIM_ARD_WEIGHT); x.cols()])?;
    let mut columns = Vec::with_capacity(cardinalities.len());
    for &k in cardinalities {
        let mut attempt = 0;
        let column = loop {
            let (_, col) = forward_simulate(x, std::slice::from_ref(&kernel), &[k], rng)?;
            let first = col.get(0, 0);
            if n < 2 || (1..n).any(|i| col.get(i, 0) != first) {
                break col;
            }
            attempt += 1;
            if attempt == MAX_REDRAWS {
                return Err(Error::InvalidDataset("simulated variable stayed constant".into()));
            }
        };
        columns.push(column);
    }
    let values = (0..n).flat_map(|i| columns.iter().map(move |c| c.get(i, 0))).collect();
    CategoricalDataset::new(cardinalities.to_vec(), values)
}

/// `n` observations of `d` variables with `k` categories each, generated
/// from one-dimensional inputs drawn from a balanced two-component mixture.
pub fn generate_two_cluster<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    d: usize,
    k: usize,
    rng: &mut R,
) -> Result<SimulatedData<T>> {
    if n == 0 || d == 0 || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need n >= 1, d >= 1 and k >= 2 (got n = {n}, d = {d}, k = {k})"
        )));
    }
    let inputs = make_two_cluster_inputs::<T, R>(n, rng);
    let data = simulate_columns(&inputs.x, &vec![k; d], rng)?;
    let schema = Schema::new(
        (0..d)
            .map(|j| Variable {
                name: format!("var_{}", padded(j + 1, d)),
                labels: (0..k).map(|c| padded(c, k - 1)).collect(),
            })
            .collect(),
    )?;
    Ok(SimulatedData {
        schema,
        data,
        latent: inputs.x,
        clusters: inputs.labels,
    })
}

fn binary(name: String) -> Variable {
    Variable {
        name,
        labels: vec!["no".into(), "yes".into()],
    }
}

fn leveled(name: &str, k: usize) -> Variable {
    Variable {
        name: name.into(),
        labels: (1..=k).map(|i| format!("level_{i}")).collect(),
    }
}

/// The 42-variable clinical-style schema: twelve admission and demographic
/// variables followed by binary comorbidity, complication and symptom groups.
pub fn table1_schema() -> Schema {
    let mut v = vec![
        binary("admitted_hospital".into()),
        binary("symptomatic_at_diagnosis".into()),
        binary("admitted_icu".into()),
        Variable {
            name: "blood_type".into(),
            labels: ["A", "AB", "B", "O"].map(String::from).to_vec(),
        },
        leveled("race", 4),
        binary("employed".into()),
        leveled("employer_type", 5),
        leveled("insurance", 2),
        leveled("marital_status", 2),
        leveled("primary_language", 3),
        binary("known_sick_contact".into()),
        leveled("sick_contact_type", 4),
    ];
    let groups: [(&str, usize); 9] = [
        ("comorbidity", 7),
        ("complication", 9),
        ("thermodynamic_symptom", 2),
        ("lower_respiratory_symptom", 2),
        ("heent_symptom", 4),
        ("gi_symptom", 3),
        ("hemodynamic_symptom", 1),
        ("cardiovascular_symptom", 1),
        ("musculoskeletal_symptom", 1),
    ];
    for (prefix, count) in groups {
        if count == 1 {
            v.push(binary(prefix.to_string()));
        } else {
            v.extend((1..=count).map(|i| binary(format!("{prefix}_{i}"))));
        }
    }
    Schema::new(v).expect("static schema is valid")
}

/// `n` observations of the clinical-style schema generated from a
/// two-dimensional latent space with three equally likely clusters.
pub fn generate_table1_like<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SimulatedData<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one observation".into()));
    }
    let schema = table1_schema();
    let mut clusters: Vec<usize> = (0..n).map(|i| i % 3).collect();
    clusters.shuffle(rng);
    let sd = T::lit(THREE_CLUSTER_SD);
    let latent = Matrix::from_fn(n, 2, |i, j| {
        T::lit(THREE_CLUSTER_CENTERS[clusters[i]][j]) + sd * std_normal::<T, R>(rng)
    });
    let data = simulate_columns(&latent, &schema.cardinalities(), rng)?;
    Ok(SimulatedData {
        schema,
        data,
        latent,
        clusters,
    })
}

/// Ground-truth sidecar: `id,x_1..x_Q,cluster`.
pub fn write_ground_truth<T: Scalar, W: Write>(writer: W, latent: &Matrix<T>, clusters: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=latent.cols()).map(|j| format!("x_{j}")));
    header.push("cluster".into());
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for i in 0..latent.rows() {
        let mut row = vec![i.to_string()];
        row.extend(latent.row(i).iter().map(|&v| fmt_real(v)));
        row.push(clusters[i].to_string());
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
