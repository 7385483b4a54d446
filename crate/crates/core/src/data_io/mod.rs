//! Dataset ingestion, synthetic data, latent densities and artifact files.

mod density;
mod export;
mod format;
mod synth;
mod table;

pub use density::{latent_density, DensityGrid, GridSpec};
pub use export::{
    export_density, export_embeddings, export_trace, load_model, read_density, read_embeddings, read_model, read_trace,
    save_model, write_atomic, write_density, write_embeddings, write_model, write_trace, Embeddings,
    MODEL_FORMAT_VERSION,
};
pub use format::fmt_real;
pub use synth::{
    generate_table1_like, generate_two_cluster, table1_schema, write_ground_truth, SimulatedData, SIM_ARD_WEIGHT,
    SIM_SIGNAL_VARIANCE,
};
pub use table::{load_csv, read_table, write_table, Schema, Variable, DEFAULT_MISSING};
