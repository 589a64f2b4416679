//! One function per subcommand. Each loads data, runs, writes its files and
//! `run.json` into the output directory, and returns what it computed.

mod basic;
mod boundary;
mod confound;
mod efficiency;
mod fae;
mod surrogate;
mod sweep;

use std::path::PathBuf;

use gradguard::datasets::LabeledDataset;
use gradguard::model::Params;
use gradguard::training::{train_from, TrainHistory};

pub use basic::{explain, gen_data, train, ExplainOutput, GenDataOutput, HistoryRow, TrainOutput};
pub use boundary::{boundary_field, FieldOutput, FieldRow, FieldSummary};
pub use confound::{confound_report, ConfoundOutput, ConfoundRow, SummaryRow};
pub use efficiency::{data_efficiency, EfficiencyOutput, EfficiencyRow};
pub use fae::{fae, FaeOutput, FaeRow};
pub use surrogate::{bench, surrogate, BenchOutput, BenchRow, FidelityRow, SurrogateOutput, SurrogateRow};
pub use sweep::{lambda_sweep, SweepOutput, SweepRow};

use crate::checkpoint::Checkpoint;
use crate::config::Settings;
use crate::error::{HarnessError, Result};

pub const COMMANDS: [&str; 10] = [
    "gen-data",
    "train",
    "explain",
    "surrogate",
    "fae",
    "bench",
    "lambda-sweep",
    "data-efficiency",
    "boundary-field",
    "confound-report",
];

/// Runs `command` and returns the output directory.
pub fn run(command: &str, s: &Settings) -> Result<PathBuf> {
    match command {
        "gen-data" => gen_data(s).map(|o| o.dir),
        "train" => train(s).map(|o| o.dir),
        "explain" => explain(s).map(|o| o.dir),
        "surrogate" => surrogate(s).map(|o| o.dir),
        "fae" => fae(s).map(|o| o.dir),
        "bench" => bench(s).map(|o| o.dir),
        "lambda-sweep" => lambda_sweep(s).map(|o| o.dir),
        "data-efficiency" => data_efficiency(s).map(|o| o.dir),
        "boundary-field" => boundary_field(s).map(|o| o.dir),
        "confound-report" => confound_report(s).map(|o| o.dir),
        other => Err(HarnessError::config(format!("unknown subcommand `{other}`"))),
    }
}

/// Seeded initialization with the configured hidden widths.
pub fn init_params(s: &Settings, data: &LabeledDataset, seed: u64) -> Result<Params> {
    Ok(Params::init_with_hidden(
        data.dim(),
        &s.train.hidden,
        data.num_classes(),
        seed,
    )?)
}

/// Trains with the settings' configuration and seed.
pub fn fit(
    s: &Settings,
    train: &LabeledDataset,
    held_out: Option<&LabeledDataset>,
) -> Result<(Params, TrainHistory)> {
    let init = init_params(s, train, s.seed)?;
    Ok(train_from(&s.train_config(), train, init, held_out)?)
}

/// The checkpoint named in the settings, or a freshly trained model.
pub fn model_for(s: &Settings, train: &LabeledDataset) -> Result<Params> {
    if s.checkpoint.is_empty() {
        return Ok(fit(s, train, None)?.0);
    }
    let c = Checkpoint::load(&s.checkpoint)?;
    if c.params.input_dim() != train.dim() || c.params.output_dim() != train.num_classes() {
        return Err(HarnessError::config(format!(
            "checkpoint {} has {} inputs and {} classes; the dataset has {} and {}",
            s.checkpoint,
            c.params.input_dim(),
            c.params.output_dim(),
            train.dim(),
            train.num_classes()
        )));
    }
    Ok(c.params)
}
