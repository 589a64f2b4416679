//! Run settings.
//!
//! A config file is flat TOML with dotted keys (`train.lambda1 = 1000.0`).
//! Every key can also be given on the command line as `--train.lambda1 1000`,
//! and a few common keys have short flags (see [`ALIASES`]). Flags override
//! the file, the file overrides the defaults.

use std::path::{Path, PathBuf};

use gradguard::explain::Target;
use gradguard::fae::FaeConfig;
use gradguard::training::{AdamConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{HarnessError, Result};

/// Short flags and the keys they set.
pub const ALIASES: [(&str, &str); 6] = [
    ("dataset", "data.name"),
    ("lambda1", "train.lambda1"),
    ("epochs", "train.epochs"),
    ("seed", "seed"),
    ("cutoff", "cutoff"),
    ("out", "out"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Experiment name; defaults to the subcommand.
    pub name: String,
    /// Output directory; defaults to `runs/<name>`.
    pub out: String,
    /// Base seed. Model initialization, batching, data generation and
    /// splits all derive from it.
    pub seed: u64,
    /// Trained checkpoint to explain or evaluate instead of training anew.
    pub checkpoint: String,
    pub cutoff: f64,
    /// Explanation target: `sum-logprob`, `predicted-prob` or `class-prob:<k>`.
    pub target: String,
    pub data: DataSettings,
    pub train: TrainSettings,
    pub explain: ExplainSettings,
    pub fae: FaeSettings,
    pub surrogate: SurrogateSettings,
    pub bench: BenchSettings,
    pub sweep: SweepSettings,
    pub efficiency: EfficiencySettings,
    pub field: FieldSettings,
    pub report: ReportSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            name: String::new(),
            out: String::new(),
            seed: 0,
            checkpoint: String::new(),
            cutoff: 0.67,
            target: "sum-logprob".into(),
            data: DataSettings::default(),
            train: TrainSettings::default(),
            explain: ExplainSettings::default(),
            fae: FaeSettings::default(),
            surrogate: SurrogateSettings::default(),
            bench: BenchSettings::default(),
            sweep: SweepSettings::default(),
            efficiency: EfficiencySettings::default(),
            field: FieldSettings::default(),
            report: ReportSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    /// `toy-color`, `decoy-mnist`, `mnist`, `iris-cancer`, `newsgroups`,
    /// `topics`, `blobs2`, `blobs3` or `file`.
    pub name: String,
    /// Rows to generate (or keep, for MNIST training data). 0 means the
    /// dataset's default.
    pub n: usize,
    /// Rows in generated test sets.
    pub test_n: usize,
    /// Toy Color test set: `mixed`, `corners-only` or `top-middle-only`.
    pub test_rules: String,
    /// `none`, `full`, `corners`, `top-middle`, `pro-rule1` or `pro-rule2`.
    /// `full` is the dataset's known confound.
    pub annotate: String,
    /// Fraction of training rows that get annotations.
    pub annotated_fraction: f64,
    /// Exact number of annotated rows; overrides the fraction when nonzero.
    pub annotated_count: usize,
    /// Training fraction for datasets that are split at load time.
    pub train_fraction: f64,
    pub mnist_dir: String,
    pub iris: String,
    pub wdbc: String,
    pub corpus_dir: String,
    pub strip_headers: bool,
    pub max_features: usize,
    /// Portable dataset files for `file`.
    pub train_path: String,
    pub test_path: String,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            name: "toy-color".into(),
            n: 0,
            test_n: 2000,
            test_rules: "mixed".into(),
            annotate: "none".into(),
            annotated_fraction: 1.0,
            annotated_count: 0,
            train_fraction: 0.67,
            mnist_dir: "data/mnist".into(),
            iris: "data/uci/iris.data".into(),
            wdbc: "data/uci/wdbc.data".into(),
            corpus_dir: String::new(),
            strip_headers: true,
            max_features: 5000,
            train_path: String::new(),
            test_path: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub lambda1: f64,
    pub lambda2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub pin_annotated: bool,
    pub patience: usize,
    pub tolerance: f64,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            lambda1: t.lambda1,
            lambda2: t.lambda2,
            batch_size: t.batch_size,
            epochs: t.epochs,
            step_size: t.adam.step_size,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
            pin_annotated: t.pin_annotated,
            patience: t.early_stop_patience,
            tolerance: t.early_stop_tolerance,
            hidden: vec![50, 30],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    /// Test rows to render into the artifact.
    pub rows: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings { rows: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaeSettings {
    pub schedule: Vec<f64>,
    pub max_iterations: usize,
    pub accuracy_drop: f64,
    pub overlap_ceiling: f64,
}

impl Default for FaeSettings {
    fn default() -> Self {
        let f = FaeConfig::default();
        FaeSettings {
            schedule: vec![1e3, 1e6],
            max_iterations: f.max_iterations,
            accuracy_drop: f.accuracy_drop,
            overlap_ceiling: f.overlap_ceiling,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSettings {
    pub samples: usize,
    pub k: usize,
    /// `nonzero`, `all` or `blocks` (image datasets only).
    pub units: String,
    pub block: usize,
    pub instances: usize,
    /// Extra surrogate runs per instance with fresh seeds.
    pub reseeds: usize,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        SurrogateSettings {
            samples: 2000,
            k: 10,
            units: "nonzero".into(),
            block: 4,
            instances: 50,
            reseeds: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub samples: Vec<usize>,
    pub instances: usize,
    pub repetitions: usize,
    pub k: usize,
    pub block: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            samples: vec![5000],
            instances: 5,
            repetitions: 3,
            k: 6,
            block: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub grid: Vec<f64>,
    /// Prepend a λ1 = 0 row.
    pub include_zero: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            grid: vec![1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
            include_zero: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencySettings {
    pub sizes: Vec<usize>,
    /// `none` or any Toy Color mask name.
    pub masks: Vec<String>,
    /// Optimizer steps per run, whatever N is.
    pub steps: usize,
    pub seeds: usize,
}

impl Default for EfficiencySettings {
    fn default() -> Self {
        EfficiencySettings {
            sizes: vec![16, 32, 64, 100, 200, 500, 1000, 2000, 5000, 10000],
            masks: vec!["none".into(), "pro-rule1".into(), "anti-rule1".into()],
            steps: 2560,
            seeds: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSettings {
    pub resolution: usize,
    /// Padding around the training data's bounding box, as a fraction of
    /// its extent.
    pub margin: f64,
}

impl Default for FieldSettings {
    fn default() -> Self {
        FieldSettings {
            resolution: 50,
            margin: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    /// Splits (or seeds, for fixed train/test pairs).
    pub splits: usize,
    /// Any of `zero`, `full`.
    pub variants: Vec<String>,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            splits: 50,
            variants: vec!["zero".into(), "full".into()],
        }
    }
}

impl Settings {
    /// Reads `file` (if any), applies `overrides` in order, and fills in the
    /// name and output directory from `command` when unset.
    pub fn load(command: &str, file: Option<&Path>, overrides: &[(String, String)]) -> Result<Settings> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
                text.parse::<Table>()
                    .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_value(raw))?;
        }
        let mut s = Settings::deserialize(Value::Table(table))
            .map_err(|e| HarnessError::config(e.to_string()))?;
        if s.name.is_empty() {
            s.name = command.to_string();
        }
        if s.out.is_empty() {
            s.out = format!("runs/{}", s.name);
        }
        Ok(s)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lambda1: t.lambda1,
            lambda2: t.lambda2,
            batch_size: t.batch_size,
            epochs: t.epochs,
            adam: AdamConfig {
                step_size: t.step_size,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            seed: self.seed,
            pin_annotated: t.pin_annotated,
            early_stop_patience: t.patience,
            early_stop_tolerance: t.tolerance,
        }
    }

    pub fn fae_config(&self) -> Result<FaeConfig> {
        Ok(FaeConfig {
            cutoff: self.cutoff,
            lambda1_schedule: self.fae.schedule.clone(),
            max_iterations: self.fae.max_iterations,
            accuracy_drop: self.fae.accuracy_drop,
            overlap_ceiling: self.fae.overlap_ceiling,
            target: self.explanation_target()?,
            train: self.train_config(),
        })
    }

    pub fn explanation_target(&self) -> Result<Target> {
        self.target
            .parse()
            .map_err(|e: gradguard::Error| HarnessError::config(format!("target: {e}")))
    }

    /// All settings as `key = value` lines, one per leaf, sorted by key.
    pub fn to_flat_toml(&self) -> String {
        let value = Value::try_from(self).expect("settings serialize to TOML");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        leaf => out.push(format!("{prefix} = {leaf}")),
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::config(format!("malformed key `{key}`")));
    }
    let mut t = table;
    for p in &parts[..parts.len() - 1] {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::config(format!("`{p}` in `{key}` is not a section")))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Splits `--key value` / `--key=value` pairs, resolving aliases.
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let flag = arg
            .strip_prefix("--")
            .ok_or_else(|| HarnessError::config(format!("unexpected argument `{arg}`")))?;
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                i += 1;
                let v = args
                    .get(i)
                    .ok_or_else(|| HarnessError::config(format!("flag `--{flag}` needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        let key = ALIASES
            .iter()
            .find(|(alias, _)| *alias == key)
            .map_or(key, |(_, k)| k.to_string());
        out.push((key, value));
        i += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_file_round_trips() {
        let mut s = Settings::load("train", None, &[]).unwrap();
        s.train.lambda1 = 12.5;
        s.sweep.grid = vec![0.5, 1e7];
        let text = s.to_flat_toml();
        assert!(text.contains("train.lambda1 = 12.5\n"));
        let dir = std::env::temp_dir().join(format!("gg-settings-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        std::fs::write(&path, &text).unwrap();
        assert_eq!(Settings::load("other", Some(&path), &[]).unwrap(), s);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn flags_override_and_alias() {
        let args: Vec<String> = ["--lambda1", "0", "--data.n=300", "--dataset", "blobs2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let s = Settings::load("train", None, &parse_flags(&args).unwrap()).unwrap();
        assert_eq!(s.train.lambda1, 0.0);
        assert_eq!(s.data.n, 300);
        assert_eq!(s.data.name, "blobs2");
        assert_eq!(s.out, "runs/train");
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let bad = [("train.lamda1".to_string(), "1".to_string())];
        let err = Settings::load("train", None, &bad).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(parse_flags(&["stray".to_string()]).is_err());
        assert!(parse_flags(&["--seed".to_string()]).is_err());
    }
}
