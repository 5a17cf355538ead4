//! Run configuration: a flat `key = value` file covering every architecture,
//! training, and period-bound knob. No structured-format dependency; configs
//! stay diffable. Unknown keys and duplicate keys are hard errors so a typo
//! can never silently fall back to a default.

use std::collections::HashSet;

use crate::data::{parse_timestamp, SplitConfig};
use crate::error::{Error, Result};
use crate::model::{CnnSpec, MlpSpec};
use crate::train::TrainConfig;

/// Every tunable in one place, with the module defaults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub cnn: CnnSpec,
    pub mlp: MlpSpec,
    pub train: TrainConfig,
    pub split: SplitConfig,
}

impl RunConfig {
    /// Parse overrides on top of the defaults. Lines are `key = value`
    /// (lists space-separated), `#` starts a comment, blank lines ignored.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen: HashSet<String> = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Spec(format!(
                    "config line {line_no}: expected `key = value`, got `{line}`"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Spec(format!(
                    "config line {line_no}: duplicate key `{key}`"
                )));
            }
            cfg.apply(key, value)
                .map_err(|e| Error::Spec(format!("config line {line_no}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "conv_channels" => {
                let v = parse_usizes(value)?;
                if v.len() != 3 {
                    return Err(format!(
                        "conv_channels needs exactly 3 values, got {}",
                        v.len()
                    ));
                }
                self.cnn.conv_channels = [v[0], v[1], v[2]];
            }
            "kernel" => self.cnn.kernel = parse_one(value, key)?,
            "pool_width" => self.cnn.pool_width = parse_one(value, key)?,
            "dense_widths" => self.cnn.dense_widths = parse_usizes(value)?,
            "hidden_widths" => self.mlp.hidden_widths = parse_usizes(value)?,
            "input_len" => {
                let v: usize = parse_one(value, key)?;
                self.cnn.input_len = v;
                self.mlp.input_len = v;
            }
            "learning_rate" => self.train.learning_rate = parse_one(value, key)?,
            "epochs" => self.train.epochs = parse_one(value, key)?,
            "batch_size" => self.train.batch_size = parse_one(value, key)?,
            "seed" => self.train.seed = parse_one(value, key)?,
            "patience" => self.train.patience = parse_one(value, key)?,
            "val_fraction" => self.train.val_fraction = parse_one(value, key)?,
            "beta1" => self.train.beta1 = parse_one(value, key)?,
            "beta2" => self.train.beta2 = parse_one(value, key)?,
            "epsilon" => self.train.epsilon = parse_one(value, key)?,
            "clip_gradients" => {
                self.train.clip_gradients = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(format!("clip_gradients must be true|false, got `{other}`"))
                    }
                }
            }
            "train_start" => self.split.train_start = parse_ts(value)?,
            "train_end" => self.split.train_end = parse_ts(value)?,
            "test_start" => self.split.test_start = parse_ts(value)?,
            "test_end" => self.split.test_end = parse_ts(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.cnn.validate()?;
        self.mlp.validate()?;
        self.train.validate()?;
        self.split.validate()?;
        if self.cnn.input_len != self.mlp.input_len {
            return Err(Error::Spec(format!(
                "cnn and bp input lengths diverge: {} vs {}",
                self.cnn.input_len, self.mlp.input_len
            )));
        }
        Ok(())
    }
}

fn parse_one<T: std::str::FromStr>(value: &str, key: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    if value.split_whitespace().count() != 1 {
        return Err(format!("`{key}` needs exactly one value, got `{value}`"));
    }
    value
        .parse::<T>()
        .map_err(|e| format!("bad {key} `{value}`: {e}"))
}

fn parse_usizes(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| format!("bad value `{t}`: {e}"))
        })
        .collect()
}

fn parse_ts(value: &str) -> std::result::Result<chrono::DateTime<chrono::Utc>, String> {
    parse_timestamp(value).map_err(|e| e.to_string())
}
