//! Self-describing text checkpoints. A checkpoint embeds the architecture
//! spec, season, seed, normalization stats, optional training summary, and
//! every parameter tensor, so a file alone reconstructs the exact model.
//!
//! Floats are written with 17 significant digits ({:.16e}), which round-trips
//! every finite f64 bit-exactly; combined with the canonical key order this
//! makes save -> load -> save byte-identical. That identity is part of the
//! format contract and is what the determinism checks compare.

use crate::data::{NormStats, Season};
use crate::error::{Error, Result};
use crate::model::{build_bp_mlp, build_paper_cnn, CnnSpec, MlpSpec, Model, ModelSpec};
use crate::rng::Prng;

pub const FORMAT_MAGIC: &str = "pricecast-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

/// A model plus its training summary, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

fn ff(x: f64) -> String {
    format!("{x:.16e}")
}

impl Checkpoint {
    /// Serialize to the canonical text form. Hand-assembled models carry no
    /// spec echo and cannot be checkpointed.
    pub fn to_text(&self) -> Result<String> {
        let spec = self.model.meta.spec.as_ref().ok_or_else(|| {
            Error::Checkpoint("model has no architecture spec; cannot serialize".into())
        })?;
        for (name, p) in self.model.param_names().iter().zip(self.model.params()) {
            if !p.all_finite() {
                return Err(Error::Checkpoint(format!(
                    "refusing to serialize non-finite parameters in {name}"
                )));
            }
        }
        let mut out = String::new();
        out.push_str(FORMAT_MAGIC);
        out.push('\n');
        out.push_str(&format!("format_version {FORMAT_VERSION}\n"));
        out.push_str(&format!("kind {}\n", spec.kind()));
        out.push_str(&format!(
            "season {}\n",
            self.model.meta.season.map_or("none", |s| s.name())
        ));
        out.push_str(&format!("seed {}\n", self.model.meta.seed));
        out.push_str(&format!("norm_min {}\n", ff(self.model.norm_stats.min)));
        out.push_str(&format!("norm_max {}\n", ff(self.model.norm_stats.max)));
        match spec {
            ModelSpec::Cnn(c) => {
                out.push_str(&format!(
                    "conv_channels {} {} {}\n",
                    c.conv_channels[0], c.conv_channels[1], c.conv_channels[2]
                ));
                out.push_str(&format!("kernel {}\n", c.kernel));
                out.push_str(&format!("pool_width {}\n", c.pool_width));
                out.push_str(&join_usize_line("dense_widths", &c.dense_widths));
                out.push_str(&format!("input_len {}\n", c.input_len));
            }
            ModelSpec::Mlp(m) => {
                out.push_str(&join_usize_line("hidden_widths", &m.hidden_widths));
                out.push_str(&format!("input_len {}\n", m.input_len));
            }
        }
        if let Some(e) = self.best_epoch {
            out.push_str(&format!("best_epoch {e}\n"));
        }
        if let Some(v) = self.best_val_loss {
            out.push_str(&format!("best_val_loss {}\n", ff(v)));
        }
        let names = self.model.param_names();
        let params = self.model.params();
        out.push_str(&format!("tensors {}\n", params.len()));
        for (name, p) in names.iter().zip(params) {
            out.push_str("tensor ");
            out.push_str(name);
            for d in p.dims() {
                out.push_str(&format!(" {d}"));
            }
            out.push('\n');
            let mut first = true;
            for v in p.data() {
                if !first {
                    out.push(' ');
                }
                out.push_str(&ff(*v));
                first = false;
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Parse the canonical text form, rebuilding the model from its spec echo
    /// and overwriting the freshly initialized parameters with the stored
    /// ones. Validates tensor names, shapes, and finiteness.
    pub fn from_text(text: &str) -> Result<Checkpoint> {
        let mut cur = Cursor::new(text);
        cur.expect_exact(FORMAT_MAGIC)?;
        let version: u32 = cur.kv_one("format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let kind: String = cur.kv_one("kind")?;
        let season_s: String = cur.kv_one("season")?;
        let season = match season_s.as_str() {
            "none" => None,
            s => Some(
                s.parse::<Season>()
                    .map_err(|e| Error::Checkpoint(format!("line {}: {e}", cur.line_no)))?,
            ),
        };
        let seed: u64 = cur.kv_one("seed")?;
        let norm_min: f64 = cur.kv_one("norm_min")?;
        let norm_max: f64 = cur.kv_one("norm_max")?;

        let mut model = match kind.as_str() {
            "cnn" => {
                let ch = cur.kv_usizes("conv_channels")?;
                if ch.len() != 3 {
                    return Err(Error::Checkpoint(format!(
                        "conv_channels needs exactly 3 values, got {}",
                        ch.len()
                    )));
                }
                let spec = CnnSpec {
                    conv_channels: [ch[0], ch[1], ch[2]],
                    kernel: cur.kv_one("kernel")?,
                    pool_width: cur.kv_one("pool_width")?,
                    dense_widths: cur.kv_usizes("dense_widths")?,
                    input_len: cur.kv_one("input_len")?,
                };
                let mut rng = Prng::new(0);
                build_paper_cnn(&spec, &mut rng)
                    .map_err(|e| Error::Checkpoint(format!("invalid cnn spec echo: {e}")))?
            }
            "bp" => {
                let spec = MlpSpec {
                    hidden_widths: cur.kv_usizes("hidden_widths")?,
                    input_len: cur.kv_one("input_len")?,
                };
                let mut rng = Prng::new(0);
                build_bp_mlp(&spec, &mut rng)
                    .map_err(|e| Error::Checkpoint(format!("invalid bp spec echo: {e}")))?
            }
            other => {
                return Err(Error::Checkpoint(format!(
                    "unknown model kind '{other}' (expected cnn|bp)"
                )))
            }
        };
        model.meta.season = season;
        model.meta.seed = seed;
        model.norm_stats = NormStats::new(norm_min, norm_max)
            .map_err(|e| Error::Checkpoint(format!("invalid normalization stats: {e}")))?;

        // optional training summary, then the tensor count
        let mut best_epoch = None;
        let mut best_val_loss = None;
        let mut key_line = cur.next_line()?;
        if let Some(rest) = key_line.strip_prefix("best_epoch ") {
            best_epoch = Some(rest.trim().parse::<usize>().map_err(|e| {
                Error::Checkpoint(format!("line {}: bad best_epoch: {e}", cur.line_no))
            })?);
            key_line = cur.next_line()?;
        }
        if let Some(rest) = key_line.strip_prefix("best_val_loss ") {
            best_val_loss = Some(rest.trim().parse::<f64>().map_err(|e| {
                Error::Checkpoint(format!("line {}: bad best_val_loss: {e}", cur.line_no))
            })?);
            key_line = cur.next_line()?;
        }
        let Some(count_s) = key_line.strip_prefix("tensors ") else {
            return Err(Error::Checkpoint(format!(
                "line {}: expected `tensors <count>`, got `{key_line}`",
                cur.line_no
            )));
        };
        let tensor_count: usize = count_s.trim().parse().map_err(|e| {
            Error::Checkpoint(format!("line {}: bad tensor count: {e}", cur.line_no))
        })?;

        let names = model.param_names();
        if tensor_count != names.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {tensor_count} tensors but the model spec implies {}",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            let header = cur.next_line()?;
            let mut toks = header.split_whitespace();
            if toks.next() != Some("tensor") {
                return Err(Error::Checkpoint(format!(
                    "line {}: expected tensor header, got `{header}`",
                    cur.line_no
                )));
            }
            let got_name = toks.next().unwrap_or("");
            if got_name != name {
                return Err(Error::Checkpoint(format!(
                    "line {}: tensor {i} is `{got_name}`, spec implies `{name}`",
                    cur.line_no
                )));
            }
            let dims: Vec<usize> = toks
                .map(|t| {
                    t.parse::<usize>().map_err(|e| {
                        Error::Checkpoint(format!("line {}: bad dim `{t}`: {e}", cur.line_no))
                    })
                })
                .collect::<Result<_>>()?;
            {
                let params = model.params();
                if dims != params[i].dims() {
                    return Err(Error::Checkpoint(format!(
                        "line {}: tensor `{name}` has dims {dims:?}, spec implies {:?}",
                        cur.line_no,
                        params[i].dims()
                    )));
                }
            }
            let values_line = cur.next_line()?;
            let vals: Vec<f64> = values_line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|e| {
                        Error::Checkpoint(format!("line {}: bad value `{t}`: {e}", cur.line_no))
                    })
                })
                .collect::<Result<_>>()?;
            let expected: usize = dims.iter().product();
            if vals.len() != expected {
                return Err(Error::Checkpoint(format!(
                    "line {}: tensor `{name}` has {} values, dims imply {expected}",
                    cur.line_no,
                    vals.len()
                )));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "line {}: tensor `{name}` contains non-finite values",
                    cur.line_no
                )));
            }
            model.params_mut()[i].data_mut().copy_from_slice(&vals);
        }
        if let Some(extra) = cur.peek_nonempty() {
            return Err(Error::Checkpoint(format!(
                "unexpected trailing content: `{extra}`"
            )));
        }
        Ok(Checkpoint {
            model,
            best_epoch,
            best_val_loss,
        })
    }
}

fn join_usize_line(key: &str, vals: &[usize]) -> String {
    let mut s = String::from(key);
    for v in vals {
        s.push_str(&format!(" {v}"));
    }
    s.push('\n');
    s
}

struct Cursor<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            lines: text.lines(),
            line_no: 0,
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        for line in self.lines.by_ref() {
            self.line_no += 1;
            if !line.trim().is_empty() {
                return Ok(line.trim_end_matches('\r'));
            }
        }
        Err(Error::Checkpoint(format!(
            "unexpected end of checkpoint after line {}",
            self.line_no
        )))
    }

    fn peek_nonempty(&mut self) -> Option<&'a str> {
        self.lines.by_ref().find(|line| !line.trim().is_empty())
    }

    fn expect_exact(&mut self, want: &str) -> Result<()> {
        let got = self.next_line()?;
        if got != want {
            return Err(Error::Checkpoint(format!(
                "line {}: expected `{want}`, got `{got}`",
                self.line_no
            )));
        }
        Ok(())
    }

    /// Read `key <value>` with exactly one value token.
    fn kv_one<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let line = self.next_line()?;
        let Some(rest) = line.strip_prefix(key) else {
            return Err(Error::Checkpoint(format!(
                "line {}: expected `{key} ...`, got `{line}`",
                self.line_no
            )));
        };
        let rest = rest.trim();
        if rest.is_empty() || rest.split_whitespace().count() != 1 {
            return Err(Error::Checkpoint(format!(
                "line {}: `{key}` needs exactly one value",
                self.line_no
            )));
        }
        rest.parse::<T>().map_err(|e| {
            Error::Checkpoint(format!("line {}: bad {key} `{rest}`: {e}", self.line_no))
        })
    }

    /// Read `key [v1 v2 ...]` with zero or more usize values.
    fn kv_usizes(&mut self, key: &str) -> Result<Vec<usize>> {
        let line = self.next_line()?;
        let Some(rest) = line.strip_prefix(key) else {
            return Err(Error::Checkpoint(format!(
                "line {}: expected `{key} ...`, got `{line}`",
                self.line_no
            )));
        };
        rest.split_whitespace()
            .map(|t| {
                t.parse::<usize>().map_err(|e| {
                    Error::Checkpoint(format!("line {}: bad {key} value `{t}`: {e}", self.line_no))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_bp_mlp, build_paper_cnn};

    fn cnn_checkpoint() -> Checkpoint {
        let mut rng = Prng::new(42);
        let mut model = build_paper_cnn(&CnnSpec::default(), &mut rng).unwrap();
        model.meta.season = Some(Season::Winter);
        model.meta.seed = 42;
        model.norm_stats = NormStats::new(12.75, 61.5).unwrap();
        Checkpoint {
            model,
            best_epoch: Some(37),
            best_val_loss: Some(0.001234567890123456),
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = cnn_checkpoint();
        let text1 = ck.to_text().unwrap();
        let loaded = Checkpoint::from_text(&text1).unwrap();
        let text2 = loaded.to_text().unwrap();
        assert_eq!(text1, text2);
    }

    #[test]
    fn round_trip_preserves_parameter_bits() {
        let ck = cnn_checkpoint();
        let text = ck.to_text().unwrap();
        let loaded = Checkpoint::from_text(&text).unwrap();
        for (a, b) in ck.model.params().iter().zip(loaded.model.params()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(loaded.model.meta.season, Some(Season::Winter));
        assert_eq!(loaded.model.meta.seed, 42);
        assert_eq!(loaded.best_epoch, Some(37));
        assert_eq!(
            loaded.best_val_loss.unwrap().to_bits(),
            ck.best_val_loss.unwrap().to_bits()
        );
        assert_eq!(loaded.model.norm_stats, ck.model.norm_stats);
    }

    #[test]
    fn bp_round_trip_with_empty_hidden() {
        let mut rng = Prng::new(3);
        let model = build_bp_mlp(
            &MlpSpec {
                hidden_widths: vec![],
                input_len: 23,
            },
            &mut rng,
        )
        .unwrap();
        let ck = Checkpoint {
            model,
            best_epoch: None,
            best_val_loss: None,
        };
        let text1 = ck.to_text().unwrap();
        let text2 = Checkpoint::from_text(&text1).unwrap().to_text().unwrap();
        assert_eq!(text1, text2);
        assert!(text1.contains("hidden_widths\n"));
    }

    #[test]
    fn season_none_round_trips() {
        let mut rng = Prng::new(1);
        let model = build_bp_mlp(&MlpSpec::default(), &mut rng).unwrap();
        let ck = Checkpoint {
            model,
            best_epoch: None,
            best_val_loss: None,
        };
        let loaded = Checkpoint::from_text(&ck.to_text().unwrap()).unwrap();
        assert_eq!(loaded.model.meta.season, None);
    }

    #[test]
    fn custom_models_cannot_serialize() {
        let ck = Checkpoint {
            model: Model::custom(vec![], 1),
            best_epoch: None,
            best_val_loss: None,
        };
        assert!(matches!(ck.to_text(), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(
            Checkpoint::from_text("not-a-checkpoint\n"),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_truncation_and_corruption() {
        let text = cnn_checkpoint().to_text().unwrap();
        // truncated
        let cut = &text[..text.len() / 2];
        let cut = &cut[..cut.rfind('\n').unwrap() + 1];
        assert!(matches!(
            Checkpoint::from_text(cut),
            Err(Error::Checkpoint(_))
        ));
        // corrupted value
        let corrupted = text.replacen("e-1", "e-1x", 1);
        if corrupted != text {
            assert!(matches!(
                Checkpoint::from_text(&corrupted),
                Err(Error::Checkpoint(_))
            ));
        }
        // wrong version
        let wrong = text.replacen("format_version 1", "format_version 9", 1);
        assert!(matches!(
            Checkpoint::from_text(&wrong),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_non_finite_values() {
        let text = cnn_checkpoint().to_text().unwrap();
        // replace the first parameter value with NaN
        let marker = "tensor layer0.weights 8 1 3\n";
        let pos = text.find(marker).unwrap() + marker.len();
        let end = text[pos..].find(' ').unwrap() + pos;
        let mut bad = text.clone();
        bad.replace_range(pos..end, "NaN");
        assert!(matches!(
            Checkpoint::from_text(&bad),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_tensor_count_mismatch() {
        let text = cnn_checkpoint().to_text().unwrap();
        let bad = text.replacen("tensors 10", "tensors 9", 1);
        if bad != text {
            assert!(matches!(
                Checkpoint::from_text(&bad),
                Err(Error::Checkpoint(_))
            ));
        }
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let ck = cnn_checkpoint();
        let loaded = Checkpoint::from_text(&ck.to_text().unwrap()).unwrap();
        let mut rng = Prng::new(77);
        let w = crate::tensor::Tensor::from_vec(&[23], (0..23).map(|_| rng.next_f64()).collect())
            .unwrap();
        let a = crate::model::model_forward(&ck.model, &w).unwrap();
        let b = crate::model::model_forward(&loaded.model, &w).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
