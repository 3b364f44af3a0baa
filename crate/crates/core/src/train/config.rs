//! Training configuration and its key-value text representation.
//!
//! Config files are flat `key=value` lines (`#` comments allowed), mirroring
//! the network, loss-weight and schedule fields. Unknown keys are errors so
//! typos surface instead of silently training the wrong thing.

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nets::NetConfig;
use crate::train::adam::AdamConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub net: NetConfig,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Sliding-window length N.
    pub window: usize,
    pub stride: usize,
    pub keyframe_sigma: f64,
    pub seed: u64,
    pub supervised: bool,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            net: NetConfig::desk(),
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            epochs_stage1: 20,
            epochs_stage2: 10,
            window: 10,
            stride: 1,
            keyframe_sigma: 0.3,
            seed: 1,
            supervised: false,
            grad_clip: 10.0,
        }
    }
}

fn parse_list(v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad channel list entry '{t}'")))
        })
        .collect()
}

fn fmt_list(v: &[usize]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for {what}"));
        match key {
            "net.input_height" => self.net.input_height = value.parse().map_err(|_| bad(key))?,
            "net.input_width" => self.net.input_width = value.parse().map_err(|_| bad(key))?,
            "net.encoder_channels" => self.net.encoder_channels = parse_list(value)?,
            "net.decoder_channels" => self.net.decoder_channels = parse_list(value)?,
            "net.head_channels" => self.net.head_channels = value.parse().map_err(|_| bad(key))?,
            "net.lstm_placement" => self.net.lstm_placement = value.parse()?,
            "net.inv_depth_min" => self.net.inv_depth_min = value.parse().map_err(|_| bad(key))?,
            "net.inv_depth_max" => self.net.inv_depth_max = value.parse().map_err(|_| bad(key))?,
            "weights.depth" => self.weights.depth = value.parse().map_err(|_| bad(key))?,
            "weights.smooth" => self.weights.smooth = value.parse().map_err(|_| bad(key))?,
            "weights.flow_consistency" => {
                self.weights.flow_consistency = value.parse().map_err(|_| bad(key))?
            }
            "weights.mask_reg" => self.weights.mask_reg = value.parse().map_err(|_| bad(key))?,
            "adam.lr" => self.adam.lr = value.parse().map_err(|_| bad(key))?,
            "adam.beta1" => self.adam.beta1 = value.parse().map_err(|_| bad(key))?,
            "adam.beta2" => self.adam.beta2 = value.parse().map_err(|_| bad(key))?,
            "adam.eps" => self.adam.eps = value.parse().map_err(|_| bad(key))?,
            "schedule.epochs_stage1" => {
                self.epochs_stage1 = value.parse().map_err(|_| bad(key))?
            }
            "schedule.epochs_stage2" => {
                self.epochs_stage2 = value.parse().map_err(|_| bad(key))?
            }
            "data.window" => self.window = value.parse().map_err(|_| bad(key))?,
            "data.stride" => self.stride = value.parse().map_err(|_| bad(key))?,
            "data.keyframe_sigma" => {
                self.keyframe_sigma = value.parse().map_err(|_| bad(key))?
            }
            "train.seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "train.supervised" => self.supervised = value.parse().map_err(|_| bad(key))?,
            "train.grad_clip" => self.grad_clip = value.parse().map_err(|_| bad(key))?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        cfg.merge_kv(text)?;
        Ok(cfg)
    }

    pub fn merge_kv(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Fully resolved key=value text (the run manifest format).
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("net.input_height", self.net.input_height.to_string());
        kv("net.input_width", self.net.input_width.to_string());
        kv("net.encoder_channels", fmt_list(&self.net.encoder_channels));
        kv("net.decoder_channels", fmt_list(&self.net.decoder_channels));
        kv("net.head_channels", self.net.head_channels.to_string());
        kv("net.lstm_placement", self.net.lstm_placement.to_string());
        kv("net.inv_depth_min", self.net.inv_depth_min.to_string());
        kv("net.inv_depth_max", self.net.inv_depth_max.to_string());
        kv("weights.depth", self.weights.depth.to_string());
        kv("weights.smooth", self.weights.smooth.to_string());
        kv("weights.flow_consistency", self.weights.flow_consistency.to_string());
        kv("weights.mask_reg", self.weights.mask_reg.to_string());
        kv("adam.lr", self.adam.lr.to_string());
        kv("adam.beta1", self.adam.beta1.to_string());
        kv("adam.beta2", self.adam.beta2.to_string());
        kv("adam.eps", self.adam.eps.to_string());
        kv("schedule.epochs_stage1", self.epochs_stage1.to_string());
        kv("schedule.epochs_stage2", self.epochs_stage2.to_string());
        kv("data.window", self.window.to_string());
        kv("data.stride", self.stride.to_string());
        kv("data.keyframe_sigma", self.keyframe_sigma.to_string());
        kv("train.seed", self.seed.to_string());
        kv("train.supervised", self.supervised.to_string());
        kv("train.grad_clip", self.grad_clip.to_string());
        s
    }
}
