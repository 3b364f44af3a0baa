//! Network configuration: input size, channel widths, ConvLSTM placement,
//! inverse-depth decoding range.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Where ConvLSTM units are interleaved in the depth network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LstmPlacement {
    Encoder,
    Decoder,
    Full,
}

impl std::str::FromStr for LstmPlacement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(LstmPlacement::Encoder),
            "decoder" => Ok(LstmPlacement::Decoder),
            "full" => Ok(LstmPlacement::Full),
            other => Err(Error::Config(format!("unknown lstm placement '{other}'"))),
        }
    }
}

impl std::fmt::Display for LstmPlacement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LstmPlacement::Encoder => write!(f, "encoder"),
            LstmPlacement::Decoder => write!(f, "decoder"),
            LstmPlacement::Full => write!(f, "full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub image_channels: usize,
    /// Output channels of each stride-2 encoder level.
    pub encoder_channels: Vec<usize>,
    /// Output channels of each deconv+concat+conv decoder level
    /// (one fewer than the encoder).
    pub decoder_channels: Vec<usize>,
    /// Channels of the final full-resolution deconv before the output conv.
    pub head_channels: usize,
    pub lstm_placement: LstmPlacement,
    /// Sigmoid output decodes to inverse depth in
    /// `[inv_depth_min, inv_depth_max]` (1/m).
    pub inv_depth_min: f64,
    pub inv_depth_max: f64,
}

impl NetConfig {
    /// Full-scale configuration: 128x416 input, encoder widths
    /// 32/64/128/256/256/256/512, mirrored decoder, 16-channel head.
    pub fn paper() -> Self {
        NetConfig {
            input_height: 128,
            input_width: 416,
            image_channels: 3,
            encoder_channels: vec![32, 64, 128, 256, 256, 256, 512],
            decoder_channels: vec![256, 128, 128, 128, 64, 32],
            head_channels: 16,
            lstm_placement: LstmPlacement::Encoder,
            inv_depth_min: 1.0 / 80.0,
            inv_depth_max: 1.0 / 0.5,
        }
    }

    /// Desk-scale default: 64x96 input, every width divided by 8. CPU-sized
    /// while keeping the full seven-level topology.
    pub fn desk() -> Self {
        NetConfig {
            input_height: 64,
            input_width: 96,
            image_channels: 3,
            encoder_channels: vec![4, 8, 16, 32, 32, 32, 64],
            decoder_channels: vec![32, 16, 16, 16, 8, 4],
            head_channels: 2,
            lstm_placement: LstmPlacement::Encoder,
            inv_depth_min: 1.0 / 80.0,
            inv_depth_max: 1.0 / 0.5,
        }
    }

    /// Minimal 2-channel, 3-level variant for gradient-check suites.
    pub fn tiny(input_height: usize, input_width: usize) -> Self {
        NetConfig {
            input_height,
            input_width,
            image_channels: 3,
            encoder_channels: vec![2, 2, 2],
            decoder_channels: vec![2, 2],
            head_channels: 2,
            lstm_placement: LstmPlacement::Encoder,
            inv_depth_min: 1.0 / 80.0,
            inv_depth_max: 1.0 / 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.is_empty() {
            return Err(Error::Config("encoder needs at least one level".into()));
        }
        if self.decoder_channels.len() + 1 != self.encoder_channels.len() {
            return Err(Error::Config(format!(
                "decoder must have one level fewer than the encoder ({} vs {})",
                self.decoder_channels.len(),
                self.encoder_channels.len()
            )));
        }
        if self.encoder_channels.iter().chain(&self.decoder_channels).any(|&c| c == 0) {
            return Err(Error::Config("zero-width level".into()));
        }
        if self.input_height < 2 || self.input_width < 2 {
            return Err(Error::Config("input size too small".into()));
        }
        if self.inv_depth_min <= 0.0 || self.inv_depth_max <= self.inv_depth_min {
            return Err(Error::Config("invalid inverse-depth range".into()));
        }
        Ok(())
    }

    /// Spatial size after each encoder level (ceil halving per level).
    pub fn encoder_sizes(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.encoder_channels.len());
        let (mut h, mut w) = (self.input_height, self.input_width);
        for _ in &self.encoder_channels {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
            sizes.push((h, w));
        }
        sizes
    }
}
