//! Depth estimation network: a U-shaped encoder-decoder with ConvLSTM units
//! interleaved per the configured placement. Every encoder convolution uses
//! stride 2; decoder levels upsample with a transposed convolution, then
//! concatenate the same-resolution encoder activation (pre-LSTM) and fuse
//! with a stride-1 convolution. The head deconvolves back to full resolution
//! and a sigmoid output conv yields a map in [0,1], decoded linearly to
//! inverse depth.

use crate::ad::{Tape, TensorId};
use crate::error::Result;
use crate::nets::config::{LstmPlacement, NetConfig};
use crate::nets::convlstm::{ConvLstm, LstmState};
use crate::nets::layers::{Act, BnMode, ConvBn, ConvOut, DeconvBn};
use crate::nets::params::{Bound, ParamSet, StateSet};
use crate::real::Real;
use rand::Rng;

struct EncLevel {
    conv: ConvBn,
    lstm: Option<ConvLstm>,
}

struct DecLevel {
    deconv: DeconvBn,
    conv: ConvBn,
    lstm: Option<ConvLstm>,
}

pub struct DepthNet {
    enc: Vec<EncLevel>,
    dec: Vec<DecLevel>,
    head: DeconvBn,
    out: ConvOut,
    sizes: Vec<(usize, usize)>,
    input_size: (usize, usize),
    inv_depth_min: f64,
    inv_depth_max: f64,
}

pub struct DepthOutput {
    /// Raw sigmoid map in [0,1], `[1,H,W]`.
    pub sigmoid_map: TensorId,
    /// Decoded inverse depth `xi = s*(xi_max - xi_min) + xi_min`.
    pub inv_depth: TensorId,
    /// Metric depth `1/xi`.
    pub depth: TensorId,
    /// Next hidden states, same order as `zero_states`.
    pub states: Vec<LstmState>,
}

impl DepthNet {
    pub fn new<T: Real>(
        cfg: &NetConfig,
        params: &mut ParamSet<T>,
        states: &mut StateSet<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.encoder_channels.len();
        let enc_lstm = matches!(cfg.lstm_placement, LstmPlacement::Encoder | LstmPlacement::Full);
        let dec_lstm = matches!(cfg.lstm_placement, LstmPlacement::Decoder | LstmPlacement::Full);

        let mut enc = Vec::with_capacity(l);
        let mut cin = cfg.image_channels;
        for (i, &c) in cfg.encoder_channels.iter().enumerate() {
            let conv = ConvBn::new(
                &format!("depth.enc{i}.conv"),
                cin,
                c,
                2,
                Act::LeakyRelu02,
                params,
                states,
                rng,
            );
            let lstm = enc_lstm
                .then(|| ConvLstm::new(&format!("depth.enc{i}.lstm"), c, c, params, rng));
            enc.push(EncLevel { conv, lstm });
            cin = c;
        }

        let mut dec = Vec::with_capacity(l - 1);
        let mut prev = *cfg.encoder_channels.last().unwrap();
        for (j, &c) in cfg.decoder_channels.iter().enumerate() {
            let deconv = DeconvBn::new(
                &format!("depth.dec{j}.deconv"),
                prev,
                c,
                Act::LeakyRelu02,
                params,
                states,
                rng,
            );
            let skip_c = cfg.encoder_channels[l - 2 - j];
            let conv = ConvBn::new(
                &format!("depth.dec{j}.conv"),
                c + skip_c,
                c,
                1,
                Act::LeakyRelu02,
                params,
                states,
                rng,
            );
            let lstm =
                dec_lstm.then(|| ConvLstm::new(&format!("depth.dec{j}.lstm"), c, c, params, rng));
            dec.push(DecLevel { deconv, conv, lstm });
            prev = c;
        }

        let head = DeconvBn::new(
            "depth.head",
            prev,
            cfg.head_channels,
            Act::LeakyRelu02,
            params,
            states,
            rng,
        );
        let out = ConvOut::new("depth.out", cfg.head_channels, 1, 3, params, rng);
        Ok(DepthNet {
            enc,
            dec,
            head,
            out,
            sizes: cfg.encoder_sizes(),
            input_size: (cfg.input_height, cfg.input_width),
            inv_depth_min: cfg.inv_depth_min,
            inv_depth_max: cfg.inv_depth_max,
        })
    }

    /// LSTM sites in state order: `(channels, (h, w))`.
    fn lstm_sites(&self) -> Vec<(usize, (usize, usize))> {
        let l = self.enc.len();
        let mut sites = Vec::new();
        for (i, level) in self.enc.iter().enumerate() {
            if let Some(lstm) = &level.lstm {
                sites.push((lstm.channels, self.sizes[i]));
            }
        }
        for (j, level) in self.dec.iter().enumerate() {
            if let Some(lstm) = &level.lstm {
                sites.push((lstm.channels, self.sizes[l - 2 - j]));
            }
        }
        sites
    }

    pub fn state_count(&self) -> usize {
        self.lstm_sites().len()
    }

    /// All-zero hidden states (sequence bootstrap).
    pub fn zero_states<T: Real>(&self, tape: &mut Tape<T>) -> Vec<LstmState> {
        let l = self.enc.len();
        let mut out = Vec::new();
        for (i, level) in self.enc.iter().enumerate() {
            if let Some(lstm) = &level.lstm {
                let (h, w) = self.sizes[i];
                out.push(lstm.zero_state(tape, h, w));
            }
        }
        for (j, level) in self.dec.iter().enumerate() {
            if let Some(lstm) = &level.lstm {
                let (h, w) = self.sizes[l - 2 - j];
                out.push(lstm.zero_state(tape, h, w));
            }
        }
        out
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        mode: &mut BnMode<'_, T>,
        image: TensorId,
        states: &[LstmState],
    ) -> Result<DepthOutput> {
        assert_eq!(states.len(), self.state_count(), "depth net state count");
        let l = self.enc.len();
        let mut x = image;
        let mut skips = Vec::with_capacity(l);
        let mut next_states = Vec::with_capacity(states.len());
        let mut si = 0usize;
        for level in &self.enc {
            x = level.conv.forward(tape, bound, mode, x)?;
            skips.push(x);
            if let Some(lstm) = &level.lstm {
                let (y, st) = lstm.step(tape, bound, x, &states[si])?;
                si += 1;
                next_states.push(st);
                x = y;
            }
        }
        for (j, level) in self.dec.iter().enumerate() {
            let (th, tw) = self.sizes[l - 2 - j];
            x = level.deconv.forward(tape, bound, mode, x, th, tw)?;
            x = tape.concat0(&[x, skips[l - 2 - j]])?;
            x = level.conv.forward(tape, bound, mode, x)?;
            if let Some(lstm) = &level.lstm {
                let (y, st) = lstm.step(tape, bound, x, &states[si])?;
                si += 1;
                next_states.push(st);
                x = y;
            }
        }
        let (ih, iw) = self.input_size;
        x = self.head.forward(tape, bound, mode, x, ih, iw)?;
        let logits = self.out.forward(tape, bound, x)?;
        let sigmoid_map = tape.sigmoid(logits)?;
        let inv_depth =
            tape.affine(sigmoid_map, self.inv_depth_max - self.inv_depth_min, self.inv_depth_min)?;
        let depth = tape.recip(inv_depth)?;
        Ok(DepthOutput { sigmoid_map, inv_depth, depth, states: next_states })
    }
}
