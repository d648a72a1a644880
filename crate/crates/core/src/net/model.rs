use serde::{Deserialize, Serialize};

use super::spectrum::{SpatialSpectrum, N_DOA};
use super::NetError;
use crate::frontend::{FRAME_RATE, N_BINS};
use crate::numcore::{init_params, linear_weight, param_count, Graph, Init, ParamSpec, ParamStore, Tensor, Var};
use crate::ssm::{BiMamba, BiMambaConfig};

/// Width whose default 5-block network has the parameter count closest to
/// 1.8M (1,815,289; see `width_nearest_param_count`).
pub const DEFAULT_WIDTH: usize = 33;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub n_blocks: usize,
    pub expand_per_block: Vec<usize>,
    pub model_width: usize,
    pub d_state: usize,
    pub conv_kernel: usize,
    /// Rank of the step-size projection; `0` picks `ceil(width / 16)`.
    pub dt_rank: usize,
    pub pool_factor: usize,
    pub n_doa: usize,
    pub n_bins: usize,
    pub in_channels: usize,
    pub encoder_kernel: usize,
    pub dense_growth: usize,
    pub dense_dilations: Vec<usize>,
    /// Width of the Gaussian target bump in degrees.
    pub target_sigma: f64,
    /// Share parameters between the two scan directions of every layer.
    pub tie_directions: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            n_blocks: 5,
            expand_per_block: vec![2, 2, 4, 4, 8],
            model_width: DEFAULT_WIDTH,
            d_state: 16,
            conv_kernel: 4,
            dt_rank: 0,
            pool_factor: 4,
            n_doa: N_DOA,
            n_bins: N_BINS,
            in_channels: 4,
            encoder_kernel: 3,
            dense_growth: 8,
            dense_dilations: vec![1, 2, 4, 8],
            target_sigma: 8.0,
            tie_directions: false,
        }
    }
}

impl NetConfig {
    /// Width 16, two blocks of expansion 1 and state size 4: small enough to
    /// train on one CPU core in minutes.
    pub fn desk() -> Self {
        Self {
            n_blocks: 2,
            expand_per_block: vec![1, 1],
            model_width: 16,
            d_state: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.expand_per_block.len() != self.n_blocks {
            return bad(format!(
                "expand_per_block has {} entries for {} blocks",
                self.expand_per_block.len(),
                self.n_blocks
            ));
        }
        if self.n_doa != N_DOA {
            return bad(format!("n_doa must be {N_DOA}"));
        }
        if self.pool_factor == 0 || self.model_width == 0 || self.d_state == 0 || self.conv_kernel == 0 {
            return bad("pool_factor, model_width, d_state and conv_kernel must be at least 1".into());
        }
        if self.expand_per_block.contains(&0) {
            return bad("expand factors must be at least 1".into());
        }
        if self.encoder_kernel.is_multiple_of(2) || self.dense_dilations.contains(&0) {
            return bad("encoder kernel must be odd and dilations positive".into());
        }
        if self.n_bins == 0 || self.in_channels == 0 || self.target_sigma <= 0.0 {
            return bad("n_bins, in_channels and target_sigma must be positive".into());
        }
        Ok(())
    }

    fn bimamba(&self, expand: usize) -> BiMambaConfig {
        let mut c = BiMambaConfig::new(self.model_width, expand, self.d_state);
        c.conv_kernel = self.conv_kernel;
        if self.dt_rank > 0 {
            c.dt_rank = self.dt_rank;
        }
        c
    }

    /// Output frame rate in Hz.
    pub fn output_rate(&self) -> f64 {
        FRAME_RATE / self.pool_factor as f64
    }
}

/// Which halves of a TF block run; the skipped half passes its input through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Both,
    /// Only the per-frame scan over frequency bins.
    AcrossFrequency,
    /// Only the per-bin scan over time frames.
    AcrossTime,
}

/// Skip carriers passed between consecutive TF blocks.
#[derive(Clone, Copy, Debug)]
pub struct Skips {
    pub t: Var,
    pub f: Var,
}

#[derive(Clone, Debug)]
pub struct TfMamba {
    pub config: NetConfig,
    /// `(per-frame layer over bins, per-bin layer over frames)` for each block.
    pub blocks: Vec<(BiMamba, BiMamba)>,
}

fn conv_spec(name: String, taps: usize, cin: usize, cout: usize) -> ParamSpec {
    let bound = 1.0 / ((taps * cin) as f64).sqrt();
    ParamSpec::new(name, &[taps, cin, cout], Init::Uniform(bound))
}

impl TfMamba {
    pub fn new(config: NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let blocks = config
            .expand_per_block
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let mut t = BiMamba::new(format!("block{i}.t"), config.bimamba(e));
                let mut f = BiMamba::new(format!("block{i}.f"), config.bimamba(e));
                t.tied = config.tie_directions;
                f.tied = config.tie_directions;
                (t, f)
            })
            .collect();
        Ok(Self { config, blocks })
    }

    fn dense_in(&self, i: usize) -> usize {
        self.config.model_width + i * self.config.dense_growth
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let c = &self.config;
        let (k, w) = (c.encoder_kernel, c.model_width);
        let mut specs = vec![
            conv_spec("enc.in.w".into(), k, c.in_channels, w),
            ParamSpec::new("enc.in.b", &[w], Init::Zeros),
        ];
        for i in 0..c.dense_dilations.len() {
            specs.push(conv_spec(
                format!("enc.dense{i}.w"),
                k,
                self.dense_in(i),
                c.dense_growth,
            ));
            specs.push(ParamSpec::new(
                format!("enc.dense{i}.b"),
                &[c.dense_growth],
                Init::Zeros,
            ));
        }
        specs.push(conv_spec(
            "enc.out.w".into(),
            k,
            self.dense_in(c.dense_dilations.len()),
            w,
        ));
        specs.push(ParamSpec::new("enc.out.b", &[w], Init::Zeros));
        for (t, f) in &self.blocks {
            specs.extend(t.param_specs());
            specs.extend(f.param_specs());
        }
        specs.push(linear_weight("dec.fc.w", c.n_bins * w, c.n_doa));
        specs.push(ParamSpec::new("dec.fc.b", &[c.n_doa], Init::Zeros));
        specs
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.param_specs())
    }

    pub fn init(&self, seed: u64) -> ParamStore {
        init_params(&self.param_specs(), seed)
    }

    fn conv(&self, g: &mut Graph, p: &ParamStore, x: Var, name: &str, dilation: usize) -> Result<Var, NetError> {
        let w = g.bind(p, &format!("{name}.w"))?;
        let b = g.bind(p, &format!("{name}.b"))?;
        let y = g.conv_same(x, w, dilation)?;
        Ok(g.add(y, b)?)
    }

    /// `[frames][bins][in_channels]` → `[frames][bins][width]`: a convolution,
    /// a dilated dense stack along frequency, and a closing convolution.
    pub fn encoder(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var, NetError> {
        let s = g.value(x).shape().to_vec();
        if s.len() != 3 || s[1] != self.config.n_bins || s[2] != self.config.in_channels {
            return Err(NetError::Shape(format!(
                "encoder expects [frames][{}][{}], got {s:?}",
                self.config.n_bins, self.config.in_channels
            )));
        }
        let h = self.conv(g, p, x, "enc.in", 1)?;
        let mut feats = g.silu(h)?;
        for (i, &d) in self.config.dense_dilations.iter().enumerate() {
            let h = self.conv(g, p, feats, &format!("enc.dense{i}"), d)?;
            let h = g.silu(h)?;
            feats = g.concat_last(&[feats, h])?;
        }
        self.conv(g, p, feats, "enc.out", 1)
    }

    /// One TF block on `[frames][bins][width]`; returns the block output and
    /// the skip carriers for the next block.
    pub fn tf_block(
        &self,
        g: &mut Graph,
        p: &ParamStore,
        index: usize,
        x: Var,
        skips: Option<Skips>,
        stage: Stage,
    ) -> Result<(Var, Skips), NetError> {
        let (t_layer, f_layer) = &self.blocks[index];
        let t_out = match stage {
            Stage::AcrossTime => x,
            _ => t_layer.forward(g, p, x)?,
        };
        let a = match skips {
            Some(s) => g.add(t_out, s.t)?,
            None => t_out,
        };
        let f_out = match stage {
            Stage::AcrossFrequency => a,
            _ => {
                let at = g.transpose01(a)?;
                let ft = f_layer.forward(g, p, at)?;
                g.transpose01(ft)?
            }
        };
        let out = match skips {
            Some(s) => g.add(f_out, s.f)?,
            None => f_out,
        };
        Ok((out, Skips { t: t_out, f: f_out }))
    }

    /// Mean-pool over frames, flatten bins×channels, fully connected, tanh.
    pub fn decoder(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var, NetError> {
        let s = g.value(x).shape().to_vec();
        if s[0] < self.config.pool_factor {
            return Err(NetError::Shape(format!(
                "{} frames is fewer than the pool factor {}",
                s[0], self.config.pool_factor
            )));
        }
        let pooled = g.mean_pool(x, self.config.pool_factor)?;
        let frames = g.value(pooled).shape()[0];
        let flat = g.reshape(pooled, &[frames, s[1] * s[2]])?;
        let w = g.bind(p, "dec.fc.w")?;
        let b = g.bind(p, "dec.fc.b")?;
        let y = g.matmul(flat, w)?;
        let y = g.add(y, b)?;
        Ok(g.tanh(y)?)
    }

    /// Full network on `[frames][bins][in_channels]` → `[frames / pool][181]`.
    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var, NetError> {
        let mut h = self.encoder(g, p, x)?;
        let mut skips = None;
        for i in 0..self.blocks.len() {
            let mark = g.len();
            let (out, s) = self.tf_block(g, p, i, h, skips, Stage::Both)?;
            if g.is_inference() {
                g.release_since(mark, &[out, s.t, s.f]);
            }
            h = out;
            skips = Some(s);
        }
        self.decoder(g, p, h)
    }

    /// Masked mean squared error between `pred` and a constant target.
    pub fn loss(&self, g: &mut Graph, pred: Var, target: &SpatialSpectrum, mask: &[bool]) -> Result<Var, NetError> {
        let frames = g.value(pred).shape()[0];
        if target.frames() != frames || mask.len() != frames {
            return Err(NetError::Shape(format!(
                "prediction has {frames} frames, target {}, mask {}",
                target.frames(),
                mask.len()
            )));
        }
        let kept = mask.iter().filter(|&&m| m).count();
        if kept == 0 {
            return Err(NetError::AllMasked);
        }
        let weights: Vec<f64> = mask
            .iter()
            .flat_map(|&m| std::iter::repeat_n(if m { 1.0 } else { 0.0 }, N_DOA))
            .collect();
        let t = g.constant(Tensor::new(vec![frames, N_DOA], target.values.clone())?)?;
        let w = g.constant(Tensor::new(vec![frames, N_DOA], weights)?)?;
        let d = g.sub(pred, t)?;
        let d = g.mul(d, w)?;
        let sq = g.mul(d, d)?;
        let s = g.sum(sq)?;
        Ok(g.scale(s, 1.0 / (kept * N_DOA) as f64)?)
    }

    /// Inference on one utterance's `[frames][bins][in_channels]` features.
    pub fn predict(&self, p: &ParamStore, features: &Tensor) -> Result<SpatialSpectrum, NetError> {
        let mut g = Graph::inference();
        let x = g.input("x", features.clone())?;
        let y = self.forward(&mut g, p, x)?;
        Ok(SpatialSpectrum::new(
            g.value(y).data().to_vec(),
            self.config.output_rate(),
        ))
    }
}

/// Model width in `1..=256` whose network, otherwise shaped like `base`, has
/// the parameter count closest to `target`.
pub fn width_nearest_param_count(base: &NetConfig, target: usize) -> usize {
    (1..=256)
        .filter_map(|w| {
            let cfg = NetConfig {
                model_width: w,
                ..base.clone()
            };
            TfMamba::new(cfg).ok().map(|m| (m.param_count().abs_diff(target), w))
        })
        .min()
        .map_or(1, |(_, w)| w)
}
