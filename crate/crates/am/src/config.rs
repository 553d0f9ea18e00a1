use crate::{AmError, Result};
use descant_nn::AttentionContext;

/// Architecture description. The reference recipe uses six 3x3 convolution
/// blocks (max-pooling the frequency axis after blocks 3, 5 and 6), nine
/// factorized time-delay layers and, for the attention variant, one
/// multi-head time-restricted self-attention layer right before the final
/// projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Filter-bank dimensions per frame.
    pub feat_dim: usize,
    /// Speaker-embedding dimensions appended to every frame.
    pub embed_dim: usize,
    /// Height (frequency bins) entering the convolution stack; the input
    /// affine maps feat_dim + embed_dim down to this.
    pub conv_height: usize,
    /// Output channels per convolution block.
    pub conv_channels: Vec<usize>,
    /// 1-based indices of convolution blocks followed by a frequency pool.
    pub pool_after: Vec<usize>,
    pub tdnnf_layers: usize,
    pub tdnnf_hidden: usize,
    pub tdnnf_bottleneck: usize,
    pub tdnnf_offsets: Vec<i64>,
    pub attention: Option<AttentionContext>,
    /// Output units (one per phone HMM state).
    pub num_states: usize,
}

/// Attention restriction window: 15 frames of past and 6 of future context.
pub const ATTN_LEFT: usize = 15;
pub const ATTN_RIGHT: usize = 6;

impl ModelConfig {
    /// Full-size dimensions from the reference recipe.
    pub fn full(num_states: usize, attention_heads: Option<usize>) -> Self {
        ModelConfig {
            feat_dim: 40,
            embed_dim: crate::embedding::EMBEDDING_DIM,
            conv_height: 40,
            conv_channels: vec![48, 48, 64, 64, 64, 128],
            pool_after: vec![3, 5, 6],
            tdnnf_layers: 9,
            tdnnf_hidden: 1024,
            tdnnf_bottleneck: 128,
            tdnnf_offsets: vec![-3, 0, 3],
            attention: attention_heads.map(|h| AttentionContext {
                left: ATTN_LEFT,
                right: ATTN_RIGHT,
                num_heads: h,
                key_dim: 60,
                value_dim: 40,
            }),
            num_states,
        }
    }

    /// Reduced dimensions that train in minutes on a single desktop core:
    /// same layer structure, narrower channels and hidden layers.
    pub fn desk(num_states: usize, attention_heads: Option<usize>) -> Self {
        ModelConfig {
            feat_dim: 40,
            embed_dim: crate::embedding::EMBEDDING_DIM,
            conv_height: 40,
            conv_channels: vec![8, 8, 16, 16, 16, 32],
            pool_after: vec![3, 5, 6],
            tdnnf_layers: 9,
            tdnnf_hidden: 64,
            tdnnf_bottleneck: 16,
            tdnnf_offsets: vec![-3, 0, 3],
            attention: attention_heads.map(|h| AttentionContext {
                left: ATTN_LEFT,
                right: ATTN_RIGHT,
                num_heads: h,
                key_dim: 16,
                value_dim: 16,
            }),
            num_states,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feat_dim == 0 || self.conv_height == 0 || self.num_states == 0 {
            return Err(AmError::BadConfig("zero dimension".into()));
        }
        if self.conv_channels.is_empty() {
            return Err(AmError::BadConfig("need at least one conv block".into()));
        }
        if self.tdnnf_layers == 0 || self.tdnnf_hidden == 0 || self.tdnnf_bottleneck == 0 {
            return Err(AmError::BadConfig("need at least one tdnnf layer".into()));
        }
        if self.tdnnf_offsets.is_empty() {
            return Err(AmError::BadConfig("tdnnf needs offsets".into()));
        }
        for &p in &self.pool_after {
            if p == 0 || p > self.conv_channels.len() {
                return Err(AmError::BadConfig(format!(
                    "pool_after index {p} outside 1..={}",
                    self.conv_channels.len()
                )));
            }
        }
        // heights must stay even wherever a pool applies
        self.conv_heights()?;
        if let Some(ctx) = &self.attention {
            ctx.validate()?;
        }
        Ok(())
    }

    /// Input height of every convolution block, validated against pooling.
    pub fn conv_heights(&self) -> Result<Vec<usize>> {
        let mut h = self.conv_height;
        let mut out = Vec::with_capacity(self.conv_channels.len());
        for i in 1..=self.conv_channels.len() {
            out.push(h);
            if self.pool_after.contains(&i) {
                if h % 2 != 0 {
                    return Err(AmError::BadConfig(format!(
                        "pooling after block {i} needs an even height, got {h}"
                    )));
                }
                h /= 2;
            }
        }
        Ok(out)
    }

    /// Height after the last convolution block (and its pool, if any).
    pub fn final_height(&self) -> Result<usize> {
        let heights = self.conv_heights()?;
        let mut h = *heights.last().unwrap();
        if self.pool_after.contains(&self.conv_channels.len()) {
            h /= 2;
        }
        Ok(h)
    }

    /// Flattened dimension entering the first time-delay layer.
    pub fn tdnnf_input_dim(&self) -> Result<usize> {
        Ok(self.final_height()? * *self.conv_channels.last().unwrap())
    }

    /// Analytic parameter count; must equal the sum over live tensors.
    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        let mut total = 0usize;
        let din = self.feat_dim + self.embed_dim;
        total += din * self.conv_height + self.conv_height;
        let mut cin = 1usize;
        for &cout in &self.conv_channels {
            total += 9 * cin * cout + cout;
            cin = cout;
        }
        let k = self.tdnnf_offsets.len();
        let mut tin = self.tdnnf_input_dim()?;
        for _ in 0..self.tdnnf_layers {
            total += self.tdnnf_bottleneck * tin * k
                + self.tdnnf_bottleneck * self.tdnnf_hidden
                + self.tdnnf_hidden;
            tin = self.tdnnf_hidden;
        }
        let mut out_in = self.tdnnf_hidden;
        if let Some(ctx) = &self.attention {
            total += ctx.num_heads * self.tdnnf_hidden * (2 * ctx.key_dim + ctx.value_dim);
            out_in = ctx.num_heads * ctx.value_dim;
        }
        total += out_in * self.num_states + self.num_states;
        Ok(total)
    }

    /// Serialize to the key=value block stored inside checkpoints.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("feat_dim={}\n", self.feat_dim));
        s.push_str(&format!("embed_dim={}\n", self.embed_dim));
        s.push_str(&format!("conv_height={}\n", self.conv_height));
        s.push_str(&format!("conv_channels={}\n", join(&self.conv_channels)));
        s.push_str(&format!("pool_after={}\n", join(&self.pool_after)));
        s.push_str(&format!("tdnnf_layers={}\n", self.tdnnf_layers));
        s.push_str(&format!("tdnnf_hidden={}\n", self.tdnnf_hidden));
        s.push_str(&format!("tdnnf_bottleneck={}\n", self.tdnnf_bottleneck));
        s.push_str(&format!("tdnnf_offsets={}\n", join(&self.tdnnf_offsets)));
        match &self.attention {
            None => s.push_str("attention=none\n"),
            Some(c) => s.push_str(&format!(
                "attention={},{},{},{},{}\n",
                c.left, c.right, c.num_heads, c.key_dim, c.value_dim
            )),
        }
        s.push_str(&format!("num_states={}\n", self.num_states));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AmError::BadCheckpoint(format!("bad config line: {line}")))?;
            map.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<String> {
            map.get(k)
                .cloned()
                .ok_or_else(|| AmError::BadCheckpoint(format!("config missing key {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|e| AmError::BadCheckpoint(format!("config key {k}: {e}")))
        };
        let attention = match get("attention")?.as_str() {
            "none" => None,
            v => {
                let parts: Vec<usize> = v
                    .split(',')
                    .map(|p| p.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| AmError::BadCheckpoint(format!("config key attention: {e}")))?;
                if parts.len() != 5 {
                    return Err(AmError::BadCheckpoint("attention wants 5 fields".into()));
                }
                Some(AttentionContext {
                    left: parts[0],
                    right: parts[1],
                    num_heads: parts[2],
                    key_dim: parts[3],
                    value_dim: parts[4],
                })
            }
        };
        let cfg = ModelConfig {
            feat_dim: num("feat_dim")?,
            embed_dim: num("embed_dim")?,
            conv_height: num("conv_height")?,
            conv_channels: parse_list(&get("conv_channels")?)?,
            pool_after: parse_list(&get("pool_after")?)?,
            tdnnf_layers: num("tdnnf_layers")?,
            tdnnf_hidden: num("tdnnf_hidden")?,
            tdnnf_bottleneck: num("tdnnf_bottleneck")?,
            tdnnf_offsets: parse_list(&get("tdnnf_offsets")?)?,
            attention,
            num_states: num("num_states")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| AmError::BadCheckpoint(format!("bad list entry {p}: {e}")))
        })
        .collect()
}

/// Optimization schedule. Learning rate decays exponentially from `lr_start`
/// to `lr_end` over all minibatches; dropout ramps linearly 0 -> peak at the
/// training midpoint -> 0 at the end; the bottleneck factors are re-projected
/// toward semi-orthogonality every `constrain_interval` minibatches.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Chunks per minibatch.
    pub minibatch: usize,
    /// Cycled per chunk when cutting utterances into fixed-width pieces.
    pub chunk_widths: Vec<usize>,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub dropout_peak: f64,
    pub constrain_interval: usize,
    /// Uniformly average this many trailing per-epoch checkpoints.
    pub average_last: usize,
    /// Train on 0.9x/1.0x/1.1x speed-perturbed copies of the audio.
    pub speed_perturb: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            minibatch: 128,
            chunk_widths: vec![140, 100, 160],
            lr_start: 5e-4,
            lr_end: 5e-5,
            momentum: 0.9,
            dropout_peak: 0.2,
            constrain_interval: 4,
            average_last: 10,
            speed_perturb: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(AmError::InvalidArg("epochs and minibatch must be > 0".into()));
        }
        if self.chunk_widths.is_empty() || self.chunk_widths.contains(&0) {
            return Err(AmError::InvalidArg("chunk widths must be positive".into()));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(AmError::InvalidArg("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(AmError::InvalidArg("momentum outside [0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_peak) {
            return Err(AmError::InvalidArg("dropout peak outside [0,1)".into()));
        }
        if self.constrain_interval == 0 || self.average_last == 0 {
            return Err(AmError::InvalidArg(
                "constrain interval and average count must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// lr(i) = lr_start * (lr_end/lr_start)^(i/N) for minibatch i of N.
    pub fn learning_rate(&self, minibatch_idx: usize, total_minibatches: usize) -> f64 {
        let n = total_minibatches.max(1) as f64;
        let frac = minibatch_idx as f64 / n;
        self.lr_start * (self.lr_end / self.lr_start).powf(frac)
    }

    /// Piecewise-linear dropout: 0 at the start, `dropout_peak` at the
    /// midpoint, 0 again at the end.
    pub fn dropout_rate(&self, minibatch_idx: usize, total_minibatches: usize) -> f64 {
        let n = total_minibatches.max(1) as f64;
        let p = (minibatch_idx as f64 / n).clamp(0.0, 1.0);
        if p <= 0.5 {
            self.dropout_peak * 2.0 * p
        } else {
            self.dropout_peak * 2.0 * (1.0 - p)
        }
    }
}
