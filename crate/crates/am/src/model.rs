use crate::config::ModelConfig;
use crate::{AmError, Result};
use descant_nn::{
    log_softmax, Affine, Attention, BatchNorm, Conv2d, Dropout, MaxPool2, Mode, Parameter, Relu,
    Scalar, TdnnfLayer, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

/// Frame-level state log-posteriors; each row is a log-softmax output.
#[derive(Clone, Debug)]
pub struct Posteriors {
    pub frames: usize,
    pub num_states: usize,
    pub log_probs: Vec<f64>,
}

struct ConvBlock<F> {
    conv: Conv2d<F>,
    bn: BatchNorm<F>,
    relu: Relu<F>,
    pool: Option<MaxPool2<F>>,
}

/// The full network: input affine, convolution stack, factorized time-delay
/// stack with dropout, optional time-restricted self-attention, and the
/// output projection. `forward` yields logits; losses and posteriors apply
/// log-softmax on top.
pub struct AcousticModel<F: Scalar> {
    pub config: ModelConfig,
    input: Affine<F>,
    convs: Vec<ConvBlock<F>>,
    tdnnf: Vec<TdnnfLayer<F>>,
    dropouts: Vec<Dropout<F>>,
    attention: Option<Attention<F>>,
    output: Affine<F>,
}

impl<F: Scalar> AcousticModel<F> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let din = config.feat_dim + config.embed_dim;
        let input = Affine::new(din, config.conv_height, &mut rng);
        let heights = config.conv_heights()?;
        let mut convs = Vec::new();
        let mut cin = 1usize;
        for (i, (&cout, &h)) in config.conv_channels.iter().zip(&heights).enumerate() {
            convs.push(ConvBlock {
                conv: Conv2d::new(h, cin, cout, &mut rng),
                bn: BatchNorm::new(cout),
                relu: Relu::new(),
                pool: config.pool_after.contains(&(i + 1)).then(MaxPool2::new),
            });
            cin = cout;
        }
        let mut tdnnf = Vec::new();
        let mut tin = config.tdnnf_input_dim()?;
        for _ in 0..config.tdnnf_layers {
            tdnnf.push(TdnnfLayer::new(
                tin,
                config.tdnnf_bottleneck,
                config.tdnnf_hidden,
                config.tdnnf_offsets.clone(),
                &mut rng,
            )?);
            tin = config.tdnnf_hidden;
        }
        let mut dropouts = Vec::new();
        for i in 0..config.tdnnf_layers {
            dropouts.push(Dropout::new(0.0, seed.wrapping_add(1 + i as u64))?);
        }
        let mut attention = None;
        let mut out_in = config.tdnnf_hidden;
        if let Some(ctx) = &config.attention {
            attention = Some(Attention::new(config.tdnnf_hidden, ctx.clone(), &mut rng)?);
            out_in = ctx.num_heads * ctx.value_dim;
        }
        let output = Affine::new(out_in, config.num_states, &mut rng);
        let mut model = AcousticModel {
            config: config.clone(),
            input,
            convs,
            tdnnf,
            dropouts,
            attention,
            output,
        };
        // the final two layers train at half the global learning rate
        for p in model.output.params_mut() {
            p.lr_mult = 0.5;
        }
        match model.attention.as_mut() {
            Some(a) => {
                for p in a.params_mut() {
                    p.lr_mult = 0.5;
                }
            }
            None => {
                for p in model.tdnnf.last_mut().unwrap().params_mut() {
                    p.lr_mult = 0.5;
                }
            }
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.config.feat_dim + self.config.embed_dim
    }

    /// x: [B, T, feat_dim + embed_dim] -> logits [B, T, num_states].
    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.input_dim() {
            return Err(AmError::InvalidArg(format!(
                "expected [B,T,{}] input, got {:?}",
                self.input_dim(),
                s
            )));
        }
        let (batch, time) = (s[0], s[1]);
        let mut y = self.input.forward(x, mode)?;
        let mut height = self.config.conv_height;
        y = y.reshaped(&[batch, time, height, 1])?;
        for block in &mut self.convs {
            let c = block.conv.dims().2;
            y = block.conv.forward(&y, mode)?;
            y = block.bn.forward(&y, mode)?;
            y = block.relu.forward(&y, mode)?;
            if let Some(pool) = &mut block.pool {
                y = pool.forward(&y)?;
                height /= 2;
            }
            y = y.reshaped(&[batch, time, height, c])?;
        }
        let flat = height * self.config.conv_channels.last().unwrap();
        y = y.reshaped(&[batch, time, flat])?;
        for (layer, drop) in self.tdnnf.iter_mut().zip(&mut self.dropouts) {
            y = layer.forward(&y, mode)?;
            y = drop.forward(&y, mode)?;
        }
        if let Some(attn) = &mut self.attention {
            y = attn.forward(&y, mode)?;
        }
        Ok(self.output.forward(&y, mode)?)
    }

    /// Backpropagate `dlogits`, accumulating parameter gradients; returns the
    /// gradient with respect to the input.
    pub fn backward(&mut self, dlogits: &Tensor<F>) -> Result<Tensor<F>> {
        let mut g = self.output.backward(dlogits)?;
        if let Some(attn) = &mut self.attention {
            g = attn.backward(&g)?;
        }
        for (layer, drop) in self.tdnnf.iter_mut().zip(&mut self.dropouts).rev() {
            g = drop.backward(&g)?;
            g = layer.backward(&g)?;
        }
        let s = g.shape().to_vec();
        let (batch, time) = (s[0], s[1]);
        let mut height = self.config.final_height()?;
        let c_last = *self.config.conv_channels.last().unwrap();
        g = g.reshaped(&[batch, time, height, c_last])?;
        for block in self.convs.iter_mut().rev() {
            if let Some(pool) = &mut block.pool {
                g = pool.backward(&g)?;
                height *= 2;
            }
            let c = block.conv.dims().2;
            g = g.reshaped(&[batch, time, height, c])?;
            g = block.relu.backward(&g)?;
            g = block.bn.backward(&g)?;
            g = block.conv.backward(&g)?;
        }
        g = g.reshaped(&[batch, time, self.config.conv_height])?;
        Ok(self.input.backward(&g)?)
    }

    /// Log-posteriors for a single utterance in evaluation mode. Every row
    /// normalizes to 1 (logsumexp 0).
    pub fn forward_posteriors(&mut self, frames: &Tensor<F>) -> Result<Posteriors> {
        let s = frames.shape();
        if s.len() != 2 {
            return Err(AmError::InvalidArg(format!(
                "expected [T,{}], got {:?}",
                self.input_dim(),
                s
            )));
        }
        let time = s[0];
        let x = frames.clone().reshaped(&[1, time, s[1]])?;
        let logits = self.forward(&x, Mode::Eval)?;
        let lp = log_softmax(&logits);
        Ok(Posteriors {
            frames: time,
            num_states: self.config.num_states,
            log_probs: lp.data().iter().map(|v| v.f64()).collect(),
        })
    }

    /// Attention weights of the most recent forward: [B, H, T, L+R+1].
    pub fn last_attention_weights(&self) -> Result<&Tensor<F>> {
        self.attention
            .as_ref()
            .ok_or(AmError::NoAttention)?
            .last_weights()
            .ok_or_else(|| AmError::InvalidArg("no forward pass recorded".into()))
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        for d in &mut self.dropouts {
            d.set_rate(rate)?;
        }
        Ok(())
    }

    /// One semi-orthogonal constraint step on every bottleneck factor.
    pub fn constrain(&mut self) -> Result<()> {
        for layer in &mut self.tdnnf {
            layer.constrain()?;
        }
        Ok(())
    }

    /// All trainable parameters in checkpoint order.
    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut out = self.input.params_mut();
        for block in &mut self.convs {
            out.extend(block.conv.params_mut());
        }
        for layer in &mut self.tdnnf {
            out.extend(layer.params_mut());
        }
        if let Some(attn) = &mut self.attention {
            out.extend(attn.params_mut());
        }
        out.extend(self.output.params_mut());
        out
    }

    /// Batch-normalization layers in checkpoint order.
    pub fn batchnorms_mut(&mut self) -> Vec<&mut BatchNorm<F>> {
        let mut out: Vec<&mut BatchNorm<F>> =
            self.convs.iter_mut().map(|b| &mut b.bn).collect();
        for layer in &mut self.tdnnf {
            out.push(&mut layer.bn);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Live parameter count; equals `config.param_count()`.
    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.numel()).sum()
    }

    /// Worst semi-orthogonality deviation across the time-delay stack.
    pub fn semi_orth_deviation(&self) -> f64 {
        self.tdnnf
            .iter()
            .map(|l| descant_nn::semi_orth_deviation(&l.a.value))
            .fold(0.0, f64::max)
    }

    /// Binary checkpoint; values are stored in 32-bit, so saving and loading
    /// an f32 model reproduces it bit for bit.
    pub fn save(&mut self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        let cfg = self.config.to_text();
        buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        buf.extend_from_slice(cfg.as_bytes());
        let params = self.params_mut();
        buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in &params {
            let shape = p.value.shape();
            buf.push(shape.len() as u8);
            for &d in shape {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.value.data() {
                buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
            }
        }
        drop(params);
        let bns = self.batchnorms_mut();
        buf.extend_from_slice(&(bns.len() as u64).to_le_bytes());
        for bn in &bns {
            buf.extend_from_slice(&(bn.dim() as u32).to_le_bytes());
            for v in &bn.running_mean {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for v in &bn.running_var {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Cursor { bytes: &bytes, pos: 0 };
        let magic = r.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(AmError::BadCheckpoint("bad magic".into()));
        }
        let cfg_len = r.u32()? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
            .map_err(|e| AmError::BadCheckpoint(e.to_string()))?;
        let config = ModelConfig::from_text(cfg_text)?;
        let mut model = AcousticModel::new(&config, 0)?;
        let n_params = r.u64()? as usize;
        {
            let params = model.params_mut();
            if n_params != params.len() {
                return Err(AmError::BadCheckpoint(format!(
                    "{} parameter tensors, expected {}",
                    n_params,
                    params.len()
                )));
            }
            for p in params {
                let ndim = r.take(1)?[0] as usize;
                let mut shape = Vec::with_capacity(ndim);
                for _ in 0..ndim {
                    shape.push(r.u32()? as usize);
                }
                if shape != p.value.shape() {
                    return Err(AmError::BadCheckpoint(format!(
                        "tensor shape {:?}, expected {:?}",
                        shape,
                        p.value.shape()
                    )));
                }
                for v in p.value.data_mut() {
                    *v = F::c(r.f32()? as f64);
                }
            }
        }
        let n_bns = r.u64()? as usize;
        {
            let bns = model.batchnorms_mut();
            if n_bns != bns.len() {
                return Err(AmError::BadCheckpoint(format!(
                    "{} batchnorm records, expected {}",
                    n_bns,
                    bns.len()
                )));
            }
            for bn in bns {
                let dim = r.u32()? as usize;
                if dim != bn.dim() {
                    return Err(AmError::BadCheckpoint(format!(
                        "batchnorm dim {dim}, expected {}",
                        bn.dim()
                    )));
                }
                for v in &mut bn.running_mean {
                    *v = r.f64_le()?;
                }
                for v in &mut bn.running_var {
                    *v = r.f64_le()?;
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(AmError::BadCheckpoint("trailing bytes".into()));
        }
        Ok(model)
    }
}

const MAGIC: &[u8] = b"DAMC1\n";

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AmError::BadCheckpoint("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64_le(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
