use crate::linalg::{axpy, gemm_nn, gemm_nt, gemm_tn};
use crate::semiorth::semi_orthogonal_step;
use crate::tensor::{Parameter, Scalar, Tensor};
use crate::{NnError, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// y = xW + b over the last dimension.
pub struct Affine<F> {
    pub w: Parameter<F>, // [din, dout]
    pub b: Parameter<F>, // [dout]
    din: usize,
    dout: usize,
    cache_x: Option<Tensor<F>>,
}

impl<F: Scalar> Affine<F> {
    pub fn new<R: Rng>(din: usize, dout: usize, rng: &mut R) -> Self {
        Affine {
            w: Parameter::new(Tensor::rand_fan_in(&[din, dout], din, rng)),
            b: Parameter::new(Tensor::zeros(&[dout])),
            din,
            dout,
            cache_x: None,
        }
    }

    pub fn from_params(w: Tensor<F>, b: Tensor<F>) -> Result<Self> {
        if w.shape().len() != 2 || b.shape() != [w.shape()[1]] {
            return Err(NnError::ShapeMismatch(format!(
                "affine wants w [din,dout], b [dout]; got {:?} and {:?}",
                w.shape(),
                b.shape()
            )));
        }
        let (din, dout) = (w.shape()[0], w.shape()[1]);
        Ok(Affine {
            w: Parameter::new(w),
            b: Parameter::new(b),
            din,
            dout,
            cache_x: None,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.din, self.dout)
    }

    pub fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Result<Tensor<F>> {
        let (rows, d) = x.as_2d();
        if d != self.din {
            return Err(NnError::ShapeMismatch(format!(
                "affine expected last dim {}, got {}",
                self.din, d
            )));
        }
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = self.dout;
        let mut y = Tensor::zeros(&out_shape);
        {
            let yd = y.data_mut();
            for r in 0..rows {
                yd[r * self.dout..(r + 1) * self.dout].copy_from_slice(self.b.value.data());
            }
            gemm_nn(rows, self.din, self.dout, x.data(), self.w.value.data(), yd);
        }
        self.cache_x = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| NnError::InvalidArg("backward before forward".into()))?;
        let (rows, _) = x.as_2d();
        if dy.as_2d() != (rows, self.dout) {
            return Err(NnError::ShapeMismatch("affine backward dy".into()));
        }
        // dW += x^T dy ; db += colsum(dy) ; dx = dy W^T
        gemm_tn(
            self.din,
            rows,
            self.dout,
            x.data(),
            dy.data(),
            self.w.grad.data_mut(),
        );
        {
            let db = self.b.grad.data_mut();
            for r in 0..rows {
                axpy(F::one(), &dy.data()[r * self.dout..(r + 1) * self.dout], db);
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm_nt(
            rows,
            self.dout,
            self.din,
            dy.data(),
            self.w.value.data(),
            dx.data_mut(),
        );
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn param_count(&self) -> usize {
        self.din * self.dout + self.dout
    }
}

/// Per-dimension normalization over all leading axes (minibatch x time),
/// with running statistics used at inference. No learned affine.
pub struct BatchNorm<F> {
    dim: usize,
    eps: f64,
    momentum: f64,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    cache: Option<(Tensor<F>, Vec<F>)>, // (xhat, inv_std)
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            dim,
            eps: 1e-5,
            momentum: 0.9,
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        let (rows, d) = x.as_2d();
        if d != self.dim {
            return Err(NnError::ShapeMismatch(format!(
                "batchnorm expected dim {}, got {}",
                self.dim, d
            )));
        }
        if rows == 0 {
            return Err(NnError::EmptyInput("batchnorm on empty tensor".into()));
        }
        let mut y = Tensor::zeros(x.shape());
        match mode {
            Mode::Train => {
                let mut mean = vec![F::zero(); d];
                let mut var = vec![F::zero(); d];
                for r in 0..rows {
                    axpy(F::one(), &x.data()[r * d..(r + 1) * d], &mut mean);
                }
                let inv_n = F::c(1.0 / rows as f64);
                for m in &mut mean {
                    *m = *m * inv_n;
                }
                for r in 0..rows {
                    let row = &x.data()[r * d..(r + 1) * d];
                    for j in 0..d {
                        let c = row[j] - mean[j];
                        var[j] = var[j] + c * c;
                    }
                }
                for v in &mut var {
                    *v = *v * inv_n;
                }
                let inv_std: Vec<F> = var
                    .iter()
                    .map(|&v| F::one() / (v + F::c(self.eps)).sqrt())
                    .collect();
                {
                    let yd = y.data_mut();
                    for r in 0..rows {
                        for j in 0..d {
                            yd[r * d + j] = (x.data()[r * d + j] - mean[j]) * inv_std[j];
                        }
                    }
                }
                for j in 0..d {
                    self.running_mean[j] =
                        self.momentum * self.running_mean[j] + (1.0 - self.momentum) * mean[j].f64();
                    self.running_var[j] =
                        self.momentum * self.running_var[j] + (1.0 - self.momentum) * var[j].f64();
                }
                self.cache = Some((y.clone(), inv_std));
            }
            Mode::Eval => {
                let yd = y.data_mut();
                for r in 0..rows {
                    for j in 0..d {
                        let m = F::c(self.running_mean[j]);
                        let s = F::c(1.0 / (self.running_var[j] + self.eps).sqrt());
                        yd[r * d + j] = (x.data()[r * d + j] - m) * s;
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let (xhat, inv_std) = self
            .cache
            .as_ref()
            .ok_or_else(|| NnError::InvalidArg("backward before train forward".into()))?;
        let (rows, d) = xhat.as_2d();
        if dy.as_2d() != (rows, d) {
            return Err(NnError::ShapeMismatch("batchnorm backward dy".into()));
        }
        let inv_n = F::c(1.0 / rows as f64);
        let mut mean_dy = vec![F::zero(); d];
        let mut mean_dy_xhat = vec![F::zero(); d];
        for r in 0..rows {
            for j in 0..d {
                let g = dy.data()[r * d + j];
                mean_dy[j] = mean_dy[j] + g;
                mean_dy_xhat[j] = mean_dy_xhat[j] + g * xhat.data()[r * d + j];
            }
        }
        for j in 0..d {
            mean_dy[j] = mean_dy[j] * inv_n;
            mean_dy_xhat[j] = mean_dy_xhat[j] * inv_n;
        }
        let mut dx = Tensor::zeros(dy.shape());
        let dxd = dx.data_mut();
        for r in 0..rows {
            for j in 0..d {
                let g = dy.data()[r * d + j];
                let xh = xhat.data()[r * d + j];
                dxd[r * d + j] = inv_std[j] * (g - mean_dy[j] - xh * mean_dy_xhat[j]);
            }
        }
        Ok(dx)
    }
}

pub struct Relu<F> {
    mask: Option<Vec<bool>>,
    _p: std::marker::PhantomData<F>,
}

impl<F: Scalar> Default for Relu<F> {
    fn default() -> Self {
        Relu {
            mask: None,
            _p: std::marker::PhantomData,
        }
    }
}

impl<F: Scalar> Relu<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Result<Tensor<F>> {
        let mut y = x.clone();
        let mask: Vec<bool> = x.data().iter().map(|&v| v > F::zero()).collect();
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            if !m {
                *v = F::zero();
            }
        }
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| NnError::InvalidArg("backward before forward".into()))?;
        if mask.len() != dy.numel() {
            return Err(NnError::ShapeMismatch("relu backward dy".into()));
        }
        let mut dx = dy.clone();
        for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
            if !m {
                *v = F::zero();
            }
        }
        Ok(dx)
    }
}

/// Inverted dropout; identity at inference and at rate 0.
pub struct Dropout<F> {
    rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<bool>>,
    _p: std::marker::PhantomData<F>,
}

impl<F: Scalar> Dropout<F> {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidArg(format!(
                "dropout rate {rate} outside [0,1)"
            )));
        }
        Ok(Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
            _p: std::marker::PhantomData,
        })
    }

    pub fn set_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidArg(format!(
                "dropout rate {rate} outside [0,1)"
            )));
        }
        self.rate = rate;
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let scale = F::c(1.0 / keep);
        let mut y = x.clone();
        let mask: Vec<bool> = (0..x.numel())
            .map(|_| self.rng.gen::<f64>() < keep)
            .collect();
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            *v = if m { *v * scale } else { F::zero() };
        }
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        match &self.mask {
            None => Ok(dy.clone()),
            Some(mask) => {
                let scale = F::c(1.0 / (1.0 - self.rate));
                let mut dx = dy.clone();
                for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
                    *v = if m { *v * scale } else { F::zero() };
                }
                Ok(dx)
            }
        }
    }
}

/// Factorized time-delay layer: gather time offsets (edge replication),
/// a semi-orthogonally constrained bottleneck factor, an expansion factor,
/// then batchnorm and ReLU.
pub struct TdnnfLayer<F> {
    pub offsets: Vec<i64>,
    /// Bottleneck factor, stored as the [bottleneck x (din*|offsets|)] map.
    pub a: Parameter<F>,
    /// Expansion factor [bottleneck x hidden] plus bias.
    pub b: Parameter<F>,
    pub bias: Parameter<F>,
    pub bn: BatchNorm<F>,
    relu: Relu<F>,
    din: usize,
    bottleneck: usize,
    hidden: usize,
    cache: Option<TdnnfCache<F>>,
}

struct TdnnfCache<F> {
    gathered: Tensor<F>, // [B,T,din*K]
    mid: Tensor<F>,      // [B,T,bottleneck]
    pre_relu: Tensor<F>, // batchnorm output
    batch: usize,
    time: usize,
}

impl<F: Scalar> TdnnfLayer<F> {
    pub fn new<R: Rng>(
        din: usize,
        bottleneck: usize,
        hidden: usize,
        offsets: Vec<i64>,
        rng: &mut R,
    ) -> Result<Self> {
        if offsets.is_empty() {
            return Err(NnError::InvalidArg("tdnnf needs at least one offset".into()));
        }
        let k = offsets.len();
        if bottleneck > din * k {
            return Err(NnError::InvalidArg(
                "bottleneck larger than gathered input dim".into(),
            ));
        }
        Ok(TdnnfLayer {
            offsets,
            a: Parameter::new(Tensor::rand_fan_in(&[bottleneck, din * k], din * k, rng)),
            b: Parameter::new(Tensor::rand_fan_in(&[bottleneck, hidden], bottleneck, rng)),
            bias: Parameter::new(Tensor::zeros(&[hidden])),
            bn: BatchNorm::new(hidden),
            relu: Relu::new(),
            din,
            bottleneck,
            hidden,
            cache: None,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.din, self.bottleneck, self.hidden)
    }

    pub fn param_count(&self) -> usize {
        self.bottleneck * self.din * self.offsets.len()
            + self.bottleneck * self.hidden
            + self.hidden
    }

    /// x: [B, T, din] -> [B, T, hidden]
    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.din {
            return Err(NnError::ShapeMismatch(format!(
                "tdnnf expected [B,T,{}], got {:?}",
                self.din, s
            )));
        }
        let (batch, time) = (s[0], s[1]);
        if time == 0 || batch == 0 {
            return Err(NnError::EmptyInput("tdnnf on empty input".into()));
        }
        let k = self.offsets.len();
        let d = self.din;
        let mut gathered = Tensor::zeros(&[batch, time, d * k]);
        {
            let gd = gathered.data_mut();
            for b in 0..batch {
                for t in 0..time {
                    for (ki, &off) in self.offsets.iter().enumerate() {
                        let src = (t as i64 + off).clamp(0, time as i64 - 1) as usize;
                        let from = &x.data()[(b * time + src) * d..(b * time + src + 1) * d];
                        let dst = (b * time + t) * d * k + ki * d;
                        gd[dst..dst + d].copy_from_slice(from);
                    }
                }
            }
        }
        let rows = batch * time;
        let mut mid = Tensor::zeros(&[batch, time, self.bottleneck]);
        gemm_nt(
            rows,
            d * k,
            self.bottleneck,
            gathered.data(),
            self.a.value.data(),
            mid.data_mut(),
        );
        let mut lin = Tensor::zeros(&[batch, time, self.hidden]);
        {
            let ld = lin.data_mut();
            for r in 0..rows {
                ld[r * self.hidden..(r + 1) * self.hidden].copy_from_slice(self.bias.value.data());
            }
            gemm_nn(
                rows,
                self.bottleneck,
                self.hidden,
                mid.data(),
                self.b.value.data(),
                ld,
            );
        }
        let normed = self.bn.forward(&lin, mode)?;
        let y = self.relu.forward(&normed, mode)?;
        self.cache = Some(TdnnfCache {
            gathered,
            mid,
            pre_relu: normed,
            batch,
            time,
        });
        Ok(y)
    }

    /// Pre-ReLU activations from the last forward; used by gradient checks
    /// to reject inputs sitting on the activation kink.
    pub fn last_preactivation(&self) -> Option<&Tensor<F>> {
        self.cache.as_ref().map(|c| &c.pre_relu)
    }

    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let d_norm = self.relu.backward(dy)?;
        let d_lin = self.bn.backward(&d_norm)?;
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| NnError::InvalidArg("backward before forward".into()))?;
        let (batch, time) = (cache.batch, cache.time);
        let rows = batch * time;
        let k = self.offsets.len();
        let d = self.din;
        // bias
        {
            let db = self.bias.grad.data_mut();
            for r in 0..rows {
                axpy(
                    F::one(),
                    &d_lin.data()[r * self.hidden..(r + 1) * self.hidden],
                    db,
                );
            }
        }
        // dB += mid^T d_lin ; d_mid = d_lin B^T
        gemm_tn(
            self.bottleneck,
            rows,
            self.hidden,
            cache.mid.data(),
            d_lin.data(),
            self.b.grad.data_mut(),
        );
        let mut d_mid = Tensor::zeros(&[batch, time, self.bottleneck]);
        gemm_nt(
            rows,
            self.hidden,
            self.bottleneck,
            d_lin.data(),
            self.b.value.data(),
            d_mid.data_mut(),
        );
        // dA += d_mid^T gathered ; d_gathered = d_mid A
        gemm_tn(
            self.bottleneck,
            rows,
            d * k,
            d_mid.data(),
            cache.gathered.data(),
            self.a.grad.data_mut(),
        );
        let mut d_gathered = Tensor::zeros(&[batch, time, d * k]);
        gemm_nn(
            rows,
            self.bottleneck,
            d * k,
            d_mid.data(),
            self.a.value.data(),
            d_gathered.data_mut(),
        );
        // scatter back through the clamped gather
        let mut dx = Tensor::zeros(&[batch, time, d]);
        {
            let dxd = dx.data_mut();
            for b in 0..batch {
                for t in 0..time {
                    for (ki, &off) in self.offsets.iter().enumerate() {
                        let src = (t as i64 + off).clamp(0, time as i64 - 1) as usize;
                        let from = (b * time + t) * d * k + ki * d;
                        axpy(
                            F::one(),
                            &d_gathered.data()[from..from + d],
                            &mut dxd[(b * time + src) * d..(b * time + src + 1) * d],
                        );
                    }
                }
            }
        }
        Ok(dx)
    }

    /// One semi-orthogonal constraint step on the bottleneck factor.
    pub fn constrain(&mut self) -> Result<()> {
        semi_orthogonal_step(&mut self.a.value)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.a, &mut self.b, &mut self.bias]
    }
}
