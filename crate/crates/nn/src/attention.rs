use crate::linalg::{axpy, dot, gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::{Parameter, Scalar, Tensor};
use crate::{layers::Mode, NnError, Result};
use rand::Rng;

/// Restriction window and head geometry for time-restricted self-attention.
/// `left` is past context, `right` future context; offset 0 (the centering
/// bin) sits at index `left` of a weight row of length `left + right + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionContext {
    pub left: usize,
    pub right: usize,
    pub num_heads: usize,
    pub key_dim: usize,
    pub value_dim: usize,
}

impl AttentionContext {
    pub fn new(left: usize, right: usize, num_heads: usize) -> Self {
        AttentionContext {
            left,
            right,
            num_heads,
            key_dim: 60,
            value_dim: 40,
        }
    }

    pub fn window(&self) -> usize {
        self.left + self.right + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.left + self.right < 1 {
            return Err(NnError::InvalidArg(
                "attention context needs left+right >= 1".into(),
            ));
        }
        if self.key_dim == 0 || self.value_dim == 0 || self.num_heads == 0 {
            return Err(NnError::InvalidArg(
                "attention dims and heads must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Multi-head time-restricted self-attention. Per-head query/key/value
/// projections; the shared output projection lives outside this op so the
/// raw per-head weights stay observable. Out-of-range positions are masked
/// (weight exactly 0).
pub struct Attention<F> {
    pub ctx: AttentionContext,
    pub wq: Parameter<F>, // [H*dk, D]
    pub wk: Parameter<F>, // [H*dk, D]
    pub wv: Parameter<F>, // [H*dv, D]
    din: usize,
    cache: Option<AttnCache<F>>,
}

struct AttnCache<F> {
    x: Tensor<F>,
    q: Tensor<F>,
    k: Tensor<F>,
    v: Tensor<F>,
    weights: Tensor<F>, // [B, H, T, L+R+1]
}

impl<F: Scalar> Attention<F> {
    pub fn new<R: Rng>(din: usize, ctx: AttentionContext, rng: &mut R) -> Result<Self> {
        ctx.validate()?;
        let (h, dk, dv) = (ctx.num_heads, ctx.key_dim, ctx.value_dim);
        Ok(Attention {
            ctx,
            wq: Parameter::new(Tensor::rand_fan_in(&[h * dk, din], din, rng)),
            wk: Parameter::new(Tensor::rand_fan_in(&[h * dk, din], din, rng)),
            wv: Parameter::new(Tensor::rand_fan_in(&[h * dv, din], din, rng)),
            din,
            cache: None,
        })
    }

    pub fn din(&self) -> usize {
        self.din
    }

    /// H*D*(2*key_dim + value_dim); the projections carry no biases.
    pub fn param_count(&self) -> usize {
        self.ctx.num_heads * self.din * (2 * self.ctx.key_dim + self.ctx.value_dim)
    }

    /// x: [B, T, D] -> y: [B, T, H*value_dim]. Weights for the last forward
    /// are available from `last_weights`.
    pub fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Result<Tensor<F>> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.din {
            return Err(NnError::ShapeMismatch(format!(
                "attention expected [B,T,{}], got {:?}",
                self.din, s
            )));
        }
        let (batch, time) = (s[0], s[1]);
        if batch == 0 || time == 0 {
            return Err(NnError::EmptyInput("attention on empty input".into()));
        }
        let (heads, dk, dv) = (self.ctx.num_heads, self.ctx.key_dim, self.ctx.value_dim);
        let (l, r) = (self.ctx.left as i64, self.ctx.right as i64);
        let win = self.ctx.window();
        let rows = batch * time;
        let mut q = Tensor::zeros(&[batch, time, heads * dk]);
        let mut k = Tensor::zeros(&[batch, time, heads * dk]);
        let mut v = Tensor::zeros(&[batch, time, heads * dv]);
        gemm_nt(rows, self.din, heads * dk, x.data(), self.wq.value.data(), q.data_mut());
        gemm_nt(rows, self.din, heads * dk, x.data(), self.wk.value.data(), k.data_mut());
        gemm_nt(rows, self.din, heads * dv, x.data(), self.wv.value.data(), v.data_mut());
        let scale = F::c(1.0 / (dk as f64).sqrt());
        let mut weights = Tensor::zeros(&[batch, heads, time, win]);
        let mut y = Tensor::zeros(&[batch, time, heads * dv]);
        {
            let wd = weights.data_mut();
            let yd = y.data_mut();
            let mut logits = vec![F::zero(); win];
            for b in 0..batch {
                for h in 0..heads {
                    for t in 0..time {
                        let qrow = &q.data()[(b * time + t) * heads * dk + h * dk..][..dk];
                        let mut max = F::neg_infinity();
                        for (wi, delta) in (-l..=r).enumerate() {
                            let p = t as i64 + delta;
                            if p < 0 || p >= time as i64 {
                                logits[wi] = F::neg_infinity();
                                continue;
                            }
                            let krow =
                                &k.data()[(b * time + p as usize) * heads * dk + h * dk..][..dk];
                            let lv = dot(qrow, krow) * scale;
                            logits[wi] = lv;
                            if lv > max {
                                max = lv;
                            }
                        }
                        let mut denom = F::zero();
                        for lv in logits.iter_mut() {
                            if lv.is_finite() {
                                *lv = (*lv - max).exp();
                                denom = denom + *lv;
                            } else {
                                *lv = F::zero();
                            }
                        }
                        let wbase = ((b * heads + h) * time + t) * win;
                        let ybase = (b * time + t) * heads * dv + h * dv;
                        for (wi, delta) in (-l..=r).enumerate() {
                            let w = logits[wi] / denom;
                            wd[wbase + wi] = w;
                            let p = t as i64 + delta;
                            if w != F::zero() && p >= 0 && p < time as i64 {
                                let vrow = &v.data()
                                    [(b * time + p as usize) * heads * dv + h * dv..][..dv];
                                axpy(w, vrow, &mut yd[ybase..ybase + dv]);
                            }
                        }
                    }
                }
            }
        }
        self.cache = Some(AttnCache {
            x: x.clone(),
            q,
            k,
            v,
            weights,
        });
        Ok(y)
    }

    /// Attention weights of the most recent forward: [B, H, T, L+R+1].
    pub fn last_weights(&self) -> Option<&Tensor<F>> {
        self.cache.as_ref().map(|c| &c.weights)
    }

    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| NnError::InvalidArg("backward before forward".into()))?;
        let s = cache.x.shape();
        let (batch, time) = (s[0], s[1]);
        let (heads, dk, dv) = (self.ctx.num_heads, self.ctx.key_dim, self.ctx.value_dim);
        if dy.shape() != [batch, time, heads * dv] {
            return Err(NnError::ShapeMismatch("attention backward dy".into()));
        }
        let (l, r) = (self.ctx.left as i64, self.ctx.right as i64);
        let win = self.ctx.window();
        let rows = batch * time;
        let scale = F::c(1.0 / (dk as f64).sqrt());
        let mut dq = Tensor::zeros(&[batch, time, heads * dk]);
        let mut dk_t = Tensor::zeros(&[batch, time, heads * dk]);
        let mut dv_t = Tensor::zeros(&[batch, time, heads * dv]);
        {
            let dqd = dq.data_mut();
            let dkd = dk_t.data_mut();
            let dvd = dv_t.data_mut();
            let wd = cache.weights.data();
            let mut dw = vec![F::zero(); win];
            for b in 0..batch {
                for h in 0..heads {
                    for t in 0..time {
                        let dc = &dy.data()[(b * time + t) * heads * dv + h * dv..][..dv];
                        let wbase = ((b * heads + h) * time + t) * win;
                        let mut wdot = F::zero();
                        for (wi, delta) in (-l..=r).enumerate() {
                            let p = t as i64 + delta;
                            if p < 0 || p >= time as i64 {
                                dw[wi] = F::zero();
                                continue;
                            }
                            let vrow =
                                &cache.v.data()[(b * time + p as usize) * heads * dv + h * dv..][..dv];
                            dw[wi] = dot(dc, vrow);
                            wdot = wdot + wd[wbase + wi] * dw[wi];
                            // dV accumulation
                            let w = wd[wbase + wi];
                            if w != F::zero() {
                                axpy(
                                    w,
                                    dc,
                                    &mut dvd[(b * time + p as usize) * heads * dv + h * dv..][..dv],
                                );
                            }
                        }
                        let qrow = &cache.q.data()[(b * time + t) * heads * dk + h * dk..][..dk];
                        for (wi, delta) in (-l..=r).enumerate() {
                            let p = t as i64 + delta;
                            if p < 0 || p >= time as i64 {
                                continue;
                            }
                            let ds = wd[wbase + wi] * (dw[wi] - wdot) * scale;
                            if ds == F::zero() {
                                continue;
                            }
                            let krow =
                                &cache.k.data()[(b * time + p as usize) * heads * dk + h * dk..][..dk];
                            axpy(ds, krow, &mut dqd[(b * time + t) * heads * dk + h * dk..][..dk]);
                            axpy(
                                ds,
                                qrow,
                                &mut dkd[(b * time + p as usize) * heads * dk + h * dk..][..dk],
                            );
                        }
                    }
                }
            }
        }
        // project back through Wq/Wk/Wv
        gemm_tn(
            heads * dk,
            rows,
            self.din,
            dq.data(),
            cache.x.data(),
            self.wq.grad.data_mut(),
        );
        gemm_tn(
            heads * dk,
            rows,
            self.din,
            dk_t.data(),
            cache.x.data(),
            self.wk.grad.data_mut(),
        );
        gemm_tn(
            heads * dv,
            rows,
            self.din,
            dv_t.data(),
            cache.x.data(),
            self.wv.grad.data_mut(),
        );
        let mut dx = Tensor::zeros(s);
        gemm_nn(rows, heads * dk, self.din, dq.data(), self.wq.value.data(), dx.data_mut());
        gemm_nn(rows, heads * dk, self.din, dk_t.data(), self.wk.value.data(), dx.data_mut());
        gemm_nn(rows, heads * dv, self.din, dv_t.data(), self.wv.value.data(), dx.data_mut());
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.wq, &mut self.wk, &mut self.wv]
    }
}
