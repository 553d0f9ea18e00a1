use crate::linalg::{axpy, dot};
use crate::tensor::{Parameter, Scalar, Tensor};
use crate::{layers::Mode, NnError, Result};
use rand::Rng;

/// 3x3 2-D convolution over (time, frequency) with same-padding, stride 1.
/// Input layout [B, T, H, Cin], weights [3, 3, Cout, Cin].
pub struct Conv2d<F> {
    pub w: Parameter<F>,
    pub b: Parameter<F>,
    cin: usize,
    cout: usize,
    height: usize,
    cache_x: Option<Tensor<F>>,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new<R: Rng>(height: usize, cin: usize, cout: usize, rng: &mut R) -> Self {
        let fan_in = 9 * cin;
        Conv2d {
            w: Parameter::new(Tensor::rand_fan_in(&[3, 3, cout, cin], fan_in, rng)),
            b: Parameter::new(Tensor::zeros(&[cout])),
            cin,
            cout,
            height,
            cache_x: None,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.cin, self.cout)
    }

    pub fn param_count(&self) -> usize {
        9 * self.cin * self.cout + self.cout
    }

    pub fn forward(&mut self, x: &Tensor<F>, _mode: Mode) -> Result<Tensor<F>> {
        let s = x.shape();
        if s.len() != 4 || s[3] != self.cin {
            return Err(NnError::ShapeMismatch(format!(
                "conv expected [B,T,H,{}], got {:?}",
                self.cin, s
            )));
        }
        if s[2] != self.height {
            return Err(NnError::ShapeMismatch(format!(
                "conv configured for height {}, input has {}",
                self.height, s[2]
            )));
        }
        let (batch, time, height) = (s[0], s[1], s[2]);
        let (cin, cout) = (self.cin, self.cout);
        let mut y = Tensor::zeros(&[batch, time, height, cout]);
        let yd = y.data_mut();
        let xd = x.data();
        let wd = self.w.value.data();
        let bd = self.b.value.data();
        for b in 0..batch {
            for t in 0..time {
                for h in 0..height {
                    let out = &mut yd[((b * time + t) * height + h) * cout..][..cout];
                    out.copy_from_slice(bd);
                    for dt in 0..3usize {
                        let ti = t as i64 + dt as i64 - 1;
                        if ti < 0 || ti >= time as i64 {
                            continue;
                        }
                        for dh in 0..3usize {
                            let hi = h as i64 + dh as i64 - 1;
                            if hi < 0 || hi >= height as i64 {
                                continue;
                            }
                            let xrow = &xd
                                [((b * time + ti as usize) * height + hi as usize) * cin..][..cin];
                            let wbase = (dt * 3 + dh) * cout * cin;
                            for (co, o) in out.iter_mut().enumerate() {
                                *o = *o + dot(xrow, &wd[wbase + co * cin..][..cin]);
                            }
                        }
                    }
                }
            }
        }
        self.cache_x = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| NnError::InvalidArg("backward before forward".into()))?;
        let s = x.shape();
        let (batch, time, height) = (s[0], s[1], s[2]);
        let (cin, cout) = (self.cin, self.cout);
        if dy.shape() != [batch, time, height, cout] {
            return Err(NnError::ShapeMismatch("conv backward dy".into()));
        }
        let mut dx = Tensor::zeros(s);
        let dyd = dy.data();
        let xd = x.data();
        let wd = self.w.value.data();
        let dwd = self.w.grad.data_mut();
        let dbd = self.b.grad.data_mut();
        let dxd = dx.data_mut();
        for b in 0..batch {
            for t in 0..time {
                for h in 0..height {
                    let g = &dyd[((b * time + t) * height + h) * cout..][..cout];
                    for (co, &gv) in g.iter().enumerate() {
                        dbd[co] = dbd[co] + gv;
                    }
                    for dt in 0..3usize {
                        let ti = t as i64 + dt as i64 - 1;
                        if ti < 0 || ti >= time as i64 {
                            continue;
                        }
                        for dh in 0..3usize {
                            let hi = h as i64 + dh as i64 - 1;
                            if hi < 0 || hi >= height as i64 {
                                continue;
                            }
                            let xoff = ((b * time + ti as usize) * height + hi as usize) * cin;
                            let wbase = (dt * 3 + dh) * cout * cin;
                            for (co, &gv) in g.iter().enumerate() {
                                if gv == F::zero() {
                                    continue;
                                }
                                axpy(
                                    gv,
                                    &xd[xoff..xoff + cin],
                                    &mut dwd[wbase + co * cin..][..cin],
                                );
                                axpy(
                                    gv,
                                    &wd[wbase + co * cin..][..cin],
                                    &mut dxd[xoff..xoff + cin],
                                );
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Max-pooling with factor 2 on the frequency axis only; time is preserved.
pub struct MaxPool2<F> {
    argmax: Option<(Vec<usize>, Vec<usize>)>, // (indices into x, input shape as vec)
    _p: std::marker::PhantomData<F>,
}

impl<F: Scalar> Default for MaxPool2<F> {
    fn default() -> Self {
        MaxPool2 {
            argmax: None,
            _p: std::marker::PhantomData,
        }
    }
}

impl<F: Scalar> MaxPool2<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(NnError::ShapeMismatch("maxpool expects [B,T,H,C]".into()));
        }
        let (batch, time, height, ch) = (s[0], s[1], s[2], s[3]);
        if height % 2 != 0 {
            return Err(NnError::InvalidArg(format!(
                "maxpool needs an even height, got {height}"
            )));
        }
        let hout = height / 2;
        let mut y = Tensor::zeros(&[batch, time, hout, ch]);
        let mut idx = vec![0usize; y.numel()];
        let xd = x.data();
        let yd = y.data_mut();
        for b in 0..batch {
            for t in 0..time {
                for h2 in 0..hout {
                    let i0 = ((b * time + t) * height + 2 * h2) * ch;
                    let i1 = i0 + ch;
                    let o = ((b * time + t) * hout + h2) * ch;
                    for c in 0..ch {
                        if xd[i0 + c] >= xd[i1 + c] {
                            yd[o + c] = xd[i0 + c];
                            idx[o + c] = i0 + c;
                        } else {
                            yd[o + c] = xd[i1 + c];
                            idx[o + c] = i1 + c;
                        }
                    }
                }
            }
        }
        self.argmax = Some((idx, s.to_vec()));
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let (idx, in_shape) = self
            .argmax
            .as_ref()
            .ok_or_else(|| NnError::InvalidArg("backward before forward".into()))?;
        if idx.len() != dy.numel() {
            return Err(NnError::ShapeMismatch("maxpool backward dy".into()));
        }
        let mut dx = Tensor::zeros(in_shape);
        let dxd = dx.data_mut();
        for (o, &i) in idx.iter().enumerate() {
            dxd[i] = dxd[i] + dy.data()[o];
        }
        Ok(dx)
    }
}
