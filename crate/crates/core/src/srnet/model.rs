//! Dense MLP with batch normalization, trained with Adam.
//!
//! Layout: inputs are column-per-sample matrices. Each hidden layer is
//! affine -> batch norm -> ReLU; the output layer is plain affine (heads are
//! applied by the caller). Batch norm uses biased batch statistics in
//! training mode and running statistics (momentum 0.99) at inference.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: DVector<f64>,
    pub beta: DVector<f64>,
    pub run_mean: DVector<f64>,
    pub run_var: DVector<f64>,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        Self {
            gamma: DVector::from_element(n, 1.0),
            beta: DVector::zeros(n),
            run_mean: DVector::zeros(n),
            run_var: DVector::from_element(n, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub bn: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Vec<HiddenLayer>,
    pub out_w: DMatrix<f64>,
    pub out_b: DVector<f64>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

/// Xavier-uniform bound for a `fan_out x fan_in` weight matrix.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn xavier<R: Rng>(fan_out: usize, fan_in: usize, rng: &mut R) -> DMatrix<f64> {
    let b = xavier_bound(fan_in, fan_out);
    DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-b..b))
}

impl Mlp {
    /// Weights Xavier-uniform, biases zero, BN scale 1 / shift 0.
    pub fn init<R: Rng>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument(
                "MLP input and output dims must be positive".into(),
            ));
        }
        if hidden.iter().any(|h| *h == 0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(HiddenLayer {
                w: xavier(h, prev, rng),
                b: DVector::zeros(h),
                bn: BatchNorm::new(h),
            });
            prev = h;
        }
        Ok(Self {
            hidden: layers,
            out_w: xavier(output_dim, prev, rng),
            out_b: DVector::zeros(output_dim),
            bn_momentum: BN_MOMENTUM,
            bn_eps: BN_EPS,
        })
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.w.nrows()).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map(|l| l.w.ncols())
            .unwrap_or_else(|| self.out_w.ncols())
    }

    pub fn output_dim(&self) -> usize {
        self.out_w.nrows()
    }

    /// Forward pass. `Train` mode normalizes with batch statistics, records
    /// everything the backward pass needs, and updates the running moments;
    /// `Infer` mode normalizes with the stored running moments.
    /// Training batches need at least 2 samples for a usable variance.
    pub fn forward(&mut self, x: &DMatrix<f64>, mode: Mode) -> Result<(DMatrix<f64>, MlpCache)> {
        if x.nrows() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "input has {} features, model expects {}",
                x.nrows(),
                self.input_dim()
            )));
        }
        let m = x.ncols();
        if m == 0 || (mode == Mode::Train && m < 2) {
            return Err(Error::InvalidArgument(format!(
                "batch of {m} samples is too small for {mode:?} mode"
            )));
        }
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut a = x.clone();
        let bn_eps = self.bn_eps;
        let bn_mom = self.bn_momentum;
        for layer in &mut self.hidden {
            let input = a;
            let mut z = &layer.w * &input;
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            let n = z.nrows();
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = DVector::from_fn(n, |r, _| z.row(r).sum() / m as f64);
                    let var = DVector::from_fn(n, |r, _| {
                        let mu = mean[r];
                        z.row(r).iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64
                    });
                    layer.bn.run_mean = &layer.bn.run_mean * bn_mom + &mean * (1.0 - bn_mom);
                    layer.bn.run_var = &layer.bn.run_var * bn_mom + &var * (1.0 - bn_mom);
                    (mean, var)
                }
                Mode::Infer => (layer.bn.run_mean.clone(), layer.bn.run_var.clone()),
            };
            let invstd = var.map(|v: f64| 1.0 / (v + bn_eps).sqrt());
            let mut xhat = z;
            for r in 0..n {
                let (mu, is) = (mean[r], invstd[r]);
                for v in xhat.row_mut(r).iter_mut() {
                    *v = (*v - mu) * is;
                }
            }
            let mut act = xhat.clone();
            for r in 0..n {
                let (g, be) = (layer.bn.gamma[r], layer.bn.beta[r]);
                for v in act.row_mut(r).iter_mut() {
                    *v = (*v * g + be).max(0.0);
                }
            }
            layers.push(LayerCache { input, xhat, invstd });
            a = act;
        }
        let mut z_out = &self.out_w * &a;
        for mut col in z_out.column_iter_mut() {
            col += &self.out_b;
        }
        Ok((z_out, MlpCache { layers, last_act: a, mode }))
    }

    /// Inference-only forward using running statistics; never mutates the
    /// model, so it can run concurrently over a shared reference.
    pub fn forward_infer(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "input has {} features, model expects {}",
                x.nrows(),
                self.input_dim()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("empty inference batch".into()));
        }
        let mut a = x.clone();
        for layer in &self.hidden {
            let mut z = &layer.w * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            let n = z.nrows();
            for r in 0..n {
                let mu = layer.bn.run_mean[r];
                let is = 1.0 / (layer.bn.run_var[r] + self.bn_eps).sqrt();
                let (g, be) = (layer.bn.gamma[r], layer.bn.beta[r]);
                for v in z.row_mut(r).iter_mut() {
                    *v = ((*v - mu) * is * g + be).max(0.0);
                }
            }
            a = z;
        }
        let mut z_out = &self.out_w * &a;
        for mut col in z_out.column_iter_mut() {
            col += &self.out_b;
        }
        Ok(z_out)
    }

    /// Backward pass for a training-mode cache. `dz_out` is the gradient of
    /// the loss with respect to the pre-head output; returns parameter
    /// gradients (summed over the batch, matching a loss already scaled by
    /// whatever batch normalizer the caller uses).
    pub fn backward(&self, cache: &MlpCache, dz_out: &DMatrix<f64>) -> Result<MlpGrads> {
        if cache.mode != Mode::Train {
            return Err(Error::InvalidArgument(
                "backward needs a training-mode forward cache".into(),
            ));
        }
        let m = dz_out.ncols() as f64;
        let d_out_w = dz_out * cache.last_act.transpose();
        let d_out_b = DVector::from_fn(dz_out.nrows(), |r, _| dz_out.row(r).sum());
        let mut d_act = self.out_w.tr_mul(dz_out);

        let mut layers = vec![
            LayerGrads {
                dw: DMatrix::zeros(0, 0),
                db: DVector::zeros(0),
                dgamma: DVector::zeros(0),
                dbeta: DVector::zeros(0),
            };
            self.hidden.len()
        ];
        for (li, layer) in self.hidden.iter().enumerate().rev() {
            let lc = &cache.layers[li];
            let n = layer.w.nrows();
            // ReLU mask: the post-activation value was gamma*xhat + beta
            // clamped at 0, so recompute the pre-activation sign.
            let mut dy = d_act;
            for r in 0..n {
                let (g, be) = (layer.bn.gamma[r], layer.bn.beta[r]);
                for (c, v) in dy.row_mut(r).iter_mut().enumerate() {
                    let pre = g * lc.xhat[(r, c)] + be;
                    if pre <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            let mut dgamma = DVector::zeros(n);
            let mut dbeta = DVector::zeros(n);
            for r in 0..n {
                let mut sg = 0.0;
                let mut sb = 0.0;
                for c in 0..dy.ncols() {
                    sg += dy[(r, c)] * lc.xhat[(r, c)];
                    sb += dy[(r, c)];
                }
                dgamma[r] = sg;
                dbeta[r] = sb;
            }
            // Batch-norm backward with batch statistics:
            // dz = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
            let mut dz = dy;
            for r in 0..n {
                let g = layer.bn.gamma[r];
                let is = lc.invstd[r];
                let mean_dxhat = dz.row(r).sum() * g / m;
                let mean_dxhat_xhat = dgamma[r] * g / m;
                for (c, v) in dz.row_mut(r).iter_mut().enumerate() {
                    let dxhat = *v * g;
                    *v = is * (dxhat - mean_dxhat - lc.xhat[(r, c)] * mean_dxhat_xhat);
                }
            }
            let dw = &dz * lc.input.transpose();
            let db = DVector::from_fn(n, |r, _| dz.row(r).sum());
            d_act = layer.w.tr_mul(&dz);
            layers[li] = LayerGrads { dw, db, dgamma, dbeta };
        }
        Ok(MlpGrads { layers, d_out_w, d_out_b })
    }
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: DMatrix<f64>,
    pub xhat: DMatrix<f64>,
    pub invstd: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    pub layers: Vec<LayerCache>,
    pub last_act: DMatrix<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: DMatrix<f64>,
    pub db: DVector<f64>,
    pub dgamma: DVector<f64>,
    pub dbeta: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
    pub d_out_w: DMatrix<f64>,
    pub d_out_b: DVector<f64>,
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamHp {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHp {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second-moment state for one tensor, stored flat in the tensor's
/// element order.
#[derive(Debug, Clone)]
pub struct AdamTensor {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamTensor {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// One update with bias correction at step `t` (1-based).
    pub fn update<'a, 'b>(
        &mut self,
        hp: &AdamHp,
        t: usize,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = &'b f64>,
    ) {
        let bc1 = 1.0 - hp.beta1.powi(t as i32);
        let bc2 = 1.0 - hp.beta2.powi(t as i32);
        for (i, (p, g)) in params.zip(grads).enumerate() {
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g;
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            *p -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }
    }
}

/// Adam state covering every tensor of an `Mlp`.
#[derive(Debug, Clone)]
pub struct AdamState {
    layers: Vec<[AdamTensor; 4]>,
    out_w: AdamTensor,
    out_b: AdamTensor,
    pub t: usize,
}

impl AdamState {
    pub fn new(mlp: &Mlp) -> Self {
        let layers = mlp
            .hidden
            .iter()
            .map(|l| {
                [
                    AdamTensor::new(l.w.len()),
                    AdamTensor::new(l.b.len()),
                    AdamTensor::new(l.bn.gamma.len()),
                    AdamTensor::new(l.bn.beta.len()),
                ]
            })
            .collect();
        Self {
            layers,
            out_w: AdamTensor::new(mlp.out_w.len()),
            out_b: AdamTensor::new(mlp.out_b.len()),
            t: 0,
        }
    }

    pub fn step(&mut self, hp: &AdamHp, mlp: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let t = self.t;
        for (li, layer) in mlp.hidden.iter_mut().enumerate() {
            let g = &grads.layers[li];
            let st = &mut self.layers[li];
            st[0].update(hp, t, layer.w.iter_mut(), g.dw.iter());
            st[1].update(hp, t, layer.b.iter_mut(), g.db.iter());
            st[2].update(hp, t, layer.bn.gamma.iter_mut(), g.dgamma.iter());
            st[3].update(hp, t, layer.bn.beta.iter_mut(), g.dbeta.iter());
        }
        self.out_w.update(hp, t, mlp.out_w.iter_mut(), grads.d_out_w.iter());
        self.out_b.update(hp, t, mlp.out_b.iter_mut(), grads.d_out_b.iter());
    }
}

/// Numerically safe logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
