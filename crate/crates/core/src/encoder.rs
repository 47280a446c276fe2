//! Amortized encoder networks.
//!
//! Each encoder is a perceptron with two hidden layers. Every layer applies
//! inverted dropout, batch normalization and an affine map; hidden layers
//! end in a ReLU, and the last layer feeds a set of output heads.
//!
//! All trainable parameters live in one flat vector so that the optimizer,
//! checkpoints and finite-difference checks can treat them uniformly. Per
//! layer the layout is `[γ (din), β (din), W (dout×din, column-major), b (dout)]`.

use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;

use crate::error::{Error, Result};

pub const HIDDEN_UNITS: usize = 300;
pub const DEFAULT_KEEP: f64 = 0.9;
pub const BN_MOMENTUM: f64 = 0.9;
const BN_EPS: f64 = 1e-5;
/// Extra factor on the output layer's init range. Heads then start near
/// their centre (zero means, uniform scales), where the bilinear likelihood
/// is well conditioned instead of saturated.
pub const OUTPUT_INIT_GAIN: f64 = 0.01;

/// Output head of an encoder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeadSpec {
    /// `out` complex means `scale·tanh(·)`, laid out as `out` real parts
    /// followed by `out` imaginary parts.
    MeanTanh { out: usize, scale: f64 },
    /// `out` positive scales `max(budget·softmax(·), floor)`.
    ScaleSoftmax { out: usize, budget: f64 },
    /// `out` Gamma shapes `1 + span·sigmoid(·)`.
    ShapeSigmoid { out: usize, span: f64 },
}

/// Scale floor for softmax heads.
pub const SCALE_FLOOR: f64 = crate::elbo::SCALE_FLOOR;

impl HeadSpec {
    /// Number of real output values (and of pre-activations).
    pub fn width(&self) -> usize {
        match *self {
            HeadSpec::MeanTanh { out, .. } => 2 * out,
            HeadSpec::ScaleSoftmax { out, .. } | HeadSpec::ShapeSigmoid { out, .. } => out,
        }
    }

    fn activate(&self, z: &[f64]) -> Vec<f64> {
        match *self {
            HeadSpec::MeanTanh { scale, .. } => z.iter().map(|x| scale * x.tanh()).collect(),
            HeadSpec::ScaleSoftmax { budget, .. } => softmax(z).into_iter().map(|s| (budget * s).max(SCALE_FLOOR)).collect(),
            HeadSpec::ShapeSigmoid { span, .. } => z.iter().map(|&x| 1.0 + span * sigmoid(x)).collect(),
        }
    }

    /// Chain rule from output gradients `g` to pre-activation gradients.
    fn backprop(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        match *self {
            HeadSpec::MeanTanh { scale, .. } => z
                .iter()
                .zip(g)
                .map(|(x, gi)| {
                    let t = x.tanh();
                    gi * scale * (1.0 - t * t)
                })
                .collect(),
            HeadSpec::ScaleSoftmax { budget, .. } => {
                let s = softmax(z);
                // clamped entries do not move with z
                let gm: Vec<f64> = s
                    .iter()
                    .zip(g)
                    .map(|(si, gi)| if budget * si > SCALE_FLOOR { *gi } else { 0.0 })
                    .collect();
                let dot: f64 = s.iter().zip(&gm).map(|(a, b)| a * b).sum();
                s.iter().zip(&gm).map(|(si, gi)| budget * si * (gi - dot)).collect()
            }
            HeadSpec::ShapeSigmoid { span, .. } => z
                .iter()
                .zip(g)
                .map(|(&x, gi)| {
                    let s = sigmoid(x);
                    gi * span * s * (1.0 - s)
                })
                .collect(),
        }
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Layer widths, heads and dropout rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub heads: Vec<HeadSpec>,
    pub keep: f64,
}

impl Architecture {
    pub fn new(input: usize, heads: Vec<HeadSpec>) -> Self {
        Self {
            input,
            hidden: vec![HIDDEN_UNITS, HIDDEN_UNITS],
            heads,
            keep: DEFAULT_KEEP,
        }
    }

    pub fn output(&self) -> usize {
        self.heads.iter().map(HeadSpec::width).sum()
    }

    /// `(din, dout)` of every layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input];
        dims.extend(&self.hidden);
        dims.push(self.output());
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|&(i, o)| 2 * i + o * i + o).sum()
    }

    pub fn running_count(&self) -> usize {
        self.layers().iter().map(|&(i, _)| 2 * i).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden.iter().any(|&h| h == 0) || self.heads.is_empty() {
            return Err(Error::dim("encoder layers must be nonempty"));
        }
        if !(self.keep > 0.0 && self.keep <= 1.0) {
            return Err(Error::contract(format!("dropout keep probability {} outside (0, 1]", self.keep)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerOffsets {
    din: usize,
    dout: usize,
    gamma: usize,
    beta: usize,
    w: usize,
    b: usize,
    run: usize,
}

fn offsets(arch: &Architecture) -> Vec<LayerOffsets> {
    let mut p = 0;
    let mut r = 0;
    arch.layers()
        .into_iter()
        .map(|(din, dout)| {
            let o = LayerOffsets {
                din,
                dout,
                gamma: p,
                beta: p + din,
                w: p + 2 * din,
                b: p + 2 * din + din * dout,
                run: r,
            };
            p += 2 * din + din * dout + dout;
            r += 2 * din;
            o
        })
        .collect()
}

/// How stochastic layers behave during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    pub dropout: bool,
    /// Normalize with batch statistics (training) or running statistics.
    pub batch_stats: bool,
}

impl Mode {
    pub const TRAIN: Mode = Mode {
        dropout: true,
        batch_stats: true,
    };
    pub const EVAL: Mode = Mode {
        dropout: false,
        batch_stats: false,
    };
}

/// Network parameters and batch-normalization running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub arch: Architecture,
    pub params: Vec<f64>,
    /// Per layer: running mean (din) then running variance (din).
    pub running: Vec<f64>,
}

/// Per-layer intermediates recorded by [`Encoder::forward`].
#[derive(Clone, Debug)]
struct LayerTape {
    mask: Option<DMatrix<f64>>,
    xhat: DMatrix<f64>,
    inv_std: Vec<f64>,
    z: DMatrix<f64>,
    pre: DMatrix<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

/// Everything [`Encoder::backward`] needs from a forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    mode: Mode,
    layers: Vec<LayerTape>,
}

/// Head outputs for one sample: one real vector per head.
pub type HeadOutputs = Vec<Vec<f64>>;

impl Encoder {
    /// Uniform fan-in initialization `U(−1/√din, 1/√din)` (shrunk by
    /// [`OUTPUT_INIT_GAIN`] on the output layer), unit BN gains.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = vec![0.0; arch.param_count()];
        let mut running = vec![0.0; arch.running_count()];
        let offs = offsets(&arch);
        let last = offs.len() - 1;
        for (li, o) in offs.into_iter().enumerate() {
            let gain = if li == last { OUTPUT_INIT_GAIN } else { 1.0 };
            let lim = gain / (o.din as f64).sqrt();
            params[o.gamma..o.gamma + o.din].fill(1.0);
            for x in &mut params[o.w..o.b + o.dout] {
                *x = rng.random_range(-lim..lim);
            }
            running[o.run + o.din..o.run + 2 * o.din].fill(1.0);
        }
        Ok(Self { arch, params, running })
    }

    /// Rebuilds an encoder from stored parts, checking their lengths.
    pub fn from_parts(arch: Architecture, params: Vec<f64>, running: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() || running.len() != arch.running_count() {
            return Err(Error::dim("encoder parameter count does not match its architecture"));
        }
        Ok(Self { arch, params, running })
    }

    pub fn forward<R: Rng + ?Sized>(&self, inputs: &[Vec<f64>], mode: Mode, rng: &mut R) -> Result<(Vec<HeadOutputs>, Tape)> {
        let batch = inputs.len();
        if batch == 0 {
            return Err(Error::contract("empty batch"));
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != self.arch.input) {
            return Err(Error::contract(format!(
                "encoder input has length {}, expected {}",
                x.len(),
                self.arch.input
            )));
        }
        let use_batch = mode.batch_stats && batch > 1;
        let keep = self.arch.keep;
        let offs = offsets(&self.arch);
        let mut h = DMatrix::from_fn(self.arch.input, batch, |i, s| inputs[s][i]);
        let mut tapes = Vec::with_capacity(offs.len());
        for (li, o) in offs.iter().enumerate() {
            let mask = (mode.dropout && keep < 1.0).then(|| {
                DMatrix::from_fn(o.din, batch, |_, _| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            });
            if let Some(m) = &mask {
                h.component_mul_assign(m);
            }
            let (mean, var) = if use_batch {
                let mean: Vec<f64> = (0..o.din).map(|i| h.row(i).sum() / batch as f64).collect();
                let var: Vec<f64> = (0..o.din)
                    .map(|i| h.row(i).iter().map(|x| (x - mean[i]).powi(2)).sum::<f64>() / batch as f64)
                    .collect();
                (mean, var)
            } else {
                (
                    self.running[o.run..o.run + o.din].to_vec(),
                    self.running[o.run + o.din..o.run + 2 * o.din].to_vec(),
                )
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let gamma = &self.params[o.gamma..o.gamma + o.din];
            let beta = &self.params[o.beta..o.beta + o.din];
            let xhat = DMatrix::from_fn(o.din, batch, |i, s| (h[(i, s)] - mean[i]) * inv_std[i]);
            let z = DMatrix::from_fn(o.din, batch, |i, s| gamma[i] * xhat[(i, s)] + beta[i]);
            let w = DMatrixView::from_slice(&self.params[o.w..o.b], o.dout, o.din);
            let bias = &self.params[o.b..o.b + o.dout];
            let mut pre = w * &z;
            for mut col in pre.column_iter_mut() {
                col.iter_mut().zip(bias).for_each(|(x, b)| *x += b);
            }
            let last = li + 1 == offs.len();
            h = if last { pre.clone() } else { pre.map(|x| x.max(0.0)) };
            tapes.push(LayerTape {
                mask,
                xhat,
                inv_std,
                z,
                pre,
                batch_mean: if use_batch { mean } else { Vec::new() },
                batch_var: if use_batch { var } else { Vec::new() },
            });
        }
        let outputs = (0..batch)
            .map(|s| {
                let col: Vec<f64> = h.column(s).iter().copied().collect();
                self.split_heads(&col)
                    .into_iter()
                    .zip(&self.arch.heads)
                    .map(|(z, head)| head.activate(z))
                    .collect()
            })
            .collect();
        Ok((
            outputs,
            Tape {
                mode: Mode {
                    batch_stats: use_batch,
                    ..mode
                },
                layers: tapes,
            },
        ))
    }

    fn split_heads<'a>(&self, v: &'a [f64]) -> Vec<&'a [f64]> {
        let mut out = Vec::with_capacity(self.arch.heads.len());
        let mut at = 0;
        for head in &self.arch.heads {
            out.push(&v[at..at + head.width()]);
            at += head.width();
        }
        out
    }

    /// Eval-mode outputs for one input.
    pub fn predict(&self, input: &[f64]) -> Result<HeadOutputs> {
        // eval mode draws nothing from the stream
        let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let (mut out, _) = self.forward(&[input.to_vec()], Mode::EVAL, &mut unused)?;
        Ok(out.pop().expect("one sample"))
    }

    /// Gradient of `Σ_s ⟨upstream_s, outputs_s⟩` w.r.t. every parameter.
    pub fn backward(&self, tape: &Tape, upstream: &[HeadOutputs]) -> Result<Vec<f64>> {
        let offs = offsets(&self.arch);
        let last = tape.layers.last().expect("at least one layer");
        let batch = last.pre.ncols();
        if upstream.len() != batch {
            return Err(Error::contract("upstream gradient batch size differs from the forward pass"));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut dh = DMatrix::zeros(self.arch.output(), batch);
        for (s, up) in upstream.iter().enumerate() {
            if up.len() != self.arch.heads.len() {
                return Err(Error::contract("upstream gradient head count mismatch"));
            }
            let pre: Vec<f64> = last.pre.column(s).iter().copied().collect();
            let mut at = 0;
            for ((head, z), g) in self.arch.heads.iter().zip(self.split_heads(&pre)).zip(up) {
                if g.len() != head.width() {
                    return Err(Error::contract("upstream gradient head width mismatch"));
                }
                for (i, v) in head.backprop(z, g).into_iter().enumerate() {
                    dh[(at + i, s)] = v;
                }
                at += head.width();
            }
        }
        for (li, (o, t)) in offs.iter().zip(&tape.layers).enumerate().rev() {
            let dpre = if li + 1 == offs.len() {
                dh
            } else {
                dh.zip_map(&t.pre, |g, p| if p > 0.0 { g } else { 0.0 })
            };
            for (j, row) in dpre.row_iter().enumerate() {
                grad[o.b + j] = row.sum();
            }
            let dw = &dpre * t.z.transpose();
            grad[o.w..o.b].copy_from_slice(dw.as_slice());
            let w = DMatrixView::from_slice(&self.params[o.w..o.b], o.dout, o.din);
            let dz = w.transpose() * &dpre;
            let gamma = &self.params[o.gamma..o.gamma + o.din];
            let mut dx = DMatrix::zeros(o.din, batch);
            for i in 0..o.din {
                let mut dg = 0.0;
                let mut db = 0.0;
                let mut sum_dxhat = 0.0;
                let mut sum_dxhat_xhat = 0.0;
                for s in 0..batch {
                    let g = dz[(i, s)];
                    dg += g * t.xhat[(i, s)];
                    db += g;
                    let dxh = g * gamma[i];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * t.xhat[(i, s)];
                }
                grad[o.gamma + i] = dg;
                grad[o.beta + i] = db;
                let bf = batch as f64;
                for s in 0..batch {
                    let dxh = dz[(i, s)] * gamma[i];
                    dx[(i, s)] = if tape.mode.batch_stats {
                        t.inv_std[i] / bf * (bf * dxh - sum_dxhat - t.xhat[(i, s)] * sum_dxhat_xhat)
                    } else {
                        dxh * t.inv_std[i]
                    };
                }
            }
            if let Some(m) = &t.mask {
                dx.component_mul_assign(m);
            }
            dh = dx;
        }
        Ok(grad)
    }

    /// Folds the batch statistics of a training pass into the running
    /// statistics (`running ← μ·running + (1−μ)·batch`, unbiased variance).
    pub fn commit_running(&mut self, tape: &Tape) {
        if !tape.mode.batch_stats {
            return;
        }
        let batch = tape.layers[0].pre.ncols() as f64;
        let unbias = batch / (batch - 1.0);
        for (o, t) in offsets(&self.arch).iter().zip(&tape.layers) {
            for i in 0..o.din {
                let rm = &mut self.running[o.run + i];
                *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * t.batch_mean[i];
                let rv = &mut self.running[o.run + o.din + i];
                *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * t.batch_var[i] * unbias;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().chain(&self.running).all(|x| x.is_finite())
    }
}

/// Bias-corrected Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dim("adam: parameter, gradient and state lengths differ"));
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

pub fn adam_step(enc: &mut Encoder, grads: &[f64], st: &mut AdamState, lr: f64) -> Result<()> {
    st.step(&mut enc.params, grads, lr)
}
