//! Amortized variational training of the encoder pair and MAP extraction.
//!
//! Encoder F maps an observation to the UE-RIS posterior (Laplace means and
//! scales for JCE, Gamma shapes for JCCE); encoder G maps the same input to
//! the Laplace posterior of `G_vir`. Both are trained jointly on the ELBO of
//! a generated dataset, one model per scenario and SNR.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ccm_from_d, to_spatial, SystemConfig};
use crate::dataset::{Dataset, Records};
use crate::elbo::{
    jce_loss, jcce_loss, AuxParamsJce, AuxParamsJcce, GammaPath, JceGrads, JceOperator, JcceGrads, JcceNoise,
    JcceOperator, LaplaceNoise, PriorParams, Scatter,
};
use crate::encoder::{AdamState, Architecture, Encoder, HeadOutputs, HeadSpec, Mode};
use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, ComplexVector, C64};
use crate::seeds;
use crate::signal::{preprocess_jcce, PilotPlan};
use crate::vardist::KlMode;

const TAG_PLAN: u64 = 0x91A7;
const TAG_INIT: u64 = 0x1A17;
const TAG_SPLIT: u64 = 0x5B17;
const TAG_STEP: u64 = 0x57E9;
const TAG_HOLDOUT: u64 = 0x401D;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "JCE")]
    Jce,
    #[serde(rename = "JCCE")]
    Jcce,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Jce => "JCE",
            EstimatorKind::Jcce => "JCCE",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            EstimatorKind::Jce => 0,
            EstimatorKind::Jcce => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(EstimatorKind::Jce),
            1 => Ok(EstimatorKind::Jcce),
            _ => Err(Error::Format(format!("unknown estimator kind code {c}"))),
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "JCE" => Ok(EstimatorKind::Jce),
            "JCCE" => Ok(EstimatorKind::Jcce),
            _ => Err(Error::Config(format!("unknown estimator kind {s:?} (expected JCE or JCCE)"))),
        }
    }
}

/// Output-head constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConstants {
    /// Mean heads emit `c_mean·unit·tanh(·)` where `unit` is the peak
    /// angular magnitude of a single path.
    pub c_mean: f64,
    /// Scale budget of encoder F; `None` means N.
    pub c_b_f: Option<f64>,
    /// Scale budget of encoder G; `None` means M·N.
    pub c_b_g: Option<f64>,
    /// Gamma shapes live in `(1, 1 + κ)`.
    pub kappa: f64,
}

impl Default for HeadConstants {
    fn default() -> Self {
        Self {
            c_mean: 3.0,
            c_b_f: None,
            c_b_g: None,
            kappa: 10.0,
        }
    }
}

impl HeadConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [Some(self.c_mean), self.c_b_f, self.c_b_g, Some(self.kappa)];
        if positive.iter().flatten().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("head constants must be positive and finite".into()));
        }
        Ok(())
    }

    /// Heads of encoder F and encoder G for a scenario.
    pub fn heads(&self, kind: EstimatorKind, cfg: &SystemConfig) -> (Vec<HeadSpec>, Vec<HeadSpec>) {
        let (m, n) = (cfg.m as f64, cfg.n as f64);
        let mn = cfg.m * cfg.n;
        let g_heads = vec![
            HeadSpec::MeanTanh {
                out: mn,
                scale: self.c_mean * m * n / (cfg.p as f64).sqrt(),
            },
            HeadSpec::ScaleSoftmax {
                out: mn,
                budget: self.c_b_g.unwrap_or(m * n),
            },
        ];
        let f_heads = match kind {
            EstimatorKind::Jce => vec![
                HeadSpec::MeanTanh {
                    out: cfg.n,
                    scale: self.c_mean * n / (cfg.q as f64).sqrt(),
                },
                HeadSpec::ScaleSoftmax {
                    out: cfg.n,
                    budget: self.c_b_f.unwrap_or(n),
                },
            ],
            EstimatorKind::Jcce => vec![HeadSpec::ShapeSigmoid {
                out: cfg.n,
                span: self.kappa,
            }],
        };
        (f_heads, g_heads)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Generated samples, 10% of which are held out.
    pub dataset_size: usize,
    /// Monte-Carlo draws `D` for the Laplace KL terms.
    pub mc_samples: usize,
    pub initial_lr: f64,
    pub max_steps: usize,
    /// Holdout evaluations without improvement before the rate is halved.
    pub plateau_patience: usize,
    pub batch_size: usize,
    /// Steps between holdout evaluations.
    pub eval_every: usize,
    /// Training stops once the rate has been halved this many times.
    pub max_halvings: usize,
    /// Joint draws per sample for the JCCE likelihood during training.
    pub scsi_samples: usize,
    /// Joint draws per sample for the JCCE likelihood on the holdout.
    pub eval_scsi_samples: usize,
    pub kl_mode: KlMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset_size: 10_000,
            mc_samples: 1000,
            initial_lr: 0.1,
            max_steps: 2000,
            plateau_patience: 20,
            batch_size: 32,
            eval_every: 10,
            max_halvings: 10,
            scsi_samples: 8,
            eval_scsi_samples: 64,
            kl_mode: KlMode::Analytic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dataset_size", self.dataset_size),
            ("mc_samples", self.mc_samples),
            ("plateau_patience", self.plateau_patience),
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("scsi_samples", self.scsi_samples),
            ("eval_scsi_samples", self.eval_scsi_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("train.{name} must be at least 1")));
            }
        }
        if !(self.initial_lr > 0.0) || !self.initial_lr.is_finite() {
            return Err(Error::Config("train.initial_lr must be positive".into()));
        }
        Ok(())
    }

    pub fn holdout_len(&self, total: usize) -> usize {
        (total / 10).max(1).min(total.saturating_sub(1)).max(1)
    }
}

/// The pilot plan of a scenario: fixed by the scenario seed.
pub fn scenario_plan(cfg: &SystemConfig, seed: u64) -> PilotPlan {
    PilotPlan::random(cfg.n, cfg.n_p, &mut seeds::stream(seed, &[TAG_PLAN]))
}

/// Both encoders with their optimizer state: everything a checkpoint holds.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderPair {
    pub kind: EstimatorKind,
    pub cfg: SystemConfig,
    pub seed: u64,
    pub plan: PilotPlan,
    pub enc_f: Encoder,
    pub enc_g: Encoder,
    pub adam_f: AdamState,
    pub adam_g: AdamState,
    /// Current learning rate.
    pub lr: f64,
    /// Optimizer steps taken.
    pub step: usize,
}

pub fn input_dim(kind: EstimatorKind, cfg: &SystemConfig) -> usize {
    let obs = cfg.m * cfg.n_p;
    match kind {
        EstimatorKind::Jce => 2 * obs,
        EstimatorKind::Jcce => 2 * obs * obs,
    }
}

impl EncoderPair {
    /// Fresh encoders for a scenario; weights depend only on `seed`.
    pub fn init(
        kind: EstimatorKind,
        cfg: &SystemConfig,
        seed: u64,
        plan: PilotPlan,
        heads: &HeadConstants,
        lr: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        heads.validate()?;
        if plan.n() != cfg.n || plan.n_p() != cfg.n_p {
            return Err(Error::dim("pilot plan does not match the scenario"));
        }
        let (hf, hg) = heads.heads(kind, cfg);
        let input = input_dim(kind, cfg);
        let mut rng = seeds::stream(seed, &[TAG_INIT]);
        let enc_f = Encoder::new(Architecture::new(input, hf), &mut rng)?;
        let enc_g = Encoder::new(Architecture::new(input, hg), &mut rng)?;
        Ok(Self {
            kind,
            cfg: cfg.clone(),
            seed,
            plan,
            adam_f: AdamState::new(enc_f.params.len()),
            adam_g: AdamState::new(enc_g.params.len()),
            enc_f,
            enc_g,
            lr,
            step: 0,
        })
    }

    fn check_kind(&self, kind: EstimatorKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::contract(format!(
                "model was trained for {}, not {}",
                self.kind.name(),
                kind.name()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.enc_f.is_finite() && self.enc_g.is_finite()
    }

    /// Scenario, pilot plan, encoder inputs and head widths agree with each
    /// other. Head constants are free.
    pub fn check_shapes(&self) -> Result<()> {
        self.cfg.validate()?;
        self.plan.validate()?;
        if self.plan.n() != self.cfg.n || self.plan.n_p() != self.cfg.n_p {
            return Err(Error::dim("pilot plan does not match the scenario"));
        }
        let (hf, hg) = HeadConstants::default().heads(self.kind, &self.cfg);
        let input = input_dim(self.kind, &self.cfg);
        for (enc, want, name) in [(&self.enc_f, hf, "F"), (&self.enc_g, hg, "G")] {
            let got: Vec<_> = enc.arch.heads.iter().map(|h| (std::mem::discriminant(h), h.width())).collect();
            let exp: Vec<_> = want.iter().map(|h| (std::mem::discriminant(h), h.width())).collect();
            if enc.arch.input != input || got != exp {
                return Err(Error::dim(format!("encoder {name} does not fit a {} model of this scenario", self.kind.name())));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Inputs and head mapping

/// `[Re vec(Y); Im vec(Y)]` with column-major `vec`.
pub fn split_complex(y: &ComplexMatrix) -> Vec<f64> {
    let (r, c) = y.shape();
    let mut out = Vec::with_capacity(2 * r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(y[(i, j)].re);
        }
    }
    for j in 0..c {
        for i in 0..r {
            out.push(y[(i, j)].im);
        }
    }
    out
}

pub fn jce_input(y: &ComplexMatrix) -> Vec<f64> {
    split_complex(y)
}

pub fn jcce_input(ytil: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(split_complex(&preprocess_jcce(ytil, ytil.cols())?))
}

fn complex_from_halves(v: &[f64]) -> ComplexVector {
    let n = v.len() / 2;
    (0..n).map(|i| C64::new(v[i], v[n + i])).collect()
}

fn halves_from_complex(z: &[C64]) -> Vec<f64> {
    z.iter().map(|c| c.re).chain(z.iter().map(|c| c.im)).collect()
}

fn g_params(out: &HeadOutputs, m: usize, n: usize) -> (ComplexMatrix, Vec<f64>) {
    let mm = ComplexMatrix::from_row_major(m, n, complex_from_halves(&out[0])).expect("head width M·N");
    (mm, out[1].clone())
}

pub fn jce_params(of: &HeadOutputs, og: &HeadOutputs, m: usize, n: usize) -> AuxParamsJce {
    let (mm, bb) = g_params(og, m, n);
    AuxParamsJce {
        m: complex_from_halves(&of[0]),
        b: of[1].clone(),
        mm,
        bb,
    }
}

pub fn jcce_params(of: &HeadOutputs, og: &HeadOutputs, m: usize, n: usize) -> AuxParamsJcce {
    let (mm, bb) = g_params(og, m, n);
    AuxParamsJcce {
        k: of[0].clone(),
        mm,
        bb,
    }
}

fn jce_upstream(g: &JceGrads) -> (HeadOutputs, HeadOutputs) {
    (
        vec![halves_from_complex(&g.m), g.b.clone()],
        vec![halves_from_complex(g.mm.as_slice()), g.bb.clone()],
    )
}

fn jcce_upstream(g: &JcceGrads) -> (HeadOutputs, HeadOutputs) {
    (
        vec![g.k.clone()],
        vec![halves_from_complex(g.mm.as_slice()), g.bb.clone()],
    )
}

// ---------------------------------------------------------------------------
// Batched loss and gradients

/// Mean loss over a batch with its gradients in both encoders' parameters.
pub struct BatchGrad {
    pub loss: f64,
    pub grad_f: Vec<f64>,
    pub grad_g: Vec<f64>,
    tape_f: crate::encoder::Tape,
    tape_g: crate::encoder::Tape,
}

/// Forward both encoders, evaluate `per_sample` in parallel, backpropagate
/// the batch mean. `per_sample` gets the batch position and head outputs and
/// returns the sample loss and its gradients in the head outputs.
fn batch_pass<F>(pair: &EncoderPair, inputs: &[Vec<f64>], mode: Mode, rng: &mut ChaCha8Rng, per_sample: F) -> Result<BatchGrad>
where
    F: Fn(usize, &HeadOutputs, &HeadOutputs) -> Result<(f64, HeadOutputs, HeadOutputs)> + Sync,
{
    let (of, tape_f) = pair.enc_f.forward(inputs, mode, rng)?;
    let (og, tape_g) = pair.enc_g.forward(inputs, mode, rng)?;
    let parts: Vec<Result<(f64, HeadOutputs, HeadOutputs)>> =
        (0..inputs.len()).into_par_iter().map(|s| per_sample(s, &of[s], &og[s])).collect();
    let inv = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;
    let mut up_f = Vec::with_capacity(inputs.len());
    let mut up_g = Vec::with_capacity(inputs.len());
    for part in parts {
        let (v, uf, ug) = part?;
        loss += v * inv;
        let scale = |h: HeadOutputs| -> HeadOutputs {
            h.into_iter().map(|v| v.into_iter().map(|x| x * inv).collect()).collect()
        };
        up_f.push(scale(uf));
        up_g.push(scale(ug));
    }
    let grad_f = pair.enc_f.backward(&tape_f, &up_f)?;
    let grad_g = pair.enc_g.backward(&tape_g, &up_g)?;
    Ok(BatchGrad {
        loss,
        grad_f,
        grad_g,
        tape_f,
        tape_g,
    })
}

/// JCE batch loss at fixed Laplace noise (shared by the batch).
pub fn jce_batch(
    pair: &EncoderPair,
    prior: &PriorParams,
    op: &JceOperator,
    inputs: &[Vec<f64>],
    ys: &[&ComplexMatrix],
    noise: (&LaplaceNoise, &LaplaceNoise),
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<BatchGrad> {
    pair.check_kind(EstimatorKind::Jce)?;
    let (m, n) = (pair.cfg.m, pair.cfg.n);
    batch_pass(pair, inputs, mode, rng, |s, of, og| {
        let p = jce_params(of, og, m, n);
        let l = jce_loss(&p, prior, ys[s], op, noise.0, noise.1)?;
        let (uf, ug) = jce_upstream(&l.grad);
        Ok((l.value, uf, ug))
    })
}

/// Where the JCCE Monte-Carlo noise of each batch sample comes from.
pub enum JcceDraws<'a> {
    /// Stored draws, re-mapped through the Gamma quantile so they stay common
    /// as the shapes move.
    Fixed(&'a [JcceNoise], &'a LaplaceNoise),
    /// Fresh draws at the current shapes from per-sample streams.
    Fresh {
        seed: u64,
        tags: &'a [u64],
        samples: usize,
        draws_g: usize,
    },
}

pub fn jcce_batch(
    pair: &EncoderPair,
    prior: &PriorParams,
    kl_mode: KlMode,
    op: &JcceOperator,
    inputs: &[Vec<f64>],
    scatters: &[&Scatter],
    draws: &JcceDraws<'_>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<BatchGrad> {
    pair.check_kind(EstimatorKind::Jcce)?;
    let (m, n) = (pair.cfg.m, pair.cfg.n);
    batch_pass(pair, inputs, mode, rng, |s, of, og| {
        let p = jcce_params(of, og, m, n);
        let l = match draws {
            JcceDraws::Fixed(noise, noise_g) => {
                jcce_loss(&p, prior, kl_mode, scatters[s], op, noise_g, &noise[s], GammaPath::Quantile)?
            }
            JcceDraws::Fresh {
                seed,
                tags,
                samples,
                draws_g,
            } => {
                let mut path = tags.to_vec();
                path.push(s as u64);
                let mut r = seeds::stream(*seed, &path);
                let noise = JcceNoise::draw(&p.k, m * n, *samples, &mut r)?;
                let noise_g = LaplaceNoise::draw(m * n, *draws_g, &mut r);
                jcce_loss(&p, prior, kl_mode, scatters[s], op, &noise_g, &noise, GammaPath::Sampled)?
            }
        };
        let (uf, ug) = jcce_upstream(&l.grad);
        Ok((l.value, uf, ug))
    })
}

// ---------------------------------------------------------------------------
// Training

/// One row of the training curve; ELBO values are negated mean losses.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub train_elbo: f64,
    pub holdout_elbo: f64,
    pub lr: f64,
}

pub struct TrainOutcome {
    /// Weights at the best holdout ELBO.
    pub pair: EncoderPair,
    pub curve: Vec<CurvePoint>,
}

enum Prepared {
    Jce { op: JceOperator, ys: Vec<ComplexMatrix> },
    Jcce { op: JcceOperator, scatters: Vec<Scatter> },
}

struct TrainData {
    inputs: Vec<Vec<f64>>,
    prepared: Prepared,
}

fn prepare(ds: &Dataset) -> Result<TrainData> {
    let cfg = &ds.cfg;
    Ok(match &ds.records {
        Records::Jce(rs) => TrainData {
            inputs: rs.iter().map(|r| jce_input(&r.y)).collect(),
            prepared: Prepared::Jce {
                op: JceOperator::new(cfg.m, &ds.plan, cfg.rho)?,
                ys: rs.iter().map(|r| r.y.clone()).collect(),
            },
        },
        Records::Jcce(rs) => TrainData {
            inputs: rs.par_iter().map(|r| jcce_input(&r.ytil)).collect::<Result<_>>()?,
            prepared: Prepared::Jcce {
                op: JcceOperator::new(cfg.m, &ds.plan, cfg.rho)?,
                scatters: rs.par_iter().map(|r| Scatter::from_blocks(&r.ytil)).collect(),
            },
        },
    })
}

/// Mean loss of `idx` in eval mode with noise fixed by `seed`.
fn holdout_loss(
    pair: &EncoderPair,
    data: &TrainData,
    idx: &[usize],
    prior: &PriorParams,
    tc: &TrainConfig,
) -> Result<f64> {
    let inputs: Vec<Vec<f64>> = idx.iter().map(|&i| data.inputs[i].clone()).collect();
    let mut rng = seeds::stream(pair.seed, &[TAG_HOLDOUT, 0]);
    let bg = match &data.prepared {
        Prepared::Jce { op, ys } => {
            let (m, n) = (pair.cfg.m, pair.cfg.n);
            let noise_h = LaplaceNoise::draw(n, tc.mc_samples, &mut rng);
            let noise_g = LaplaceNoise::draw(m * n, tc.mc_samples, &mut rng);
            let ys: Vec<&ComplexMatrix> = idx.iter().map(|&i| &ys[i]).collect();
            jce_batch(pair, prior, op, &inputs, &ys, (&noise_h, &noise_g), Mode::EVAL, &mut rng)?
        }
        Prepared::Jcce { op, scatters } => {
            let sc: Vec<&Scatter> = idx.iter().map(|&i| &scatters[i]).collect();
            let draws = JcceDraws::Fresh {
                seed: pair.seed,
                tags: &[TAG_HOLDOUT, 1],
                samples: tc.eval_scsi_samples,
                draws_g: tc.mc_samples,
            };
            jcce_batch(pair, prior, tc.kl_mode, op, &inputs, &sc, &draws, Mode::EVAL, &mut rng)?
        }
    };
    Ok(bg.loss)
}

/// One Adam step on a batch. Returns the batch loss.
fn train_step(
    pair: &mut EncoderPair,
    data: &TrainData,
    batch: &[usize],
    prior: &PriorParams,
    tc: &TrainConfig,
) -> Result<f64> {
    let step = pair.step as u64;
    let mut rng = seeds::stream(pair.seed, &[TAG_STEP, step]);
    let inputs: Vec<Vec<f64>> = batch.iter().map(|&i| data.inputs[i].clone()).collect();
    let bg = match &data.prepared {
        Prepared::Jce { op, ys } => {
            let (m, n) = (pair.cfg.m, pair.cfg.n);
            let noise_h = LaplaceNoise::draw(n, tc.mc_samples, &mut rng);
            let noise_g = LaplaceNoise::draw(m * n, tc.mc_samples, &mut rng);
            let ys: Vec<&ComplexMatrix> = batch.iter().map(|&i| &ys[i]).collect();
            jce_batch(pair, prior, op, &inputs, &ys, (&noise_h, &noise_g), Mode::TRAIN, &mut rng)?
        }
        Prepared::Jcce { op, scatters } => {
            let sc: Vec<&Scatter> = batch.iter().map(|&i| &scatters[i]).collect();
            let draws = JcceDraws::Fresh {
                seed: pair.seed,
                tags: &[TAG_STEP, step, 1],
                samples: tc.scsi_samples,
                draws_g: tc.mc_samples,
            };
            jcce_batch(pair, prior, tc.kl_mode, op, &inputs, &sc, &draws, Mode::TRAIN, &mut rng)?
        }
    };
    let at = pair.step;
    let bad = |what: &str| Error::TrainingFailure {
        step: at,
        reason: format!("non-finite {what}"),
    };
    if !bg.loss.is_finite() {
        return Err(bad("loss"));
    }
    if bg.grad_f.iter().chain(&bg.grad_g).any(|g| !g.is_finite()) {
        return Err(bad("gradient"));
    }
    pair.enc_f.commit_running(&bg.tape_f);
    pair.enc_g.commit_running(&bg.tape_g);
    let lr = pair.lr;
    pair.adam_f.step(&mut pair.enc_f.params, &bg.grad_f, lr)?;
    pair.adam_g.step(&mut pair.enc_g.params, &bg.grad_g, lr)?;
    pair.step += 1;
    if !pair.is_finite() {
        return Err(bad("weights"));
    }
    Ok(bg.loss)
}

/// Trains `pair` on `ds`: Adam on shuffled minibatches, holdout evaluation
/// every `eval_every` steps, rate halving after `plateau_patience`
/// evaluations without improvement. Returns the best-holdout weights.
pub fn train_on(
    mut pair: EncoderPair,
    ds: &Dataset,
    prior: &PriorParams,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    tc.validate()?;
    prior.validate()?;
    ds.check_shape(&pair.cfg)?;
    if ds.records.kind() != pair.kind {
        return Err(Error::Config(format!(
            "dataset holds {} records but the model is {}",
            ds.records.kind().name(),
            pair.kind.name()
        )));
    }
    if ds.plan != pair.plan {
        return Err(Error::Config("dataset pilot plan differs from the model's".into()));
    }
    let total = ds.records.len();
    if total < 2 {
        return Err(Error::Config("training needs at least two records (one is held out)".into()));
    }
    let data = prepare(ds)?;
    let mut order: Vec<usize> = (0..total).collect();
    let mut split_rng = seeds::stream(pair.seed, &[TAG_SPLIT]);
    shuffle(&mut order, &mut split_rng);
    let n_hold = tc.holdout_len(total);
    let (holdout, train) = order.split_at(n_hold);
    let (holdout, mut train) = (holdout.to_vec(), train.to_vec());

    let mut curve = Vec::new();
    let mut best = pair.clone();
    let mut best_loss = f64::INFINITY;
    let mut since = 0;
    let mut halvings = 0;
    let mut cursor = train.len();
    let mut run_loss = 0.0;
    let mut run_count = 0usize;

    for _ in 0..tc.max_steps {
        if cursor + tc.batch_size.min(train.len()) > train.len() {
            shuffle(&mut train, &mut split_rng);
            cursor = 0;
        }
        let b = tc.batch_size.min(train.len());
        let batch = train[cursor..cursor + b].to_vec();
        cursor += b;
        run_loss += train_step(&mut pair, &data, &batch, prior, tc)?;
        run_count += 1;

        if pair.step % tc.eval_every == 0 || pair.step == tc.max_steps {
            let hl = holdout_loss(&pair, &data, &holdout, prior, tc)?;
            if !hl.is_finite() {
                return Err(Error::TrainingFailure {
                    step: pair.step,
                    reason: "non-finite holdout loss".into(),
                });
            }
            curve.push(CurvePoint {
                step: pair.step,
                train_elbo: -run_loss / run_count as f64,
                holdout_elbo: -hl,
                lr: pair.lr,
            });
            run_loss = 0.0;
            run_count = 0;
            if hl < best_loss {
                best_loss = hl;
                best = pair.clone();
                since = 0;
            } else {
                since += 1;
                if since >= tc.plateau_patience {
                    since = 0;
                    halvings += 1;
                    pair.lr *= 0.5;
                    if halvings > tc.max_halvings {
                        break;
                    }
                }
            }
        }
    }
    Ok(TrainOutcome { pair: best, curve })
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

/// Generates `tc.dataset_size` records for `cfg` and trains a fresh pair.
pub fn train_amortized(
    kind: EstimatorKind,
    cfg: &SystemConfig,
    tc: &TrainConfig,
    prior: &PriorParams,
    heads: &HeadConstants,
    seed: u64,
) -> Result<TrainOutcome> {
    tc.validate()?;
    let plan = scenario_plan(cfg, seed);
    let ds = crate::dataset::generate(kind, cfg, seed, &plan, tc.dataset_size, String::new())?;
    let pair = EncoderPair::init(kind, cfg, seed, plan, heads, tc.initial_lr)?;
    train_on(pair, &ds, prior, tc)
}

// ---------------------------------------------------------------------------
// MAP extraction

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateJce {
    pub h_vir_hat: ComplexVector,
    pub g_vir_hat: ComplexMatrix,
    pub h_hat: ComplexVector,
    pub g_hat: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateJcce {
    pub d_hat: Vec<f64>,
    pub g_vir_hat: ComplexMatrix,
    pub g_hat: ComplexMatrix,
    pub r_h_hat: ComplexMatrix,
}

/// Laplace modes are the means; spatial forms by inverse DFT.
pub fn jce_estimate_from(h_vir_hat: ComplexVector, g_vir_hat: ComplexMatrix) -> EstimateJce {
    let (h_hat, g_hat) = to_spatial(&h_vir_hat, &g_vir_hat);
    EstimateJce {
        h_vir_hat,
        g_vir_hat,
        h_hat,
        g_hat,
    }
}

/// Gamma modes `max(k − 1, 0)` and the covariance they imply.
pub fn jcce_estimate_from(k: &[f64], g_vir_hat: ComplexMatrix) -> Result<EstimateJcce> {
    let d_hat: Vec<f64> = k.iter().map(|&x| (x - 1.0).max(0.0)).collect();
    let r_h_hat = ccm_from_d(&d_hat)?;
    let h0 = vec![C64::new(0.0, 0.0); g_vir_hat.cols()];
    let (_, g_hat) = to_spatial(&h0, &g_vir_hat);
    Ok(EstimateJcce {
        d_hat,
        g_vir_hat,
        g_hat,
        r_h_hat,
    })
}

pub fn estimate_jce(pair: &EncoderPair, y: &ComplexMatrix) -> Result<EstimateJce> {
    pair.check_kind(EstimatorKind::Jce)?;
    if y.shape() != (pair.cfg.m, pair.cfg.n_p) {
        return Err(Error::contract(format!(
            "Y is {:?}, the model expects {:?}",
            y.shape(),
            (pair.cfg.m, pair.cfg.n_p)
        )));
    }
    let x = jce_input(y);
    let p = jce_params(&pair.enc_f.predict(&x)?, &pair.enc_g.predict(&x)?, pair.cfg.m, pair.cfg.n);
    Ok(jce_estimate_from(p.m, p.mm))
}

pub fn estimate_jcce(pair: &EncoderPair, ytil: &ComplexMatrix) -> Result<EstimateJcce> {
    pair.check_kind(EstimatorKind::Jcce)?;
    let want = (pair.cfg.m * pair.cfg.n_p, pair.cfg.n_b);
    if ytil.rows() != want.0 || ytil.cols() == 0 {
        return Err(Error::contract(format!("Ỹ is {:?}, the model expects {want:?}", ytil.shape())));
    }
    let x = jcce_input(ytil)?;
    let p = jcce_params(&pair.enc_f.predict(&x)?, &pair.enc_g.predict(&x)?, pair.cfg.m, pair.cfg.n);
    jcce_estimate_from(&p.k, p.mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_channels, to_angular};
    use crate::dataset::generate;

    fn desk() -> SystemConfig {
        SystemConfig {
            m: 2,
            n: 4,
            n_p: 3,
            n_b: 6,
            p: 1,
            q: 1,
            ..SystemConfig::default()
        }
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            dataset_size: 24,
            mc_samples: 8,
            initial_lr: 1e-3,
            max_steps: 6,
            batch_size: 4,
            eval_every: 2,
            scsi_samples: 2,
            eval_scsi_samples: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn heads_follow_the_scenario() {
        let cfg = desk();
        let (f, g) = HeadConstants::default().heads(EstimatorKind::Jce, &cfg);
        assert_eq!(f[0], HeadSpec::MeanTanh { out: 4, scale: 3.0 * 4.0 });
        assert_eq!(f[1], HeadSpec::ScaleSoftmax { out: 4, budget: 4.0 });
        assert_eq!(g[1], HeadSpec::ScaleSoftmax { out: 8, budget: 8.0 });
        let (f, _) = HeadConstants::default().heads(EstimatorKind::Jcce, &cfg);
        assert_eq!(f, vec![HeadSpec::ShapeSigmoid { out: 4, span: 10.0 }]);
    }

    #[test]
    fn map_extraction_examples() {
        let g = ComplexMatrix::zeros(2, 4);
        let e = jcce_estimate_from(&[1.0; 4], g.clone()).unwrap();
        assert_eq!(e.d_hat, vec![0.0; 4]);
        assert_eq!(e.r_h_hat.frobenius_norm(), 0.0);
        let e = jcce_estimate_from(&[3.0, 1.0, 1.0, 1.0], g).unwrap();
        assert_eq!(e.d_hat, vec![2.0, 0.0, 0.0, 0.0]);
        let eig = crate::numerics::eigh(&e.r_h_hat).unwrap();
        let nonzero = eig.values.iter().filter(|v| v.abs() > 1e-9).count();
        assert_eq!(nonzero, 1);
        // below-one shapes clamp
        assert_eq!(jcce_estimate_from(&[0.5; 4], ComplexMatrix::zeros(2, 4)).unwrap().d_hat, vec![0.0; 4]);
    }

    #[test]
    fn angular_round_trip_is_exact() {
        let mut rng = seeds::stream(4, &[]);
        let real = gen_channels(&desk(), &mut rng).unwrap();
        let (hv, gv) = to_angular(&real.h, &real.g);
        let e = jce_estimate_from(hv, gv);
        let err_h: f64 = e.h_hat.iter().zip(&real.h).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err_h < 1e-12);
        assert!(e.g_hat.sub(&real.g).frobenius_norm() < 1e-12);
    }

    #[test]
    fn zero_steps_returns_initial_weights() {
        let cfg = desk();
        for kind in [EstimatorKind::Jce, EstimatorKind::Jcce] {
            let tc = TrainConfig { max_steps: 0, ..quick() };
            let out = train_amortized(kind, &cfg, &tc, &PriorParams::default(), &HeadConstants::default(), 5).unwrap();
            let init = EncoderPair::init(kind, &cfg, 5, scenario_plan(&cfg, 5), &HeadConstants::default(), tc.initial_lr).unwrap();
            assert_eq!(out.pair, init);
            assert!(out.curve.is_empty());
        }
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let cfg = desk();
        for kind in [EstimatorKind::Jce, EstimatorKind::Jcce] {
            let run = || train_amortized(kind, &cfg, &quick(), &PriorParams::default(), &HeadConstants::default(), 7).unwrap();
            let (a, b) = (run(), run());
            assert_eq!(a.pair, b.pair);
            assert_eq!(a.curve, b.curve);
            assert_eq!(a.curve.len(), 3);
            assert!(a.curve.iter().all(|c| c.holdout_elbo.is_finite() && c.train_elbo.is_finite()));
        }
    }

    #[test]
    fn training_is_independent_of_thread_count() {
        let cfg = desk();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    train_amortized(EstimatorKind::Jcce, &cfg, &quick(), &PriorParams::default(), &HeadConstants::default(), 8)
                        .unwrap()
                })
        };
        assert_eq!(run(1).pair, run(3).pair);
    }

    #[test]
    fn estimates_reject_wrong_shapes_and_kinds() {
        let cfg = desk();
        let plan = scenario_plan(&cfg, 1);
        let jce = EncoderPair::init(EstimatorKind::Jce, &cfg, 1, plan.clone(), &HeadConstants::default(), 0.1).unwrap();
        assert!(matches!(estimate_jce(&jce, &ComplexMatrix::zeros(2, 4)), Err(Error::ContractViolation(_))));
        assert!(matches!(estimate_jcce(&jce, &ComplexMatrix::zeros(6, 6)), Err(Error::ContractViolation(_))));
        let est = estimate_jce(&jce, &ComplexMatrix::zeros(2, 3)).unwrap();
        assert_eq!(est.h_hat.len(), 4);
        let jcce = EncoderPair::init(EstimatorKind::Jcce, &cfg, 1, plan, &HeadConstants::default(), 0.1).unwrap();
        let est = estimate_jcce(&jcce, &ComplexMatrix::zeros(6, 6)).unwrap();
        assert!(est.d_hat.iter().all(|&d| d >= 0.0));
        assert!(est.r_h_hat.is_hermitian(1e-10));
    }

    #[test]
    fn shape_mismatch_is_a_config_error() {
        let cfg = desk();
        let plan = scenario_plan(&cfg, 2);
        let ds = generate(EstimatorKind::Jce, &cfg, 2, &plan, 4, String::new()).unwrap();
        let other = SystemConfig { m: 3, ..cfg.clone() };
        let pair = EncoderPair::init(EstimatorKind::Jce, &other, 2, plan, &HeadConstants::default(), 0.1).unwrap();
        assert!(matches!(train_on(pair, &ds, &PriorParams::default(), &quick()), Err(Error::Config(_))));
    }
}
