//! Variational losses for both estimators.
//!
//! Complex gradients use the real-optimization convention
//! `g = ∂f/∂Re z + j·∂f/∂Im z`, so `df = Re(conj(g)·dz)` and a descent step
//! is `z ← z − η g`.
//!
//! The JCE reconstruction term is evaluated in closed form; the JCCE
//! likelihood is a Monte-Carlo average whose samples are drawn up front and
//! then evaluated in parallel with an ordered reduction, so results do not
//! depend on the thread count.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dft_matrix, Cholesky, ComplexMatrix, ComplexVector, C64};
use crate::signal::{cascade_operator, spectral_cov, PilotPlan};
use crate::vardist::{
    gamma_quantile, gamma_sample_implicit, implicit_draw, kl_gamma_exp, kl_gamma_exp_dk, standard_cl, GammaDraw,
    KlMode,
};

/// Lower bound applied to Laplace scales by the encoder heads.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorParams {
    pub alpha_h: f64,
    pub alpha_g: f64,
    pub alpha_d: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            alpha_h: 1.0,
            alpha_g: 1.0,
            alpha_d: 1.0,
        }
    }
}

impl PriorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_h", self.alpha_h), ("alpha_g", self.alpha_g), ("alpha_d", self.alpha_d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Laplace posteriors of `h_vir` (`m`, `b`) and `G_vir` (`mm`, `bb`).
/// `bb` is row-major M×N like `mm`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxParamsJce {
    pub m: ComplexVector,
    pub b: Vec<f64>,
    pub mm: ComplexMatrix,
    pub bb: Vec<f64>,
}

/// Gamma shapes of the angular spectrum plus the Laplace posterior of `G_vir`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxParamsJcce {
    pub k: Vec<f64>,
    pub mm: ComplexMatrix,
    pub bb: Vec<f64>,
}

impl AuxParamsJce {
    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.mm.shape();
        if self.m.len() != n || self.b.len() != n || self.bb.len() != m * n {
            return Err(Error::dim("JCE posterior parameters have inconsistent shapes"));
        }
        if self.b.iter().chain(&self.bb).any(|&s| !(s > 0.0)) {
            return Err(Error::contract("Laplace scales must be positive"));
        }
        Ok(())
    }
}

impl AuxParamsJcce {
    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.mm.shape();
        if self.k.len() != n || self.bb.len() != m * n {
            return Err(Error::dim("JCCE posterior parameters have inconsistent shapes"));
        }
        if self.k.iter().chain(&self.bb).any(|&s| !(s > 0.0)) {
            return Err(Error::contract("Gamma shapes and Laplace scales must be positive"));
        }
        Ok(())
    }
}

/// Sum of gradients, used by [`total_loss`].
pub trait Gradient: Clone {
    fn accumulate(&mut self, other: &Self);
    fn scaled(&self, s: f64) -> Self;
}

#[derive(Clone, Debug, PartialEq)]
pub struct JceGrads {
    pub m: ComplexVector,
    pub b: Vec<f64>,
    pub mm: ComplexMatrix,
    pub bb: Vec<f64>,
}

impl JceGrads {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m: vec![C64::new(0.0, 0.0); n],
            b: vec![0.0; n],
            mm: ComplexMatrix::zeros(m, n),
            bb: vec![0.0; m * n],
        }
    }
}

impl Gradient for JceGrads {
    fn accumulate(&mut self, o: &Self) {
        add_c(&mut self.m, &o.m);
        add_r(&mut self.b, &o.b);
        self.mm.add_assign(&o.mm);
        add_r(&mut self.bb, &o.bb);
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            m: self.m.iter().map(|z| z * s).collect(),
            b: self.b.iter().map(|x| x * s).collect(),
            mm: self.mm.scale(s),
            bb: self.bb.iter().map(|x| x * s).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JcceGrads {
    pub k: Vec<f64>,
    pub mm: ComplexMatrix,
    pub bb: Vec<f64>,
}

impl JcceGrads {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            k: vec![0.0; n],
            mm: ComplexMatrix::zeros(m, n),
            bb: vec![0.0; m * n],
        }
    }
}

impl Gradient for JcceGrads {
    fn accumulate(&mut self, o: &Self) {
        add_r(&mut self.k, &o.k);
        self.mm.add_assign(&o.mm);
        add_r(&mut self.bb, &o.bb);
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            k: self.k.iter().map(|x| x * s).collect(),
            mm: self.mm.scale(s),
            bb: self.bb.iter().map(|x| x * s).collect(),
        }
    }
}

fn add_r(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn add_c(a: &mut [C64], b: &[C64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// A loss value with its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Loss<G> {
    pub value: f64,
    pub grad: G,
}

/// `L1 + L2 + L3` with summed gradients.
pub fn total_loss<G: Gradient>(parts: &[&Loss<G>]) -> Option<Loss<G>> {
    let (first, rest) = parts.split_first()?;
    let mut out = (*first).clone();
    for p in rest {
        out.value += p.value;
        out.grad.accumulate(&p.grad);
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// KL terms

/// Standard complex-Laplace draws for `draws` Monte-Carlo replicas of a
/// `len`-element parameter, stored draw-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceNoise {
    pub len: usize,
    pub zeta: Vec<C64>,
}

impl LaplaceNoise {
    pub fn draw<R: Rng + ?Sized>(len: usize, draws: usize, rng: &mut R) -> Self {
        Self {
            len,
            zeta: (0..len * draws).map(|_| standard_cl(rng)).collect(),
        }
    }

    pub fn draws(&self) -> usize {
        self.zeta.len() / self.len.max(1)
    }
}

/// Monte-Carlo KL between a factorized `CL(mean, scale)` posterior and a
/// `CL(0, α)` prior. Returns the value and gradients w.r.t. means and scales.
pub fn laplace_kl_mc(mean: &[C64], scale: &[f64], alpha: f64, noise: &LaplaceNoise) -> (f64, ComplexVector, Vec<f64>) {
    let n = mean.len();
    assert_eq!(noise.len, n, "noise length differs from parameter length");
    let d = noise.draws();
    assert!(d >= 1, "at least one Monte-Carlo draw is required");
    let inv = 1.0 / (d as f64 * alpha);
    let mut value = 0.0;
    let mut gm = vec![C64::new(0.0, 0.0); n];
    let mut gb = vec![0.0; n];
    for draw in noise.zeta.chunks_exact(n) {
        for i in 0..n {
            let z = mean[i] + draw[i] * scale[i];
            let r = z.norm();
            value += r * inv;
            if r > 0.0 {
                let u = z / r;
                gm[i] += u * inv;
                gb[i] += (u.conj() * draw[i]).re * inv;
            }
        }
    }
    for i in 0..n {
        value -= (2.0 * PI * scale[i] * scale[i]).ln();
        gb[i] -= 2.0 / scale[i];
    }
    value += n as f64 * ((2.0 * PI * alpha * alpha).ln() - 2.0);
    (value, gm, gb)
}

/// KL of the UE-RIS angular posterior against its prior, with fresh draws.
pub fn l1_icsi<R: Rng + ?Sized>(p: &AuxParamsJce, prior: &PriorParams, draws: usize, rng: &mut R) -> Loss<JceGrads> {
    let noise = LaplaceNoise::draw(p.m.len(), draws, rng);
    l1_icsi_with(p, prior, &noise)
}

pub fn l1_icsi_with(p: &AuxParamsJce, prior: &PriorParams, noise: &LaplaceNoise) -> Loss<JceGrads> {
    let (value, gm, gb) = laplace_kl_mc(&p.m, &p.b, prior.alpha_h, noise);
    let mut grad = JceGrads::zeros(p.mm.rows(), p.mm.cols());
    grad.m = gm;
    grad.b = gb;
    Loss { value, grad }
}

/// KL of the RIS-BS angular posterior against its prior, with fresh draws.
pub fn l2_icsi<R: Rng + ?Sized>(mm: &ComplexMatrix, bb: &[f64], prior: &PriorParams, draws: usize, rng: &mut R) -> (f64, ComplexMatrix, Vec<f64>) {
    let noise = LaplaceNoise::draw(bb.len(), draws, rng);
    l2_icsi_with(mm, bb, prior, &noise)
}

pub fn l2_icsi_with(mm: &ComplexMatrix, bb: &[f64], prior: &PriorParams, noise: &LaplaceNoise) -> (f64, ComplexMatrix, Vec<f64>) {
    let (value, gm, gb) = laplace_kl_mc(mm.as_slice(), bb, prior.alpha_g, noise);
    let gm = ComplexMatrix::from_row_major(mm.rows(), mm.cols(), gm).expect("gradient shape");
    (value, gm, gb)
}

/// `Σ_i KL(Gamma(k_i, 1) ‖ Exp(α_d))` and its gradient.
pub fn l1_scsi(k: &[f64], alpha_d: f64, mode: KlMode) -> (f64, Vec<f64>) {
    let value = k.iter().map(|&ki| kl_gamma_exp(ki, alpha_d, mode)).sum();
    let grad = k.iter().map(|&ki| kl_gamma_exp_dk(ki, alpha_d, mode)).collect();
    (value, grad)
}

// ---------------------------------------------------------------------------
// JCE reconstruction term

/// Pilot-dependent quantities of the angular-domain training model, fixed
/// for a scenario.
///
/// Pilot `l` maps `h_vir` through `C_l = c_l F_Nᴴ diag(v_l) F_Nᴴ`, with
/// `c_l = √ρ x_l / (M N²)`. Entry `(k, i)` of `F_Nᴴ diag(v) F_Nᴴ` depends
/// only on `(k + i) mod N`, so each pilot is stored as one length-N vector.
#[derive(Clone, Debug)]
pub struct JceOperator {
    m: usize,
    n: usize,
    coef: Vec<C64>,
    kern: Vec<ComplexVector>,
    fm: ComplexMatrix,
    /// `Σ_l |c_l|² |kern_l[s]|²`
    wbar: Vec<f64>,
}

impl JceOperator {
    pub fn new(m: usize, plan: &PilotPlan, rho: f64) -> Result<Self> {
        let n = plan.n();
        let fm = dft_matrix(m)?;
        let fnm = dft_matrix(n)?;
        let scale = rho.sqrt() / (m * n * n) as f64;
        let coef: Vec<C64> = plan.x.iter().map(|x| x * scale).collect();
        let kern: Vec<ComplexVector> = (0..plan.n_p()).map(|l| fnm.adjoint_mul_vec(&plan.config(l))).collect();
        let mut wbar = vec![0.0; n];
        for (c, k) in coef.iter().zip(&kern) {
            for (w, z) in wbar.iter_mut().zip(k) {
                *w += c.norm_sqr() * z.norm_sqr();
            }
        }
        Ok(Self {
            m,
            n,
            coef,
            kern,
            fm,
            wbar,
        })
    }

    pub fn n_p(&self) -> usize {
        self.coef.len()
    }

    /// Dense `C_l` (N×N).
    pub fn cascade(&self, l: usize) -> ComplexMatrix {
        let (c, k, n) = (self.coef[l], &self.kern[l], self.n);
        ComplexMatrix::from_fn(n, n, |a, b| c * k[(a + b) % n])
    }
}

/// Closed-form `Σ_l E‖y_l − ŷ_l‖²` under the factorized Laplace posteriors,
/// without the constant term.
pub fn l3_icsi_closed(p: &AuxParamsJce, y: &ComplexMatrix, plan: &PilotPlan, rho: f64) -> Result<Loss<JceGrads>> {
    let op = JceOperator::new(p.mm.rows(), plan, rho)?;
    l3_icsi_with(p, y, &op)
}

pub fn l3_icsi_with(p: &AuxParamsJce, y: &ComplexMatrix, op: &JceOperator) -> Result<Loss<JceGrads>> {
    let (m, n) = (op.m, op.n);
    if p.mm.shape() != (m, n) || p.m.len() != n || y.shape() != (m, op.n_p()) {
        return Err(Error::dim(format!(
            "l3_icsi: Y is {:?}, M is {:?}, operator expects {m}×{n} with {} pilots",
            y.shape(),
            p.mm.shape(),
            op.n_p()
        )));
    }
    let mf = m as f64;
    let lam: Vec<f64> = p.b.iter().map(|b| 6.0 * b * b).collect();
    let q: Vec<f64> = (0..n)
        .map(|k| 6.0 * (0..m).map(|r| p.bb[r * n + k].powi(2)).sum::<f64>())
        .collect();

    let mut grad = JceGrads::zeros(m, n);
    let mut value = 0.0;

    // pilot-summed variance-times-variance term
    let mut db_acc = vec![0.0; n]; // Σ_l d(value)/dΛ_i
    let mut dq_acc = vec![0.0; n]; // Σ_l d(value)/dQ_k
    for k in 0..n {
        for i in 0..n {
            let w = op.wbar[(k + i) % n] * mf;
            value += q[k] * w * lam[i];
            db_acc[i] += q[k] * w;
            dq_acc[k] += w * lam[i];
        }
    }

    for l in 0..op.n_p() {
        let c = op.cascade(l);
        let t = c.mul_vec(&p.m);
        let pm = p.mm.matmul(&c);
        let mu = op.fm.adjoint_mul_vec(&p.mm.mul_vec(&t));
        let e: ComplexVector = (0..m).map(|r| y[(r, l)] - mu[r]).collect();
        value += e.iter().map(|z| z.norm_sqr()).sum::<f64>();
        for i in 0..n {
            let col: f64 = (0..m).map(|r| pm[(r, i)].norm_sqr()).sum();
            value += mf * lam[i] * col;
            db_acc[i] += mf * col;
        }
        for k in 0..n {
            value += mf * q[k] * t[k].norm_sqr();
            dq_acc[k] += mf * t[k].norm_sqr();
        }

        let fe = op.fm.mul_vec(&e);
        let mh_fe = p.mm.adjoint_mul_vec(&fe);
        let u: ComplexVector = (0..n).map(|k| -2.0 * mh_fe[k] + 2.0 * mf * q[k] * t[k]).collect();
        add_c(&mut grad.m, &c.adjoint_mul_vec(&u));

        // −2 (F_M e) tᴴ + 2M (M C) Λ Cᴴ
        let lam_c: Vec<C64> = lam.iter().map(|&x| C64::new(x, 0.0)).collect();
        let quad = pm.mul_diag(&lam_c).matmul(&c.adjoint()).scale(2.0 * mf);
        grad.mm.add_assign(&quad);
        grad.mm.add_assign(&ComplexMatrix::outer(&fe, &t).scale(-2.0));
    }

    for i in 0..n {
        grad.b[i] = 12.0 * p.b[i] * db_acc[i];
    }
    for r in 0..m {
        for k in 0..n {
            grad.bb[r * n + k] = 12.0 * p.bb[r * n + k] * dq_acc[k];
        }
    }
    Ok(Loss { value, grad })
}

/// Full JCE objective `L1 + L2 + L3` at fixed Monte-Carlo noise.
pub fn jce_loss(
    p: &AuxParamsJce,
    prior: &PriorParams,
    y: &ComplexMatrix,
    op: &JceOperator,
    noise_h: &LaplaceNoise,
    noise_g: &LaplaceNoise,
) -> Result<Loss<JceGrads>> {
    let l1 = l1_icsi_with(p, prior, noise_h);
    let (v2, gmm, gbb) = l2_icsi_with(&p.mm, &p.bb, prior, noise_g);
    let mut g2 = JceGrads::zeros(p.mm.rows(), p.mm.cols());
    g2.mm = gmm;
    g2.bb = gbb;
    let l2 = Loss { value: v2, grad: g2 };
    let l3 = l3_icsi_with(p, y, op)?;
    Ok(total_loss(&[&l1, &l2, &l3]).expect("three parts"))
}

// ---------------------------------------------------------------------------
// JCCE likelihood term

/// Scenario-fixed pieces of the covariance model.
#[derive(Clone, Debug)]
pub struct JcceOperator {
    m: usize,
    n: usize,
    phi: ComplexMatrix,
    rho: f64,
    fm: ComplexMatrix,
    fnm: ComplexMatrix,
}

impl JcceOperator {
    pub fn new(m: usize, plan: &PilotPlan, rho: f64) -> Result<Self> {
        Ok(Self {
            m,
            n: plan.n(),
            phi: plan.phi.clone(),
            rho,
            fm: dft_matrix(m)?,
            fnm: dft_matrix(plan.n())?,
        })
    }

    /// Side length of the received covariance, `M·N_p`.
    pub fn obs_dim(&self) -> usize {
        self.m * self.phi.cols()
    }
}

/// One joint Monte-Carlo draw: Gamma draws for `d` and standard Laplace
/// noise for `G_vir` (row-major M×N).
#[derive(Clone, Debug, PartialEq)]
pub struct JcceSample {
    pub gamma: Vec<GammaDraw>,
    pub zeta: ComplexVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JcceNoise {
    pub samples: Vec<JcceSample>,
}

/// How the Gamma part of stored noise is turned into `d` at given shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaPath {
    /// Use the stored draws (valid when shapes equal those at draw time).
    Sampled,
    /// Re-derive `d = P⁻¹(k, u)` from the stored CDF levels, so the noise
    /// stays common when `k` moves (finite-difference checks).
    Quantile,
}

impl JcceNoise {
    pub fn draw<R: Rng + ?Sized>(k: &[f64], mn: usize, samples: usize, rng: &mut R) -> Result<Self> {
        let mut out = Vec::with_capacity(samples);
        for _ in 0..samples {
            let gamma = k
                .iter()
                .map(|&ki| gamma_sample_implicit(ki, rng))
                .collect::<Result<Vec<_>>>()?;
            let zeta = (0..mn).map(|_| standard_cl(rng)).collect();
            out.push(JcceSample { gamma, zeta });
        }
        Ok(Self { samples: out })
    }
}

/// Sample-covariance sufficient statistic `Ỹ Ỹᴴ` with its block count.
#[derive(Clone, Debug, PartialEq)]
pub struct Scatter {
    pub s: ComplexMatrix,
    pub n_b: usize,
}

impl Scatter {
    pub fn from_blocks(y: &ComplexMatrix) -> Self {
        Self {
            s: y.matmul(&y.adjoint()),
            n_b: y.cols(),
        }
    }
}

/// Value and gradients of `Tr(R⁻¹ S) + N_b log|R|` for one draw
/// `(d, G_vir)`; `dxdk` chains the spectrum gradient back to the shapes.
fn l3_scsi_single(
    op: &JcceOperator,
    mm: &ComplexMatrix,
    bb: &[f64],
    d: &[f64],
    dxdk: &[f64],
    zeta: &[C64],
    scatter: &Scatter,
    index: usize,
) -> Result<(f64, JcceGrads)> {
    let (m, n) = (op.m, op.n);
    let inv_mn = 1.0 / (m * n) as f64;
    let gvir = ComplexMatrix::from_fn(m, n, |r, c| mm[(r, c)] + zeta[r * n + c] * bb[r * n + c]);
    let g = op.fm.adjoint().matmul(&gvir).matmul(&op.fnm.adjoint()).scale(inv_mn);
    let a = cascade_operator(&g, &op.phi).matmul(&op.fnm.adjoint());
    let r = spectral_cov(&a, d, op.rho);
    let chol = Cholesky::new(&r).map_err(|_| {
        Error::numerical(format!("l3_scsi covariance factorization, Monte-Carlo sample {index}"), 2)
    })?;
    let rinv = chol.inverse();
    let rs = rinv.matmul(&scatter.s);
    let value = rs.trace().re + scatter.n_b as f64 * chol.logdet();

    // Ω = N_b R⁻¹ − R⁻¹ S R⁻¹
    let omega = rinv.scale(scatter.n_b as f64).sub(&rs.matmul(&rinv));
    let oa = omega.matmul(&a);
    let mut gd = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for row in 0..a.rows() {
            s += (a[(row, i)].conj() * oa[(row, i)]).re;
        }
        gd[i] = op.rho * s;
    }
    let dc: Vec<C64> = d.iter().map(|&x| C64::new(2.0 * op.rho * x, 0.0)).collect();
    let gk = oa.mul_diag(&dc).matmul(&op.fnm);
    let n_p = op.phi.cols();
    let gg = ComplexMatrix::from_fn(m, n, |r, c| {
        (0..n_p).map(|l| op.phi[(c, l)].conj() * gk[(l * m + r, c)]).sum()
    });
    let ggvir = op.fm.matmul(&gg).matmul(&op.fnm).scale(inv_mn);
    let gbb = (0..m * n).map(|i| (ggvir.as_slice()[i].conj() * zeta[i]).re).collect();
    let gk_shape = gd.iter().zip(dxdk).map(|(a, b)| a * b).collect();
    Ok((
        value,
        JcceGrads {
            k: gk_shape,
            mm: ggvir,
            bb: gbb,
        },
    ))
}

/// Monte-Carlo likelihood term averaged over `samples` fresh joint draws.
pub fn l3_scsi<R: Rng + ?Sized>(
    p: &AuxParamsJcce,
    ytil: &ComplexMatrix,
    op: &JcceOperator,
    samples: usize,
    rng: &mut R,
) -> Result<Loss<JcceGrads>> {
    if samples == 0 {
        return Err(Error::contract("l3_scsi needs at least one Monte-Carlo sample"));
    }
    let noise = JcceNoise::draw(&p.k, p.bb.len(), samples, rng)?;
    l3_scsi_with(p, &Scatter::from_blocks(ytil), op, &noise, GammaPath::Sampled)
}

pub fn l3_scsi_with(
    p: &AuxParamsJcce,
    scatter: &Scatter,
    op: &JcceOperator,
    noise: &JcceNoise,
    path: GammaPath,
) -> Result<Loss<JcceGrads>> {
    let (m, n) = (op.m, op.n);
    if p.mm.shape() != (m, n) || p.k.len() != n || scatter.s.rows() != op.obs_dim() {
        return Err(Error::dim("l3_scsi: parameter or observation shape mismatch"));
    }
    if noise.samples.is_empty() {
        return Err(Error::contract("l3_scsi needs at least one Monte-Carlo sample"));
    }
    let parts: Vec<Result<(f64, JcceGrads)>> = noise
        .samples
        .par_iter()
        .enumerate()
        .map(|(s, sample)| {
            let draws: Vec<GammaDraw> = match path {
                GammaPath::Sampled => sample.gamma.clone(),
                GammaPath::Quantile => sample
                    .gamma
                    .iter()
                    .zip(&p.k)
                    .map(|(g, &k)| implicit_draw(k, gamma_quantile(k, g.u)))
                    .collect(),
            };
            let d: Vec<f64> = draws.iter().map(|g| g.x).collect();
            let dxdk: Vec<f64> = draws.iter().map(|g| g.dxdk).collect();
            l3_scsi_single(op, &p.mm, &p.bb, &d, &dxdk, &sample.zeta, scatter, s)
        })
        .collect();
    let inv = 1.0 / noise.samples.len() as f64;
    let mut value = 0.0;
    let mut grad = JcceGrads::zeros(m, n);
    for part in parts {
        let (v, g) = part?;
        value += v;
        grad.accumulate(&g);
    }
    Ok(Loss {
        value: value * inv,
        grad: grad.scaled(inv),
    })
}

/// Full JCCE objective `L1 + L2 + L3` at fixed Monte-Carlo noise.
pub fn jcce_loss(
    p: &AuxParamsJcce,
    prior: &PriorParams,
    kl_mode: KlMode,
    scatter: &Scatter,
    op: &JcceOperator,
    noise_g: &LaplaceNoise,
    noise: &JcceNoise,
    path: GammaPath,
) -> Result<Loss<JcceGrads>> {
    let (m, n) = p.mm.shape();
    let (v1, gk) = l1_scsi(&p.k, prior.alpha_d, kl_mode);
    let mut g1 = JcceGrads::zeros(m, n);
    g1.k = gk;
    let (v2, gmm, gbb) = l2_icsi_with(&p.mm, &p.bb, prior, noise_g);
    let l2 = Loss {
        value: v2,
        grad: JcceGrads {
            k: vec![0.0; n],
            mm: gmm,
            bb: gbb,
        },
    };
    let l3 = l3_scsi_with(p, scatter, op, noise, path)?;
    Ok(total_loss(&[&Loss { value: v1, grad: g1 }, &l2, &l3]).expect("three parts"))
}
