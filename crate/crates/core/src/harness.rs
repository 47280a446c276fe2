//! Metrics, baselines, pilot-overhead accounting, complexity formulas and the
//! Monte-Carlo SNR sweep.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ccm_ground_truth, spectrum_of, ChannelModel, SystemConfig};
use crate::error::{Error, Result};
use crate::inference::{estimate_jce, estimate_jcce, EncoderPair, EstimatorKind};
use crate::numerics::{eigh, svd, ComplexMatrix, C64};
use crate::phaseopt::{capacity, phases_icsi, phases_scsi, PhaseConfig};
use crate::seeds;
use crate::signal::{rx_train_jce, rx_train_jcce_with};

const TAG_SWEEP: u64 = 0x5EE9;

pub const CSV_HEADER: &str = "scenario,snr_db,trial,method,capacity,effective_capacity,nmse_h,nmse_G,nmse_d,eig_alignment";

/// `‖est − truth‖² / ‖truth‖²`.
pub fn nmse(est: &[C64], truth: &[C64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::dim(format!("nmse: {} vs {} entries", est.len(), truth.len())));
    }
    let den: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::Domain("nmse: reference is zero".into()));
    }
    Ok(est.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / den)
}

pub fn nmse_real(est: &[f64], truth: &[f64]) -> Result<f64> {
    let c = |v: &[f64]| v.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>();
    nmse(&c(est), &c(truth))
}

/// Capacity left after a fraction `alpha` of the slots carries pilots.
pub fn effective_capacity(c: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("overhead fraction {alpha} outside [0, 1]")));
    }
    Ok((1.0 - alpha) * c)
}

/// Coherence times and slot budget of the two training protocols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSpec {
    pub t_g_ms: f64,
    pub t_h_ms: f64,
    /// Slots per UE-RIS coherence block.
    pub slots_per_block: usize,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            t_g_ms: 100.0,
            t_h_ms: 0.1,
            slots_per_block: 40,
        }
    }
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_h_ms > 0.0) || !(self.t_g_ms >= self.t_h_ms) || !self.t_g_ms.is_finite() {
            return Err(Error::Config(format!(
                "protocol needs T_G ≥ T_h > 0, got T_G = {} ms, T_h = {} ms",
                self.t_g_ms, self.t_h_ms
            )));
        }
        if self.slots_per_block == 0 {
            return Err(Error::Config("protocol.slots_per_block must be at least 1".into()));
        }
        Ok(())
    }

    /// UE-RIS blocks per RIS-BS coherence window, `⌊T_G/T_h⌋`.
    pub fn blocks_per_window(&self) -> usize {
        // 100/0.1 is 999.999… in binary floating point
        (self.t_g_ms / self.t_h_ms * (1.0 + 1e-12)).floor() as usize
    }
}

/// Pilot share of all slots. JCE trains in every UE-RIS block; JCCE only
/// in the first `N_b` blocks of each RIS-BS window. Capped at 1.
pub fn overhead_fraction(p: &ProtocolSpec, scheme: EstimatorKind, cfg: &SystemConfig) -> f64 {
    let alpha = match scheme {
        EstimatorKind::Jce => cfg.n_p as f64 / p.slots_per_block as f64,
        EstimatorKind::Jcce => {
            (cfg.n_p * cfg.n_b) as f64 / (p.slots_per_block as f64 * p.blocks_per_window().max(1) as f64)
        }
    };
    alpha.min(1.0)
}

/// `|⟨v̂, v⟩|` between the dominant unit eigenvectors (Hermitian inputs) or
/// dominant right singular vectors (anything else).
pub fn eig_alignment(a_hat: &ComplexMatrix, a_ref: &ComplexMatrix) -> Result<f64> {
    if a_hat.shape() != a_ref.shape() {
        return Err(Error::dim("eig_alignment: shapes differ"));
    }
    let top = |a: &ComplexMatrix| -> Result<Vec<C64>> {
        if a.rows() == a.cols() && a.is_hermitian(1e-9 * (1.0 + a.frobenius_norm())) {
            let e = eigh(a)?;
            Ok(e.vectors.column(0))
        } else {
            Ok(svd(a)?.v.column(0))
        }
    };
    let (u, v) = (top(a_hat)?, top(a_ref)?);
    let dot: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
    let norm = |x: &[C64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok((dot.norm() / (norm(&u) * norm(&v))).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderSide {
    F,
    G,
}

/// Inference FLOPs of one encoder as tabulated in the complexity table,
/// reproduced literally. The constant and the input coefficient follow from
/// [`layer_flops`] at `r = 0.9`; the output coefficients are as printed.
pub fn flop_count(model: EstimatorKind, encoder: EncoderSide, m: u64, n: u64, n_p: u64) -> u64 {
    let obs = m * n_p;
    match (model, encoder) {
        (EstimatorKind::Jce, EncoderSide::F) => 1087 * obs + 3600 * n + 163_740,
        (EstimatorKind::Jce, EncoderSide::G) => 1087 * obs + 3600 * m * n + 163_740,
        (EstimatorKind::Jcce, side) => {
            let pre = 4 * obs * n * (obs + 1) + 2 * obs + 1087 * obs * obs;
            pre + match side {
                EncoderSide::F => 600 * n,
                EncoderSide::G => 3600 * m * n,
            } + 163_740
        }
    }
}

/// `I(4r + 2rH₁) + 2H₂O + (2rH₁ + 2rH₁H₂ + 4H₂)` for a two-hidden-layer
/// network with keep rate `r`.
pub fn layer_flops(input: f64, output: f64, r: f64, h1: f64, h2: f64) -> f64 {
    input * (4.0 * r + 2.0 * r * h1) + output * 2.0 * h2 + (2.0 * r * h1 + 2.0 * r * h1 * h2 + 4.0 * h2)
}

// ---------------------------------------------------------------------------
// Sweep

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "JCE")]
    Jce,
    #[serde(rename = "JCCE")]
    Jcce,
    #[serde(rename = "perfect_csi")]
    PerfectCsi,
    #[serde(rename = "pc_pcov")]
    PcPcov,
    #[serde(rename = "random_phase")]
    RandomPhase,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Jce,
        Method::Jcce,
        Method::PerfectCsi,
        Method::PcPcov,
        Method::RandomPhase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jce => "JCE",
            Method::Jcce => "JCCE",
            Method::PerfectCsi => "perfect_csi",
            Method::PcPcov => "pc_pcov",
            Method::RandomPhase => "random_phase",
        }
    }

    /// The estimator a method needs a trained model for.
    pub fn learned(self) -> Option<EstimatorKind> {
        match self {
            Method::Jce => Some(EstimatorKind::Jce),
            Method::Jcce => Some(EstimatorKind::Jcce),
            _ => None,
        }
    }

    /// Training protocol charged for overhead; `None` means no pilots.
    pub fn protocol(self) -> Option<EstimatorKind> {
        match self {
            Method::Jce | Method::PerfectCsi => Some(EstimatorKind::Jce),
            Method::Jcce | Method::PcPcov => Some(EstimatorKind::Jcce),
            Method::RandomPhase => None,
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// A named scenario; its seed fixes the pilot plan and cluster layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub cfg: SystemConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub scenario: String,
    pub snr_db: f64,
    pub trial: usize,
    pub method: Method,
    pub capacity: f64,
    pub effective_capacity: f64,
    pub nmse_h: Option<f64>,
    pub nmse_g: Option<f64>,
    pub nmse_d: Option<f64>,
    pub eig_alignment: Option<f64>,
}

impl MetricRecord {
    fn new(scenario: &str, snr_db: f64, trial: usize, method: Method, capacity: f64, alpha: f64) -> Result<Self> {
        Ok(Self {
            scenario: scenario.to_string(),
            snr_db,
            trial,
            method,
            capacity,
            effective_capacity: effective_capacity(capacity, alpha)?,
            nmse_h: None,
            nmse_g: None,
            nmse_d: None,
            eig_alignment: None,
        })
    }

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.snr_db,
            self.trial,
            self.method.name(),
            self.capacity,
            self.effective_capacity,
            opt(self.nmse_h),
            opt(self.nmse_g),
            opt(self.nmse_d),
            opt(self.eig_alignment)
        )
    }
}

pub fn write_csv<W: Write>(records: &[MetricRecord], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Parses a file written by [`write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<MetricRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format("metrics CSV header not recognized".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::Format(format!("metrics CSV row {}: bad {what}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad("field count"));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let opt = |s: &str, what: &str| if s.is_empty() { Ok(None) } else { num(s, what).map(Some) };
            Ok(MetricRecord {
                scenario: f[0].to_string(),
                snr_db: num(f[1], "snr_db")?,
                trial: f[2].parse().map_err(|_| bad("trial"))?,
                method: f[3].parse().map_err(|_| bad("method"))?,
                capacity: num(f[4], "capacity")?,
                effective_capacity: num(f[5], "effective_capacity")?,
                nmse_h: opt(f[6], "nmse_h")?,
                nmse_g: opt(f[7], "nmse_G")?,
                nmse_d: opt(f[8], "nmse_d")?,
                eig_alignment: opt(f[9], "eig_alignment")?,
            })
        })
        .collect()
}

/// Trained models keyed by scenario, estimator and SNR.
#[derive(Clone, Debug, Default)]
pub struct ModelStore {
    models: BTreeMap<(String, EstimatorKind, u64), EncoderPair>,
}

impl ModelStore {
    pub fn insert(&mut self, scenario: &str, snr_db: f64, pair: EncoderPair) {
        self.models.insert((scenario.to_string(), pair.kind, snr_db.to_bits()), pair);
    }

    pub fn get(&self, scenario: &str, kind: EstimatorKind, snr_db: f64) -> Option<&EncoderPair> {
        self.models.get(&(scenario.to_string(), kind, snr_db.to_bits()))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Looks up and checks the model a learned method needs.
fn model_for<'a>(
    models: &'a ModelStore,
    sc: &Scenario,
    kind: EstimatorKind,
    snr_db: f64,
) -> Result<&'a EncoderPair> {
    let pair = models.get(&sc.id, kind, snr_db).ok_or_else(|| {
        Error::MissingArtifact(format!(
            "no trained {} model for scenario '{}' at {snr_db} dB",
            kind.name(),
            sc.id
        ))
    })?;
    let (a, b) = (&pair.cfg, &sc.cfg);
    if (a.m, a.n, a.n_p, a.n_b, a.p, a.q, a.angle_mode) != (b.m, b.n, b.n_p, b.n_b, b.p, b.q, b.angle_mode) {
        return Err(Error::Config(format!("{} model for scenario '{}' has a different shape", kind.name(), sc.id)));
    }
    if pair.seed != sc.seed {
        return Err(Error::Config(format!(
            "{} model for scenario '{}' was trained with seed {}, the sweep uses {}",
            kind.name(),
            sc.id,
            pair.seed,
            sc.seed
        )));
    }
    Ok(pair)
}

/// Phases for an S-CSI estimate; an all-zero covariance estimate carries no
/// direction and falls back to zero phases.
fn scsi_phases(g: &ComplexMatrix, r_h: &ComplexMatrix) -> Result<PhaseConfig> {
    if r_h.frobenius_norm() == 0.0 || g.frobenius_norm() == 0.0 {
        return Ok(PhaseConfig::from_theta(&vec![0.0; r_h.rows()]));
    }
    phases_scsi(g, r_h)
}

fn icsi_phases(g: &ComplexMatrix, h: &[C64]) -> Result<PhaseConfig> {
    if g.frobenius_norm() == 0.0 || h.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok(PhaseConfig::from_theta(&vec![0.0; h.len()]));
    }
    phases_icsi(g, h)
}

fn run_trial(
    sc: &Scenario,
    sc_index: usize,
    snr_db: f64,
    trial: usize,
    methods: &[Method],
    models: &ModelStore,
    protocol: &ProtocolSpec,
    seed: u64,
) -> Result<Vec<MetricRecord>> {
    let cfg = sc.cfg.clone().with_snr_db(snr_db);
    let rho = cfg.rho;
    let model = ChannelModel::new(cfg.clone(), sc.seed)?;
    let tags = [TAG_SWEEP, sc_index as u64, snr_db.to_bits(), trial as u64];
    let real = model.gen_channels(&mut seeds::stream(seed, &tags));
    let r_h = ccm_ground_truth(&real.h_paths, cfg.n);
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut mtags = tags.to_vec();
        mtags.push(method.code());
        let mut rng = seeds::stream(seed, &mtags);
        let alpha = method.protocol().map_or(0.0, |k| overhead_fraction(protocol, k, &cfg));
        let rec = match method {
            Method::PerfectCsi => {
                let v = icsi_phases(&real.g, &real.h)?;
                MetricRecord::new(&sc.id, snr_db, trial, method, capacity(&real.g, &v.v, &real.h, rho), alpha)?
            }
            Method::RandomPhase => {
                let v = PhaseConfig::random(cfg.n, &mut rng);
                MetricRecord::new(&sc.id, snr_db, trial, method, capacity(&real.g, &v.v, &real.h, rho), alpha)?
            }
            Method::PcPcov => {
                let v = scsi_phases(&real.g, &r_h)?;
                let h = model.redraw_h(&real.h_paths, &mut rng);
                MetricRecord::new(&sc.id, snr_db, trial, method, capacity(&real.g, &v.v, &h, rho), alpha)?
            }
            Method::Jce => {
                let pair = model_for(models, sc, EstimatorKind::Jce, snr_db)?;
                let y = rx_train_jce(&real, &pair.plan, rho, &mut rng)?.y;
                let est = estimate_jce(pair, &y)?;
                let v = icsi_phases(&est.g_hat, &est.h_hat)?;
                let mut rec =
                    MetricRecord::new(&sc.id, snr_db, trial, method, capacity(&real.g, &v.v, &real.h, rho), alpha)?;
                rec.nmse_h = Some(nmse(&est.h_hat, &real.h)?);
                rec.nmse_g = Some(nmse(est.g_hat.as_slice(), real.g.as_slice())?);
                rec
            }
            Method::Jcce => {
                let pair = model_for(models, sc, EstimatorKind::Jcce, snr_db)?;
                let paths = real.h_paths.clone();
                let ytil = rx_train_jcce_with(&real.g, &pair.plan, rho, cfg.n_b, &mut rng, |r| {
                    model.redraw_h(&paths, r)
                })?
                .y;
                let est = estimate_jcce(pair, &ytil)?;
                let v = scsi_phases(&est.g_hat, &est.r_h_hat)?;
                let h = model.redraw_h(&real.h_paths, &mut rng);
                let mut rec = MetricRecord::new(&sc.id, snr_db, trial, method, capacity(&real.g, &v.v, &h, rho), alpha)?;
                rec.nmse_g = Some(nmse(est.g_hat.as_slice(), real.g.as_slice())?);
                rec.nmse_d = Some(nmse_real(&est.d_hat, &spectrum_of(&r_h)?)?);
                rec.eig_alignment = Some(eig_alignment(&est.r_h_hat, &r_h)?);
                rec
            }
        };
        out.push(rec);
    }
    Ok(out)
}

/// Every (scenario, SNR, trial, method) combination, ordered by scenario,
/// SNR, trial and then the order of `methods`. Trials run in parallel on
/// independent streams, so the result does not depend on the thread count.
pub fn run_sweep(
    scenarios: &[Scenario],
    snrs_db: &[f64],
    trials: usize,
    methods: &[Method],
    models: &ModelStore,
    protocol: &ProtocolSpec,
    seed: u64,
) -> Result<Vec<MetricRecord>> {
    protocol.validate()?;
    for sc in scenarios {
        sc.cfg.validate()?;
        for &snr in snrs_db {
            for kind in methods.iter().filter_map(|m| m.learned()) {
                model_for(models, sc, kind, snr)?;
            }
        }
    }
    let jobs: Vec<(usize, f64, usize)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, _)| snrs_db.iter().flat_map(move |&s| (0..trials).map(move |t| (i, s, t))))
        .collect();
    let parts: Vec<Result<Vec<MetricRecord>>> = jobs
        .par_iter()
        .map(|&(i, snr, t)| run_trial(&scenarios[i], i, snr, t, methods, models, protocol, seed))
        .collect();
    let mut out = Vec::with_capacity(jobs.len() * methods.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Per-(scenario, SNR, method) means of a numeric column.
pub fn mean_by<F>(records: &[MetricRecord], field: F) -> Vec<(String, f64, Method, f64)>
where
    F: Fn(&MetricRecord) -> Option<f64>,
{
    let mut acc: Vec<(String, f64, Method, f64, usize)> = Vec::new();
    for r in records {
        let Some(x) = field(r) else { continue };
        match acc
            .iter_mut()
            .find(|a| a.0 == r.scenario && a.1.to_bits() == r.snr_db.to_bits() && a.2 == r.method)
        {
            Some(a) => {
                a.3 += x;
                a.4 += 1;
            }
            None => acc.push((r.scenario.clone(), r.snr_db, r.method, x, 1)),
        }
    }
    acc.into_iter().map(|(s, snr, m, sum, n)| (s, snr, m, sum / n as f64)).collect()
}
