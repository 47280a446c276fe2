//! Training datasets: channel realizations with their simulated training
//! signals, generated from per-record seed streams and stored in a binary
//! record file.
//!
//! Layout (little-endian): magic `RISVIDS1`, version, estimator kind, the
//! dimensions `M, N, P, Q, N_p, N_b`, `ρ`, seed, a JSON config echo, the
//! pilot plan, the record count, then the records. Complex payloads are
//! interleaved real/imaginary doubles.

use std::path::Path;

use rayon::prelude::*;

use crate::channel::{ccm_ground_truth, spectrum_of, ChannelModel, SystemConfig};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::inference::EstimatorKind;
use crate::numerics::{ComplexMatrix, ComplexVector};
use crate::seeds;
use crate::signal::{rx_train_jce, rx_train_jcce_with, PilotPlan};

const MAGIC: &[u8; 8] = b"RISVIDS1";
const VERSION: u32 = 1;
const TAG_RECORD: u64 = 0xDA7A;

#[derive(Clone, Debug, PartialEq)]
pub struct JceRecord {
    pub h: ComplexVector,
    pub g: ComplexMatrix,
    /// M×N_p.
    pub y: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JcceRecord {
    pub g: ComplexMatrix,
    /// Ground-truth UE-RIS covariance.
    pub r_h: ComplexMatrix,
    /// Angular spectrum of `r_h`.
    pub d: Vec<f64>,
    /// (M·N_p)×N_b.
    pub ytil: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Records {
    Jce(Vec<JceRecord>),
    Jcce(Vec<JcceRecord>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Jce(r) => r.len(),
            Records::Jcce(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            Records::Jce(_) => EstimatorKind::Jce,
            Records::Jcce(_) => EstimatorKind::Jcce,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub cfg: SystemConfig,
    pub seed: u64,
    pub plan: PilotPlan,
    /// Resolved run configuration that produced the file (JSON).
    pub config_echo: String,
    pub records: Records,
}

/// One JCE record from its own seed stream.
pub fn jce_record(model: &ChannelModel, plan: &PilotPlan, seed: u64, index: usize) -> Result<JceRecord> {
    let mut rng = seeds::stream(seed, &[TAG_RECORD, 0, index as u64]);
    let real = model.gen_channels(&mut rng);
    let y = rx_train_jce(&real, plan, model.cfg.rho, &mut rng)?.y;
    Ok(JceRecord { h: real.h, g: real.g, y })
}

/// One JCCE record: a RIS-BS channel and UE-RIS directions held fixed over
/// `N_b` blocks, with fresh path gains in every block.
pub fn jcce_record(model: &ChannelModel, plan: &PilotPlan, seed: u64, index: usize) -> Result<JcceRecord> {
    let mut rng = seeds::stream(seed, &[TAG_RECORD, 1, index as u64]);
    let real = model.gen_channels(&mut rng);
    let r_h = ccm_ground_truth(&real.h_paths, model.cfg.n);
    let d = spectrum_of(&r_h)?;
    let paths = real.h_paths.clone();
    let ytil = rx_train_jcce_with(&real.g, plan, model.cfg.rho, model.cfg.n_b, &mut rng, |r| {
        model.redraw_h(&paths, r)
    })?
    .y;
    Ok(JcceRecord { g: real.g, r_h, d, ytil })
}

/// Generates `count` records in parallel; record `i` depends only on
/// `(seed, i)`.
pub fn generate(
    kind: EstimatorKind,
    cfg: &SystemConfig,
    seed: u64,
    plan: &PilotPlan,
    count: usize,
    config_echo: String,
) -> Result<Dataset> {
    let model = ChannelModel::new(cfg.clone(), seed)?;
    if plan.n() != cfg.n || plan.n_p() != cfg.n_p {
        return Err(Error::dim("pilot plan does not match the scenario"));
    }
    let records = match kind {
        EstimatorKind::Jce => Records::Jce(
            (0..count)
                .into_par_iter()
                .map(|i| jce_record(&model, plan, seed, i))
                .collect::<Result<_>>()?,
        ),
        EstimatorKind::Jcce => Records::Jcce(
            (0..count)
                .into_par_iter()
                .map(|i| jcce_record(&model, plan, seed, i))
                .collect::<Result<_>>()?,
        ),
    };
    Ok(Dataset {
        cfg: cfg.clone(),
        seed,
        plan: plan.clone(),
        config_echo,
        records,
    })
}

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(MAGIC);
        e.u32(VERSION);
        e.u8(self.records.kind().code());
        let c = &self.cfg;
        for d in [c.m, c.n, c.p, c.q, c.n_p, c.n_b] {
            e.usize(d);
        }
        e.f64(c.rho);
        e.u64(self.seed);
        e.str(&serde_json::to_string(c).expect("config serializes"));
        e.str(&self.config_echo);
        e.matrix(&self.plan.phi);
        e.c64s(&self.plan.x);
        e.usize(self.records.len());
        match &self.records {
            Records::Jce(rs) => {
                for r in rs {
                    e.c64s(&r.h);
                    e.matrix(&r.g);
                    e.matrix(&r.y);
                }
            }
            Records::Jcce(rs) => {
                for r in rs {
                    e.matrix(&r.g);
                    e.matrix(&r.r_h);
                    e.f64s(&r.d);
                    e.matrix(&r.ytil);
                }
            }
        }
        e.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        d.expect(MAGIC)?;
        let version = d.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("dataset version {version}, expected {VERSION}")));
        }
        let kind = EstimatorKind::from_code(d.u8()?)?;
        let mut dims = [0usize; 6];
        for x in &mut dims {
            *x = d.usize()?;
        }
        let rho = d.f64()?;
        let seed = d.u64()?;
        let cfg: SystemConfig =
            serde_json::from_str(&d.str()?).map_err(|e| Error::Format(format!("scenario header: {e}")))?;
        let [m, n, p, q, n_p, n_b] = dims;
        if [cfg.m, cfg.n, cfg.p, cfg.q, cfg.n_p, cfg.n_b] != dims || cfg.rho.to_bits() != rho.to_bits() {
            return Err(Error::Format("dimension header disagrees with the scenario echo".into()));
        }
        let config_echo = d.str()?;
        let plan = PilotPlan::from_parts(d.matrix()?, d.c64s()?).map_err(|e| Error::Format(e.to_string()))?;
        if plan.n() != n || plan.n_p() != n_p {
            return Err(Error::Format("pilot plan shape disagrees with the header".into()));
        }
        let count = d.usize()?;
        let shape = |mat: &ComplexMatrix, want: (usize, usize), what: &str| {
            if mat.shape() == want {
                Ok(())
            } else {
                Err(Error::Format(format!("{what} has shape {:?}, expected {want:?}", mat.shape())))
            }
        };
        let records = match kind {
            EstimatorKind::Jce => {
                let mut rs = Vec::new();
                for _ in 0..count {
                    let h = d.c64s()?;
                    let g = d.matrix()?;
                    let y = d.matrix()?;
                    if h.len() != n {
                        return Err(Error::Format("h length disagrees with the header".into()));
                    }
                    shape(&g, (m, n), "G")?;
                    shape(&y, (m, n_p), "Y")?;
                    rs.push(JceRecord { h, g, y });
                }
                Records::Jce(rs)
            }
            EstimatorKind::Jcce => {
                let mut rs = Vec::new();
                for _ in 0..count {
                    let g = d.matrix()?;
                    let r_h = d.matrix()?;
                    let dd = d.f64s()?;
                    let ytil = d.matrix()?;
                    shape(&g, (m, n), "G")?;
                    shape(&r_h, (n, n), "R_h")?;
                    shape(&ytil, (m * n_p, n_b), "Ỹ")?;
                    if dd.len() != n {
                        return Err(Error::Format("spectrum length disagrees with the header".into()));
                    }
                    rs.push(JcceRecord { g, r_h, d: dd, ytil });
                }
                Records::Jcce(rs)
            }
        };
        if !d.is_empty() {
            return Err(Error::Format("trailing bytes after the last record".into()));
        }
        let _ = (p, q);
        Ok(Self {
            cfg,
            seed,
            plan,
            config_echo,
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// Errors unless the stored scenario has the same shape as `cfg`.
    pub fn check_shape(&self, cfg: &SystemConfig) -> Result<()> {
        let a = &self.cfg;
        if (a.m, a.n, a.p, a.q, a.n_p, a.n_b) != (cfg.m, cfg.n, cfg.p, cfg.q, cfg.n_p, cfg.n_b) {
            return Err(Error::Config(format!(
                "dataset shape (M={}, N={}, N_p={}, N_b={}) does not match the scenario (M={}, N={}, N_p={}, N_b={})",
                a.m, a.n, a.n_p, a.n_b, cfg.m, cfg.n, cfg.n_p, cfg.n_b
            )));
        }
        Ok(())
    }
}
