// Trains the JCCE encoders on a window of pilot blocks, estimates the
// UE-RIS covariance and the RIS-BS channel, and configures the RIS from
// statistical CSI.

use ris_vi::channel::{ccm_ground_truth, spectrum_of, AngleMode, ChannelModel, SystemConfig};
use ris_vi::elbo::PriorParams;
use ris_vi::harness::{eig_alignment, nmse_real};
use ris_vi::inference::{estimate_jcce, train_amortized, EstimatorKind, HeadConstants, TrainConfig};
use ris_vi::phaseopt::{capacity, phases_scsi, PhaseConfig};
use ris_vi::seeds;
use ris_vi::signal::rx_train_jcce_with;

#[derive(Debug)]
pub struct Outcome {
    pub alignment: f64,
    pub nmse_d: f64,
    /// Capacity with phases from the estimated and the true statistics,
    /// scored on fresh UE-RIS draws.
    pub estimated: f64,
    pub oracle: f64,
    pub random: f64,
}

pub fn run(cfg: &SystemConfig, tc: &TrainConfig, seed: u64, trials: u64) -> ris_vi::Result<Outcome> {
    let trained = train_amortized(EstimatorKind::Jcce, cfg, tc, &PriorParams::default(), &HeadConstants::default(), seed)?;
    let pair = trained.pair;
    let model = ChannelModel::new(cfg.clone(), seed)?;
    let mut o = Outcome { alignment: 0.0, nmse_d: 0.0, estimated: 0.0, oracle: 0.0, random: 0.0 };
    for t in 0..trials {
        let mut rng = seeds::stream(seed, &[0xCC0F, t]);
        let real = model.gen_channels(&mut rng);
        let r_h = ccm_ground_truth(&real.h_paths, cfg.n);
        let paths = real.h_paths.clone();
        let ytil = rx_train_jcce_with(&real.g, &pair.plan, cfg.rho, cfg.n_b, &mut rng, |r| model.redraw_h(&paths, r))?.y;
        let est = estimate_jcce(&pair, &ytil)?;
        o.alignment += eig_alignment(&est.r_h_hat, &r_h)?;
        o.nmse_d += nmse_real(&est.d_hat, &spectrum_of(&r_h)?)?;

        let h = model.redraw_h(&paths, &mut rng);
        let v_oracle = phases_scsi(&real.g, &r_h)?;
        o.oracle += capacity(&real.g, &v_oracle.v, &h, cfg.rho);
        let v_est = if est.d_hat.iter().any(|&d| d > 0.0) {
            phases_scsi(&est.g_hat, &est.r_h_hat)?
        } else {
            PhaseConfig::from_theta(&vec![0.0; cfg.n])
        };
        o.estimated += capacity(&real.g, &v_est.v, &h, cfg.rho);
        o.random += capacity(&real.g, &PhaseConfig::random(cfg.n, &mut rng).v, &h, cfg.rho);
    }
    let k = trials as f64;
    for x in [&mut o.alignment, &mut o.nmse_d, &mut o.estimated, &mut o.oracle, &mut o.random] {
        *x /= k;
    }
    Ok(o)
}

pub fn small() -> (SystemConfig, TrainConfig) {
    let cfg = SystemConfig { m: 2, n: 4, n_p: 2, n_b: 20, p: 1, q: 1, angle_mode: AngleMode::Mode2, ..SystemConfig::default() }
        .with_snr_db(20.0);
    let tc = TrainConfig {
        dataset_size: 200,
        mc_samples: 10,
        initial_lr: 3e-4,
        max_steps: 60,
        batch_size: 16,
        eval_every: 10,
        scsi_samples: 2,
        eval_scsi_samples: 4,
        ..TrainConfig::default()
    };
    (cfg, tc)
}

pub fn desk() -> (SystemConfig, TrainConfig) {
    let cfg = SystemConfig { m: 2, n: 16, n_p: 4, n_b: 100, q: 1, angle_mode: AngleMode::Mode2, ..SystemConfig::default() }
        .with_snr_db(20.0);
    let tc = TrainConfig {
        dataset_size: 2000,
        mc_samples: 50,
        initial_lr: 3e-4,
        max_steps: 600,
        batch_size: 32,
        eval_every: 20,
        scsi_samples: 4,
        eval_scsi_samples: 8,
        ..TrainConfig::default()
    };
    (cfg, tc)
}

#[allow(dead_code)]
fn main() -> ris_vi::Result<()> {
    let (cfg, tc) = if std::env::args().any(|a| a == "--desk") { desk() } else { small() };
    let o = run(&cfg, &tc, 21, 20)?;
    println!("top-eigenvector alignment {:.3}, NMSE(d) {:.3}", o.alignment, o.nmse_d);
    println!(
        "capacity [bit/s/Hz]: estimated statistics {:.3}, true statistics {:.3}, random phases {:.3}",
        o.estimated, o.oracle, o.random
    );
    Ok(())
}
