// Trains the JCE encoders on simulated pilots, then configures the RIS
// from the estimated channels.
//
// The default run is small and finishes in seconds; `--desk` trains the
// 4-antenna, 16-element scenario for a couple of minutes.

use ris_vi::channel::{ChannelModel, SystemConfig};
use ris_vi::elbo::PriorParams;
use ris_vi::harness::nmse;
use ris_vi::inference::{estimate_jce, train_amortized, EstimatorKind, HeadConstants, TrainConfig};
use ris_vi::phaseopt::{capacity, phases_icsi, PhaseConfig};
use ris_vi::seeds;
use ris_vi::signal::rx_train_jce;

#[derive(Debug)]
pub struct Outcome {
    pub estimated: f64,
    pub perfect: f64,
    pub random: f64,
    pub nmse_h: f64,
    pub nmse_g: f64,
}

pub fn run(cfg: &SystemConfig, tc: &TrainConfig, seed: u64, trials: u64) -> ris_vi::Result<Outcome> {
    let trained = train_amortized(EstimatorKind::Jce, cfg, tc, &PriorParams::default(), &HeadConstants::default(), seed)?;
    let pair = trained.pair;
    let model = ChannelModel::new(cfg.clone(), seed)?;
    let mut o = Outcome { estimated: 0.0, perfect: 0.0, random: 0.0, nmse_h: 0.0, nmse_g: 0.0 };
    for t in 0..trials {
        let mut rng = seeds::stream(seed, &[0xE7A1, t]);
        let real = model.gen_channels(&mut rng);
        let y = rx_train_jce(&real, &pair.plan, cfg.rho, &mut rng)?.y;
        let est = estimate_jce(&pair, &y)?;
        let v_est = phases_icsi(&est.g_hat, &est.h_hat)?;
        let v_opt = phases_icsi(&real.g, &real.h)?;
        o.estimated += capacity(&real.g, &v_est.v, &real.h, cfg.rho);
        o.perfect += capacity(&real.g, &v_opt.v, &real.h, cfg.rho);
        o.random += capacity(&real.g, &PhaseConfig::random(cfg.n, &mut rng).v, &real.h, cfg.rho);
        o.nmse_h += nmse(&est.h_hat, &real.h)?;
        o.nmse_g += nmse(est.g_hat.as_slice(), real.g.as_slice())?;
    }
    let k = trials as f64;
    for x in [&mut o.estimated, &mut o.perfect, &mut o.random, &mut o.nmse_h, &mut o.nmse_g] {
        *x /= k;
    }
    Ok(o)
}

pub fn small() -> (SystemConfig, TrainConfig) {
    let cfg = SystemConfig { m: 2, n: 4, n_p: 8, p: 1, q: 1, ..SystemConfig::default() }.with_snr_db(20.0);
    let tc = TrainConfig {
        dataset_size: 400,
        mc_samples: 20,
        initial_lr: 3e-4,
        max_steps: 150,
        batch_size: 16,
        eval_every: 10,
        ..TrainConfig::default()
    };
    (cfg, tc)
}

pub fn desk() -> (SystemConfig, TrainConfig) {
    let cfg = SystemConfig { m: 4, n: 16, n_p: 32, p: 1, q: 1, ..SystemConfig::default() }.with_snr_db(20.0);
    let tc = TrainConfig {
        dataset_size: 4000,
        mc_samples: 50,
        initial_lr: 3e-4,
        max_steps: 4000,
        batch_size: 32,
        eval_every: 20,
        ..TrainConfig::default()
    };
    (cfg, tc)
}

#[allow(dead_code)]
fn main() -> ris_vi::Result<()> {
    let (cfg, tc) = if std::env::args().any(|a| a == "--desk") { desk() } else { small() };
    let o = run(&cfg, &tc, 11, 20)?;
    println!("capacity [bit/s/Hz]: estimated {:.3}, perfect CSI {:.3}, random phases {:.3}", o.estimated, o.perfect, o.random);
    println!("NMSE(h) {:.3}, NMSE(G) {:.3}", o.nmse_h, o.nmse_g);
    Ok(())
}
