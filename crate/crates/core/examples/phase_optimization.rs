// Closed-form RIS phases from instantaneous and statistical CSI, compared
// with random phases and an exhaustive grid.

use ris_vi::channel::{ccm_ground_truth, ChannelModel, SystemConfig};
use ris_vi::phaseopt::{beam_gain, capacity, expected_gain, grid_search, phases_icsi, phases_scsi, PhaseConfig};
use ris_vi::seeds;

pub struct Outcome {
    /// Beam gain at the closed form and at the best grid point.
    pub icsi: (f64, f64),
    /// Expected gain at the closed form and at the best grid point.
    pub scsi: (f64, f64),
    /// Capacity with I-CSI phases and the mean over random phases.
    pub capacity: (f64, f64),
}

pub fn run(seed: u64) -> ris_vi::Result<Outcome> {
    let cfg = SystemConfig { m: 2, n: 4, p: 1, q: 1, ..SystemConfig::default() };
    let model = ChannelModel::new(cfg.clone(), seed)?;
    let mut rng = seeds::stream(seed, &[1]);
    let real = model.gen_channels(&mut rng);

    let v = phases_icsi(&real.g, &real.h)?;
    let (grid, _) = grid_search(cfg.n, 64, |w| beam_gain(&real.g, w, &real.h));

    let r_h = ccm_ground_truth(&real.h_paths, cfg.n);
    let s = phases_scsi(&real.g, &r_h)?;
    let (grid_s, _) = grid_search(cfg.n, 64, |w| expected_gain(&real.g, w, &r_h));

    let random: f64 = (0..1000)
        .map(|_| capacity(&real.g, &PhaseConfig::random(cfg.n, &mut rng).v, &real.h, cfg.rho))
        .sum::<f64>()
        / 1000.0;
    Ok(Outcome {
        icsi: (beam_gain(&real.g, &v.v, &real.h), grid),
        scsi: (expected_gain(&real.g, &s.v, &r_h), grid_s),
        capacity: (capacity(&real.g, &v.v, &real.h, cfg.rho), random),
    })
}

#[allow(dead_code)]
fn main() -> ris_vi::Result<()> {
    for seed in 0..3 {
        let o = run(seed)?;
        println!(
            "seed {seed}: I-CSI gain {:.4} (grid {:.4}), S-CSI gain {:.4} (grid {:.4}), capacity {:.3} vs random {:.3} bit/s/Hz",
            o.icsi.0, o.icsi.1, o.scsi.0, o.scsi.1, o.capacity.0, o.capacity.1
        );
    }
    Ok(())
}
