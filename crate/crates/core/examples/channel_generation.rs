// Draws RIS channels in both angle modes and shows how sparse they are in
// the angular domain.
//
// ```bash
// cargo run --release --example channel_generation
// ```

use ris_vi::channel::{ccm_ground_truth, spectrum_of, to_angular, AngleMode, ChannelModel, SystemConfig};
use ris_vi::seeds;

/// Share of the UE-RIS channel energy in its strongest angular bin,
/// averaged over draws, for Mode1 and Mode2.
pub fn run(draws: u64) -> ris_vi::Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for (slot, mode) in [AngleMode::Mode1, AngleMode::Mode2].into_iter().enumerate() {
        let cfg = SystemConfig { m: 4, n: 16, p: 2, q: 1, angle_mode: mode, ..SystemConfig::default() };
        let model = ChannelModel::new(cfg.clone(), 3)?;
        let mut acc = 0.0;
        for i in 0..draws {
            let mut rng = seeds::stream(3, &[i]);
            let real = model.gen_channels(&mut rng);
            let (h_vir, _) = to_angular(&real.h, &real.g);
            let energy: Vec<f64> = h_vir.iter().map(|z| z.norm_sqr()).collect();
            let total: f64 = energy.iter().sum();
            acc += energy.iter().cloned().fold(0.0, f64::max) / total;

            // the ground-truth covariance carries the same angular profile
            let d = spectrum_of(&ccm_ground_truth(&real.h_paths, cfg.n))?;
            debug_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        out[slot] = acc / draws as f64;
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> ris_vi::Result<()> {
    let [m1, m2] = run(200)?;
    println!("strongest angular bin holds {:.1}% (Mode1) / {:.1}% (Mode2) of |h|²", 100.0 * m1, 100.0 * m2);
    if let Some(layout) = ChannelModel::new(SystemConfig { angle_mode: AngleMode::Mode2, ..SystemConfig::default() }, 3)?.layout {
        println!("Mode2 azimuth sub-intervals: {:?}", layout.azimuth);
    }
    Ok(())
}
