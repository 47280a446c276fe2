// Monte-Carlo SNR sweep of the baselines that need no training, with the
// pilot-overhead discount of each protocol.

use ris_vi::channel::SystemConfig;
use ris_vi::harness::{mean_by, overhead_fraction, run_sweep, write_csv, Method, ModelStore, ProtocolSpec, Scenario};
use ris_vi::inference::EstimatorKind;

pub fn run(trials: usize) -> ris_vi::Result<Vec<(f64, Method, f64, f64)>> {
    let cfg = SystemConfig { m: 4, n: 16, n_p: 4, n_b: 200, p: 3, q: 1, ..SystemConfig::default() };
    let scenario = Scenario { id: "sweep".into(), cfg, seed: 2 };
    let methods = [Method::PerfectCsi, Method::PcPcov, Method::RandomPhase];
    let records = run_sweep(
        &[scenario],
        &[-10.0, 0.0, 10.0, 20.0],
        trials,
        &methods,
        &ModelStore::default(),
        &ProtocolSpec::default(),
        2,
    )?;
    if std::env::var_os("SWEEP_CSV").is_some() {
        write_csv(&records, std::io::stdout().lock())?;
    }
    let cap = mean_by(&records, |r| Some(r.capacity));
    let eff = mean_by(&records, |r| Some(r.effective_capacity));
    Ok(cap.into_iter().zip(eff).map(|(c, e)| (c.1, c.2, c.3, e.3)).collect())
}

#[allow(dead_code)]
fn main() -> ris_vi::Result<()> {
    let p = ProtocolSpec::default();
    let cfg = SystemConfig { n_p: 4, n_b: 200, ..SystemConfig::default() };
    println!(
        "pilot overhead: per-block training {:.3}, two-timescale training {:.3}",
        overhead_fraction(&p, EstimatorKind::Jce, &cfg),
        overhead_fraction(&p, EstimatorKind::Jcce, &cfg)
    );
    println!("{:>7} {:<13} {:>9} {:>9}", "SNR dB", "method", "C", "C_eff");
    for (snr, m, c, e) in run(50)? {
        println!("{snr:>7} {:<13} {c:>9.3} {e:>9.3}", m.name());
    }
    Ok(())
}
