// The full artifact path without the CLI: dataset → training → checkpoint
// file → sweep with the reloaded model.

use ris_vi::channel::SystemConfig;
use ris_vi::checkpoint;
use ris_vi::dataset;
use ris_vi::elbo::PriorParams;
use ris_vi::harness::{mean_by, run_sweep, Method, MetricRecord, ModelStore, ProtocolSpec, Scenario};
use ris_vi::inference::{scenario_plan, train_on, EncoderPair, EstimatorKind, HeadConstants, TrainConfig};

pub fn run(dir: &std::path::Path) -> ris_vi::Result<Vec<MetricRecord>> {
    let seed = 4;
    let snr = 20.0;
    let cfg = SystemConfig { m: 2, n: 4, n_p: 6, p: 1, q: 1, ..SystemConfig::default() }.with_snr_db(snr);
    let tc = TrainConfig { dataset_size: 200, mc_samples: 10, initial_lr: 3e-4, max_steps: 60, batch_size: 16, ..TrainConfig::default() };

    let plan = scenario_plan(&cfg, seed);
    let ds = dataset::generate(EstimatorKind::Jce, &cfg, seed, &plan, tc.dataset_size, String::new())?;
    let data_path = dir.join("example.data");
    ds.write(&data_path)?;

    let ds = dataset::Dataset::read(&data_path)?;
    let pair = EncoderPair::init(EstimatorKind::Jce, &cfg, seed, ds.plan.clone(), &HeadConstants::default(), tc.initial_lr)?;
    let trained = train_on(pair, &ds, &PriorParams::default(), &tc)?;
    let ckpt = dir.join("example.ckpt");
    checkpoint::write(&trained.pair, &ckpt)?;

    let mut models = ModelStore::default();
    models.insert("example", snr, checkpoint::read(&ckpt)?);
    let scenario = Scenario { id: "example".into(), cfg, seed };
    run_sweep(
        &[scenario],
        &[snr],
        10,
        &[Method::Jce, Method::PerfectCsi, Method::RandomPhase],
        &models,
        &ProtocolSpec::default(),
        seed,
    )
}

#[allow(dead_code)]
fn main() -> ris_vi::Result<()> {
    let dir = std::env::temp_dir().join("ris_vi_trained_sweep");
    std::fs::create_dir_all(&dir)?;
    let records = run(&dir)?;
    for (_, snr, method, c) in mean_by(&records, |r| Some(r.capacity)) {
        println!("{snr} dB {:<13} {c:.3} bit/s/Hz", method.name());
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}
