use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ris_vi::checkpoint;
use ris_vi::config::{artifact_stem, RunConfig};
use ris_vi::dataset::{self, Dataset};
use ris_vi::harness::{self, Method, MetricRecord, ModelStore};
use ris_vi::inference::{scenario_plan, train_on, EncoderPair, EstimatorKind};
use ris_vi::{Error, Result};

#[derive(Parser)]
#[command(name = "ris-vi", version, about = "RIS-aided mmWave link simulator with variational channel estimators")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON). Omitted means all defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "RIS_VI_THREADS")]
    threads: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a training dataset for one estimator at one SNR.
    GenData(Target),
    /// Train an encoder pair on a dataset and write its checkpoint.
    Train {
        #[command(flatten)]
        target: Target,
        /// Dataset file; defaults to the one gen-data writes.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Monte-Carlo evaluation over the configured SNRs and methods.
    Sweep {
        /// Comma-separated methods, overriding the config.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Comma-separated SNRs in dB, overriding the config.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr_db: Option<Vec<f64>>,
        /// Directory holding checkpoints; defaults to the config's.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Per-(scenario, SNR, method) means of a sweep CSV.
    Report {
        /// Sweep CSV; defaults to the one sweep writes.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Target {
    /// Estimator, JCE or JCCE; overrides the config.
    #[arg(long)]
    kind: Option<EstimatorKind>,
    /// Training SNR in dB; overrides the config.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingArtifact(_) => 3,
        Error::NumericalFailure { .. } | Error::TrainingFailure { .. } | Error::Domain(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.common.out {
        cfg.out = o.to_string_lossy().into_owned();
    }
    match &cli.cmd {
        Cmd::GenData(t) | Cmd::Train { target: t, .. } => {
            if let Some(k) = t.kind {
                cfg.kind = k;
            }
            if let Some(db) = t.snr_db {
                cfg.scenario = cfg.scenario.clone().with_snr_db(db);
            }
        }
        Cmd::Sweep { methods, snr_db, checkpoints } => {
            if let Some(m) = methods {
                cfg.sweep.methods = m.clone();
            }
            if let Some(s) = snr_db {
                cfg.sweep.snr_db = s.clone();
            }
            if let Some(c) = checkpoints {
                cfg.checkpoints = Some(c.to_string_lossy().into_owned());
            }
        }
        Cmd::Report { .. } => {}
    }
    cfg.validate()?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let out = PathBuf::from(&cfg.out);
    fs::create_dir_all(&out).map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    match cli.cmd {
        Cmd::GenData(_) => gen_data(&cfg, &out),
        Cmd::Train { dataset, .. } => train(&cfg, &out, dataset),
        Cmd::Sweep { .. } => sweep(&cfg, &out),
        Cmd::Report { input } => report(&cfg, &out, input),
    }
}

/// Writes the resolved config next to an output file.
fn sidecar(cfg: &RunConfig, output: &Path) -> Result<()> {
    let mut name = output.as_os_str().to_owned();
    name.push(".config.json");
    write(Path::new(&name), cfg.to_json().as_bytes())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn stem(cfg: &RunConfig) -> String {
    cfg.artifact_stem(cfg.kind, cfg.scenario.snr_db())
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = out.join(format!("{}.data", stem(cfg)));
    sidecar(cfg, &path)?;
    let plan = scenario_plan(&cfg.scenario, cfg.seed);
    let ds = dataset::generate(cfg.kind, &cfg.scenario, cfg.seed, &plan, cfg.train.dataset_size, cfg.to_json())?;
    write(&path, &ds.to_bytes())?;
    eprintln!("wrote {} ({} records)", path.display(), ds.records.len());
    Ok(())
}

fn train(cfg: &RunConfig, out: &Path, dataset: Option<PathBuf>) -> Result<()> {
    let stem = stem(cfg);
    let ckpt = out.join(format!("{stem}.ckpt"));
    sidecar(cfg, &ckpt)?;
    let ds_path = dataset.unwrap_or_else(|| out.join(format!("{stem}.data")));
    let ds = Dataset::read(&ds_path)?;
    if ds.cfg != cfg.scenario {
        return Err(Error::Config(format!(
            "dataset {} was generated for a different scenario or SNR",
            ds_path.display()
        )));
    }
    if ds.seed != cfg.seed {
        return Err(Error::Config(format!(
            "dataset {} was generated with seed {}, the run uses {}",
            ds_path.display(),
            ds.seed,
            cfg.seed
        )));
    }
    if ds.records.kind() != cfg.kind {
        return Err(Error::Config(format!(
            "dataset {} holds {} records, training {}",
            ds_path.display(),
            ds.records.kind().name(),
            cfg.kind.name()
        )));
    }
    let pair = EncoderPair::init(cfg.kind, &cfg.scenario, cfg.seed, ds.plan.clone(), &cfg.heads, cfg.train.initial_lr)?;
    let outcome = train_on(pair, &ds, &cfg.prior, &cfg.train)?;
    let mut curve = String::from("step,train_elbo,holdout_elbo\n");
    for p in &outcome.curve {
        curve.push_str(&format!("{},{},{}\n", p.step, p.train_elbo, p.holdout_elbo));
    }
    write(&out.join(format!("{stem}_curve.csv")), curve.as_bytes())?;
    checkpoint::write(&outcome.pair, &ckpt)?;
    let last = outcome.curve.last().map(|p| p.holdout_elbo).unwrap_or(f64::NAN);
    eprintln!("wrote {} (step {}, holdout ELBO {last})", ckpt.display(), outcome.pair.step);
    Ok(())
}

fn sweep_path(cfg: &RunConfig, out: &Path) -> PathBuf {
    out.join(format!("{}_sweep.csv", cfg.scenario_id))
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = sweep_path(cfg, out);
    sidecar(cfg, &path)?;
    let dir = PathBuf::from(cfg.checkpoints.as_deref().unwrap_or(&cfg.out));
    let mut models = ModelStore::default();
    let kinds: Vec<EstimatorKind> = {
        let mut k: Vec<_> = cfg.sweep.methods.iter().filter_map(|m| m.learned()).collect();
        k.sort();
        k.dedup();
        k
    };
    for &snr in &cfg.sweep.snr_db {
        for &kind in &kinds {
            let file = dir.join(format!("{}.ckpt", artifact_stem(&cfg.scenario_id, kind, snr)));
            let pair = checkpoint::read(&file).map_err(|e| match e {
                Error::MissingArtifact(_) => Error::MissingArtifact(format!(
                    "scenario '{}' has no {} checkpoint at {snr} dB (expected {})",
                    cfg.scenario_id,
                    kind.name(),
                    file.display()
                )),
                other => other,
            })?;
            models.insert(&cfg.scenario_id, snr, pair);
        }
    }
    let records = harness::run_sweep(
        &[cfg.scenario_entry()],
        &cfg.sweep.snr_db,
        cfg.sweep.trials,
        &cfg.sweep.methods,
        &models,
        &cfg.protocol,
        cfg.seed,
    )?;
    let mut buf = Vec::new();
    harness::write_csv(&records, &mut buf)?;
    write(&path, &buf)?;
    eprintln!("wrote {} ({} rows)", path.display(), records.len());
    Ok(())
}

fn report(cfg: &RunConfig, out: &Path, input: Option<PathBuf>) -> Result<()> {
    let input = input.unwrap_or_else(|| sweep_path(cfg, out));
    let text = fs::read_to_string(&input)
        .map_err(|_| Error::MissingArtifact(format!("sweep output {}", input.display())))?;
    let records = harness::read_csv(&text)?;
    let path = out.join(format!("{}_report.csv", cfg.scenario_id));
    sidecar(cfg, &path)?;
    let text = summarize(&records);
    print!("{text}");
    write(&path, text.as_bytes())
}

fn summarize(records: &[MetricRecord]) -> String {
    type Field = fn(&MetricRecord) -> Option<f64>;
    let fields: [Field; 6] = [
        |r| Some(r.capacity),
        |r| Some(r.effective_capacity),
        |r| r.nmse_h,
        |r| r.nmse_g,
        |r| r.nmse_d,
        |r| r.eig_alignment,
    ];
    let means: Vec<_> = fields.iter().map(|f| harness::mean_by(records, f)).collect();
    let mut s = String::from("scenario,snr_db,method,trials,capacity,effective_capacity,nmse_h,nmse_G,nmse_d,eig_alignment\n");
    for (sc, snr, method, _) in &harness::mean_by(records, |r| Some(r.capacity)) {
        let count = records
            .iter()
            .filter(|r| &r.scenario == sc && r.snr_db.to_bits() == snr.to_bits() && r.method == *method)
            .count();
        s.push_str(&format!("{sc},{snr},{},{count}", method.name()));
        for m in &means {
            let v = m
                .iter()
                .find(|(a, b, c, _)| a == sc && b.to_bits() == snr.to_bits() && c == method)
                .map(|x| x.3.to_string())
                .unwrap_or_default();
            s.push(',');
            s.push_str(&v);
        }
        s.push('\n');
    }
    s
}
