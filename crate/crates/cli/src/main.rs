//! `pulseauth`: end-to-end pipeline driver — ingest/synthesize signals,
//! preprocess, train, evaluate, run studies, and serve the live gateway.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use pulseauth_core::dataset::{
    build_dataset, load_manifest, save_manifest, stratified_split, Dataset, DatasetFilter,
    SplitSpec, WINDOW_OVERLAP, WINDOW_SECONDS,
};
use pulseauth_core::metrics::{build_scores, compute_report, roc_curve_csv};
use pulseauth_core::nn::ModelConfig;
use pulseauth_core::signal::{bandpass, load_csv, resample, write_csv, Activity, SignalRecord};
use pulseauth_core::stream::{gateway_serve, simulate_device, GatewayConfig, SessionConfig};
use pulseauth_core::study::{
    benchmark_cohort, compare_conditions, lag_cohort, power_estimate, sweep_rates, Condition,
    PowerModel,
};
use pulseauth_core::train::{
    evaluate, load_checkpoint, save_checkpoint, train, TrainConfig,
};

#[derive(Parser)]
#[command(name = "pulseauth", version, about = "Continuous authentication from 25 Hz pulse signals")]
struct Cli {
    /// JSON config file with optional `model`, `train`, `session`, `split` sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override every seeded operation (synthesis, splits, training)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a raw CSV into a windowed dataset manifest
    Ingest(IngestArgs),
    /// Generate a synthetic subject cohort
    Synth(SynthArgs),
    /// Record-level conditioning: band-pass and/or resample a CSV
    Preprocess(PreprocessArgs),
    /// Train the classifier on a dataset manifest
    Train(TrainArgs),
    /// Evaluate a checkpoint and emit a metrics report
    Eval(EvalArgs),
    /// Sampling-rate sweep: resample, retrain, and compare rates
    Sweep(SweepArgs),
    /// Paired condition comparison (channel ablation or activity diversity)
    Compare(CompareArgs),
    /// Sensor power draw at a sampling rate (mW)
    Power(PowerArgs),
    /// Run the streaming authentication gateway
    Serve(ServeArgs),
    /// Replay a recording to a gateway as a simulated device
    Simulate(SimulateArgs),
}

/// Optional config-file sections; CLI flags override these, which override
/// the built-in defaults.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    model: ModelOverrides,
    train: Option<TrainConfig>,
    session: Option<SessionConfig>,
    split: Option<SplitSpec>,
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct ModelOverrides {
    hidden_dim: Option<usize>,
    num_layers: Option<usize>,
    dropout_rate: Option<f64>,
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let raw = std::fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            Ok(serde_json::from_slice(&raw).context("parsing config JSON")?)
        }
    }
}

fn tensors_path(manifest: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| manifest.with_extension("bin"))
}

#[derive(Args)]
struct IngestArgs {
    /// Raw CSV (`timestamp,green1,green2,red,infrared,subject,activity`)
    #[arg(long)]
    input: PathBuf,
    /// Dataset manifest to write (tensor sidecar goes next to it as .bin)
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    tensors: Option<PathBuf>,
    /// Skip the 0.5-12 Hz band-pass (already-filtered input)
    #[arg(long)]
    no_bandpass: bool,
    #[arg(long, default_value_t = WINDOW_SECONDS)]
    window_s: f64,
    #[arg(long, default_value_t = WINDOW_OVERLAP)]
    overlap: f64,
}

fn run_ingest(args: &IngestArgs) -> Result<()> {
    let records = load_csv(&args.input)?;
    let processed: Vec<SignalRecord> = if args.no_bandpass {
        records
    } else {
        records.iter().map(bandpass).collect::<Result<_, _>>()?
    };
    let ds = build_dataset(&processed, args.window_s, args.overlap)?;
    let tensors = tensors_path(&args.output, &args.tensors);
    save_manifest(&ds, &args.output, &tensors)?;
    println!(
        "ingested {} records -> {} windows, {} classes -> {}",
        processed.len(),
        ds.len(),
        ds.class_count,
        args.output.display()
    );
    Ok(())
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    subjects: usize,
    /// Minutes of signal per subject (mixed rest/walk/type)
    #[arg(long, default_value_t = 20.0)]
    minutes: f64,
    #[arg(long, default_value_t = 25.0)]
    rate: f64,
    /// benchmark: morphology-distinct subjects; lag: identity only in
    /// cross-channel lags and ratios
    #[arg(long, default_value = "benchmark")]
    cohort: String,
    /// Write a preprocessed dataset manifest here
    #[arg(long)]
    out_manifest: Option<PathBuf>,
    /// Write the raw (unfiltered) records as CSV here
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

fn run_synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let records = match args.cohort.as_str() {
        "benchmark" => benchmark_cohort(args.subjects, args.minutes, args.rate, seed)?,
        "lag" => lag_cohort(args.subjects, args.minutes, args.rate, seed)?,
        other => bail!("unknown cohort `{other}` (use benchmark or lag)"),
    };
    if args.out_manifest.is_none() && args.out_csv.is_none() {
        bail!("nothing to do: pass --out-manifest and/or --out-csv");
    }
    if let Some(csv) = &args.out_csv {
        write_csv(&records, csv)?;
        println!("wrote {} records to {}", records.len(), csv.display());
    }
    if let Some(manifest) = &args.out_manifest {
        let filtered: Vec<SignalRecord> =
            records.iter().map(bandpass).collect::<Result<_, _>>()?;
        let ds = build_dataset(&filtered, WINDOW_SECONDS, WINDOW_OVERLAP)?;
        save_manifest(&ds, manifest, &tensors_path(manifest, &None))?;
        println!(
            "wrote {} windows over {} classes to {}",
            ds.len(),
            ds.class_count,
            manifest.display()
        );
    }
    Ok(())
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Apply the 0.5-12 Hz band-pass
    #[arg(long)]
    bandpass: bool,
    /// Downsample to this rate after any filtering
    #[arg(long)]
    target_rate: Option<f64>,
}

fn run_preprocess(args: &PreprocessArgs) -> Result<()> {
    let mut records = load_csv(&args.input)?;
    if args.bandpass {
        records = records.iter().map(bandpass).collect::<Result<_, _>>()?;
    }
    if let Some(rate) = args.target_rate {
        records = records.iter().map(|r| resample(r, rate)).collect::<Result<_, _>>()?;
    }
    write_csv(&records, &args.output)?;
    println!("wrote {} records to {}", records.len(), args.output.display());
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    tensors: Option<PathBuf>,
    /// Checkpoint output path
    #[arg(long)]
    output: PathBuf,
    /// Per-epoch metrics CSV
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

fn resolve_model_config(
    ds: &Dataset,
    overrides: ModelOverrides,
    args_hidden: Option<usize>,
    args_layers: Option<usize>,
    args_dropout: Option<f64>,
) -> ModelConfig {
    let w = &ds.windows[0];
    let mut cfg = ModelConfig::new(w.channels, w.t_steps, ds.class_count);
    if let Some(h) = args_hidden.or(overrides.hidden_dim) {
        cfg = cfg.with_hidden(h);
    }
    if let Some(l) = args_layers.or(overrides.num_layers) {
        cfg = cfg.with_layers(l);
    }
    if let Some(d) = args_dropout.or(overrides.dropout_rate) {
        cfg = cfg.with_dropout(d);
    }
    cfg
}

fn resolve_train_config(file: &FileConfig, seed: Option<u64>, args: &TrainArgs) -> TrainConfig {
    let mut tc = file.train.clone().unwrap_or_default();
    if let Some(e) = args.max_epochs {
        tc.max_epochs = e;
    }
    if let Some(b) = args.batch_size {
        tc.batch_size = b;
    }
    if let Some(s) = seed {
        tc.seed = s;
    }
    tc
}

fn resolve_split(file: &FileConfig, seed: Option<u64>) -> SplitSpec {
    let mut split = file.split.clone().unwrap_or_else(|| SplitSpec::new(0.6, 0.2, 0.2, 0));
    if let Some(s) = seed {
        split.seed = s;
    }
    split
}

fn run_train(args: &TrainArgs, file: &FileConfig, seed: Option<u64>) -> Result<()> {
    let ds = load_manifest(&args.dataset, tensors_path(&args.dataset, &args.tensors))?;
    let model_cfg = resolve_model_config(&ds, file.model, args.hidden, args.layers, args.dropout);
    let train_cfg = resolve_train_config(file, seed, args);
    let split = resolve_split(file, seed);
    let (train_set, val_set, test_set) = stratified_split(&ds, &split)?;
    println!(
        "training on {} windows (val {}, test {}), {} classes, {} parameters",
        train_set.len(),
        val_set.len(),
        test_set.len(),
        ds.class_count,
        model_cfg.param_count()
    );
    let (params, history) = train(&model_cfg, &train_cfg, &train_set, &val_set)?;
    let test_eval = evaluate(&params, &test_set)?;
    let best_val =
        history.epochs.iter().map(|e| e.val_acc).fold(f64::NEG_INFINITY, f64::max);
    let metadata = serde_json::json!({
        "epochs": history.epochs.len(),
        "best_val_acc": best_val,
        "test_acc": test_eval.accuracy,
        "split_seed": split.seed,
        "train_seed": train_cfg.seed,
    });
    save_checkpoint(&params, &ds.label_names, metadata, &args.output)?;
    if let Some(h) = &args.history {
        std::fs::write(h, history.to_csv())?;
    }
    println!(
        "done: {} epochs, best val acc {:.4}, test acc {:.4} -> {}",
        history.epochs.len(),
        if best_val.is_finite() { best_val } else { f64::NAN },
        test_eval.accuracy,
        args.output.display()
    );
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    tensors: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Metrics report JSON output
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for per-class ROC CSVs
    #[arg(long)]
    roc_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    /// Evaluate `all` windows or only the seeded `test` split
    #[arg(long, default_value = "all")]
    split: String,
}

fn run_eval(args: &EvalArgs, file: &FileConfig, seed: Option<u64>) -> Result<()> {
    let ds = load_manifest(&args.dataset, tensors_path(&args.dataset, &args.tensors))?;
    let ds = match args.split.as_str() {
        "all" => ds,
        "test" => stratified_split(&ds, &resolve_split(file, seed))?.2,
        other => bail!("unknown --split `{other}` (use all or test)"),
    };
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let eval = evaluate(&ckpt.params, &ds)?;
    let report = compute_report(&eval.predictions, ds.class_count, args.threshold)?;
    println!(
        "accuracy {:.4}  macro-F1 {:.4}  FAR {:.4}  FRR {:.4}  EER {:.4} @ {:.4}",
        report.accuracy, report.macro_f1, report.far, report.frr, report.eer, report.eer_threshold
    );
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        println!("report -> {}", path.display());
    }
    if let Some(dir) = &args.roc_dir {
        std::fs::create_dir_all(dir)?;
        let scores = build_scores(&eval.predictions, ds.class_count);
        for (c, score_set) in scores.per_class.iter().enumerate() {
            let name = ds.label_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            std::fs::write(dir.join(format!("roc_{name}.csv")), roc_curve_csv(score_set)?)?;
        }
        println!("ROC curves -> {}", dir.display());
    }
    Ok(())
}

#[derive(Args)]
struct SweepArgs {
    /// Source CSV at the highest rate
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated target rates, e.g. 100,25,5
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

fn run_sweep(args: &SweepArgs, file: &FileConfig, seed: Option<u64>) -> Result<()> {
    let records = load_csv(&args.input)?;
    let mut model = ModelConfig::new(4, 100, 2); // seq_len/classes recomputed per rate
    if let Some(h) = args.hidden.or(file.model.hidden_dim) {
        model = model.with_hidden(h);
    }
    if let Some(l) = args.layers.or(file.model.num_layers) {
        model = model.with_layers(l);
    }
    if let Some(d) = file.model.dropout_rate {
        model = model.with_dropout(d);
    }
    let mut train_cfg = file.train.clone().unwrap_or_default();
    if let Some(e) = args.max_epochs {
        train_cfg.max_epochs = e;
    }
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    let split = resolve_split(file, seed);
    let report = sweep_rates(&records, &args.rates, &model, &train_cfg, &split)?;
    for row in &report.rows {
        println!(
            "{:>7.1} Hz  acc {:.4}  F1 {:.4}  EER {:.4}  {:.1} min  {} mW",
            row.sampling_rate_hz,
            row.test_accuracy,
            row.macro_f1,
            row.eer,
            row.train_minutes,
            row.estimated_power_mw.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into()),
        );
    }
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(path) = &args.csv {
        std::fs::write(path, report.to_csv())?;
    }
    Ok(())
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    tensors: Option<PathBuf>,
    /// `channels` (4-channel vs green1-only) or `activities`
    /// (activity-diverse vs rest-only training)
    #[arg(long)]
    mode: String,
    /// Restrict the shared evaluation windows to these activities
    #[arg(long, value_delimiter = ',')]
    eval_activities: Vec<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

fn run_compare(args: &CompareArgs, file: &FileConfig, seed: Option<u64>) -> Result<()> {
    let ds = load_manifest(&args.dataset, tensors_path(&args.dataset, &args.tensors))?;
    let (cond_a, cond_b) = match args.mode.as_str() {
        "channels" => (
            Condition { name: "multi-channel".into(), filter: DatasetFilter::default() },
            Condition { name: "green1-only".into(), filter: DatasetFilter::channels(vec![0]) },
        ),
        "activities" => (
            Condition { name: "activity-diverse".into(), filter: DatasetFilter::default() },
            Condition {
                name: "rest-only".into(),
                filter: DatasetFilter::activities(vec![Activity::Rest]),
            },
        ),
        other => bail!("unknown --mode `{other}` (use channels or activities)"),
    };
    let eval_filter = if args.eval_activities.is_empty() {
        None
    } else {
        Some(DatasetFilter::activities(
            args.eval_activities.iter().map(|s| Activity::from(s.clone())).collect(),
        ))
    };
    let w = &ds.windows[0];
    let mut model = ModelConfig::new(w.channels, w.t_steps, ds.class_count);
    if let Some(h) = args.hidden.or(file.model.hidden_dim) {
        model = model.with_hidden(h);
    }
    if let Some(l) = args.layers.or(file.model.num_layers) {
        model = model.with_layers(l);
    }
    let mut train_cfg = file.train.clone().unwrap_or_default();
    if let Some(e) = args.max_epochs {
        train_cfg.max_epochs = e;
    }
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    let split = resolve_split(file, seed);
    let report =
        compare_conditions(&ds, &cond_a, &cond_b, eval_filter.as_ref(), &model, &train_cfg, &split)?;
    println!(
        "{}: acc {:.4} F1 {:.4} EER {:.4}\n{}: acc {:.4} F1 {:.4} EER {:.4}\ndelta: acc {:+.4} F1 {:+.4} EER {:+.4}",
        report.a.name, report.a.accuracy, report.a.macro_f1, report.a.eer,
        report.b.name, report.b.accuracy, report.b.macro_f1, report.b.eer,
        report.delta_accuracy, report.delta_macro_f1, report.delta_eer
    );
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long)]
    rate: f64,
    /// Extrapolated floor at the 8 Hz measurement edge
    #[arg(long)]
    floor_8hz: Option<f64>,
}

fn run_power(args: &PowerArgs) -> Result<()> {
    let value = match args.floor_8hz {
        Some(floor) => PowerModel { floor_8hz_mw: floor }.estimate(args.rate)?.milliwatts,
        None => power_estimate(args.rate)?,
    };
    println!("{value}");
    Ok(())
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7100")]
    listen: String,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    warmup_s: Option<f64>,
    #[arg(long)]
    majority_k: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    /// JSON-lines decision log
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

fn run_serve(args: &ServeArgs, file: &FileConfig) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let mut session = file.session.clone().unwrap_or_default();
    if let Some(t) = args.threshold {
        session.threshold = t;
    }
    if let Some(w) = args.warmup_s {
        session.warmup_s = w;
    }
    if let Some(k) = args.majority_k {
        session.majority_k = k;
    }
    if let Some(r) = args.rate {
        session.rate_hz = r;
    }
    let config = GatewayConfig { session, log_path: args.log.clone(), quiet: args.quiet };
    let handle = gateway_serve(&args.listen, Arc::new(ckpt.params), config)?;
    println!(
        "gateway listening on {} ({} classes: {})",
        handle.addr(),
        ckpt.label_names.len(),
        ckpt.label_names.join(", ")
    );
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    target: String,
    /// Replay this CSV (first record, or --subject to pick one)
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    subject: Option<String>,
    /// Or synthesize a fresh subject with this profile seed
    #[arg(long)]
    profile_seed: Option<u64>,
    #[arg(long, default_value_t = 70.0)]
    hr: f64,
    #[arg(long, default_value_t = 2.0)]
    minutes: f64,
    #[arg(long, default_value_t = 25.0)]
    rate: f64,
    /// Real-time speedup factor (1 = live pace)
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[arg(long, default_value_t = 1)]
    session_id: u64,
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let record = match (&args.csv, args.profile_seed) {
        (Some(path), _) => {
            let records = load_csv(path)?;
            match &args.subject {
                Some(id) => records
                    .into_iter()
                    .find(|r| &r.subject_id == id)
                    .with_context(|| format!("no record for subject {id}"))?,
                None => records.into_iter().next().context("CSV holds no records")?,
            }
        }
        (None, Some(seed)) => {
            let profile = pulseauth_core::signal::SyntheticSubjectProfile::new(seed, args.hr);
            pulseauth_core::signal::generate_synthetic(&profile, args.minutes * 60.0, args.rate)?
        }
        (None, None) => bail!("pass --csv or --profile-seed"),
    };
    println!(
        "streaming {:.0} s of subject {} to {} at speed {}",
        record.duration_s(),
        record.subject_id,
        args.target,
        args.speed
    );
    simulate_device(&record, &args.target, args.speed, args.session_id)?;
    println!("stream complete");
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = (|| -> Result<()> {
        let file = load_file_config(&cli.config)?;
        match &cli.command {
            Command::Ingest(a) => run_ingest(a),
            Command::Synth(a) => run_synth(a, cli.seed.unwrap_or(7)),
            Command::Preprocess(a) => run_preprocess(a),
            Command::Train(a) => run_train(a, &file, cli.seed),
            Command::Eval(a) => run_eval(a, &file, cli.seed),
            Command::Sweep(a) => run_sweep(a, &file, cli.seed),
            Command::Compare(a) => run_compare(a, &file, cli.seed),
            Command::Power(a) => run_power(a),
            Command::Serve(a) => run_serve(a, &file),
            Command::Simulate(a) => run_simulate(a),
        }
    })();
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
