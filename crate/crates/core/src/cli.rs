//! Command-line front end. `run` parses arguments, dispatches a subcommand
//! and returns the process exit code: 0 on success, 1 on usage errors and
//! 2 on processing errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn, LevelFilter};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::audio::{self, AudioSignal, HIGHPASS_CUTOFF_HZ, HIGHPASS_TAPS};
use crate::divergence::Beta;
use crate::error::Error;
use crate::experiments::{self, BenchmarkConfig, GridConfig};
use crate::metrics::{self, MetricConfig, METRICS_SCHEMA_VERSION};
use crate::pipeline::{self, DereverbConfig, DereverbResult, LambdaURule};
use crate::plot;
use crate::stft::{self, StftConfig};

pub const CLI_SCHEMA_VERSION: u32 = 1;

const CORPUS_RATE: u32 = 16_000;

#[derive(Debug, Parser)]
#[command(name = "beta-dereverb", version, about = "Blind single-channel speech dereverberation")]
struct Cli {
    /// Worker threads for the parallel experiments [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Log progress to stderr; `--trace=FILE` also writes per-iteration
    /// costs of `dereverb` as CSV
    #[arg(long, global = true, value_name = "FILE", num_args = 0..=1, require_equals = true)]
    trace: Option<Option<PathBuf>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dereverberate a WAV file
    Dereverb(DereverbArgs),
    /// Score a test WAV against a clean reference (JSON)
    Metrics(MetricsArgs),
    /// Sweep learning and fitting divergences on synthetic reverberation
    BetaGrid(GridArgs),
    /// Dereverberate a synthetic reverberant corpus and score the result
    Benchmark(BenchmarkArgs),
    /// Export a power spectrogram as CSV and/or a log-magnitude PNG
    Spectrogram(SpectrogramArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Simulated,
    Recording,
}

#[derive(Debug, Args)]
struct DereverbArgs {
    input: PathBuf,
    output: PathBuf,
    /// TOML or JSON pipeline configuration; flags take precedence
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Divergence for dictionary learning [default: 0.75]
    #[arg(long, allow_negative_numbers = true)]
    beta1: Option<f64>,
    /// Divergence for the reverberant fit [default: 2]
    #[arg(long, allow_negative_numbers = true)]
    beta2: Option<f64>,
    /// Dictionary atoms J [default: 64]
    #[arg(long)]
    atoms: Option<usize>,
    /// Reverberation kernel length M in frames [default: 20]
    #[arg(long)]
    kernel_frames: Option<usize>,
    /// Random initialization seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Activation penalty rule [default: simulated]
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Apply a 5000-tap 30 Hz high-pass before processing
    #[arg(long)]
    highpass: bool,
    /// Write the fitted factors to DIR/factors.json
    #[arg(long, value_name = "DIR")]
    dump_factors: Option<PathBuf>,
    /// Write a JSON run summary
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    clean: PathBuf,
    test: PathBuf,
    /// Write the JSON here instead of stdout
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Include per-frame scores
    #[arg(long)]
    frames: bool,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Use the WAV files in DIR instead of the synthetic corpus
    #[arg(long, value_name = "DIR")]
    wav_dir: Option<PathBuf>,
    /// Synthetic signals
    #[arg(long)]
    signals: Option<usize>,
    /// Length of each synthetic signal in seconds
    #[arg(long)]
    seconds: Option<f64>,
    /// Master seed for corpus, room responses and initializations [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV, JSON and PNG outputs [default: .]
    #[arg(long, value_name = "DIR", default_value = ".")]
    output_dir: PathBuf,
    /// Also render a PNG plot
    #[arg(long)]
    png: bool,
    /// Small, fast settings for smoke tests
    #[arg(long)]
    quick: bool,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// TOML or JSON grid configuration; flags take precedence
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Comma-separated learning divergences [default: 0.25,0.5,...,2.5]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta1_axis: Option<Vec<f64>>,
    /// Comma-separated fitting divergences [default: 0.25,0.5,...,2.5]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta_star_axis: Option<Vec<f64>>,
    /// Reverberation time of the synthetic room in seconds [default: 0.45]
    #[arg(long, allow_negative_numbers = true)]
    t60: Option<f64>,
    /// Repetitions with fresh initializations [default: 1]
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// TOML or JSON benchmark configuration; flags take precedence
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Comma-separated reverberation times; 0 means no reverberation
    /// [default: 0,0.3,0.45,0.6]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    t60: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SpectrogramArgs {
    input: PathBuf,
    /// Write the power spectrogram (bins x frames) as CSV
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Write a log-magnitude image
    #[arg(long, value_name = "FILE")]
    png: Option<PathBuf>,
    /// Analysis window length in samples
    #[arg(long, default_value_t = 512)]
    window: usize,
    /// Hop in samples
    #[arg(long, default_value_t = 256)]
    hop: usize,
    /// Dynamic range of the image in dB
    #[arg(long, default_value_t = 80.0)]
    range_db: f64,
}

enum Failure {
    Usage(String),
    Processing(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Processing(e)
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type Outcome = std::result::Result<(), Failure>;

/// Runs the command line `argv` (including the program name).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    let level = if cli.trace.is_some() { LevelFilter::Debug } else { LevelFilter::Warn };
    let _ = env_logger::Builder::new()
        .filter_level(LevelFilter::Debug)
        .target(env_logger::Target::Stderr)
        .try_init();
    log::set_max_level(level);

    let outcome = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Failure::Processing(Error::Config(e.to_string()))),
        },
        None => dispatch(&cli),
    };

    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Processing(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let trace_file = cli.trace.clone().flatten();
    if trace_file.is_some() && !matches!(cli.command, Command::Dereverb(_)) {
        warn!("--trace=FILE only records dereverb costs; no file written");
    }
    match &cli.command {
        Command::Dereverb(a) => dereverb(a, trace_file.as_deref()),
        Command::Metrics(a) => metrics_cmd(a),
        Command::BetaGrid(a) => beta_grid(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Spectrogram(a) => spectrogram(a),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> std::result::Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

fn beta(name: &str, v: f64) -> std::result::Result<Beta, Failure> {
    Beta::new(v).map_err(|e| usage(format!("--{name}: {e}")))
}

fn resolve_dereverb(a: &DereverbArgs) -> std::result::Result<DereverbConfig, Failure> {
    let mut c: DereverbConfig = load_config(a.config.as_deref())?;
    if let Some(v) = a.beta1 {
        c.beta1 = beta("beta1", v)?;
    }
    if let Some(v) = a.beta2 {
        c.beta2 = beta("beta2", v)?;
    }
    if let Some(v) = a.atoms {
        c.atoms = v;
    }
    if let Some(v) = a.kernel_frames {
        c.kernel_frames = v;
    }
    if let Some(v) = a.seed {
        c.rng_seed = v;
    }
    if let Some(m) = a.mode {
        c.lambda_u_rule = match m {
            Mode::Simulated => LambdaURule::Simulated,
            Mode::Recording => LambdaURule::Recording,
        };
    }
    c.validate().map_err(usage)?;
    Ok(c)
}

#[derive(Serialize)]
struct DereverbSummary<'a> {
    schema_version: u32,
    input: String,
    output: String,
    sample_rate: u32,
    samples: usize,
    highpass: bool,
    stage1_iterations: usize,
    stage1_converged: bool,
    stage2_iterations: usize,
    stage2_converged: bool,
    config: &'a DereverbConfig,
}

fn dereverb(a: &DereverbArgs, trace: Option<&Path>) -> Outcome {
    let config = resolve_dereverb(a)?;
    let mut signal = audio::read_wav(&a.input)?;
    if signal.len() < config.window_len {
        return Err(Error::InsufficientData(format!(
            "{} has {} samples, fewer than the {}-sample window",
            a.input.display(),
            signal.len(),
            config.window_len
        ))
        .into());
    }
    if a.highpass {
        signal = audio::highpass_filter(&signal, HIGHPASS_TAPS, HIGHPASS_CUTOFF_HZ)?;
    }
    info!("dereverberating {} ({:.2} s)", a.input.display(), signal.duration_secs());
    let result = pipeline::dereverberate(&signal, &config)?;
    info!(
        "stage 1: {} iterations, stage 2: {} iterations",
        result.stage1_iters, result.stage2_iters
    );
    audio::write_wav(&result.restored_signal, &a.output)?;

    if let Some(path) = trace {
        write_trace(&result, path)?;
    }
    if let Some(dir) = &a.dump_factors {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        result.factors.to_dump().write(dir.join("factors.json"))?;
    }
    if let Some(path) = &a.report {
        let summary = DereverbSummary {
            schema_version: CLI_SCHEMA_VERSION,
            input: a.input.display().to_string(),
            output: a.output.display().to_string(),
            sample_rate: signal.sample_rate,
            samples: signal.len(),
            highpass: a.highpass,
            stage1_iterations: result.stage1_iters,
            stage1_converged: result.stage1_converged,
            stage2_iterations: result.stage2_iters,
            stage2_converged: result.stage2_converged,
            config: &config,
        };
        write_json_file(&summary, path)?;
    }
    Ok(())
}

fn write_trace(result: &DereverbResult, path: &Path) -> crate::error::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "stage,iteration,cost")?;
    for (stage, trace) in [(1, &result.cost_trace_stage1), (2, &result.cost_trace_stage2)] {
        for (i, c) in trace.iter().enumerate() {
            writeln!(out, "{stage},{i},{c}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_json_file<T: Serialize>(value: &T, path: &Path) -> crate::error::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsOutput {
    schema_version: u32,
    fwssnr: f64,
    cepstral_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fwssnr_frames: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cepstral_frames: Option<Vec<f64>>,
}

fn metrics_cmd(a: &MetricsArgs) -> Outcome {
    let clean = audio::read_wav(&a.clean)?;
    let test = audio::read_wav(&a.test)?;
    let report = metrics::evaluate(&clean, &test, &MetricConfig::default())?;
    let out = MetricsOutput {
        schema_version: METRICS_SCHEMA_VERSION,
        fwssnr: report.fwssnr,
        cepstral_distance: report.cepstral_distance,
        fwssnr_frames: a.frames.then(|| report.fwssnr_frames.clone()),
        cepstral_frames: a.frames.then(|| report.cepstral_frames.clone()),
    };
    match &a.output {
        Some(path) => write_json_file(&out, path)?,
        None => {
            let text = serde_json::to_string_pretty(&out).map_err(Error::from)?;
            println!("{text}");
        }
    }
    Ok(())
}

fn read_wav_dir(dir: &Path) -> crate::error::Result<Vec<AudioSignal>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!("no .wav files in {}", dir.display())));
    }
    paths.iter().map(audio::read_wav).collect()
}

fn corpus(a: &CorpusArgs, signals: usize, seconds: f64, seed: u64) -> std::result::Result<Vec<AudioSignal>, Failure> {
    match &a.wav_dir {
        Some(dir) => Ok(read_wav_dir(dir)?),
        None => {
            if signals == 0 {
                return Err(usage("--signals must be at least 1"));
            }
            if !(seconds > 0.0 && seconds.is_finite()) {
                return Err(usage("--seconds must be positive"));
            }
            Ok(experiments::speech_corpus(signals, seconds, CORPUS_RATE, seed)?)
        }
    }
}

fn prepare_output_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Processing(e.into()))
}

fn beta_grid(a: &GridArgs) -> Outcome {
    let mut config: GridConfig = load_config(a.config.as_deref())?;
    let c = &a.corpus;
    let quick_axis = vec![0.5, 1.0, 1.5, 2.0];
    let (default_axis, signals, seconds) = if c.quick {
        config.learning.atoms = 8;
        config.learning.max_iters_stage1 = 20;
        config.fit_iters = 20;
        (quick_axis, 1, 1.0)
    } else {
        (experiments::default_beta_axis(), 2, 2.0)
    };
    let beta1_axis = a.beta1_axis.clone().unwrap_or_else(|| default_axis.clone());
    let beta_star_axis = a.beta_star_axis.clone().unwrap_or(default_axis);
    for &b in beta1_axis.iter().chain(&beta_star_axis) {
        beta("beta-axis", b)?;
    }
    let t60 = a.t60.unwrap_or(0.45);
    if !(t60 > 0.0 && t60.is_finite()) {
        return Err(usage("--t60 must be positive"));
    }
    let trials = a.trials.unwrap_or(1);
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    config.learning.validate().map_err(usage)?;
    let seed = c.seed.unwrap_or(0);
    let clean = corpus(c, c.signals.unwrap_or(signals), c.seconds.unwrap_or(seconds), seed)?;
    prepare_output_dir(&c.output_dir)?;

    let rate = clean[0].sample_rate;
    let rir = experiments::synth_rir(t60, 1.0, rate, experiments::job_seed(seed, u64::MAX))?;
    info!(
        "beta grid: {}x{} cells, {} signals, {} trials",
        beta1_axis.len(),
        beta_star_axis.len(),
        clean.len(),
        trials
    );
    let grid = experiments::beta_grid(&clean, &rir, &beta1_axis, &beta_star_axis, trials, seed, &config)?;
    grid.write_csv(c.output_dir.join("beta_grid.csv"))?;
    grid.write_json(c.output_dir.join("beta_grid.json"))?;
    if c.png {
        plot::grid_heatmap_png(&grid, c.output_dir.join("beta_grid.png"))?;
    }
    let (i, j) = grid.argmin();
    println!(
        "minimum mean cepstral distance {:.4} at beta1 = {}, beta* = {}",
        grid.distances[i][j], grid.beta1[i], grid.beta_star[j]
    );
    Ok(())
}

fn benchmark(a: &BenchmarkArgs) -> Outcome {
    let mut config: BenchmarkConfig = load_config(a.config.as_deref())?;
    let c = &a.corpus;
    let (default_t60, signals, seconds) = if c.quick {
        config.dereverb.atoms = 8;
        config.dereverb.max_iters_stage1 = 20;
        config.dereverb.max_iters_stage2 = 10;
        (vec![0.45], 1, 1.0)
    } else {
        (vec![0.0, 0.3, 0.45, 0.6], 10, 3.0)
    };
    let t60 = a.t60.clone().unwrap_or(default_t60);
    if t60.is_empty() || t60.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(usage("--t60 values must be finite and >= 0"));
    }
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    config.dereverb.validate().map_err(usage)?;
    let clean = corpus(c, c.signals.unwrap_or(signals), c.seconds.unwrap_or(seconds), config.seed)?;
    prepare_output_dir(&c.output_dir)?;

    info!("benchmark: {} signals, {} conditions", clean.len(), t60.len());
    let report = experiments::benchmark(&clean, &t60, &config)?;
    report.write_csv(c.output_dir.join("benchmark.csv"))?;
    report.write_json(c.output_dir.join("benchmark.json"))?;
    if c.png {
        plot::benchmark_bars_png(&report, c.output_dir.join("benchmark.png"))?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn spectrogram(a: &SpectrogramArgs) -> Outcome {
    if a.csv.is_none() && a.png.is_none() {
        return Err(usage("spectrogram needs --csv and/or --png"));
    }
    if !(a.range_db > 0.0 && a.range_db.is_finite()) {
        return Err(usage("--range-db must be positive"));
    }
    let config = StftConfig::new(a.window, a.hop).map_err(usage)?;
    let signal = audio::read_wav(&a.input)?;
    let power = stft::power_spectrogram(&stft::stft_forward(&signal, &config)?);
    if let Some(path) = &a.csv {
        power.write_csv(path)?;
    }
    if let Some(path) = &a.png {
        plot::spectrogram_png(&power, a.range_db, path)?;
    }
    Ok(())
}
