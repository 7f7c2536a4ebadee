//! `paraspeech`: command-line entry point for the toolkit.
//!
//! Every subcommand prints a line-oriented `key=value` report to stdout
//! (timing keys prefixed `timing_`) and exits nonzero on any module error.
//! A global worker count and seed flow down into every parallel region, so
//! identical flags and seed produce identical artifacts.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use paraspeech_core::combination::{
    combine_append, combine_product, combine_sum, inverse_entropy_weights, PosteriorStream,
    StreamWeights, Weighting,
};
use paraspeech_core::decoder::network::RecognitionNetwork;
use paraspeech_core::decoder::{benchmark_decode, decode, DecodeConfig};
use paraspeech_core::diarization::online::{train_online_models, OnlineConfig, OnlineDiarizer};
use paraspeech_core::diarization::{diarize_offline, DiarizationConfig};
use paraspeech_core::feat::FeatureMatrix;
use paraspeech_core::frontend::{append_deltas, build_stream_set, compute_log_mel, compute_mfcc, StreamBankSpec};
use paraspeech_core::gmm::read_gmm;
use paraspeech_core::io::{read_feat, read_wav, write_feat};
use paraspeech_core::synth::{generate_synthetic_corpus, SyntheticCorpusSpec};
use paraspeech_core::workers::run_with_workers;

use config::ToolConfig;
use report::Report;

#[derive(Parser)]
#[command(name = "paraspeech", about = "Parallel speech-inference toolkit", version)]
struct Cli {
    /// Plain-text key=value config file applied before flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker count; 0 means all cores. Defaults to $PARASPEECH_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Random seed for all seeded operations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sample rate assumed for raw audio input.
    #[arg(long, global = true)]
    sample_rate: Option<u32>,
    /// Frame period in seconds stamped onto loaded feature files.
    #[arg(long, global = true)]
    frame_period: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute MFCC, log-mel, or Gabor multi-stream features from a WAV file.
    ExtractFeatures(ExtractArgs),
    /// Combine feature or posterior streams by appending, product, or sum.
    CombineStreams(CombineArgs),
    /// Viterbi beam-search decode of a feature file against a network.
    Decode(DecodeArgs),
    /// Offline agglomerative speaker diarization.
    Diarize(DiarizeArgs),
    /// Online diarization bootstrapped from an offline pass.
    DiarizeOnline(OnlineArgs),
    /// Generate a seeded synthetic corpus with ground-truth segmentation.
    SynthCorpus(SynthArgs),
    /// Benchmark decode or diarize across worker counts.
    Benchmark(BenchArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Input WAV file (PCM16 mono).
    #[arg(long)]
    input: PathBuf,
    /// Output FEAT file; for --kind gabor, a prefix producing <output>.<i>.feat.
    #[arg(long)]
    output: PathBuf,
    /// mfcc | log-mel | gabor
    #[arg(long, default_value = "mfcc")]
    kind: String,
    /// Analysis window length in seconds.
    #[arg(long, default_value_t = 0.025)]
    window: f64,
    /// MFCC coefficient count.
    #[arg(long, default_value_t = 13)]
    coeffs: usize,
    /// Log-mel channel count.
    #[arg(long, default_value_t = 23)]
    channels: usize,
    /// Delta orders to append (0 = static only, 1 = +deltas, 2 = +delta-deltas).
    #[arg(long, default_value_t = 0)]
    deltas: usize,
}

#[derive(Args)]
struct CombineArgs {
    /// append | product | sum
    #[arg(long)]
    rule: String,
    /// uniform | entropy | comma-separated weight list
    #[arg(long, default_value = "uniform")]
    weights: String,
    /// Input FEAT files, in stream order.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Network in the line-oriented text format.
    #[arg(long)]
    network: PathBuf,
    /// Sidecar word table: one word per line, line i holds word id i+1.
    #[arg(long)]
    words: PathBuf,
    /// Sidecar model table: one GMM file path per line, line i holds model
    /// id i+1; relative paths resolve against this file's directory.
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 12.0)]
    beam: f64,
    #[arg(long, default_value_t = 0.083)]
    acoustic_scale: f64,
    #[arg(long)]
    max_active: Option<usize>,
    /// Output CTM file.
    #[arg(long)]
    output: PathBuf,
    /// Utterance id written into the CTM.
    #[arg(long, default_value = "utt")]
    utt: String,
}

#[derive(Args)]
struct DiarizeArgs {
    /// Input audio (.wav) or feature (.feat) file.
    #[arg(long)]
    input: PathBuf,
    /// Initial cluster count.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Gaussians per cluster model.
    #[arg(long, default_value_t = 5)]
    g: usize,
    /// Minimum speech segment duration in seconds.
    #[arg(long, default_value_t = 2.5)]
    min_dur: f64,
    /// Energy percentile below which frames count as non-speech.
    #[arg(long, default_value_t = 30.0)]
    vad_percentile: f64,
    /// Output RTTM file.
    #[arg(long)]
    output: PathBuf,
    /// File id written into the RTTM.
    #[arg(long, default_value = "file")]
    file_id: String,
}

#[derive(Args)]
struct OnlineArgs {
    /// Input audio (.wav) or feature (.feat) file.
    #[arg(long)]
    input: PathBuf,
    /// Seconds of audio used for the bootstrap offline pass.
    #[arg(long, default_value_t = 1000.0)]
    train_dur: f64,
    /// Seconds of each model's training chunk.
    #[arg(long, default_value_t = 60.0)]
    chunk_dur: f64,
    /// Frames per majority-vote window.
    #[arg(long, default_value_t = 250)]
    vote_window: usize,
    /// Initial cluster count for the offline pass.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Gaussians per model.
    #[arg(long, default_value_t = 5)]
    g: usize,
    #[arg(long, default_value_t = 2.5)]
    min_dur: f64,
    /// Output decision file: `<frame> <time_s> <label>` per line.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    speakers: usize,
    /// Total duration in seconds.
    #[arg(long, default_value_t = 600.0)]
    duration: f64,
    /// Distance between speaker means in unit standard deviations.
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Output FEAT file.
    #[arg(long)]
    output_features: PathBuf,
    /// Output ground-truth RTTM file.
    #[arg(long)]
    output_reference: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// decode | diarize
    #[arg(long)]
    task: String,
    /// Comma-separated worker counts, e.g. 1,2,4.
    #[arg(long, default_value = "1,2,4")]
    worker_counts: String,
    /// Features for the decode task; for diarize, optional (synthetic
    /// default corpus when omitted).
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    words: Option<PathBuf>,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    g: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ToolConfig::load(p)?,
        None => ToolConfig::default(),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.sample_rate {
        cfg.sample_rate = r;
    }
    if let Some(p) = cli.frame_period {
        cfg.frame_period = p;
    }
    match cli.command {
        Command::ExtractFeatures(a) => extract_features(&cfg, a),
        Command::CombineStreams(a) => combine_streams(&cfg, a),
        Command::Decode(a) => cmd_decode(&cfg, a),
        Command::Diarize(a) => cmd_diarize(&cfg, a),
        Command::DiarizeOnline(a) => cmd_diarize_online(&cfg, a),
        Command::SynthCorpus(a) => cmd_synth(&cfg, a),
        Command::Benchmark(a) => cmd_benchmark(&cfg, a),
    }
}

/// Loads features from .feat, stamping the configured frame period (the FEAT
/// format does not store one).
fn load_feat(cfg: &ToolConfig, path: &Path) -> Result<FeatureMatrix> {
    let mut m = read_feat(path).with_context(|| format!("reading {}", path.display()))?;
    m.frame_period = cfg.frame_period;
    Ok(m)
}

/// Loads .wav (via MFCC) or .feat input for the diarization commands.
fn load_diarization_input(cfg: &ToolConfig, path: &Path) -> Result<FeatureMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("wav") => {
            let audio = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(compute_mfcc(&audio, 0.025, cfg.frame_period, 13)?)
        }
        _ => load_feat(cfg, path),
    }
}

fn with_deltas(m: FeatureMatrix, order: usize) -> Result<FeatureMatrix> {
    if order == 0 {
        Ok(m)
    } else {
        Ok(append_deltas(&m, order)?)
    }
}

fn extract_features(cfg: &ToolConfig, a: ExtractArgs) -> Result<()> {
    let mut report = Report::new("extract-features", cfg);
    let audio = read_wav(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let started = Instant::now();
    let outputs: Vec<(PathBuf, FeatureMatrix)> = match a.kind.as_str() {
        "mfcc" => {
            let m = compute_mfcc(&audio, a.window, cfg.frame_period, a.coeffs)?;
            vec![(a.output.clone(), with_deltas(m, a.deltas)?)]
        }
        "log-mel" => {
            let m = compute_log_mel(&audio, a.window, cfg.frame_period, a.channels)?;
            vec![(a.output.clone(), with_deltas(m, a.deltas)?)]
        }
        "gabor" => {
            let logmel = compute_log_mel(&audio, a.window, cfg.frame_period, a.channels)?;
            let streams = build_stream_set(&logmel, &StreamBankSpec::default_bank())?;
            streams
                .into_iter()
                .enumerate()
                .map(|(i, m)| (a.output.with_extension(format!("{i}.feat")), m))
                .collect()
        }
        other => bail!("unknown feature kind '{other}' (expected mfcc, log-mel, or gabor)"),
    };
    let elapsed = started.elapsed().as_secs_f64();
    report.push("kind", &a.kind);
    report.push("streams", outputs.len());
    for (i, (path, m)) in outputs.iter().enumerate() {
        write_feat(path, m).with_context(|| format!("writing {}", path.display()))?;
        report.push(&format!("output_{i}"), path.display());
        report.push(&format!("frames_{i}"), m.n_frames());
        report.push(&format!("dim_{i}"), m.dim());
    }
    report.push_timing("seconds", elapsed);
    report.print();
    Ok(())
}

fn combine_streams(cfg: &ToolConfig, a: CombineArgs) -> Result<()> {
    let mut report = Report::new("combine-streams", cfg);
    let matrices: Vec<FeatureMatrix> =
        a.inputs.iter().map(|p| load_feat(cfg, p)).collect::<Result<_>>()?;
    let started = Instant::now();
    let combined = match a.rule.as_str() {
        "append" => {
            let refs: Vec<&FeatureMatrix> = matrices.iter().collect();
            combine_append(&refs)?
        }
        "product" | "sum" => {
            // the FEAT format carries no kind tag, so stamp what this rule
            // requires; PosteriorStream::new still validates the rows
            let streams: Vec<PosteriorStream> = matrices
                .into_iter()
                .map(|mut m| {
                    m.kind = paraspeech_core::feat::FeatureKind::Posterior;
                    PosteriorStream::new(m)
                })
                .collect::<paraspeech_core::Result<_>>()?;
            let weighting = parse_weighting(&a.weights, &streams)?;
            let out = if a.rule == "product" {
                combine_product(&streams, &weighting)?
            } else {
                combine_sum(&streams, &weighting)?
            };
            out.matrix().clone()
        }
        other => bail!("unknown rule '{other}' (expected append, product, or sum)"),
    };
    let elapsed = started.elapsed().as_secs_f64();
    write_feat(&a.output, &combined)
        .with_context(|| format!("writing {}", a.output.display()))?;
    report.push("rule", &a.rule);
    report.push("inputs", a.inputs.len());
    report.push("frames", combined.n_frames());
    report.push("dim", combined.dim());
    report.push("output", a.output.display());
    report.push_timing("seconds", elapsed);
    report.print();
    Ok(())
}

fn parse_weighting(spec: &str, streams: &[PosteriorStream]) -> Result<Weighting> {
    match spec {
        "uniform" => Ok(Weighting::Uniform),
        "entropy" => Ok(inverse_entropy_weights(streams)?),
        list => {
            let raw: Vec<f64> = list
                .split(',')
                .map(|s| s.trim().parse().with_context(|| format!("bad weight '{s}'")))
                .collect::<Result<_>>()?;
            Ok(Weighting::Fixed(StreamWeights::new(raw)?))
        }
    }
}

/// Loads the network with its sidecar word and model tables.
fn load_network(network: &Path, words: &Path, models: &Path) -> Result<RecognitionNetwork> {
    let text = std::fs::read_to_string(network)
        .with_context(|| format!("reading {}", network.display()))?;
    let word_list: Vec<String> = std::fs::read_to_string(words)
        .with_context(|| format!("reading {}", words.display()))?
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    let model_dir = models.parent().unwrap_or(Path::new("."));
    let model_list = std::fs::read_to_string(models)
        .with_context(|| format!("reading {}", models.display()))?
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let p = model_dir.join(l);
            read_gmm(&p).with_context(|| format!("reading model {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecognitionNetwork::from_text(&text, word_list, model_list)?)
}

fn cmd_decode(cfg: &ToolConfig, a: DecodeArgs) -> Result<()> {
    let mut report = Report::new("decode", cfg);
    let net = load_network(&a.network, &a.words, &a.models)?;
    let features = load_feat(cfg, &a.features)?;
    let config = DecodeConfig {
        beam_width: a.beam,
        acoustic_scale: a.acoustic_scale,
        max_active: a.max_active,
    };
    let result = run_with_workers(cfg.workers, || decode(&net, &features, &config))?;
    std::fs::write(&a.output, result.to_ctm(&a.utt))
        .with_context(|| format!("writing {}", a.output.display()))?;
    report.push("beam", a.beam);
    report.push("acoustic_scale", a.acoustic_scale);
    report.push("frames", result.n_frames);
    report.push("total_cost", format!("{:.9}", result.total_cost));
    report.push(
        "words",
        result.words.iter().map(|w| w.word.as_str()).collect::<Vec<_>>().join(" "),
    );
    report.push("output", a.output.display());
    report.push_timing("observation_seconds", result.timings.observation.as_secs_f64());
    report.push_timing("traversal_seconds", result.timings.traversal.as_secs_f64());
    report.push_timing("total_seconds", result.timings.total.as_secs_f64());
    report.push_timing("real_time_factor", result.real_time_factor());
    report.print();
    Ok(())
}

fn cmd_diarize(cfg: &ToolConfig, a: DiarizeArgs) -> Result<()> {
    let mut report = Report::new("diarize", cfg);
    let features = load_diarization_input(cfg, &a.input)?;
    let config = DiarizationConfig {
        k: a.k,
        g: a.g,
        min_duration: a.min_dur,
        vad_percentile: a.vad_percentile,
        seed: cfg.seed,
        ..Default::default()
    };
    let result = run_with_workers(cfg.workers, || diarize_offline(&features, &config))?;
    std::fs::write(&a.output, result.segmentation.to_rttm(&a.file_id))
        .with_context(|| format!("writing {}", a.output.display()))?;
    report.push("k", a.k);
    report.push("g", a.g);
    report.push("min_duration", a.min_dur);
    report.push("frames", features.n_frames());
    report.push("clusters", result.clusters.len());
    report.push("merges", result.trace.iter().filter(|e| e.merged.is_some()).count());
    report.push("segments", result.segmentation.segments.len());
    report.push("output", a.output.display());
    report.push_timing("real_time_factor", result.real_time_factor);
    report.print();
    Ok(())
}

fn cmd_diarize_online(cfg: &ToolConfig, a: OnlineArgs) -> Result<()> {
    let mut report = Report::new("diarize-online", cfg);
    let features = load_diarization_input(cfg, &a.input)?;
    let train_frames = ((a.train_dur / features.frame_period).round() as usize)
        .min(features.n_frames());
    if train_frames == 0 {
        bail!("training span is empty at train-dur {}", a.train_dur);
    }
    let train_rows: Vec<usize> = (0..train_frames).collect();
    let train = features.select_frames(&train_rows);

    let offline_config = DiarizationConfig {
        k: a.k,
        g: a.g,
        min_duration: a.min_dur,
        seed: cfg.seed,
        ..Default::default()
    };
    let online_config = OnlineConfig {
        train_duration: a.train_dur,
        chunk_duration: a.chunk_dur,
        vote_window: a.vote_window,
        g: a.g,
        seed: cfg.seed,
        ..Default::default()
    };
    let (offline, models) = run_with_workers(cfg.workers, || -> paraspeech_core::Result<_> {
        let offline = diarize_offline(&train, &offline_config)?;
        let models = train_online_models(&train, &offline, &online_config)?;
        Ok((offline, models))
    })?;
    for w in &models.warnings {
        eprintln!("warning: {w}");
    }
    report.push("offline_clusters", offline.clusters.len());
    report.push("models", models.len());
    report.push("model_names", models.names.join(","));

    let mut diarizer = OnlineDiarizer::new(models, a.vote_window)?;
    report.push("latency", diarizer.latency_description(features.frame_period));
    let started = Instant::now();
    let mut out = String::new();
    let mut decisions = 0usize;
    for t in train_frames..features.n_frames() {
        if let Some(d) = diarizer.push(features.row(t))? {
            let time = (train_frames + d.decision_frame) as f64 * features.frame_period;
            out.push_str(&format!("{} {:.3} {}\n", train_frames + d.decision_frame, time, d.label));
            decisions += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    std::fs::write(&a.output, out).with_context(|| format!("writing {}", a.output.display()))?;
    report.push("streamed_frames", features.n_frames() - train_frames);
    report.push("decisions", decisions);
    report.push("output", a.output.display());
    let streamed_audio = (features.n_frames() - train_frames) as f64 * features.frame_period;
    if streamed_audio > 0.0 {
        report.push_timing("real_time_factor", elapsed / streamed_audio);
    }
    report.print();
    Ok(())
}

fn cmd_synth(cfg: &ToolConfig, a: SynthArgs) -> Result<()> {
    let mut report = Report::new("synth-corpus", cfg);
    let spec = SyntheticCorpusSpec {
        n_speakers: a.speakers,
        dim: a.dim,
        mean_separation: a.separation,
        total_seconds: a.duration,
        frame_period: cfg.frame_period,
        seed: cfg.seed,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&spec)?;
    write_feat(&a.output_features, &corpus.features)
        .with_context(|| format!("writing {}", a.output_features.display()))?;
    std::fs::write(&a.output_reference, corpus.reference.to_rttm("synth"))
        .with_context(|| format!("writing {}", a.output_reference.display()))?;
    report.push("speakers", a.speakers);
    report.push("frames", corpus.features.n_frames());
    report.push("dim", corpus.features.dim());
    report.push("reference_segments", corpus.reference.segments.len());
    report.push("output_features", a.output_features.display());
    report.push("output_reference", a.output_reference.display());
    report.print();
    Ok(())
}

fn parse_worker_counts(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            let n: usize = s.trim().parse().with_context(|| format!("bad worker count '{s}'"))?;
            if n == 0 {
                bail!("worker counts must be >= 1");
            }
            Ok(n)
        })
        .collect()
}

fn push_machine(report: &mut Report) {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    report.push(
        "machine",
        format!("{}-{} {} cores", std::env::consts::OS, std::env::consts::ARCH, cores),
    );
}

fn cmd_benchmark(cfg: &ToolConfig, a: BenchArgs) -> Result<()> {
    let mut report = Report::new("benchmark", cfg);
    let counts = parse_worker_counts(&a.worker_counts)?;
    push_machine(&mut report);
    report.push("task", &a.task);
    match a.task.as_str() {
        "decode" => {
            let (Some(network), Some(words), Some(models), Some(features)) =
                (&a.network, &a.words, &a.models, &a.features)
            else {
                bail!("decode benchmark needs --network, --words, --models, and --features");
            };
            let net = load_network(network, words, models)?;
            let feats = load_feat(cfg, features)?;
            let config = DecodeConfig::default();
            let bench = benchmark_decode(&net, &feats, &config, &counts)?;
            report.push("frames", bench.result.n_frames);
            report.push("outputs_identical", true);
            for e in &bench.entries {
                let w = e.workers;
                report.push_timing(&format!("w{w}_observation_seconds"), e.observation.as_secs_f64());
                report.push_timing(&format!("w{w}_traversal_seconds"), e.traversal.as_secs_f64());
                report.push_timing(&format!("w{w}_total_seconds"), e.total.as_secs_f64());
                report.push_timing(&format!("w{w}_real_time_factor"), e.real_time_factor);
                if let Some(s) = bench.speedup(w) {
                    report.push_timing(&format!("w{w}_speedup"), s);
                }
            }
        }
        "diarize" => {
            let feats = match &a.features {
                Some(p) => load_feat(cfg, p)?,
                None => {
                    let spec = SyntheticCorpusSpec { seed: cfg.seed, ..Default::default() };
                    generate_synthetic_corpus(&spec)?.features
                }
            };
            let config = DiarizationConfig { k: a.k, g: a.g, seed: cfg.seed, ..Default::default() };
            report.push("frames", feats.n_frames());
            let mut reference = None;
            for &w in &counts {
                let started = Instant::now();
                let result = run_with_workers(w, || diarize_offline(&feats, &config))?;
                let elapsed = started.elapsed().as_secs_f64();
                if let Some(r) = &reference {
                    if !result.same_output(r) {
                        bail!("diarization output diverged at {w} workers");
                    }
                } else {
                    report.push("clusters", result.clusters.len());
                    reference = Some(result.clone());
                }
                report.push_timing(&format!("w{w}_total_seconds"), elapsed);
                report.push_timing(&format!("w{w}_real_time_factor"), result.real_time_factor);
            }
            report.push("outputs_identical", true);
        }
        other => bail!("unknown benchmark task '{other}' (expected decode or diarize)"),
    }
    report.print();
    Ok(())
}
