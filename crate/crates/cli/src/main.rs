mod args;
mod inputs;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crowd_enhance::baselines;
use crowd_enhance::enhance::enhance_timeline_detailed;
use crowd_enhance::metrics::{si_snr_samples, snr_samples};
use crowd_enhance::synth::{synthesize_mixture, MixSpec};
use crowd_enhance::{
    align_all, enhance_segment, resample, save_wav, AudioClip, ClipReport, Error, Method, Timeline,
};

use args::{parse_method, parse_wav_format, AlignArgs, FilterArgs, OutputArgs, StftArgs};
use inputs::{derive_seed, load_at_rate, Resolved, SourceSpec};

const WORKERS_ENV: &str = "CROWD_ENHANCE_WORKERS";

/// Enhance several amateur recordings of the same event into one.
#[derive(Debug, Parser)]
#[command(name = "crowd-enhance", version)]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align the inputs and merge them with the median outlier filter.
    Enhance(EnhanceCmd),
    /// Estimate offsets and gains only and print them as JSON.
    Align(AlignCmd),
    /// Synthesize noisy channels of one source.
    Mix(MixCmd),
    /// Run a comparison method on pre-aligned, equal-length inputs.
    Baseline(BaselineCmd),
    /// Score an estimate against a reference.
    Eval(EvalCmd),
    /// Run an SNR sweep described by a config file.
    Sweep(SweepCmd),
}

#[derive(Debug, clap::Args)]
struct EnhanceCmd {
    /// Input WAV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
    /// Treat inputs as already aligned: offset 0, gain 1.
    #[arg(long)]
    skip_align: bool,
    /// Also write the alignment report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write each segment's per-clip masks as PGM images into this directory.
    #[arg(long)]
    dump_masks: Option<PathBuf>,
    /// Working sample rate; inputs at other rates are resampled.
    #[arg(long, default_value_t = 16_000)]
    rate: u32,
    #[command(flatten)]
    filter: FilterArgs,
    #[command(flatten)]
    align: AlignArgs,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Debug, clap::Args)]
struct AlignCmd {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 16_000)]
    rate: u32,
    #[command(flatten)]
    align: AlignArgs,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Debug, clap::Args)]
struct MixCmd {
    /// Clean source: a WAV path or synth:<speech|music|impulsive|white>.
    #[arg(long, default_value = "synth:speech")]
    source: SourceSpec,
    /// Noise sources, cycled over channels [default: synth:speech, synth:impulsive].
    #[arg(long = "noise")]
    noises: Vec<SourceSpec>,
    /// Number of channels.
    #[arg(short, long, default_value_t = 5)]
    k: usize,
    /// Per-channel SNR in dB.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    snr_db: f64,
    /// Power window in seconds.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Length in seconds of one zeroed packet per channel (0 disables loss).
    #[arg(long, default_value_t = 0.0)]
    packet_loss: f64,
    /// Fill lost packets with low-level noise instead of zeros.
    #[arg(long)]
    dither: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Length of a synthetic source in seconds.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 16_000)]
    rate: u32,
    /// Directory receiving source.wav, ch<i>.wav and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "float32", value_parser = parse_wav_format)]
    format: crowd_enhance::WavFormat,
}

#[derive(Debug, clap::Args)]
struct BaselineCmd {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// mean, median, max-elim or ours.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = 16_000)]
    rate: u32,
    #[command(flatten)]
    filter: FilterArgs,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum MetricKind {
    SiSnr,
    Snr,
}

#[derive(Debug, clap::Args)]
struct EvalCmd {
    /// Clean reference WAV.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Estimate WAV.
    #[arg(long)]
    est: PathBuf,
    #[arg(long, value_enum, default_value = "si-snr")]
    metric: MetricKind,
}

#[derive(Debug, clap::Args)]
struct SweepCmd {
    /// key = value config file.
    config: PathBuf,
    /// Directory receiving results.csv and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads [default: $CROWD_ENHANCE_WORKERS or all cores].
    #[arg(long)]
    workers: Option<usize>,
}

struct Log(bool);

impl Log {
    fn info(&self, msg: impl std::fmt::Display) {
        if self.0 {
            eprintln!("{msg}");
        }
    }
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn load_all(paths: &[PathBuf], rate: u32) -> anyhow::Result<Vec<AudioClip>> {
    paths.iter().map(|p| load_at_rate(p, rate)).collect()
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn save(path: &Path, clip: &AudioClip, format: crowd_enhance::WavFormat) -> anyhow::Result<()> {
    save_wav(path, clip, format).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct AlignReport<'a> {
    anchor: usize,
    clips: &'a [ClipReport],
}

/// `align_all`, with the no-overlap case turned into a readable error.
fn align_or_explain(clips: &[AudioClip], cfg: &crowd_enhance::AlignConfig) -> anyhow::Result<crowd_enhance::Alignment> {
    match align_all(clips, cfg) {
        Err(Error::NoCommonContent) => bail!("no common content detected between the inputs"),
        other => Ok(other?),
    }
}

fn cmd_enhance(cmd: EnhanceCmd, log: &Log) -> anyhow::Result<()> {
    let stft = cmd.stft.params()?;
    let cfg = cmd.filter.config(stft)?;
    let align_cfg = cmd.align.config(stft)?;
    let clips = load_all(&cmd.inputs, cmd.rate)?;
    if clips.len() == 1 {
        warn("only one input; writing it through unchanged");
        return save(&cmd.output.output, &clips[0], cmd.output.format);
    }

    let (timeline, report) = if cmd.skip_align {
        let reports: Vec<ClipReport> = clips
            .iter()
            .map(|c| ClipReport {
                label: c.label().to_string(),
                offset_seconds: 0.0,
                gain: 1.0,
                match_count: 0,
                excluded: false,
            })
            .collect();
        (Timeline::pre_aligned(clips)?, (0, reports))
    } else {
        log.info(format!("aligning {} clips", clips.len()));
        let aligned = align_or_explain(&clips, &align_cfg)?;
        for r in aligned.reports.iter().filter(|r| r.excluded) {
            warn(format!("`{}` shares no content with the others and was left out", r.label));
        }
        (aligned.timeline, (aligned.anchor, aligned.reports))
    };
    let report = AlignReport {
        anchor: report.0,
        clips: &report.1,
    };
    write_json(None, &report)?;
    if let Some(p) = &cmd.report {
        write_json(Some(p), &report)?;
    }

    log.info("filtering");
    let out = enhance_timeline_detailed(&timeline, &cfg)?;
    log.info(format!("{} segments", out.segments.len()));
    if let Some(dir) = &cmd.dump_masks {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (s, (seg, masks)) in out.segments.iter().zip(&out.masks).enumerate() {
            for (mask, &member) in masks.iter().zip(&seg.members) {
                let path = dir.join(format!("seg{s:03}_clip{member}.pgm"));
                let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                mask.write_pgm(std::io::BufWriter::new(file))?;
            }
        }
    }
    save(&cmd.output.output, &out.clip, cmd.output.format)
}

fn cmd_align(cmd: AlignCmd) -> anyhow::Result<()> {
    let cfg = cmd.align.config(cmd.stft.params()?)?;
    let clips = load_all(&cmd.inputs, cmd.rate)?;
    let aligned = align_or_explain(&clips, &cfg)?;
    let report = AlignReport {
        anchor: aligned.anchor,
        clips: &aligned.reports,
    };
    write_json(cmd.output.as_deref(), &report)
}

fn cmd_mix(cmd: MixCmd, log: &Log) -> anyhow::Result<()> {
    let noises = if cmd.noises.is_empty() {
        vec![
            SourceSpec::Synth(crowd_enhance::synth::signals::SignalKind::Speech),
            SourceSpec::Synth(crowd_enhance::synth::signals::SignalKind::Impulsive),
        ]
    } else {
        cmd.noises.clone()
    };
    if !(cmd.duration > 0.0 && cmd.duration.is_finite()) {
        bail!("--duration must be positive");
    }
    let len = (cmd.duration * cmd.rate as f64).round() as usize;
    let source = Resolved::new(&cmd.source, cmd.rate)?.source(len, cmd.rate, derive_seed(cmd.seed, 1, 0));
    let resolved = noises
        .iter()
        .map(|n| Resolved::new(n, cmd.rate))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let channel_noises = (0..cmd.k)
        .map(|i| resolved[i % resolved.len()].noise(source.len(), cmd.rate, derive_seed(cmd.seed, 2, i as u64), true))
        .collect::<anyhow::Result<Vec<_>>>()?;
    for i in 0..channel_noises.len() {
        for j in 0..i {
            if channel_noises[i].samples() == channel_noises[j].samples() {
                bail!(
                    "channels {j} and {i} would get identical noise; give a longer noise file or more --noise sources"
                );
            }
        }
    }
    let spec = MixSpec {
        snr_db: cmd.snr_db,
        tau: cmd.tau,
        k: cmd.k,
        packet_loss_sec: cmd.packet_loss,
        loss_dither: cmd.dither,
        seed: cmd.seed,
    };
    let mix = synthesize_mixture(&source, &channel_noises, &spec)?;

    std::fs::create_dir_all(&cmd.out_dir).with_context(|| format!("creating {}", cmd.out_dir.display()))?;
    save(&cmd.out_dir.join("source.wav"), &source, cmd.format)?;
    let mut files = Vec::new();
    for (i, ch) in mix.channels.iter().enumerate() {
        let name = format!("ch{i}.wav");
        save(&cmd.out_dir.join(&name), ch, cmd.format)?;
        files.push(name);
    }
    log.info(format!("wrote {} channels to {}", cmd.k, cmd.out_dir.display()));
    let manifest = json!({
        "source": cmd.source.to_string(),
        "noises": noises.iter().map(|n| n.to_string()).collect::<Vec<_>>(),
        "snr_db": cmd.snr_db,
        "tau": cmd.tau,
        "seed": cmd.seed,
        "k": cmd.k,
        "packet_loss": cmd.packet_loss,
        "dither": cmd.dither,
        "rate": cmd.rate,
        "samples": source.len(),
        "channels": files,
        "gains": mix.gains,
        "losses": mix.losses,
    });
    write_json(Some(&cmd.out_dir.join("manifest.json")), &manifest)
}

fn cmd_baseline(cmd: BaselineCmd) -> anyhow::Result<()> {
    let stft = cmd.stft.params()?;
    let clips = load_all(&cmd.inputs, cmd.rate)?;
    let out = match cmd.method {
        Method::Ours => enhance_segment(&clips, &cmd.filter.config(stft)?)?,
        m => {
            let views: Vec<&[f64]> = clips.iter().map(|c| c.samples()).collect();
            AudioClip::new(baselines::run_samples(m, &views, stft)?, cmd.rate, m.name())?
        }
    };
    save(&cmd.output.output, &out, cmd.output.format)
}

fn cmd_eval(cmd: EvalCmd) -> anyhow::Result<()> {
    let reference = crowd_enhance::load_wav(&cmd.reference)
        .with_context(|| format!("reading {}", cmd.reference.display()))?;
    let mut est = crowd_enhance::load_wav(&cmd.est).with_context(|| format!("reading {}", cmd.est.display()))?;
    if est.sample_rate() != reference.sample_rate() {
        est = resample(&est, reference.sample_rate())?;
    }
    let n = est.len().min(reference.len());
    if est.len() != reference.len() {
        warn(format!(
            "lengths differ ({} vs {} samples); scoring the first {n}",
            est.len(),
            reference.len()
        ));
    }
    let (e, r) = (&est.samples()[..n], &reference.samples()[..n]);
    let (name, value) = match cmd.metric {
        MetricKind::SiSnr => ("si_snr", si_snr_samples(e, r)?),
        MetricKind::Snr => ("snr", snr_samples(e, r)?),
    };
    write_json(None, &json!({ "metric": name, "value": value }))
}

fn cmd_sweep(cmd: SweepCmd, log: &Log) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&cmd.config).with_context(|| format!("reading {}", cmd.config.display()))?;
    let mut cfg = sweep::SweepConfig::parse(&text).with_context(|| format!("in {}", cmd.config.display()))?;
    if let Some(t) = cmd.trials {
        cfg.trials = t;
        cfg.validate()?;
    }
    log.info(format!(
        "{} SNR points x {} trials x {} methods",
        cfg.snr_db.len(),
        cfg.trials,
        cfg.methods.len()
    ));
    let rows = sweep::run(&cfg)?;
    std::fs::create_dir_all(&cmd.out_dir).with_context(|| format!("creating {}", cmd.out_dir.display()))?;
    sweep::write_csv(&cmd.out_dir.join("results.csv"), &rows)?;
    let summary = sweep::summarize(&cfg, &rows)?;
    write_json(Some(&cmd.out_dir.join("summary.json")), &summary)?;
    for c in &summary.cells {
        log.info(format!(
            "{:>9} {:>6.1} dB  {:7.2} +- {:.2}",
            c.metadata.method, c.metadata.snr_db, c.mean, c.ci95
        ));
    }
    Ok(())
}

fn workers(cli: &Cli) -> anyhow::Result<Option<usize>> {
    if let Command::Sweep(SweepCmd { workers: Some(n), .. }) = &cli.command {
        return Ok(Some(*n));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{WORKERS_ENV}={v}"))?)),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = workers(&cli)? {
        if n == 0 {
            bail!("worker count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let log = Log(cli.verbose);
    match cli.command {
        Command::Enhance(c) => cmd_enhance(c, &log),
        Command::Align(c) => cmd_align(c),
        Command::Mix(c) => cmd_mix(c, &log),
        Command::Baseline(c) => cmd_baseline(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Sweep(c) => cmd_sweep(c, &log),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
