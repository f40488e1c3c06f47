use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use diarstitch::clustering::{Bandwidth, Metric, DEFAULT_AHC_THRESHOLD, DEFAULT_KAPPA, DEFAULT_MAX_K};
use diarstitch::io::{find_archives, read_block_archive, read_rttm_file, write_block_archive, write_rttm_file, RttmMap};
use diarstitch::pipeline::assignment_report;
use diarstitch::scoring::{
    format_rows, report_by_speaker_count, speaker_counting_accuracy, ScoredRecording,
};
use diarstitch::silence::DEFAULT_TAU;
use diarstitch::stitch::{DEFAULT_MIN_SEGMENT_DURATION, DEFAULT_POSTERIOR_THRESHOLD};
use diarstitch::{
    compute_der, diarize, generate_recording, Algorithm, ClusteringParams, CountMode, DerConfig, Diarization,
    PipelineConfig, ReferenceAnnotation, SegmentList, SynthConfig,
};

const EXIT_PARTIAL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "diarstitch", version, about = "Cluster and stitch block-wise diarization outputs")]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic block archives and a reference RTTM.
    Synth(SynthArgs),
    /// Cluster slots and print one line per slot.
    Cluster(ClusterArgs),
    /// Cluster, stitch and write a hypothesis RTTM.
    Pipeline(PipelineArgs),
    /// Score a hypothesis RTTM against a reference RTTM.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    speakers: usize,
    #[arg(long, default_value_t = 20)]
    blocks: usize,
    #[arg(long, default_value_t = 300)]
    block_frames: usize,
    #[arg(long, default_value_t = 3)]
    s_local: usize,
    #[arg(long, default_value_t = 16)]
    embedding_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    frame_duration: f64,
    #[arg(long, default_value_t = 2.0)]
    inter_distance: f64,
    #[arg(long, default_value_t = 0.2)]
    intra_stddev: f64,
    #[arg(long, default_value_t = 0.05)]
    posterior_noise: f64,
    #[arg(long, default_value_t = 0.6)]
    activity_prob: f64,
    #[arg(long, default_value_t = 0.1)]
    overlap_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    activity_skew: f64,
    /// Recording `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    recordings: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Cosine,
}

#[derive(Args)]
struct ClusterArgs {
    /// A block archive, or a directory of block archives.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "cahc", value_parser = str::parse::<Algorithm>)]
    algorithm: Algorithm,
    /// `oracle` (count from --ref), `oracle:<K>` or `estimate`.
    #[arg(long, default_value = "oracle", value_parser = str::parse::<CountMode>)]
    num_speakers: CountMode,
    /// Reference RTTM, for oracle counts and oracle clustering.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value_t = DEFAULT_AHC_THRESHOLD)]
    ahc_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_K)]
    max_k: usize,
    /// Kernel width as a multiple of the median pairwise distance.
    #[arg(long, default_value_t = 0.3)]
    bandwidth_scale: f64,
    /// Fixed kernel width; overrides --bandwidth-scale.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    metric: MetricArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_POSTERIOR_THRESHOLD)]
    posterior_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SEGMENT_DURATION)]
    min_segment_duration: f64,
    /// Scoring collar the oracle optimizes for.
    #[arg(long, default_value_t = 0.25)]
    collar: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long)]
    no_overlap: bool,
    /// Recordings processed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Assignment report destination; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Hypothesis RTTM destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    collar: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long)]
    no_overlap: bool,
    /// Also write per-recording rows as TSV.
    #[arg(long)]
    rows: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<diarstitch::Error> for Failure {
    fn from(e: diarstitch::Error) -> Self {
        match e {
            diarstitch::Error::InvalidArgument(m) => Failure::Usage(m),
            e => Failure::Run(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).parse_env("RUST_LOG").init();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Cluster(a) => cmd_cluster(&a, None),
        Command::Pipeline(a) => cmd_cluster(&a.cluster, Some(&a.out)),
        Command::Score(a) => cmd_score(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Run(format!("writing {}: {e}", path.display())))
}

fn cmd_synth(a: &SynthArgs) -> Result<u8, Failure> {
    let mut refs = RttmMap::new();
    for i in 0..a.recordings {
        let cfg = SynthConfig {
            recording_id: format!("rec{i:03}"),
            num_speakers: a.speakers,
            num_blocks: a.blocks,
            frames_per_block: a.block_frames,
            s_local: a.s_local,
            embedding_dim: a.embedding_dim,
            frame_duration: a.frame_duration,
            inter_speaker_distance: a.inter_distance,
            intra_speaker_stddev: a.intra_stddev,
            posterior_noise_stddev: a.posterior_noise,
            speaker_activity_prob: a.activity_prob,
            overlap_prob: a.overlap_prob,
            activity_skew: a.activity_skew,
            seed: a.seed.wrapping_add(i as u64),
        };
        let s = generate_recording(&cfg)?;
        write_block_archive(&s.recording, &a.out.join(&cfg.recording_id))?;
        refs.insert(cfg.recording_id, s.reference.segments);
    }
    write_rttm_file(&refs, &a.out.join("reference.rttm"))?;
    log::info!("wrote {} recordings to {}", a.recordings, a.out.display());
    Ok(0)
}

fn pipeline_config(a: &ClusterArgs) -> Result<PipelineConfig, Failure> {
    if a.num_speakers == CountMode::Estimate && !a.algorithm.supports_estimate() {
        return Err(Failure::Usage(format!("{} needs --num-speakers oracle or oracle:<K>", a.algorithm)));
    }
    if a.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let cfg = PipelineConfig {
        algorithm: a.algorithm,
        count: a.num_speakers,
        tau: a.tau,
        clustering: ClusteringParams {
            kappa: a.kappa,
            ahc_threshold: a.ahc_threshold,
            max_k: a.max_k,
            seed: a.seed,
            bandwidth: match a.sigma {
                Some(s) => Bandwidth::Fixed(s),
                None => Bandwidth::MedianScaled(a.bandwidth_scale),
            },
            metric: match a.metric {
                MetricArg::Euclidean => Metric::Euclidean,
                MetricArg::Cosine => Metric::Cosine,
            },
            ..ClusteringParams::default()
        },
        posterior_threshold: a.posterior_threshold,
        min_segment_duration: a.min_segment_duration,
        der: DerConfig {
            collar: a.collar,
            score_overlap: !a.no_overlap,
            step: a.step,
        },
    };
    cfg.der.validate()?;
    if cfg.needs_reference() && a.reference.is_none() {
        return Err(Failure::Usage(
            "oracle counts and oracle clustering need --ref".into(),
        ));
    }
    Ok(cfg)
}

fn cmd_cluster(a: &ClusterArgs, rttm_out: Option<&Path>) -> Result<u8, Failure> {
    let cfg = pipeline_config(a)?;
    let references = match &a.reference {
        Some(p) => read_rttm_file(p)?,
        None => RttmMap::new(),
    };
    let archives = find_archives(&a.input)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Failure::Run(e.to_string()))?;
    let results: Vec<(PathBuf, Result<(String, Diarization), diarstitch::Error>)> = pool.install(|| {
        archives
            .par_iter()
            .map(|path| {
                let run = || {
                    let rec = read_block_archive(path)?;
                    let reference = references
                        .get(&rec.recording_id)
                        .map(|segs| ReferenceAnnotation::new(rec.recording_id.clone(), segs.clone()));
                    let d = diarize(&rec, &cfg, reference.as_ref())?;
                    Ok((rec.recording_id, d))
                };
                (path.clone(), run())
            })
            .collect()
    });

    let mut report = String::new();
    let mut hyp = RttmMap::new();
    let mut failures = 0;
    for (path, result) in results {
        match result {
            Ok((id, d)) => {
                report += &assignment_report(&id, &d.assignment);
                log::info!("{id}: {} speakers", d.num_speakers);
                hyp.insert(id, d.segments);
            }
            Err(e) => {
                failures += 1;
                log::error!("{}: {e}", path.display());
            }
        }
    }
    match (&a.report, rttm_out) {
        (Some(p), _) => write_file(p, &report)?,
        (None, None) => print!("{report}"),
        (None, Some(_)) => {}
    }
    if let Some(out) = rttm_out {
        if !hyp.is_empty() {
            write_rttm_file(&hyp, out)?;
        }
    }
    if failures > 0 {
        log::error!("{failures} of {} recordings failed", archives.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn cmd_score(a: &ScoreArgs) -> Result<u8, Failure> {
    let cfg = DerConfig {
        collar: a.collar,
        score_overlap: !a.no_overlap,
        step: a.step,
    };
    cfg.validate()?;
    let hyp = read_rttm_file(&a.hyp)?;
    let refs = read_rttm_file(&a.reference)?;
    let mut code = 0;
    for id in hyp.keys().filter(|id| !refs.contains_key(*id)) {
        log::error!("{id}: in hypothesis but not in reference");
        code = EXIT_PARTIAL;
    }
    let empty = SegmentList::empty();
    let mut scored = Vec::new();
    let mut counts = Vec::new();
    for (id, segs) in &refs {
        let reference = ReferenceAnnotation::new(id.clone(), segs.clone());
        let h = hyp.get(id).unwrap_or(&empty);
        match compute_der(h, &reference, &cfg) {
            Ok(b) => {
                counts.push((h.speakers().len(), reference.num_speakers));
                scored.push(ScoredRecording {
                    recording_id: id.clone(),
                    breakdown: b,
                    ref_speakers: reference.num_speakers,
                });
            }
            Err(e) => {
                log::error!("{id}: {e}");
                code = EXIT_PARTIAL;
            }
        }
    }
    let table = report_by_speaker_count(&scored)?;
    print!("{table}");
    println!();
    print!("{}", speaker_counting_accuracy(&counts)?);
    if let Some(p) = &a.rows {
        write_file(p, &format_rows(&scored))?;
    }
    Ok(code)
}
