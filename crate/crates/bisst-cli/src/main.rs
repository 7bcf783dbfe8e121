use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bisst_cli::checkpoint::Checkpoint;
use bisst_cli::config::FileConfig;
use bisst_cli::report;
use bisst_cli::train::{train, TrainConfig};
use bisst_cli::dataset;
use bisst_core::decoder::FusionVariant;
use bisst_core::geometry::nms;
use bisst_core::metrics::{
    dense_caption_score, precision_recall_f1_at_k, recall_at_k_avg_tiou, DETECTION_THRESHOLDS,
};
use bisst_core::synth::{generate_dataset, GenConfig};
use bisst_core::{DirectionMode, Interval, ModelConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bisst",
    version,
    about = "Dense event captioning over feature sequences: bidirectional proposals + attentive captioning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted events.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint plus a loss-curve CSV.
    Train(TrainArgs),
    /// Write ranked proposals per video (CSV).
    Propose(ProposeArgs),
    /// Write joint-ranked captioned events per video (CSV).
    Caption(CaptionArgs),
    /// Score predictions against ground truth and emit reports.
    Eval(EvalArgs),
    /// Verify backprop against central finite differences on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output dataset path (one JSON record per line).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    videos: usize,
    #[arg(long, default_value_t = 24)]
    t_min: usize,
    #[arg(long, default_value_t = 40)]
    t_max: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    event_types: usize,
    #[arg(long, default_value_t = 2)]
    events_min: usize,
    #[arg(long, default_value_t = 4)]
    events_max: usize,
    /// Gaussian feature noise sigma.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Probability of accepting an overlapping placement.
    #[arg(long, default_value_t = 0.2)]
    overlap: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CommonModelArgs {
    /// Optional TOML config file (CLI flags override its entries).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fusion variant: H, E, E+H, TDA, TDA+CG.
    #[arg(long)]
    variant: Option<String>,
    /// Direction mode: fwd, bwd, bi.
    #[arg(long)]
    direction: Option<String>,
    /// Anchor count K.
    #[arg(long)]
    k: Option<usize>,
    /// Proposal selection threshold on the fused score.
    #[arg(long)]
    tau: Option<f64>,
    /// Joint-ranking weight on the proposal score.
    #[arg(long)]
    gamma: Option<f64>,
    /// Proposal-loss weight in the total loss.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
}

impl CommonModelArgs {
    fn resolve(&self, feature_dim: usize) -> Result<(ModelConfig, TrainConfig)> {
        let mut model = ModelConfig::new(feature_dim);
        let mut train = TrainConfig::default();
        if let Some(path) = &self.config {
            let file = FileConfig::load(path)?;
            file.apply_train(&mut train);
            file.apply_model(&mut model)?;
        }
        if let Some(v) = &self.variant {
            model.fusion = v.parse()?;
        }
        if let Some(d) = &self.direction {
            model.direction = d.parse()?;
        }
        if let Some(v) = self.seed {
            train.seed = v;
        }
        if let Some(v) = self.k {
            train.anchor_count = v;
        }
        if let Some(v) = self.tau {
            train.tau = v;
        }
        if let Some(v) = self.gamma {
            train.gamma = v;
        }
        if let Some(v) = self.lambda {
            train.lambda = v;
        }
        if let Some(v) = self.epochs {
            train.epochs = v;
        }
        if let Some(v) = self.pretrain_epochs {
            train.pretrain_epochs = v;
        }
        Ok((model, train))
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Loss-curve CSV path (default: <out>.losses.csv).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[command(flatten)]
    common: CommonModelArgs,
}

#[derive(Args)]
struct ProposeArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset to propose on.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (video_id, start, end, fwd, bwd, fused).
    #[arg(long)]
    out: PathBuf,
    /// Override the checkpoint's selection threshold.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct CaptionArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (video_id, start, end, fused, caption_confidence,
    /// joint_score, tokens).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Events kept per video after joint ranking.
    #[arg(long, default_value_t = 1000)]
    topk: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth dataset (JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Ranked proposal predictions (from `propose`).
    #[arg(long)]
    proposals: Option<PathBuf>,
    /// Captioned events (from `caption`).
    #[arg(long)]
    captions: Option<PathBuf>,
    /// Top-k predictions per video to score.
    #[arg(long, default_value_t = 1000)]
    topk: usize,
    /// Apply NMS at this tIoU before the recall protocol (off by default;
    /// 0.8 for the action-proposal protocol).
    #[arg(long)]
    nms: Option<f64>,
    /// Prefix for report files (<out>.detection.csv, ...). Reports always
    /// print to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "TDA+CG")]
    variant: String,
    #[arg(long, default_value = "bi")]
    direction: String,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => run_train(args),
        Command::Propose(args) => run_propose(args),
        Command::Caption(args) => run_caption(args),
        Command::Eval(args) => run_eval(args),
        Command::Gradcheck(args) => run_gradcheck(args),
    }
}

fn gen_data(args: GenDataArgs) -> Result<ExitCode> {
    let config = GenConfig {
        num_videos: args.videos,
        t_range: (args.t_min, args.t_max),
        feature_dim: args.dim,
        event_types: args.event_types,
        events_per_video: (args.events_min, args.events_max),
        noise_sigma: args.noise,
        overlap_prob: args.overlap,
        seed: args.seed,
        ..GenConfig::default()
    };
    let videos = generate_dataset(&config)?;
    dataset::write_dataset(&args.out, &videos)?;
    println!("wrote {} videos to {}", videos.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_train(args: TrainArgs) -> Result<ExitCode> {
    let videos = dataset::read_dataset(&args.data)?;
    let (model_config, train_config) = args.common.resolve(videos[0].feature_dim)?;
    let outcome = train(&videos, model_config, &train_config)?;
    if outcome.anchor_count_reduced {
        eprintln!(
            "warning: anchor count reduced to {} (fewer distinct event lengths than requested)",
            outcome.model.anchors.len()
        );
    }
    let ckpt = Checkpoint { model: outcome.model, train: train_config };
    ckpt.save(&args.out)?;
    let loss_csv = args.loss_csv.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".losses.csv");
        PathBuf::from(p)
    });
    std::fs::write(&loss_csv, report::losses_csv(&outcome.stats))?;
    if let Some(last) = outcome.stats.last() {
        println!(
            "trained {} epochs: proposal loss {:.4}, caption loss {:.4}",
            outcome.stats.len(),
            last.proposal_loss,
            last.caption_loss
        );
    }
    println!("checkpoint: {}", args.out.display());
    println!("loss curve: {}", loss_csv.display());
    Ok(ExitCode::SUCCESS)
}

fn run_propose(args: ProposeArgs) -> Result<ExitCode> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let videos = dataset::read_dataset(&args.data)?;
    let tau = args.tau.unwrap_or(ckpt.train.tau);
    let mut per_video = Vec::with_capacity(videos.len());
    for video in &videos {
        per_video.push((video.video_id.clone(), ckpt.model.propose(video, tau)?));
    }
    report::write_proposals_csv(&args.out, &per_video)?;
    let total: usize = per_video.iter().map(|(_, p)| p.len()).sum();
    println!("wrote {total} proposals for {} videos to {}", videos.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_caption(args: CaptionArgs) -> Result<ExitCode> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let videos = dataset::read_dataset(&args.data)?;
    let tau = args.tau.unwrap_or(ckpt.train.tau);
    let gamma = args.gamma.unwrap_or(ckpt.train.gamma);
    let mut per_video = Vec::with_capacity(videos.len());
    for video in &videos {
        let events = ckpt.model.caption_video(video, tau, gamma, args.topk)?;
        per_video.push((video.video_id.clone(), events));
    }
    report::write_captions_csv(&args.out, &per_video, &ckpt.model.vocab)?;
    let total: usize = per_video.iter().map(|(_, e)| e.len()).sum();
    println!("wrote {total} captioned events for {} videos to {}", videos.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_eval(args: EvalArgs) -> Result<ExitCode> {
    if args.proposals.is_none() && args.captions.is_none() {
        bail!("eval needs --proposals and/or --captions");
    }
    let videos = dataset::read_dataset(&args.data)?;
    let gt_intervals: Vec<Vec<Interval>> = videos
        .iter()
        .map(|v| v.events.iter().map(|e| e.interval).collect())
        .collect();

    let write = |name: &str, contents: &str| -> Result<()> {
        if let Some(prefix) = &args.out {
            let path = PathBuf::from(format!("{}.{name}", prefix.display()));
            std::fs::write(&path, contents)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    };

    if let Some(path) = &args.proposals {
        let by_video = report::read_proposals_csv(path)?;
        for id in by_video.keys() {
            if !videos.iter().any(|v| &v.video_id == id) {
                bail!("predictions mention unknown video {id:?}");
            }
        }
        let mut predictions: Vec<Vec<Interval>> = Vec::with_capacity(videos.len());
        for video in &videos {
            let preds = by_video.get(&video.video_id).map(Vec::as_slice).unwrap_or(&[]);
            predictions.push(preds.iter().map(|p| p.interval).collect());
        }
        let detection = precision_recall_f1_at_k(
            &predictions,
            &gt_intervals,
            args.topk,
            &DETECTION_THRESHOLDS,
        )?;
        print!("{}", report::detection_table(&detection));
        write("detection.txt", &report::detection_table(&detection))?;
        write("detection.csv", &report::detection_csv(&detection))?;

        if let Some(threshold) = args.nms {
            let mut suppressed: Vec<Vec<Interval>> = Vec::with_capacity(videos.len());
            for video in &videos {
                let preds = by_video.get(&video.video_id).map(Vec::as_slice).unwrap_or(&[]);
                let kept = nms(preds, threshold, |p| p.interval, |p| p.fused_score);
                suppressed.push(kept.iter().map(|p| p.interval).collect());
            }
            let ks: Vec<usize> = [10, 100, 1000].into_iter().filter(|&k| k <= args.topk).collect();
            let rows = recall_at_k_avg_tiou(&suppressed, &gt_intervals, &ks)?;
            print!("{}", report::recall_table(&rows));
            write("recall.txt", &report::recall_table(&rows))?;
            write("recall.csv", &report::recall_csv(&rows))?;
        }
    }

    if let Some(path) = &args.captions {
        let by_video = report::read_captions_csv(path)?;
        for id in by_video.keys() {
            if !videos.iter().any(|v| &v.video_id == id) {
                bail!("predictions mention unknown video {id:?}");
            }
        }
        let mut predictions: Vec<Vec<(Interval, Vec<String>)>> = Vec::with_capacity(videos.len());
        let mut references: Vec<Vec<(Interval, Vec<String>)>> = Vec::with_capacity(videos.len());
        for video in &videos {
            let preds = by_video.get(&video.video_id).map(Vec::as_slice).unwrap_or(&[]);
            predictions.push(preds.iter().map(|p| (p.interval, p.tokens.clone())).collect());
            references.push(
                video.events.iter().map(|e| (e.interval, e.caption.clone())).collect(),
            );
        }
        let caption_report =
            dense_caption_score(&predictions, &references, args.topk, &DETECTION_THRESHOLDS)?;
        print!("{}", report::caption_table(&caption_report));
        write("caption.txt", &report::caption_table(&caption_report))?;
        write("caption.csv", &report::caption_csv(&caption_report))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let fusion: FusionVariant = args.variant.parse()?;
    let direction: DirectionMode = args.direction.parse()?;
    let err = bisst_cli::gradcheck::gradcheck_fixture(fusion, direction, args.seed)?;
    println!("max relative error: {err:.3e} (tolerance {:.1e})", args.tol);
    if err < args.tol {
        Ok(ExitCode::SUCCESS)
    } else {
        bail!("gradient check failed: {err:.3e} >= {:.1e}", args.tol);
    }
}
