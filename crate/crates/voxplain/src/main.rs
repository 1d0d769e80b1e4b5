//! Command-line surface. Every subcommand prints a one-line JSON summary
//! to stdout and human-readable messages to stderr. Exit codes: 0 on
//! success, 1 on usage errors, 2 on data/runtime errors.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use voxplain::attribution;
use voxplain::bench;
use voxplain::dataset::ClassLabel;
use voxplain::io::{self, RunConfig};
use voxplain::nn::{checkpoint, Model, ModelArch, OptimizerKind, ScaleProfile, TrainConfig};
use voxplain::seg;
use voxplain::Result;

#[derive(Parser)]
#[command(
    name = "voxplain",
    version,
    about = "Train small 3D CNN classifiers and explain them with voxel-level heatmaps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run-configuration file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-class phantom dataset with lesion masks
    PhantomGen {
        #[command(flatten)]
        common: Common,
        /// Samples per class
        #[arg(long, default_value_t = 10)]
        n_per_class: usize,
        /// Cubic edge length of each volume
        #[arg(long, default_value_t = 32)]
        edge: usize,
    },
    /// Train a classifier on a dataset directory
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory containing dataset.json
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Architecture: vgg | resnet | resnet-gap | resnet-shallow-gap
        #[arg(long)]
        arch: Option<String>,
        /// Scale profile: paper-110 | desk-32
        #[arg(long)]
        profile: Option<String>,
        /// Optimizer: adam | nesterov
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Classify one volume with a trained checkpoint
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        volume: PathBuf,
    },
    /// Build a supervoxel segmentation hierarchy for a volume
    Segment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        volume: PathBuf,
        /// Watershed seed count for the base oversegmentation
        #[arg(long)]
        n_seeds: Option<usize>,
        /// Number of hierarchy levels
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Produce an attribution heatmap for a volume
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        volume: PathBuf,
        /// Method: occlusion | sa | cam | grad-cam
        #[arg(long)]
        method: String,
        /// Target class: NC | AD
        #[arg(long, default_value = "AD")]
        class: String,
        /// Layer name for grad-cam ("last-conv" resolves automatically)
        #[arg(long, default_value = "last-conv")]
        layer: String,
        /// Occlusion neighborhood half-extent
        #[arg(long)]
        half_extent: Option<usize>,
        /// Occlusion fill value
        #[arg(long)]
        fill: Option<f32>,
        /// Occlusion center stride
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Evaluate heatmaps or classifiers
    Benchmark {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Export heatmap-over-volume PGM slices (horizontal, sagittal, coronal)
    ExportSlices {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long)]
        volume: PathBuf,
        /// Slice index (defaults to each axis's center)
        #[arg(long)]
        index: Option<usize>,
        /// Heatmap blend weight in [0,1]
        #[arg(long)]
        alpha: Option<f32>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Precision-recall localization of a heatmap against a mask
    Pr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long)]
        mask: PathBuf,
    },
    /// Stratified cross-validation of a classifier on a dataset
    Cv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, default_value_t = 5)]
        splits: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap renders --help/--version through the same error path
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_arch(cfg: &RunConfig, flag: &Option<String>) -> Result<ModelArch> {
    flag.as_deref().unwrap_or(&cfg.arch).parse()
}

fn parse_profile(cfg: &RunConfig, flag: &Option<String>) -> Result<ScaleProfile> {
    flag.as_deref().unwrap_or(&cfg.profile).parse()
}

fn train_config(
    cfg: &RunConfig,
    arch: ModelArch,
    optimizer: &Option<String>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
) -> Result<TrainConfig> {
    let mut tc = TrainConfig::for_arch(arch);
    let opt_name = optimizer.clone().or_else(|| cfg.optimizer.clone());
    if let Some(name) = opt_name {
        tc.optimizer = match name.as_str() {
            "adam" => OptimizerKind::Adam,
            "nesterov" => OptimizerKind::Nesterov,
            other => {
                return Err(voxplain::Error::InvalidArgument(format!(
                    "unknown optimizer `{other}` (expected adam or nesterov)"
                )))
            }
        };
    }
    if let Some(v) = lr.or(cfg.lr) {
        tc.lr = v;
    }
    if let Some(v) = batch_size.or(cfg.batch_size) {
        tc.batch_size = v;
    }
    if let Some(v) = epochs.or(cfg.epochs) {
        tc.epochs = v;
    }
    tc.seed = cfg.seed;
    Ok(tc)
}

fn data_dir(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone().or_else(|| cfg.data_dir.clone()).ok_or_else(|| {
        voxplain::Error::InvalidArgument("no dataset directory given (--data-dir)".into())
    })
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::PhantomGen {
            common,
            n_per_class,
            edge,
        } => {
            let cfg = load_config(&common)?;
            let mut spec = voxplain::phantom::PhantomSpec::desk_default(cfg.seed);
            if edge != 32 {
                let c = edge / 2;
                let h = (edge / 7).max(1);
                spec.dims = (edge, edge, edge);
                spec.lesion = voxplain::phantom::LesionShape::Cuboid {
                    center: (c.saturating_sub(edge / 8), c, c),
                    half_extent: (h, h, h),
                };
            }
            let ds = voxplain::phantom::generate(&spec, n_per_class)?;
            io::save_dataset(&ds, &cfg.out_dir)?;
            Ok(json!({
                "command": "phantom-gen",
                "out_dir": cfg.out_dir,
                "samples": ds.samples.len(),
                "dims": [spec.dims.0, spec.dims.1, spec.dims.2],
                "seed": cfg.seed,
                "resolved_config": serde_json::to_value(&cfg)?,
            })
            .to_string())
        }
        Command::Train {
            common,
            data_dir: dd,
            arch,
            profile,
            optimizer,
            lr,
            batch_size,
            epochs,
        } => {
            let cfg = load_config(&common)?;
            let arch = parse_arch(&cfg, &arch)?;
            let profile = parse_profile(&cfg, &profile)?;
            let tc = train_config(&cfg, arch, &optimizer, lr, batch_size, epochs)?;
            let ds = io::load_dataset(&data_dir(&cfg, &dd)?)?;
            let mut model = Model::from_arch(arch, profile, cfg.seed)?;
            let data: Vec<_> = ds
                .pool()
                .into_iter()
                .map(|i| {
                    let s = &ds.samples[i];
                    (&s.volume, s.label.index())
                })
                .collect();
            let report = voxplain::nn::train(&mut model, &data, &tc)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let ckpt = cfg.out_dir.join("model.ckpt");
            checkpoint::save(&model, &ckpt)?;
            Ok(json!({
                "command": "train",
                "checkpoint": ckpt,
                "epochs_run": report.epochs_run,
                "final_loss": report.epoch_losses.last(),
                "train_config": serde_json::to_value(&tc)?,
                "resolved_config": serde_json::to_value(&cfg)?,
            })
            .to_string())
        }
        Command::Predict {
            common,
            checkpoint: ckpt,
            volume,
        } => {
            let _cfg = load_config(&common)?;
            let model = checkpoint::load(&ckpt)?;
            let v = io::read_volume(&volume)?;
            let cache = model.predict(&v)?;
            let probs = cache.probs();
            let predicted = if probs[1] >= probs[0] {
                ClassLabel::Ad
            } else {
                ClassLabel::Nc
            };
            Ok(json!({
                "command": "predict",
                "volume": volume,
                "probs": {"NC": probs[0], "AD": probs[1]},
                "predicted": predicted.as_str(),
            })
            .to_string())
        }
        Command::Segment {
            common,
            volume,
            n_seeds,
            levels,
        } => {
            let cfg = load_config(&common)?;
            let v = io::read_volume(&volume)?;
            let n_seeds = n_seeds.unwrap_or(cfg.seg_seeds);
            let levels = levels.unwrap_or(cfg.seg_levels);
            let base = seg::oversegment(&v, n_seeds, cfg.seed)?;
            let tree = seg::build_merge_tree(&base, &v)?;
            let hier = seg::extract_hierarchy(&tree, &base, levels)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let mut paths = Vec::new();
            for (i, level) in hier.levels.iter().enumerate() {
                let p = cfg.out_dir.join(format!("segmentation-level{i}.lab"));
                io::write_labels(&level.labels, &p)?;
                paths.push(p);
            }
            Ok(json!({
                "command": "segment",
                "levels": paths,
                "segment_counts": hier.segment_counts(),
                "seed": cfg.seed,
            })
            .to_string())
        }
        Command::Explain {
            common,
            checkpoint: ckpt,
            volume,
            method,
            class,
            layer,
            half_extent,
            fill,
            stride,
        } => {
            let cfg = load_config(&common)?;
            let model = checkpoint::load(&ckpt)?;
            let v = io::read_volume(&volume)?;
            let class: ClassLabel = class.parse()?;
            let ci = class.index();
            let half_extent = half_extent.unwrap_or(cfg.occlusion_half_extent);
            let fill = fill.unwrap_or(cfg.occlusion_fill);
            let stride = stride.unwrap_or(cfg.occlusion_stride);
            let mut source_layer: Option<String> = None;
            let heatmap = match method.as_str() {
                "occlusion" => {
                    attribution::baseline_occlusion(&model, &v, ci, half_extent, fill, stride)?
                }
                "sa" => {
                    let base = seg::oversegment(&v, cfg.seg_seeds, cfg.seed)?;
                    let tree = seg::build_merge_tree(&base, &v)?;
                    let hier = seg::extract_hierarchy(&tree, &base, cfg.seg_levels)?;
                    attribution::sa_hierarchical(&model, &v, ci, &hier, fill)?
                }
                "cam" => {
                    source_layer = Some(model.graph.last_conv_name()?.to_string());
                    attribution::cam(&model, &v, ci)?.1
                }
                "grad-cam" => {
                    let name = if layer == "last-conv" {
                        model.graph.last_conv_name()?.to_string()
                    } else {
                        layer.clone()
                    };
                    source_layer = Some(name.clone());
                    attribution::grad_cam(&model, &v, &name, ci)?.1
                }
                other => {
                    return Err(voxplain::Error::InvalidArgument(format!(
                        "unknown method `{other}` (expected occlusion, sa, cam, or grad-cam)"
                    )))
                }
            };
            std::fs::create_dir_all(&cfg.out_dir)?;
            let out = cfg.out_dir.join(format!("heatmap-{method}.vol"));
            io::write_heatmap(&heatmap, &out, source_layer.as_deref())?;
            let (mx, my, mz) = heatmap.argmax();
            Ok(json!({
                "command": "explain",
                "method": method,
                "class": class.as_str(),
                "heatmap": out,
                "max_voxel": [mx, my, mz],
            })
            .to_string())
        }
        Command::Benchmark { which } => match which {
            BenchCommand::Pr {
                common,
                heatmap,
                mask,
            } => {
                let cfg = load_config(&common)?;
                let h = io::read_heatmap(&heatmap)?;
                let m = io::read_mask(&mask)?;
                let curve = bench::pr_curve(&h, &m)?;
                std::fs::create_dir_all(&cfg.out_dir)?;
                let csv = cfg.out_dir.join("pr-curve.csv");
                io::atomic_write(&csv, curve.to_csv().as_bytes())?;
                Ok(json!({
                    "command": "benchmark-pr",
                    "csv": csv,
                    "pr_auc": curve.auc(),
                    "points": curve.points.len(),
                })
                .to_string())
            }
            BenchCommand::Cv {
                common,
                data_dir: dd,
                arch,
                profile,
                splits,
                folds,
                epochs,
                lr,
            } => {
                let cfg = load_config(&common)?;
                let arch = parse_arch(&cfg, &arch)?;
                let profile = parse_profile(&cfg, &profile)?;
                let tc = train_config(&cfg, arch, &None, lr, None, epochs)?;
                let ds = io::load_dataset(&data_dir(&cfg, &dd)?)?;
                let report = bench::cross_validate(
                    &ds,
                    |seed| Model::from_arch(arch, profile, seed),
                    &tc,
                    splits,
                    folds,
                    cfg.seed,
                )?;
                std::fs::create_dir_all(&cfg.out_dir)?;
                let path = cfg.out_dir.join("cv-report.json");
                io::atomic_write(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
                let table = cfg.out_dir.join("cv-table.txt");
                io::atomic_write(&table, report.table_text(arch.as_str()).as_bytes())?;
                Ok(json!({
                    "command": "benchmark-cv",
                    "report": path,
                    "table": table,
                    "rounds": report.rounds.len(),
                    "mean_auc": report.mean_auc,
                    "mean_acc": report.mean_acc,
                })
                .to_string())
            }
        },
        Command::ExportSlices {
            common,
            heatmap,
            volume,
            index,
            alpha,
        } => {
            let cfg = load_config(&common)?;
            let h = io::read_heatmap(&heatmap)?;
            let v = io::read_volume(&volume)?;
            let alpha = alpha.unwrap_or(cfg.overlay_alpha);
            let paths = io::export_slices(&h, &v, &cfg.out_dir, "slice", index, alpha)?;
            Ok(json!({
                "command": "export-slices",
                "images": paths,
                "alpha": alpha,
            })
            .to_string())
        }
    }
}
