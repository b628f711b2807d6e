//! Command-line driver: wires the config to the library modules and writes
//! machine-readable artifacts. Every subcommand is reproducible: the same
//! config and seed give byte-identical outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mixpl_core::coco;
use mixpl_core::config::{Config, DetectorPreset};
use mixpl_core::grad::{self, CompareConfig, ResponseModel};
use mixpl_core::pipeline::PipelineImage;
use mixpl_core::resample::RepeatPlan;
use mixpl_core::rng;
use mixpl_core::sim::{self, sample_scene};
use mixpl_core::synthetic::SyntheticSpec;
use mixpl_core::{Detection, ImageId, ImageRaster, ScaleClass};

#[derive(Parser)]
#[command(
    name = "mixpl",
    about = "Semi-supervised detection data pipeline: splits, mixing augmentations, resampling plans, gradient densities, and a teacher simulator",
    version
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// RNG seed override [config default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (falls back to $MIXPL_OUT, then the config value)
    /// [config default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Detector preset: ce-loss (thr 0.7), focal (0.4), or fcos (0.3)
    /// [config default: ce-loss].
    #[arg(long, global = true)]
    preset: Option<DetectorPreset>,

    /// Pseudo-label confidence threshold override [config default: from preset].
    #[arg(long, global = true)]
    thr: Option<f64>,

    /// Unsupervised loss weight carried on mixed images [config default: 2].
    #[arg(long, global = true)]
    wu: Option<f64>,

    /// Resampling power in [0, 1] [config default: 0.5].
    #[arg(long, global = true)]
    power: Option<f64>,

    /// Iteration count for the simulator [config default: 50].
    #[arg(long, global = true)]
    iters: Option<u64>,

    /// Mosaic long-edge range as lo:hi [config default: 400:800].
    #[arg(long, value_name = "LO:HI", global = true)]
    mosaic_range: Option<String>,

    /// Mixup blend ratio [config default: 0.5].
    #[arg(long, global = true)]
    alpha: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a dataset into labeled/unlabeled annotation documents.
    Split {
        /// Labeled fraction in (0, 1].
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Blend two pseudo-labeled images into one (PNG + labels + manifest).
    Mix {
        /// Input PNG images (exactly 2); synthetic fixtures when omitted.
        #[arg(long = "image")]
        images: Vec<PathBuf>,
        /// COCO results documents with the images' labels, same order.
        #[arg(long = "labels")]
        labels: Vec<PathBuf>,
    },
    /// Compose four pseudo-labeled images into a mosaic.
    Mosaic {
        /// Input PNG images (exactly 4); synthetic fixtures when omitted.
        #[arg(long = "image")]
        images: Vec<PathBuf>,
        /// COCO results documents with the images' labels, same order.
        #[arg(long = "labels")]
        labels: Vec<PathBuf>,
    },
    /// Emit per-category repeat factors and per-image multiplicities.
    ResamplePlan,
    /// Gradient-density grids per (taxonomy, augmentation, threshold).
    GradDensity {
        /// Also write a single-file SVG overview plot.
        #[arg(long)]
        svg: bool,
        /// Thresholds to sweep.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Run the teacher-student loop simulator and stream per-iteration stats.
    Simulate,
    /// Dataset statistics: scale and category distributions, optionally
    /// against a detections file.
    Stats {
        /// COCO results document to compare against the dataset.
        #[arg(long)]
        detections: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mixpl: {e}");
            ExitCode::FAILURE
        }
    }
}

fn effective_config(common: &Common) -> mixpl_core::Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(preset) = common.preset {
        cfg.preset = preset;
    }
    if let Some(thr) = common.thr {
        cfg.threshold = Some(thr);
    }
    if let Some(wu) = common.wu {
        cfg.w_u = wu;
    }
    if let Some(power) = common.power {
        cfg.resample_power = power;
    }
    if let Some(iters) = common.iters {
        cfg.iterations = iters;
    }
    if let Some(alpha) = common.alpha {
        cfg.mixup_alpha = alpha;
    }
    if let Some(spec) = &common.mosaic_range {
        let (lo, hi) = spec.split_once(':').ok_or_else(|| {
            mixpl_core::Error::Config(format!("--mosaic-range expects lo:hi, got '{spec}'"))
        })?;
        let lo: u32 = lo
            .parse()
            .map_err(|_| mixpl_core::Error::Config(format!("bad mosaic lo '{lo}'")))?;
        let hi: u32 = hi
            .parse()
            .map_err(|_| mixpl_core::Error::Config(format!("bad mosaic hi '{hi}'")))?;
        if lo == 0 || hi < lo {
            return Err(mixpl_core::Error::Config(format!(
                "mosaic range {lo}:{hi} is not an ascending positive range"
            )));
        }
        cfg.mosaic_range = (lo, hi);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    } else if let Ok(out) = std::env::var("MIXPL_OUT") {
        if !out.is_empty() {
            cfg.output_dir = PathBuf::from(out);
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> mixpl_core::Result<()> {
    let cfg = effective_config(&cli.common)?;
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| mixpl_core::Error::io(&cfg.output_dir, e))?;

    match cli.command {
        Command::Split { fraction } => {
            let index = cfg.load_dataset()?;
            let fraction = fraction.unwrap_or(cfg.split_fraction);
            let (labeled, unlabeled) = coco::split_dataset(&index, fraction, cfg.seed)?;
            let lp = cfg.output_dir.join("labeled.json");
            let up = cfg.output_dir.join("unlabeled.json");
            coco::save_dataset(&labeled, &lp)?;
            coco::save_dataset(&unlabeled, &up)?;
            println!(
                "split {} images into {} labeled + {} unlabeled ({} / {})",
                index.len(),
                labeled.len(),
                unlabeled.len(),
                lp.display(),
                up.display()
            );
        }
        Command::Mix { images, labels } => {
            let inputs = load_fixtures(&cfg, &images, &labels, 2)?;
            let (a, b) = (&inputs[0], &inputs[1]);
            let (raster, out_labels) = mixpl_core::pipeline::pseudo_mixup(
                (&a.raster, &a.labels),
                (&b.raster, &b.labels),
                cfg.mixup_alpha,
            )?;
            write_mixed_image(&cfg, "mix", &raster, &out_labels, &[a.id, b.id])?;
            println!(
                "mixed {} + {} -> {} labels, {}x{}",
                a.id,
                b.id,
                out_labels.len(),
                raster.width(),
                raster.height()
            );
        }
        Command::Mosaic { images, labels } => {
            let inputs = load_fixtures(&cfg, &images, &labels, 4)?;
            let refs: Vec<(&ImageRaster, &[Detection], ImageId)> = inputs
                .iter()
                .map(|i| (&i.raster, i.labels.as_slice(), i.id))
                .collect();
            let mut r = rng::derived(cfg.seed, &[0x305a1c]);
            let out =
                mixpl_core::pipeline::pseudo_mosaic(&refs, cfg.mosaic_range, &mut r, cfg.filter)?;
            write_mixed_image(&cfg, "mosaic", &out.raster, &out.labels, &out.sources)?;
            println!(
                "mosaic of {:?} -> {} labels ({} dropped), {}x{}",
                out.sources.map(|s| s.0),
                out.labels.len(),
                out.dropped,
                out.raster.width(),
                out.raster.height()
            );
        }
        Command::ResamplePlan => {
            let index = cfg.load_dataset()?;
            let (labeled, _) = coco::split_dataset(&index, cfg.split_fraction, cfg.seed)?;
            let plan = RepeatPlan::build(&labeled, cfg.resample_power)?;
            let mut cat = String::from("category,name,frequency,repeat\n");
            for (id, f) in &plan.frequency {
                let name = labeled.categories().get(id).cloned().unwrap_or_default();
                writeln!(
                    cat,
                    "{id},{name},{f:.6},{:.4}",
                    plan.category_repeat[id]
                )
                .expect("write to string");
            }
            for id in &plan.unresamplable {
                let name = labeled.categories().get(id).cloned().unwrap_or_default();
                writeln!(cat, "{id},{name},0.000000,excluded").expect("write to string");
            }
            let cat_path = cfg.output_dir.join("resample_categories.csv");
            fs::write(&cat_path, cat).map_err(|e| mixpl_core::Error::io(&cat_path, e))?;

            let mut img = String::from("image,repeat\n");
            for (id, r) in &plan.image_repeat {
                writeln!(img, "{id},{r:.4}").expect("write to string");
            }
            let img_path = cfg.output_dir.join("resample_images.csv");
            fs::write(&img_path, img).map_err(|e| mixpl_core::Error::io(&img_path, e))?;
            println!(
                "resample plan (power {}) over {} categories -> {} and {}",
                plan.power,
                plan.frequency.len(),
                cat_path.display(),
                img_path.display()
            );
        }
        Command::GradDensity { svg, thresholds } => {
            let index = cfg.load_dataset()?;
            let (labeled, unlabeled) = coco::split_dataset(&index, cfg.split_fraction, cfg.seed)?;
            let mut profile = cfg.teacher_profile();
            profile.attach_deciles(&labeled);
            let mut scene_rng = rng::derived(cfg.seed, &[0x5ce9e5]);
            let scenes: Vec<_> = unlabeled
                .images()
                .iter()
                .take(32)
                .map(|img| sample_scene(&profile, img, cfg.iterations, &mut scene_rng))
                .collect();
            let compare = CompareConfig {
                thresholds: thresholds.unwrap_or_else(|| vec![0.5, 0.7, 0.9]),
                resize_short: cfg.resize_short,
                resize_long_cap: cfg.resize_long_cap,
                flip_prob: cfg.flip_prob,
                mixup_alpha: cfg.mixup_alpha,
                mosaic_range: cfg.mosaic_range,
                seed: cfg.seed,
                ..CompareConfig::default()
            };
            let hists = grad::compare_augmentations(&scenes, &ResponseModel::default(), &compare);
            let dir = cfg.output_dir.join("grad_density");
            grad::write_histograms(&hists, &dir)?;
            if svg {
                grad::write_svg(&hists, &cfg.output_dir.join("grad_density.svg"))?;
            }
            println!(
                "wrote {} histograms to {} ({} scenes)",
                hists.len(),
                dir.display(),
                scenes.len()
            );
        }
        Command::Simulate => {
            let index = cfg.load_dataset()?;
            let (labeled, unlabeled) = coco::split_dataset(&index, cfg.split_fraction, cfg.seed)?;
            let mut profile = cfg.teacher_profile();
            profile.attach_deciles(&labeled);
            let spec = synthetic_for(&cfg);
            let stats = sim::run_simulation(
                &labeled,
                &unlabeled,
                &profile,
                &cfg.sim_config(),
                |img| spec.raster_for(img),
            )?;
            let path = cfg.output_dir.join("sim_stats.csv");
            sim::write_stats(&stats, labeled.categories(), &path)?;
            println!(
                "simulated {} iterations over {} labeled / {} unlabeled images -> {}",
                stats.len(),
                labeled.len(),
                unlabeled.len(),
                path.display()
            );
        }
        Command::Stats { detections } => {
            let index = cfg.load_dataset()?;
            let dets = detections
                .as_deref()
                .map(coco::load_detections)
                .transpose()?;
            let path = cfg.output_dir.join("dataset_stats.csv");
            write_dataset_stats(&index, dets.as_ref(), &path)?;
            println!("dataset stats for {} images -> {}", index.len(), path.display());
        }
    }
    Ok(())
}

fn synthetic_for(cfg: &Config) -> SyntheticSpec {
    let mut spec = cfg.dataset.synthetic.clone();
    spec.seed = spec.seed.wrapping_add(cfg.seed);
    spec
}

/// Load CLI fixture images: PNGs with optional COCO-results labels, or
/// synthetic images when none are given.
fn load_fixtures(
    cfg: &Config,
    images: &[PathBuf],
    labels: &[PathBuf],
    want: usize,
) -> mixpl_core::Result<Vec<PipelineImage>> {
    if images.is_empty() {
        let spec = SyntheticSpec {
            num_images: want,
            ..synthetic_for(cfg)
        };
        let index = spec.generate()?;
        return Ok(index
            .images()
            .iter()
            .map(|img| PipelineImage {
                id: img.id,
                raster: spec.raster_for(img),
                labels: img.annotations.iter().map(|a| a.as_detection()).collect(),
            })
            .collect());
    }
    if images.len() != want {
        return Err(mixpl_core::Error::Config(format!(
            "expected {want} --image inputs, got {}",
            images.len()
        )));
    }
    if !labels.is_empty() && labels.len() != want {
        return Err(mixpl_core::Error::Config(format!(
            "expected {want} --labels inputs to match the images, got {}",
            labels.len()
        )));
    }
    images
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let raster = ImageRaster::read_png(path)?;
            let dets = match labels.get(i) {
                Some(lp) => coco::load_detections(lp)?
                    .into_values()
                    .flatten()
                    .collect(),
                None => Vec::new(),
            };
            Ok(PipelineImage {
                id: ImageId(i as u64 + 1),
                raster,
                labels: dets,
            })
        })
        .collect()
}

/// PNG + per-image COCO results + manifest line for a mixed output.
fn write_mixed_image(
    cfg: &Config,
    stem: &str,
    raster: &ImageRaster,
    labels: &[Detection],
    sources: &[ImageId],
) -> mixpl_core::Result<()> {
    raster.write_png(&cfg.output_dir.join(format!("{stem}.png")))?;
    let mut per_image = BTreeMap::new();
    per_image.insert(ImageId(0), labels.to_vec());
    coco::emit_detections(&per_image, &cfg.output_dir.join(format!("{stem}_labels.json")))?;
    let ids: Vec<String> = sources.iter().map(|s| s.to_string()).collect();
    let manifest = format!("0 {stem} weight={} sources={}\n", cfg.w_u, ids.join(","));
    let mp = cfg.output_dir.join(format!("{stem}_manifest.txt"));
    fs::write(&mp, manifest).map_err(|e| mixpl_core::Error::io(&mp, e))?;
    Ok(())
}

fn write_dataset_stats(
    index: &mixpl_core::DatasetIndex,
    detections: Option<&BTreeMap<ImageId, Vec<Detection>>>,
    path: &std::path::Path,
) -> mixpl_core::Result<()> {
    let mut gt_scale = [0u64; 3];
    let mut gt_cat: BTreeMap<mixpl_core::CategoryId, u64> = BTreeMap::new();
    for img in index.images() {
        for ann in &img.annotations {
            gt_scale[scale_idx(ann.bbox.scale_class())] += 1;
            *gt_cat.entry(ann.category).or_default() += 1;
        }
    }
    let mut pl_scale = [0u64; 3];
    let mut pl_cat: BTreeMap<mixpl_core::CategoryId, u64> = BTreeMap::new();
    if let Some(dets) = detections {
        for list in dets.values() {
            for d in list {
                pl_scale[scale_idx(d.bbox.scale_class())] += 1;
                *pl_cat.entry(d.category).or_default() += 1;
            }
        }
    }
    let mut out = String::from("key,gt,detections\n");
    for (i, class) in ScaleClass::ALL.iter().enumerate() {
        writeln!(out, "scale_{},{},{}", class.label(), gt_scale[i], pl_scale[i])
            .expect("write to string");
    }
    for (id, name) in index.categories() {
        writeln!(
            out,
            "category_{id}_{name},{},{}",
            gt_cat.get(id).copied().unwrap_or(0),
            pl_cat.get(id).copied().unwrap_or(0)
        )
        .expect("write to string");
    }
    fs::write(path, out).map_err(|e| mixpl_core::Error::io(path, e))
}

fn scale_idx(class: ScaleClass) -> usize {
    match class {
        ScaleClass::Small => 0,
        ScaleClass::Medium => 1,
        ScaleClass::Large => 2,
    }
}
