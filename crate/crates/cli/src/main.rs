mod dataset;
mod imageio;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dataset::{mask_files, DatasetIndex, MASK_SUFFIX};
use imageio::{load_mask, load_rgb, overlay, save_mask, save_overlay, save_plane, save_rgb};
use rayon::prelude::*;
use salmap::config::PipelineConfig;
use salmap::evalkit::{batch_evaluate, EvalPair};
use salmap::imgcore::Plane;
use salmap::model_io::{atomic_write, load_model, save_model};
use salmap::pipeline::{segment_image, train, Sample};
use salmap::preprocess::{HookRegistry, ImageLoader};
use salmap::synthgen::{generate_one, SynthSpec};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "salmap", version, about = "Saliency-guided skin lesion segmentation")]
struct Cli {
    /// Worker threads for batch work (default: all cores).
    #[arg(long, global = true, env = "SALMAP_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a saliency model from images/ and masks/.
    Train(TrainArgs),
    /// Segment one image or a directory of images.
    Segment(SegmentArgs),
    /// Compare predicted masks with ground truth and write per-image metrics.
    Eval(EvalArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pipeline configuration (JSON); the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_color_constancy: bool,
    #[arg(long)]
    hair_hook: Option<String>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the pseudo-background strip, circle map, per-level maps and level-set snapshots.
    #[arg(long)]
    dump_intermediate: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator settings: a JSON file or an inline JSON object.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
}

const SNAPSHOT_EVERY: usize = 50;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a).map(|()| 0),
        Command::Segment(a) => cmd_segment(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a).map(|()| 0),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("{failed} item(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn hooks() -> HookRegistry {
    let loader: Arc<ImageLoader> = Arc::new(|p: &Path| {
        load_rgb(p).map_err(|e| salmap::Error::Io(std::io::Error::other(format!("{e:#}"))))
    });
    HookRegistry::default().with_passthrough(loader)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg: PipelineConfig = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?)
            .with_context(|| format!("bad configuration in {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(l) = a.levels {
        cfg.multiseg.level_count = l;
    }
    if let Some(t) = a.trees {
        cfg.forest.tree_count = t;
    }
    if let Some(s) = a.seed {
        cfg.forest.seed = s;
    }
    if a.no_color_constancy {
        cfg.preprocess.color_constancy = false;
    }
    if let Some(h) = a.hair_hook {
        cfg.preprocess.hair_hook = h;
    }
    cfg.validate()?;
    let registry = hooks();
    registry.get(&cfg.preprocess.hair_hook)?;

    let index = DatasetIndex::scan(&a.data)?;
    index.require_gt(&a.data)?;
    if index.items.len() < 2 {
        bail!("{} has {} image/mask pairs; training needs at least 2", a.data.display(), index.items.len());
    }
    let samples = index
        .items
        .par_iter()
        .map(|item| {
            let gt = item.gt.as_ref().expect("checked above");
            Ok(Sample {
                image: load_rgb(&item.image)?,
                gt: Some(load_mask(gt)?),
                source: Some(item.image.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    eprintln!("training on {} images", samples.len());
    let (model, report) = train(&samples, &cfg, &registry)?;
    save_model(&model, &a.out).with_context(|| format!("cannot write model {}", a.out.display()))?;
    eprintln!(
        "samples {} (excluded {}), out-of-bag mse {}, fusion residual {:.6}",
        report.sample_count,
        report.excluded_count,
        report.oob_mse.map_or("n/a".to_string(), |m| format!("{m:.6}")),
        report.fusion_residual
    );
    let weights: Vec<String> = model.fusion_weights.iter().map(|w| format!("{w:.6}")).collect();
    eprintln!("level weights [{}]", weights.join(", "));
    Ok(())
}

fn phi_plane(phi: &Plane) -> Plane {
    // zero level at mid-gray, 1/32 gray level per pixel of distance
    phi.map(|v| 0.5 + v / 64.0)
}

fn cmd_segment(a: SegmentArgs) -> Result<usize> {
    let model = load_model(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    let registry = hooks();
    let items = if a.input.is_file() {
        vec![dataset::DatasetItem {
            stem: a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            image: a.input.clone(),
            gt: None,
        }]
    } else {
        DatasetIndex::scan(&a.input)?.items
    };
    if items.is_empty() {
        bail!("no images found in {}", a.input.display());
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let snapshot_every = if a.dump_intermediate { SNAPSHOT_EVERY } else { 0 };

    let failed: usize = items
        .par_iter()
        .map(|item| {
            let run = || -> Result<()> {
                let img = load_rgb(&item.image)?;
                let gt = item.gt.as_deref().map(load_mask).transpose()?;
                let seg = segment_image(&model, &img, Some(item.image.clone()), &registry, snapshot_every)?;
                let (sal, initial, fin) = seg.resized(img.width(), img.height());
                let out = |suffix: &str| a.out.join(format!("{}_{suffix}.png", item.stem));
                save_plane(&out("saliency"), &sal)?;
                save_mask(&out("initial"), &initial)?;
                save_mask(&out("final"), &fin)?;
                let gt = gt.filter(|g| g.width() == img.width() && g.height() == img.height());
                save_overlay(&out("overlay"), &overlay(&img, gt.as_ref(), &initial, &fin))?;
                if a.dump_intermediate {
                    save_rgb(&out("preprocessed"), &seg.preprocessed)?;
                    save_mask(&out("strip"), &seg.strip_mask)?;
                    save_plane(&out("circles"), &seg.circle_probability)?;
                    for (l, map) in seg.level_maps.iter().enumerate() {
                        save_plane(&out(&format!("level{l:02}")), map)?;
                    }
                    for (it, phi) in &seg.phi_snapshots {
                        save_plane(&out(&format!("phi{it:04}")), &phi_plane(phi))?;
                    }
                }
                Ok(())
            };
            match run() {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("{}: {e:#}", item.image.display());
                    1
                }
            }
        })
        .sum();
    eprintln!("segmented {} of {} images into {}", items.len() - failed, items.len(), a.out.display());
    Ok(failed)
}

fn cmd_eval(a: EvalArgs) -> Result<usize> {
    let preds = mask_files(&a.pred, &["_final", MASK_SUFFIX])?;
    let gts = mask_files(&a.gt, &[MASK_SUFFIX])?;
    let only_pred: Vec<&String> = preds.keys().filter(|k| !gts.contains_key(*k)).collect();
    let only_gt: Vec<&String> = gts.keys().filter(|k| !preds.contains_key(*k)).collect();
    let common: Vec<&String> = preds.keys().filter(|k| gts.contains_key(*k)).collect();
    if common.is_empty() {
        bail!(
            "no common stems\n  predictions: {:?}\n  ground truth: {:?}",
            preds.keys().collect::<Vec<_>>(),
            gts.keys().collect::<Vec<_>>()
        );
    }
    for s in &only_pred {
        eprintln!("no ground truth for prediction `{s}`");
    }
    for s in &only_gt {
        eprintln!("no prediction for ground truth `{s}`");
    }
    let pairs = common
        .par_iter()
        .map(|&stem| {
            Ok(EvalPair {
                id: stem.clone(),
                pred: load_mask(&preds[stem])?,
                gt: load_mask(&gts[stem])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = batch_evaluate(&pairs)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    atomic_write(&a.out, &csv).with_context(|| format!("cannot write {}", a.out.display()))?;
    let m = report.mean;
    eprintln!(
        "{} images: dsc {:.4} jsi {:.4} acc {:.4} sens {:.4} spec {:.4}",
        report.rows.len(),
        m.dsc,
        m.jsi,
        m.acc,
        m.sens,
        m.spec
    );
    Ok(only_pred.len() + only_gt.len())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &a.spec {
        None => SynthSpec::default(),
        Some(s) if Path::new(s).is_file() => {
            serde_json::from_str(&std::fs::read_to_string(s)?).with_context(|| format!("bad spec in {s}"))?
        }
        Some(s) => serde_json::from_str(s).map_err(|e| anyhow!("--spec is neither a file nor valid JSON: {e}"))?,
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(c) = a.count {
        spec.count = c;
    }
    spec.validate()?;
    let (images, masks) = (a.out.join("images"), a.out.join("masks"));
    std::fs::create_dir_all(&images)?;
    std::fs::create_dir_all(&masks)?;
    (0..spec.count).into_par_iter().try_for_each(|i| -> Result<()> {
        let s = generate_one(&spec, i)?;
        let stem = format!("synth_{i:04}");
        save_rgb(&images.join(format!("{stem}.png")), &s.image)?;
        save_mask(&masks.join(format!("{stem}{MASK_SUFFIX}.png")), &s.gt)
    })?;
    eprintln!("wrote {} images to {}", spec.count, a.out.display());
    Ok(())
}
