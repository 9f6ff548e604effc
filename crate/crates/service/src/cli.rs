//! Command-line pipeline: data generation, training, segmentation,
//! evaluation, vote maps and the HTTP service.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use flowsnake::evaluation::{
    angle_stats, angle_table, evaluate_case, metrics_table, signed_length_error, vote_map, Aggregate,
    AngleErrorStats, Case, CrossvalConfig, LengthHistogram, RunRecord,
};
use flowsnake::flowengine::{
    estimate_means, evolve, BaselinePredictor, CnnPredictor, FlowPredictor, OracleSdmPredictor,
};
use flowsnake::geometry::{rasterize, signed_distance_map, Vec2};
use flowsnake::io::{read_curve, read_image, read_mask, write_curve, write_image, write_json, write_mask};
use flowsnake::neuralflow::{load_weights, save_weights, train, write_history_csv, NetShape};
use flowsnake::patchdata::{generate_training_set, read_dataset, write_dataset, Dataset, GenConfig};
use flowsnake::synth::synth_corpus;
use flowsnake::{Error, Image32, Net32};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Overrides, PipelineConfig};

/// Exit status of a successful command.
pub const EXIT_OK: u8 = 0;
/// Any error other than a usage error.
pub const EXIT_FAILURE: u8 = 1;
/// The contour collapsed during `segment`.
pub const EXIT_COLLAPSED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "flowsnake", version, about = "Active contours driven by a learned flow field")]
pub struct Cli {
    /// TOML pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic image/mask corpus to the output directory.
    Synth {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Extract training pairs into the dataset directory.
    GenData {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a network on the dataset directory.
    Train {
        /// Not supported; training always starts from a fresh initialization.
        #[arg(long)]
        resume: bool,
        /// History CSV path (default: the model path with a `.csv` extension).
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evolve a contour on one image.
    Segment(SegmentArgs),
    /// Flow-statistics and segmentation reports on held-out cases.
    Evaluate(EvaluateArgs),
    /// Accumulate votes of patches sampled on a grid.
    Votemap {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Cnn,
    Oracle,
    Baseline,
}

#[derive(clap::Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Initial contour as `{"vertices": [[x, y], ...]}`.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long, value_enum, default_value = "cnn")]
    pub predictor: PredictorKind,
    /// Ground-truth mask for the oracle predictor.
    #[arg(long)]
    pub sdm_from: Option<PathBuf>,
    /// Ground-truth mask from which the baseline estimates its two means.
    #[arg(long)]
    pub mu_from_gt: Option<PathBuf>,
    #[arg(long)]
    pub mu_in: Option<f64>,
    #[arg(long)]
    pub mu_out: Option<f64>,
    /// Also write the per-iteration trace.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(clap::Args, Debug)]
pub struct EvaluateArgs {
    /// Methods to score, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cnn,baseline")]
    pub predictors: Vec<PredictorKind>,
    /// Seed of the held-out synthetic corpus (default: master seed + 1).
    #[arg(long)]
    pub cases_seed: Option<u64>,
    /// Persisted pairs for the flow statistics instead of pairs drawn from
    /// the evaluation cases.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// What a command reports back to `main`.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Collapsed,
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Synth { overrides } => synth(&PipelineConfig::resolve(file, &overrides)?),
        Command::GenData { overrides } => gen_data(&PipelineConfig::resolve(file, &overrides)?),
        Command::Train {
            resume,
            history,
            overrides,
        } => {
            if resume {
                bail!("--resume is not supported: training always starts from a fresh initialization");
            }
            train_model(&PipelineConfig::resolve(file, &overrides)?, history)
        }
        Command::Segment(args) => {
            let cfg = PipelineConfig::resolve(file, &args.overrides)?;
            segment(&cfg, &args)
        }
        Command::Evaluate(args) => {
            let cfg = PipelineConfig::resolve(file, &args.overrides)?;
            evaluate(&cfg, &args)
        }
        Command::Votemap {
            image,
            stride,
            overrides,
        } => votemap(&PipelineConfig::resolve(file, &overrides)?, &image, stride),
        Command::Serve { host, overrides } => {
            let cfg = PipelineConfig::resolve(file, &overrides)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::http::serve(&host, cfg.port, cfg.models_dir.clone()))?;
            Ok(Outcome::Done)
        }
        Command::Config { overrides } => {
            print!("{}", PipelineConfig::resolve(file, &overrides)?.to_toml());
            Ok(Outcome::Done)
        }
    }
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "pgm" | "ppm")
    )
}

/// `<name>.<ext>` images paired with `<name>_mask.<ext>` masks, sorted by
/// name. Problems with individual files are reported and the file skipped.
pub fn load_cases(dir: &Path) -> anyhow::Result<Vec<Case<f32>>> {
    let entries = fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| is_image(p)).collect();
    files.sort();
    let mut cases = Vec::new();
    for path in &files {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if stem.ends_with("_mask") {
            continue;
        }
        let mask_path = files
            .iter()
            .find(|q| q.file_stem().is_some_and(|s| s.to_string_lossy() == format!("{stem}_mask")));
        let Some(mask_path) = mask_path else {
            eprintln!("skipping {}: no {stem}_mask image", path.display());
            continue;
        };
        let loaded = read_image::<f32>(path).and_then(|img| Ok((img, read_mask(mask_path)?)));
        match loaded {
            Ok((image, mask)) if image.width() == mask.width() && image.height() == mask.height() => {
                cases.push(Case { name: stem, image, mask })
            }
            Ok((image, mask)) => eprintln!(
                "skipping {}: image is {}x{} but mask is {}x{}",
                path.display(),
                image.width(),
                image.height(),
                mask.width(),
                mask.height()
            ),
            Err(e) => eprintln!("skipping {}: {e}", path.display()),
        }
    }
    if cases.is_empty() {
        bail!("found 0 image/mask pairs in {}", dir.display());
    }
    Ok(cases)
}

/// Cases from the data directory, or a synthetic corpus drawn with `seed`.
fn cases(cfg: &PipelineConfig, seed: u64) -> anyhow::Result<Vec<Case<f32>>> {
    match &cfg.data_dir {
        Some(dir) => load_cases(dir),
        None => Ok(synth_corpus(&cfg.synth, cfg.synth_count, seed)?),
    }
}

fn synth(cfg: &PipelineConfig) -> anyhow::Result<Outcome> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for case in synth_corpus::<f32>(&cfg.synth, cfg.synth_count, cfg.eval_seed())? {
        write_image(&dir.join(format!("{}.png", case.name)), &case.image)?;
        write_mask(&dir.join(format!("{}_mask.png", case.name)), &case.mask)?;
    }
    println!("wrote {} image/mask pairs to {}", cfg.synth_count, dir.display());
    Ok(Outcome::Done)
}

/// Pairs from every case, in case order, using one generator seeded by
/// `gen.seed`.
pub fn pairs_from_cases(cases: &[Case<f32>], gen: &GenConfig) -> anyhow::Result<(Dataset<f32>, Vec<String>)> {
    let channels = cases.first().map_or(1, |c| c.image.channels());
    let mut ds = Dataset::new(gen.patch_size, channels);
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    let mut sources = Vec::new();
    for case in cases {
        let pairs = generate_training_set(&case.image, &case.mask, gen, &mut rng)
            .with_context(|| format!("generating pairs for {}", case.name))?;
        if pairs.is_empty() {
            eprintln!("{}: no pairs", case.name);
            continue;
        }
        ds.append(&Dataset::from_pairs(&pairs)?)
            .with_context(|| format!("{}: channel count differs from the first image", case.name))?;
        sources.push(case.name.clone());
    }
    Ok((ds, sources))
}

fn gen_data(cfg: &PipelineConfig) -> anyhow::Result<Outcome> {
    let cases = cases(cfg, cfg.gen.seed)?;
    let (ds, sources) = pairs_from_cases(&cases, &cfg.gen)?;
    if ds.is_empty() {
        bail!("no training pairs could be extracted");
    }
    let manifest = write_dataset(&cfg.dataset_dir, &ds, &cfg.gen, sources)?;
    println!("{}", cfg.to_toml());
    println!(
        "wrote {} pairs ({} channel(s), {}px) from {} images to {} (seed {})",
        manifest.count,
        manifest.d,
        manifest.size,
        manifest.sources.len(),
        cfg.dataset_dir.display(),
        manifest.seed
    );
    Ok(Outcome::Done)
}

fn train_model(cfg: &PipelineConfig, history: Option<PathBuf>) -> anyhow::Result<Outcome> {
    let (ds, manifest) = read_dataset::<f32>(&cfg.dataset_dir)
        .with_context(|| format!("reading dataset {}", cfg.dataset_dir.display()))?;
    let mut shape = NetShape::standard(manifest.d);
    shape.input_size = manifest.size;
    println!("training on {} pairs, {} parameters", ds.len(), shape.param_count());
    let outcome = train(&ds, shape, &cfg.train, |e| {
        println!("epoch {:>3}  train {:.4}  val {:.4}", e.epoch, e.train_loss, e.val_loss)
    })?;
    if let Some(parent) = cfg.model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_weights(&outcome.net, &cfg.model_path)?;
    let history = history.unwrap_or_else(|| cfg.model_path.with_extension("csv"));
    let file = fs::File::create(&history).with_context(|| format!("creating {}", history.display()))?;
    write_history_csv(&outcome.history, std::io::BufWriter::new(file))?;
    println!(
        "best epoch {} written to {}; history in {}",
        outcome.best_epoch,
        cfg.model_path.display(),
        history.display()
    );
    Ok(Outcome::Done)
}

fn load_net(path: &Path) -> anyhow::Result<Arc<Net32>> {
    Ok(Arc::new(load_weights(path).with_context(|| format!("loading model {}", path.display()))?))
}

fn segment_predictor(cfg: &PipelineConfig, args: &SegmentArgs, image: &Image32) -> anyhow::Result<Box<dyn FlowPredictor<f32>>> {
    let same_size = |w: usize, h: usize| -> anyhow::Result<()> {
        if (w, h) != (image.width(), image.height()) {
            return Err(Error::ExtentMismatch(image.width(), image.height(), w, h).into());
        }
        Ok(())
    };
    Ok(match args.predictor {
        PredictorKind::Cnn => Box::new(CnnPredictor::new(load_net(&cfg.model_path)?)),
        PredictorKind::Oracle => {
            let path = args.sdm_from.as_ref().ok_or_else(|| anyhow!("the oracle predictor needs --sdm-from <mask>"))?;
            let mask = read_mask(path)?;
            same_size(mask.width(), mask.height())?;
            Box::new(OracleSdmPredictor::new(signed_distance_map(&mask)?))
        }
        PredictorKind::Baseline => match (args.mu_in, args.mu_out, &args.mu_from_gt) {
            (Some(i), Some(o), _) => Box::new(BaselinePredictor::new(i as f32, o as f32)),
            (_, _, Some(path)) => {
                let mask = read_mask(path)?;
                same_size(mask.width(), mask.height())?;
                let (i, o) = estimate_means(image, &mask)?;
                Box::new(BaselinePredictor::new(i, o))
            }
            _ => bail!("the baseline predictor needs --mu-from-gt <mask> or both --mu-in and --mu-out"),
        },
    })
}

#[derive(Serialize)]
struct SegmentSummary {
    predictor: PredictorKind,
    iterations: usize,
    termination: Option<flowsnake::flowengine::Termination>,
    error: Option<String>,
}

fn segment(cfg: &PipelineConfig, args: &SegmentArgs) -> anyhow::Result<Outcome> {
    let image = read_image::<f32>(&args.image)?;
    let init = read_curve::<f32>(&args.init).with_context(|| format!("reading contour {}", args.init.display()))?;
    let predictor = segment_predictor(cfg, args, &image)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (curve, trace, error) = match evolve(&image, &init, &*predictor, &cfg.evolution) {
        Ok((curve, trace)) => (Some(curve), trace, None),
        Err(e) if matches!(e.error, Error::CurveCollapse { .. }) => (None, e.trace, Some(e.error)),
        Err(e) => return Err(e.error.into()),
    };
    if args.trace {
        write_json(&out.join("trace.json"), &trace)?;
    }
    let summary = SegmentSummary {
        predictor: args.predictor,
        iterations: trace.steps.len(),
        termination: trace.termination,
        error: error.as_ref().map(|e| e.to_string()),
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    match curve {
        Some(curve) => {
            write_curve(&out.join("contour.json"), &curve)?;
            write_mask(&out.join("mask.png"), &rasterize(&curve, image.width(), image.height()))?;
            Ok(Outcome::Done)
        }
        None => {
            eprintln!("{}", error.map_or_else(String::new, |e| e.to_string()));
            Ok(Outcome::Collapsed)
        }
    }
}

#[derive(Serialize)]
pub struct FlowReport {
    pub pairs: usize,
    pub angles: AngleErrorStats,
    pub length_within_2px: f64,
    pub length_histogram: LengthHistogram,
}

#[derive(Serialize)]
pub struct SegmentationReport {
    pub cases: Vec<String>,
    pub inits_per_image: usize,
    pub seed: u64,
    pub methods: BTreeMap<String, Aggregate>,
    pub runs: BTreeMap<String, Vec<RunRecord>>,
}

fn evaluate(cfg: &PipelineConfig, args: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let seed = args.cases_seed.unwrap_or(cfg.eval_seed().wrapping_add(1));
    let cases = cases(cfg, seed)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let net = if args.predictors.contains(&PredictorKind::Cnn) {
        Some(load_net(&cfg.model_path)?)
    } else {
        None
    };

    if let Some(net) = &net {
        let ds = match &args.pairs {
            Some(dir) => read_dataset::<f32>(dir)?.0,
            None => pairs_from_cases(&cases, &cfg.gen)?.0,
        };
        let pred: Vec<Vec2<f32>> = net.forward_flat(&ds.inputs)?.into_iter().map(|[x, y]| Vec2::new(x, y)).collect();
        let gt: Vec<Vec2<f32>> = ds.targets.iter().map(|&[x, y]| Vec2::new(x, y)).collect();
        let angles = angle_stats(&pred, &gt)?;
        let hist = signed_length_error(&pred, &gt)?;
        let report = FlowReport {
            pairs: ds.len(),
            angles,
            length_within_2px: hist.fraction_within(-2, 2),
            length_histogram: hist.clone(),
        };
        write_json(&out.join("flow_report.json"), &report)?;
        let text = angle_table(&[("all".to_string(), angles)]);
        fs::write(out.join("flow_report.txt"), &text)?;
        hist.write_csv(fs::File::create(out.join("length_histogram.csv"))?)?;
        print!("{text}");
        println!("length error within [-2, 2] px: {:.1}%", 100.0 * report.length_within_2px);
    }

    let cv = CrossvalConfig {
        folds: 1,
        inits_per_image: cfg.inits_per_image,
        seed,
        evolution: cfg.evolution.clone(),
    };
    let mut methods = BTreeMap::new();
    let mut runs = BTreeMap::new();
    for &kind in &args.predictors {
        let mut records = Vec::new();
        for (i, case) in cases.iter().enumerate() {
            let predictor: Box<dyn FlowPredictor<f32>> = match kind {
                PredictorKind::Cnn => Box::new(CnnPredictor::new(net.clone().expect("loaded above"))),
                PredictorKind::Oracle => Box::new(OracleSdmPredictor::new(signed_distance_map(&case.mask)?)),
                PredictorKind::Baseline => {
                    let (mi, mo) = estimate_means(&case.image, &case.mask)?;
                    Box::new(BaselinePredictor::new(mi, mo))
                }
            };
            records.extend(evaluate_case(i, 0, case, &*predictor, &cv));
        }
        let name = format!("{kind:?}").to_lowercase();
        methods.insert(name.clone(), Aggregate::from_runs(&records));
        runs.insert(name, records);
    }
    let columns: Vec<(String, &Aggregate)> = methods.iter().map(|(k, v)| (k.clone(), v)).collect();
    let text = metrics_table(&columns);
    fs::write(out.join("segmentation_report.txt"), &text)?;
    let report = SegmentationReport {
        cases: cases.iter().map(|c| c.name.clone()).collect(),
        inits_per_image: cfg.inits_per_image,
        seed,
        methods,
        runs,
    };
    write_json(&out.join("segmentation_report.json"), &report)?;
    print!("{text}");
    Ok(Outcome::Done)
}

fn votemap(cfg: &PipelineConfig, image: &Path, stride: usize) -> anyhow::Result<Outcome> {
    let image = read_image::<f32>(image)?;
    let net = load_net(&cfg.model_path)?;
    let map = vote_map(&image, &net, stride)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_image(&out.join("votemap.png"), &map.to_log_image())?;
    map.write_counts_csv(std::io::BufWriter::new(fs::File::create(out.join("votes.csv"))?))?;
    println!(
        "{} votes cast, {} landed outside the image, peak {}",
        map.total() + map.out_of_image,
        map.out_of_image,
        map.max()
    );
    Ok(Outcome::Done)
}
