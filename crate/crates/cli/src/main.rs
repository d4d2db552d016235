use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use blastsel::classifiers::{ClassifierConfig, ClassifierKind, ForestParams};
use blastsel::dataset::{apply_mask, load_dataset, save_dataset};
use blastsel::filters::{score_features, select_top_k, FilterMethod, FilterOptions, DEFAULT_MI_BINS};
use blastsel::imgprep::{preprocess_image, RgbImage};
use blastsel::metaheuristics::{run_search, SearchAlgo, SearchConfig};
use blastsel::metrics::{classification_metrics, confusion_matrix, roc_curve};
use blastsel::pipeline::{generate_synthetic, run_pipeline, PipelineConfig};
use blastsel::{ConfusionMatrix, Dataset, Error, FeatureMask, TrainedModel};

#[derive(Parser)]
#[command(
    name = "blastsel",
    version,
    about = "Feature selection and classification for blast-cell images"
)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "BLASTSEL_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment, crop and resize every PNG/BMP image in a directory.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip images without foreground instead of failing.
        #[arg(long)]
        skip_empty: bool,
    },
    /// Score features with a filter and keep the top k.
    Select {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        k: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed of the random forest (rf only).
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MI_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 100)]
        trees: usize,
    },
    /// Wrapper feature search on a training set.
    Metasearch {
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long = "in")]
        input: PathBuf,
        /// JSON search parameters (aco, ga, fitness); defaults if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a classifier and save it as JSON.
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON hyperparameters for the chosen model.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Mask file from `select` or `metasearch` restricting the columns.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a saved model on a labelled CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Write the metrics JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        roc: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with planted informative features.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        informative: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the planted feature indices as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Variance,
    Anova,
    Mi,
    Rf,
}

impl From<MethodArg> for FilterMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Variance => FilterMethod::Variance,
            MethodArg::Anova => FilterMethod::AnovaF,
            MethodArg::Mi => FilterMethod::MutualInfo,
            MethodArg::Rf => FilterMethod::RfImportance,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Ga,
    Baco,
    Gabaco,
    Exhaustive,
}

impl From<AlgoArg> for SearchAlgo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Ga => SearchAlgo::Ga,
            AlgoArg::Baco => SearchAlgo::Baco,
            AlgoArg::Gabaco => SearchAlgo::Gabaco,
            AlgoArg::Exhaustive => SearchAlgo::Exhaustive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Mlp,
    Dt,
    Rf,
    Gnb,
}

impl From<ModelArg> for ClassifierKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mlp => ClassifierKind::Mlp,
            ModelArg::Dt => ClassifierKind::Dt,
            ModelArg::Rf => ClassifierKind::Rf,
            ModelArg::Gnb => ClassifierKind::Gnb,
        }
    }
}

/// Written by `select`; `metasearch` results share the `selected` and
/// `n_features` fields so either can be passed as `--mask`.
#[derive(Serialize, Deserialize)]
struct MaskFile {
    method: FilterMethod,
    k: usize,
    seed: u64,
    n_features: usize,
    selected: Vec<usize>,
}

#[derive(Serialize)]
struct SearchFile<'a> {
    algo: SearchAlgo,
    seed: u64,
    n_features: usize,
    selected: Vec<usize>,
    fitness: f64,
    history: &'a [f64],
    evaluations: usize,
    params: &'a SearchConfig,
}

#[derive(Deserialize)]
struct AnyMask {
    n_features: usize,
    selected: Vec<usize>,
}

#[derive(Serialize)]
struct EvaluationFile {
    n_samples: usize,
    confusion_matrix: ConfusionMatrix,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    auc: f64,
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn masked(ds: Dataset, mask: Option<&Path>) -> Result<Dataset> {
    let Some(path) = mask else { return Ok(ds) };
    let m: AnyMask = read_json(path)?;
    if m.n_features != ds.n_features() {
        bail!(
            "mask {} was made for {} features, data has {}",
            path.display(),
            m.n_features,
            ds.n_features()
        );
    }
    let mask = FeatureMask::from_indices(m.n_features, &m.selected)?;
    Ok(apply_mask(&ds, &mask)?)
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = PipelineConfig::load(config)?;
    if out.is_some() {
        cfg.output_dir = out;
    }
    let Some(dir) = cfg.output_dir.clone() else {
        bail!("no output directory: pass --out or set output_dir in the config");
    };
    let result = run_pipeline::<f64>(&cfg)?;
    let r = &result.report;
    println!(
        "accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} auc {:.4} features {} -> {}",
        r.metrics.accuracy,
        r.metrics.precision,
        r.metrics.recall,
        r.metrics.f1,
        r.auc,
        r.selected_features.len(),
        dir.display()
    );
    Ok(())
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("bmp"))
}

fn preprocess(input: &Path, out: &Path, skip_empty: bool) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && is_image(p));
    files.sort();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let results: Vec<blastsel::Result<RgbImage>> = files
        .par_iter()
        .map(|p| RgbImage::load(p).and_then(|img| preprocess_image(&img)))
        .collect();
    let (mut written, mut skipped) = (0, 0);
    for (path, result) in files.iter().zip(results) {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .context("non-UTF-8 file name")?;
        match result {
            Ok(img) => {
                img.save_png(out.join(format!("{id}.png")))?;
                written += 1;
            }
            Err(Error::EmptyForeground) if skip_empty => {
                eprintln!("skipping {}: no foreground", path.display());
                skipped += 1;
            }
            Err(e) => return Err(e).with_context(|| format!("preprocessing {}", path.display())),
        }
    }
    println!("{written} images written, {skipped} skipped");
    Ok(())
}

fn select(
    method: FilterMethod,
    k: usize,
    input: &Path,
    out: &Path,
    seed: u64,
    bins: usize,
    trees: usize,
) -> Result<()> {
    let ds = load(input)?;
    let opts = FilterOptions {
        mi_bins: bins,
        forest: ForestParams {
            n_trees: trees,
            seed,
            ..ForestParams::default()
        },
    };
    let scores = score_features(&ds, method, &opts)?;
    let mask = select_top_k(&scores, k)?;
    write_json(
        out,
        &MaskFile {
            method,
            k,
            seed,
            n_features: ds.n_features(),
            selected: mask.indices(),
        },
    )
}

fn metasearch(algo: SearchAlgo, input: &Path, config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let ds = load(input)?;
    let mut cfg: SearchConfig = match config {
        Some(p) => read_json(p)?,
        None => SearchConfig::default(),
    };
    cfg.algo = algo;
    let result = run_search(&ds, &cfg, seed)?;
    write_json(
        out,
        &SearchFile {
            algo,
            seed,
            n_features: ds.n_features(),
            selected: result.mask.indices(),
            fitness: result.fitness,
            history: &result.history,
            evaluations: result.evaluations,
            params: &cfg,
        },
    )
}

fn train(
    kind: ClassifierKind,
    input: &Path,
    out: &Path,
    params: Option<&Path>,
    mask: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = match params {
        Some(p) => {
            let value: serde_json::Value = read_json(p)?;
            let tagged = serde_json::json!({ "kind": kind, "params": value });
            serde_json::from_value(tagged).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ClassifierConfig::default_for(kind),
    };
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    cfg.validate()?;
    let ds = masked(load(input)?, mask)?;
    let model = cfg.train(&ds)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    model.save(out)?;
    Ok(())
}

fn evaluate(model: &Path, input: &Path, mask: Option<&Path>, out: Option<&Path>, roc_out: Option<&Path>) -> Result<()> {
    let model = TrainedModel::load(model).with_context(|| format!("loading {}", model.display()))?;
    let ds = masked(load(input)?, mask)?;
    let pred = model.predict_dataset(&ds)?;
    let cm = confusion_matrix(ds.labels(), &pred.labels)?;
    let m = classification_metrics::<f64>(&cm);
    let roc = roc_curve(ds.labels(), &pred.scores)?;
    if let Some(p) = roc_out {
        let mut bytes = Vec::new();
        roc.write_csv(&mut bytes)?;
        fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    let report = EvaluationFile {
        n_samples: ds.n_samples(),
        confusion_matrix: cm,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        auc: roc.area(),
    };
    match out {
        Some(p) => write_json(p, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn synth(
    n: usize,
    d: usize,
    informative: usize,
    noise: f64,
    seed: u64,
    out: &Path,
    truth: Option<&Path>,
) -> Result<()> {
    let s = generate_synthetic::<f64>(n, d, informative, noise, seed)?;
    save_dataset(&s.dataset, out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = truth {
        write_json(p, &serde_json::json!({ "seed": seed, "informative": s.informative }))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("starting thread pool")?;
    match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Preprocess { input, out, skip_empty } => preprocess(&input, &out, skip_empty),
        Command::Select {
            method,
            k,
            input,
            out,
            seed,
            bins,
            trees,
        } => select(method.into(), k, &input, &out, seed, bins, trees),
        Command::Metasearch {
            algo,
            input,
            config,
            out,
            seed,
        } => metasearch(algo.into(), &input, config.as_deref(), &out, seed),
        Command::Train {
            model,
            input,
            out,
            params,
            mask,
            seed,
        } => train(model.into(), &input, &out, params.as_deref(), mask.as_deref(), seed),
        Command::Evaluate {
            model,
            input,
            mask,
            out,
            roc,
        } => evaluate(&model, &input, mask.as_deref(), out.as_deref(), roc.as_deref()),
        Command::Synth {
            n,
            d,
            informative,
            noise,
            seed,
            out,
            truth,
        } => synth(n, d, informative, noise, seed, &out, truth.as_deref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their source in the message
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
