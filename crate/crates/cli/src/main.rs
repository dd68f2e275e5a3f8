//! `gir` — degradation synthesis, test-set building, and AR/ER evaluation.
//!
//! Results go to stdout as `key value` lines; progress notes and errors go
//! to stderr. Exit status: 0 success, 1 runtime failure, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gir_core::datasetgen::{
    build_testset, default_task_bank, validate_manifest, write_atomic, BuildOptions, Manifest, MANIFEST_FILE,
};
use gir_core::degradations::{representative_params, DegradationKind, DegradationParams};
use gir_core::evaluation::{build_report, evaluate_model, load_scores, report_summary, write_report, MetricReport};
use gir_core::imaging::{load_image, save_image, save_ppm, DepthMap, ImageF32};
use gir_core::pipeline::{
    apply_recipe, parse_recipe, parse_task_bank, recipe_hash, sample_recipe, serialize_recipe, DepthSource, Recipe,
    TaskSpec,
};
use gir_core::taskselect::{select_from_pool, select_task_bank, write_selection, SelectOptions};
use gir_core::{jpeg, Error, RngStream};

#[derive(Parser)]
#[command(name = "gir", version, about = "Image degradation synthesis and restoration benchmark tools")]
struct Cli {
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true, env = "GIR_THREADS", value_parser = clap::value_parser!(u64).range(1..=1024))]
    threads: Option<u64>,
    /// Suppress progress notes on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply one degradation (representative parameters unless --params is given).
    Degrade(DegradeArgs),
    /// Apply a recipe file, or sample a random recipe of the given order.
    Pipeline(PipelineArgs),
    /// Pick representative mixture tasks by spectral clustering.
    SelectTasks(SelectArgs),
    /// Render a test set from a ground-truth directory and a task bank.
    BuildTestset(BuildArgs),
    /// Check a built test set against its manifest.
    Validate(ValidateArgs),
    /// Score restored outputs (or a score table) against the AR/ER baselines.
    Evaluate(EvaluateArgs),
    /// Encode an image as baseline JPEG.
    Encode(EncodeArgs),
    /// Decode a baseline JPEG to PNG or PPM.
    Decode(DecodeArgs),
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    kind: DegradationKind,
    /// Parameter object, e.g. '{"ksize":15,"sigma":2.0}'.
    #[arg(long)]
    params: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Depth map image (channel 0 is used); synthesized when absent.
    #[arg(long)]
    depth: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, conflicts_with_all = ["order", "no_weather"], required_unless_present = "order")]
    recipe: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=5))]
    order: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Never sample rain, haze or snow.
    #[arg(long)]
    no_weather: bool,
    #[arg(long)]
    depth: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    gt: PathBuf,
    /// Random candidates sampled per order.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
    candidates: u64,
    /// Cluster an explicit candidate task-bank file instead of sampling.
    #[arg(long, conflicts_with = "candidates")]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    per_order: u64,
    /// Orders to select, as `2..5` or `2,3,4`.
    #[arg(long, default_value = "2..5", value_parser = parse_orders)]
    orders: Orders,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(2..))]
    bins: u64,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(8..))]
    crop: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, required_unless_present = "default_bank", conflicts_with = "default_bank")]
    bank: Option<PathBuf>,
    /// Use the built-in 100-task bank (random tasks drawn from --seed).
    #[arg(long)]
    default_bank: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ValidateArgs {
    /// Test-set directory containing manifest.json.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Restored images laid out as <outputs>/<task_id>/<gt_id>.png.
    #[arg(long, requires_all = ["gt", "manifest"], required_unless_present = "scores")]
    outputs: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Precomputed model scores, `file.csv` or `file.csv#column`.
    #[arg(long, conflicts_with = "outputs")]
    scores: Option<String>,
    /// Acceptance-line scores, `file.csv` or `file.csv#column`.
    #[arg(long)]
    acceptance: String,
    /// Excellence-line scores, `file.csv` or `file.csv#column`.
    #[arg(long)]
    excellence: String,
    /// Report CSV path; a text summary is written next to it.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 75, value_parser = clap::value_parser!(u8).range(1..=100))]
    quality: u8,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug)]
struct Orders(Vec<usize>);

fn parse_orders(s: &str) -> Result<Orders, String> {
    let bad = || format!("'{s}' is not an order list like 2..5 or 2,3");
    let orders: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if orders.is_empty() || orders.iter().any(|k| !(1..=5).contains(k)) {
        return Err(format!("orders must lie in 1..=5, got '{s}'"));
    }
    Ok(Orders(orders))
}

/// Usage problems exit 2, everything else 1.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

struct Ctx {
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn save_any(img: &ImageF32, path: &Path) -> gir_core::Result<()> {
    let is_ppm = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        save_ppm(img, path)
    } else {
        save_image(img, path)
    }
}

/// `out.png` → `out.recipe.json`
fn recipe_sidecar(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
    out.with_file_name(format!("{stem}.recipe.json"))
}

fn depth_source<'a>(
    ctx: &Ctx,
    depth: &'a Option<DepthMap>,
    recipe: &Recipe,
) -> DepthSource<'a> {
    match depth {
        Some(d) => DepthSource::Supplied(d),
        None => {
            if recipe.kinds().iter().any(|k| k.needs_depth()) {
                ctx.note("no --depth given; using a synthesized depth map (vertical gradient plus value noise)");
            }
            DepthSource::Procedural
        }
    }
}

fn load_depth(path: &Option<PathBuf>) -> anyhow::Result<Option<DepthMap>> {
    path.as_ref()
        .map(|p| load_image(p).map(|img| DepthMap::from_image(&img)).with_context(|| format!("reading depth map {}", p.display())))
        .transpose()
}

fn cmd_degrade(ctx: &Ctx, a: DegradeArgs) -> CmdResult {
    let params = match &a.params {
        None => representative_params(a.kind),
        Some(text) => {
            let value: serde_json::Value =
                serde_json::from_str(text).map_err(|e| Failure::Usage(format!("--params is not JSON: {e}")))?;
            let p = DegradationParams::from_json(a.kind, value)
                .map_err(|e| Failure::Usage(format!("--params for {}: {e}", a.kind)))?;
            p.validate().map_err(|e| Failure::Usage(format!("--params: {e}")))?;
            p
        }
    };
    let recipe = Recipe::new(vec![params], a.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let img = load_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let depth = load_depth(&a.depth)?;
    let out = apply_recipe(&img, depth_source(ctx, &depth, &recipe), &recipe)?;
    save_any(&out, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print!("{}", serialize_recipe(&recipe));
    Ok(())
}

fn cmd_pipeline(ctx: &Ctx, a: PipelineArgs) -> CmdResult {
    let recipe = match (&a.recipe, a.order) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_recipe(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(k)) => sample_recipe(k as usize, &mut RngStream::from_seed(a.seed), !a.no_weather)?,
        (None, None) => return Err(Failure::Usage("either --recipe or --order is required".into())),
    };
    let img = load_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let depth = load_depth(&a.depth)?;
    let out = apply_recipe(&img, depth_source(ctx, &depth, &recipe), &recipe)?;
    let sidecar = recipe_sidecar(&a.out);
    save_any(&out, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    write_atomic(&sidecar, serialize_recipe(&recipe).as_bytes())?;
    println!("output {}", a.out.display());
    println!("recipe {}", sidecar.display());
    println!("recipe_hash {}", recipe_hash(&recipe));
    println!("kinds {}", recipe.kinds().iter().map(|k| k.name()).collect::<Vec<_>>().join(","));
    Ok(())
}

fn load_gt_images(dir: &Path) -> anyhow::Result<Vec<ImageF32>> {
    let found = gir_core::datasetgen::scan_gt_dir(dir)?;
    Ok(found.into_iter().map(|(_, img)| img).collect())
}

fn cmd_select(ctx: &Ctx, a: SelectArgs) -> CmdResult {
    if a.pool.is_none() && a.per_order > a.candidates {
        return Err(Failure::Usage(format!(
            "--per-order {} exceeds --candidates {}",
            a.per_order, a.candidates
        )));
    }
    let options = SelectOptions {
        orders: a.orders.0.clone(),
        candidates_per_order: a.candidates as usize,
        per_order: a.per_order as usize,
        bins: a.bins as usize,
        crop_size: a.crop as usize,
        seed: a.seed,
        allow_weather: true,
    };
    let images = load_gt_images(&a.gt)?;
    ctx.note(format!("rendering candidates on {} ground-truth images", images.len()));
    let selection = match &a.pool {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let pool = parse_task_bank(&text)?;
            select_from_pool(&pool, &images, &options, None)?
        }
        None => select_task_bank(&images, &options, None)?,
    };
    let side = write_selection(&selection, &a.out)?;
    println!("bank {}", a.out.display());
    println!("provenance {}", side.display());
    println!("tasks {}", selection.tasks.len());
    Ok(())
}

fn cmd_build(ctx: &Ctx, a: BuildArgs) -> CmdResult {
    let tasks: Vec<TaskSpec> = match &a.bank {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_task_bank(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => default_task_bank(a.seed),
    };
    ctx.note(format!("building {} tasks into {}", tasks.len(), a.out.display()));
    let m = build_testset(&a.gt, &tasks, &a.out, a.seed, BuildOptions::default())?;
    println!("manifest {}", a.out.join(MANIFEST_FILE).display());
    println!("tasks {}", m.tasks.len());
    println!("images {}", m.gt_images.len());
    println!("entries {}", m.entries.len());
    Ok(())
}

fn cmd_validate(_ctx: &Ctx, a: ValidateArgs) -> CmdResult {
    let m = Manifest::load(a.dir.join(MANIFEST_FILE))?;
    let report = validate_manifest(&m, &a.dir);
    for v in &report.violations {
        eprintln!("{v:?}");
    }
    println!("violations {}", report.violations.len());
    if report.is_clean() {
        Ok(())
    } else {
        Err(anyhow::anyhow!("{} violation(s) found", report.violations.len()).into())
    }
}

fn print_report(r: &MetricReport) {
    println!("AR {:.4}", r.ar);
    println!("ER {:.4}", r.er);
    println!("avg_psnr {:.4}", r.avg_psnr);
    println!("tasks {}", r.task_count);
}

fn cmd_evaluate(ctx: &Ctx, a: EvaluateArgs) -> CmdResult {
    let acceptance = load_scores(&a.acceptance).with_context(|| format!("reading {}", a.acceptance))?;
    let excellence = load_scores(&a.excellence).with_context(|| format!("reading {}", a.excellence))?;
    let report = match (&a.scores, &a.outputs) {
        (Some(spec), _) => {
            let model = load_scores(spec).with_context(|| format!("reading {spec}"))?;
            build_report(&model, &acceptance, &excellence)?
        }
        (None, Some(outputs)) => {
            let manifest_path = a.manifest.as_ref().expect("clap requires --manifest");
            let manifest = Manifest::load(manifest_path)?;
            let gt = a.gt.as_ref().expect("clap requires --gt");
            evaluate_model(outputs, gt, &manifest, &acceptance, &excellence)?
        }
        (None, None) => return Err(Failure::Usage("either --outputs or --scores is required".into())),
    };
    if let Some(path) = &a.report {
        let summary = write_report(&report, path)?;
        println!("report {}", path.display());
        println!("summary {}", summary.display());
    } else {
        ctx.note(report_summary(&report));
    }
    print_report(&report);
    Ok(())
}

fn cmd_encode(_ctx: &Ctx, a: EncodeArgs) -> CmdResult {
    let img = load_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let bytes = jpeg::encode(&img, a.quality)?;
    write_atomic(&a.out, &bytes)?;
    println!("bytes {}", bytes.len());
    Ok(())
}

fn cmd_decode(_ctx: &Ctx, a: DecodeArgs) -> CmdResult {
    let bytes = fs::read(&a.input).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(a.input.clone()),
        _ => Error::Io(e),
    })?;
    let img = jpeg::decode(&bytes)?;
    save_any(&img, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("width {}", img.width());
    println!("height {}", img.height());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx { quiet: cli.quiet };
    let result = match cli.command {
        Command::Degrade(a) => cmd_degrade(&ctx, a),
        Command::Pipeline(a) => cmd_pipeline(&ctx, a),
        Command::SelectTasks(a) => cmd_select(&ctx, a),
        Command::BuildTestset(a) => cmd_build(&ctx, a),
        Command::Validate(a) => cmd_validate(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Encode(a) => cmd_encode(&ctx, a),
        Command::Decode(a) => cmd_decode(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
