//! `ca-edge` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ca_edge::dataset::{load_edge_map, load_image, load_manifest, save_edge_map, Dataset};
use ca_edge::harness::{run_experiment, write_outputs, ExperimentKind, ExperimentSpec, Selector};
use ca_edge::metrics::{evaluate, format_value};
use ca_edge::pso::DrawMode;
use ca_edge::{detect_edges, CellTable, DetectorParams, Error, Radius};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "ca-edge", version, about = "Cellular-automaton edge detection tuned by particle swarm optimization")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Random seed [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Neighborhood radius, 1 or 2 [default: 1]
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..=2))]
    radius: Option<u32>,
    /// Annotator-probability threshold p; pixels with probability > p are ground-truth edges [default: 0.02]
    #[arg(long, global = true)]
    prob_threshold: Option<f64>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
    /// JSON experiment configuration; command-line flags take precedence over its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON cell-numbering table as [bit, dy, dx] triples [default: built-in clockwise table]
    #[arg(long, global = true)]
    cell_table: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resize images, build ground truth and write a preprocessed dataset
    Preprocess {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the detector on one image and write <stem>.edges.png
    Detect {
        /// Input image (any common format; color is converted to luma)
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Output directory [default: the image's directory]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize detector parameters on a training selection
    Optimize {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pso: PsoArgs,
        /// Training images: all, category:<name> or fold:<index> [default: all]
        #[arg(long)]
        select: Option<Selector>,
        /// Initial population from a previous run's population.json
        #[arg(long)]
        warm_start: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare edge maps, or evaluate fixed parameters on a dataset
    Evaluate(EvaluateArgs),
    /// k-fold cross-validation
    Kfold {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pso: PsoArgs,
        /// Number of folds [default: 10]
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        canny: CannyArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Optimize on the whole dataset and evaluate on it and on each category
    General {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pso: PsoArgs,
        #[command(flatten)]
        canny: CannyArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-category optimization warm-started from a general population
    Specialized {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pso: PsoArgs,
        /// population.json written by the general experiment
        #[arg(long)]
        warm_start: Option<PathBuf>,
        /// Restrict to one category, e.g. category:people [default: every category]
        #[arg(long)]
        select: Option<Selector>,
        #[command(flatten)]
        canny: CannyArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-category optimization from a fresh population
    Individual {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pso: PsoArgs,
        /// Restrict to one category, e.g. category:people [default: every category]
        #[arg(long)]
        select: Option<Selector>,
        #[command(flatten)]
        canny: CannyArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate fixed parameters next to the Canny baseline
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Images to evaluate: all, category:<name> or fold:<index> [default: all]
        #[arg(long)]
        select: Option<Selector>,
        /// Number of folds used by a fold:<index> selection [default: 10]
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        canny: CannyArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV manifest with columns image,annotations,category (annotations separated by ';')
    #[arg(long)]
    manifest: PathBuf,
    /// Resize so the longer side has this many pixels; 0 keeps the original size [default: 128]
    #[arg(long)]
    max_side: Option<usize>,
    /// Zero-pad resized images to a square
    #[arg(long)]
    square: bool,
}

#[derive(Args, Debug)]
struct ParamArgs {
    /// Damping constant in 0..=255
    #[arg(long)]
    delta: Option<u8>,
    /// Edge threshold in [0,1]
    #[arg(long)]
    tau: Option<f64>,
    /// Linear rule number selecting the neighborhood cells
    #[arg(long)]
    rule: Option<u32>,
}

#[derive(Args, Debug)]
struct PsoArgs {
    /// Swarm size [default: 30]
    #[arg(long)]
    particles: Option<usize>,
    /// Swarm updates after the initial evaluation [default: 100]
    #[arg(long)]
    iterations: Option<usize>,
    /// Inertia weight [default: 0.9]
    #[arg(long)]
    w: Option<f64>,
    /// Cognitive coefficient [default: 0.5]
    #[arg(long)]
    c1: Option<f64>,
    /// Social coefficient [default: 0.3]
    #[arg(long)]
    c2: Option<f64>,
    /// Random factors drawn per coordinate (vector) or per particle (scalar) [default: vector]
    #[arg(long)]
    draw_mode: Option<DrawArg>,
    /// Keep the snapshot's personal-best fitness on warm starts instead of re-evaluating it
    #[arg(long)]
    keep_snapshot_fitness: bool,
    /// Ignore the rule coordinate and use the whole neighborhood
    #[arg(long)]
    full_neighborhood: bool,
}

#[derive(Args, Debug)]
struct CannyArgs {
    /// Canny Gaussian sigma [default: 1]
    #[arg(long)]
    sigma: Option<f64>,
    /// Canny low threshold on the gradient magnitude of the 0..255 image [default: 25.5]
    #[arg(long)]
    low: Option<f64>,
    /// Canny high threshold on the gradient magnitude of the 0..255 image [default: 51]
    #[arg(long)]
    high: Option<f64>,
    /// Skip the Canny baseline
    #[arg(long)]
    no_baseline: bool,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory [default: results/<command>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every edge map under maps/<model>/
    #[arg(long)]
    emit_maps: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Detected edge map (nonzero pixels are edges)
    #[arg(long, requires = "annotated", conflicts_with = "manifest")]
    detected: Option<PathBuf>,
    /// Ground-truth edge map
    #[arg(long, requires = "detected")]
    annotated: Option<PathBuf>,
    /// Dataset manifest, to evaluate fixed parameters on every image
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Resize so the longer side has this many pixels; 0 keeps the original size [default: 128]
    #[arg(long)]
    max_side: Option<usize>,
    /// Zero-pad resized images to a square
    #[arg(long)]
    square: bool,
    #[command(flatten)]
    params: ParamArgs,
    /// Images to evaluate: all, category:<name> or fold:<index> [default: all]
    #[arg(long)]
    select: Option<Selector>,
    /// Number of folds used by a fold:<index> selection [default: 10]
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DrawArg {
    Vector,
    Scalar,
}

impl From<DrawArg> for DrawMode {
    fn from(d: DrawArg) -> Self {
        match d {
            DrawArg::Vector => DrawMode::Vector,
            DrawArg::Scalar => DrawMode::Scalar,
        }
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| usage(format!("cannot start thread pool: {e}")))?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Preprocess { data, out } => {
            let spec = base_spec(g, ExperimentKind::EvaluateOnly, &data)?;
            echo(&spec, Some(&data.manifest));
            let dataset = Dataset::load(&load_manifest(&data.manifest)?, &spec.preprocess())?;
            let manifest = dataset.write_preprocessed(&out)?;
            write_config(&out, &spec)?;
            eprintln!("wrote {} samples to {}", dataset.len(), manifest.display());
            Ok(())
        }
        Command::Detect { image, params, out } => detect(g, &image, &params, out.as_deref()),
        Command::Evaluate(args) => evaluate_cmd(g, args),
        Command::Optimize {
            data,
            pso,
            select,
            warm_start,
            out,
        } => {
            let mut spec = base_spec(g, ExperimentKind::General, &data)?;
            apply_pso(&mut spec, &pso);
            set(&mut spec.selector, select);
            set(&mut spec.warm_start, warm_start.map(Some));
            spec.baseline = false;
            experiment(spec, &data.manifest, out, "optimize")
        }
        Command::Kfold {
            data,
            pso,
            k,
            canny,
            out,
        } => {
            let mut spec = base_spec(g, ExperimentKind::Kfold, &data)?;
            apply_pso(&mut spec, &pso);
            set(&mut spec.k, k);
            apply_canny(&mut spec, &canny);
            experiment(spec, &data.manifest, out, "kfold")
        }
        Command::General {
            data,
            pso,
            canny,
            out,
        } => {
            let mut spec = base_spec(g, ExperimentKind::General, &data)?;
            apply_pso(&mut spec, &pso);
            apply_canny(&mut spec, &canny);
            experiment(spec, &data.manifest, out, "general")
        }
        Command::Specialized {
            data,
            pso,
            warm_start,
            select,
            canny,
            out,
        } => {
            let mut spec = base_spec(g, ExperimentKind::SpecializedTf, &data)?;
            apply_pso(&mut spec, &pso);
            set(&mut spec.warm_start, warm_start.map(Some));
            set(&mut spec.selector, select);
            apply_canny(&mut spec, &canny);
            experiment(spec, &data.manifest, out, "specialized")
        }
        Command::Individual {
            data,
            pso,
            select,
            canny,
            out,
        } => {
            let mut spec = base_spec(g, ExperimentKind::Individual, &data)?;
            apply_pso(&mut spec, &pso);
            set(&mut spec.selector, select);
            apply_canny(&mut spec, &canny);
            experiment(spec, &data.manifest, out, "individual")
        }
        Command::Compare {
            data,
            params,
            select,
            k,
            canny,
            out,
        } => {
            let mut spec = base_spec(g, ExperimentKind::EvaluateOnly, &data)?;
            apply_params(&mut spec, &params)?;
            set(&mut spec.selector, select);
            set(&mut spec.k, k);
            apply_canny(&mut spec, &canny);
            experiment(spec, &data.manifest, out, "compare")
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Defaults, then the config file, then global flags.
fn resolve(g: &GlobalArgs, kind: ExperimentKind) -> CliResult<ExperimentSpec> {
    let mut spec = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => ExperimentSpec::default(),
    };
    spec.kind = kind;
    set(&mut spec.seed, g.seed);
    if let Some(r) = g.radius {
        spec.radius = Radius::try_from(r)?;
    }
    set(&mut spec.prob_threshold, g.prob_threshold);
    set(&mut spec.cell_table, g.cell_table.clone().map(Some));
    Ok(spec)
}

fn base_spec(g: &GlobalArgs, kind: ExperimentKind, data: &DataArgs) -> CliResult<ExperimentSpec> {
    let mut spec = resolve(g, kind)?;
    apply_data(&mut spec, data.max_side, data.square);
    Ok(spec)
}

fn apply_data(spec: &mut ExperimentSpec, max_side: Option<usize>, square: bool) {
    if let Some(side) = max_side {
        spec.max_side = (side > 0).then_some(side);
    }
    if square {
        spec.square = true;
    }
}

fn apply_pso(spec: &mut ExperimentSpec, a: &PsoArgs) {
    set(&mut spec.particles, a.particles);
    set(&mut spec.iterations, a.iterations);
    set(&mut spec.hyper.w, a.w);
    set(&mut spec.hyper.c1, a.c1);
    set(&mut spec.hyper.c2, a.c2);
    set(&mut spec.draw_mode, a.draw_mode.map(Into::into));
    spec.keep_snapshot_fitness |= a.keep_snapshot_fitness;
    spec.full_neighborhood |= a.full_neighborhood;
}

fn apply_canny(spec: &mut ExperimentSpec, a: &CannyArgs) {
    set(&mut spec.canny.sigma, a.sigma);
    set(&mut spec.canny.low_threshold, a.low);
    set(&mut spec.canny.high_threshold, a.high);
    if a.no_baseline {
        spec.baseline = false;
    }
}

fn apply_params(spec: &mut ExperimentSpec, a: &ParamArgs) -> CliResult {
    let mut record = spec.params.unwrap_or(ca_edge::ca::ParamsRecord {
        delta: 0,
        tau: 0.0,
        rule: 0,
        radius: spec.radius,
    });
    let from_file = spec.params.is_some();
    match (a.delta, a.tau, a.rule) {
        (Some(d), Some(t), Some(z)) => {
            record.delta = d;
            record.tau = t;
            record.rule = z;
        }
        (None, None, None) if from_file => {}
        _ if from_file => {
            set(&mut record.delta, a.delta);
            set(&mut record.tau, a.tau);
            set(&mut record.rule, a.rule);
        }
        _ => return Err(usage("--delta, --tau and --rule are all required")),
    }
    record.radius = spec.radius;
    spec.params = Some(record);
    Ok(())
}

fn echo(spec: &ExperimentSpec, manifest: Option<&Path>) {
    if let Some(m) = manifest {
        eprintln!("manifest: {}", m.display());
    }
    eprintln!("resolved configuration:\n{}", spec.to_json());
}

fn write_config(dir: &Path, spec: &ExperimentSpec) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let path = dir.join("config.json");
    std::fs::write(&path, spec.to_json()).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_dataset(manifest: &Path, spec: &ExperimentSpec) -> CliResult<Dataset> {
    spec.validate()?;
    let m = load_manifest(manifest)?;
    Ok(Dataset::load(&m, &spec.preprocess())?)
}

fn experiment(spec: ExperimentSpec, manifest: &Path, out: OutArgs, name: &str) -> CliResult {
    echo(&spec, Some(manifest));
    let dataset = load_dataset(manifest, &spec)?;
    let output = run_experiment(&spec, &dataset, out.emit_maps)?;
    let dir = out.out.unwrap_or_else(|| PathBuf::from("results").join(name));
    write_outputs(&dir, &spec, &output)?;
    for row in output.rows.iter().chain(&output.baseline_rows) {
        eprintln!(
            "{:<16} train={:<12} eval={:<12} ssim={} psnr={} dsc={}",
            row.model,
            row.train_set,
            row.eval_set,
            row.ssim.mean.map(format_value).unwrap_or_default(),
            row.psnr.mean.map(format_value).unwrap_or_default(),
            row.dsc.mean.map(format_value).unwrap_or_default(),
        );
    }
    for note in &output.notes {
        eprintln!("note: {note}");
    }
    eprintln!("results written to {}", dir.display());
    Ok(())
}

fn fixed_params(g: &GlobalArgs, a: &ParamArgs) -> CliResult<(ExperimentSpec, DetectorParams)> {
    let mut spec = resolve(g, ExperimentKind::EvaluateOnly)?;
    apply_params(&mut spec, a)?;
    let table: CellTable = spec.table()?;
    let params = spec.params.expect("params set").to_params(&table)?;
    Ok((spec, params))
}

fn detect(g: &GlobalArgs, image: &Path, a: &ParamArgs, out: Option<&Path>) -> CliResult {
    let (spec, params) = fixed_params(g, a)?;
    echo(&spec, None);
    let img = load_image(image)?;
    let map = detect_edges(&img, &params);
    let stem = image
        .file_stem()
        .ok_or_else(|| usage(format!("{} has no file name", image.display())))?
        .to_string_lossy();
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| image.parent().map(Path::to_path_buf).unwrap_or_default());
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("{stem}.edges.png"));
    save_edge_map(&path, &map)?;
    eprintln!("wrote {} ({} edge pixels)", path.display(), map.edge_count());
    Ok(())
}

fn evaluate_cmd(g: &GlobalArgs, args: EvaluateArgs) -> CliResult {
    if let (Some(detected), Some(annotated)) = (&args.detected, &args.annotated) {
        let d = load_edge_map(detected)?;
        let a = load_edge_map(annotated)?;
        let r = evaluate(&d, &a)?;
        let image = detected
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        println!("image,dsc,psnr,ssim,mse");
        println!(
            "{image},{},{},{},{}",
            format_value(r.dsc),
            format_value(r.psnr),
            format_value(r.ssim),
            format_value(r.mse)
        );
        return Ok(());
    }
    let manifest = args
        .manifest
        .ok_or_else(|| usage("either --detected/--annotated or --manifest is required"))?;
    let mut spec = resolve(g, ExperimentKind::EvaluateOnly)?;
    apply_data(&mut spec, args.max_side, args.square);
    apply_params(&mut spec, &args.params)?;
    set(&mut spec.selector, args.select);
    set(&mut spec.k, args.k);
    spec.baseline = false;
    experiment(spec, &manifest, args.out, "evaluate")?;
    Ok(())
}

