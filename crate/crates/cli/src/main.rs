use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mapalign_core::classify::ClassifierKind;
use mapalign_core::eval::{evaluate, evaluate_with_layers, EvaluationReport, Scores};
use mapalign_core::geometry::DistanceMetric;
use mapalign_core::io::{
    export_sameas_triples, load_ground_truth, load_layer, read_alignment, read_layer_metadata, write_alignment,
    write_ground_truth, write_layer,
};
use mapalign_core::synth::{generate_synthetic, SynthParams};
use mapalign_core::textalign::TextMethod;
use mapalign_core::workflow::{run_workflow, WorkflowConfig};
use mapalign_core::{Error, MapLayer};

#[derive(Parser)]
#[command(name = "mapalign", version, about = "Align vector entities between two historical maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align two GeoJSON layers and write the pairs as CSV.
    Align(AlignArgs),
    /// Score an alignment against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic map pair with known ground truth.
    Synth(SynthArgs),
    /// Export an alignment as owl:sameAs N-Triples.
    ExportKg(ExportArgs),
}

#[derive(Args)]
struct LayerArgs {
    /// GeoJSON FeatureCollection for map A.
    #[arg(long)]
    map_a: PathBuf,
    /// GeoJSON FeatureCollection for map B.
    #[arg(long)]
    map_b: PathBuf,
    /// Treat map A as georeferenced, overriding the file.
    #[arg(long)]
    georeferenced_a: Option<bool>,
    /// Treat map B as georeferenced, overriding the file.
    #[arg(long)]
    georeferenced_b: Option<bool>,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    layers: LayerArgs,
    /// JSON file with workflow settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV of aligned pairs.
    #[arg(long, default_value = "pairs.csv")]
    out: PathBuf,
    /// Output JSON run trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Label normalization method, e.g. str_caseless_punc.
    #[arg(long)]
    text_method: Option<TextMethod>,
    /// Distance metric: EDC, EDV, HDV or EDNP.
    #[arg(long)]
    metric: Option<DistanceMetric>,
    /// Classifier, e.g. dist_approx or topo.
    #[arg(long)]
    classifier: Option<ClassifierKind>,
    /// Maximum angle in degrees between aligned polylines.
    #[arg(long)]
    angle_limit: Option<f64>,
    /// Fixed buffer distance for the approximate-within test.
    #[arg(long)]
    buffer_distance: Option<f64>,
    /// Overlap ratio at which one buffered entity counts as within another.
    #[arg(long)]
    within_ratio: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Alignment CSV to score.
    #[arg(long)]
    pairs: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Map A layer, for a breakdown by geometry kind.
    #[arg(long)]
    map_a: Option<PathBuf>,
    /// Output JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving map_a.geojson, map_b.geojson and truth.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Roads in each direction.
    #[arg(long)]
    roads: Option<usize>,
    /// Number of landmark points.
    #[arg(long)]
    points: Option<usize>,
    /// Rotation of map B in degrees.
    #[arg(long)]
    rotation: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tx: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    ty: Option<f64>,
    /// Standard deviation of vertex noise on map B.
    #[arg(long)]
    jitter: Option<f64>,
    /// Share of map B labels that survive.
    #[arg(long)]
    label_keep: Option<f64>,
    /// Share of entities missing from map B.
    #[arg(long)]
    drop: Option<f64>,
    /// Label city blocks too.
    #[arg(long)]
    label_blocks: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[command(flatten)]
    layers: LayerArgs,
    /// Output N-Triples file.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Input(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant(_) => Failure::Invariant(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Invariant(m) => f.write_str(m),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn input(e: impl fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

/// Map id, year and georeference flag come from the file's foreign members
/// when present. Otherwise the id is the file stem and the year is 1.
fn read_layer(path: &Path, fallback_id: &str, georeferenced: Option<bool>) -> Result<MapLayer, Failure> {
    let meta = read_layer_metadata(path)?;
    let map_id = meta.map_id.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| fallback_id.to_string())
    });
    let georef = georeferenced.or(meta.georeferenced).unwrap_or(false);
    Ok(load_layer(path, &map_id, meta.year.unwrap_or(1), georef)?)
}

fn read_layers(args: &LayerArgs) -> Result<(MapLayer, MapLayer), Failure> {
    let a = read_layer(&args.map_a, "a", args.georeferenced_a)?;
    let b = read_layer(&args.map_b, "b", args.georeferenced_b)?;
    Ok((a, b))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Invariant(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| input(format!("{}: {e}", path.display())))
}

fn cmd_align(args: AlignArgs) -> CmdResult {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<WorkflowConfig>(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        None => WorkflowConfig::default(),
    };
    if let Some(m) = args.text_method {
        config.text_method = m;
    }
    if let Some(m) = args.metric {
        config.metric = m;
    }
    if let Some(c) = args.classifier {
        config.classifier = c;
    }
    if let Some(a) = args.angle_limit {
        config.angle_limit = a;
    }
    if let Some(d) = args.buffer_distance {
        config.approx.buffer_distance = Some(d);
    }
    if let Some(r) = args.within_ratio {
        config.approx.within_ratio_threshold = r;
    }
    let (a, b) = read_layers(&args.layers)?;
    let out = run_workflow(&a, &b, &config)?;
    write_alignment(&out.result, &args.out)?;
    if let Some(path) = &args.trace {
        write_json(path, &out.trace)?;
    }
    println!("{} pairs written to {}", out.result.len(), args.out.display());
    Ok(())
}

fn print_report(report: &EvaluationReport) {
    let row = |label: &str, s: &Scores| {
        let flag = if s.precision_undefined { "  (nothing identified)" } else { "" };
        println!("{label:<10} {:>9.4} {:>9.4} {:>9.4}{flag}", s.precision, s.recall, s.f_score);
    };
    println!("{:<10} {:>9} {:>9} {:>9}", "", "precision", "recall", "f_score");
    row("overall", &report.overall);
    for (kind, s) in &report.by_kind {
        row(kind, s);
    }
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let result = read_alignment(&args.pairs)?;
    let truth = load_ground_truth(&args.truth)?;
    let report = match &args.map_a {
        Some(path) => evaluate_with_layers(&result, &truth, &read_layer(path, "a", None)?),
        None => evaluate(&result, &truth),
    };
    print_report(&report);
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CmdResult {
    let mut params = SynthParams { rng_seed: args.seed, label_blocks: args.label_blocks, ..Default::default() };
    let defaults = params.clone();
    params.roads_per_axis = args.roads.unwrap_or(defaults.roads_per_axis);
    params.point_features = args.points.unwrap_or(defaults.point_features);
    params.rotation = args.rotation.unwrap_or(defaults.rotation);
    params.scale = args.scale.unwrap_or(defaults.scale);
    params.translation = (args.tx.unwrap_or(defaults.translation.0), args.ty.unwrap_or(defaults.translation.1));
    params.vertex_jitter_sigma = args.jitter.unwrap_or(defaults.vertex_jitter_sigma);
    params.label_keep_fraction = args.label_keep.unwrap_or(defaults.label_keep_fraction);
    params.entity_drop_fraction = args.drop.unwrap_or(defaults.entity_drop_fraction);
    let pair = generate_synthetic(&params)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| input(format!("{}: {e}", args.out_dir.display())))?;
    write_layer(&pair.map_a, args.out_dir.join("map_a.geojson"))?;
    write_layer(&pair.map_b, args.out_dir.join("map_b.geojson"))?;
    write_ground_truth(&pair.truth, args.out_dir.join("truth.csv"))?;
    println!(
        "{} + {} entities, {} truth pairs written to {}",
        pair.map_a.len(),
        pair.map_b.len(),
        pair.truth.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CmdResult {
    let result = read_alignment(&args.pairs)?;
    let (a, b) = read_layers(&args.layers)?;
    export_sameas_triples(&result, &a, &b, &args.out)?;
    Ok(())
}

fn configure_threads() -> CmdResult {
    let Ok(value) = std::env::var("MAPALIGN_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| input(format!("MAPALIGN_THREADS must be a non-negative integer, got \"{value}\"")))?;
    // zero lets rayon pick
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Invariant(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Align(a) => cmd_align(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::ExportKg(a) => cmd_export(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mapalign: {f}");
            ExitCode::from(match f {
                Failure::Input(_) => 2,
                Failure::Invariant(_) => 3,
            })
        }
    }
}
