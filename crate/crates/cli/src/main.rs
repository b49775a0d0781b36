//! `hyperscene`: the end-to-end pipeline as subcommands.
//!
//! One output directory holds every artifact under fixed names; the
//! subcommands compose in order: synth -> train-encoder -> encode ->
//! train-hash -> hash -> build-index -> query / eval / ablate.
//!
//! Exit codes: 0 success, 2 invalid input, 3 incompatible artifacts,
//! 4 corrupt file.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hyperscene_core::error::Error;
use hyperscene_core::hasher::LossTerm;
use hyperscene_core::pipeline::steps::{
    run_build_index, run_encode, run_eval, run_hash, run_query, run_synth, run_train_encoder,
    run_train_hash, FocusRegion, run_ablate,
};
use hyperscene_core::pipeline::{
    EvalOptions, PipelineConfig, PipelinePaths, QuerySpec, RelevanceMode, SynthConfig,
};

#[derive(Parser)]
#[command(name = "hyperscene", version, about = "Spatial-aware hyperdimensional image hashing pipeline")]
struct Cli {
    /// Key-value config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory holding every pipeline artifact.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature dataset with ground truth.
    Synth(SynthArgs),
    /// Train the context encoder on the dataset's object features.
    TrainEncoder,
    /// Encode every image into its scene representation.
    Encode,
    /// Train the hyperplane hash on the encoded scenes.
    TrainHash,
    /// Hash the scenes into bipolar codes.
    Hash,
    /// Pack the codes into the retrieval index.
    BuildIndex,
    /// Run a (conditional) query against the index.
    Query(QueryArgs),
    /// Evaluate retrieval quality against ground truth.
    Eval(EvalArgs),
    /// Train ablation variants of the hash loss and report each one.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 128)]
    n_images: usize,
    /// Class count; defaults to the configured pseudo-class count.
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    objects_min: usize,
    #[arg(long, default_value_t = 4)]
    objects_max: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.1)]
    global_noise: f64,
    #[arg(long, default_value_t = 640.0)]
    image_w: f64,
    #[arg(long, default_value_t = 480.0)]
    image_h: f64,
}

#[derive(Args)]
struct QueryArgs {
    /// Query by dataset image id.
    #[arg(long, conflicts_with = "query_file")]
    image_id: Option<u64>,
    /// JSON file with a full query spec (inline features supported).
    #[arg(long)]
    query_file: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    eta_glob: f64,
    /// Comma-separated per-object weights, one per object in record order.
    #[arg(long)]
    eta: Option<String>,
    /// Focus region `x0,y0,x1,y1` in normalized coordinates.
    #[arg(long)]
    focus: Option<String>,
    /// Weight multiplier for objects inside the focus region.
    #[arg(long, default_value_t = 10.0)]
    focus_mult: f64,
    /// Length scale; defaults to the configured w (must match the index).
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Comma-separated radii for the spatial-aware metric.
    #[arg(long)]
    r: Option<String>,
    /// Relevance convention: `single` or `multi`.
    #[arg(long, default_value = "multi")]
    relevance: String,
    /// Keep each query in its own ranking.
    #[arg(long, default_value_t = false)]
    include_self: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Comma-separated loss terms to remove one at a time.
    #[arg(long, default_value = "mse,w,q,u,o")]
    exclude: String,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value = "multi")]
    relevance: String,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Corrupt { .. } => 4,
        Error::Incompatible { .. } => 3,
        _ => 2,
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::parse(&fs::read_to_string(path)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("cannot parse `{s}` in {what}")))
        })
        .collect()
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    let paths = PipelinePaths::new(&cli.out_dir);
    match &cli.command {
        Command::Synth(args) => {
            let synth = SynthConfig {
                n_images: args.n_images,
                n_classes: args.n_classes.unwrap_or(config.c),
                z: config.z,
                objects_min: args.objects_min,
                objects_max: args.objects_max,
                noise_sigma: args.noise,
                global_noise_sigma: args.global_noise,
                image_w: args.image_w,
                image_h: args.image_h,
            };
            if synth.n_classes > config.c {
                return Err(Error::invalid(format!(
                    "n_classes {} exceeds configured pseudo-class count c = {}",
                    synth.n_classes, config.c
                )));
            }
            let info = run_synth(&paths, &config, &synth)?;
            println!(
                "synth: wrote {} images ({} feature vectors) to {}",
                info.images,
                info.vectors,
                cli.out_dir.display()
            );
        }
        Command::TrainEncoder => {
            let info = run_train_encoder(&paths, &config)?;
            let last = info.trace.last().unwrap();
            println!(
                "train-encoder: {} epochs, final loss {:.6} (l_c {:.6}, l_rec {:.6}), fingerprint {:#018x}",
                info.trace.len(),
                last.total,
                last.l_c,
                last.l_rec,
                info.fingerprint
            );
        }
        Command::Encode => {
            let info = run_encode(&paths, &config)?;
            println!(
                "encode: {} scenes at D = {}, w = {}, fingerprint {:#018x}",
                info.scenes, config.d, config.w, info.fingerprint
            );
        }
        Command::TrainHash => {
            let info = run_train_hash(&paths, &config)?;
            let last = info.trace.last().unwrap();
            println!(
                "train-hash: {} epochs, final loss {:.6}, fingerprint {:#018x}",
                info.trace.len(),
                last.total,
                info.fingerprint
            );
        }
        Command::Hash => {
            let info = run_hash(&paths, &config)?;
            println!(
                "hash: {} codes at L = {}, fingerprint {:#018x}",
                info.codes, config.l_bits, info.fingerprint
            );
        }
        Command::BuildIndex => {
            let info = run_build_index(&paths)?;
            println!("build-index: {} entries -> {}", info.entries, paths.index().display());
        }
        Command::Query(args) => {
            let spec = build_query_spec(args, &config)?;
            let ranked = run_query(&paths, &config, &spec, args.k)?;
            println!("rank  image_id  hamming");
            for (rank, (id, dist)) in ranked.iter().enumerate() {
                println!("{:>4}  {:>8}  {:>7}", rank + 1, id, dist);
            }
        }
        Command::Eval(args) => {
            let options = EvalOptions {
                k: args.k,
                r_values: match &args.r {
                    Some(text) => parse_f64_list(text, "--r")?,
                    None => vec![],
                },
                relevance: RelevanceMode::parse(&args.relevance)?,
                include_self: args.include_self,
            };
            let report = run_eval(&paths, &options)?;
            print!("{}", report.render_table());
            println!("report written to {}", paths.eval_report().display());
        }
        Command::Ablate(args) => {
            let exclusions: Vec<LossTerm> = args
                .exclude
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| LossTerm::parse(s.trim()))
                .collect::<Result<_, _>>()?;
            let options = EvalOptions {
                k: args.k,
                r_values: vec![],
                relevance: RelevanceMode::parse(&args.relevance)?,
                include_self: false,
            };
            let report = run_ablate(&paths, &config, &exclusions, &options)?;
            print!("{}", report.render_table());
            println!("report written to {}", paths.ablate_report().display());
        }
    }
    Ok(())
}

fn build_query_spec(args: &QueryArgs, config: &PipelineConfig) -> Result<QuerySpec, Error> {
    if let Some(path) = &args.query_file {
        let text = fs::read_to_string(path)?;
        let spec: QuerySpec = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("query file: {e}")))?;
        spec.validate()?;
        return Ok(spec);
    }
    let image_id = args
        .image_id
        .ok_or_else(|| Error::invalid("query needs --image-id or --query-file"))?;
    let focus_region = match &args.focus {
        Some(text) => {
            let values = parse_f64_list(text, "--focus")?;
            if values.len() != 4 {
                return Err(Error::invalid("--focus expects x0,y0,x1,y1"));
            }
            Some(FocusRegion {
                x0: values[0],
                y0: values[1],
                x1: values[2],
                y1: values[3],
                eta_multiplier: args.focus_mult,
            })
        }
        None => None,
    };
    let spec = QuerySpec {
        image_id: Some(image_id),
        inline: None,
        eta_glob: args.eta_glob,
        eta: match &args.eta {
            Some(text) => parse_f64_list(text, "--eta")?,
            None => vec![],
        },
        focus_region,
        w: args.w.unwrap_or(config.w),
    };
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
