use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kgcorpus::cache::{read_cache, write_cache};
use kgcorpus::config::{read_key_values, BuildConfig, DEFAULT_LANGUAGE};
use kgcorpus::corpus::build_corpus;
use kgcorpus::emit::{emit, validate, ManifestExtras};
use kgcorpus::freetext::ingest_freetext;
use kgcorpus::render::Task;
use kgcorpus::rrf::{ingest_release, IngestConfig, IngestReport, Orientation, ReleaseFiles};
use kgcorpus::synth::{generate_synthetic_kg, SyntheticKgSpec};
use kgcorpus::{Error, FrozenGraph, RelationType};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;

/// Compile a terminology release and free text into pre-training corpora.
#[derive(Parser)]
#[command(name = "kgcorpus", version)]
struct Cli {
    /// Flat `key = value` file; keys are long flag names. Flags given on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse release files and write a graph cache plus an ingest report.
    Ingest(IngestArgs),
    /// Sample, render and emit the task corpora.
    Build(BuildArgs),
    /// Print term, concept and relation counts per language.
    Stats(StatsArgs),
    /// Generate a synthetic release with known statistics.
    Synth(SynthArgs),
    /// Re-check a corpus directory against its manifest.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientationArg {
    SecondToFirst,
    FirstToSecond,
}

#[derive(Args)]
struct ReleaseArgs {
    /// Directory holding MRCONSO.RRF, MRREL.RRF, MRSTY.RRF and SemGroups.txt.
    #[arg(long)]
    release_dir: Option<PathBuf>,
    /// How a relation row maps to (head, relation, tail).
    #[arg(long, value_enum, default_value = "second-to-first")]
    orientation: OrientationArg,
    /// Semantic groups to keep (comma-separated); default keeps all.
    #[arg(long, value_delimiter = ',')]
    groups: Vec<String>,
    /// Abort on the first malformed row.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    release: ReleaseArgs,
    /// Languages to keep (comma-separated); default keeps all.
    #[arg(long, value_delimiter = ',')]
    lang: Vec<String>,
    /// Where to write the graph cache.
    #[arg(long)]
    cache: PathBuf,
    /// Also write the ingest report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    release: ReleaseArgs,
    /// Graph cache written by `ingest`.
    #[arg(long, conflicts_with = "release_dir")]
    graph: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    lang: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tc_size: Option<usize>,
    #[arg(long)]
    ep_size: Option<usize>,
    #[arg(long)]
    lp_size: Option<usize>,
    #[arg(long)]
    max_hops: Option<usize>,
    #[arg(long)]
    mlm_prob: Option<f64>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    shards: Option<usize>,
    /// Free-text files or directories for the masked-language stream.
    #[arg(long)]
    freetext: Vec<PathBuf>,
    /// Task to leave out (mlm, ep, lp, tc); repeatable.
    #[arg(long, value_delimiter = ',')]
    disable_task: Vec<String>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    release: ReleaseArgs,
    #[arg(long, conflicts_with = "release_dir")]
    graph: Option<PathBuf>,
    /// Languages to report (comma-separated); default reports every language.
    #[arg(long, value_delimiter = ',')]
    lang: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    concepts: usize,
    /// Distinct edges generated for each of the seven relation types.
    #[arg(long, default_value_t = 500)]
    edges_per_relation: usize,
    /// Group weights as `CODE:weight` pairs.
    #[arg(long, value_delimiter = ',', default_value = "ANAT:0.2,CHEM:0.3,DISO:0.5")]
    group_weights: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "ENG")]
    languages: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the duplicate and unmapped rows normally mixed in.
    #[arg(long)]
    no_noise: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    corpus_dir: PathBuf,
    /// Graph cache for path and positive-triple checks.
    #[arg(long)]
    graph: Option<PathBuf>,
}

const BOOLEAN_FLAGS: &[&str] = &["strict", "no-noise"];

/// Appends settings from `--config` for every flag not given explicitly.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut args: Vec<OsString> = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            config = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(OsString::from(v));
        } else {
            args.push(a);
        }
    }
    let Some(config) = config else { return Ok(args) };
    let pairs = read_key_values(Path::new(&config)).map_err(|e| e.to_string())?;
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    for (key, value) in pairs {
        if given.contains(&key) {
            continue;
        }
        if BOOLEAN_FLAGS.contains(&key.as_str()) {
            if matches!(value.to_ascii_lowercase().as_str(), "true" | "yes" | "1") {
                args.push(format!("--{key}").into());
            }
        } else {
            args.push(format!("--{key}").into());
            args.push(value.into());
        }
    }
    Ok(args)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Cache(_) => EXIT_IO,
        Error::Config(_) | Error::Weights(_) => EXIT_USAGE,
        _ => EXIT_VALIDATION,
    }
}

fn ingest_config(release: &ReleaseArgs, languages: &[String]) -> IngestConfig {
    let mut cfg = IngestConfig::default().with_languages(languages.iter().cloned());
    cfg.orientation = match release.orientation {
        OrientationArg::SecondToFirst => Orientation::SecondToFirst,
        OrientationArg::FirstToSecond => Orientation::FirstToSecond,
    };
    if !release.groups.is_empty() {
        cfg.group_allow_list = Some(release.groups.iter().cloned().collect());
    }
    cfg.strict = release.strict;
    cfg
}

fn load_graph(
    graph: Option<&Path>,
    release: &ReleaseArgs,
    languages: &[String],
) -> Result<(FrozenGraph, IngestReport), Error> {
    match (graph, &release.release_dir) {
        (Some(path), _) => read_cache(path),
        (None, Some(dir)) => ingest_release(&ReleaseFiles::in_dir(dir)?, &ingest_config(release, languages)),
        (None, None) => Err(Error::Config("pass --graph or --release-dir".into())),
    }
}

fn run_ingest(args: &IngestArgs) -> Result<(), Error> {
    let dir = args
        .release
        .release_dir
        .as_ref()
        .ok_or_else(|| Error::Config("ingest needs --release-dir".into()))?;
    let (kg, report) = ingest_release(&ReleaseFiles::in_dir(dir)?, &ingest_config(&args.release, &args.lang))?;
    write_cache(&args.cache, &kg, &report)?;
    let text = report.render();
    if let Some(path) = &args.report {
        std::fs::write(path, &text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    print!("{text}");
    Ok(())
}

fn run_build(args: &BuildArgs) -> Result<(), Error> {
    let mut cfg = BuildConfig::default();
    let settings: [(&str, Option<String>); 9] = [
        ("lang", args.lang.clone()),
        ("seed", args.seed.map(|v| v.to_string())),
        ("tc-size", args.tc_size.map(|v| v.to_string())),
        ("ep-size", args.ep_size.map(|v| v.to_string())),
        ("lp-size", args.lp_size.map(|v| v.to_string())),
        ("max-hops", args.max_hops.map(|v| v.to_string())),
        ("mlm-prob", args.mlm_prob.map(|v| v.to_string())),
        ("seq-len", args.seq_len.map(|v| v.to_string())),
        ("shards", args.shards.map(|v| v.to_string())),
    ];
    for (key, value) in settings {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for t in &args.disable_task {
        cfg.set("disable-task", t)?;
    }
    cfg.validate()?;
    let (kg, ingest) = load_graph(
        args.graph.as_deref(),
        &args.release,
        std::slice::from_ref(&cfg.language),
    )?;
    let (docs, ft) = if cfg.enabled(Task::Mlm) && !args.freetext.is_empty() {
        ingest_freetext(&args.freetext, &cfg.language, args.release.strict)?
    } else {
        Default::default()
    };
    let corpus = build_corpus(&kg, &docs, &cfg)?;
    let mut extras = ManifestExtras {
        ingest: ingest.key_values().into_iter().collect(),
    };
    extras.ingest.extend([
        ("freetext.files".to_string(), ft.files),
        ("freetext.documents".to_string(), ft.documents),
        ("freetext.empty_dropped".to_string(), ft.empty_dropped),
        ("freetext.undecodable_skipped".to_string(), ft.undecodable_skipped),
    ]);
    let manifest = emit(&corpus, &cfg, &args.out_dir, &extras)?;
    for (task, n) in &manifest.counts {
        println!("{} = {n}", task.name());
    }
    println!("total_records = {}", manifest.total_records);
    println!("total_bytes = {} ({})", manifest.total_bytes, manifest.total_bytes_unit);
    let w = &manifest.weights;
    println!(
        "alpha_ep = {:.6}\nalpha_lp = {:.6}\nalpha_tc = {:.6}",
        w.alpha_ep, w.alpha_lp, w.alpha_tc
    );
    println!(
        "manifest = {}",
        args.out_dir.join(kgcorpus::emit::MANIFEST_FILE).display()
    );
    Ok(())
}

fn run_stats(args: &StatsArgs) -> Result<(), Error> {
    let (kg, _) = load_graph(args.graph.as_deref(), &args.release, &args.lang)?;
    let languages = if args.lang.is_empty() {
        kg.languages()
    } else {
        args.lang.clone()
    };
    let languages = if languages.is_empty() {
        vec![DEFAULT_LANGUAGE.to_string()]
    } else {
        languages
    };
    println!("{:<10} {:>12} {:>12} {:>12}", "language", "terms", "cuis", "relations");
    for lang in languages {
        let s = kg.statistics(&lang);
        println!("{lang:<10} {:>12} {:>12} {:>12}", s.terms, s.cuis, s.relations);
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<(), Error> {
    let mut group_weights = Vec::new();
    for pair in &args.group_weights {
        let (code, w) = pair
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("group weight `{pair}` is not CODE:weight")))?;
        let w: f64 = w
            .parse()
            .map_err(|_| Error::Config(format!("group weight `{pair}` is not a number")))?;
        group_weights.push((code.to_string(), w));
    }
    let spec = SyntheticKgSpec {
        concepts: args.concepts,
        group_weights,
        edges_per_relation: RelationType::ALL
            .iter()
            .map(|&r| (r, args.edges_per_relation))
            .collect(),
        languages: args.languages.clone(),
        seed: args.seed,
        noise: !args.no_noise,
        ..SyntheticKgSpec::default()
    };
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let (_, truth) = generate_synthetic_kg(&spec, &args.out_dir)?;
    let path = args.out_dir.join("ground_truth.json");
    std::fs::write(&path, serde_json::to_string_pretty(&truth)?).map_err(|e| Error::Io { path, source: e })?;
    let stats: BTreeMap<_, _> = truth.statistics.iter().collect();
    for (lang, s) in stats {
        println!(
            "{lang}: terms = {}, cuis = {}, relations = {}",
            s.terms, s.cuis, s.relations
        );
    }
    Ok(())
}

fn run_validate(args: &ValidateArgs) -> Result<bool, Error> {
    let graph = args.graph.as_deref().map(read_cache).transpose()?;
    let report = validate(&args.corpus_dir, graph.as_ref().map(|(g, _)| g))?;
    print!("{}", report.render());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => run_ingest(a).map(|_| true),
        Command::Build(a) => run_build(a).map(|_| true),
        Command::Stats(a) => run_stats(a).map(|_| true),
        Command::Synth(a) => run_synth(a).map(|_| true),
        Command::Validate(a) => run_validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VALIDATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
