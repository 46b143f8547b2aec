//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 data or validation error, 3 infeasible
//! events present under `--strict`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::embedstore::{read_dump, BuildOptions, ClusterStore, Embedding};
use crate::evaluation::{
    anchor_sweep, error_listing, format_hit_report, format_prf1_report, gold_spans, hit_at_k, join_rankings,
    lambda_sweep, predicted_spans, prf1, HitOptions, MatchMode, Stratum, DEFAULT_KS,
};
use crate::filtering::{calibrate_store, NegativeSet};
use crate::inference::{InferenceConfig, DEFAULT_LAMBDA};
use crate::mentions::{load_mentions, read_records, LoadOptions};
use crate::ontology::Ontology;
use crate::pipeline::{classify_all, read_classified, write_classified, ClassifyOptions, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Default seed for anchor subsampling.
pub const DEFAULT_SEED: u64 = 20200101;

#[derive(Debug, Parser)]
#[command(name = "eventmap", version, about = "Zero-shot event typing against an event ontology")]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Emit log lines as JSON objects.
    #[arg(long, global = true)]
    pub json_logs: bool,
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, env = "EVENTMAP_LOG", default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build label clusters from an anchor dump.
    BuildClusters(BuildArgs),
    /// Calibrate per-cluster radii and write them into the store.
    Calibrate(CalibrateArgs),
    /// Type every event in a mention file.
    Classify(ClassifyArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Metric table over trigger weights or anchor counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, env = "EVENTMAP_ONTOLOGY")]
    pub ontology: Option<PathBuf>,
    /// Anchor dump (binary or text, detected automatically).
    #[arg(long)]
    pub dump: PathBuf,
    /// Store file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accept masked trigger or full argument anchors.
    #[arg(long)]
    pub allow_strategy_override: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, env = "EVENTMAP_STORE")]
    pub store: Option<PathBuf>,
    /// Where to write the calibrated store (default: overwrite --store).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Negatives for each cluster.
    #[arg(long, value_enum, default_value_t = NegativesArg::All)]
    pub negatives: NegativesArg,
    /// Write the per-label report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NegativesArg {
    All,
    SameKind,
}

#[derive(Debug, Args, Clone)]
pub struct InferenceArgs {
    /// Trigger weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Allow several arguments of one event to share a role.
    #[arg(long)]
    pub no_distinct_roles: bool,
    /// Leave arguments unassigned when no feasible role exists.
    #[arg(long)]
    pub allow_unassigned: bool,
    /// Worker threads.
    #[arg(long, env = "EVENTMAP_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MentionArgs {
    #[arg(long, env = "EVENTMAP_ONTOLOGY")]
    pub ontology: Option<PathBuf>,
    #[arg(long, env = "EVENTMAP_STORE")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub mentions: Option<PathBuf>,
    /// Dump holding vectors referenced by index from the mention file.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Unknown gold labels or entity types are errors.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: MentionArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Skip constrained inference and emit raw rankings.
    #[arg(long)]
    pub no_ilp: bool,
    /// Event-type ids to accept (one per line or a JSON array); enables
    /// out-of-ontology filtering.
    #[arg(long, value_name = "FILE")]
    pub in_ontology: Option<PathBuf>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output of `classify`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Mention file with gold labels.
    #[arg(long)]
    pub gold: PathBuf,
    /// Ontology used to check gold labels.
    #[arg(long, env = "EVENTMAP_ONTOLOGY")]
    pub ontology: Option<PathBuf>,
    /// Restrict Hit@K to items whose gold label is listed in this file.
    #[arg(long, value_name = "FILE")]
    pub subset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
    pub ks: Vec<usize>,
    /// Write the per-item error listing here.
    #[arg(long)]
    pub errors: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Experiment {
    Lambda,
    NAnchors,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub input: MentionArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Anchor dump to subsample (n-anchors experiment).
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_ilp: bool,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub allow_strategy_override: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ontology: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub mentions: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub strict: bool,
    pub threads: Option<usize>,
    #[serde(default)]
    pub inference: InferenceSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    pub lambda: Option<f64>,
    pub enforce_distinct_roles: Option<bool>,
    pub allow_unassigned_arguments: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data("config", format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::data("config", format!("{}: {e}", path.display())))
    }
}

/// A user-facing failure, tagged with the module it came from.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub message: String,
    pub code: i32,
}

impl CliError {
    pub fn data(module: &'static str, message: impl Into<String>) -> Self {
        CliError {
            module,
            message: message.into(),
            code: EXIT_DATA,
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        CliError {
            module: "cli",
            message: message.into(),
            code: EXIT_USAGE,
        }
    }
}

fn data_err<E: std::fmt::Display>(module: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::data(module, e.to_string())
}

fn required(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::usage(format!("missing --{name} (or `{name}` in the config file)")))
}

fn inference_config(args: &InferenceArgs, config: &RunConfig) -> Result<InferenceConfig, CliError> {
    let c = InferenceConfig {
        lambda: args.lambda.or(config.inference.lambda).unwrap_or(DEFAULT_LAMBDA),
        enforce_distinct_roles: !args.no_distinct_roles && config.inference.enforce_distinct_roles.unwrap_or(true),
        allow_unassigned_arguments: args.allow_unassigned || config.inference.allow_unassigned_arguments.unwrap_or(false),
    };
    c.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(c)
}

fn threads(args: &InferenceArgs, config: &RunConfig) -> Result<Option<usize>, CliError> {
    match args.threads.or(config.threads) {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        t => Ok(t),
    }
}

fn load_ontology(path: &Path) -> Result<Ontology, CliError> {
    Ontology::load(path).map_err(|e| CliError::data("ontology", format!("{}: {e}", path.display())))
}

fn load_store(path: &Path) -> Result<ClusterStore, CliError> {
    ClusterStore::load(path).map_err(|e| CliError::data("embedstore", format!("{}: {e}", path.display())))
}

fn load_dump(path: &Path) -> Result<Vec<crate::embedstore::AnchorRecord>, CliError> {
    read_dump(path).map_err(|e| CliError::data("embedstore", format!("{}: {e}", path.display())))
}

/// Ids listed one per line (`#` starts a comment) or as a JSON array.
pub fn read_id_list(path: &Path) -> Result<BTreeSet<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data("cli", format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with('[') {
        let ids: Vec<String> = serde_json::from_str(&text).map_err(|e| CliError::data("cli", format!("{}: {e}", path.display())))?;
        return Ok(ids.into_iter().collect());
    }
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::data("cli", format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::data("cli", format!("cannot write to standard output: {e}")))
        }
    }
}

struct Loaded {
    ontology: Ontology,
    store: ClusterStore,
    events: Vec<crate::mentions::EventMention>,
}

fn load_inputs(args: &MentionArgs, config: &RunConfig, store_override: Option<ClusterStore>) -> Result<Loaded, CliError> {
    let ontology = load_ontology(&required(args.ontology.clone(), &config.ontology, "ontology")?)?;
    let store = match store_override {
        Some(s) => s,
        None => load_store(&required(args.store.clone(), &config.store, "store")?)?,
    };
    let missing = store.missing_labels(&ontology);
    if !missing.is_empty() {
        return Err(CliError::data(
            "embedstore",
            format!("store has no cluster for ontology labels: {}", missing.join(", ")),
        ));
    }
    let mentions = required(args.mentions.clone(), &config.mentions, "mentions")?;
    let sidecar: Option<Vec<Embedding>> = match args.sidecar.clone().or_else(|| config.sidecar.clone()) {
        Some(p) => Some(load_dump(&p)?.into_iter().map(|r| r.vector).collect()),
        None => None,
    };
    let loaded = load_mentions(
        &mentions,
        &store,
        LoadOptions {
            sidecar: sidecar.as_deref(),
            ontology: Some(&ontology),
            strict: args.strict || config.strict,
        },
    )
    .map_err(|e| CliError::data("mentions", format!("{}: {e}", mentions.display())))?;
    Ok(Loaded {
        ontology,
        store,
        events: loaded.events,
    })
}

fn build_clusters(args: BuildArgs, config: &RunConfig) -> Result<i32, CliError> {
    let ontology = load_ontology(&required(args.ontology, &config.ontology, "ontology")?)?;
    let records = load_dump(&args.dump)?;
    let store = ClusterStore::build(
        &ontology,
        &records,
        BuildOptions {
            allow_strategy_override: args.allow_strategy_override,
        },
    )
    .map_err(data_err("embedstore"))?;
    let out = required(args.out, &config.store, "out")?;
    store
        .save(&out)
        .map_err(|e| CliError::data("embedstore", format!("{}: {e}", out.display())))?;
    log::info!(
        "wrote {} trigger and {} argument clusters (dim {}) to {}",
        store.trigger_clusters().len(),
        store.argument_clusters().len(),
        store.dim(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn calibrate(args: CalibrateArgs, config: &RunConfig) -> Result<i32, CliError> {
    let path = required(args.store, &config.store, "store")?;
    let mut store = load_store(&path)?;
    let negatives = match args.negatives {
        NegativesArg::All => NegativeSet::All,
        NegativesArg::SameKind => NegativeSet::SameKind,
    };
    let reports = calibrate_store(&mut store, negatives).map_err(data_err("filtering"))?;
    let out = args.out.unwrap_or(path);
    store
        .save(&out)
        .map_err(|e| CliError::data("embedstore", format!("{}: {e}", out.display())))?;
    let mut text = String::from("label\tradius\tf1\tpositives\tnegatives\n");
    for r in &reports {
        text.push_str(&format!(
            "{}\t{}\t{:.4}\t{}\t{}\n",
            r.label_id, r.radius, r.f1_at_radius, r.positives_count, r.negatives_count
        ));
    }
    write_output(args.report.as_deref(), text.as_bytes())?;
    Ok(EXIT_OK)
}

fn classify(args: ClassifyArgs, config: &RunConfig) -> Result<i32, CliError> {
    let inference = inference_config(&args.inference, config)?;
    let strict = args.input.strict || config.strict;
    let loaded = load_inputs(&args.input, config, None)?;
    let in_ontology = match &args.in_ontology {
        Some(p) => {
            let ids = read_id_list(p)?;
            if let Some(bad) = ids.iter().find(|id| loaded.ontology.event_type(id).is_none()) {
                return Err(CliError::data(
                    "filtering",
                    format!("{}: \"{bad}\" is not an event type of the ontology", p.display()),
                ));
            }
            Some(ids)
        }
        None => None,
    };
    let options = ClassifyOptions {
        inference,
        use_ilp: !args.no_ilp,
        in_ontology,
        threads: threads(&args.inference, config)?,
    };
    let records = classify_all(&loaded.events, &loaded.store, &loaded.ontology, &options).map_err(data_err("inference"))?;
    let mut buf = Vec::new();
    write_classified(&mut buf, &records).map_err(data_err("pipeline"))?;
    write_output(args.out.or_else(|| config.output.clone()).as_deref(), &buf)?;

    let infeasible = records.iter().filter(|r| r.status == Status::Infeasible).count();
    let filtered = records.iter().filter(|r| r.status == Status::Filtered).count();
    log::info!("classified {} events ({infeasible} infeasible, {filtered} filtered)", records.len());
    if infeasible > 0 && strict {
        log::error!("{infeasible} events are infeasible");
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}

fn evaluate(args: EvaluateArgs, config: &RunConfig) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&args.predictions)
        .map_err(|e| CliError::data("evaluation", format!("cannot read {}: {e}", args.predictions.display())))?;
    let predictions = read_classified(&text)
        .map_err(|(line, e)| CliError::data("evaluation", format!("{} line {line}: {e}", args.predictions.display())))?;
    let gold = read_records(&args.gold).map_err(|e| CliError::data("mentions", format!("{}: {e}", args.gold.display())))?;
    let strict = args.strict || config.strict;

    let ontology = match args.ontology.or_else(|| config.ontology.clone()) {
        Some(p) => Some(load_ontology(&p)?),
        None => None,
    };
    let event_ids: Option<BTreeSet<String>> = ontology.as_ref().map(|o| o.event_types().map(|e| e.id.clone()).collect());
    let role_ids: Option<BTreeSet<String>> = ontology.as_ref().map(|o| o.role_types().map(|r| r.id.clone()).collect());
    let subset = match &args.subset {
        Some(p) => Some(read_id_list(p)?),
        None => None,
    };

    let joined = join_rankings(&predictions, &gold).map_err(data_err("evaluation"))?;
    for id in &joined.missing {
        log::warn!("no prediction for gold event \"{id}\"");
    }
    let hit = |items, stratum, known: &Option<BTreeSet<String>>| {
        hit_at_k(
            items,
            &args.ks,
            stratum,
            HitOptions {
                subset: subset.as_ref(),
                known_labels: known.as_ref(),
                strict,
            },
        )
        .map_err(data_err("evaluation"))
    };
    let triggers = hit(&joined.triggers, Stratum::Triggers, &event_ids)?;
    let arguments = hit(&joined.arguments, Stratum::Arguments, &role_ids)?;

    let (pt, pa) = predicted_spans(&predictions);
    let (gt, ga) = gold_spans(&gold);
    let prf = [
        ("trigger_identification", prf1(&pt, &gt, MatchMode::Identification)),
        ("trigger_classification", prf1(&pt, &gt, MatchMode::IdentificationPlusClassification)),
        ("argument_identification", prf1(&pa, &ga, MatchMode::Identification)),
        ("argument_classification", prf1(&pa, &ga, MatchMode::IdentificationPlusClassification)),
    ];

    let report = match args.format {
        ReportFormat::Text => {
            let mut s = format_hit_report(&triggers);
            s.push('\n');
            s.push_str(&format_hit_report(&arguments));
            for (name, r) in &prf {
                s.push('\n');
                s.push_str(&format_prf1_report(name, r));
            }
            s
        }
        ReportFormat::Json => {
            let prf_map: serde_json::Map<String, serde_json::Value> = prf
                .iter()
                .map(|(n, r)| (n.to_string(), serde_json::to_value(r).expect("report serializes")))
                .collect();
            let mut s = serde_json::to_string_pretty(&serde_json::json!({
                "hit": [triggers, arguments],
                "prf1": prf_map,
            }))
            .expect("report serializes");
            s.push('\n');
            s
        }
    };
    write_output(args.out.as_deref(), report.as_bytes())?;
    if let Some(p) = &args.errors {
        let mut listing = error_listing(&joined.triggers);
        listing.push_str(error_listing(&joined.arguments).split_once('\n').map_or("", |(_, rest)| rest));
        write_output(Some(p), listing.as_bytes())?;
    }
    Ok(EXIT_OK)
}

fn sweep(args: SweepArgs, config: &RunConfig) -> Result<i32, CliError> {
    let inference = inference_config(&args.inference, config)?;
    let options = ClassifyOptions {
        inference,
        use_ilp: !args.no_ilp,
        in_ontology: None,
        threads: threads(&args.inference, config)?,
    };
    let table = match args.experiment {
        Experiment::Lambda => {
            let loaded = load_inputs(&args.input, config, None)?;
            lambda_sweep(&loaded.events, &loaded.store, &loaded.ontology, &args.values, &options, &args.ks)
                .map_err(data_err("evaluation"))?
        }
        Experiment::NAnchors => {
            let dump = args
                .dump
                .as_deref()
                .ok_or_else(|| CliError::usage("the n-anchors experiment needs --dump"))?;
            let values: Vec<usize> = args
                .values
                .iter()
                .map(|&v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(CliError::usage(format!("anchor count {v} is not a positive integer")))
                    }
                })
                .collect::<Result<_, _>>()?;
            let ontology = load_ontology(&required(args.input.ontology.clone(), &config.ontology, "ontology")?)?;
            let records = load_dump(dump)?;
            let build = BuildOptions {
                allow_strategy_override: args.allow_strategy_override,
            };
            // A store over the full dump fixes the dimension the mentions are checked against.
            let full = ClusterStore::build(&ontology, &records, build).map_err(data_err("embedstore"))?;
            let loaded = load_inputs(&args.input, config, Some(full))?;
            let seed = args.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
            anchor_sweep(&records, &loaded.events, &ontology, &values, seed, build, &options, &args.ks)
                .map_err(data_err("evaluation"))?
        }
    };
    write_output(args.out.or_else(|| config.output.clone()).as_deref(), table.to_tsv().as_bytes())?;
    Ok(EXIT_OK)
}

fn init_logging(level: &str, json: bool) {
    let mut builder = env_logger::Builder::new();
    builder.parse_filters(level).target(env_logger::Target::Stderr);
    if json {
        builder.format(|buf, record| {
            writeln!(
                buf,
                "{}",
                serde_json::json!({
                    "level": record.level().as_str().to_lowercase(),
                    "module": record.target(),
                    "message": record.args().to_string(),
                })
            )
        });
    }
    // A second initialization (tests run several commands in one process) is harmless.
    let _ = builder.try_init();
}

fn report_error(err: &CliError, json: bool) {
    if json {
        eprintln!(
            "{}",
            serde_json::json!({"level": "error", "module": err.module, "message": err.message})
        );
    } else {
        eprintln!("error [{}]: {}", err.module, err.message);
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    init_logging(&cli.log_level, cli.json_logs);
    let result = cli
        .config
        .as_deref()
        .map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
        .and_then(|config| match cli.command {
            Command::BuildClusters(a) => build_clusters(a, &config),
            Command::Calibrate(a) => calibrate(a, &config),
            Command::Classify(a) => classify(a, &config),
            Command::Evaluate(a) => evaluate(a, &config),
            Command::Sweep(a) => sweep(a, &config),
        });
    match result {
        Ok(code) => code,
        Err(e) => {
            report_error(&e, cli.json_logs);
            e.code
        }
    }
}
