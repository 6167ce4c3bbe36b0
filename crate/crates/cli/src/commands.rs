//! Subcommand argument surfaces and their pipelines.
//!
//! Every command resolves its flags into a typed configuration, runs the
//! library pipeline, and echoes the resolved configuration into the
//! artifacts it writes. JSON artifacts embed the echo; CSV artifacts get a
//! `<name>.config.json` sidecar.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use procdbn::dbn::{
    load_model, model_to_json, predict_next_event, predict_symptom, DbnModel, PredictionTarget,
    StructureVariant, SymptomQuery,
};
use procdbn::esa::{esa_report, EsaReport};
use procdbn::evaluation::{
    evaluate_model, run_benchmark, BenchmarkConfig, BenchmarkReport, ContextRole, DbnPredictor,
    EvaluationReport, StructureSpec,
};
use procdbn::eventlog::{
    discretize_attribute, encode_log, encode_with_vocabulary, filter_short_traces, parse_csv,
    write_csv, AttributeKind, ColumnMapping, DiscretizationSpec, EncodedTrace, EventLog,
    RoleConfig, Vocab,
};
use procdbn::learning::{select_hidden_states, EmConfig, KSelectionRow};
use procdbn::synthetic::{generate, SyntheticKind, SyntheticSpec};
use procdbn::{Error, Result};

use crate::ioutil::{config_sidecar, to_pretty_json, write_atomic};

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic event log with a known context signal.
    Synth(SynthArgs),
    /// Learn a model from an event log and write it as JSON.
    Train(TrainArgs),
    /// Predict the next event or a symptom value from a prefix.
    Predict(PredictArgs),
    /// Score a trained model on a test log.
    Evaluate(EvaluateArgs),
    /// Measure per-point context lift (normalized likelihood).
    Esa(EsaArgs),
    /// Compare structures and baselines over repeated splits.
    Benchmark(BenchmarkArgs),
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => run_synth(&args),
        Command::Train(args) => run_train(&args),
        Command::Predict(args) => run_predict(&args),
        Command::Evaluate(args) => run_evaluate(&args),
        Command::Esa(args) => run_esa(&args),
        Command::Benchmark(args) => run_benchmark_cmd(&args),
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum TargetArg {
    /// The activity of the following slice.
    NextEvent,
    /// The symptom attribute of the current slice.
    Symptom,
}

impl TargetArg {
    fn name(self) -> &'static str {
        match self {
            TargetArg::NextEvent => "next-event",
            TargetArg::Symptom => "symptom",
        }
    }

    fn target(self) -> PredictionTarget {
        match self {
            TargetArg::NextEvent => PredictionTarget::NextEvent,
            TargetArg::Symptom => PredictionTarget::CurrentSymptom,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum QueryArg {
    /// Read the symptom off the last observed event.
    Conditional,
    /// Mix symptom distributions over the predicted next event.
    Marginal,
}

impl QueryArg {
    fn name(self) -> &'static str {
        match self {
            QueryArg::Conditional => "conditional",
            QueryArg::Marginal => "marginal",
        }
    }

    fn query(self) -> SymptomQuery {
        match self {
            QueryArg::Conditional => SymptomQuery::Conditional,
            QueryArg::Marginal => SymptomQuery::Marginal,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum FormatArg {
    Json,
    Csv,
}

impl FormatArg {
    fn name(self) -> &'static str {
        match self {
            FormatArg::Json => "json",
            FormatArg::Csv => "csv",
        }
    }
}

/// Flags for reading one event-log CSV.
#[derive(Args, Clone)]
pub struct LogArgs {
    /// Event-log CSV to read.
    #[arg(long)]
    pub log: PathBuf,

    /// Column holding the case id.
    #[arg(long, default_value = "case", value_name = "NAME")]
    pub case_col: String,

    /// Column holding the activity label.
    #[arg(long, default_value = "activity", value_name = "NAME")]
    pub activity_col: String,

    /// Column holding the event timestamp.
    #[arg(long, default_value = "timestamp", value_name = "NAME")]
    pub timestamp_col: String,

    /// strftime-style timestamp format; common ISO-8601 shapes are tried
    /// when absent.
    #[arg(long, value_name = "FMT")]
    pub timestamp_format: Option<String>,

    /// Attribute column to read, as `name` or `name:categorical` /
    /// `name:numeric`. Repeatable.
    #[arg(long = "attr", value_name = "NAME[:KIND]")]
    pub attrs: Vec<String>,

    /// Replace a numeric attribute by equal-width bins fitted to its
    /// range: `name:bins`. Repeatable.
    #[arg(long = "discretize", value_name = "NAME:BINS")]
    pub discretize: Vec<String>,

    /// Drop traces with fewer events than this.
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub min_length: usize,
}

#[derive(Serialize, Clone)]
struct LogEcho {
    path: String,
    case_col: String,
    activity_col: String,
    timestamp_col: String,
    timestamp_format: Option<String>,
    attributes: Vec<String>,
    discretized: Vec<DiscretizationSpec>,
    min_length: usize,
    traces_dropped_short: usize,
    traces: usize,
}

fn parse_attr_spec(spec: &str) -> Result<(String, AttributeKind)> {
    let (name, kind) = match spec.split_once(':') {
        None => (spec, AttributeKind::Categorical),
        Some((name, "categorical")) => (name, AttributeKind::Categorical),
        Some((name, "numeric")) => (name, AttributeKind::Numeric),
        Some((_, other)) => {
            return Err(Error::Config(format!(
                "unknown attribute kind '{other}' in --attr {spec}; use 'categorical' or \
                 'numeric'"
            )))
        }
    };
    if name.is_empty() {
        return Err(Error::Config(format!("empty attribute name in --attr {spec}")));
    }
    Ok((name.to_string(), kind))
}

fn parse_discretize_spec(spec: &str) -> Result<(String, usize)> {
    let (name, bins) = spec.split_once(':').ok_or_else(|| {
        Error::Config(format!("--discretize {spec} must look like name:bins"))
    })?;
    let bins: usize = bins
        .parse()
        .map_err(|_| Error::Config(format!("bad bin count in --discretize {spec}")))?;
    Ok((name.to_string(), bins))
}

fn parse_usize_list(list: &str, flag: &str) -> Result<Vec<usize>> {
    list.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad value '{p}' in {flag} {list}")))
        })
        .collect()
}

fn parse_orders(list: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = list.split_once('-') {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad range start in --ngrams {list}")))?;
        let hi: usize = hi
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad range end in --ngrams {list}")))?;
        if lo > hi {
            return Err(Error::Config(format!(
                "empty range in --ngrams {list}: {lo} > {hi}"
            )));
        }
        return Ok((lo..=hi).collect());
    }
    parse_usize_list(list, "--ngrams")
}

impl LogArgs {
    fn load(&self) -> Result<(EventLog, LogEcho)> {
        let mut mapping = ColumnMapping::new(&self.case_col, &self.activity_col, &self.timestamp_col);
        let mut attr_echo = Vec::new();
        for spec in &self.attrs {
            let (name, kind) = parse_attr_spec(spec)?;
            attr_echo.push(format!(
                "{name}:{}",
                match kind {
                    AttributeKind::Categorical => "categorical",
                    AttributeKind::Numeric => "numeric",
                }
            ));
            mapping = mapping.with_attribute(&name, kind);
        }
        if let Some(fmt) = &self.timestamp_format {
            mapping = mapping.with_timestamp_format(fmt);
        }

        let file = File::open(&self.log)?;
        let mut log = parse_csv(BufReader::new(file), &mapping)?;

        let mut discretized = Vec::new();
        for spec in &self.discretize {
            let (name, bins) = parse_discretize_spec(spec)?;
            let (binned, rule) = discretize_attribute(&log, &name, bins)?;
            log = binned;
            discretized.push(rule);
        }

        let mut traces_dropped_short = 0;
        if self.min_length > 1 {
            let (kept, removed) = filter_short_traces(&log, self.min_length);
            log = kept;
            traces_dropped_short = removed;
        }

        let echo = LogEcho {
            path: self.log.display().to_string(),
            case_col: self.case_col.clone(),
            activity_col: self.activity_col.clone(),
            timestamp_col: self.timestamp_col.clone(),
            timestamp_format: self.timestamp_format.clone(),
            attributes: attr_echo,
            discretized,
            min_length: self.min_length,
            traces_dropped_short,
            traces: log.traces.len(),
        };
        Ok((log, echo))
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator kind: background-causal, background-random,
    /// symptom-causal, or symptom-random.
    #[arg(long)]
    pub kind: SyntheticKind,

    /// Number of traces to generate.
    #[arg(long, default_value_t = 1000)]
    pub traces: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SynthEcho {
    command: &'static str,
    kind: String,
    traces: usize,
    seed: u64,
    out: String,
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec::new(args.kind, args.traces, args.seed);
    let log = generate(&spec)?;
    let mut bytes = Vec::new();
    write_csv(&mut bytes, &log)?;
    write_atomic(&args.out, &bytes)?;
    let echo = SynthEcho {
        command: "synth",
        kind: args.kind.name().to_string(),
        traces: args.traces,
        seed: args.seed,
        out: args.out.display().to_string(),
    };
    write_atomic(&config_sidecar(&args.out), to_pretty_json(&echo)?.as_bytes())?;
    println!(
        "wrote {} ({} traces, kind {})",
        args.out.display(),
        log.traces.len(),
        args.kind.name()
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub log: LogArgs,

    /// Model structure (pfa, background, symptom, full); inferred from the
    /// role flags when omitted.
    #[arg(long)]
    pub structure: Option<StructureVariant>,

    /// Attribute treated as cause context, read before the event.
    #[arg(long, value_name = "ATTR")]
    pub background: Option<String>,

    /// Attribute treated as effect context, read off the event.
    #[arg(long, value_name = "ATTR")]
    pub symptom: Option<String>,

    /// Hidden-state counts to try, comma separated; the best by held-out
    /// next-event accuracy wins.
    #[arg(long, default_value = "2,4,6,8,10", value_name = "LIST")]
    pub hidden_states: String,

    /// Random restarts per hidden-state count.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,

    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,

    /// Relative log-likelihood change treated as converged.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    /// Count smoothing added per table cell in each update.
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output model path (JSON).
    #[arg(long)]
    pub out: PathBuf,

    /// Training-report path; defaults to the model path with a
    /// `.report.json` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainEcho {
    command: &'static str,
    log: LogEcho,
    structure: String,
    background: Option<String>,
    symptom: Option<String>,
    hidden_state_grid: Vec<usize>,
    restarts: usize,
    max_iters: usize,
    tol: f64,
    epsilon: f64,
    seed: u64,
    model_path: String,
    report_path: String,
}

#[derive(Serialize)]
struct TrainReport {
    config: TrainEcho,
    chosen_hidden_states: usize,
    final_log_likelihood: Option<f64>,
    converged: bool,
    iterations: usize,
    history: Vec<f64>,
    selection: Vec<KSelectionRow>,
    smoothing_note: String,
}

fn resolve_structure(args: &TrainArgs) -> Result<StructureVariant> {
    let inferred = match (&args.background, &args.symptom) {
        (None, None) => StructureVariant::Pfa,
        (Some(_), None) => StructureVariant::Background,
        (None, Some(_)) => StructureVariant::Symptom,
        (Some(_), Some(_)) => StructureVariant::Full,
    };
    let variant = args.structure.unwrap_or(inferred);
    if variant.has_background() != args.background.is_some() {
        return Err(Error::Config(format!(
            "structure '{variant}' {} --background",
            if variant.has_background() { "requires" } else { "forbids" }
        )));
    }
    if variant.has_symptom() != args.symptom.is_some() {
        return Err(Error::Config(format!(
            "structure '{variant}' {} --symptom",
            if variant.has_symptom() { "requires" } else { "forbids" }
        )));
    }
    Ok(variant)
}

fn roles_of(background: &Option<String>, symptom: &Option<String>) -> RoleConfig {
    match (background, symptom) {
        (None, None) => RoleConfig::none(),
        (Some(b), None) => RoleConfig::background(b),
        (None, Some(s)) => RoleConfig::symptom(s),
        (Some(b), Some(s)) => RoleConfig::both(b, s),
    }
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let variant = resolve_structure(args)?;
    let (log, log_echo) = args.log.load()?;
    let roles = roles_of(&args.background, &args.symptom);
    let grid = parse_usize_list(&args.hidden_states, "--hidden-states")?;
    let em = EmConfig {
        max_iters: args.max_iters,
        rel_tol: args.tol,
        smoothing_epsilon: args.epsilon,
        restarts: args.restarts,
        seed: args.seed,
    };
    let encoded = encode_log(&log, &roles)?;
    let (model, fit, selection) = select_hidden_states(variant, &encoded, &grid, &em)?;

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    write_atomic(&args.out, model_to_json(&model)?.as_bytes())?;

    let report = TrainReport {
        config: TrainEcho {
            command: "train",
            log: log_echo,
            structure: variant.name().to_string(),
            background: args.background.clone(),
            symptom: args.symptom.clone(),
            hidden_state_grid: grid,
            restarts: args.restarts,
            max_iters: args.max_iters,
            tol: args.tol,
            epsilon: args.epsilon,
            seed: args.seed,
            model_path: args.out.display().to_string(),
            report_path: report_path.display().to_string(),
        },
        chosen_hidden_states: model.hidden_states,
        final_log_likelihood: model.metadata.final_log_likelihood,
        converged: fit.converged,
        iterations: fit.iterations,
        history: fit.history.clone(),
        selection,
        smoothing_note: fit.smoothing_note.clone(),
    };
    write_atomic(&report_path, to_pretty_json(&report)?.as_bytes())?;

    println!(
        "wrote {} (structure {}, hidden states {}, final log-likelihood {:.4})",
        args.out.display(),
        variant,
        model.hidden_states,
        model.metadata.final_log_likelihood.unwrap_or(f64::NAN),
    );
    println!("wrote {}", report_path.display());
    Ok(())
}

#[derive(Args)]
pub struct PredictArgs {
    /// Trained model (JSON).
    #[arg(long)]
    pub model: PathBuf,

    /// Comma-separated activity labels of the observed prefix.
    #[arg(long, value_name = "A,B,...")]
    pub prefix: String,

    /// Comma-separated background values aligned with the prefix;
    /// defaults to all-missing.
    #[arg(long, value_name = "LIST")]
    pub prefix_background: Option<String>,

    /// Comma-separated symptom values aligned with the prefix; defaults
    /// to all-missing.
    #[arg(long, value_name = "LIST")]
    pub prefix_symptom: Option<String>,

    /// Background value of the predicted slice (background structures
    /// only).
    #[arg(long, value_name = "VALUE")]
    pub next_background: Option<String>,

    #[arg(long, value_enum, default_value_t = TargetArg::NextEvent)]
    pub target: TargetArg,

    /// How to read a symptom target.
    #[arg(long, value_enum, default_value_t = QueryArg::Conditional)]
    pub symptom_query: QueryArg,

    /// Optional file for the JSON that is also printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PredictEcho {
    command: &'static str,
    model: String,
    prefix: Vec<String>,
    prefix_background: Option<Vec<String>>,
    prefix_symptom: Option<Vec<String>>,
    next_background: Option<String>,
    target: &'static str,
    symptom_query: &'static str,
}

#[derive(Serialize)]
struct LabeledProb {
    label: String,
    probability: f64,
}

#[derive(Serialize)]
struct PredictOutput {
    config: PredictEcho,
    probabilities: Vec<LabeledProb>,
    argmax: String,
}

fn split_labels(list: &str) -> Vec<String> {
    list.split(',').map(|s| s.to_string()).collect()
}

fn encode_role_labels(
    labels: &Option<Vec<String>>,
    vocab: Option<&Vocab>,
    len: usize,
    role: &str,
) -> Result<Vec<usize>> {
    match (labels, vocab) {
        (None, None) => Ok(vec![0; len]),
        (None, Some(v)) => Ok(vec![v.missing_index(); len]),
        (Some(_), None) => Err(Error::Config(format!(
            "the model has no {role} variable, so --prefix-{role} is not accepted"
        ))),
        (Some(values), Some(v)) => {
            if values.len() != len {
                return Err(Error::Config(format!(
                    "--prefix-{role} has {} values but the prefix has {len}",
                    values.len()
                )));
            }
            Ok(values.iter().map(|l| v.index_or_other(l)).collect())
        }
    }
}

fn labeled_distribution(vocab: &Vocab, probs: &[f64], argmax: usize) -> (Vec<LabeledProb>, String) {
    let labeled = probs
        .iter()
        .enumerate()
        .map(|(i, &probability)| LabeledProb {
            label: vocab.label_of(i).unwrap_or("?").to_string(),
            probability,
        })
        .collect();
    (labeled, vocab.label_of(argmax).unwrap_or("?").to_string())
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let prefix = split_labels(&args.prefix);
    if prefix.is_empty() || prefix.iter().any(|l| l.is_empty()) {
        return Err(Error::Config("--prefix must list activity labels".into()));
    }
    let events: Vec<usize> = prefix
        .iter()
        .map(|l| model.vocabs.activity.index_or_other(l))
        .collect();
    let len = events.len();

    let bg_labels = args.prefix_background.as_deref().map(split_labels);
    let sy_labels = args.prefix_symptom.as_deref().map(split_labels);
    let bg_vocab = model.vocabs.background.as_ref().map(|r| &r.vocab);
    let sy_vocab = model.vocabs.symptom.as_ref().map(|r| &r.vocab);
    let trace = EncodedTrace {
        case_id: "cli".into(),
        events,
        backgrounds: encode_role_labels(&bg_labels, bg_vocab, len, "background")?,
        symptoms: encode_role_labels(&sy_labels, sy_vocab, len, "symptom")?,
    };

    let next_background = match &args.next_background {
        None => None,
        Some(label) => {
            let vocab = bg_vocab.ok_or_else(|| {
                Error::Config(
                    "the model has no background variable, so --next-background is not accepted"
                        .into(),
                )
            })?;
            if args.target == TargetArg::Symptom {
                return Err(Error::Config(
                    "--next-background applies to next-event prediction only".into(),
                ));
            }
            Some(vocab.index_or_other(label))
        }
    };

    let (dist, vocab) = match args.target {
        TargetArg::NextEvent => (
            predict_next_event(&model, &trace, len, next_background)?,
            &model.vocabs.activity,
        ),
        TargetArg::Symptom => (
            predict_symptom(&model, &trace, len, args.symptom_query.query())?,
            &model
                .vocabs
                .symptom
                .as_ref()
                .ok_or_else(|| {
                    Error::Config("the model has no symptom variable to predict".into())
                })?
                .vocab,
        ),
    };

    let (probabilities, argmax) = labeled_distribution(vocab, &dist.probs, dist.argmax);
    let output = PredictOutput {
        config: PredictEcho {
            command: "predict",
            model: args.model.display().to_string(),
            prefix,
            prefix_background: bg_labels,
            prefix_symptom: sy_labels,
            next_background: args.next_background.clone(),
            target: args.target.name(),
            symptom_query: args.symptom_query.name(),
        },
        probabilities,
        argmax,
    };
    let json = to_pretty_json(&output)?;
    print!("{json}");
    if let Some(out) = &args.out {
        write_atomic(out, json.as_bytes())?;
    }
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Trained model (JSON).
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub log: LogArgs,

    #[arg(long, value_enum, default_value_t = TargetArg::NextEvent)]
    pub target: TargetArg,

    /// How to read a symptom target.
    #[arg(long, value_enum, default_value_t = QueryArg::Conditional)]
    pub symptom_query: QueryArg,

    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
}

#[derive(Serialize)]
struct EvaluateEcho {
    command: &'static str,
    model: String,
    log: LogEcho,
    target: &'static str,
    symptom_query: &'static str,
    format: &'static str,
}

#[derive(Serialize)]
struct EvaluateOutput {
    config: EvaluateEcho,
    class_labels: Vec<String>,
    report: EvaluationReport,
}

fn target_vocab<'m>(model: &'m DbnModel, target: TargetArg) -> Result<&'m Vocab> {
    match target {
        TargetArg::NextEvent => Ok(&model.vocabs.activity),
        TargetArg::Symptom => model
            .vocabs
            .symptom
            .as_ref()
            .map(|r| &r.vocab)
            .ok_or_else(|| Error::Config("the model has no symptom variable to score".into())),
    }
}

fn vocab_labels(vocab: &Vocab) -> Vec<String> {
    (0..vocab.len())
        .map(|i| vocab.label_of(i).unwrap_or("?").to_string())
        .collect()
}

fn evaluate_csv(labels: &[String], report: &EvaluationReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, row: [&str; 3]| {
        w.write_record(row)
            .map_err(|e| Error::Format(format!("csv write failed: {e}")))
    };
    write(&mut w, ["metric", "class", "value"])?;
    let m = &report.metrics;
    write(&mut w, ["accuracy", "", &format!("{}", m.accuracy)])?;
    write(&mut w, ["macro_f1", "", &format!("{}", m.macro_f1)])?;
    write(&mut w, ["total", "", &format!("{}", m.total)])?;
    write(&mut w, ["correct", "", &format!("{}", m.correct)])?;
    write(
        &mut w,
        ["unanswerable", "", &format!("{}", report.unanswerable)],
    )?;
    for class in &m.per_class {
        let label = labels.get(class.class_index).map(String::as_str).unwrap_or("?");
        write(&mut w, ["precision", label, &format!("{}", class.precision)])?;
        write(&mut w, ["recall", label, &format!("{}", class.recall)])?;
        write(&mut w, ["f1", label, &format!("{}", class.f1)])?;
        write(&mut w, ["support", label, &format!("{}", class.support)])?;
    }
    w.into_inner()
        .map_err(|e| Error::Format(format!("csv write failed: {e}")))
}

/// Write a payload to `out` in the chosen format, or to stdout when no
/// path is given. CSV files get the echo as a JSON sidecar.
fn emit_report<E: Serialize>(
    out: Option<&Path>,
    format: FormatArg,
    echo: &E,
    json_payload: &str,
    csv_payload: impl FnOnce() -> Result<Vec<u8>>,
) -> Result<()> {
    match (out, format) {
        (Some(path), FormatArg::Json) => write_atomic(path, json_payload.as_bytes())?,
        (Some(path), FormatArg::Csv) => {
            write_atomic(path, &csv_payload()?)?;
            write_atomic(&config_sidecar(path), to_pretty_json(echo)?.as_bytes())?;
        }
        (None, FormatArg::Json) => print!("{json_payload}"),
        (None, FormatArg::Csv) => {
            let bytes = csv_payload()?;
            print!("{}", String::from_utf8_lossy(&bytes));
        }
    }
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (log, log_echo) = args.log.load()?;
    let encoded = encode_with_vocabulary(&log, &model.vocabs)?;
    let predictor = DbnPredictor::with_symptom_query(&model, args.symptom_query.query());
    let report = evaluate_model(&predictor, &encoded, args.target.target())?;
    let labels = vocab_labels(target_vocab(&model, args.target)?);

    let output = EvaluateOutput {
        config: EvaluateEcho {
            command: "evaluate",
            model: args.model.display().to_string(),
            log: log_echo,
            target: args.target.name(),
            symptom_query: args.symptom_query.name(),
            format: args.format.name(),
        },
        class_labels: labels.clone(),
        report,
    };
    let json = to_pretty_json(&output)?;
    emit_report(
        args.out.as_deref(),
        args.format,
        &output.config,
        &json,
        || evaluate_csv(&labels, &output.report),
    )?;
    if let Some(out) = &args.out {
        println!(
            "wrote {} (accuracy {:.4}, macro-F1 {:.4}, {} predictions)",
            out.display(),
            output.report.metrics.accuracy,
            output.report.metrics.macro_f1,
            output.report.metrics.total,
        );
    }
    Ok(())
}

#[derive(Args)]
pub struct EsaArgs {
    /// Trained model with at least one context variable (JSON).
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub log: LogArgs,

    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
}

#[derive(Serialize)]
struct EsaEcho {
    command: &'static str,
    model: String,
    log: LogEcho,
    format: &'static str,
}

#[derive(Serialize)]
struct EsaOutput {
    config: EsaEcho,
    report: EsaReport,
}

fn esa_csv(report: &EsaReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case_id", "position", "nl"])
        .map_err(|e| Error::Format(format!("csv write failed: {e}")))?;
    for point in &report.points {
        let nl = point.nl.map(|v| format!("{v}")).unwrap_or_default();
        w.write_record([point.case_id.as_str(), &point.position.to_string(), &nl])
            .map_err(|e| Error::Format(format!("csv write failed: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::Format(format!("csv write failed: {e}")))
}

fn run_esa(args: &EsaArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (log, log_echo) = args.log.load()?;
    let encoded = encode_with_vocabulary(&log, &model.vocabs)?;
    let report = esa_report(&model, &encoded)?;

    let output = EsaOutput {
        config: EsaEcho {
            command: "esa",
            model: args.model.display().to_string(),
            log: log_echo,
            format: args.format.name(),
        },
        report,
    };
    let json = to_pretty_json(&output)?;
    emit_report(args.out.as_deref(), args.format, &output.config, &json, || {
        esa_csv(&output.report)
    })?;
    if let Some(out) = &args.out {
        let median = output
            .report
            .summary
            .as_ref()
            .map(|s| format!("{:.4}", s.median))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "wrote {} ({} points, median lift {}, {} above / {} equal / {} below)",
            out.display(),
            output.report.points.len(),
            median,
            output.report.count_above,
            output.report.count_equal,
            output.report.count_below,
        );
    }
    Ok(())
}

#[derive(Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub log: LogArgs,

    /// Context structure to include, as `attr:background` or
    /// `attr:symptom`. Repeatable.
    #[arg(long = "role", value_name = "ATTR:ROLE")]
    pub roles: Vec<String>,

    /// Hidden-state counts to try per structure.
    #[arg(long, default_value = "2,4,6,8,10", value_name = "LIST")]
    pub k_grid: String,

    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,

    /// Training fraction of each repetition's split.
    #[arg(long, default_value_t = 0.7)]
    pub split: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// N-gram orders to sweep, as `3,4,5` or `3-7`.
    #[arg(long, default_value = "3-7", value_name = "ORDERS")]
    pub ngrams: String,

    /// Random restarts per fit.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,

    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,

    /// Relative log-likelihood change treated as converged.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    /// Count smoothing added per table cell in each update.
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,

    /// Report path.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
}

#[derive(Serialize)]
struct BenchmarkEcho {
    command: &'static str,
    log: LogEcho,
    roles: Vec<String>,
    out: String,
    format: &'static str,
}

#[derive(Serialize)]
struct BenchmarkOutput {
    config: BenchmarkEcho,
    report: BenchmarkReport,
}

fn parse_role_spec(spec: &str) -> Result<StructureSpec> {
    let (attr, role) = spec.split_once(':').ok_or_else(|| {
        Error::Config(format!(
            "--role {spec} must look like attr:background or attr:symptom"
        ))
    })?;
    if attr.is_empty() {
        return Err(Error::Config(format!("empty attribute in --role {spec}")));
    }
    Ok(StructureSpec::new(attr, role.parse::<ContextRole>()?))
}

fn benchmark_csv(report: &BenchmarkReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Format(format!("csv write failed: {e}"));
    w.write_record([
        "label",
        "attribute",
        "role",
        "repetitions_used",
        "mean_accuracy",
        "std_accuracy",
        "mean_macro_f1",
        "std_macro_f1",
    ])
    .map_err(fail)?;
    for row in &report.rows {
        w.write_record([
            row.label.as_str(),
            row.attribute.as_deref().unwrap_or(""),
            &row.role.map(|r| r.to_string()).unwrap_or_default(),
            &row.repetitions_used.to_string(),
            &format!("{}", row.mean_accuracy),
            &format!("{}", row.std_accuracy),
            &format!("{}", row.mean_macro_f1),
            &format!("{}", row.std_macro_f1),
        ])
        .map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| Error::Format(format!("csv write failed: {e}")))
}

fn run_benchmark_cmd(args: &BenchmarkArgs) -> Result<()> {
    let (log, log_echo) = args.log.load()?;
    let structures = args
        .roles
        .iter()
        .map(|s| parse_role_spec(s))
        .collect::<Result<Vec<_>>>()?;
    let config = BenchmarkConfig {
        structures,
        k_grid: parse_usize_list(&args.k_grid, "--k-grid")?,
        em: EmConfig {
            max_iters: args.max_iters,
            rel_tol: args.tol,
            smoothing_epsilon: args.epsilon,
            restarts: args.restarts,
            seed: args.seed,
        },
        repetitions: args.repetitions,
        split_ratio: args.split,
        seed: args.seed,
        ngram_orders: parse_orders(&args.ngrams)?,
    };
    let report = run_benchmark(&log, &config)?;

    let output = BenchmarkOutput {
        config: BenchmarkEcho {
            command: "benchmark",
            log: log_echo,
            roles: args.roles.clone(),
            out: args.out.display().to_string(),
            format: args.format.name(),
        },
        report,
    };
    let json = to_pretty_json(&output)?;
    emit_report(
        Some(args.out.as_path()),
        args.format,
        &output.config,
        &json,
        || benchmark_csv(&output.report),
    )?;

    for row in &output.report.rows {
        println!(
            "{:<24} accuracy {:.4} ± {:.4}   macro-F1 {:.4} ± {:.4}   ({} reps)",
            row.label,
            row.mean_accuracy,
            row.std_accuracy,
            row.mean_macro_f1,
            row.std_macro_f1,
            row.repetitions_used,
        );
    }
    if !output.report.failures.is_empty() {
        println!("{} repetition(s) failed; see the report", output.report.failures.len());
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
