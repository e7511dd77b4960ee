use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use modeswitch::domain::{read_trace, write_trace};
use modeswitch::error::{Error, Result};
use modeswitch::learned::{
    self, build_dataset, build_rule_dataset, confusion_matrix, read_dataset, stratified_split,
    write_dataset, ConfusionMatrix, ForestConfig, LearnedModel, LearnedPolicy, CLASSES,
};
use modeswitch::profile::{load_profile, ProfileTable};
use modeswitch::report::{self, RequestRow};
use modeswitch::routing::{OraclePolicy, RulePolicy, StaticPolicy};
use modeswitch::sim::{self, compare_policies, quality_gate, SimOptions};
use modeswitch::workload::{generate_trace, TraceMetadata, TraceSpec};
use modeswitch::{
    ClassifierConfig, ConstraintSet, InferenceMode, RequestDescriptor, RoutingPolicy,
    WorkloadFamily,
};

// stdout may be a closed pipe (`| head`); output is best effort.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_GATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "modeswitch",
    version,
    about = "Route LLM requests to inference modes and simulate the outcome against a mode profile",
    after_help = "Exit codes:\n  0  success\n  2  invalid flags or configuration (including missing input files)\n  3  data error (bad trace, profile, dataset or model contents; simulation failure)\n  4  quality gate failed"
)]
struct Cli {
    /// Profile table JSON. Falls back to $MODESWITCH_PROFILE, then the built-in default.
    #[arg(long, global = true, env = "MODESWITCH_PROFILE")]
    profile: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic, seeded request trace.
    GenTrace(GenTraceArgs),
    /// Route every request of a trace and write one decision per line.
    Route(RouteArgs),
    /// Simulate policies on a trace and write reports, including per-request rows.
    Simulate(SimArgs),
    /// Compare policies on a trace and write reports.
    Compare(SimArgs),
    /// Label a trace with the oracle (or the rule controller) for training.
    BuildDataset(DatasetArgs),
    /// Train a learned router on a dataset.
    Train(TrainArgs),
    /// Energy per token from a power-sample CSV (timestamp_ms,power_w).
    Energy(EnergyArgs),
}

#[derive(Args)]
struct GenTraceArgs {
    /// Same count for every family.
    #[arg(long)]
    balanced: Option<usize>,
    /// Per-family count, NAME=COUNT. Repeatable.
    #[arg(long = "family", value_parser = parse_family_count)]
    families: Vec<(WorkloadFamily, usize)>,
    /// Batched slice count per family, NAME=COUNT. Repeatable.
    #[arg(long = "batched", value_parser = parse_family_count)]
    batched: Vec<(WorkloadFamily, usize)>,
    #[arg(long, default_value_t = 4)]
    batch_pressure: u32,
    #[arg(long, default_value_t = 0.10)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output trace (JSONL). A `.meta.json` sidecar is written next to it.
    #[arg(long, default_value = "trace.jsonl")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct PolicyConfigArgs {
    /// JSON file with optional `classifier`, `constraints` and `fallback_enabled`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    quality_floor: Option<f64>,
    #[arg(long)]
    energy_max: Option<f64>,
    #[arg(long)]
    memory_max: Option<f64>,
    /// Fail instead of serving FP16 when a routed mode has no usable cell.
    #[arg(long)]
    no_fallback: bool,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    trace: PathBuf,
    /// fp16 | rule | oracle | static:<mode> | tree:<path> | forest:<path> | logistic:<path>
    #[arg(long, default_value = "rule")]
    policy: String,
    #[arg(long, default_value = "decisions.jsonl")]
    out: PathBuf,
    #[command(flatten)]
    cfg: PolicyConfigArgs,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Repeatable; see `route --help` for the forms.
    #[arg(long = "policy")]
    policy: Vec<String>,
    /// Comma-separated policy list.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Exit 4 when any benchmark family's mean quality delta is below the floor.
    #[arg(long)]
    quality_gate: bool,
    /// Synthetic overhead added to every decision.
    #[arg(long, default_value_t = 0.0)]
    extra_overhead_ms: f64,
    /// Replace measured rule/learned overhead with a fixed value (ms).
    #[arg(long)]
    overhead: Option<f64>,
    #[command(flatten)]
    cfg: PolicyConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Labeler {
    Oracle,
    Rule,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "oracle")]
    labeler: Labeler,
    #[arg(long, default_value = "dataset.jsonl")]
    out: PathBuf,
    #[command(flatten)]
    cfg: PolicyConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Tree,
    Forest,
    Logistic,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    kind: ModelKind,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Held-out fraction, stratified by label.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    #[arg(long, default_value_t = 50)]
    n_trees: usize,
    #[arg(long)]
    features_per_split: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
}

#[derive(Args)]
struct EnergyArgs {
    #[arg(long)]
    power_trace: PathBuf,
    #[arg(long)]
    tokens: u32,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfigFile {
    classifier: Option<ClassifierConfig>,
    constraints: Option<ConstraintSet>,
    fallback_enabled: Option<bool>,
}

enum Outcome {
    Ok,
    GateFailed,
}

fn parse_family_count(s: &str) -> std::result::Result<(WorkloadFamily, usize), String> {
    let (name, count) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=COUNT, got {s:?}"))?;
    let family = name.trim().parse::<WorkloadFamily>().map_err(|e| e.to_string())?;
    let count = count
        .trim()
        .parse::<usize>()
        .map_err(|e| format!("bad count in {s:?}: {e}"))?;
    Ok((family, count))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn load_table(path: Option<&Path>) -> Result<ProfileTable> {
    match path {
        Some(p) => {
            require_file(p, "profile")?;
            load_profile(p)
        }
        None => Ok(ProfileTable::shipped_default()),
    }
}

fn sim_options(cfg: &PolicyConfigArgs) -> Result<SimOptions> {
    let mut options = SimOptions::default();
    if let Some(path) = &cfg.config {
        require_file(path, "config")?;
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let file: RunConfigFile = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(c) = file.classifier {
            options.classifier = c;
        }
        if let Some(c) = file.constraints {
            options.constraints = c;
        }
        if let Some(f) = file.fallback_enabled {
            options.fallback_enabled = f;
        }
    }
    if let Some(v) = cfg.quality_floor {
        options.constraints.quality_floor_pp = v;
    }
    if let Some(v) = cfg.energy_max {
        options.constraints.energy_ratio_max = v;
    }
    if let Some(v) = cfg.memory_max {
        options.constraints.memory_ratio_max = v;
    }
    if cfg.no_fallback {
        options.fallback_enabled = false;
    }
    options.classifier.validate()?;
    options.constraints.validate()?;
    Ok(options)
}

fn build_policy(
    spec: &str,
    table: &ProfileTable,
    options: &SimOptions,
) -> Result<(Box<dyn RoutingPolicy>, Option<LearnedModel>)> {
    let spec = spec.trim();
    let lower = spec.to_ascii_lowercase();
    let policy: Box<dyn RoutingPolicy> = match lower.as_str() {
        "fp16" => Box::new(StaticPolicy {
            mode: InferenceMode::FP16,
        }),
        "rule" => Box::new(RulePolicy::new(options.classifier, table)),
        "oracle" => Box::new(OraclePolicy::controller(
            table.clone(),
            options.constraints,
            options.classifier,
        )),
        _ => {
            let (kind, arg) = spec
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("unknown policy {spec:?}")))?;
            match kind.to_ascii_lowercase().as_str() {
                "static" => Box::new(StaticPolicy {
                    mode: arg.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
                }),
                "tree" | "forest" | "logistic" => {
                    let path = Path::new(arg);
                    require_file(path, "model")?;
                    let model = LearnedModel::load(path)?;
                    if model.kind() != kind.to_ascii_lowercase() {
                        return Err(Error::Config(format!(
                            "{} holds a {} model, not {kind}",
                            path.display(),
                            model.kind()
                        )));
                    }
                    return Ok((Box::new(LearnedPolicy::new(model.clone())), Some(model)));
                }
                _ => return Err(Error::Config(format!("unknown policy {spec:?}"))),
            }
        }
    };
    Ok((policy, None))
}

fn family_histogram(trace: &[RequestDescriptor]) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for r in trace {
        let key = r
            .workload_tag
            .map_or_else(|| "untagged".to_string(), |f| f.to_string());
        *h.entry(key).or_insert(0) += 1;
    }
    h
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<Outcome> {
    let mut counts: BTreeMap<WorkloadFamily, usize> = BTreeMap::new();
    if let Some(n) = args.balanced {
        if n == 0 {
            return Err(Error::Config("--balanced must be at least 1".into()));
        }
        for f in WorkloadFamily::ALL {
            counts.insert(f, n);
        }
    }
    for (f, n) in args.families {
        counts.insert(f, n);
    }
    let spec = TraceSpec {
        counts,
        batched: args.batched.into_iter().collect(),
        jitter: args.jitter,
        seed: args.seed,
        batch_pressure: args.batch_pressure,
    };
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    if spec.total() == 0 {
        return Err(Error::Config(
            "empty trace; pass --balanced N or --family NAME=COUNT".into(),
        ));
    }
    let trace = generate_trace(&spec)?;
    write_trace(&args.out, &trace)?;
    let meta_path = sidecar_path(&args.out);
    let meta = serde_json::to_string_pretty(&TraceMetadata::for_spec(&spec))
        .expect("metadata serializes");
    fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))?;

    out!("wrote {} requests to {}", trace.len(), args.out.display());
    for (family, n) in family_histogram(&trace) {
        out!("  {family:<28} {n}");
    }
    Ok(Outcome::Ok)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct DecisionLine<'a> {
    request_id: &'a str,
    family: WorkloadFamily,
    mode: InferenceMode,
    reason: modeswitch::DecisionReason,
    overhead_ms: f64,
    emergency_fallback: bool,
}

fn cmd_route(args: RouteArgs, table: &ProfileTable) -> Result<Outcome> {
    require_file(&args.trace, "trace")?;
    let options = sim_options(&args.cfg)?;
    let trace = read_trace(&args.trace)?;
    let (policy, _) = build_policy(&args.policy, table, &options)?;

    let mut out = String::new();
    let mut hist: BTreeMap<WorkloadFamily, BTreeMap<InferenceMode, usize>> = BTreeMap::new();
    for req in &trace {
        let d = policy.route(req)?;
        let family = modeswitch::resolve_family(req, &options.classifier);
        *hist.entry(family).or_default().entry(d.mode).or_insert(0) += 1;
        let line = DecisionLine {
            request_id: &req.request_id,
            family,
            mode: d.mode,
            reason: d.reason,
            overhead_ms: d.overhead_ms,
            emergency_fallback: d.emergency_fallback,
        };
        out.push_str(&serde_json::to_string(&line).expect("decision serializes"));
        out.push('\n');
    }
    fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;

    out!(
        "{}: {} decisions written to {}",
        policy.name(),
        trace.len(),
        args.out.display()
    );
    for (family, modes) in &hist {
        let cells: Vec<String> = modes.iter().map(|(m, n)| format!("{m}={n}")).collect();
        out!("  {:<28} {}", family.to_string(), cells.join(" "));
    }
    Ok(Outcome::Ok)
}

fn cmd_simulate(args: SimArgs, table: &ProfileTable, per_request: bool) -> Result<Outcome> {
    require_file(&args.trace, "trace")?;
    let mut options = sim_options(&args.cfg)?;
    if !(args.extra_overhead_ms >= 0.0) || args.overhead.is_some_and(|v| !(v >= 0.0)) {
        return Err(Error::Config("overheads must be non-negative".into()));
    }
    options.extra_overhead_ms = args.extra_overhead_ms;
    options.overhead_override_ms = args.overhead;

    let mut specs: Vec<String> = args.policy.clone();
    specs.extend(args.policies.iter().filter(|s| !s.trim().is_empty()).cloned());
    if specs.is_empty() {
        return Err(Error::Config("pass at least one --policy".into()));
    }
    let mut policies = Vec::new();
    let mut models = Vec::new();
    for s in &specs {
        let (p, m) = build_policy(s, table, &options)?;
        policies.push(p);
        models.push(m);
    }
    let trace = read_trace(&args.trace)?;
    if trace.is_empty() {
        return Err(Error::Domain(format!("{} holds no requests", args.trace.display())));
    }

    let refs: Vec<&dyn RoutingPolicy> = policies.iter().map(|p| p.as_ref()).collect();
    let cmp = compare_policies(&trace, &refs, table, &options)?;

    create_dir(&args.out)?;
    let tagged = trace.iter().all(|r| r.workload_tag.is_some());
    let labeled = if tagged {
        Some(build_dataset(&trace, table, &options.constraints)?)
    } else {
        log::warn!("trace has untagged requests; skipping confusion matrices");
        None
    };
    let mut accuracies = Vec::new();
    let mut notes = Vec::new();
    for (run, model) in cmp.runs.iter().zip(&models) {
        let acc = match (model, &labeled) {
            (Some(m), Some(rows)) => {
                let cm = confusion_matrix(m, rows)?;
                let name = run.report.policy.replace([':', '/'], "_");
                report::write_confusion_csv(args.out.join(format!("confusion_{name}.csv")), &cm)?;
                Some(cm.accuracy())
            }
            _ => None,
        };
        accuracies.push(acc);
    }
    let rows = report::comparison_rows(&cmp, &accuracies);
    report::write_csv(args.out.join("comparison.csv"), &rows)?;
    let mut fam_rows = Vec::new();
    for r in cmp.reports() {
        fam_rows.extend(report::family_rows(r));
    }
    if !cmp.runs.iter().any(|r| r.report.policy == cmp.oracle.policy) {
        fam_rows.extend(report::family_rows(&cmp.oracle));
    }
    report::write_csv(args.out.join("per_family.csv"), &fam_rows)?;
    if per_request {
        for run in &cmp.runs {
            let name = run.report.policy.replace([':', '/'], "_");
            let rows: Vec<RequestRow> = run.results.iter().map(RequestRow::from).collect();
            report::write_csv(args.out.join(format!("requests_{name}.csv")), &rows)?;
        }
    }

    let mut failures = Vec::new();
    if args.quality_gate {
        for r in cmp.reports() {
            failures.extend(quality_gate(r, options.constraints.quality_floor_pp));
        }
        for f in &failures {
            notes.push(format!(
                "quality gate: {} on {} has mean delta {:+.2} pp (floor {:+.2})",
                f.policy, f.family, f.mean_quality_delta_pp, options.constraints.quality_floor_pp
            ));
        }
    }
    let synthesized = rows.iter().any(|r| r.synthesized_cell_usage > 0.0);
    if synthesized {
        notes.push("some results rely on Synthesized profile cells (see synthesized_cell_usage)".into());
    }
    let md = report::summary_markdown(&rows, &notes);
    let md_path = args.out.join("summary.md");
    fs::write(&md_path, &md).map_err(|e| Error::io(&md_path, e))?;
    out!("{}", md.trim_end());

    if !failures.is_empty() {
        eprintln!("quality gate failed for {} policy/family pair(s)", failures.len());
        return Ok(Outcome::GateFailed);
    }
    Ok(Outcome::Ok)
}

fn cmd_build_dataset(args: DatasetArgs, table: &ProfileTable) -> Result<Outcome> {
    require_file(&args.trace, "trace")?;
    let options = sim_options(&args.cfg)?;
    let trace = read_trace(&args.trace)?;
    let rows = match args.labeler {
        Labeler::Oracle => build_dataset(&trace, table, &options.constraints)?,
        Labeler::Rule => build_rule_dataset(&trace, table, &options.classifier)?,
    };
    write_dataset(&args.out, &rows)?;
    out!("wrote {} rows to {}", rows.len(), args.out.display());
    for class in CLASSES {
        let n = rows.iter().filter(|r| r.label == class).count();
        out!("  {:<24} {n}", class.to_string());
    }
    Ok(Outcome::Ok)
}

fn print_confusion(title: &str, m: &ConfusionMatrix) {
    out!("{title} (rows true, columns predicted; accuracy {:.4})", m.accuracy());
    let short: Vec<String> = CLASSES.iter().map(|c| c.to_string()).collect();
    out!("  {:<24}{}", "", short.iter().map(|s| format!("{s:>24}")).collect::<String>());
    for (i, name) in short.iter().enumerate() {
        let cells: String = m.counts[i].iter().map(|c| format!("{c:>24}")).collect();
        out!("  {name:<24}{cells}");
    }
}

fn cmd_train(args: TrainArgs) -> Result<Outcome> {
    require_file(&args.dataset, "dataset")?;
    let rows = read_dataset(&args.dataset)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (train, test) = stratified_split(&rows, args.test_fraction, args.seed)?;
    let model = match args.kind {
        ModelKind::Tree => LearnedModel::Tree(learned::train_tree(
            &train,
            args.max_depth,
            args.min_samples_split,
            args.seed,
        )?),
        ModelKind::Forest => {
            let cfg = ForestConfig {
                n_trees: args.n_trees,
                features_per_split: args
                    .features_per_split
                    .unwrap_or_else(learned::default_features_per_split),
                max_depth: args.max_depth,
                min_samples_split: args.min_samples_split,
                seed: args.seed,
            };
            LearnedModel::Forest(learned::train_forest(&train, &cfg)?)
        }
        ModelKind::Logistic => LearnedModel::Logistic(learned::train_logistic(
            &train,
            args.learning_rate,
            args.iterations,
            args.l2,
        )?),
    };
    model.save(&args.out)?;
    out!(
        "{} model trained on {} rows, held out {}; written to {}",
        model.kind(),
        train.len(),
        test.len(),
        args.out.display()
    );
    let train_cm = confusion_matrix(&model, &train)?;
    out!("train accuracy {:.4}", train_cm.accuracy());
    if test.is_empty() {
        print_confusion("train confusion", &train_cm);
    } else {
        let test_cm = confusion_matrix(&model, &test)?;
        out!("test accuracy {:.4}", test_cm.accuracy());
        print_confusion("test confusion", &test_cm);
    }
    Ok(Outcome::Ok)
}

fn cmd_energy(args: EnergyArgs) -> Result<Outcome> {
    require_file(&args.power_trace, "power trace")?;
    let trace = sim::read_power_trace(&args.power_trace)?;
    let j = sim::energy_from_power_trace(&trace, args.tokens)?;
    out!("{j}");
    Ok(Outcome::Ok)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::GenTrace(a) => cmd_gen_trace(a),
        Command::Energy(a) => cmd_energy(a),
        Command::Train(a) => cmd_train(a),
        cmd => {
            let table = load_table(cli.profile.as_deref())?;
            match cmd {
                Command::Route(a) => cmd_route(a, &table),
                Command::Simulate(a) => cmd_simulate(a, &table, true),
                Command::Compare(a) => cmd_simulate(a, &table, false),
                Command::BuildDataset(a) => cmd_build_dataset(a, &table),
                _ => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::GateFailed) => ExitCode::from(EXIT_GATE),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}
