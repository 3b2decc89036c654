//! `revla`: inspect, merge, schedule, lab and eval subcommands.
//!
//! Every invocation writes a JSON artifact (`--report`, default
//! `revla-report.json`) holding either the result or the error, and exits
//! non-zero exactly when the artifact records an error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::lab::{comparison_table, ExperimentReport, LabConfig, LabError, PreparedLab};
use crate::merge::{linear_merge, MergeError, MergeSpec};
use crate::ood::{
    aggregate, partial_success_summary, read_log, relative_improvement, render_partial_table, render_success_table,
    scenario_suite, Metric, OodError, SuiteDefaults,
};
use crate::schedule::{AlphaRamp, ScheduleConfig, ScheduleError, ScheduleMode, Variant};
use crate::tensor_store::{Checkpoint, Selector, SelectorError, StoreError};

pub const LOG_ENV: &str = "REVLA_LOG_LEVEL";
pub const DEFAULT_REPORT: &str = "revla-report.json";

#[derive(Debug, Parser)]
#[command(name = "revla", version, about = "Checkpoint merging, reversal schedules, toy lab and OOD accounting")]
pub struct Cli {
    /// JSON result/error artifact written by every run.
    #[arg(long, global = true, default_value = DEFAULT_REPORT)]
    pub report: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List tensor names, dtypes, shapes and checksums.
    Inspect(InspectArgs),
    /// Write (1 - alpha) * current + alpha * pretrained over selected tensors.
    Merge(MergeArgs),
    /// Print the stage boundaries of a reversal schedule.
    Schedule(ScheduleArgs),
    /// Run the forgetting/reversal experiment for one or all variants.
    Lab(LabArgs),
    /// Aggregate episode logs into success tables.
    Eval(EvalArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Inspect(_) => "inspect",
            Command::Merge(_) => "merge",
            Command::Schedule(_) => "schedule",
            Command::Lab(_) => "lab",
            Command::Eval(_) => "eval",
        }
    }
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub current: PathBuf,
    #[arg(long)]
    pub pretrained: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    /// Glob over tensor names (`*` matches anything); repeatable.
    #[arg(long = "select", required = true)]
    pub select: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// JSON schedule config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ScheduleMode>,
    #[arg(long)]
    pub total_steps: Option<u64>,
    /// Defaults to the total for flip schedules.
    #[arg(long)]
    pub stage_length: Option<u64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long = "select")]
    pub select: Vec<String>,
    #[arg(long, value_parser = parse_ramp)]
    pub ramp: Option<AlphaRamp>,
}

#[derive(Debug, Args)]
pub struct LabArgs {
    /// JSON lab config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// A variant name or `all`.
    #[arg(long, default_value = "all")]
    pub variant: VariantChoice,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Length of the reversal run.
    #[arg(long)]
    pub total_steps: Option<u64>,
    #[arg(long)]
    pub stage_length: Option<u64>,
    /// Output directory for reports, the comparison table and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL episode logs.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    #[arg(long, default_value = "lift")]
    pub metric: Metric,
    /// Policy the relative improvements are measured against.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Planned episodes per out-of-domain scenario.
    #[arg(long, default_value_t = SuiteDefaults::default().episodes_per_setting)]
    pub episodes_per_setting: u32,
    /// Optional directory for `eval.json` and `eval.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantChoice {
    One(Variant),
    All,
}

impl VariantChoice {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantChoice::One(v) => vec![v],
            VariantChoice::All => Variant::ALL.to_vec(),
        }
    }
}

impl FromStr for VariantChoice {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            Ok(VariantChoice::All)
        } else {
            s.parse().map(VariantChoice::One)
        }
    }
}

fn parse_mode(s: &str) -> Result<ScheduleMode, String> {
    match s {
        "gradual" => Ok(ScheduleMode::Gradual),
        "flip" => Ok(ScheduleMode::Flip),
        other => Err(format!("unknown mode {other:?} (expected gradual or flip)")),
    }
}

fn parse_ramp(s: &str) -> Result<AlphaRamp, String> {
    match s {
        "leading" => Ok(AlphaRamp::Leading),
        "trailing" => Ok(AlphaRamp::Trailing),
        other => Err(format!("unknown ramp {other:?} (expected leading or trailing)")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("variant {variant}: {source}")]
    Variant {
        variant: Variant,
        #[source]
        source: LabError,
    },
    #[error(transparent)]
    Ood(#[from] OodError),
    #[error("cannot read {path}: {reason}")]
    Input { path: String, reason: String },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Checkpoint invariant behind the failure, if any.
    pub fn invariant(&self) -> Option<&'static str> {
        let store = match self {
            CliError::Store(e) => e,
            CliError::Merge(MergeError::Store(e)) => e,
            CliError::Schedule(ScheduleError::Merge(MergeError::Store(e))) => e,
            _ => return None,
        };
        Some(store.invariant())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let wrap = |source| CliError::Output { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(wrap)?;
    }
    fs::write(path, bytes).map_err(wrap)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report values serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let input = |reason: String| CliError::Input { path: path.display().to_string(), reason };
    let text = fs::read_to_string(path).map_err(|e| input(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| input(e.to_string()))
}

fn inspect(args: &InspectArgs) -> Result<Value, CliError> {
    let ckpt = Checkpoint::load(&args.path)?;
    let mut rows = Vec::new();
    for (key, value) in ckpt.metadata() {
        println!("# {key} = {value}");
    }
    for meta in ckpt.metas() {
        let tensor = ckpt.get(&meta.name).expect("meta names come from the checkpoint");
        let checksum = tensor.checksum();
        println!("{}\t{}\t{:?}\t{}", meta.name, meta.dtype, meta.shape, checksum);
        rows.push(json!({
            "name": meta.name,
            "dtype": meta.dtype.as_str(),
            "shape": meta.shape,
            "byte_range": [meta.byte_range.0, meta.byte_range.1],
            "sha256": checksum,
        }));
    }
    Ok(json!({
        "path": args.path.display().to_string(),
        "tensor_count": rows.len(),
        "metadata": ckpt.metadata(),
        "tensors": rows,
    }))
}

fn merge(args: &MergeArgs) -> Result<Value, CliError> {
    let selector = Selector::new(args.select.iter().cloned())?;
    let spec = MergeSpec::new(args.alpha, selector)?;
    let current = Checkpoint::load(&args.current)?;
    let pretrained = Checkpoint::load(&args.pretrained)?;
    let merged = linear_merge(&current, &pretrained, &spec)?;
    merged.save(&args.out)?;
    let selected = spec.selector().select(current.names().chain(pretrained.names()));
    log::info!("merged {} tensors at alpha {}", selected.len(), args.alpha);
    Ok(json!({
        "out": args.out.display().to_string(),
        "alpha": args.alpha,
        "selected": selected,
        "tensor_count": merged.len(),
    }))
}

fn schedule(args: &ScheduleArgs) -> Result<Value, CliError> {
    let mut config = match &args.config {
        Some(path) => read_json::<ScheduleConfig>(path)?,
        None => ScheduleConfig::default(),
    };
    if let Some(m) = args.mode {
        config.mode = Some(m);
    }
    if let Some(v) = args.variant {
        config.variant_name = Some(v);
    }
    if let Some(n) = args.total_steps {
        config.total_steps = n;
    }
    if let Some(r) = args.ramp {
        config.ramp = r;
    }
    if !args.select.is_empty() {
        config.selector = Some(Selector::new(args.select.iter().cloned())?);
    }
    if args.config.is_none() && args.total_steps.is_none() {
        return Err(CliError::Usage("schedule needs --total-steps or --config".into()));
    }
    match args.stage_length {
        Some(n) => config.stage_length = n,
        None if args.config.is_none() => {
            if config.mode.or(config.variant_name.map(Variant::mode)) == Some(ScheduleMode::Flip) {
                config.stage_length = config.total_steps;
            } else {
                return Err(CliError::Usage("gradual schedules need --stage-length".into()));
            }
        }
        None => {}
    }

    let schedule = config.schedule()?;
    let groups = config.resolved_selector().patterns().to_vec();
    let groups_text = if groups.is_empty() { "-".to_string() } else { groups.join(",") };
    let boundaries = schedule.stage_boundaries();
    println!("{:>10}  {:>6}  groups", "step", "alpha");
    for b in &boundaries {
        println!("{:>10}  {:>6.4}  {}", b.step, b.alpha, groups_text);
    }
    Ok(json!({
        "schedule": schedule,
        "groups": groups,
        "boundaries": boundaries,
    }))
}

fn lab(args: &LabArgs) -> Result<Value, CliError> {
    let mut config = match &args.config {
        Some(path) => read_json::<LabConfig>(path)?,
        None => LabConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(n) = args.total_steps {
        config.reversal_steps = n;
    }
    if let Some(n) = args.stage_length {
        config.stage_length = n;
    }
    let variants = args.variant.variants();
    // Validate every plan before spending time on training.
    let plans = variants.iter().map(|&v| config.plan(v)).collect::<Result<Vec<_>, _>>()?;
    let prepared = PreparedLab::new(config.clone())?;

    let runs: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = plans.iter().map(|plan| scope.spawn(|| prepared.run_variant(plan))).collect();
        handles.into_iter().map(|h| h.join().expect("variant thread panicked")).collect()
    });

    let out = &args.out;
    let mut files = vec!["config.json".to_string(), "pretrained.safetensors".into(), "finetuned.safetensors".into()];
    write_json(&out.join("config.json"), &config)?;
    prepared.pretrained().save(out.join("pretrained.safetensors"))?;
    prepared.finetuned().save(out.join("finetuned.safetensors"))?;
    let mut reports: Vec<ExperimentReport> = Vec::new();
    for (variant, run) in variants.iter().zip(runs) {
        let run = run.map_err(|source| CliError::Variant { variant: *variant, source })?;
        let report_name = format!("{}.report.json", variant.name());
        let ckpt_name = format!("{}.safetensors", variant.name());
        write_json(&out.join(&report_name), &run.report)?;
        run.final_checkpoint.save(out.join(&ckpt_name))?;
        files.extend([report_name, ckpt_name]);
        reports.push(run.report);
    }
    let table = comparison_table(&reports);
    write_file(&out.join("comparison.txt"), table.as_bytes())?;
    files.push("comparison.txt".into());
    print!("{table}");

    let summaries: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "variant": r.variant,
                "probe_err_pretrained": r.probe_err_pretrained,
                "probe_err_after_finetune": r.probe_err_after_finetune,
                "probe_err_after_reversal": r.probe_err_after_reversal,
                "forgetting_ratio": r.forgetting_ratio,
                "encoder_bitwise_reverted": r.encoder_bitwise_reverted,
            })
        })
        .collect();
    Ok(json!({ "seed": config.seed, "variants": summaries, "files": files }))
}

fn eval(args: &EvalArgs) -> Result<Value, CliError> {
    let mut records = Vec::new();
    for path in &args.logs {
        records.extend(read_log(path)?);
    }
    let scenarios = scenario_suite(SuiteDefaults { episodes_per_setting: args.episodes_per_setting });
    let table = aggregate(&records, &scenarios, args.metric)?;
    let partial = partial_success_summary(&records)?;

    let mut improvements = Vec::new();
    if let Some(base) = &args.baseline {
        let base_partial = partial
            .iter()
            .find(|p| &p.policy == base)
            .ok_or_else(|| CliError::Usage(format!("baseline policy {base:?} is not in the logs")))?;
        for total in table.totals.iter().filter(|t| &t.policy != base) {
            let Some(base_total) = table.total(base, total.protocol) else { continue };
            improvements.push(json!({
                "policy": total.policy,
                "protocol": total.protocol,
                "metric": args.metric,
                "rate": total.rate,
                "baseline_rate": base_total.rate,
                "percent": relative_improvement(total.rate, base_total.rate)?,
            }));
        }
        for p in partial.iter().filter(|p| &p.policy != base) {
            improvements.push(json!({
                "policy": p.policy,
                "protocol": null,
                "grasp_percent": relative_improvement(p.grasp_rate, base_partial.grasp_rate)?,
                "lift_percent": relative_improvement(p.lift_rate, base_partial.lift_rate)?,
            }));
        }
    }

    let mut text = render_success_table(&table, &scenarios);
    text.push('\n');
    text.push_str(&render_partial_table(&partial));
    print!("{text}");
    let result = json!({
        "records": records.len(),
        "table": table,
        "partial_success": partial,
        "improvements": improvements,
    });
    if let Some(dir) = &args.out {
        write_json(&dir.join("eval.json"), &result)?;
        write_file(&dir.join("eval.txt"), text.as_bytes())?;
    }
    Ok(result)
}

pub fn execute(command: &Command) -> Result<Value, CliError> {
    match command {
        Command::Inspect(a) => inspect(a),
        Command::Merge(a) => merge(a),
        Command::Schedule(a) => schedule(a),
        Command::Lab(a) => lab(a),
        Command::Eval(a) => eval(a),
    }
}

fn init_logging() {
    let level = match std::env::var(LOG_ENV) {
        Ok(v) if ["error", "warn", "info", "debug"].contains(&v.as_str()) => v,
        Ok(v) => {
            eprintln!("warning: ignoring {LOG_ENV}={v:?} (expected error, warn, info or debug)");
            "warn".into()
        }
        Err(_) => "warn".into(),
    };
    let _ = env_logger::Builder::new().parse_filters(&level).try_init();
}

fn error_artifact(command: &str, err: &CliError) -> Value {
    json!({
        "command": command,
        "status": "error",
        "error": err.to_string(),
        "invariant": err.invariant(),
    })
}

/// Writes the artifact; returns the process exit code.
fn finish(report: &Path, artifact: &Value, code: i32) -> i32 {
    match write_json(report, artifact) {
        Ok(()) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if code == 0 {
                1
            } else {
                code
            }
        }
    }
}

/// Parses `args` (including the program name), runs the command and writes
/// its artifact.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            let artifact = json!({ "command": null, "status": "error", "error": e.to_string(), "invariant": null });
            return finish(Path::new(DEFAULT_REPORT), &artifact, 2);
        }
    };
    let name = cli.command.name();
    match execute(&cli.command) {
        Ok(result) => finish(&cli.report, &json!({ "command": name, "status": "ok", "result": result }), 0),
        Err(err) => {
            match err.invariant() {
                Some(inv) => eprintln!("error [{inv}]: {err}"),
                None => eprintln!("error: {err}"),
            }
            finish(&cli.report, &error_artifact(name, &err), 1)
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}
