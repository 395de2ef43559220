//! Command-line front end: `select`, `simulate` and `basis-check`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{load_csv, Dataset};
use crate::error::{Error, Result};
use crate::regression::fit_subset;
use crate::report::{to_json, write_curves, write_json, write_report, DatasetSummary, Report, RunConfig, ToolInfo};
use crate::selector::{Criterion, EbicConfig, EtaRule, SelectionTrace, DEFAULT_PATIENCE};
use crate::sim::{run_scenario, select_on, AggregateMetrics, Example, RepOutcome, SelectionSettings, SimScenario};
use crate::spline::{SplineBasis, DEFAULT_ORDER};

#[derive(Debug, Parser)]
#[command(name = "vcselect", version, about = "Forward selection for varying coefficient models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select covariates on a CSV dataset and write a JSON report.
    Select(SelectArgs),
    /// Run a simulation scenario and aggregate TP/FP/PE over repetitions.
    Simulate(SimulateArgs),
    /// Check the spline basis for partition of unity and nonnegativity.
    BasisCheck(BasisCheckArgs),
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    y_col: String,
    /// Name of the index variable column.
    #[arg(long, default_value = "t")]
    t_col: String,
    /// Spline basis dimension.
    #[arg(long = "L", default_value_t = 7)]
    dim_l: usize,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// auto or explicit.
    #[arg(long)]
    eta_rule: Option<String>,
    /// EBIC eta (0 gives the BIC).
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_PATIENCE)]
    patience: usize,
    /// argmin-sigma or argmax-corr.
    #[arg(long, default_value = "argmin-sigma")]
    criterion: String,
    /// Keep only the top K covariates by marginal BIC (0 = off).
    #[arg(long, default_value_t = 0)]
    screen_k: usize,
    /// intercept, empty, or a comma-separated list of column names/indices.
    #[arg(long, default_value = "intercept")]
    initial: String,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    curves_out: Option<PathBuf>,
    #[arg(long)]
    no_timestamp: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// key=value scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long = "L")]
    dim_l: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    eta_rule: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    screen_k: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Aggregate JSON path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-repetition CSV.
    #[arg(long)]
    per_rep: Option<PathBuf>,
    /// Monte Carlo samples for the SNR estimate (0 = skip).
    #[arg(long, default_value_t = 100_000)]
    snr_samples: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Debug, Args)]
struct BasisCheckArgs {
    #[arg(long = "L", default_value_t = 7)]
    dim_l: usize,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Number of equally spaced evaluation points.
    #[arg(long, default_value_t = 1000)]
    points: usize,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Select(a) => with_workers(a.workers, || cmd_select(&a)),
        Command::Simulate(a) => with_workers(a.workers, || cmd_simulate(&a)),
        Command::BasisCheck(a) => cmd_basis_check(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn with_workers<F>(workers: Option<usize>, f: F) -> Result<i32>
where
    F: FnOnce() -> Result<i32> + Send,
{
    match workers {
        None => f(),
        Some(0) => Err(Error::Usage("--workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn timestamp(disabled: bool) -> Option<String> {
    if disabled {
        return None;
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).ok()?.as_secs();
    Some(format!("unix:{secs}"))
}

fn ebic_config(
    eta_rule: Option<&str>,
    eta: Option<f64>,
    patience: usize,
    max_steps: Option<usize>,
    criterion: &str,
) -> Result<EbicConfig> {
    let rule = match eta_rule {
        Some(r) => r.parse()?,
        None => EtaRule::Explicit,
    };
    if rule == EtaRule::Auto && eta.is_some() {
        return Err(Error::Usage("--eta cannot be combined with --eta-rule auto".into()));
    }
    Ok(EbicConfig {
        eta_rule: rule,
        eta: eta.unwrap_or(0.0),
        patience,
        max_steps,
        criterion: criterion.parse::<Criterion>()?,
    })
}

fn parse_initial(spec: &str, dataset: &Dataset) -> Result<Vec<usize>> {
    match spec.trim() {
        "intercept" => return Ok(vec![0]),
        "empty" | "" => return Ok(Vec::new()),
        _ => {}
    }
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|tok| {
            if let Ok(j) = tok.parse::<usize>() {
                return Ok(j);
            }
            dataset
                .names()
                .iter()
                .position(|n| n == tok)
                .ok_or_else(|| Error::Usage(format!("--initial: unknown column '{tok}'")))
        })
        .collect()
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n")).map_err(|e| Error::io(path, e)),
        None => {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn cmd_select(a: &SelectArgs) -> Result<i32> {
    let config = ebic_config(
        a.eta_rule.as_deref(),
        a.eta,
        a.patience,
        a.max_steps,
        &a.criterion,
    )?;
    let basis = SplineBasis::new(a.dim_l, a.order)?;
    let dataset = load_csv(&a.data, &a.y_col, &a.t_col)?;
    dataset.require_rows(a.dim_l)?;
    let initial_set = parse_initial(&a.initial, &dataset)?;
    let settings = SelectionSettings {
        dim_l: a.dim_l,
        order: a.order,
        config: config.clone(),
        screen_k: a.screen_k,
        initial_set: initial_set.clone(),
    };
    let trace = select_on(&dataset, &basis, &settings)?;
    let bm = dataset.basis_matrix(&basis)?;
    let fit = fit_subset(&dataset, &bm, &trace.final_set)?;
    let run_config = RunConfig {
        dim_l: a.dim_l,
        order: a.order,
        eta_rule: format!("{:?}", config.eta_rule).to_lowercase(),
        eta: trace.eta,
        patience: config.patience,
        max_steps: config.max_steps,
        criterion: a.criterion.clone(),
        screen_k: a.screen_k,
        initial_set,
    };
    let summary = DatasetSummary::of(
        &dataset,
        Some(a.data.display().to_string()),
        &a.y_col,
        &a.t_col,
    );
    print_summary(&trace, dataset.names());
    let mut report = Report::new(run_config, summary, dataset.names(), trace, &fit, &basis)?;
    report.timestamp = timestamp(a.no_timestamp);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match &a.out {
        Some(path) => write_report(&report, path)?,
        None => emit(&to_json(&report), None)?,
    }
    if let Some(path) = &a.curves_out {
        write_curves(&report, path)?;
    }
    Ok(0)
}

fn print_summary(trace: &SelectionTrace, names: &[String]) {
    let selected: Vec<&str> = trace.final_set.iter().map(|&j| names[j].as_str()).collect();
    eprintln!(
        "selected {} term(s): {} (stop: {}, eta = {:.4})",
        selected.len(),
        selected.join(", "),
        trace.stop_reason.as_str(),
        trace.eta
    );
}

const SCENARIO_KEYS: [&str; 15] = [
    "example",
    "n",
    "p",
    "t1",
    "t2",
    "seed",
    "reps",
    "L",
    "order",
    "eta_rule",
    "eta",
    "patience",
    "criterion",
    "screen_k",
    "test_fraction",
];

/// Raw `key=value` pairs of a scenario file, in file order.
pub fn parse_scenario_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Usage(format!("scenario line {}: expected key=value", lineno + 1))
        })?;
        let k = k.trim();
        if !SCENARIO_KEYS.contains(&k) {
            return Err(Error::Usage(format!(
                "unknown scenario key '{k}'; valid keys: {}",
                SCENARIO_KEYS.join(", ")
            )));
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("scenario key '{key}': cannot parse '{value}'")))
}

/// Scenario and selection settings from an optional file plus flag
/// overrides.
fn resolve_simulation(a: &SimulateArgs) -> Result<(SimScenario, SelectionSettings)> {
    let mut example = None;
    let mut scenario = SimScenario::new(Example::Ex1, 400, 1000, 0.0, 0.0, 1, 50);
    let mut settings = SelectionSettings::default();
    let mut eta_rule: Option<String> = None;
    let mut eta: Option<f64> = None;
    let mut criterion = "argmin-sigma".to_string();

    if let Some(path) = &a.scenario {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in parse_scenario_text(&text)? {
            match k.as_str() {
                "example" => example = Some(v.parse::<Example>()?),
                "n" => scenario.n = parse_value(&k, &v)?,
                "p" => scenario.p = parse_value(&k, &v)?,
                "t1" => scenario.t1 = parse_value(&k, &v)?,
                "t2" => scenario.t2 = parse_value(&k, &v)?,
                "seed" => scenario.seed = parse_value(&k, &v)?,
                "reps" => scenario.reps = parse_value(&k, &v)?,
                "L" => settings.dim_l = parse_value(&k, &v)?,
                "order" => settings.order = parse_value(&k, &v)?,
                "eta_rule" => eta_rule = Some(v),
                "eta" => eta = Some(parse_value(&k, &v)?),
                "patience" => settings.config.patience = parse_value(&k, &v)?,
                "criterion" => criterion = v,
                "screen_k" => settings.screen_k = parse_value(&k, &v)?,
                "test_fraction" => scenario.test_fraction = parse_value(&k, &v)?,
                _ => unreachable!("keys are validated while parsing"),
            }
        }
    }

    if let Some(v) = &a.example {
        example = Some(v.parse()?);
    }
    scenario.example = example.ok_or_else(|| {
        Error::Usage("the scenario needs an example (ex1 or ex2)".into())
    })?;
    macro_rules! set {
        ($flag:expr => $dst:expr) => {
            if let Some(v) = $flag {
                $dst = v;
            }
        };
    }
    set!(a.n => scenario.n);
    set!(a.p => scenario.p);
    set!(a.t1 => scenario.t1);
    set!(a.t2 => scenario.t2);
    set!(a.seed => scenario.seed);
    set!(a.reps => scenario.reps);
    set!(a.test_fraction => scenario.test_fraction);
    set!(a.dim_l => settings.dim_l);
    set!(a.order => settings.order);
    set!(a.screen_k => settings.screen_k);
    let patience = a.patience.unwrap_or(settings.config.patience);
    if a.eta_rule.is_some() {
        eta_rule = a.eta_rule.clone();
        if a.eta.is_none() {
            eta = None;
        }
    }
    if a.eta.is_some() {
        eta = a.eta;
    }
    if let Some(c) = &a.criterion {
        criterion = c.clone();
    }
    settings.config = ebic_config(eta_rule.as_deref(), eta, patience, None, &criterion)?;
    SplineBasis::new(settings.dim_l, settings.order)?;
    scenario.validate(settings.dim_l)?;
    Ok((scenario, settings))
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    schema: u32,
    tool: ToolInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<String>,
    scenario: &'a SimScenario,
    settings: &'a SelectionSettings,
    metrics: &'a AggregateMetrics,
}

/// Per-repetition CSV; `selected` lists the final set separated by `;`.
pub fn per_rep_csv(outcomes: &[RepOutcome]) -> String {
    let mut s = String::from("rep,tp,fp,pe,model_size,stop_reason,selected\n");
    for o in outcomes {
        let selected: Vec<String> = o.selected.iter().map(|j| j.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{:?},{},{},{}",
            o.rep,
            o.metrics.tp,
            o.metrics.fp,
            o.metrics.pe,
            o.metrics.model_size,
            o.stop_reason.as_str(),
            selected.join(";")
        );
    }
    s
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let (scenario, settings) = resolve_simulation(a)?;
    let snr_samples = (a.snr_samples > 0).then_some(a.snr_samples);
    let (outcomes, metrics) = run_scenario(&scenario, &settings, snr_samples)?;
    if let Some(path) = &a.per_rep {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(per_rep_csv(&outcomes).as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    eprintln!(
        "{} reps: TP {:.2}  FP {:.2}  PE {:.3}  size {:.2}",
        metrics.reps, metrics.mean_tp, metrics.mean_fp, metrics.mean_pe, metrics.mean_size
    );
    let report = SimulationReport {
        schema: crate::report::SCHEMA_VERSION,
        tool: ToolInfo::current(),
        timestamp: timestamp(a.no_timestamp),
        scenario: &scenario,
        settings: &settings,
        metrics: &metrics,
    };
    match &a.out {
        Some(path) => write_json(&report, path)?,
        None => emit(&to_json(&report), None)?,
    }
    Ok(0)
}

fn cmd_basis_check(a: &BasisCheckArgs) -> Result<i32> {
    let basis = SplineBasis::new(a.dim_l, a.order)?;
    if a.points < 2 {
        return Err(Error::Usage("--points must be at least 2".into()));
    }
    let mut worst_sum = 0.0f64;
    let mut min_value = f64::INFINITY;
    let mut b = vec![0.0; basis.dim()];
    for i in 0..a.points {
        let t = i as f64 / (a.points - 1) as f64;
        basis.eval_into(t, &mut b)?;
        worst_sum = worst_sum.max((b.iter().sum::<f64>() - 1.0).abs());
        min_value = b.iter().cloned().fold(min_value, f64::min);
    }
    let knots: Vec<String> = basis.knots().iter().map(|k| format!("{k:.4}")).collect();
    println!("L = {}, order = {}", basis.dim(), basis.order());
    println!("knots: {}", knots.join(" "));
    println!("points: {}", a.points);
    println!("max |sum B_k(t) - 1|: {worst_sum:.3e}");
    println!("min B_k(t): {min_value:.3e}");
    let ok = worst_sum <= 1e-12 && min_value >= 0.0;
    println!("{}", if ok { "ok" } else { "FAILED" });
    Ok(if ok { 0 } else { 3 })
}
