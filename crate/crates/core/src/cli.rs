//! `fdx` command line: `analyze`, `simulate` and `selftest`.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 usage or validation error,
//! 3 I/O failure.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::common::{AnalysisConfig, StatMatrix};
use crate::error::Error;
use crate::fdx_seq::{sequential_approx, sequential_exact};
use crate::fdx_single::{negate_matrix, single_step};
use crate::maxt::maxt_sequential;
use crate::report::{render_report, zoom_table, Analysis, Report, ReportMeta};
use crate::resampling::{build_stat_matrix, draw_transforms, Dataset, Design, Engine, ResamplePlan};
use crate::selftest;
use crate::simlab::{emit_plot_data, run_study, Method, SimDesign};
use crate::stats::StatisticPlugin;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "fdx", version, about = "Resampling-based FDX control with simultaneous top-k bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyse a data set or a precomputed statistic / p-value matrix.
    Analyze(AnalyzeArgs),
    /// Run a simulation study described by a TOML design file.
    Simulate(SimulateArgs),
    /// Run the embedded fixture suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    FdxSingle,
    /// Approximate sequential method with random subsets.
    FdxSeq,
    FdxSeqExact,
    Maxt,
    MaxtSeq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum InputKind {
    DataTwoGroup,
    DataOneSample,
    DataResponse,
    StatsMatrix,
    PvalueMatrix,
}

impl InputKind {
    fn name(self) -> &'static str {
        match self {
            Self::DataTwoGroup => "data_two_group",
            Self::DataOneSample => "data_one_sample",
            Self::DataResponse => "data_response",
            Self::StatsMatrix => "stats_matrix",
            Self::PvalueMatrix => "pvalue_matrix",
        }
    }

    fn is_data(self) -> bool {
        matches!(self, Self::DataTwoGroup | Self::DataOneSample | Self::DataResponse)
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    input_kind: InputKind,
    #[arg(long, value_enum, default_value = "fdx-single")]
    method: MethodArg,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Group labels: a file with one label per observation, or `col:N` for
    /// column N (1-based) of the input.
    #[arg(long)]
    labels: Option<String>,
    /// Response: a file with one value per observation, or `col:N`.
    #[arg(long)]
    response: Option<String>,
    /// Rows of the statistic matrix for data inputs, identity included.
    #[arg(long, default_value_t = 1000)]
    permutations: usize,
    /// Random subsets per step for the approximate sequential method.
    #[arg(long, default_value_t = 25)]
    combos: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Draw a fresh seed from the OS (recorded in the report).
    #[arg(long, conflicts_with = "seed")]
    entropy: bool,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Welch instead of pooled-variance t statistics.
    #[arg(long)]
    welch: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML design; any design field may be a list to sweep over.
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, hide = true)]
    inject_quantile_fault: bool,
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.code();
    }
    let outcome = match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Simulate(s) => simulate(&s),
        Command::Selftest(s) => return run_selftest(&s),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("FDX_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("FDX_THREADS must be a positive integer, got '{raw}'")))?;
    // A pool may already exist when called more than once in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Numeric CSV matrix with an optional non-numeric header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvMatrix {
    pub rows: Vec<Vec<f64>>,
    pub header: Option<Vec<String>>,
}

pub fn parse_matrix(text: &str) -> CliResult<CsvMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header = None;
    let mut width = None;
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("malformed CSV: {e}")))?;
        let line = rec.position().map_or(idx as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(|f| f.parse::<f64>().ok()).collect();
        if rows.is_empty() && header.is_none() && parsed.iter().any(Option::is_none) {
            header = Some(rec.iter().map(str::to_string).collect());
            width = Some(rec.len());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(CliError::Usage(format!("line {line}: expected {w} fields, found {}", rec.len())));
        }
        let mut row = Vec::with_capacity(w);
        for (col, (field, value)) in rec.iter().zip(parsed).enumerate() {
            match value {
                Some(v) if !v.is_nan() => row.push(v),
                _ => {
                    return Err(CliError::Usage(format!(
                        "line {line}, column {}: cannot parse '{field}' as a number",
                        col + 1
                    )))
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage("input contains no data rows".into()));
    }
    Ok(CsvMatrix { rows, header })
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

enum Side {
    Column(usize),
    File(PathBuf),
}

fn side_spec(spec: &str) -> CliResult<Side> {
    match spec.strip_prefix("col:") {
        Some(n) => match n.parse::<usize>() {
            Ok(c) if c >= 1 => Ok(Side::Column(c - 1)),
            _ => Err(CliError::Usage(format!("bad column spec '{spec}', expected col:N with N >= 1"))),
        },
        None => Ok(Side::File(PathBuf::from(spec))),
    }
}

/// One token per observation: one per line, or a single comma-separated
/// line. A header line is skipped when `numeric` and it does not parse.
fn side_tokens(path: &Path, numeric: bool) -> CliResult<Vec<String>> {
    let text = read_text(path)?;
    let mut tokens: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .flat_map(|l| l.split(',').map(|t| t.trim().to_string()).collect::<Vec<_>>())
        .collect();
    if numeric && tokens.first().is_some_and(|t| t.parse::<f64>().is_err()) {
        tokens.remove(0);
    }
    Ok(tokens)
}

fn two_group_labels(tokens: &[String]) -> CliResult<Vec<bool>> {
    let first = tokens.first().ok_or_else(|| CliError::Usage("labels are empty".into()))?;
    let distinct: std::collections::BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(CliError::Usage(format!("labels must take exactly two values, found {}", distinct.len())));
    }
    Ok(tokens.iter().map(|t| t == first).collect())
}

fn response_values(tokens: &[String]) -> CliResult<Vec<f64>> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("response value {}: cannot parse '{t}' as a number", i + 1)))
        })
        .collect()
}

/// Splits column `c` off a row-major matrix.
fn take_column(rows: &mut [Vec<f64>], c: usize) -> CliResult<Vec<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    if c >= width {
        return Err(CliError::Usage(format!("column {} out of range for {width} input columns", c + 1)));
    }
    Ok(rows.iter_mut().map(|r| r.remove(c)).collect())
}

fn load_dataset(a: &AnalyzeArgs, mut rows: Vec<Vec<f64>>) -> CliResult<Dataset> {
    let design = match a.input_kind {
        InputKind::DataTwoGroup => {
            let spec = a.labels.as_deref().ok_or_else(|| CliError::Usage("--labels is required for data_two_group".into()))?;
            let tokens = match side_spec(spec)? {
                Side::Column(c) => take_column(&mut rows, c)?.iter().map(|v| v.to_string()).collect(),
                Side::File(p) => side_tokens(&p, false)?,
            };
            Design::TwoGroup { labels: two_group_labels(&tokens)? }
        }
        InputKind::DataResponse => {
            let spec = a.response.as_deref().ok_or_else(|| CliError::Usage("--response is required for data_response".into()))?;
            let y = match side_spec(spec)? {
                Side::Column(c) => take_column(&mut rows, c)?,
                Side::File(p) => response_values(&side_tokens(&p, true)?)?,
            };
            Design::Response { y }
        }
        _ => Design::OneSample,
    };
    let (n, m) = (rows.len(), rows.first().map_or(0, Vec::len));
    Ok(Dataset::new(n, m, rows.into_iter().flatten().collect(), design)?)
}

fn needs_seed(a: &AnalyzeArgs) -> bool {
    a.input_kind.is_data() || a.method == MethodArg::FdxSeq
}

fn resolve_seed(a: &AnalyzeArgs) -> CliResult<Option<u64>> {
    match (a.seed, a.entropy) {
        (Some(s), _) => Ok(Some(s)),
        (None, true) => Ok(Some(rand::random())),
        (None, false) if needs_seed(a) => {
            Err(CliError::Usage("this analysis is randomised: pass --seed, or --entropy for a fresh seed".into()))
        }
        (None, false) => Ok(None),
    }
}

/// Runs `method` on statistics oriented so that large is significant.
fn run_method(stats: &StatMatrix, cfg: &AnalysisConfig, method: MethodArg, meta: &ReportMeta) -> CliResult<Report> {
    let obs = stats.observed();
    let build = |analysis: Analysis<'_>| {
        let table = zoom_table(obs, analysis.rejections().threshold, cfg.gamma);
        render_report(meta, analysis, &table)
    };
    Ok(match method {
        MethodArg::FdxSingle => build(Analysis::Single(&single_step(stats, cfg)?)),
        MethodArg::FdxSeq => build(Analysis::Sequential(&sequential_approx(stats, cfg)?)),
        MethodArg::FdxSeqExact => {
            let r = sequential_exact(stats, cfg).map_err(|e| match e {
                Error::EnumerationInfeasible { .. } => CliError::Usage(format!("{e}; use --method fdx-seq")),
                e => e.into(),
            })?;
            build(Analysis::Sequential(&r))
        }
        MethodArg::Maxt | MethodArg::MaxtSeq => {
            let r = maxt_sequential(stats, cfg.alpha)?;
            build(Analysis::MaxT { result: &r, sequential: method == MethodArg::MaxtSeq })
        }
    })
}

fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    let mut cfg = AnalysisConfig::new(a.alpha, a.gamma)?
        .with_combos_per_step(a.combos)
        .with_max_steps(a.max_steps);
    if a.combos == 0 {
        return Err(CliError::Usage("--combos must be positive".into()));
    }
    let seed = resolve_seed(a)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let matrix = parse_matrix(&read_text(&a.input)?)?;
    let stats = match a.input_kind {
        InputKind::StatsMatrix | InputKind::PvalueMatrix => StatMatrix::from_rows(matrix.rows)?,
        _ => {
            if a.permutations < 2 {
                return Err(CliError::Usage("--permutations must be at least 2".into()));
            }
            let ds = load_dataset(a, matrix.rows)?;
            let engine = Engine::for_design(ds.design());
            let statistic = match engine {
                Engine::LabelPermutation => StatisticPlugin::AbsTwoSampleT { equal_variance: !a.welch },
                Engine::SignFlip => StatisticPlugin::AbsMean,
                Engine::ResponsePermutation => StatisticPlugin::AbsPearson,
            };
            let plan = ResamplePlan::new(engine, a.permutations - 1, seed.expect("data inputs require a seed"));
            build_stat_matrix(&ds, &draw_transforms(&plan, ds.n())?, statistic)?
        }
    };
    if !stats.can_reject(cfg.alpha) {
        eprintln!(
            "warning: {} transformations cannot yield rejections at alpha = {}; at least {} are needed",
            stats.d(),
            cfg.alpha,
            StatMatrix::min_rows_for(cfg.alpha)
        );
    }
    let meta = ReportMeta {
        alpha: cfg.alpha,
        gamma: cfg.gamma,
        seed,
        d: stats.d(),
        m: stats.m(),
        input_kind: Some(a.input_kind.name().to_string()),
    };
    let report = if a.input_kind == InputKind::PvalueMatrix {
        if let Some((pos, &p)) = stats.as_slice().iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::PValueOutOfRange { index: pos, value: p }.into());
        }
        run_method(&negate_matrix(&stats)?, &cfg, a.method, &meta)?.into_pvalue_scale()
    } else {
        run_method(&stats, &cfg, a.method, &meta)?
    };
    let json = report.to_json();
    println!("q = {}", fmt_real(report.q.0));
    println!("rejections = {}", report.rejected.len());
    match &a.output {
        Some(path) => std::fs::write(path, json).map_err(|e| io_err(path, e))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A scalar or a list of values to sweep over.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Sweep<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Sweep<T> {
    fn values(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignFile {
    n_per_group: Sweep<usize>,
    m: Sweep<usize>,
    rho: Sweep<f64>,
    pi0: Sweep<f64>,
    d_signal: Sweep<f64>,
    replicates: usize,
    #[serde(default)]
    permutations: Option<usize>,
    alpha: Sweep<f64>,
    gamma: Sweep<f64>,
    seed: u64,
    #[serde(default)]
    combos_per_step: Option<usize>,
    #[serde(default)]
    methods: Option<Vec<Method>>,
}

impl DesignFile {
    /// Cartesian product in field order; the last field varies fastest.
    fn cells(&self) -> Vec<SimDesign> {
        let mut out = Vec::new();
        for n in self.n_per_group.values() {
            for m in self.m.values() {
                for rho in self.rho.values() {
                    for pi0 in self.pi0.values() {
                        for d in self.d_signal.values() {
                            for alpha in self.alpha.values() {
                                for gamma in self.gamma.values() {
                                    out.push(SimDesign {
                                        n_per_group: n,
                                        m,
                                        rho,
                                        pi0,
                                        d_signal: d,
                                        replicates: self.replicates,
                                        permutations: self.permutations.unwrap_or(50),
                                        alpha,
                                        gamma,
                                        seed: self.seed,
                                        combos_per_step: self.combos_per_step.unwrap_or(25),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn simulate(s: &SimulateArgs) -> CliResult<()> {
    let text = read_text(&s.design)?;
    let file: DesignFile =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: invalid design: {e}", s.design.display())))?;
    let methods = file.methods.clone().unwrap_or_else(|| vec![Method::FdxSingle, Method::MaxtSingle]);
    let cells = file.cells();
    if cells.is_empty() {
        return Err(CliError::Usage("design has an empty sweep".into()));
    }
    let mut outcomes = Vec::with_capacity(cells.len());
    for cell in &cells {
        let o = run_study(cell, &methods)?;
        println!(
            "cell gamma={} rho={} pi0={} d={}: {}",
            cell.gamma,
            cell.rho,
            cell.pi0,
            cell.d_signal,
            o.summaries.iter().map(|m| format!("{} power={:.4}", m.method.name(), m.power)).collect::<Vec<_>>().join(", ")
        );
        outcomes.push(o);
    }
    emit_plot_data(&outcomes, &s.output).map_err(|e| io_err(&s.output, e))?;
    println!("wrote {} rows to {}", outcomes.iter().map(|o| o.summaries.len()).sum::<usize>(), s.output.display());
    Ok(())
}

fn run_selftest(s: &SelftestArgs) -> i32 {
    if s.inject_quantile_fault {
        crate::common::QUANTILE_OFF_BY_ONE.store(true, std::sync::atomic::Ordering::Relaxed);
    }
    let results = selftest::run_all();
    let mut failed = 0;
    for c in &results {
        if c.passed {
            println!("PASS {}", c.name);
        } else {
            failed += 1;
            println!("FAIL {}: {}", c.name, c.detail);
        }
    }
    println!("{} of {} checks passed", results.len() - failed, results.len());
    i32::from(failed > 0)
}
