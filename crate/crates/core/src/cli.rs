//! Command-line front end. Every subcommand builds one [`Report`] (or a
//! coverage / oracle report) and renders it as a table, JSON or CSV, so the
//! formats always agree.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{evaluate, AssumptionRegime, MtrSign, PeriodMargins, RegimeTag, UndefinedReason};
use crate::data::{parse_compact_csv, parse_id_list, Arm, PanelDataset, UnitRecord};
use crate::estimate::{records_from_k, ArmEstimates};
use crate::infer::{auto_mtr_sign, bootstrap_sample, interval_at, BindingPattern, CriticalMethod, InferError};
use crate::oracle::{oracle_check, OracleCheckReport};
use crate::simulate::{
    coverage_study, parse_dgp, simulate, CoverageConfig, CoverageReport, Dgp, DurationDgpParams, JobSearchParams,
    TrueEffects, DEFAULT_AUX_UNITS,
};
use crate::Error;

/// Version of the JSON documents written by every subcommand.
pub const SCHEMA_VERSION: u32 = 1;

/// Exit status when a report was written but some row failed.
pub const EXIT_ROW_ERROR: i32 = 3;
/// Exit status for a fatal error.
pub const EXIT_FATAL: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "dynbounds", version, about = "Bounds and confidence intervals for dynamic treatment effects on survivors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plug-in bounds for every period and regime.
    Bounds(BoundsArgs),
    /// Bounds with bootstrap confidence intervals.
    Ci(CiArgs),
    /// Simulate a sample from a DGP and analyze it like `ci`.
    Simulate(SimulateArgs),
    /// Monte Carlo coverage of the confidence intervals.
    Coverage(CoverageArgs),
    /// Compare the LP oracle with the closed-form counterfactual bounds.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignChoice {
    Unknown,
    Nonneg,
    Nonpos,
    /// Sign of a significant first-period effect, otherwise unknown.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Null,
    EligibilityWindow,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Compact CSV: `id,arm,duration,event[,treat_start]`.
    #[arg(long)]
    pub input: PathBuf,
    /// Merge this many periods into one.
    #[arg(long, default_value_t = 1)]
    pub bin_width: u32,
    /// Periods to report (after binning); defaults to the longest duration.
    #[arg(long)]
    pub t_max: Option<u32>,
    /// Period in which treatment starts.
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    /// File of unit ids to keep, one per line.
    #[arg(long)]
    pub subgroup: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RegimeArgs {
    /// Comma-separated subset of none, mtr-cs, pco, mtr-cs-pco, ates.
    #[arg(long, value_delimiter = ',', default_values_t = RegimeTag::ATETS.map(|t| t.name().to_string()))]
    pub regimes: Vec<String>,
    #[arg(long, value_enum, default_value_t = SignChoice::Unknown)]
    pub mtr_sign: SignChoice,
    /// Also report bounds on the effect on survivors under both arms.
    #[arg(long)]
    pub ates: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Level of the moment-selection pretests.
    #[arg(long, default_value_t = 0.001)]
    pub alpha_pre: f64,
    /// Bootstrap replications.
    #[arg(long, default_value_t = 399)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Simulate critical values with this many draws instead of Bonferroni.
    #[arg(long)]
    pub simulated_critical: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub regimes: RegimeArgs,
    /// Level of the one-sided sign test behind `--mtr-sign auto`.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub regimes: RegimeArgs,
    #[command(flatten)]
    pub infer: InferArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct DgpArgs {
    /// DGP parameter file (`key = value` lines).
    #[arg(long, conflicts_with = "preset")]
    pub dgp: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Units in the auxiliary simulation when the truth has no closed form.
    #[arg(long, default_value_t = DEFAULT_AUX_UNITS)]
    pub aux_units: usize,
}

impl DgpArgs {
    fn load(&self) -> Result<Dgp, Error> {
        match (&self.dgp, self.preset) {
            (Some(path), _) => Ok(parse_dgp(&read(path)?)?),
            (None, Some(Preset::EligibilityWindow)) => Ok(Dgp::JobSearch(JobSearchParams::eligibility_window(10, 5))),
            (None, Some(Preset::Null) | None) => Ok(Dgp::Duration(DurationDgpParams::null(6))),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    /// Sample size.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Also write the simulated sample as compact CSV.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub regimes: RegimeArgs,
    #[command(flatten)]
    pub infer: InferArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[command(flatten)]
    pub regimes: RegimeArgs,
    #[command(flatten)]
    pub infer: InferArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

/// Analysis settings shared by `bounds`, `ci` and `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<String>,
    pub bin_width: u32,
    pub t_max: Option<u32>,
    pub k: u32,
    pub regimes: Vec<RegimeTag>,
    pub mtr_sign: SignChoice,
    pub alpha: f64,
    pub alpha_pre: f64,
    pub bootstrap: usize,
    pub seed: u64,
    pub critical: CriticalMethod,
    pub format: Format,
    pub subgroup: Option<String>,
    /// Whether confidence intervals are computed.
    pub intervals: bool,
}

impl RunConfig {
    fn new(regimes: &RegimeArgs, format: Format) -> Result<Self, Error> {
        let mut tags = regimes
            .regimes
            .iter()
            .map(|s| s.parse::<RegimeTag>())
            .collect::<Result<Vec<_>, _>>()?;
        if regimes.ates && !tags.contains(&RegimeTag::Ates) {
            tags.push(RegimeTag::Ates);
        }
        tags.dedup();
        Ok(RunConfig {
            input: None,
            bin_width: 1,
            t_max: None,
            k: 1,
            regimes: tags,
            mtr_sign: regimes.mtr_sign,
            alpha: 0.05,
            alpha_pre: 0.001,
            bootstrap: 399,
            seed: 1,
            critical: CriticalMethod::Bonferroni,
            format,
            subgroup: None,
            intervals: false,
        })
    }

    fn with_input(mut self, a: &InputArgs) -> Self {
        self.input = Some(a.input.display().to_string());
        self.bin_width = a.bin_width;
        self.t_max = a.t_max;
        self.k = a.k;
        self.subgroup = a.subgroup.as_ref().map(|p| p.display().to_string());
        self
    }

    fn with_infer(mut self, a: &InferArgs) -> Self {
        self.alpha = a.alpha;
        self.alpha_pre = a.alpha_pre;
        self.bootstrap = a.bootstrap;
        self.seed = a.seed;
        self.critical = match a.simulated_critical {
            Some(draws) => CriticalMethod::Simulated { draws, seed: a.seed },
            None => CriticalMethod::Bonferroni,
        };
        self.intervals = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n_treated: usize,
    pub n_control: usize,
    pub t_max: u32,
    /// Original periods per reported period.
    pub bin_width: u32,
    pub k: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskCounts {
    pub treated_at_risk: usize,
    pub treated_events: usize,
    pub control_at_risk: usize,
    pub control_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentRecord {
    pub label: &'static str,
    pub value: f64,
    /// Standard error of the estimate (not scaled by `sqrt(n)`).
    pub se: Option<f64>,
}

/// One `(t, regime)` result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub t: u32,
    pub regime: RegimeTag,
    pub mtr_sign: MtrSign,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub lower_ci: Option<f64>,
    pub upper_ci: Option<f64>,
    pub point_identified: bool,
    pub undefined: bool,
    pub reason: Option<UndefinedReason>,
    /// Undefined because the estimand does not exist, not because of data loss.
    pub undefined_by_theorem: Option<bool>,
    pub ci_empty: Option<bool>,
    pub critical_lower: Option<f64>,
    pub critical_upper: Option<f64>,
    pub binding: Option<BindingPattern>,
    pub bootstrap_dropped: Option<usize>,
    pub risk: RiskCounts,
    pub margins: Option<PeriodMargins>,
    pub components: Vec<ComponentRecord>,
    /// Population effect, for simulated samples.
    pub truth: Option<f64>,
    pub error: Option<String>,
}

impl Row {
    /// The row failed for a reason other than identification.
    pub fn is_error(&self) -> bool {
        self.error.is_some() || self.undefined_by_theorem == Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: RunConfig,
    pub sample: SampleSummary,
    /// MTR sign applied to the mtr-cs and mtr-cs-pco rows.
    pub mtr_sign: MtrSign,
    pub rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dgp: Option<Dgp>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<TrueEffects>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.rows.iter().any(Row::is_error) {
            EXIT_ROW_ERROR
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ErrorRecord<'a> {
    schema_version: u32,
    error: ErrorBody<'a>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

/// Rendered output and exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Outcome {
    match dispatch(cli.command) {
        Ok(o) => o,
        Err(e) => {
            let record = ErrorRecord {
                schema_version: SCHEMA_VERSION,
                error: ErrorBody {
                    kind: e.kind(),
                    message: e.to_string(),
                },
            };
            Outcome {
                stdout: String::new(),
                stderr: serde_json::to_string(&record).expect("serializable") + "\n",
                code: EXIT_FATAL,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<Outcome, Error> {
    match cmd {
        Command::Bounds(a) => {
            let mut cfg = RunConfig::new(&a.regimes, a.format)?.with_input(&a.input);
            cfg.alpha = a.alpha;
            let (ds, records) = load_input(&a.input)?;
            report_outcome(analyze("bounds", &ds, &records, &cfg)?, a.format)
        }
        Command::Ci(a) => {
            let cfg = RunConfig::new(&a.regimes, a.format)?
                .with_input(&a.input)
                .with_infer(&a.infer);
            let (ds, records) = load_input(&a.input)?;
            report_outcome(analyze("ci", &ds, &records, &cfg)?, a.format)
        }
        Command::Simulate(a) => {
            let cfg = RunConfig::new(&a.regimes, a.format)?.with_infer(&a.infer);
            let dgp = a.dgp.load()?;
            let (ds, truth) = simulate(&dgp, a.n, a.infer.seed, a.dgp.aux_units)?;
            if let Some(path) = &a.output {
                std::fs::write(path, ds.to_csv()).map_err(|source| Error::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
            let mut report = analyze("simulate", &ds, ds.records(), &cfg)?;
            for row in &mut report.rows {
                row.truth = truth.for_regime(row.regime, row.t);
            }
            report.dgp = Some(dgp);
            report.truth = Some(truth);
            report_outcome(report, a.format)
        }
        Command::Coverage(a) => {
            let dgp = a.dgp.load()?;
            let base = RunConfig::new(&a.regimes, a.format)?;
            let sign = match a.regimes.mtr_sign {
                SignChoice::Nonneg => MtrSign::NonNegative,
                SignChoice::Nonpos => MtrSign::NonPositive,
                // The sign test needs a sample; coverage runs use the
                // conservative unknown-sign bounds instead.
                SignChoice::Unknown | SignChoice::Auto => MtrSign::Unknown,
            };
            let cfg = CoverageConfig {
                n: a.n,
                reps: a.reps,
                alpha: a.infer.alpha,
                alpha_pre: a.infer.alpha_pre,
                bootstrap: a.infer.bootstrap,
                seed: a.infer.seed,
                regimes: base.regimes.iter().map(|&t| regime_with_sign(t, sign)).collect(),
                method: base.with_infer(&a.infer).critical,
                aux_units: a.dgp.aux_units,
            };
            let report = coverage_study(&dgp, &cfg)?;
            let stdout = match a.format {
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
                Format::Table => render_coverage_table(&report),
                Format::Csv => render_coverage_csv(&report),
            };
            Ok(Outcome {
                stdout,
                stderr: String::new(),
                code: 0,
            })
        }
        Command::OracleCheck(a) => {
            let report = oracle_check(a.trials, a.seed, a.tolerance);
            let stdout = match a.format {
                Format::Json => serde_json::to_string_pretty(&OracleJson::from(&report))? + "\n",
                Format::Table | Format::Csv => format!("{}/{} match\n", report.matches, report.trials),
            };
            Ok(Outcome {
                stdout,
                stderr: String::new(),
                code: if report.all_match() { 0 } else { EXIT_ROW_ERROR },
            })
        }
    }
}

/// Oracle-check report with the schema version attached.
#[derive(Serialize)]
pub struct OracleJson<'a> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: &'a OracleCheckReport,
}

impl<'a> From<&'a OracleCheckReport> for OracleJson<'a> {
    fn from(report: &'a OracleCheckReport) -> Self {
        OracleJson {
            schema_version: SCHEMA_VERSION,
            report,
        }
    }
}

fn report_outcome(report: Report, format: Format) -> Result<Outcome, Error> {
    let stdout = match format {
        Format::Table => render_table(&report),
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => render_csv(&report),
    };
    Ok(Outcome {
        code: report.exit_code(),
        stdout,
        stderr: String::new(),
    })
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads, bins, filters and re-indexes the input. Returns the dataset at the
/// requested horizon and the records entering estimation.
fn load_input(a: &InputArgs) -> Result<(PanelDataset, Vec<UnitRecord>), Error> {
    let text = read(&a.input)?;
    let mut ds = parse_compact_csv(text.as_bytes())?;
    if a.bin_width != 1 {
        ds = ds.bin_periods(a.bin_width)?;
    }
    if let Some(path) = &a.subgroup {
        let ids = parse_id_list(&read(path)?);
        ds = ds.filter_subgroup(|id| ids.contains(id))?;
    }
    if a.k == 1 {
        if let Some(t) = a.t_max {
            ds = ds.with_horizon(t)?;
        }
        let records = ds.records().to_vec();
        return Ok((ds, records));
    }
    let records = records_from_k(&ds, a.k)?;
    let horizon = a.t_max.unwrap_or_else(|| records.iter().map(|r| r.duration).max().unwrap_or(1));
    let shifted = PanelDataset::new(records, horizon)?;
    let records = shifted.records().to_vec();
    Ok((shifted, records))
}

fn regime_with_sign(tag: RegimeTag, sign: MtrSign) -> AssumptionRegime {
    AssumptionRegime::new(tag, sign).unwrap_or_else(|_| AssumptionRegime::plain(tag))
}

/// Builds the report for a dataset whose horizon is the analysis horizon.
pub fn analyze(command: &'static str, ds: &PanelDataset, records: &[UnitRecord], cfg: &RunConfig) -> Result<Report, Error> {
    let t_max = ds.t_max();
    let est = ArmEstimates::from_records(records, t_max);
    let sign = match cfg.mtr_sign {
        SignChoice::Unknown => MtrSign::Unknown,
        SignChoice::Nonneg => MtrSign::NonNegative,
        SignChoice::Nonpos => MtrSign::NonPositive,
        SignChoice::Auto => auto_mtr_sign(&est, cfg.alpha)?,
    };
    let sample = if cfg.intervals {
        Some(bootstrap_sample(records, t_max, cfg.bootstrap, cfg.seed)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &tag in &cfg.regimes {
        let regime = regime_with_sign(tag, sign);
        for t in 1..=t_max {
            let b = evaluate(&est, t, regime)?;
            let mut row = Row {
                t,
                regime: tag,
                mtr_sign: regime.mtr_sign,
                lb: b.lb.is_finite().then_some(b.lb),
                ub: b.ub.is_finite().then_some(b.ub),
                lower_ci: None,
                upper_ci: None,
                point_identified: b.point_identified,
                undefined: b.undefined,
                reason: b.reason,
                undefined_by_theorem: b.reason.map(UndefinedReason::is_by_theorem),
                ci_empty: None,
                critical_lower: None,
                critical_upper: None,
                binding: None,
                bootstrap_dropped: None,
                risk: RiskCounts {
                    treated_at_risk: est.risk(Arm::Treated, t),
                    treated_events: est.events(Arm::Treated, t),
                    control_at_risk: est.risk(Arm::Control, t),
                    control_events: est.events(Arm::Control, t),
                },
                margins: b.margins,
                components: Vec::new(),
                truth: None,
                error: None,
            };
            if let Some(sample) = &sample {
                match interval_at(&est, sample, t, regime, cfg.alpha, cfg.alpha_pre, cfg.critical) {
                    Ok((av, cov, ci)) => {
                        let n = cov.n as f64;
                        row.components = av
                            .layout
                            .labels
                            .iter()
                            .zip(&av.values)
                            .enumerate()
                            .map(|(k, (&label, &value))| ComponentRecord {
                                label,
                                value,
                                se: Some(cov.sigma[k][k].max(0.0).sqrt() / n.sqrt()),
                            })
                            .collect();
                        row.lower_ci = Some(ci.lo);
                        row.upper_ci = Some(ci.hi);
                        row.ci_empty = Some(ci.empty);
                        row.critical_lower = Some(ci.critical_lower);
                        row.critical_upper = Some(ci.critical_upper);
                        row.binding = Some(ci.pattern);
                        row.bootstrap_dropped = Some(cov.dropped);
                    }
                    Err(InferError::Undefined(_)) => {}
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            rows.push(row);
        }
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        command,
        config: cfg.clone(),
        sample: SampleSummary {
            n_treated: est.n(Arm::Treated),
            n_control: est.n(Arm::Control),
            t_max,
            bin_width: ds.bin_width(),
            k: cfg.k,
        },
        mtr_sign: sign,
        rows,
        dgp: None,
        truth: None,
    })
}

/// Three decimals, `n.d.` when absent, no negative zero.
fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => {
            let s = format!("{x:.3}");
            if s == "-0.000" {
                "0.000".into()
            } else {
                s
            }
        }
        _ => "n.d.".into(),
    }
}

/// One panel per regime with columns Lower-CI, LB, UB, Upper-CI.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let with_ci = report.config.intervals;
    let with_truth = report.truth.is_some();
    let _ = writeln!(
        out,
        "n treated = {}, n control = {}, periods = {}, bin width = {}, k = {}, MTR sign = {}",
        report.sample.n_treated,
        report.sample.n_control,
        report.sample.t_max,
        report.sample.bin_width,
        report.sample.k,
        report.mtr_sign
    );
    for &tag in &report.config.regimes {
        let _ = writeln!(out, "\n{}", tag.title());
        let mut header = format!("{:>4}", "t");
        if with_ci {
            let _ = write!(header, " {:>9} {:>9} {:>9} {:>9}", "Lower-CI", "LB", "UB", "Upper-CI");
        } else {
            let _ = write!(header, " {:>9} {:>9}", "LB", "UB");
        }
        if with_truth {
            let _ = write!(header, " {:>9}", "Truth");
        }
        let _ = writeln!(out, "{header}  note");
        for row in report.rows.iter().filter(|r| r.regime == tag) {
            let _ = write!(out, "{:>4}", row.t);
            if with_ci {
                let _ = write!(
                    out,
                    " {:>9} {:>9} {:>9} {:>9}",
                    cell(row.lower_ci),
                    cell(row.lb),
                    cell(row.ub),
                    cell(row.upper_ci)
                );
            } else {
                let _ = write!(out, " {:>9} {:>9}", cell(row.lb), cell(row.ub));
            }
            if with_truth {
                let _ = write!(out, " {:>9}", cell(row.truth));
            }
            let note = match (&row.error, row.reason) {
                (Some(e), _) => format!("error: {e}"),
                (None, Some(r)) => r.to_string(),
                (None, None) if row.ci_empty == Some(true) => "empty interval".into(),
                _ => String::new(),
            };
            let _ = writeln!(out, "  {note}").map(|_| ());
        }
    }
    out.lines().map(str::trim_end).collect::<Vec<_>>().join("\n") + "\n"
}

fn csv_value(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default()
}

/// Plot-ready long format, one line per `(t, regime)`.
pub fn render_csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t", "regime", "mtr_sign", "lower_ci", "lb", "ub", "upper_ci", "point_identified", "undefined", "reason", "truth",
        "error",
    ])
    .expect("in-memory write");
    for r in &report.rows {
        w.write_record([
            r.t.to_string(),
            r.regime.name().to_string(),
            r.mtr_sign.to_string(),
            csv_value(r.lower_ci),
            csv_value(r.lb),
            csv_value(r.ub),
            csv_value(r.upper_ci),
            r.point_identified.to_string(),
            r.undefined.to_string(),
            r.reason.map(|x| x.to_string()).unwrap_or_default(),
            csv_value(r.truth),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn render_coverage_table(report: &CoverageReport) -> String {
    let mut out = String::new();
    let c = &report.config;
    let _ = writeln!(
        out,
        "n = {}, reps = {}, alpha = {}, B = {}, threshold = {:.3}",
        c.n,
        c.reps,
        c.alpha,
        c.bootstrap,
        report.rows.first().map_or(f64::NAN, |r| r.threshold)
    );
    let _ = writeln!(
        out,
        "{:>4} {:>11} {:>9} {:>9} {:>9} {:>9} {:>7}  assumptions",
        "t", "regime", "truth", "CI cov", "bnd cov", "MCSE", "ok"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:>4} {:>11} {:>9} {:>9} {:>9} {:>9} {:>7}  {}",
            r.t,
            r.regime,
            cell(r.truth),
            cell(Some(r.ci_coverage)),
            cell(Some(r.bounds_coverage)),
            cell(Some(r.mcse)),
            if r.meets_threshold { "yes" } else { "NO" },
            if r.assumptions_hold { "hold" } else { "violated" }
        );
    }
    out
}

fn render_coverage_csv(report: &CoverageReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t", "regime", "truth", "ci_coverage", "bounds_coverage", "mcse", "threshold", "meets_threshold",
        "assumptions_hold",
    ])
    .expect("in-memory write");
    for r in &report.rows {
        w.write_record([
            r.t.to_string(),
            r.regime.clone(),
            csv_value(r.truth),
            r.ci_coverage.to_string(),
            r.bounds_coverage.to_string(),
            r.mcse.to_string(),
            r.threshold.to_string(),
            r.meets_threshold.to_string(),
            r.assumptions_hold.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
