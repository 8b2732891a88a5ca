//! Resolved run configurations, their execution, and output rendering.
//!
//! Every output carries a run record (command, format, seed and the full
//! resolved configuration) so that `prevmap rerun` can reproduce it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use prevmap_core::density::read_scenario_json;
use prevmap_core::experiments::{
    build_district_scenario, comparison_study, district_example, read_cellmap_csv, read_districts_csv, ssd_study,
    synthetic_districts, CompareConfig, CompareReport, DistrictConfig, DistrictReport, SsdConfig, SsdSurface,
    Stratification, TwoStageMethod, FIXTURE_DISTRICTS, FIXTURE_GRID, FIXTURE_SEED, STRATIFIED,
};
use prevmap_core::stratified::{
    neyman_allocate, simulate_stratified_tests, strata_from_labels, stratified_estimate, stratum_prevalence,
};
use prevmap_core::survey::SurveyResultJson;
use prevmap_core::{rng, Error, Result, SamplerRegistry, SamplerSettings, Scenario};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const TOOL: &str = "prevmap";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Where the survey region comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputSpec {
    Scenario { path: PathBuf },
    Districts { districts: PathBuf, cellmap: PathBuf },
    Synthetic { n_districts: usize, grid: usize, seed: u64 },
}

impl InputSpec {
    /// The built-in district fixture.
    pub fn fixture() -> Self {
        InputSpec::Synthetic {
            n_districts: FIXTURE_DISTRICTS,
            grid: FIXTURE_GRID,
            seed: FIXTURE_SEED,
        }
    }

    fn describe(&self) -> String {
        match self {
            InputSpec::Scenario { path } => format!("scenario {}", path.display()),
            InputSpec::Districts { districts, cellmap } => {
                format!("districts {} with cell map {}", districts.display(), cellmap.display())
            }
            InputSpec::Synthetic {
                n_districts,
                grid,
                seed,
            } => {
                format!("synthetic {n_districts} districts on {grid}x{grid} (seed {seed})")
            }
        }
    }
}

/// Raw district tables, loaded from disk or generated.
pub fn load_districts(
    input: &InputSpec,
) -> Result<(
    Vec<prevmap_core::experiments::District>,
    Vec<prevmap_core::experiments::CellAssignment>,
)> {
    match input {
        InputSpec::Districts { districts, cellmap } => {
            Ok((read_districts_csv(open(districts)?)?, read_cellmap_csv(open(cellmap)?)?))
        }
        InputSpec::Synthetic {
            n_districts,
            grid,
            seed,
        } => {
            if *n_districts == 0 || *grid == 0 {
                return Err(Error::Config("synthetic fixture needs districts and grid cells".into()));
            }
            Ok(synthetic_districts(*n_districts, *grid, *seed))
        }
        InputSpec::Scenario { .. } => Err(Error::Config("expected district input".into())),
    }
}

/// Scenario plus the stratification when the input has one.
pub fn load_input(input: &InputSpec, default_multiplier: f64) -> Result<(Scenario, Option<Stratification>)> {
    match input {
        InputSpec::Scenario { path } => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            Ok((read_scenario_json(&text)?, None))
        }
        _ => {
            let (districts, cells) = load_districts(input)?;
            let (scenario, strata) = build_district_scenario(&districts, &cells, default_multiplier, 0.5)?;
            Ok((scenario, Some(strata)))
        }
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyConfig {
    pub input: InputSpec,
    /// `gls`, `sir`, `mh` or `stratified`.
    pub method: String,
    pub sampler: SamplerSettings,
    pub r_positions: usize,
    pub n_total: u64,
    pub eta: f64,
    pub alpha: f64,
    /// Overrides the scenario's own weight when set.
    pub gamma_check: Option<f64>,
    /// Multiplier for district rows that leave it blank.
    pub default_multiplier: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictRunConfig {
    pub input: InputSpec,
    pub study: DistrictConfig,
}

/// A fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Survey(SurveyConfig),
    Ssd(SsdConfig),
    Compare(CompareConfig),
    District(DistrictRunConfig),
}

impl RunConfig {
    pub fn command(&self) -> &'static str {
        match self {
            RunConfig::Survey(_) => "survey",
            RunConfig::Ssd(_) => "experiment-ssd",
            RunConfig::Compare(_) => "experiment-compare",
            RunConfig::District(_) => "experiment-district",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Survey(c) => c.seed,
            RunConfig::Ssd(c) => c.seed,
            RunConfig::Compare(c) => c.seed,
            RunConfig::District(c) => c.study.seed,
        }
    }

    /// Default output format of the command.
    pub fn default_format(&self) -> Format {
        match self {
            RunConfig::Ssd(_) | RunConfig::Compare(_) => Format::Csv,
            RunConfig::Survey(_) | RunConfig::District(_) => Format::Json,
        }
    }

    fn config_value(&self) -> Result<Value> {
        Ok(match self {
            RunConfig::Survey(c) => serde_json::to_value(c)?,
            RunConfig::Ssd(c) => serde_json::to_value(c)?,
            RunConfig::Compare(c) => serde_json::to_value(c)?,
            RunConfig::District(c) => serde_json::to_value(c)?,
        })
    }

    fn from_record(command: &str, config: Value) -> Result<Self> {
        Ok(match command {
            "survey" => RunConfig::Survey(serde_json::from_value(config)?),
            "experiment-ssd" => RunConfig::Ssd(serde_json::from_value(config)?),
            "experiment-compare" => RunConfig::Compare(serde_json::from_value(config)?),
            "experiment-district" => RunConfig::District(serde_json::from_value(config)?),
            other => return Err(Error::Ingest(format!("unknown command '{other}' in run record"))),
        })
    }
}

/// The audit trail written with every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub format: Format,
    pub seed: u64,
    pub config: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
}

impl RunRecord {
    pub fn new(run: &RunConfig, format: Format) -> Result<Self> {
        Ok(Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: run.command().into(),
            format,
            seed: run.seed(),
            config: run.config_value()?,
            result: None,
        })
    }

    /// Reads a JSON output or a `.run.json` sidecar.
    pub fn read(path: &Path) -> Result<(RunConfig, Format)> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let record: RunRecord = serde_json::from_str(&text)?;
        if record.tool != TOOL {
            return Err(Error::Ingest(format!("{} is not a {TOOL} run record", path.display())));
        }
        Ok((RunConfig::from_record(&record.command, record.config)?, record.format))
    }
}

/// What a finished run hands back for writing and display.
pub struct Outcome {
    pub result: Value,
    pub csv: String,
    pub summary: String,
}

pub fn execute(run: &RunConfig) -> Result<Outcome> {
    match run {
        RunConfig::Survey(c) => run_survey(c),
        RunConfig::Ssd(c) => {
            let surface = ssd_study(c)?;
            Ok(Outcome {
                summary: ssd_summary(&surface),
                csv: to_csv(|w| surface.write_csv(w))?,
                result: serde_json::to_value(&surface)?,
            })
        }
        RunConfig::Compare(c) => {
            let report = comparison_study(c)?;
            Ok(Outcome {
                summary: compare_summary(&report),
                csv: to_csv(|w| report.write_csv(w))?,
                result: serde_json::to_value(&report)?,
            })
        }
        RunConfig::District(c) => {
            let (districts, cells) = load_districts(&c.input)?;
            let report = district_example(&districts, &cells, &c.study)?;
            Ok(Outcome {
                summary: district_summary(&report, &c.input),
                csv: to_csv(|w| report.write_csv(w))?,
                result: serde_json::to_value(&report)?,
            })
        }
    }
}

fn to_csv(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Ingest(e.to_string()))
}

fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Serialize)]
struct StratumRow {
    id: String,
    population: f64,
    size: u64,
    positives: u64,
}

#[derive(Debug, Serialize)]
struct StratifiedSurveyJson {
    t_hat: f64,
    v_hat: f64,
    ci: [f64; 2],
    alpha: f64,
    strata: Vec<StratumRow>,
}

fn run_survey(c: &SurveyConfig) -> Result<Outcome> {
    let (mut scenario, strata) = load_input(&c.input, c.default_multiplier)?;
    if let Some(g) = c.gamma_check {
        scenario = scenario.with_gamma_check(g)?;
    }
    let mut stream = rng::stream(c.seed, &[0]);
    let settings = format!(
        "method {}, r = {}, n = {}, eta = {}, alpha = {}, gamma_check = {}, M = {}, seed {}",
        c.method, c.r_positions, c.n_total, c.eta, c.alpha, scenario.gamma_check, c.sampler.m_design, c.seed
    );
    let truth = scenario.total_infections();

    if c.method == STRATIFIED {
        let strata =
            strata.ok_or_else(|| Error::Config("the stratified method needs --districts and --cellmap".into()))?;
        let specs = strata_from_labels(&scenario.pop, &scenario.rough()?, &strata.labels, &strata.ids)?;
        let sizes = neyman_allocate(&specs, c.n_total)?;
        let positives = simulate_stratified_tests(&stratum_prevalence(&specs, &scenario.inf), &sizes, &mut stream)?;
        let e = stratified_estimate(&specs, &sizes, &positives, c.alpha, false)?;
        let mut csv = String::from("stratum,population,size,positives\n");
        let rows = specs
            .iter()
            .zip(&sizes)
            .zip(&positives)
            .map(|((s, &size), &k)| {
                let _ = writeln!(csv, "{},{},{size},{k}", s.id, f17(s.population));
                StratumRow {
                    id: s.id.clone(),
                    population: s.population,
                    size,
                    positives: k,
                }
            })
            .collect();
        let json = StratifiedSurveyJson {
            t_hat: e.t_hat,
            v_hat: e.v_hat,
            ci: [e.ci_low, e.ci_high],
            alpha: e.alpha,
            strata: rows,
        };
        return Ok(Outcome {
            summary: survey_summary(
                e.t_hat, e.v_hat, e.ci_low, e.ci_high, e.alpha, truth, &c.input, &settings,
            ),
            csv,
            result: serde_json::to_value(json)?,
        });
    }

    let sampler = SamplerRegistry::builtin().build(&c.method, &c.sampler)?;
    let method = TwoStageMethod::nearly_optimal(&scenario, sampler, c.r_positions, c.n_total, c.eta, c.alpha)?;
    let survey = method.survey(&mut stream)?;
    let json = SurveyResultJson::from(&survey);
    let mut csv = String::from("x,y,phi,size,positives\n");
    for p in &json.positions {
        let _ = writeln!(csv, "{},{},{},{},{}", f17(p[0]), f17(p[1]), f17(p[2]), p[3], p[4]);
    }
    let e = survey.estimate;
    Ok(Outcome {
        summary: survey_summary(
            e.t_hat, e.v_hat, e.ci_low, e.ci_high, e.alpha, truth, &c.input, &settings,
        ),
        csv,
        result: serde_json::to_value(json)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn survey_summary(
    t_hat: f64,
    v_hat: f64,
    lo: f64,
    hi: f64,
    alpha: f64,
    truth: f64,
    input: &InputSpec,
    settings: &str,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "input: {}", input.describe());
    let _ = writeln!(s, "settings: {settings}");
    let _ = writeln!(s, "estimated infections T_hat = {t_hat:.6e}");
    let _ = writeln!(s, "estimated sd             = {:.6e}", v_hat.max(0.0).sqrt());
    let _ = writeln!(
        s,
        "{:.0}% CI                  = [{lo:.6e}, {hi:.6e}]",
        100.0 * (1.0 - alpha)
    );
    let _ = writeln!(s, "simulated truth          = {truth:.6e}");
    s
}

fn ssd_summary(s: &SsdSurface) -> String {
    let mut out = String::new();
    let c = &s.config;
    let _ = writeln!(
        out,
        "SSD study {}: {} truths x {} gamma_check values, {} replications per cell, method {}, r = {}, n = {}, seed {}",
        s.group,
        s.truths.len(),
        s.gamma_checks.len(),
        c.replications,
        c.method,
        c.r_positions,
        c.n_total,
        c.seed
    );
    let _ = writeln!(out, "gamma_check  max SSD");
    for (g, m) in s.gamma_checks.iter().zip(&s.max_ssd) {
        let _ = writeln!(out, "{g:>11.2}  {m:.4}");
    }
    let _ = writeln!(
        out,
        "minimax gamma_check = {:.2} (max SSD {:.4})",
        s.minimax_gamma_check, s.minimax_max_ssd
    );
    out
}

fn compare_summary(r: &CompareReport) -> String {
    let mut out = String::new();
    let c = &r.config;
    let _ = writeln!(
        out,
        "comparison over {} scenarios x {} replications, r = {}, n = {}, gamma_check = {}, seed {}",
        c.n_scenarios, c.replications, c.r_positions, c.n_total, c.gamma_check, c.seed
    );
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>10} {:>14}",
        "method", "mean SSD", "coverage", "relative bias"
    );
    for a in &r.summary {
        let _ = writeln!(
            out,
            "{:<12} {:>10.4} {:>10.4} {:>14.3e}",
            a.method, a.mean_ssd, a.mean_coverage, a.mean_relative_bias
        );
    }
    out
}

fn district_summary(r: &DistrictReport, input: &InputSpec) -> String {
    let mut out = String::new();
    let c = &r.config;
    let _ = writeln!(out, "input: {}", input.describe());
    let _ = writeln!(
        out,
        "{} replications, r = {}, n = {}, gamma_check = {}, seed {}",
        c.replications, c.r_positions, c.n_total, c.gamma_check, c.seed
    );
    let _ = writeln!(out, "simulated truth = {:.6e}", r.true_total);
    let _ = writeln!(
        out,
        "{:<12} {:>14} {:>14} {:>10} {:>14}",
        "method", "mean", "sd", "coverage", "relative bias"
    );
    for row in &r.table {
        let _ = writeln!(
            out,
            "{:<12} {:>14.6e} {:>14.6e} {:>10.4} {:>14.3e}",
            row.method, row.sample_mean, row.sample_sd, row.coverage, row.relative_bias
        );
    }
    let _ = writeln!(out, "note: {}", r.note);
    out
}

/// Renders the run in `format`.
///
/// JSON outputs are the run record with the result attached. CSV outputs
/// are the plot-ready table; their run record goes to a `.run.json` sidecar.
pub fn render(run: &RunConfig, format: Format, outcome: &Outcome) -> Result<(String, Option<String>)> {
    let mut record = RunRecord::new(run, format)?;
    match format {
        Format::Json => {
            record.result = Some(outcome.result.clone());
            Ok((serde_json::to_string_pretty(&record)? + "\n", None))
        }
        Format::Csv => Ok((outcome.csv.clone(), Some(serde_json::to_string_pretty(&record)? + "\n"))),
    }
}

/// Path of the run-record sidecar written next to a CSV output.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".run.json");
    PathBuf::from(name)
}
