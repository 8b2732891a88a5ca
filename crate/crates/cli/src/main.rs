mod run;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use prevmap_core::density::{read_grid_json, read_scenario_json};
use prevmap_core::experiments::{
    build_district_scenario, CompareConfig, DistrictConfig, SsdConfig, SsdGroup, STRATIFIED,
};
use prevmap_core::{Error, ErrorKind, Result, SamplerSettings, DEFAULT_SEED};
use run::{DistrictRunConfig, Format, InputSpec, RunConfig, RunRecord, SurveyConfig};

#[derive(Debug, Parser)]
#[command(
    name = "prevmap",
    version,
    about = "Two-stage prevalence surveys and their simulation studies"
)]
struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario, a single grid, or a district table and cell map.
    Validate(ValidateArgs),
    /// Run one survey on a scenario or district input.
    Survey(SurveyArgs),
    /// Replicated simulation studies.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Repeat a run from the record embedded in a previous output.
    Rerun(RerunArgs),
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Standardised standard deviation over truths and gamma_check values.
    Ssd(SsdArgs),
    /// Samplers and the stratified baseline on random scenarios.
    Compare(CompareArgs),
    /// Two-stage design against stratified sampling on district data.
    District(DistrictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Gls,
    Sir,
    Mh,
    Stratified,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Gls => "gls",
            Method::Sir => "sir",
            Method::Mh => "mh",
            Method::Stratified => STRATIFIED,
        }
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; studies default to csv, single runs to json.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct SeedArg {
    /// Master seed of every random stream.
    #[arg(long, env = "PREVMAP_SEED")]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// Uniform design size used by the samplers.
    #[arg(long)]
    m: Option<usize>,
    /// Number of sampling positions.
    #[arg(long)]
    r: Option<usize>,
    /// Total second-stage sample size.
    #[arg(long)]
    n: Option<u64>,
    /// Significance level of the confidence intervals.
    #[arg(long)]
    alpha: Option<f64>,
}

impl DesignArgs {
    fn sampler(&self) -> SamplerSettings {
        let mut s = SamplerSettings::default();
        if let Some(m) = self.m {
            s.m_design = m;
        }
        s
    }
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Scenario JSON with pop, diag, inf grids and gamma_check.
    #[arg(long, conflicts_with_all = ["districts", "cellmap"])]
    scenario: Option<PathBuf>,
    /// District table: id,population,cases[,infection_multiplier].
    #[arg(long, requires = "cellmap")]
    districts: Option<PathBuf>,
    /// Cell map: cell_ix,cell_iy,stratum_id.
    #[arg(long, requires = "districts")]
    cellmap: Option<PathBuf>,
}

impl InputArgs {
    fn district_input(&self) -> Option<InputSpec> {
        match (&self.districts, &self.cellmap) {
            (Some(d), Some(c)) => Some(InputSpec::Districts {
                districts: d.clone(),
                cellmap: c.clone(),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// A single grid JSON.
    #[arg(long, conflicts_with_all = ["scenario", "districts", "cellmap"])]
    grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SurveyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Position sampler, or the stratified baseline.
    #[arg(long, value_enum, default_value = "gls")]
    sampler: Method,
    #[command(flatten)]
    design: DesignArgs,
    /// Share of the sample split equally across positions.
    #[arg(long)]
    eta: Option<f64>,
    /// Weight of the population density in the rough infection estimate.
    #[arg(long)]
    gamma_check: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SsdArgs {
    /// Scenario group, E1 to E3 or R1 to R3.
    #[arg(long, default_value = "E1")]
    group: SsdGroup,
    /// Position sampler, or the stratified baseline.
    #[arg(long, value_enum, default_value = "gls")]
    sampler: Method,
    #[command(flatten)]
    design: DesignArgs,
    /// Surveys per scenario.
    #[arg(long)]
    replications: Option<usize>,
    /// Keep every k-th truth.
    #[arg(long)]
    truth_stride: Option<usize>,
    /// Keep every k-th gamma_check.
    #[arg(long)]
    check_stride: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Number of random scenarios.
    #[arg(long)]
    scenarios: Option<usize>,
    #[command(flatten)]
    design: DesignArgs,
    /// Weight of the population density in the rough infection estimate.
    #[arg(long)]
    gamma_check: Option<f64>,
    /// Surveys per scenario.
    #[arg(long)]
    replications: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct DistrictArgs {
    /// District table; the built-in synthetic fixture is used when absent.
    #[arg(long, requires = "cellmap")]
    districts: Option<PathBuf>,
    /// Cell map for --districts.
    #[arg(long, requires = "districts")]
    cellmap: Option<PathBuf>,
    /// Position sampler, or the stratified baseline.
    #[arg(long, value_enum, default_value = "gls")]
    sampler: Method,
    #[command(flatten)]
    design: DesignArgs,
    /// Share of the sample split equally across positions.
    #[arg(long)]
    eta: Option<f64>,
    /// Weight of the population density in the rough infection estimate.
    #[arg(long)]
    gamma_check: Option<f64>,
    /// Surveys per scenario.
    #[arg(long)]
    replications: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct RerunArgs {
    /// A JSON output or `.run.json` sidecar of an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (label, code) = match e.kind() {
                ErrorKind::Usage => ("usage", 2),
                ErrorKind::Data => ("data", 3),
                ErrorKind::Computation => ("computation", 4),
            };
            let report = serde_json::json!({
                "error": { "kind": label, "exit_code": code, "message": e.to_string() }
            });
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let (run, output) = match cli.command {
        Command::Validate(args) => return validate(&args),
        Command::Survey(args) => (survey_config(&args)?, args.output),
        Command::Experiment(ExperimentCommand::Ssd(args)) => (ssd_config(&args)?, args.output),
        Command::Experiment(ExperimentCommand::Compare(args)) => (compare_config(&args), args.output),
        Command::Experiment(ExperimentCommand::District(args)) => (district_config(&args)?, args.output),
        Command::Rerun(args) => {
            let (run, format) = RunRecord::read(&args.config)?;
            let output = OutputArgs {
                out: args.output.out,
                format: args.output.format.or(Some(format)),
            };
            (run, output)
        }
    };
    let format = output.format.unwrap_or_else(|| run.default_format());
    let outcome = match cli.threads {
        Some(0) => return Err(Error::Config("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| run::execute(&run))?,
        None => run::execute(&run)?,
    };
    let (body, sidecar) = run::render(&run, format, &outcome)?;
    match &output.out {
        Some(path) => {
            fs::write(path, body)?;
            if let Some(record) = sidecar {
                fs::write(run::sidecar_path(path), record)?;
            }
            info!("wrote {}", path.display());
            print!("{}", outcome.summary);
            println!("output: {}", path.display());
        }
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
            eprint!("{}", outcome.summary);
        }
    }
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<()> {
    if let Some(path) = &args.grid {
        let grid = read_grid_json(&fs::read_to_string(path)?)?;
        let r = grid.region();
        println!(
            "grid {}: {}x{} cells, {} inside the region, integral {:.6e}",
            path.display(),
            r.nx(),
            r.ny(),
            r.mask().iter().filter(|&&m| m).count(),
            grid.integrate()
        );
        return Ok(());
    }
    let (scenario, label, strata) = if let Some(path) = &args.input.scenario {
        (
            read_scenario_json(&fs::read_to_string(path)?)?,
            path.display().to_string(),
            None,
        )
    } else if let Some(input) = args.input.district_input() {
        let (districts, cells) = run::load_districts(&input)?;
        let (scenario, strata) =
            build_district_scenario(&districts, &cells, 1.0, DistrictConfig::default().gamma_check)?;
        (scenario, format!("{} districts", districts.len()), Some(strata))
    } else {
        return Err(Error::Config(
            "validate needs --scenario, --grid, or --districts with --cellmap".into(),
        ));
    };
    scenario.rough()?;
    let prevalence = scenario.prevalence()?;
    let r = scenario.region();
    let (lo, hi) = prevalence
        .values()
        .iter()
        .zip(r.mask())
        .filter(|(_, &m)| m)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&p, _)| {
            (lo.min(p), hi.max(p))
        });
    println!("{label}: valid");
    println!("  grid {}x{}, area {:.6e}", r.nx(), r.ny(), r.area());
    println!("  population {:.6e}", scenario.pop.integrate());
    println!("  cases      {:.6e}", scenario.diag.integrate());
    println!("  infections {:.6e}", scenario.total_infections());
    println!(
        "  local prevalence in [{lo:.4}, {hi:.4}], gamma_check {}",
        scenario.gamma_check
    );
    if let Some(s) = strata {
        println!("  {} strata", s.ids.len());
    }
    Ok(())
}

fn survey_config(args: &SurveyArgs) -> Result<RunConfig> {
    let input = if let Some(path) = &args.input.scenario {
        InputSpec::Scenario { path: path.clone() }
    } else if let Some(input) = args.input.district_input() {
        input
    } else {
        return Err(Error::Config(
            "survey needs --scenario or --districts with --cellmap".into(),
        ));
    };
    // district inputs carry no weight of their own
    let gamma_check = match (&input, args.gamma_check) {
        (_, Some(g)) => Some(g),
        (InputSpec::Scenario { .. }, None) => None,
        (_, None) => Some(DistrictConfig::default().gamma_check),
    };
    let d = &args.design;
    Ok(RunConfig::Survey(SurveyConfig {
        input,
        method: args.sampler.name().into(),
        sampler: d.sampler(),
        r_positions: d.r.unwrap_or(50),
        n_total: d.n.unwrap_or(10_000),
        eta: args.eta.unwrap_or(0.0),
        alpha: d.alpha.unwrap_or(0.05),
        gamma_check,
        default_multiplier: DistrictConfig::default().default_multiplier,
        seed: args.seed.resolve(),
    }))
}

fn ssd_config(args: &SsdArgs) -> Result<RunConfig> {
    if args.sampler == Method::Stratified {
        return Err(Error::Config("the SSD study needs a position sampler".into()));
    }
    let base = SsdConfig::default();
    let d = &args.design;
    Ok(RunConfig::Ssd(SsdConfig {
        group: args.group,
        method: args.sampler.name().into(),
        sampler: d.sampler(),
        r_positions: d.r.unwrap_or(base.r_positions),
        n_total: d.n.unwrap_or(base.n_total),
        alpha: d.alpha.unwrap_or(base.alpha),
        replications: args.replications.unwrap_or(base.replications),
        seed: args.seed.resolve(),
        truth_stride: args.truth_stride.unwrap_or(base.truth_stride),
        check_stride: args.check_stride.unwrap_or(base.check_stride),
        ..base
    }))
}

fn compare_config(args: &CompareArgs) -> RunConfig {
    let base = CompareConfig::default();
    let d = &args.design;
    RunConfig::Compare(CompareConfig {
        n_scenarios: args.scenarios.unwrap_or(base.n_scenarios),
        replications: args.replications.unwrap_or(base.replications),
        seed: args.seed.resolve(),
        r_positions: d.r.unwrap_or(base.r_positions),
        n_total: d.n.unwrap_or(base.n_total),
        gamma_check: args.gamma_check.unwrap_or(base.gamma_check),
        alpha: d.alpha.unwrap_or(base.alpha),
        sampler: d.sampler(),
        ..base
    })
}

fn district_config(args: &DistrictArgs) -> Result<RunConfig> {
    if args.sampler == Method::Stratified {
        return Err(Error::Config(
            "the stratified baseline always runs; pick a position sampler".into(),
        ));
    }
    let seed = args.seed.resolve();
    let input = match (&args.districts, &args.cellmap) {
        (Some(d), Some(c)) => InputSpec::Districts {
            districts: d.clone(),
            cellmap: c.clone(),
        },
        _ => InputSpec::fixture(),
    };
    let base = DistrictConfig::default();
    let d = &args.design;
    Ok(RunConfig::District(DistrictRunConfig {
        input,
        study: DistrictConfig {
            method: args.sampler.name().into(),
            sampler: d.sampler(),
            r_positions: d.r.unwrap_or(base.r_positions),
            n_total: d.n.unwrap_or(base.n_total),
            gamma_check: args.gamma_check.unwrap_or(base.gamma_check),
            eta: args.eta.unwrap_or(base.eta),
            alpha: d.alpha.unwrap_or(base.alpha),
            replications: args.replications.unwrap_or(base.replications),
            seed,
            ..base
        },
    }))
}
