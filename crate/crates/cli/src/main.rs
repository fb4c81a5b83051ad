//! Command-line front end: estimate from CSV, simulate panels, run Monte
//! Carlo studies, compare specifications.
//!
//! Exit codes: 0 success, 2 data error, 3 rank/degrees-of-freedom error,
//! 4 configuration error, 5 i/o error.

use ccep_cli::{parse, render};

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use ccep::dgp::{self, DgpConfig};
use ccep::error::{Error, ErrorKind, Result};
use ccep::estimator::{ccep_fit, compare_specs, DeterministicSpec, EstimatorSpec, Preset};
use ccep::montecarlo::{self, McConfig, McEstimator};
use ccep::panel::{load_csv, write_csv, CsvSchema};
use ccep::proxy::{build_influence, ProxySpec};
use ccep::variance::{estimate_variance, VarianceOptions};

use render::Format;

#[derive(Parser)]
#[command(
    name = "ccep",
    about = "Fixed-T panel estimation with common correlated effects: \
             cross-sectional moments proxy unobserved factors, inference \
             corrects for their first-stage estimation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate coefficients and standard errors from a CSV panel.
    Estimate(EstimateArgs),
    /// Generate a synthetic panel with known truth.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study (bias, coverage, efficiency).
    Mc(McArgs),
    /// Fit several proxy specifications on one dataset.
    Compare(CompareArgs),
}

#[derive(Args)]
struct CommonOut {
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; defaults from the --out extension (.json/.csv), else
    /// a human table.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct DataArgs {
    /// Long-format CSV panel (one row per unit-time pair).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Unit-identifier column.
    #[arg(long, default_value = "unit")]
    unit: String,
    /// Time-identifier column.
    #[arg(long, default_value = "time")]
    time: String,
    /// Outcome column.
    #[arg(long, default_value = "y")]
    y: String,
    /// Comma-separated regressor columns; default: every other column.
    #[arg(long)]
    x: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Proxy columns: comma list of const | trend[:p] | mean_x | mean_y |
    /// prod:j,l.
    #[arg(long)]
    proxy: Option<String>,
    /// Deterministic block: time_dummies | trend[:p] | file:path.
    #[arg(long)]
    det: Option<String>,
    /// Two-sided confidence level.
    #[arg(long)]
    ci: Option<f64>,
    /// Multiply the variance by N / (N - k - r).
    #[arg(long)]
    dof_correction: bool,
    /// TOML config supplying any of the above; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (estimation itself is single-pass; accepted for
    /// interface uniformity).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario preset name (see README for the list).
    #[arg(long)]
    preset: Option<String>,
    /// TOML file holding a full data-generating configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of units.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Generation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the realized truth (beta, alpha, factors) as JSON.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Scenario preset for the data-generating process.
    #[arg(long)]
    preset: Option<String>,
    /// TOML file holding a full study configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma list of estimator presets: ccep_x, ccep_xy, fe_within,
    /// detrend, ccep_x_plus_intercept, ccep_x_plus_trend.
    #[arg(long)]
    estimators: Option<String>,
    /// Units per replication.
    #[arg(long)]
    n: Option<usize>,
    /// Number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Two-sided confidence level.
    #[arg(long)]
    ci: Option<f64>,
    /// Master seed; per-replication seeds derive from it deterministically.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = rayon default). Results are identical across
    /// settings.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    dof_correction: bool,
    /// Labels "base,extended" for the Monte Carlo variance comparison;
    /// defaults to ccep_x,ccep_xy when both are present.
    #[arg(long)]
    efficiency_pair: Option<String>,
    /// Keep per-replication records in the report.
    #[arg(long)]
    keep_reps: bool,
    /// Write per-replication estimates to this CSV (implies --keep-reps).
    #[arg(long)]
    dump: Option<PathBuf>,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// One spec per flag: "[label=]proxy_list[@det_spec]", e.g.
    /// --spec mean_x --spec "with_trend=mean_x@trend:1".
    #[arg(long = "spec", required = true)]
    specs: Vec<String>,
    #[command(flatten)]
    out: CommonOut,
}

/// Optional file-backed configuration for `estimate` / `compare` data flags.
#[derive(Debug, Default, serde::Deserialize)]
struct EstimateFileConfig {
    data: Option<String>,
    unit: Option<String>,
    time: Option<String>,
    y: Option<String>,
    x: Option<Vec<String>>,
    proxy: Option<ProxySpec>,
    deterministic: Option<DeterministicSpec>,
    ci: Option<f64>,
    dof_correction: Option<bool>,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn resolve_format(explicit: Option<Format>, out: &Option<PathBuf>) -> Format {
    if let Some(f) = explicit {
        return f;
    }
    if let Some(path) = out {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => return Format::Json,
            Some("csv") => return Format::Csv,
            _ => {}
        }
    }
    Format::Table
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn schema_from(data: &DataArgs, file: &EstimateFileConfig) -> CsvSchema {
    CsvSchema {
        unit: if data.unit != "unit" {
            data.unit.clone()
        } else {
            file.unit.clone().unwrap_or_else(|| data.unit.clone())
        },
        time: if data.time != "time" {
            data.time.clone()
        } else {
            file.time.clone().unwrap_or_else(|| data.time.clone())
        },
        y: if data.y != "y" {
            data.y.clone()
        } else {
            file.y.clone().unwrap_or_else(|| data.y.clone())
        },
        x: data
            .x
            .as_ref()
            .map(|s| parse::parse_name_list(s))
            .or_else(|| file.x.clone()),
    }
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let file: EstimateFileConfig = match &args.config {
        Some(path) => read_toml(path)?,
        None => EstimateFileConfig::default(),
    };
    let data_path = args
        .data
        .data
        .clone()
        .or_else(|| file.data.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::InvalidConfig("no --data file given".to_string()))?;
    let schema = schema_from(&args.data, &file);

    let proxy = match (&args.proxy, &file.proxy) {
        (Some(list), _) => parse::parse_proxy_list(list)?,
        (None, Some(spec)) => spec.clone(),
        (None, None) => {
            return Err(Error::InvalidConfig(
                "no proxy columns given (use --proxy or a config file)".to_string(),
            ))
        }
    };
    let deterministic = match &args.det {
        Some(d) => Some(parse::parse_det_spec(d)?),
        None => file.deterministic.clone(),
    };
    let spec = EstimatorSpec {
        proxy: proxy.clone(),
        deterministic,
    };
    let opts = VarianceOptions {
        ci_level: args.ci.or(file.ci).unwrap_or(0.95),
        dof_correction: args.dof_correction || file.dof_correction.unwrap_or(false),
    };

    let ds = load_csv(&data_path, &schema)?;
    let res = ccep_fit(&ds, &spec)?;
    let influence = build_influence(&ds, &spec.proxy)?;
    let var = estimate_variance(&ds, &res, &influence, &opts)?;

    let doc = render::estimate_document(ds.regressor_names(), &res, &var, &proxy);
    let format = resolve_format(args.out.format, &args.out.out);
    emit(&render::render_estimate(&doc, format), &args.out.out)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config: DgpConfig = match (&args.preset, &args.config) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "give either --preset or --config, not both".to_string(),
            ))
        }
        (Some(name), None) => dgp::preset(name)?.config,
        (None, Some(path)) => read_toml(path)?,
        (None, None) => {
            return Err(Error::InvalidConfig("need --preset or --config".to_string()))
        }
    };
    let (ds, truth) = dgp::generate(&config, args.n, args.seed)?;
    write_csv(&ds, &args.out)?;
    if let Some(truth_path) = &args.truth_out {
        let doc = render::TruthDocument {
            beta: truth.beta.iter().cloned().collect(),
            alpha: truth.alpha.iter().cloned().collect(),
            f: render::matrix_rows(&truth.f),
            d: render::matrix_rows(&truth.d),
            seed: args.seed,
            n: args.n,
        };
        std::fs::write(truth_path, serde_json::to_string_pretty(&doc).expect("serializable"))?;
    }
    Ok(())
}

fn estimators_from_presets(names: &[String]) -> Result<Vec<McEstimator>> {
    names
        .iter()
        .map(|name| {
            let preset = Preset::parse(name)?;
            Ok(McEstimator {
                label: name.clone(),
                spec: EstimatorSpec::proxy_only(preset.proxy_spec()),
            })
        })
        .collect()
}

fn cmd_mc(args: &McArgs) -> Result<()> {
    let mut config: McConfig = match (&args.preset, &args.config) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "give either --preset or --config, not both".to_string(),
            ))
        }
        (None, Some(path)) => read_toml(path)?,
        (Some(name), None) => McConfig {
            dgp: dgp::preset(name)?.config,
            estimators: vec![],
            n: 500,
            reps: 100,
            ci_level: 0.95,
            master_seed: 0,
            workers: 0,
            dof_correction: false,
            efficiency_pair: None,
            keep_reps: false,
        },
        (None, None) => {
            return Err(Error::InvalidConfig("need --preset or --config".to_string()))
        }
    };

    if let Some(list) = &args.estimators {
        config.estimators = estimators_from_presets(&parse::parse_name_list(list))?;
    }
    if config.estimators.is_empty() {
        config.estimators = estimators_from_presets(&["ccep_x".to_string()])?;
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if let Some(ci) = args.ci {
        config.ci_level = ci;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.workers = jobs;
    }
    if args.dof_correction {
        config.dof_correction = true;
    }
    if let Some(pair) = &args.efficiency_pair {
        let names = parse::parse_name_list(pair);
        if names.len() != 2 {
            return Err(Error::InvalidConfig(
                "--efficiency-pair needs exactly two labels".to_string(),
            ));
        }
        config.efficiency_pair = Some((names[0].clone(), names[1].clone()));
    } else if config.efficiency_pair.is_none() {
        let has = |l: &str| config.estimators.iter().any(|e| e.label == l);
        if has("ccep_x") && has("ccep_xy") {
            config.efficiency_pair = Some(("ccep_x".to_string(), "ccep_xy".to_string()));
        }
    }
    config.keep_reps |= args.keep_reps || args.dump.is_some();

    let report = montecarlo::run(&config)?;
    if let Some(dump) = &args.dump {
        std::fs::write(dump, render::render_rep_dump(&report)?)?;
    }
    let format = resolve_format(args.out.format, &args.out.out);
    emit(&render::render_mc(&report, format), &args.out.out)
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let data_path = args
        .data
        .data
        .clone()
        .ok_or_else(|| Error::InvalidConfig("no --data file given".to_string()))?;
    let schema = schema_from(&args.data, &EstimateFileConfig::default());
    let ds = load_csv(&data_path, &schema)?;
    let specs: Vec<(String, EstimatorSpec)> = args
        .specs
        .iter()
        .map(|s| parse::parse_compare_spec(s))
        .collect::<Result<_>>()?;
    let rows = compare_specs(&ds, &specs);
    let format = resolve_format(args.out.format, &args.out.out);
    emit(&render::render_compare(&rows, format), &args.out.out)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(args) => {
            if let Some(jobs) = args.jobs {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
            }
            cmd_estimate(args)
        }
        Command::Simulate(args) => cmd_simulate(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as ClapKind;
            let code = match e.kind() {
                ClapKind::DisplayHelp | ClapKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(&cli) {
        let kind = e.kind();
        eprintln!("error ({}): {e}", kind.as_str());
        let code = match kind {
            ErrorKind::Data => 2,
            ErrorKind::Rank => 3,
            ErrorKind::Config => 4,
            ErrorKind::Io => 5,
        };
        std::process::exit(code);
    }
}
