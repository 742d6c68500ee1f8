//! `h2lca` command line.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use h2lca::econ::{export_outputs, EconParams, OutputFormat};
use h2lca::hfgt::{partition, reduced_incidence, IncidenceMatrix};
use h2lca::ingest::{validate_reported_ci, write_generation_csv, write_price_csv, EmissionFactorTable, DEFAULT_CI_TOLERANCE};
use h2lca::pipeline::{coverage_summary, evaluate, load_model, load_series, DataInputs, RunSpec, SeriesFilter};
use h2lca::scenario::{CiSource, LcaModel, ProductionRule, ScenarioConfig, ScenarioKind};
use h2lca::synthetic::{synthetic_year, ReportedCi, ZoneProfile};

#[derive(Parser)]
#[command(name = "h2lca", version, about = "Grid-to-hydrogen life-cycle and dispatch engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a system model and report structural violations.
    ValidateModel {
        /// Model file (bundled australia-h2 when omitted).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write the reduced incidence matrix and its product/aspect blocks.
    BuildMatrix {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Aspect operands, comma separated (model's lca.aspects when omitted).
        #[arg(long, value_delimiter = ',')]
        aspects: Vec<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Compare reported carbon intensity with the mix reconstruction.
    ValidateCi {
        #[arg(long, required = true)]
        generation: Vec<PathBuf>,
        #[arg(long)]
        adapter: Option<PathBuf>,
        /// Emission factor CSV `source,factor_g_per_kwh` (built-in table when omitted).
        #[arg(long)]
        ef: Option<PathBuf>,
        /// g CO2eq/kWh
        #[arg(long, default_value_t = DEFAULT_CI_TOLERANCE)]
        tolerance: f64,
        #[arg(long)]
        zone: Vec<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run one scenario over hourly grid and price data.
    Run(RunArgs),
    /// Run all three scenarios and write the comparison table.
    Compare(RunArgs),
    /// Write a synthetic year of canonical generation and price CSV.
    Synth {
        #[arg(long)]
        zone: String,
        #[arg(long, default_value = "coal-heavy")]
        profile: String,
        #[arg(long, default_value_t = 2023)]
        year: i32,
        #[arg(long, value_enum, default_value = "exact")]
        reported: Reported,
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Generation CSV (repeatable).
    #[arg(long, required = true)]
    generation: Vec<PathBuf>,
    /// Price CSV (repeatable).
    #[arg(long, required = true)]
    prices: Vec<PathBuf>,
    /// TOML mapping file for provider exports.
    #[arg(long)]
    adapter: Option<PathBuf>,
    /// Scenario name (baseline, green-rule, credit-threshold) or scenario file.
    #[arg(long, default_value = "baseline")]
    scenario: String,
    /// Production rule table for green-rule.
    #[arg(long)]
    rule: Option<PathBuf>,
    #[arg(long)]
    econ: Option<PathBuf>,
    /// Restrict to a zone (repeatable).
    #[arg(long)]
    zone: Vec<String>,
    #[arg(long)]
    year: Option<i32>,
    /// Combine the selected zones into one grid with this name.
    #[arg(long)]
    national: Option<String>,
    #[arg(long, value_enum)]
    ci_source: Option<CiSourceArg>,
    /// Largest tolerated run of missing price hours.
    #[arg(long)]
    max_gap_hours: Option<i64>,
    /// Histogram bin widths: g CO2eq/kWh and AUD/MWh.
    #[arg(long, default_value_t = 10.0)]
    ci_bin: f64,
    #[arg(long, default_value_t = 10.0)]
    price_bin: f64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CiSourceArg {
    Reported,
    Reconstructed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reported {
    Exact,
    Rounded,
    Absent,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn validate_model_cmd(model: Option<PathBuf>) -> anyhow::Result<()> {
    let m = load_model(model.as_deref())?;
    let name = m.metadata.get("name").map_or("model", String::as_str);
    println!(
        "{name}: ok ({} operands, {} processes, {} resources, {} capabilities)",
        m.operands.len(),
        m.processes.len(),
        m.resources.len(),
        m.capabilities.len()
    );
    Ok(())
}

fn build_matrix_cmd(
    model: Option<PathBuf>,
    aspects: Vec<String>,
    out_dir: PathBuf,
    format: Format,
) -> anyhow::Result<()> {
    let m = load_model(model.as_deref())?;
    let reduced = reduced_incidence(&m).map_err(h2lca::Error::from)?;
    let aspects: Vec<String> = if aspects.is_empty() {
        m.metadata
            .get("lca.aspects")
            .map(|s| s.split(',').map(|a| a.trim().to_string()).collect())
            .unwrap_or_default()
    } else {
        aspects
    };
    ensure_dir(&out_dir)?;
    let mut blocks = vec![("incidence".to_string(), reduced.clone())];
    if !aspects.is_empty() {
        let part = partition(&reduced, &aspects).map_err(h2lca::Error::from)?;
        blocks.push((
            "product_block".into(),
            IncidenceMatrix {
                values: part.a.clone(),
                row_map: part.product_places.clone(),
                col_map: part.col_map.clone(),
                reduced: true,
            },
        ));
        blocks.push((
            "aspect_block".into(),
            IncidenceMatrix {
                values: part.b.clone(),
                row_map: part.aspect_places.clone(),
                col_map: part.col_map.clone(),
                reduced: true,
            },
        ));
    }
    for (name, matrix) in &blocks {
        let fmt: OutputFormat = format.into();
        let path = out_dir.join(format!("{name}.{}", fmt.extension()));
        let mut w = create(&path)?;
        match fmt {
            OutputFormat::Csv => matrix.write_csv(&mut w)?,
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut w, &matrix.to_json())?;
                std::io::Write::write_all(&mut w, b"\n")?;
            }
        }
        println!(
            "{}: {} x {}",
            path.display(),
            matrix.values.rows(),
            matrix.values.cols()
        );
    }
    Ok(())
}

fn validate_ci_cmd(
    generation: Vec<PathBuf>,
    adapter: Option<PathBuf>,
    ef: Option<PathBuf>,
    tolerance: f64,
    zones: Vec<String>,
    out_dir: PathBuf,
) -> anyhow::Result<()> {
    let inputs = DataInputs {
        generation,
        adapter,
        ..Default::default()
    };
    let mut records = inputs.load_generation()?;
    if !zones.is_empty() {
        records.retain(|r| zones.contains(&r.zone));
    }
    let ef = match ef {
        Some(p) => EmissionFactorTable::load(&p).map_err(h2lca::Error::from)?,
        None => EmissionFactorTable::default(),
    };
    let report = validate_reported_ci(&records, &ef, tolerance);
    ensure_dir(&out_dir)?;
    let path = out_dir.join("ci_validation.csv");
    report.write_csv(create(&path)?)?;
    println!(
        "{} hours compared, {} skipped, {} flagged above {} g/kWh; max deviation {:.4}, mean {:.4}",
        report.hours.len(),
        report.skipped,
        report.flagged_count(),
        tolerance,
        report.max_deviation,
        report.mean_deviation
    );
    println!("{}", path.display());
    Ok(())
}

fn scenario_config(arg: &str, rule: Option<&Path>) -> anyhow::Result<ScenarioConfig> {
    let mut config = match arg.parse::<ScenarioKind>() {
        Ok(kind) => ScenarioConfig::of_kind(kind),
        Err(_) => ScenarioConfig::load(Path::new(arg)).map_err(h2lca::Error::from)?,
    };
    if let Some(path) = rule {
        if config.kind != ScenarioKind::GreenRule {
            bail!(h2lca::Error::Usage(format!(
                "--rule applies to green-rule, not {}",
                config.kind
            )));
        }
        config.rule = Some(ProductionRule::load(path).map_err(h2lca::Error::from)?);
        config.validate().map_err(h2lca::Error::from)?;
    }
    Ok(config)
}

fn run_cmd(args: RunArgs, all_scenarios: bool) -> anyhow::Result<()> {
    let model = load_model(args.model.as_deref())?;
    let lca = LcaModel::from_model(&model).map_err(h2lca::Error::from)?;
    let econ = match &args.econ {
        Some(p) => EconParams::load(p).map_err(h2lca::Error::from)?,
        None => EconParams::default(),
    };
    let scenarios = if all_scenarios {
        let mut credit = ScenarioConfig::credit_threshold(econ.credit_ci_cap);
        credit.electrolyzer.specific_energy = econ.specific_energy;
        let mut baseline = ScenarioConfig::baseline();
        baseline.electrolyzer.specific_energy = econ.specific_energy;
        let mut green = scenario_config("green-rule", args.rule.as_deref())?;
        green.electrolyzer.specific_energy = econ.specific_energy;
        vec![baseline, green, credit]
    } else {
        vec![scenario_config(&args.scenario, args.rule.as_deref())?]
    };
    let inputs = DataInputs {
        generation: args.generation,
        prices: args.prices,
        adapter: args.adapter,
        max_gap_hours: args.max_gap_hours,
    };
    let filter = SeriesFilter {
        zones: args.zone,
        year: args.year,
        national: args.national,
    };
    let series = load_series(&inputs, &filter)?;
    for (zone, line) in coverage_summary(&series) {
        println!("{zone}: {line}");
    }
    let spec = RunSpec {
        scenarios,
        econ,
        ci_source: match args.ci_source {
            None => CiSource::Auto,
            Some(CiSourceArg::Reported) => CiSource::Reported,
            Some(CiSourceArg::Reconstructed) => CiSource::Reconstructed,
        },
        ci_bin_width: args.ci_bin,
        price_bin_width: args.price_bin,
    };
    let report = evaluate(&series, &lca, &spec)?;
    for row in &report.comparison {
        println!(
            "{} {}: {} t H2, {} t CO2eq, cost {:.2} AUD, credits {:.2} AUD",
            row.zone,
            row.scenario,
            row.h2_t(),
            row.emissions_t(),
            row.total_cost,
            row.credits
        );
    }
    let written = export_outputs(&report, args.format.into(), &args.out_dir).map_err(h2lca::Error::from)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn synth_cmd(zone: String, profile: String, year: i32, reported: Reported, out_dir: PathBuf) -> anyhow::Result<()> {
    let Some(prof) = ZoneProfile::by_name(&profile) else {
        bail!(h2lca::Error::Usage(format!(
            "unknown profile \"{profile}\" (coal-heavy, renewable-heavy, clean)"
        )));
    };
    let reported = match reported {
        Reported::Exact => ReportedCi::Exact,
        Reported::Rounded => ReportedCi::Rounded,
        Reported::Absent => ReportedCi::Absent,
    };
    let (grid, prices) = synthetic_year(&zone, year, &prof, reported);
    ensure_dir(&out_dir)?;
    let g = out_dir.join(format!("generation_{zone}.csv"));
    let p = out_dir.join(format!("prices_{zone}.csv"));
    write_generation_csv(&grid, create(&g)?).map_err(h2lca::Error::from)?;
    write_price_csv(&prices, create(&p)?).map_err(h2lca::Error::from)?;
    println!("{}\n{}", g.display(), p.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<h2lca::Error>())
        .any(h2lca::Error::is_numerical);
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::ValidateModel { model } => validate_model_cmd(model),
        Command::BuildMatrix {
            model,
            aspects,
            out_dir,
            format,
        } => build_matrix_cmd(model, aspects, out_dir, format),
        Command::ValidateCi {
            generation,
            adapter,
            ef,
            tolerance,
            zone,
            out_dir,
        } => validate_ci_cmd(generation, adapter, ef, tolerance, zone, out_dir),
        Command::Run(args) => run_cmd(args, false),
        Command::Compare(args) => run_cmd(args, true),
        Command::Synth {
            zone,
            profile,
            year,
            reported,
            out_dir,
        } => synth_cmd(zone, profile, year, reported, out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // sources are often already embedded in the outer message
            let mut text = String::new();
            for cause in e.chain() {
                let c = cause.to_string();
                if !text.contains(&c) {
                    if !text.is_empty() {
                        text.push_str(": ");
                    }
                    text.push_str(&c);
                }
            }
            eprintln!("error: {text}");
            ExitCode::from(exit_code(&e))
        }
    }
}
