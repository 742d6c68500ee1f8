//! Costs, tax-credit earnings, monthly and yearly roll-ups, plot data.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::ingest::Timestamp;
use crate::scenario::{parse_key_values, HourlyDispatch, ScenarioKind};

#[derive(Debug, Error)]
pub enum EconError {
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("coverage mismatch: {0}")]
    CoverageMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("histogram bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EconParams {
    /// kWh per kg H2
    pub specific_energy: f64,
    /// AUD per kg H2
    pub op_cost: f64,
    /// AUD per eligible kg H2
    pub credit_rate: f64,
    /// kg CO2eq per kg H2
    pub credit_ci_cap: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        EconParams {
            specific_energy: 52.5,
            op_cost: 1.96,
            credit_rate: 2.0,
            credit_ci_cap: 0.6,
        }
    }
}

impl EconParams {
    /// Key/value text; omitted keys keep their defaults.
    ///
    /// ```text
    /// specific_energy = 52.5
    /// op_cost = 1.96
    /// credit_rate = 2.00
    /// credit_ci_cap = 0.6
    /// ```
    pub fn parse(text: &str) -> Result<Self, EconError> {
        let mut p = EconParams::default();
        for (line, key, value) in parse_key_values(text).map_err(|(line, message)| EconError::Config { line, message })? {
            let v: f64 = value.parse().map_err(|_| EconError::Config {
                line,
                message: format!("{key}: not a number: \"{value}\""),
            })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(EconError::Config {
                    line,
                    message: format!("{key} must be finite and non-negative"),
                });
            }
            match key.as_str() {
                "specific_energy" => p.specific_energy = v,
                "op_cost" => p.op_cost = v,
                "credit_rate" => p.credit_rate = v,
                "credit_ci_cap" => p.credit_ci_cap = v,
                _ => {
                    return Err(EconError::Config {
                        line,
                        message: format!("unknown key \"{key}\""),
                    })
                }
            }
        }
        if p.specific_energy == 0.0 {
            return Err(EconError::Config {
                line: 0,
                message: "specific_energy must be positive".into(),
            });
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, EconError> {
        let text = std::fs::read_to_string(path).map_err(|source| EconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Levelized hourly cost of one kilogram, AUD/kg, for a price in AUD/MWh.
pub fn cost_per_kg(price: f64, econ: &EconParams) -> f64 {
    price / 1000.0 * econ.specific_energy + econ.op_cost
}

/// Σ over eligible hours of rate × credit_rate.
pub fn credit_earnings(dispatch: &[HourlyDispatch], econ: &EconParams) -> f64 {
    dispatch
        .iter()
        .filter(|d| d.credit_eligible)
        .map(|d| d.rate * econ.credit_rate)
        .sum()
}

pub fn total_h2_kg(dispatch: &[HourlyDispatch]) -> f64 {
    dispatch.iter().map(|d| d.rate).sum()
}

/// Operating cost of a dispatch list: op_cost × total kg.
pub fn total_operating_cost(dispatch: &[HourlyDispatch], econ: &EconParams) -> f64 {
    econ.op_cost * total_h2_kg(dispatch)
}

/// UTC calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn of(t: &Timestamp) -> Self {
        YearMonth {
            year: t.year(),
            month: t.month(),
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyAggregate {
    pub zone: String,
    pub month: YearMonth,
    pub h2_kg: f64,
    pub emissions_kg: f64,
    pub elec_cost: f64,
    pub op_cost: f64,
    pub credits: f64,
    /// (elec + op) / kg; absent when nothing was produced.
    pub avg_cost_per_kg: Option<f64>,
    /// kg CO2eq per kg H2; absent when nothing was produced.
    pub ci_ratio: Option<f64>,
}

impl MonthlyAggregate {
    pub fn h2_t(&self) -> f64 {
        self.h2_kg / 1000.0
    }

    pub fn emissions_t(&self) -> f64 {
        self.emissions_kg / 1000.0
    }
}

fn ratio(num: f64, kg: f64) -> Option<f64> {
    (kg > 0.0).then(|| num / kg)
}

/// Group by UTC calendar month, in time order.
pub fn aggregate_monthly(
    dispatch: &[HourlyDispatch],
    zone: &str,
    econ: &EconParams,
) -> Vec<MonthlyAggregate> {
    let mut months: BTreeMap<YearMonth, (f64, f64, f64, f64)> = BTreeMap::new();
    for d in dispatch {
        let e = months.entry(YearMonth::of(&d.timestamp)).or_default();
        e.0 += d.rate;
        e.1 += d.emissions;
        e.2 += d.electricity_cost;
        if d.credit_eligible {
            e.3 += d.rate * econ.credit_rate;
        }
    }
    months
        .into_iter()
        .map(|(month, (kg, em, elec, credits))| {
            let op = econ.op_cost * kg;
            MonthlyAggregate {
                zone: zone.to_string(),
                month,
                h2_kg: kg,
                emissions_kg: em,
                elec_cost: elec,
                op_cost: op,
                credits,
                avg_cost_per_kg: ratio(elec + op, kg),
                ci_ratio: ratio(em, kg),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub zone: String,
    pub scenario: ScenarioKind,
    pub elec_cost: f64,
    pub op_cost: f64,
    /// elec + op; credits are reported separately.
    pub total_cost: f64,
    pub credits: f64,
    /// total − credits
    pub net_cost: f64,
    pub h2_kg: f64,
    pub cost_per_kg: Option<f64>,
    pub emissions_kg: f64,
    pub ci_ratio: Option<f64>,
}

impl ComparisonRow {
    /// Yearly row as the exact sum of monthly aggregates.
    pub fn from_monthly(zone: &str, scenario: ScenarioKind, months: &[MonthlyAggregate]) -> Self {
        let mut r = ComparisonRow {
            zone: zone.to_string(),
            scenario,
            elec_cost: 0.0,
            op_cost: 0.0,
            total_cost: 0.0,
            credits: 0.0,
            net_cost: 0.0,
            h2_kg: 0.0,
            cost_per_kg: None,
            emissions_kg: 0.0,
            ci_ratio: None,
        };
        for m in months {
            r.elec_cost += m.elec_cost;
            r.op_cost += m.op_cost;
            r.credits += m.credits;
            r.h2_kg += m.h2_kg;
            r.emissions_kg += m.emissions_kg;
        }
        r.total_cost = r.elec_cost + r.op_cost;
        r.net_cost = r.total_cost - r.credits;
        r.cost_per_kg = ratio(r.total_cost, r.h2_kg);
        r.ci_ratio = ratio(r.emissions_kg, r.h2_kg);
        r
    }

    pub fn h2_t(&self) -> f64 {
        self.h2_kg / 1000.0
    }

    pub fn emissions_t(&self) -> f64 {
        self.emissions_kg / 1000.0
    }
}

fn coverage(dispatch: &[HourlyDispatch]) -> Option<(Timestamp, Timestamp)> {
    Some((dispatch.first()?.timestamp, dispatch.last()?.timestamp))
}

fn covered_years(dispatch: &[HourlyDispatch]) -> Vec<i32> {
    let mut ys: Vec<i32> = dispatch.iter().map(|d| d.timestamp.year()).collect();
    ys.dedup();
    ys.sort_unstable();
    ys.dedup();
    ys
}

/// One row per (zone, scenario), zone-major. Every result must cover the
/// same calendar years.
pub fn build_comparison(
    results: &BTreeMap<(String, ScenarioKind), Vec<HourlyDispatch>>,
    econ: &EconParams,
) -> Result<Vec<ComparisonRow>, EconError> {
    let mut reference: Option<(&(String, ScenarioKind), Vec<i32>)> = None;
    for (key, dispatch) in results {
        if coverage(dispatch).is_none() {
            return Err(EconError::CoverageMismatch(format!(
                "{} / {} has no hours",
                key.0, key.1
            )));
        }
        let years = covered_years(dispatch);
        match &reference {
            None => reference = Some((key, years)),
            Some((k0, y0)) if *y0 != years => {
                return Err(EconError::CoverageMismatch(format!(
                    "{} / {} covers {:?} but {} / {} covers {:?}",
                    k0.0, k0.1, y0, key.0, key.1, years
                )))
            }
            Some(_) => {}
        }
    }
    Ok(results
        .iter()
        .map(|((zone, kind), dispatch)| {
            ComparisonRow::from_monthly(zone, *kind, &aggregate_monthly(dispatch, zone, econ))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// count / (n × width)
    pub density: f64,
}

/// Contiguous fixed-width bins aligned to multiples of `width`, from the bin
/// holding the minimum to the bin holding the maximum. Non-finite values are
/// skipped.
pub fn histogram(values: &[f64], width: f64) -> Result<Vec<HistogramBin>, EconError> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(EconError::BinWidth(width));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Ok(Vec::new());
    }
    let index = |v: f64| (v / width).floor() as i64;
    let lo = finite.iter().map(|&v| index(v)).min().unwrap_or(0);
    let hi = finite.iter().map(|&v| index(v)).max().unwrap_or(0);
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for &v in &finite {
        counts[(index(v) - lo) as usize] += 1;
    }
    let n = finite.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| {
            let b = lo + k as i64;
            HistogramBin {
                lower: b as f64 * width,
                upper: (b + 1) as f64 * width,
                count,
                density: count as f64 / (n * width),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format \"{s}\" (csv or json)")),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn fmt_ts(t: &Timestamp) -> String {
    t.with_timezone(&Utc).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub const DISPATCH_HEADER: [&str; 8] = [
    "timestamp",
    "rate_kg_h",
    "energy_kwh",
    "emissions_kg",
    "elec_cost_aud",
    "op_cost_aud",
    "credit_aud",
    "eligible",
];

pub const MONTHLY_HEADER: [&str; 9] = [
    "zone",
    "month",
    "h2_t",
    "emissions_t",
    "elec_cost_aud",
    "op_cost_aud",
    "credits_aud",
    "avg_cost_per_kg",
    "ci_ratio",
];

pub const COMPARISON_HEADER: [&str; 11] = [
    "zone",
    "scenario",
    "elec_cost_aud",
    "op_cost_aud",
    "total_cost_aud",
    "credits_aud",
    "net_cost_aud",
    "h2_t",
    "cost_per_kg",
    "emissions_t",
    "ci_ratio",
];

pub fn write_dispatch_csv<W: Write>(dispatch: &[HourlyDispatch], writer: W) -> Result<(), EconError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DISPATCH_HEADER)?;
    for d in dispatch {
        w.write_record([
            fmt_ts(&d.timestamp),
            d.rate.to_string(),
            d.energy.to_string(),
            d.emissions.to_string(),
            d.electricity_cost.to_string(),
            d.operating_cost.to_string(),
            d.credit.to_string(),
            d.credit_eligible.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_monthly_csv<W: Write>(months: &[MonthlyAggregate], writer: W) -> Result<(), EconError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MONTHLY_HEADER)?;
    for m in months {
        w.write_record([
            m.zone.clone(),
            m.month.to_string(),
            m.h2_t().to_string(),
            m.emissions_t().to_string(),
            m.elec_cost.to_string(),
            m.op_cost.to_string(),
            m.credits.to_string(),
            opt(m.avg_cost_per_kg),
            opt(m.ci_ratio),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], writer: W) -> Result<(), EconError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPARISON_HEADER)?;
    for r in rows {
        w.write_record([
            r.zone.clone(),
            r.scenario.to_string(),
            r.elec_cost.to_string(),
            r.op_cost.to_string(),
            r.total_cost.to_string(),
            r.credits.to_string(),
            r.net_cost.to_string(),
            r.h2_t().to_string(),
            opt(r.cost_per_kg),
            r.emissions_t().to_string(),
            opt(r.ci_ratio),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], writer: W) -> Result<(), EconError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lower", "upper", "count", "density"])?;
    for b in bins {
        w.write_record([
            b.lower.to_string(),
            b.upper.to_string(),
            b.count.to_string(),
            b.density.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// JSON view of a monthly aggregate: tonnes, with absent ratios as null.
fn monthly_json(m: &MonthlyAggregate) -> serde_json::Value {
    serde_json::json!({
        "zone": m.zone,
        "month": m.month.to_string(),
        "h2_t": m.h2_t(),
        "emissions_t": m.emissions_t(),
        "elec_cost_aud": m.elec_cost,
        "op_cost_aud": m.op_cost,
        "credits_aud": m.credits,
        "avg_cost_per_kg": m.avg_cost_per_kg,
        "ci_ratio": m.ci_ratio,
    })
}

fn comparison_json(r: &ComparisonRow) -> serde_json::Value {
    serde_json::json!({
        "zone": r.zone,
        "scenario": r.scenario.to_string(),
        "elec_cost_aud": r.elec_cost,
        "op_cost_aud": r.op_cost,
        "total_cost_aud": r.total_cost,
        "credits_aud": r.credits,
        "net_cost_aud": r.net_cost,
        "h2_t": r.h2_t(),
        "cost_per_kg": r.cost_per_kg,
        "emissions_t": r.emissions_t(),
        "ci_ratio": r.ci_ratio,
    })
}

fn dispatch_json(d: &HourlyDispatch) -> serde_json::Value {
    serde_json::json!({
        "timestamp": fmt_ts(&d.timestamp),
        "rate_kg_h": d.rate,
        "energy_kwh": d.energy,
        "emissions_kg": d.emissions,
        "elec_cost_aud": d.electricity_cost,
        "op_cost_aud": d.operating_cost,
        "credit_aud": d.credit,
        "eligible": d.credit_eligible,
    })
}

fn write_json<W: Write>(value: &serde_json::Value, mut writer: W) -> Result<(), EconError> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writeln!(writer).map_err(|source| EconError::Io {
        path: "<writer>".into(),
        source,
    })
}

/// Everything `export_outputs` writes for one run.
#[derive(Debug, Clone, Default)]
pub struct Report {
    /// (zone, scenario) → hourly dispatch
    pub dispatch: BTreeMap<(String, ScenarioKind), Vec<HourlyDispatch>>,
    /// (zone, scenario) → monthly aggregates
    pub monthly: BTreeMap<(String, ScenarioKind), Vec<MonthlyAggregate>>,
    pub comparison: Vec<ComparisonRow>,
    /// zone → CI histogram (g CO2eq/kWh)
    pub ci_histograms: BTreeMap<String, Vec<HistogramBin>>,
    /// zone → price histogram (AUD/MWh)
    pub price_histograms: BTreeMap<String, Vec<HistogramBin>>,
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, EconError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| EconError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Write the report into `dir` and return the written paths in order.
///
/// Files: `dispatch_<zone>_<scenario>`, `monthly_<zone>_<scenario>`, `comparison`,
/// `ci_histogram_<zone>`, `price_histogram_<zone>`, each `.csv` or `.json`.
pub fn export_outputs(
    report: &Report,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<std::path::PathBuf>, EconError> {
    std::fs::create_dir_all(dir).map_err(|source| EconError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let ext = format.extension();
    let mut written = Vec::new();
    let mut out = |name: String| {
        let p = dir.join(format!("{name}.{ext}"));
        written.push(p.clone());
        p
    };
    for ((zone, kind), d) in &report.dispatch {
        let p = out(format!("dispatch_{}_{}", file_safe(zone), kind));
        match format {
            OutputFormat::Csv => write_dispatch_csv(d, create(&p)?)?,
            OutputFormat::Json => write_json(
                &serde_json::Value::Array(d.iter().map(dispatch_json).collect()),
                create(&p)?,
            )?,
        }
    }
    for ((zone, kind), months) in &report.monthly {
        let p = out(format!("monthly_{}_{}", file_safe(zone), kind));
        match format {
            OutputFormat::Csv => write_monthly_csv(months, create(&p)?)?,
            OutputFormat::Json => write_json(
                &serde_json::Value::Array(months.iter().map(monthly_json).collect()),
                create(&p)?,
            )?,
        }
    }
    let p = out("comparison".into());
    match format {
        OutputFormat::Csv => write_comparison_csv(&report.comparison, create(&p)?)?,
        OutputFormat::Json => write_json(
            &serde_json::Value::Array(report.comparison.iter().map(comparison_json).collect()),
            create(&p)?,
        )?,
    }
    for (prefix, hists) in [
        ("ci_histogram", &report.ci_histograms),
        ("price_histogram", &report.price_histograms),
    ] {
        for (zone, bins) in hists {
            let p = out(format!("{prefix}_{}", file_safe(zone)));
            match format {
                OutputFormat::Csv => write_histogram_csv(bins, create(&p)?)?,
                OutputFormat::Json => write_json(&serde_json::to_value(bins)?, create(&p)?)?,
            }
        }
    }
    Ok(written)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}
