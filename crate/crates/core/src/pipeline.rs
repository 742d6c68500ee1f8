//! File-to-report plumbing shared by the CLI and the Python bindings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::econ::{aggregate_monthly, build_comparison, histogram, EconParams, Report};
use crate::error::{Error, Result};
use crate::ingest::{
    aggregate_zones, align_by_zone, load_generation_series, load_price_series, AdapterFile,
    AlignedSeries, GenerationAdapter, HourlyGridRecord, HourlyPriceRecord, IngestError,
    PriceAdapter, PriceLoadOptions,
};
use crate::model::{parse_system_model, validate_model, SystemModel};
use crate::scenario::{decision_ci, run_scenario, CiSource, LcaModel, ScenarioConfig};

/// Parse and validate a model file, or the bundled `australia-h2` model.
pub fn load_model(path: Option<&Path>) -> Result<SystemModel> {
    let model = match path {
        None => SystemModel::australia_h2(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| IngestError::Io {
                path: p.display().to_string(),
                source,
            })?;
            parse_system_model(&text)?
        }
    };
    let report = validate_model(&model);
    if !report.is_empty() {
        return Err(Error::Invalid(report));
    }
    Ok(model)
}

#[derive(Debug, Clone, Default)]
pub struct DataInputs {
    pub generation: Vec<PathBuf>,
    pub prices: Vec<PathBuf>,
    /// TOML mapping file for provider exports; canonical CSV without it.
    pub adapter: Option<PathBuf>,
    pub max_gap_hours: Option<i64>,
}

impl DataInputs {
    fn adapters(&self) -> Result<(GenerationAdapter, PriceAdapter)> {
        let Some(path) = &self.adapter else {
            return Ok((GenerationAdapter::Canonical, PriceAdapter::Canonical));
        };
        let file = AdapterFile::load(path)?;
        Ok((
            file.generation
                .map_or(GenerationAdapter::Canonical, GenerationAdapter::Provider),
            file.price.map_or(PriceAdapter::Canonical, PriceAdapter::Provider),
        ))
    }

    pub fn load_generation(&self) -> Result<Vec<HourlyGridRecord>> {
        let (adapter, _) = self.adapters()?;
        let mut all = Vec::new();
        for p in &self.generation {
            all.extend(load_generation_series(p, &adapter)?);
        }
        check_unique(all.iter().map(|r| (&r.zone, r.timestamp)))?;
        all.sort_by(|a, b| (&a.zone, a.timestamp).cmp(&(&b.zone, b.timestamp)));
        Ok(all)
    }

    pub fn load_prices(&self) -> Result<Vec<HourlyPriceRecord>> {
        let (_, adapter) = self.adapters()?;
        let options = PriceLoadOptions {
            max_gap_hours: self.max_gap_hours,
        };
        let mut all = Vec::new();
        for p in &self.prices {
            all.extend(load_price_series(p, &adapter, options)?);
        }
        check_unique(all.iter().map(|r| (&r.zone, r.timestamp)))?;
        all.sort_by(|a, b| (&a.zone, a.timestamp).cmp(&(&b.zone, b.timestamp)));
        Ok(all)
    }
}

fn check_unique<'a, I>(keys: I) -> Result<()>
where
    I: Iterator<Item = (&'a String, crate::ingest::Timestamp)>,
{
    let mut seen = std::collections::BTreeSet::new();
    for (zone, t) in keys {
        if !seen.insert((zone, t)) {
            return Err(IngestError::Duplicate {
                line: 0,
                zone: zone.clone(),
                timestamp: t,
            }
            .into());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SeriesFilter {
    /// Keep only these zones (all when empty).
    pub zones: Vec<String>,
    pub year: Option<i32>,
    /// Combine the kept zones into one grid under this name.
    pub national: Option<String>,
}

/// Load, align per zone, filter, optionally aggregate.
pub fn load_series(inputs: &DataInputs, filter: &SeriesFilter) -> Result<Vec<AlignedSeries>> {
    let grid = inputs.load_generation()?;
    let prices = inputs.load_prices()?;
    let mut series = align_by_zone(&grid, &prices)?;
    if !filter.zones.is_empty() {
        for z in &filter.zones {
            if !series.iter().any(|s| &s.zone == z) {
                return Err(Error::Usage(format!(
                    "zone \"{z}\" has no aligned generation and price data"
                )));
            }
        }
        series.retain(|s| filter.zones.contains(&s.zone));
    }
    if series.is_empty() {
        return Err(Error::Usage("no zone has both generation and price data".into()));
    }
    if let Some(y) = filter.year {
        series = series.iter().map(|s| s.restrict_to_year(y)).collect();
        if let Some(s) = series.iter().find(|s| s.is_empty()) {
            return Err(Error::Usage(format!("zone \"{}\" has no aligned hours in {y}", s.zone)));
        }
    }
    if let Some(name) = &filter.national {
        series = vec![aggregate_zones(&series, name)?];
    }
    Ok(series)
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub scenarios: Vec<ScenarioConfig>,
    pub econ: EconParams,
    pub ci_source: CiSource,
    /// g CO2eq/kWh
    pub ci_bin_width: f64,
    /// AUD/MWh
    pub price_bin_width: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            scenarios: vec![ScenarioConfig::baseline()],
            econ: EconParams::default(),
            ci_source: CiSource::Auto,
            ci_bin_width: 10.0,
            price_bin_width: 10.0,
        }
    }
}

/// Run every scenario over every series and roll the results up.
pub fn evaluate(series: &[AlignedSeries], lca: &LcaModel, spec: &RunSpec) -> Result<Report> {
    let mut report = Report::default();
    let ef = lca.emission_factors()?;
    for s in series {
        for config in &spec.scenarios {
            let key = (s.zone.clone(), config.kind);
            if report.dispatch.contains_key(&key) {
                return Err(Error::Usage(format!("scenario {} given twice", config.kind)));
            }
            let d = run_scenario(s, config, &spec.econ, lca, spec.ci_source)?;
            report
                .monthly
                .insert(key.clone(), aggregate_monthly(&d, &s.zone, &spec.econ));
            report.dispatch.insert(key, d);
        }
        let cis = s
            .records
            .iter()
            .map(|r| decision_ci(&r.generation, r.reported_ci, r.timestamp, spec.ci_source, &ef))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        let prices: Vec<f64> = s.records.iter().map(|r| r.price).collect();
        report
            .ci_histograms
            .insert(s.zone.clone(), histogram(&cis, spec.ci_bin_width)?);
        report
            .price_histograms
            .insert(s.zone.clone(), histogram(&prices, spec.price_bin_width)?);
    }
    report.comparison = build_comparison(&report.dispatch, &spec.econ)?;
    Ok(report)
}

/// Coverage lines for each aligned series, stable order.
pub fn coverage_summary(series: &[AlignedSeries]) -> BTreeMap<String, String> {
    series
        .iter()
        .map(|s| {
            let c = &s.coverage;
            (
                s.zone.clone(),
                format!(
                    "{} aligned hours ({} grid, {} price; dropped {} grid, {} price)",
                    c.aligned_hours, c.grid_hours, c.price_hours, c.dropped_grid, c.dropped_price
                ),
            )
        })
        .collect()
}
