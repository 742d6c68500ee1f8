//! Hourly grid generation, carbon-intensity and spot-price series.
//!
//! Canonical generation CSV:
//!
//! ```text
//! timestamp,zone,coal,gas,oil,biomass,solar,geothermal,wind,hydro,battery_discharge,import,reported_ci
//! ```
//!
//! with ISO-8601 UTC timestamps on the hour, energies in MWh and reported
//! carbon intensity in g CO2eq/kWh (may be empty). Canonical price CSV:
//! `timestamp,zone,price_aud_per_mwh`; sub-hourly rows are averaged to the
//! hour. Provider exports are read through a TOML mapping file, see
//! [`AdapterFile`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("header: {0}")]
    Header(String),
    #[error("ambiguous unit: {0}")]
    UnitAmbiguity(String),
    #[error("line {line}: duplicate record for zone {zone} at {timestamp}")]
    Duplicate {
        line: u64,
        zone: String,
        timestamp: Timestamp,
    },
    #[error("zone {zone}: gap of {hours} h between {from} and {to} exceeds the {max_gap} h limit")]
    Gap {
        zone: String,
        from: Timestamp,
        to: Timestamp,
        hours: i64,
        max_gap: i64,
    },
    #[error("grid ({grid}) and price ({price}) series have no hour in common")]
    EmptyIntersection { grid: String, price: String },
    #[error("expected a single zone, found {0:?}")]
    ZoneMismatch(Vec<String>),
    #[error("{timestamp} ({zone}): total generation is zero")]
    ZeroGeneration { zone: String, timestamp: Timestamp },
    #[error("emission factor table: {0}")]
    EmissionFactors(String),
    #[error("adapter configuration: {0}")]
    Adapter(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Canonical generation sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Coal,
    Gas,
    Oil,
    Biomass,
    Solar,
    Geothermal,
    Wind,
    Hydro,
    BatteryDischarge,
    Import,
}

impl Source {
    pub const ALL: [Source; 10] = [
        Source::Coal,
        Source::Gas,
        Source::Oil,
        Source::Biomass,
        Source::Solar,
        Source::Geothermal,
        Source::Wind,
        Source::Hydro,
        Source::BatteryDischarge,
        Source::Import,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Coal => "coal",
            Source::Gas => "gas",
            Source::Oil => "oil",
            Source::Biomass => "biomass",
            Source::Solar => "solar",
            Source::Geothermal => "geothermal",
            Source::Wind => "wind",
            Source::Hydro => "hydro",
            Source::BatteryDischarge => "battery_discharge",
            Source::Import => "import",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Source::ALL
            .into_iter()
            .find(|src| src.as_str() == s)
            .ok_or_else(|| format!("unknown generation source \"{s}\""))
    }
}

/// Energy per source over one hour, MWh.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationMix(pub [f64; 10]);

impl GenerationMix {
    pub fn get(&self, s: Source) -> f64 {
        self.0[s.index()]
    }

    pub fn set(&mut self, s: Source, v: f64) {
        self.0[s.index()] = v;
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Fractions of total generation; `None` when the total is zero.
    pub fn shares(&self) -> Option<[f64; 10]> {
        let total = self.total();
        if total <= 0.0 {
            return None;
        }
        let mut out = [0.0; 10];
        for (o, v) in out.iter_mut().zip(&self.0) {
            *o = v / total;
        }
        Some(out)
    }

    pub fn scaled(&self, c: f64) -> GenerationMix {
        let mut out = *self;
        for v in out.0.iter_mut() {
            *v *= c;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourlyGridRecord {
    pub timestamp: Timestamp,
    pub zone: String,
    pub generation: GenerationMix,
    /// g CO2eq/kWh
    pub reported_ci: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourlyPriceRecord {
    pub timestamp: Timestamp,
    pub zone: String,
    /// AUD/MWh, may be negative.
    pub price: f64,
}

/// Life-cycle emission factors, g CO2eq/kWh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmissionFactorTable(pub [f64; 10]);

impl Default for EmissionFactorTable {
    /// IPCC/GREET-style factors for the combustion sources, zero elsewhere.
    fn default() -> Self {
        let mut t = [0.0; 10];
        t[Source::Coal.index()] = 820.0;
        t[Source::Gas.index()] = 490.0;
        t[Source::Oil.index()] = 650.0;
        t[Source::Biomass.index()] = 230.0;
        EmissionFactorTable(t)
    }
}

impl EmissionFactorTable {
    pub fn get(&self, s: Source) -> f64 {
        self.0[s.index()]
    }

    pub fn new(factors: &BTreeMap<Source, f64>) -> Result<Self, IngestError> {
        let mut t = [0.0; 10];
        for s in Source::ALL {
            let v = *factors
                .get(&s)
                .ok_or_else(|| IngestError::EmissionFactors(format!("no factor for {s}")))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(IngestError::EmissionFactors(format!(
                    "factor for {s} must be finite and non-negative, got {v}"
                )));
            }
            t[s.index()] = v;
        }
        Ok(EmissionFactorTable(t))
    }

    /// CSV `source,factor_g_per_kwh`; every canonical source must appear.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut factors = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = line_of(&rec);
            let source: Source = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|message| IngestError::MalformedRow { line, message })?;
            let v = parse_number(rec.get(1).unwrap_or(""), line, "factor")?;
            if factors.insert(source, v).is_some() {
                return Err(IngestError::MalformedRow {
                    line,
                    message: format!("{source} listed twice"),
                });
            }
        }
        Self::new(&factors)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_reader(open(path)?)
    }
}

fn open(path: &Path) -> Result<std::fs::File, IngestError> {
    std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_number(s: &str, line: u64, what: &str) -> Result<f64, IngestError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IngestError::MalformedRow {
            line,
            message: format!("invalid {what} \"{s}\""),
        })
}

/// Floor to the start of the hour.
pub fn floor_hour(t: Timestamp) -> Timestamp {
    Utc.with_ymd_and_hms(t.year(), t.month(), t.day(), t.hour(), 0, 0)
        .single()
        .expect("hour floor is unambiguous in UTC")
}

/// Parse a timestamp. With `format`, the text is read as local time at
/// `utc_offset_minutes` east of UTC; otherwise RFC 3339 is tried first and
/// naive ISO forms are taken as being at that offset.
pub fn parse_timestamp(
    s: &str,
    format: Option<&str>,
    utc_offset_minutes: i32,
) -> Result<Timestamp, String> {
    let s = s.trim();
    let naive = if let Some(fmt) = format {
        NaiveDateTime::parse_from_str(s, fmt).map_err(|e| format!("timestamp \"{s}\": {e}"))?
    } else if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    } else {
        ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
            .ok_or_else(|| format!("unrecognised timestamp \"{s}\""))?
    };
    Ok(Utc.from_utc_datetime(&naive) - Duration::minutes(utc_offset_minutes as i64))
}

const CANONICAL_GENERATION_HEADER: [&str; 13] = [
    "timestamp",
    "zone",
    "coal",
    "gas",
    "oil",
    "biomass",
    "solar",
    "geothermal",
    "wind",
    "hydro",
    "battery_discharge",
    "import",
    "reported_ci",
];

const CANONICAL_PRICE_HEADER: [&str; 3] = ["timestamp", "zone", "price_aud_per_mwh"];

/// Unit of provider generation columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenerationUnit {
    #[serde(rename = "kW")]
    Kw,
    #[serde(rename = "MW")]
    Mw,
    #[serde(rename = "GW")]
    Gw,
    #[serde(rename = "kWh")]
    Kwh,
    #[serde(rename = "MWh")]
    Mwh,
    #[serde(rename = "GWh")]
    Gwh,
}

impl GenerationUnit {
    fn parse(s: &str) -> Result<Self, IngestError> {
        match s {
            "kW" => Ok(Self::Kw),
            "MW" => Ok(Self::Mw),
            "GW" => Ok(Self::Gw),
            "kWh" => Ok(Self::Kwh),
            "MWh" => Ok(Self::Mwh),
            "GWh" => Ok(Self::Gwh),
            other => Err(IngestError::UnitAmbiguity(format!(
                "\"{other}\" is not one of kW, MW, GW, kWh, MWh, GWh"
            ))),
        }
    }

    /// Factor to MW (power units) or MWh (energy units).
    fn to_mega(self) -> f64 {
        match self {
            Self::Kw | Self::Kwh => 1e-3,
            Self::Mw | Self::Mwh => 1.0,
            Self::Gw | Self::Gwh => 1e3,
        }
    }

    fn is_power(self) -> bool {
        matches!(self, Self::Kw | Self::Mw | Self::Gw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnknownColumns {
    #[default]
    Reject,
    Ignore,
}

/// Provider generation export settings.
///
/// Power units (kW, MW, GW) are averaged within each hour and multiplied by
/// one hour; energy units (kWh, MWh, GWh) are summed. `aggregate` overrides
/// that rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationAdapterConfig {
    pub timestamp_column: String,
    #[serde(default)]
    pub timestamp_format: Option<String>,
    #[serde(default)]
    pub utc_offset_minutes: i32,
    /// Timestamps mark the end of each interval.
    #[serde(default)]
    pub interval_ending: bool,
    #[serde(default)]
    pub zone_column: Option<String>,
    #[serde(default)]
    pub zone: Option<String>,
    pub unit: String,
    #[serde(default)]
    pub aggregate: Option<Aggregate>,
    #[serde(default)]
    pub reported_ci_column: Option<String>,
    /// Provider column → canonical source name, or `"ignore"`.
    pub columns: BTreeMap<String, String>,
    #[serde(default)]
    pub unknown_columns: UnknownColumns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceAdapterConfig {
    pub timestamp_column: String,
    #[serde(default)]
    pub timestamp_format: Option<String>,
    #[serde(default)]
    pub utc_offset_minutes: i32,
    #[serde(default)]
    pub interval_ending: bool,
    #[serde(default)]
    pub zone_column: Option<String>,
    #[serde(default)]
    pub zone: Option<String>,
    pub price_column: String,
    /// Multiplier to AUD/MWh.
    #[serde(default = "one")]
    pub price_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Mapping file with optional `[generation]` and `[price]` tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterFile {
    #[serde(default)]
    pub generation: Option<GenerationAdapterConfig>,
    #[serde(default)]
    pub price: Option<PriceAdapterConfig>,
}

impl AdapterFile {
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        toml::from_str(text).map_err(|e| IngestError::Adapter(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum GenerationAdapter {
    #[default]
    Canonical,
    Provider(GenerationAdapterConfig),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum PriceAdapter {
    #[default]
    Canonical,
    Provider(PriceAdapterConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PriceLoadOptions {
    /// Largest tolerated run of missing hours between two priced hours.
    pub max_gap_hours: Option<i64>,
}

fn sort_and_check_duplicates<T>(
    mut rows: Vec<(u64, String, Timestamp, T)>,
) -> Result<Vec<(u64, String, Timestamp, T)>, IngestError> {
    rows.sort_by(|a, b| (&a.1, a.2, a.0).cmp(&(&b.1, b.2, b.0)));
    for w in rows.windows(2) {
        if w[0].1 == w[1].1 && w[0].2 == w[1].2 {
            return Err(IngestError::Duplicate {
                line: w[1].0.max(w[0].0),
                zone: w[1].1.clone(),
                timestamp: w[1].2,
            });
        }
    }
    Ok(rows)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::Header(format!("missing column \"{name}\"")))
}

fn zone_lookup(
    headers: &csv::StringRecord,
    zone_column: &Option<String>,
    zone: &Option<String>,
) -> Result<ZoneSource, IngestError> {
    match (zone_column, zone) {
        (Some(c), _) => Ok(ZoneSource::Column(column_index(headers, c)?)),
        (None, Some(z)) => Ok(ZoneSource::Fixed(z.clone())),
        (None, None) => Err(IngestError::Adapter(
            "either zone_column or zone must be set".into(),
        )),
    }
}

enum ZoneSource {
    Column(usize),
    Fixed(String),
}

impl ZoneSource {
    fn get(&self, rec: &csv::StringRecord) -> String {
        match self {
            ZoneSource::Column(i) => rec.get(*i).unwrap_or("").trim().to_string(),
            ZoneSource::Fixed(z) => z.clone(),
        }
    }
}

fn interval_hour(t: Timestamp, interval_ending: bool) -> Timestamp {
    if interval_ending {
        floor_hour(t - Duration::seconds(1))
    } else {
        floor_hour(t)
    }
}

/// Read generation records from CSV text.
pub fn read_generation<R: Read>(
    reader: R,
    adapter: &GenerationAdapter,
) -> Result<Vec<HourlyGridRecord>, IngestError> {
    match adapter {
        GenerationAdapter::Canonical => read_canonical_generation(reader),
        GenerationAdapter::Provider(cfg) => read_provider_generation(reader, cfg),
    }
}

pub fn load_generation_series(
    path: &Path,
    adapter: &GenerationAdapter,
) -> Result<Vec<HourlyGridRecord>, IngestError> {
    read_generation(open(path)?, adapter)
}

fn read_canonical_generation<R: Read>(reader: R) -> Result<Vec<HourlyGridRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CANONICAL_GENERATION_HEADER) {
        let unknown: Vec<_> = headers
            .iter()
            .filter(|h| !CANONICAL_GENERATION_HEADER.contains(h))
            .collect();
        return Err(IngestError::Header(if unknown.is_empty() {
            format!("expected {}", CANONICAL_GENERATION_HEADER.join(","))
        } else {
            format!("unknown columns {unknown:?}")
        }));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let timestamp = parse_timestamp(&rec[0], None, 0)
            .map_err(|message| IngestError::MalformedRow { line, message })?;
        if floor_hour(timestamp) != timestamp {
            return Err(IngestError::MalformedRow {
                line,
                message: format!("timestamp {timestamp} is not on the hour"),
            });
        }
        let zone = rec[1].to_string();
        if zone.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                message: "empty zone".into(),
            });
        }
        let mut generation = GenerationMix::default();
        for (k, s) in Source::ALL.iter().enumerate() {
            let cell = &rec[2 + k];
            let v = if cell.is_empty() {
                0.0
            } else {
                parse_number(cell, line, s.as_str())?
            };
            if v < 0.0 {
                return Err(IngestError::MalformedRow {
                    line,
                    message: format!("negative {s} generation {v}"),
                });
            }
            generation.set(*s, v);
        }
        let reported_ci = match &rec[12] {
            "" => None,
            cell => {
                let v = parse_number(cell, line, "reported_ci")?;
                if v < 0.0 {
                    return Err(IngestError::MalformedRow {
                        line,
                        message: format!("negative carbon intensity {v}"),
                    });
                }
                Some(v)
            }
        };
        rows.push((line, zone, timestamp, (generation, reported_ci)));
    }
    Ok(sort_and_check_duplicates(rows)?
        .into_iter()
        .map(|(_, zone, timestamp, (generation, reported_ci))| HourlyGridRecord {
            timestamp,
            zone,
            generation,
            reported_ci,
        })
        .collect())
}

enum ColumnRole {
    Source(Source),
    Ignore,
}

fn read_provider_generation<R: Read>(
    reader: R,
    cfg: &GenerationAdapterConfig,
) -> Result<Vec<HourlyGridRecord>, IngestError> {
    let unit = GenerationUnit::parse(&cfg.unit)?;
    let aggregate = cfg.aggregate.unwrap_or(if unit.is_power() {
        Aggregate::Mean
    } else {
        Aggregate::Sum
    });
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ts_col = column_index(&headers, &cfg.timestamp_column)?;
    let zone_src = zone_lookup(&headers, &cfg.zone_column, &cfg.zone)?;
    let ci_col = cfg
        .reported_ci_column
        .as_ref()
        .map(|c| column_index(&headers, c))
        .transpose()?;

    let mut roles: Vec<(usize, Source)> = Vec::new();
    for (provider, target) in &cfg.columns {
        let idx = column_index(&headers, provider)?;
        let role = if target == "ignore" {
            ColumnRole::Ignore
        } else {
            ColumnRole::Source(target.parse().map_err(IngestError::Adapter)?)
        };
        if let ColumnRole::Source(s) = role {
            roles.push((idx, s));
        }
    }
    if cfg.unknown_columns == UnknownColumns::Reject {
        let known: BTreeSet<&str> = cfg
            .columns
            .keys()
            .map(String::as_str)
            .chain([cfg.timestamp_column.as_str()])
            .chain(cfg.zone_column.as_deref())
            .chain(cfg.reported_ci_column.as_deref())
            .collect();
        let unknown: Vec<_> = headers.iter().filter(|h| !known.contains(h)).collect();
        if !unknown.is_empty() {
            return Err(IngestError::Header(format!(
                "unmapped columns {unknown:?} (map them or set unknown_columns = \"ignore\")"
            )));
        }
    }

    // raw samples, grouped later by hour
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let t = parse_timestamp(
            rec.get(ts_col).unwrap_or(""),
            cfg.timestamp_format.as_deref(),
            cfg.utc_offset_minutes,
        )
        .map_err(|message| IngestError::MalformedRow { line, message })?;
        let zone = zone_src.get(&rec);
        let mut mix = GenerationMix::default();
        for &(idx, s) in &roles {
            let cell = rec.get(idx).unwrap_or("");
            let v = if cell.is_empty() {
                0.0
            } else {
                parse_number(cell, line, s.as_str())? * unit.to_mega()
            };
            if v < 0.0 {
                return Err(IngestError::MalformedRow {
                    line,
                    message: format!("negative {s} generation {v}"),
                });
            }
            mix.set(s, mix.get(s) + v);
        }
        let ci = match ci_col.map(|i| rec.get(i).unwrap_or("")) {
            None | Some("") => None,
            Some(cell) => Some(parse_number(cell, line, "carbon intensity")?),
        };
        samples.push((line, zone, t, (mix, ci)));
    }
    let samples = sort_and_check_duplicates(samples)?;

    let mut out: Vec<HourlyGridRecord> = Vec::new();
    let mut group: Vec<(GenerationMix, Option<f64>)> = Vec::new();
    let mut key: Option<(String, Timestamp)> = None;
    let flush = |key: &Option<(String, Timestamp)>,
                 group: &mut Vec<(GenerationMix, Option<f64>)>,
                 out: &mut Vec<HourlyGridRecord>| {
        if let Some((zone, hour)) = key {
            let n = group.len() as f64;
            let mut mix = GenerationMix::default();
            for (m, _) in group.iter() {
                for s in Source::ALL {
                    mix.set(s, mix.get(s) + m.get(s));
                }
            }
            if aggregate == Aggregate::Mean {
                mix = mix.scaled(1.0 / n);
            }
            let cis: Vec<f64> = group.iter().filter_map(|(_, c)| *c).collect();
            let reported_ci = if cis.is_empty() {
                None
            } else {
                Some(cis.iter().sum::<f64>() / cis.len() as f64)
            };
            out.push(HourlyGridRecord {
                timestamp: *hour,
                zone: zone.clone(),
                generation: mix,
                reported_ci,
            });
        }
        group.clear();
    };
    for (_, zone, t, sample) in samples {
        let k = (zone, interval_hour(t, cfg.interval_ending));
        if key.as_ref() != Some(&k) {
            flush(&key, &mut group, &mut out);
            key = Some(k);
        }
        group.push(sample);
    }
    flush(&key, &mut group, &mut out);
    Ok(out)
}

/// Read price records, averaging sub-hourly intervals to the hour.
pub fn read_prices<R: Read>(
    reader: R,
    adapter: &PriceAdapter,
    options: PriceLoadOptions,
) -> Result<Vec<HourlyPriceRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let canonical = PriceAdapterConfig {
        timestamp_column: "timestamp".into(),
        timestamp_format: None,
        utc_offset_minutes: 0,
        interval_ending: false,
        zone_column: Some("zone".into()),
        zone: None,
        price_column: "price_aud_per_mwh".into(),
        price_scale: 1.0,
    };
    let cfg = match adapter {
        PriceAdapter::Canonical => {
            if headers.iter().ne(CANONICAL_PRICE_HEADER) {
                return Err(IngestError::Header(format!(
                    "expected {}",
                    CANONICAL_PRICE_HEADER.join(",")
                )));
            }
            &canonical
        }
        PriceAdapter::Provider(cfg) => cfg,
    };
    let ts_col = column_index(&headers, &cfg.timestamp_column)?;
    let price_col = column_index(&headers, &cfg.price_column)?;
    let zone_src = zone_lookup(&headers, &cfg.zone_column, &cfg.zone)?;

    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let t = parse_timestamp(
            rec.get(ts_col).unwrap_or(""),
            cfg.timestamp_format.as_deref(),
            cfg.utc_offset_minutes,
        )
        .map_err(|message| IngestError::MalformedRow { line, message })?;
        let price = parse_number(rec.get(price_col).unwrap_or(""), line, "price")? * cfg.price_scale;
        samples.push((line, zone_src.get(&rec), t, price));
    }
    let samples = sort_and_check_duplicates(samples)?;

    let mut hourly: BTreeMap<(String, Timestamp), (f64, usize)> = BTreeMap::new();
    for (_, zone, t, price) in samples {
        let e = hourly
            .entry((zone, interval_hour(t, cfg.interval_ending)))
            .or_insert((0.0, 0));
        e.0 += price;
        e.1 += 1;
    }
    let out: Vec<HourlyPriceRecord> = hourly
        .into_iter()
        .map(|((zone, timestamp), (sum, n))| HourlyPriceRecord {
            timestamp,
            zone,
            price: sum / n as f64,
        })
        .collect();

    if let Some(max_gap) = options.max_gap_hours {
        for w in out.windows(2) {
            if w[0].zone != w[1].zone {
                continue;
            }
            let missing = (w[1].timestamp - w[0].timestamp).num_hours() - 1;
            if missing > max_gap {
                return Err(IngestError::Gap {
                    zone: w[0].zone.clone(),
                    from: w[0].timestamp,
                    to: w[1].timestamp,
                    hours: missing,
                    max_gap,
                });
            }
        }
    }
    Ok(out)
}

pub fn load_price_series(
    path: &Path,
    adapter: &PriceAdapter,
    options: PriceLoadOptions,
) -> Result<Vec<HourlyPriceRecord>, IngestError> {
    read_prices(open(path)?, adapter, options)
}

fn fmt_ts(t: &Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Write records in the canonical generation format.
pub fn write_generation_csv<W: Write>(
    records: &[HourlyGridRecord],
    writer: W,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANONICAL_GENERATION_HEADER)?;
    for r in records {
        let mut row = vec![fmt_ts(&r.timestamp), r.zone.clone()];
        row.extend(r.generation.0.iter().map(|v| v.to_string()));
        row.push(r.reported_ci.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })
}

pub fn write_price_csv<W: Write>(
    records: &[HourlyPriceRecord],
    writer: W,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANONICAL_PRICE_HEADER)?;
    for r in records {
        w.write_record([fmt_ts(&r.timestamp), r.zone.clone(), r.price.to_string()])?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })
}

/// Zones present in a record list, sorted.
pub fn zones<'a, I: IntoIterator<Item = &'a str>>(ids: I) -> Vec<String> {
    ids.into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedRecord {
    pub timestamp: Timestamp,
    pub generation: GenerationMix,
    pub reported_ci: Option<f64>,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Coverage {
    pub grid_hours: usize,
    pub price_hours: usize,
    pub aligned_hours: usize,
    /// Grid hours without a price.
    pub dropped_grid: usize,
    /// Priced hours without grid data.
    pub dropped_price: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedSeries {
    pub zone: String,
    pub records: Vec<AlignedRecord>,
    pub coverage: Coverage,
}

impl AlignedSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keep only hours of one UTC calendar year.
    pub fn restrict_to_year(&self, year: i32) -> AlignedSeries {
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.timestamp.year() == year)
            .cloned()
            .collect();
        let mut coverage = self.coverage;
        coverage.aligned_hours = records.len();
        AlignedSeries {
            zone: self.zone.clone(),
            records,
            coverage,
        }
    }
}

fn single_zone<'a, I: Iterator<Item = &'a str>>(ids: I) -> Result<Option<String>, IngestError> {
    let zs = zones(ids);
    match zs.len() {
        0 => Ok(None),
        1 => Ok(zs.into_iter().next()),
        _ => Err(IngestError::ZoneMismatch(zs)),
    }
}

/// Inner join on the hour. Both inputs must be for one and the same zone.
pub fn align_series(
    grid: &[HourlyGridRecord],
    price: &[HourlyPriceRecord],
) -> Result<AlignedSeries, IngestError> {
    let gz = single_zone(grid.iter().map(|r| r.zone.as_str()))?;
    let pz = single_zone(price.iter().map(|r| r.zone.as_str()))?;
    let zone = match (gz, pz) {
        (Some(g), Some(p)) if g != p => return Err(IngestError::ZoneMismatch(vec![g, p])),
        (Some(g), _) => g,
        (None, Some(p)) => p,
        (None, None) => String::new(),
    };
    let prices: BTreeMap<Timestamp, f64> = price.iter().map(|r| (r.timestamp, r.price)).collect();
    let grid_hours: BTreeSet<Timestamp> = grid.iter().map(|r| r.timestamp).collect();
    let mut sorted: Vec<&HourlyGridRecord> = grid.iter().collect();
    sorted.sort_by_key(|r| r.timestamp);
    sorted.dedup_by_key(|r| r.timestamp);
    let records: Vec<AlignedRecord> = sorted
        .into_iter()
        .filter_map(|g| {
            prices.get(&g.timestamp).map(|&p| AlignedRecord {
                timestamp: g.timestamp,
                generation: g.generation,
                reported_ci: g.reported_ci,
                price: p,
            })
        })
        .collect();
    if records.is_empty() {
        return Err(IngestError::EmptyIntersection {
            grid: describe_span(grid_hours.iter()),
            price: describe_span(prices.keys()),
        });
    }
    let aligned = records.len();
    Ok(AlignedSeries {
        zone,
        coverage: Coverage {
            grid_hours: grid_hours.len(),
            price_hours: prices.len(),
            aligned_hours: aligned,
            dropped_grid: grid_hours.len() - aligned,
            dropped_price: prices.len() - aligned,
        },
        records,
    })
}

fn describe_span<'a, I: Iterator<Item = &'a Timestamp>>(mut it: I) -> String {
    match it.next() {
        None => "empty".into(),
        Some(first) => {
            let last = it.last().unwrap_or(first);
            format!("{} .. {}", fmt_ts(first), fmt_ts(last))
        }
    }
}

/// Split grid and price records by zone and align each zone present in both.
pub fn align_by_zone(
    grid: &[HourlyGridRecord],
    price: &[HourlyPriceRecord],
) -> Result<Vec<AlignedSeries>, IngestError> {
    let mut by_zone: BTreeMap<&str, (Vec<HourlyGridRecord>, Vec<HourlyPriceRecord>)> =
        BTreeMap::new();
    for r in grid {
        by_zone.entry(&r.zone).or_default().0.push(r.clone());
    }
    for r in price {
        by_zone.entry(&r.zone).or_default().1.push(r.clone());
    }
    by_zone
        .into_values()
        .filter(|(g, p)| !g.is_empty() && !p.is_empty())
        .map(|(g, p)| align_series(&g, &p))
        .collect()
}

/// Combine zones into one interconnected grid: generation is summed per hour;
/// reported CI and price are generation-weighted means. Only hours present in
/// every zone are kept.
pub fn aggregate_zones(series: &[AlignedSeries], name: &str) -> Result<AlignedSeries, IngestError> {
    let mut hours: Option<BTreeSet<Timestamp>> = None;
    for s in series {
        let h: BTreeSet<Timestamp> = s.records.iter().map(|r| r.timestamp).collect();
        hours = Some(match hours {
            None => h,
            Some(acc) => acc.intersection(&h).copied().collect(),
        });
    }
    let hours = hours.unwrap_or_default();
    let lookup: Vec<BTreeMap<Timestamp, &AlignedRecord>> = series
        .iter()
        .map(|s| s.records.iter().map(|r| (r.timestamp, r)).collect())
        .collect();
    let mut records = Vec::with_capacity(hours.len());
    for t in &hours {
        let parts: Vec<&AlignedRecord> = lookup.iter().map(|m| m[t]).collect();
        let mut mix = GenerationMix::default();
        for p in &parts {
            for s in Source::ALL {
                mix.set(s, mix.get(s) + p.generation.get(s));
            }
        }
        let total = mix.total();
        let weighted = |f: &dyn Fn(&AlignedRecord) -> f64| -> f64 {
            if total > 0.0 {
                parts.iter().map(|p| f(p) * p.generation.total()).sum::<f64>() / total
            } else {
                parts.iter().map(|p| f(p)).sum::<f64>() / parts.len() as f64
            }
        };
        let reported_ci = if parts.iter().all(|p| p.reported_ci.is_some()) {
            Some(weighted(&|p| p.reported_ci.unwrap_or(0.0)))
        } else {
            None
        };
        records.push(AlignedRecord {
            timestamp: *t,
            generation: mix,
            reported_ci,
            price: weighted(&|p| p.price),
        });
    }
    if records.is_empty() {
        return Err(IngestError::EmptyIntersection {
            grid: format!("{} zones", series.len()),
            price: "no common hour".into(),
        });
    }
    let n = records.len();
    Ok(AlignedSeries {
        zone: name.to_string(),
        records,
        coverage: Coverage {
            grid_hours: n,
            price_hours: n,
            aligned_hours: n,
            dropped_grid: 0,
            dropped_price: 0,
        },
    })
}

/// Generation-weighted mean emission factor, g CO2eq/kWh.
pub fn weighted_ci(mix: &GenerationMix, ef: &EmissionFactorTable) -> Option<f64> {
    let total = mix.total();
    if total <= 0.0 {
        return None;
    }
    let emitted: f64 = Source::ALL.iter().map(|&s| mix.get(s) * ef.get(s)).sum();
    Some(emitted / total)
}

/// Carbon intensity rebuilt from the generation mix and emission factors.
pub fn reconstruct_ci(record: &HourlyGridRecord, ef: &EmissionFactorTable) -> Result<f64, IngestError> {
    weighted_ci(&record.generation, ef).ok_or_else(|| IngestError::ZeroGeneration {
        zone: record.zone.clone(),
        timestamp: record.timestamp,
    })
}

/// Default tolerance between reported and reconstructed CI, g CO2eq/kWh.
pub const DEFAULT_CI_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourDeviation {
    pub timestamp: Timestamp,
    pub zone: String,
    pub reconstructed: f64,
    pub reported: f64,
    pub deviation: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiValidationReport {
    pub tolerance: f64,
    pub hours: Vec<HourDeviation>,
    /// Hours without a reported value or without generation.
    pub skipped: usize,
    pub max_deviation: f64,
    pub mean_deviation: f64,
}

impl CiValidationReport {
    pub fn flagged(&self) -> impl Iterator<Item = &HourDeviation> {
        self.hours.iter().filter(|h| h.flagged)
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged().count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "timestamp",
            "zone",
            "reconstructed_ci",
            "reported_ci",
            "deviation",
            "flagged",
        ])?;
        for h in &self.hours {
            w.write_record([
                fmt_ts(&h.timestamp),
                h.zone.clone(),
                h.reconstructed.to_string(),
                h.reported.to_string(),
                h.deviation.to_string(),
                h.flagged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compare reported CI with the reconstruction hour by hour.
pub fn validate_reported_ci(
    records: &[HourlyGridRecord],
    ef: &EmissionFactorTable,
    tol: f64,
) -> CiValidationReport {
    let mut hours = Vec::new();
    let mut skipped = 0;
    for r in records {
        match (r.reported_ci, weighted_ci(&r.generation, ef)) {
            (Some(reported), Some(reconstructed)) => {
                let deviation = (reconstructed - reported).abs();
                hours.push(HourDeviation {
                    timestamp: r.timestamp,
                    zone: r.zone.clone(),
                    reconstructed,
                    reported,
                    deviation,
                    flagged: deviation > tol,
                });
            }
            _ => skipped += 1,
        }
    }
    let max_deviation = hours.iter().map(|h| h.deviation).fold(0.0, f64::max);
    let mean_deviation = if hours.is_empty() {
        0.0
    } else {
        hours.iter().map(|h| h.deviation).sum::<f64>() / hours.len() as f64
    };
    CiValidationReport {
        tolerance: tol,
        hours,
        skipped,
        max_deviation,
        mean_deviation,
    }
}
