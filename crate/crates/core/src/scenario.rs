//! Hourly electrolyzer dispatch under the baseline, green-rule and
//! credit-threshold scenarios, with emissions from the steady-state LCA.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::econ::EconParams;
use crate::esn::SimError;
use crate::linalg::LuFactorization;
use crate::hfgt::{partition, reduced_incidence, HfgtError, PartitionedMatrix, Place};
use crate::ingest::{AlignedSeries, EmissionFactorTable, GenerationMix, Source, Timestamp};
use crate::model::SystemModel;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid electrolyzer: {0}")]
    Electrolyzer(String),
    #[error("invalid production rule: {0}")]
    Rule(String),
    #[error("model is not usable for emissions accounting: {0}")]
    Model(String),
    #[error("mix shares must be non-negative and sum to 1 (sum = {sum})")]
    Shares { sum: f64 },
    #[error("{0}: no generation, the mix is undefined")]
    ZeroGeneration(Timestamp),
    #[error("{0}: no reported carbon intensity")]
    MissingReportedCi(Timestamp),
    #[error("specific energy differs: electrolyzer {electrolyzer}, econ {econ}")]
    SpecificEnergy { electrolyzer: f64, econ: f64 },
    #[error("empty series")]
    EmptySeries,
    #[error("{0}: non-finite result")]
    NonFinite(Timestamp),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Hfgt(#[from] HfgtError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// `key = value` lines, `#` comments, blank lines ignored. Returns
/// (1-based line, key, value); on failure (line, message).
pub(crate) fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>, (usize, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or((i + 1, format!("expected key = value, found \"{line}\"")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err((i + 1, "empty key".into()));
        }
        if out.iter().any(|(_, key, _): &(usize, String, String)| key == k) {
            return Err((i + 1, format!("duplicate key \"{k}\"")));
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElectrolyzerSpec {
    /// kWh per kg H2
    pub specific_energy: f64,
    /// kg/h
    pub max_rate: f64,
    /// kg/h; a nonzero decided rate below this is raised to it.
    pub min_rate: f64,
}

impl Default for ElectrolyzerSpec {
    fn default() -> Self {
        ElectrolyzerSpec {
            specific_energy: 52.5,
            max_rate: 20.0,
            min_rate: 0.0,
        }
    }
}

impl ElectrolyzerSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.specific_energy > 0.0 && self.specific_energy.is_finite()) {
            return Err(ScenarioError::Electrolyzer(format!(
                "specific_energy must be positive, got {}",
                self.specific_energy
            )));
        }
        if !(0.0 <= self.min_rate && self.min_rate <= self.max_rate && self.max_rate.is_finite()) {
            return Err(ScenarioError::Electrolyzer(format!(
                "need 0 <= min_rate <= max_rate, got {} and {}",
                self.min_rate, self.max_rate
            )));
        }
        Ok(())
    }
}

/// kg CO2eq per kg H2 for a grid intensity in g CO2eq/kWh.
pub fn ci_per_kg(grid_ci: f64, spec: &ElectrolyzerSpec) -> f64 {
    grid_ci * spec.specific_energy / 1000.0
}

/// Production levels are multiples of this, kg/h.
pub const RATE_STEP: f64 = 2.0;

/// Step function from CI (kg CO2eq/kg H2) to rate (kg/h). Thresholds are
/// inclusive upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductionRule {
    pub breakpoints: Vec<(f64, f64)>,
    pub default_rate_above_last: f64,
}

impl Default for ProductionRule {
    /// 20 kg/h up to 14.50, 2-kg steps down to 8 kg/h at 17.00, off above 19.00.
    fn default() -> Self {
        ProductionRule {
            breakpoints: vec![
                (14.50, 20.0),
                (15.00, 18.0),
                (15.50, 16.0),
                (16.00, 14.0),
                (16.50, 12.0),
                (16.99, 10.0),
                (17.00, 8.0),
                (17.50, 6.0),
                (18.00, 4.0),
                (19.00, 2.0),
            ],
            default_rate_above_last: 0.0,
        }
    }
}

fn is_step_multiple(r: f64) -> bool {
    (r / RATE_STEP).fract() == 0.0
}

impl ProductionRule {
    pub fn new(breakpoints: Vec<(f64, f64)>, default_rate_above_last: f64) -> Result<Self, ScenarioError> {
        let rule = ProductionRule {
            breakpoints,
            default_rate_above_last,
        };
        rule.validate(None)?;
        Ok(rule)
    }

    /// Check ordering and 2-kg levels; with `max_rate`, also the ceiling.
    pub fn validate(&self, max_rate: Option<f64>) -> Result<(), ScenarioError> {
        let err = |m: String| Err(ScenarioError::Rule(m));
        if self.breakpoints.is_empty() {
            return err("no breakpoints".into());
        }
        let rates = self
            .breakpoints
            .iter()
            .map(|b| b.1)
            .chain([self.default_rate_above_last]);
        for r in rates.clone() {
            if !(r >= 0.0 && r.is_finite() && is_step_multiple(r)) {
                return err(format!("rate {r} is not a non-negative multiple of {RATE_STEP}"));
            }
            if let Some(max) = max_rate {
                if r > max {
                    return err(format!("rate {r} exceeds max_rate {max}"));
                }
            }
        }
        for w in self.breakpoints.windows(2) {
            if !(w[1].0 > w[0].0) {
                return err(format!("thresholds not strictly increasing at {}", w[1].0));
            }
        }
        let rates: Vec<f64> = rates.collect();
        if rates.windows(2).any(|w| w[1] > w[0]) {
            return err("rates must be non-increasing".into());
        }
        if self.breakpoints.iter().any(|b| !b.0.is_finite()) {
            return err("thresholds must be finite".into());
        }
        Ok(())
    }

    pub fn rate_for(&self, ci_kg: f64) -> f64 {
        self.breakpoints
            .iter()
            .find(|(threshold, _)| ci_kg <= *threshold)
            .map_or(self.default_rate_above_last, |b| b.1)
    }

    /// Table text: `threshold rate` per line, then `above rate`.
    ///
    /// ```text
    /// # ci_kg_per_kg  rate_kg_h
    /// 14.50  20
    /// 17.00   8
    /// 19.00   2
    /// above   0
    /// ```
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut breakpoints = Vec::new();
        let mut above = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cfg = |message: String| ScenarioError::Config { line: i + 1, message };
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let [a, b] = fields[..] else {
                return Err(cfg(format!("expected \"threshold rate\", found \"{line}\"")));
            };
            let rate: f64 = b.parse().map_err(|_| cfg(format!("bad rate \"{b}\"")))?;
            if a == "above" {
                if above.replace(rate).is_some() {
                    return Err(cfg("\"above\" given twice".into()));
                }
            } else {
                if above.is_some() {
                    return Err(cfg("\"above\" must be the last line".into()));
                }
                let t: f64 = a.parse().map_err(|_| cfg(format!("bad threshold \"{a}\"")))?;
                breakpoints.push((t, rate));
            }
        }
        Self::new(breakpoints, above.unwrap_or(0.0))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("# ci_kg_per_kg rate_kg_h\n");
        for (t, r) in &self.breakpoints {
            s.push_str(&format!("{t} {r}\n"));
        }
        s.push_str(&format!("above {}\n", self.default_rate_above_last));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Baseline,
    GreenRule,
    CreditThreshold,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Baseline,
        ScenarioKind::GreenRule,
        ScenarioKind::CreditThreshold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Baseline => "baseline",
            ScenarioKind::GreenRule => "green-rule",
            ScenarioKind::CreditThreshold => "credit-threshold",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown scenario \"{s}\" (baseline, green-rule, credit-threshold)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// green-rule only
    pub rule: Option<ProductionRule>,
    /// credit-threshold only, kg CO2eq/kg H2
    pub credit_ci_cap: Option<f64>,
    pub electrolyzer: ElectrolyzerSpec,
}

impl ScenarioConfig {
    pub fn baseline() -> Self {
        Self::of_kind(ScenarioKind::Baseline)
    }

    pub fn green_rule(rule: ProductionRule) -> Self {
        ScenarioConfig {
            rule: Some(rule),
            ..Self::of_kind(ScenarioKind::GreenRule)
        }
    }

    pub fn credit_threshold(cap: f64) -> Self {
        ScenarioConfig {
            credit_ci_cap: Some(cap),
            ..Self::of_kind(ScenarioKind::CreditThreshold)
        }
    }

    /// Defaults for a kind: the default rule, a 0.6 cap.
    pub fn of_kind(kind: ScenarioKind) -> Self {
        ScenarioConfig {
            kind,
            rule: (kind == ScenarioKind::GreenRule).then(ProductionRule::default),
            credit_ci_cap: (kind == ScenarioKind::CreditThreshold).then_some(0.6),
            electrolyzer: ElectrolyzerSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.electrolyzer.validate()?;
        let cfg = |message: String| Err(ScenarioError::Config { line: 0, message });
        match (self.kind, &self.rule, self.credit_ci_cap) {
            (ScenarioKind::GreenRule, Some(rule), None) => {
                rule.validate(Some(self.electrolyzer.max_rate))
            }
            (ScenarioKind::CreditThreshold, None, Some(cap)) if cap >= 0.0 && cap.is_finite() => Ok(()),
            (ScenarioKind::CreditThreshold, None, Some(cap)) => {
                cfg(format!("credit_ci_cap must be non-negative, got {cap}"))
            }
            (ScenarioKind::Baseline, None, None) => Ok(()),
            (kind, rule, cap) => cfg(format!(
                "{kind}: rule {} and credit_ci_cap {} (rule is for green-rule, cap for credit-threshold)",
                if rule.is_some() { "given" } else { "missing" },
                if cap.is_some() { "given" } else { "missing" },
            )),
        }
    }

    /// Key/value file. Keys: `kind` (required), `specific_energy`,
    /// `max_rate`, `min_rate`, `credit_ci_cap` (credit-threshold), `rule`
    /// (green-rule; path of a rule table, relative to `base_dir`).
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let kv = parse_key_values(text).map_err(|(line, message)| ScenarioError::Config { line, message })?;
        let kind_entry = kv
            .iter()
            .find(|(_, k, _)| k == "kind")
            .ok_or(ScenarioError::Config {
                line: 0,
                message: "missing \"kind\"".into(),
            })?;
        let kind: ScenarioKind = kind_entry.2.parse().map_err(|message| ScenarioError::Config {
            line: kind_entry.0,
            message,
        })?;
        let mut c = ScenarioConfig {
            kind,
            rule: None,
            credit_ci_cap: None,
            electrolyzer: ElectrolyzerSpec::default(),
        };
        for (line, key, value) in &kv {
            let num = || {
                value.parse::<f64>().map_err(|_| ScenarioError::Config {
                    line: *line,
                    message: format!("{key}: not a number: \"{value}\""),
                })
            };
            match key.as_str() {
                "kind" => {}
                "specific_energy" => c.electrolyzer.specific_energy = num()?,
                "max_rate" => c.electrolyzer.max_rate = num()?,
                "min_rate" => c.electrolyzer.min_rate = num()?,
                "credit_ci_cap" => c.credit_ci_cap = Some(num()?),
                "rule" => {
                    let path = base_dir.map_or_else(|| Path::new(value).to_path_buf(), |d| d.join(value));
                    c.rule = Some(ProductionRule::load(&path)?);
                }
                _ => {
                    return Err(ScenarioError::Config {
                        line: *line,
                        message: format!("unknown key \"{key}\""),
                    })
                }
            }
        }
        match kind {
            ScenarioKind::GreenRule if c.rule.is_none() => c.rule = Some(ProductionRule::default()),
            ScenarioKind::CreditThreshold if c.credit_ci_cap.is_none() => c.credit_ci_cap = Some(0.6),
            _ => {}
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = read(path)?;
        Self::parse(&text, path.parent())
    }
}

impl ProductionRule {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&read(path)?)
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Production rate for one hour, kg/h.
pub fn decide_rate(config: &ScenarioConfig, ci_kg: f64) -> f64 {
    let spec = &config.electrolyzer;
    let rate = match config.kind {
        ScenarioKind::Baseline => spec.max_rate,
        ScenarioKind::GreenRule => config
            .rule
            .as_ref()
            .map_or(spec.max_rate, |r| r.rate_for(ci_kg)),
        ScenarioKind::CreditThreshold => {
            if ci_kg <= config.credit_ci_cap.unwrap_or(0.6) {
                spec.max_rate
            } else {
                0.0
            }
        }
    };
    if rate > 0.0 {
        rate.clamp(spec.min_rate, spec.max_rate)
    } else {
        0.0
    }
}

fn parse_place(s: &str) -> Result<Place, ScenarioError> {
    let (op, buf) = s
        .split_once('@')
        .ok_or_else(|| ScenarioError::Model(format!("\"{s}\" is not \"operand @ buffer\"")))?;
    Ok(Place::new(op.trim(), buf.trim()))
}

/// The partitioned system matrix prepared for per-hour mix solves.
///
/// Metadata keys read from the model: `lca.aspects`, `lca.product`,
/// `lca.emission`, `lca.emission_to_kg`, `mix.capability`, `mix.operand`
/// and `mix.source.<source>` (buffer supplying that source's electricity).
#[derive(Debug, Clone)]
pub struct LcaModel {
    pub part: PartitionedMatrix,
    product_row: usize,
    emission_row: usize,
    emission_to_kg: f64,
    mix_col: usize,
    supply_rows: [usize; 10],
}

impl LcaModel {
    pub fn from_model(model: &SystemModel) -> Result<Self, ScenarioError> {
        let meta = |k: &str| {
            model
                .metadata
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| ScenarioError::Model(format!("metadata key \"{k}\" missing")))
        };
        let aspects: Vec<&str> = meta("lca.aspects")?.split(',').map(str::trim).collect();
        let part = partition(&reduced_incidence(model)?, &aspects)?;
        let product = parse_place(meta("lca.product")?)?;
        let product_row = part
            .product_index(&product)
            .ok_or_else(|| ScenarioError::Model(format!("product place {product} is not a product row")))?;
        let emission = parse_place(meta("lca.emission")?)?;
        let emission_row = part
            .aspect_index(&emission)
            .ok_or_else(|| ScenarioError::Model(format!("emission place {emission} is not an aspect row")))?;
        let emission_to_kg: f64 = meta("lca.emission_to_kg")?
            .parse()
            .map_err(|_| ScenarioError::Model("lca.emission_to_kg is not a number".into()))?;
        let mix_cap = meta("mix.capability")?;
        let mix_col = part
            .col_of(mix_cap)
            .ok_or_else(|| ScenarioError::Model(format!("mix capability \"{mix_cap}\" not found")))?;
        let operand = meta("mix.operand")?;
        let mut supply_rows = [0usize; 10];
        for s in Source::ALL {
            let buffer = meta(&format!("mix.source.{s}"))?;
            let place = Place::new(operand, buffer);
            supply_rows[s.index()] = part
                .product_index(&place)
                .ok_or_else(|| ScenarioError::Model(format!("supply place {place} is not a product row")))?;
        }
        let mut rows = supply_rows.to_vec();
        rows.sort_unstable();
        rows.dedup();
        if rows.len() != 10 {
            return Err(ScenarioError::Model("two sources share a supply place".into()));
        }
        Ok(LcaModel {
            part,
            product_row,
            emission_row,
            emission_to_kg,
            mix_col,
            supply_rows,
        })
    }

    pub fn australia_h2() -> Self {
        Self::from_model(&SystemModel::australia_h2()).expect("bundled model supports emissions accounting")
    }

    /// Partition with the mix column set to pull `shares` from the supply places.
    pub fn with_mix(&self, shares: &[f64; 10]) -> PartitionedMatrix {
        let mut part = self.part.clone();
        for s in Source::ALL {
            part.a[(self.supply_rows[s.index()], self.mix_col)] = -shares[s.index()];
        }
        part
    }

    /// The emission aspect row of B.
    pub fn emission_row(&self) -> Vec<f64> {
        self.part.b.row(self.emission_row).to_vec()
    }

    /// Factors implied by the model: emission per unit electricity of the
    /// capability that supplies each source's place, in g CO2eq/kWh when the
    /// emission operand is in grams.
    pub fn emission_factors(&self) -> Result<EmissionFactorTable, ScenarioError> {
        let mut t = [0.0; 10];
        for s in Source::ALL {
            let row = self.supply_rows[s.index()];
            let suppliers: Vec<usize> = (0..self.part.a.cols())
                .filter(|&j| j != self.mix_col && self.part.a[(row, j)] > 0.0)
                .collect();
            let [j] = suppliers[..] else {
                return Err(ScenarioError::Model(format!(
                    "{s}: expected one supplying capability, found {}",
                    suppliers.len()
                )));
            };
            t[s.index()] = self.part.b[(self.emission_row, j)] / self.part.a[(row, j)];
        }
        Ok(EmissionFactorTable(t))
    }
}

/// Emissions in kg CO2eq for producing `rate` kg in one hour on a grid with
/// the given generation shares: ΔE = B·A⁻¹·ΔY with ΔY = rate at the product.
pub fn hourly_emissions(rate: f64, shares: &[f64; 10], lca: &LcaModel) -> Result<f64, ScenarioError> {
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || shares.iter().any(|s| !(*s >= 0.0)) {
        return Err(ScenarioError::Shares { sum });
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(ScenarioError::Config {
            line: 0,
            message: format!("rate must be non-negative, got {rate}"),
        });
    }
    if rate == 0.0 {
        return Ok(0.0);
    }
    // only A changes with the mix; B·x is needed for the emission row alone
    let mut a = lca.part.a.clone();
    for s in Source::ALL {
        a[(lca.supply_rows[s.index()], lca.mix_col)] = -shares[s.index()];
    }
    let lu = LuFactorization::new(&a).map_err(SimError::from)?;
    let mut delta_y = vec![0.0; a.rows()];
    delta_y[lca.product_row] = rate;
    let x = lu.solve(&delta_y).map_err(SimError::from)?;
    let emitted: f64 = lca.part.b.row(lca.emission_row).iter().zip(&x).map(|(b, x)| b * x).sum();
    Ok(emitted * lca.emission_to_kg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiSource {
    /// Reported when present, otherwise reconstructed.
    #[default]
    Auto,
    Reported,
    Reconstructed,
}

impl FromStr for CiSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(CiSource::Auto),
            "reported" => Ok(CiSource::Reported),
            "reconstructed" => Ok(CiSource::Reconstructed),
            _ => Err(format!("unknown CI source \"{s}\" (reported, reconstructed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourlyDispatch {
    pub timestamp: Timestamp,
    /// kg/h
    pub rate: f64,
    /// kWh
    pub energy: f64,
    /// kg CO2eq
    pub emissions: f64,
    /// AUD
    pub electricity_cost: f64,
    /// AUD
    pub operating_cost: f64,
    /// AUD
    pub credit: f64,
    pub credit_eligible: bool,
}

/// Grid CI (g CO2eq/kWh) used for the hour's dispatch decision.
pub fn decision_ci(
    generation: &GenerationMix,
    reported: Option<f64>,
    timestamp: Timestamp,
    source: CiSource,
    ef: &EmissionFactorTable,
) -> Result<f64, ScenarioError> {
    let reconstructed = || {
        crate::ingest::weighted_ci(generation, ef).ok_or(ScenarioError::ZeroGeneration(timestamp))
    };
    match (source, reported) {
        (CiSource::Reported | CiSource::Auto, Some(ci)) => Ok(ci),
        (CiSource::Reported, None) => Err(ScenarioError::MissingReportedCi(timestamp)),
        _ => reconstructed(),
    }
}

/// Dispatch every hour of `series`. Decisions use the CI chosen by
/// `ci_source` (reconstruction uses the model's own emission factors);
/// emissions always come from the LCA solve on the hour's mix.
pub fn run_scenario(
    series: &AlignedSeries,
    config: &ScenarioConfig,
    econ: &EconParams,
    lca: &LcaModel,
    ci_source: CiSource,
) -> Result<Vec<HourlyDispatch>, ScenarioError> {
    config.validate()?;
    if series.is_empty() {
        return Err(ScenarioError::EmptySeries);
    }
    let spec = &config.electrolyzer;
    if spec.specific_energy != econ.specific_energy {
        return Err(ScenarioError::SpecificEnergy {
            electrolyzer: spec.specific_energy,
            econ: econ.specific_energy,
        });
    }
    let ef = lca.emission_factors()?;
    series
        .records
        .iter()
        .map(|r| {
            let t = r.timestamp;
            let shares = r.generation.shares().ok_or(ScenarioError::ZeroGeneration(t))?;
            let ci_kg = ci_per_kg(decision_ci(&r.generation, r.reported_ci, t, ci_source, &ef)?, spec);
            let rate = decide_rate(config, ci_kg);
            let eligible = rate > 0.0 && ci_kg <= econ.credit_ci_cap;
            let d = HourlyDispatch {
                timestamp: t,
                rate,
                energy: rate * spec.specific_energy,
                emissions: hourly_emissions(rate, &shares, lca)?,
                electricity_cost: rate * spec.specific_energy * r.price / 1000.0,
                operating_cost: rate * econ.op_cost,
                credit: if eligible { rate * econ.credit_rate } else { 0.0 },
                credit_eligible: eligible,
            };
            let finite = [d.energy, d.emissions, d.electricity_cost, d.operating_cost, d.credit]
                .iter()
                .all(|v| v.is_finite());
            if finite {
                Ok(d)
            } else {
                Err(ScenarioError::NonFinite(t))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_timestamp, AlignedRecord, Coverage};
    use chrono::Duration;

    fn spec() -> ElectrolyzerSpec {
        ElectrolyzerSpec::default()
    }

    #[test]
    fn ci_conversion_examples() {
        assert_eq!(ci_per_kg(0.0, &spec()), 0.0);
        assert!((ci_per_kg(276.19, &spec()) - 14.50).abs() < 1e-3);
        assert!((ci_per_kg(11.43, &spec()) - 0.600).abs() < 1e-3);
        assert_eq!(ci_per_kg(820.0, &spec()), 43.05);
    }

    #[test]
    fn rule_anchors() {
        let g = ScenarioConfig::green_rule(ProductionRule::default());
        assert_eq!(decide_rate(&g, 14.50), 20.0);
        assert_eq!(decide_rate(&g, 17.00), 8.0);
        assert_eq!(decide_rate(&g, 19.00), 2.0);
        assert_eq!(decide_rate(&g, 19.5), 0.0);
        let c = ScenarioConfig::credit_threshold(0.6);
        assert_eq!(decide_rate(&c, 0.59), 20.0);
        assert_eq!(decide_rate(&c, 0.6), 20.0);
        assert_eq!(decide_rate(&c, 0.61), 0.0);
        assert_eq!(decide_rate(&ScenarioConfig::baseline(), 40.0), 20.0);
    }

    #[test]
    fn min_rate_raises_small_levels() {
        let mut g = ScenarioConfig::green_rule(ProductionRule::default());
        g.electrolyzer.min_rate = 6.0;
        assert_eq!(decide_rate(&g, 18.5), 6.0);
        assert_eq!(decide_rate(&g, 25.0), 0.0);
    }

    #[test]
    fn rule_validation() {
        assert!(ProductionRule::new(vec![(1.0, 20.0), (1.0, 10.0)], 0.0).is_err());
        assert!(ProductionRule::new(vec![(1.0, 10.0), (2.0, 20.0)], 0.0).is_err());
        assert!(ProductionRule::new(vec![(1.0, 19.0)], 0.0).is_err());
        assert!(ProductionRule::new(vec![(1.0, 20.0)], 4.0).is_ok());
        assert!(ProductionRule::new(vec![(1.0, 20.0)], 22.0).is_err());
        let mut c = ScenarioConfig::green_rule(ProductionRule::new(vec![(1.0, 22.0)], 0.0).unwrap());
        assert!(c.validate().is_err());
        c.electrolyzer.max_rate = 22.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rule_table_round_trip() {
        let r = ProductionRule::default();
        assert_eq!(ProductionRule::parse(&r.to_table()).unwrap(), r);
        let p = ProductionRule::parse("# t r\n14.5, 20\n19 10\nabove 0\n").unwrap();
        assert_eq!(p.breakpoints, vec![(14.5, 20.0), (19.0, 10.0)]);
        assert!(matches!(
            ProductionRule::parse("14.5 20\nabove 0\n19 10\n"),
            Err(ScenarioError::Config { line: 3, .. })
        ));
    }

    #[test]
    fn scenario_files() {
        let c = ScenarioConfig::parse("kind = credit-threshold\n", None).unwrap();
        assert_eq!(c.credit_ci_cap, Some(0.6));
        let c = ScenarioConfig::parse("kind = green-rule\nmax_rate = 20\n", None).unwrap();
        assert_eq!(c.rule, Some(ProductionRule::default()));
        assert!(ScenarioConfig::parse("kind = baseline\ncredit_ci_cap = 0.6\n", None).is_err());
        assert!(ScenarioConfig::parse("max_rate = 20\n", None).is_err());
        assert!(ScenarioConfig::parse("kind = smart\n", None).is_err());
        assert!(ScenarioConfig::parse("kind = baseline\nmin_rate = 30\n", None).is_err());
    }

    fn coal_hydro(coal: f64, hydro: f64) -> [f64; 10] {
        let mut s = [0.0; 10];
        s[Source::Coal.index()] = coal;
        s[Source::Hydro.index()] = hydro;
        s
    }

    #[test]
    fn emission_examples() {
        let lca = LcaModel::australia_h2();
        assert_eq!(hourly_emissions(0.0, &coal_hydro(1.0, 0.0), &lca).unwrap(), 0.0);
        let coal = hourly_emissions(20.0, &coal_hydro(1.0, 0.0), &lca).unwrap();
        assert!((coal - 861.0).abs() < 1e-9 * 861.0, "{coal}");
        let half = hourly_emissions(10.0, &coal_hydro(0.5, 0.5), &lca).unwrap();
        assert!((half - 215.25).abs() < 1e-9 * 215.25, "{half}");
        assert!(matches!(
            hourly_emissions(10.0, &coal_hydro(0.5, 0.4), &lca),
            Err(ScenarioError::Shares { .. })
        ));
    }

    #[test]
    fn emissions_agree_with_full_solve() {
        let lca = LcaModel::australia_h2();
        let shares = [0.5, 0.08, 0.01, 0.01, 0.15, 0.01, 0.14, 0.06, 0.01, 0.03];
        let part = lca.with_mix(&shares);
        let mut dy = vec![0.0; part.a.rows()];
        dy[lca.product_row] = 20.0;
        let sol = crate::esn::steady_state_lca(&part, &dy).unwrap();
        let full = sol.delta_e[lca.emission_row] * lca.emission_to_kg;
        let fast = hourly_emissions(20.0, &shares, &lca).unwrap();
        assert!((full - fast).abs() <= 1e-12 * full, "{full} {fast}");
        assert!(crate::esn::verify_lca_solution(&part, &dy, &sol, 1e-9).unwrap());
    }

    #[test]
    fn model_factors_match_default_table() {
        assert_eq!(
            LcaModel::australia_h2().emission_factors().unwrap(),
            EmissionFactorTable::default()
        );
    }

    fn series(hours: i64, mix: GenerationMix, reported: Option<f64>, price: f64) -> AlignedSeries {
        let t0 = parse_timestamp("2023-01-01T00:00:00Z", None, 0).unwrap();
        let records: Vec<_> = (0..hours)
            .map(|h| AlignedRecord {
                timestamp: t0 + Duration::hours(h),
                generation: mix,
                reported_ci: reported,
                price,
            })
            .collect();
        let n = records.len();
        AlignedSeries {
            zone: "Z".into(),
            records,
            coverage: Coverage {
                grid_hours: n,
                price_hours: n,
                aligned_hours: n,
                dropped_grid: 0,
                dropped_price: 0,
            },
        }
    }

    #[test]
    fn clean_day_under_credit_threshold() {
        // 0.5 kg/kg is 9.52 g/kWh
        let mut mix = GenerationMix::default();
        mix.set(Source::Hydro, 1.0);
        let s = series(24, mix, Some(0.5 * 1000.0 / 52.5), 60.0);
        let lca = LcaModel::australia_h2();
        let d = run_scenario(
            &s,
            &ScenarioConfig::credit_threshold(0.6),
            &EconParams::default(),
            &lca,
            CiSource::Reported,
        )
        .unwrap();
        assert_eq!(d.len(), 24);
        assert_eq!(d.iter().map(|h| h.rate).sum::<f64>(), 480.0);
        assert!(d.iter().all(|h| h.credit_eligible));
    }

    #[test]
    fn dirty_day_under_green_rule() {
        let mut mix = GenerationMix::default();
        mix.set(Source::Coal, 1.0);
        let s = series(24, mix, None, 60.0);
        let d = run_scenario(
            &s,
            &ScenarioConfig::green_rule(ProductionRule::default()),
            &EconParams::default(),
            &LcaModel::australia_h2(),
            CiSource::Auto,
        )
        .unwrap();
        assert!(d.iter().all(|h| h.rate == 0.0 && h.emissions == 0.0 && h.electricity_cost == 0.0));
    }

    #[test]
    fn reported_source_needs_values() {
        let mut mix = GenerationMix::default();
        mix.set(Source::Coal, 1.0);
        let s = series(2, mix, None, 60.0);
        assert!(matches!(
            run_scenario(
                &s,
                &ScenarioConfig::baseline(),
                &EconParams::default(),
                &LcaModel::australia_h2(),
                CiSource::Reported
            ),
            Err(ScenarioError::MissingReportedCi(_))
        ));
    }
}
