//! Deterministic synthetic hourly grid and price series for demos and tests.
//! Shapes are smooth trig profiles (diurnal solar, multi-day wind, evening
//! price peak with negative midday prices on sunny zones); no randomness.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, TimeZone, Utc};
use serde::Serialize;

use crate::ingest::{
    weighted_ci, EmissionFactorTable, GenerationMix, HourlyGridRecord, HourlyPriceRecord, Source,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReportedCi {
    /// Reconstructed value, unrounded.
    Exact,
    /// Reconstructed value rounded to the nearest integer.
    Rounded,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneProfile {
    /// Flat hourly generation, MWh.
    pub base: GenerationMix,
    /// Solar output at solar noon, MWh.
    pub solar_peak: f64,
    /// Wind swing around its base, fraction of base (0–1).
    pub wind_swing: f64,
    /// AUD/MWh
    pub price_mean: f64,
    pub price_swing: f64,
}

impl ZoneProfile {
    fn mix(pairs: &[(Source, f64)]) -> GenerationMix {
        let mut m = GenerationMix::default();
        for &(s, v) in pairs {
            m.set(s, v);
        }
        m
    }

    /// Coal-dominated zone.
    pub fn coal_heavy() -> Self {
        ZoneProfile {
            base: Self::mix(&[
                (Source::Coal, 2400.0),
                (Source::Gas, 600.0),
                (Source::Oil, 20.0),
                (Source::Biomass, 40.0),
                (Source::Wind, 1400.0),
                (Source::Hydro, 800.0),
                (Source::BatteryDischarge, 30.0),
            ]),
            solar_peak: 4000.0,
            wind_swing: 0.6,
            price_mean: 95.0,
            price_swing: 70.0,
        }
    }

    /// Mixed zone with deep solar and wind.
    pub fn renewable_heavy() -> Self {
        ZoneProfile {
            base: Self::mix(&[
                (Source::Gas, 300.0),
                (Source::Wind, 900.0),
                (Source::BatteryDischarge, 40.0),
                (Source::Import, 200.0),
            ]),
            solar_peak: 1600.0,
            wind_swing: 0.8,
            price_mean: 80.0,
            price_swing: 110.0,
        }
    }

    /// Hydro and wind only; zero intensity every hour.
    pub fn clean() -> Self {
        ZoneProfile {
            base: Self::mix(&[(Source::Hydro, 1100.0), (Source::Wind, 250.0)]),
            solar_peak: 0.0,
            wind_swing: 0.5,
            price_mean: 60.0,
            price_swing: 40.0,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "coal-heavy" => Some(Self::coal_heavy()),
            "renewable-heavy" => Some(Self::renewable_heavy()),
            "clean" => Some(Self::clean()),
            _ => None,
        }
    }
}

/// Hourly records for every hour of a UTC calendar year.
pub fn synthetic_year(
    zone: &str,
    year: i32,
    profile: &ZoneProfile,
    reported: ReportedCi,
) -> (Vec<HourlyGridRecord>, Vec<HourlyPriceRecord>) {
    let start = Utc
        .with_ymd_and_hms(year, 1, 1, 0, 0, 0)
        .single()
        .expect("valid year start");
    let end = Utc
        .with_ymd_and_hms(year + 1, 1, 1, 0, 0, 0)
        .single()
        .expect("valid year end");
    synthetic_span(zone, start, (end - start).num_hours(), profile, reported)
}

pub fn synthetic_span(
    zone: &str,
    start: chrono::DateTime<Utc>,
    hours: i64,
    profile: &ZoneProfile,
    reported: ReportedCi,
) -> (Vec<HourlyGridRecord>, Vec<HourlyPriceRecord>) {
    let ef = EmissionFactorTable::default();
    let mut grid = Vec::with_capacity(hours as usize);
    let mut prices = Vec::with_capacity(hours as usize);
    for h in 0..hours {
        let t = start + Duration::hours(h);
        let day = t.ordinal0() as f64;
        let hour = (h % 24) as f64;
        // UTC+10 local solar time; summer-heavy
        let local = (hour + 10.0) % 24.0;
        let season = 0.75 + 0.25 * (2.0 * PI * day / 365.0).cos();
        let sun = ((local - 6.0) / 12.0 * PI).sin().max(0.0);
        let solar = profile.solar_peak * season * sun;
        let wind_phase = 2.0 * PI * (h as f64) / (24.0 * 3.7);
        let wind_factor = 1.0 + profile.wind_swing * wind_phase.sin();

        let mut mix = profile.base;
        mix.set(Source::Solar, mix.get(Source::Solar) + solar);
        mix.set(Source::Wind, mix.get(Source::Wind) * wind_factor);
        // round to kWh so the CSV round-trips exactly
        for s in Source::ALL {
            mix.set(s, (mix.get(s) * 1000.0).round() / 1000.0);
        }
        let ci = weighted_ci(&mix, &ef);
        let reported_ci = match reported {
            ReportedCi::Exact => ci,
            ReportedCi::Rounded => ci.map(f64::round),
            ReportedCi::Absent => None,
        };
        grid.push(HourlyGridRecord {
            timestamp: t,
            zone: zone.to_string(),
            generation: mix,
            reported_ci,
        });

        let evening = (-((local - 18.5) / 2.5).powi(2)).exp();
        let midday = sun * profile.solar_peak / (profile.solar_peak + 800.0);
        let price = profile.price_mean + profile.price_swing * (evening - 1.2 * midday);
        prices.push(HourlyPriceRecord {
            timestamp: t,
            zone: zone.to_string(),
            price: (price * 100.0).round() / 100.0,
        });
    }
    (grid, prices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_year_lengths() {
        let (g, p) = synthetic_year("Z", 2023, &ZoneProfile::coal_heavy(), ReportedCi::Exact);
        assert_eq!(g.len(), 8760);
        assert_eq!(p.len(), 8760);
        let (g, _) = synthetic_year("Z", 2024, &ZoneProfile::clean(), ReportedCi::Absent);
        assert_eq!(g.len(), 8784);
    }

    #[test]
    fn clean_zone_is_zero_intensity() {
        let (g, _) = synthetic_year("Z", 2023, &ZoneProfile::clean(), ReportedCi::Exact);
        assert!(g.iter().all(|r| r.reported_ci == Some(0.0)));
    }

    #[test]
    fn renewable_zone_sees_negative_prices() {
        let (_, p) = synthetic_year("Z", 2023, &ZoneProfile::renewable_heavy(), ReportedCi::Exact);
        assert!(p.iter().any(|r| r.price < 0.0));
        assert!(p.iter().any(|r| r.price > 100.0));
    }

    #[test]
    fn generation_is_non_negative() {
        for prof in [ZoneProfile::coal_heavy(), ZoneProfile::renewable_heavy(), ZoneProfile::clean()] {
            let (g, _) = synthetic_year("Z", 2023, &prof, ReportedCi::Exact);
            assert!(g.iter().all(|r| r.generation.0.iter().all(|&v| v >= 0.0) && r.generation.total() > 0.0));
        }
    }
}
