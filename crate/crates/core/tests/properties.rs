use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use h2lca::econ::{aggregate_monthly, cost_per_kg, total_h2_kg, total_operating_cost, EconParams};
use h2lca::esn::{steady_state_lca, EngineeringSystemNet, Marking};
use h2lca::hfgt::PartitionedMatrix;
use h2lca::ingest::{
    align_series, reconstruct_ci, weighted_ci, AlignedRecord, AlignedSeries, Coverage,
    EmissionFactorTable, GenerationMix, HourlyGridRecord, HourlyPriceRecord, Source,
};
use h2lca::linalg::Matrix;
use h2lca::model::{parse_system_model, SystemModel};
use h2lca::scenario::{
    decide_rate, hourly_emissions, run_scenario, CiSource, LcaModel, ProductionRule, ScenarioConfig,
};

fn t0() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
}

fn mix_strategy() -> impl Strategy<Value = GenerationMix> {
    prop::array::uniform10(0.0..5000.0f64)
        .prop_filter("some generation", |v| v.iter().sum::<f64>() > 1.0)
        .prop_map(GenerationMix)
}

fn series_strategy(max_len: usize) -> impl Strategy<Value = AlignedSeries> {
    prop::collection::vec((mix_strategy(), -100.0..300.0f64, 0usize..4), 1..max_len).prop_map(|hours| {
        let records: Vec<AlignedRecord> = hours
            .into_iter()
            .enumerate()
            .map(|(i, (generation, price, stride))| AlignedRecord {
                // spread over many days so months vary
                timestamp: t0() + Duration::hours((i * (1 + stride * 97)) as i64),
                reported_ci: None,
                generation,
                price,
            })
            .collect();
        let mut records = records;
        records.sort_by_key(|r| r.timestamp);
        records.dedup_by_key(|r| r.timestamp);
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
    })
}

fn configs() -> [ScenarioConfig; 3] {
    [
        ScenarioConfig::baseline(),
        ScenarioConfig::green_rule(ProductionRule::default()),
        ScenarioConfig::credit_threshold(0.6),
    ]
}

/// Random well-conditioned A (diagonally dominant) and B.
fn partition_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), n),
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), 1..=(8 - n).max(1)),
        )
            .prop_map(move |(mut a, b)| {
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] = n as f64 + 1.0;
                }
                (a, b)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn esn_step_is_linear_in_firing(
        (a, b) in partition_strategy(),
        seed in prop::collection::vec(0.0..4.0f64, 6),
        k in 0.0..3.0f64,
    ) {
        let part = PartitionedMatrix::from_blocks(Matrix::from_rows(&a), Matrix::from_rows(&b)).unwrap();
        let net = EngineeringSystemNet::from_partition(&part).unwrap();
        let n = a.len();
        let u: Vec<f64> = seed[..n].to_vec();
        let ku: Vec<f64> = u.iter().map(|v| v * k).collect();
        let zero = Marking::zeros(net.place_count(), net.transition_count());
        let one = net.fire_instantaneous(&zero, &u, 1.0).unwrap();
        let scaled = net.fire_instantaneous(&zero, &ku, 1.0).unwrap();
        for (x, y) in one.q_b.iter().zip(&scaled.q_b) {
            prop_assert!((x * k - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn lca_matches_forward_simulation(
        (a, b) in partition_strategy(),
        x in prop::collection::vec(0.1..5.0f64, 6),
    ) {
        let n = a.len();
        let x = &x[..n];
        let part = PartitionedMatrix::from_blocks(Matrix::from_rows(&a), Matrix::from_rows(&b)).unwrap();
        let dy = part.a.mul_vec(x).unwrap();
        let sol = steady_state_lca(&part, &dy).unwrap();
        for (got, want) in sol.firing.iter().zip(x) {
            prop_assert!((got - want).abs() <= 1e-9);
        }
        let net = EngineeringSystemNet::from_partition(&part).unwrap();
        let end = net.step(&net.initial_marking(), &sol.firing, &sol.firing, 1.0).unwrap();
        for (got, want) in end.q_b.iter().zip(dy.iter().chain(&sol.delta_e)) {
            prop_assert!((got - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn reconstructed_ci_is_scale_invariant_and_bounded(mix in mix_strategy(), c in 0.01..100.0f64) {
        let ef = EmissionFactorTable::default();
        let ci = weighted_ci(&mix, &ef).unwrap();
        let scaled = weighted_ci(&mix.scaled(c), &ef).unwrap();
        prop_assert!((ci - scaled).abs() <= 1e-9 * ci.max(1.0));
        let present: Vec<f64> = Source::ALL
            .iter()
            .filter(|&&s| mix.get(s) > 0.0)
            .map(|&s| ef.get(s))
            .collect();
        let lo = present.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = present.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(ci >= lo - 1e-9 && ci <= hi + 1e-9);
        let record = HourlyGridRecord { timestamp: t0(), zone: "Z".into(), generation: mix, reported_ci: None };
        prop_assert_eq!(reconstruct_ci(&record, &ef).unwrap(), ci);
    }

    #[test]
    fn rates_never_increase_with_intensity(x in 0.0..40.0f64, y in 0.0..40.0f64) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        for c in configs() {
            prop_assert!(decide_rate(&c, lo) >= decide_rate(&c, hi));
        }
        let green = ScenarioConfig::green_rule(ProductionRule::default());
        let r = decide_rate(&green, x);
        prop_assert!((0..=10).any(|k| r == 2.0 * k as f64), "rate {}", r);
    }

    #[test]
    fn scenarios_dominate_hour_by_hour(series in series_strategy(48)) {
        let lca = LcaModel::australia_h2();
        let econ = EconParams::default();
        let runs: Vec<_> = configs()
            .iter()
            .map(|c| run_scenario(&series, c, &econ, &lca, CiSource::Reconstructed).unwrap())
            .collect();
        for h in 0..series.len() {
            prop_assert!(runs[0][h].rate >= runs[1][h].rate);
            prop_assert!(runs[1][h].rate >= runs[2][h].rate);
            prop_assert!(runs[0][h].emissions >= runs[1][h].emissions);
            prop_assert!(runs[1][h].emissions >= runs[2][h].emissions);
        }
    }

    #[test]
    fn lca_emissions_equal_weighted_factor(mix in mix_strategy(), rate in 0.0..20.0f64) {
        let lca = LcaModel::australia_h2();
        let ef = EmissionFactorTable::default();
        let shares = mix.shares().unwrap();
        let got = hourly_emissions(rate, &shares, &lca).unwrap();
        let want = rate * 52.5 * weighted_ci(&mix, &ef).unwrap() / 1000.0;
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-9), "{} vs {}", got, want);
    }

    #[test]
    fn dispatch_has_one_record_per_hour_in_order(series in series_strategy(48)) {
        let lca = LcaModel::australia_h2();
        let econ = EconParams::default();
        let d = run_scenario(&series, &ScenarioConfig::baseline(), &econ, &lca, CiSource::Auto).unwrap();
        prop_assert_eq!(d.len(), series.len());
        for (h, r) in d.iter().zip(&series.records) {
            prop_assert_eq!(h.timestamp, r.timestamp);
        }
    }

    #[test]
    fn monthly_rollup_preserves_totals(series in series_strategy(64)) {
        let lca = LcaModel::australia_h2();
        let econ = EconParams::default();
        for c in configs() {
            let d = run_scenario(&series, &c, &econ, &lca, CiSource::Reconstructed).unwrap();
            let months = aggregate_monthly(&d, "Z", &econ);
            let kg: f64 = months.iter().map(|m| m.h2_kg).sum();
            prop_assert!((kg - total_h2_kg(&d)).abs() <= 1e-9 * kg.max(1.0));
            let op: f64 = months.iter().map(|m| m.op_cost).sum();
            prop_assert!((op - 1.96 * kg).abs() <= 1e-9 * op.max(1.0));
            prop_assert!((total_operating_cost(&d, &econ) - 1.96 * kg).abs() <= 1e-9 * op.max(1.0));
            let em: f64 = months.iter().map(|m| m.emissions_kg).sum();
            let em_h: f64 = d.iter().map(|h| h.emissions).sum();
            prop_assert!((em - em_h).abs() <= 1e-9 * em.max(1.0));
        }
    }

    #[test]
    fn cost_is_affine_in_price(p in -1000.0..1000.0f64, q in -1000.0..1000.0f64, w in 0.0..1.0f64) {
        let e = EconParams::default();
        let mid = w * p + (1.0 - w) * q;
        let interp = w * cost_per_kg(p, &e) + (1.0 - w) * cost_per_kg(q, &e);
        prop_assert!((cost_per_kg(mid, &e) - interp).abs() <= 1e-9);
    }

    #[test]
    fn model_document_round_trips(
        rates in prop::collection::vec(0.001..1e4f64, 64),
        note in "[a-z][a-z0-9_]{0,12}",
    ) {
        let mut model = SystemModel::australia_h2();
        let mut i = 0;
        for c in &mut model.capabilities {
            for f in &mut c.flows {
                f.rate = rates[i % rates.len()];
                i += 1;
            }
        }
        model.metadata.insert("note".into(), note);
        let back = parse_system_model(&model.to_document()).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn alignment_is_the_hour_intersection(
        grid_hours in prop::collection::btree_set(0i64..200, 1..80),
        price_hours in prop::collection::btree_set(0i64..200, 1..80),
    ) {
        let grid: Vec<HourlyGridRecord> = grid_hours
            .iter()
            .map(|&h| HourlyGridRecord {
                timestamp: t0() + Duration::hours(h),
                zone: "Z".into(),
                generation: GenerationMix([1.0; 10]),
                reported_ci: None,
            })
            .collect();
        let prices: Vec<HourlyPriceRecord> = price_hours
            .iter()
            .map(|&h| HourlyPriceRecord { timestamp: t0() + Duration::hours(h), zone: "Z".into(), price: h as f64 })
            .collect();
        let common: BTreeSet<i64> = grid_hours.intersection(&price_hours).cloned().collect();
        match align_series(&grid, &prices) {
            Ok(s) => {
                prop_assert_eq!(s.len(), common.len());
                prop_assert_eq!(s.coverage.dropped_grid, grid_hours.len() - common.len());
                prop_assert_eq!(s.coverage.dropped_price, price_hours.len() - common.len());
                for (r, h) in s.records.iter().zip(&common) {
                    prop_assert_eq!(r.price, *h as f64);
                }
            }
            Err(_) => prop_assert!(common.is_empty()),
        }
    }
}
