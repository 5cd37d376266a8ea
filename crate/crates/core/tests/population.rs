use conjsim::astro::{Epoch, OrbitalElements};
use conjsim::population::{
    fit_prior, format_tle, parse_tle, read_catalog, sample_object, sample_object_capped, tle_checksum, BinningPolicy,
    CatalogMode, PopulationError, PopulationPrior, SizeElement, TleError, TleRecord,
};
use conjsim::ppl::Distribution;
use conjsim::rng::substream;
use proptest::prelude::*;
use rand::Rng;

const ISS1: &str = "1 25544U 98067A   21316.58314353 -.00007551  00000-0 -13101-3 0  9994";
const ISS2: &str = "2 25544  51.6442 328.9484 0004731 186.1225 318.0089 15.48559922311590";

fn record() -> TleRecord {
    parse_tle(ISS1, ISS2).unwrap()
}

#[test]
fn parses_published_record() {
    let r = record();
    assert_eq!(r.catalog_number, 25544);
    assert_eq!(r.classification, 'U');
    assert_eq!(r.international_designator, "98067A");
    assert_eq!(r.epoch_year, 2021);
    assert!((r.epoch_day - 316.58314353).abs() < 1e-12);
    assert!((r.mean_motion_dot + 0.00007551).abs() < 1e-15);
    assert_eq!(r.mean_motion_ddot, 0.0);
    assert!((r.bstar + 0.13101e-3).abs() < 1e-15);
    assert!((r.inclination - 51.6442).abs() < 1e-12);
    assert!((r.raan - 328.9484).abs() < 1e-12);
    assert!((r.eccentricity - 0.0004731).abs() < 1e-15);
    assert!((r.arg_perigee - 186.1225).abs() < 1e-12);
    assert!((r.mean_anomaly - 318.0089).abs() < 1e-12);
    assert!((r.mean_motion - 15.48559922).abs() < 1e-12);
    assert_eq!(r.revolution_number, 31159);
    assert_eq!(r.element_set_number, 999);
    assert!(r.line1_checksum_ok && r.line2_checksum_ok);
}

#[test]
fn implied_decimal_eccentricity_and_mean_motion_columns() {
    let mut r = record();
    r.eccentricity = 0.0006703;
    r.mean_motion = 15.72125391;
    let (l1, l2) = format_tle(&r).unwrap();
    assert_eq!(&l2[26..33], "0006703");
    assert_eq!(&l2[52..63], "15.72125391");
    assert_eq!(tle_checksum(&l2), l2[68..].parse::<u32>().unwrap());
    let back = parse_tle(&l1, &l2).unwrap();
    assert_eq!(back.eccentricity, 0.0006703);
    assert_eq!(back.mean_motion, 15.72125391);
}

#[test]
fn tampered_checksum_names_the_line() {
    let mut bad = ISS2.to_string();
    bad.replace_range(68..69, "7");
    match parse_tle(ISS1, &bad) {
        Err(TleError::Checksum { line, expected, computed }) => {
            assert_eq!((line, expected, computed), (2, 7, 0));
        }
        other => panic!("{other:?}"),
    }
    let mut bad1 = ISS1.to_string();
    bad1.replace_range(20..21, "2");
    assert!(matches!(parse_tle(&bad1, ISS2), Err(TleError::Checksum { line: 1, .. })));
}

#[test]
fn structural_errors_are_distinct() {
    assert!(matches!(
        parse_tle(&ISS1[..60], ISS2),
        Err(TleError::LineLength { line: 1, length: 60 })
    ));
    assert!(matches!(parse_tle(ISS2, ISS2), Err(TleError::LineNumber { line: 1, .. })));
    let mut garbled = ISS2.to_string();
    garbled.replace_range(8..16, " 51.6x42");
    let garbled = {
        let c = tle_checksum(&garbled);
        format!("{}{c}", &garbled[..68])
    };
    match parse_tle(ISS1, &garbled) {
        Err(TleError::Field { line: 2, first: 9, last: 16, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn epoch_conversion() {
    let r = record();
    let mut later = r.clone();
    later.epoch_day += 1.5;
    let e = later.epoch_relative_to(r.epoch_unix_days());
    assert!((e.seconds() - 1.5 * 86_400.0).abs() < 1e-4);
    // 2021-11-12 is day 316
    assert!((r.epoch_unix_days().floor() - 18_943.0).abs() < 1e-9);
}

#[test]
fn catalog_with_names_strict_and_lenient() {
    let mut bad = ISS2.to_string();
    bad.replace_range(68..69, "3");
    let text = format!("ISS (ZARYA)\n{ISS1}\n{ISS2}\n\n{ISS1}\n{bad}\nOTHER\n{ISS1}\n{ISS2}\n");
    let err = read_catalog(&text, CatalogMode::Strict).unwrap_err();
    assert_eq!(err.line, 6);
    assert!(matches!(err.error, TleError::Checksum { line: 2, .. }));

    let read = read_catalog(&text, CatalogMode::Lenient).unwrap();
    assert_eq!(read.entries.len(), 2);
    assert_eq!(read.skipped.len(), 1);
    assert_eq!(read.entries[0].record.name.as_deref(), Some("ISS (ZARYA)"));
    assert_eq!(read.entries[0].line, 2);
    assert_eq!(read.entries[1].record.name.as_deref(), Some("OTHER"));
    assert_eq!(read.entries[1].line, 8);
}

#[test]
fn catalog_orphan_line_two() {
    let text = format!("{ISS2}\n{ISS1}\n{ISS2}\n");
    let err = read_catalog(&text, CatalogMode::Strict).unwrap_err();
    assert_eq!(err.line, 1);
    let read = read_catalog(&text, CatalogMode::Lenient).unwrap();
    assert_eq!(read.entries.len(), 1);
}

fn synthetic(mm: f64, e: f64, i_deg: f64, bstar: f64) -> TleRecord {
    TleRecord {
        mean_motion: mm,
        eccentricity: e,
        inclination: i_deg,
        bstar,
        ..record()
    }
}

#[test]
fn fit_single_record_is_one_bin() {
    let prior = fit_prior(&[record()], &BinningPolicy::default()).unwrap();
    for d in [&prior.size, &prior.eccentricity, &prior.inclination, &prior.bstar] {
        let Distribution::Histogram { masses, .. } = d else { panic!() };
        assert_eq!(masses.iter().filter(|m| **m > 0.0).count(), 1);
        assert_eq!(masses.iter().cloned().fold(0.0, f64::max), 1.0);
    }
    assert_eq!(prior.raan, Distribution::uniform(0.0, std::f64::consts::TAU));
    assert_eq!(prior.arg_perigee, Distribution::uniform(0.0, std::f64::consts::TAU));
    assert_eq!(prior.mean_anomaly, Distribution::uniform(0.0, std::f64::consts::TAU));
}

#[test]
fn fit_uniform_records_within_multinomial_bounds() {
    let mut rng = substream(77, 0);
    let n = 10_000;
    let recs: Vec<TleRecord> = (0..n)
        .map(|_| {
            synthetic(
                rng.random_range(12.0..16.0),
                rng.random_range(0.0..0.01),
                rng.random_range(20.0..100.0),
                1e-4,
            )
        })
        .collect();
    let policy = BinningPolicy {
        bins: 10,
        ..Default::default()
    };
    let prior = fit_prior(&recs, &policy).unwrap();
    for d in [&prior.size, &prior.eccentricity, &prior.inclination] {
        let Distribution::Histogram { masses, .. } = d else { panic!() };
        assert_eq!(masses.len(), 12);
        assert_eq!(masses[0], 0.0);
        assert_eq!(masses[11], 0.0);
        let p = 0.1;
        let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        for m in &masses[1..11] {
            assert!((m - p).abs() < tol, "{m} vs {p} ± {tol}");
        }
    }
}

#[test]
fn fit_filters_non_leo() {
    let recs = vec![synthetic(2.0, 0.001, 10.0, 1e-4), synthetic(1.0027, 0.0001, 0.1, 0.0)];
    assert!(matches!(
        fit_prior(&recs, &BinningPolicy::default()),
        Err(PopulationError::EmptyCatalog { total: 2 })
    ));
}

#[test]
fn fitted_density_zero_outside_observed_range() {
    let recs: Vec<TleRecord> = (0..50)
        .map(|k| synthetic(13.0 + k as f64 * 0.05, 0.001, 50.0, 1e-4))
        .collect();
    let prior = fit_prior(&recs, &BinningPolicy::default()).unwrap();
    assert!(prior.size.log_density(12.9).is_infinite());
    assert!(prior.size.log_density(15.51).is_infinite());
    assert!(prior.size.log_density(14.0).is_finite());
}

#[test]
fn point_mass_prior_is_deterministic() {
    let el = OrbitalElements::new(7000.0, 0.001, 1.0, 2.0, 3.0, 4.0, Epoch::from_seconds(0.0), 1e-4).unwrap();
    let prior = PopulationPrior::point_mass(&el);
    let mut rng = substream(1, 0);
    for _ in 0..5 {
        assert_eq!(sample_object(&prior, el.epoch, &mut rng).unwrap(), el);
    }
}

#[test]
fn narrow_histogram_prior_returns_bin_center() {
    let mut prior = PopulationPrior::default_leo();
    prior.size = Distribution::Histogram {
        edges: vec![14.0 - 1e-9, 14.0 + 1e-9],
        masses: vec![1.0],
    };
    let mut rng = substream(2, 0);
    let el = sample_object(&prior, Epoch::from_seconds(0.0), &mut rng).unwrap();
    assert!((el.mean_motion_rev_day() - 14.0).abs() < 1e-8);
}

#[test]
fn unsatisfiable_prior_hits_cap() {
    let mut prior = PopulationPrior::default_leo();
    prior.eccentricity = Distribution::uniform(1.0, 2.0);
    let err = sample_object_capped(&prior, Epoch::from_seconds(0.0), &mut substream(3, 0), 25).unwrap_err();
    assert!(matches!(err, PopulationError::RejectionCap { attempts: 25, .. }));
}

#[test]
fn default_prior_inclination_goodness_of_fit() {
    let prior = PopulationPrior::default_leo();
    let mut rng = substream(4, 0);
    let n = 10_000;
    let edges: Vec<f64> = (0..=18).map(|k| (k as f64 * 10.0).to_radians()).collect();
    let mut counts = vec![0usize; 18];
    for _ in 0..n {
        let el = sample_object(&prior, Epoch::from_seconds(0.0), &mut rng).unwrap();
        el.validate().unwrap();
        let b = ((el.inclination.to_degrees() / 10.0).floor() as usize).min(17);
        counts[b] += 1;
    }
    let mut chi2 = 0.0;
    let mut dof = 0;
    for (k, c) in counts.iter().enumerate() {
        let p = prior.inclination.interval_mass(edges[k], edges[k + 1]);
        let expected = p * n as f64;
        let tol = 3.0 * (n as f64 * p * (1.0 - p)).sqrt() + 1.0;
        assert!((*c as f64 - expected).abs() <= tol, "bin {k}: {c} vs {expected}");
        if expected > 5.0 {
            chi2 += (*c as f64 - expected).powi(2) / expected;
            dof += 1;
        }
    }
    // 99.9% quantile of chi-square with up to 10 degrees of freedom is below 30
    assert!(chi2 < 30.0, "chi2 {chi2} with {dof} bins");
}

#[test]
fn equal_seeds_equal_sequences() {
    let prior = PopulationPrior::default_leo();
    let (mut a, mut b) = (substream(9, 3), substream(9, 3));
    for _ in 0..20 {
        assert_eq!(
            sample_object(&prior, Epoch::from_seconds(0.0), &mut a).unwrap(),
            sample_object(&prior, Epoch::from_seconds(0.0), &mut b).unwrap()
        );
    }
}

#[test]
fn prior_toml_round_trip_and_unknown_keys() {
    let prior = PopulationPrior::default_leo();
    let text = prior.to_toml_string();
    assert_eq!(PopulationPrior::from_toml_str(&text).unwrap(), prior);
    let bad = text.replacen("size_element", "size_elemnt", 1);
    assert!(matches!(PopulationPrior::from_toml_str(&bad), Err(PopulationError::Config(_))));
    let extra = format!("colour = 3\n{text}");
    assert!(PopulationPrior::from_toml_str(&extra).is_err());
    let bad_kind = text.replacen("LogUniform", "LogUnifrom", 1);
    assert!(PopulationPrior::from_toml_str(&bad_kind).is_err());
}

#[test]
fn semi_major_axis_prior() {
    let mut prior = PopulationPrior::default_leo();
    prior.size_element = SizeElement::SemiMajorAxis;
    prior.size = Distribution::uniform(6800.0, 7200.0);
    let el = sample_object(&prior, Epoch::from_seconds(0.0), &mut substream(5, 0)).unwrap();
    assert!((6800.0..7200.0).contains(&el.semi_major_axis));
    assert!(prior.log_density(&el).is_finite());
}

fn quantize(x: f64, scale: f64) -> f64 {
    (x * scale).round() / scale
}

prop_compose! {
    fn arb_record()(
        cat in 0u32..100_000,
        year in 1957i32..2057,
        day in 1.0f64..366.99,
        ndot in -0.5f64..0.5,
        nddot_m in 10_000i64..100_000, nddot_e in -9i32..0,
        bstar_m in 10_000i64..100_000, bstar_e in -9i32..1, bstar_neg: bool,
        elset in 0u32..10_000,
        i in 0.0f64..180.0, raan in 0.0f64..359.99, e in 0.0f64..0.999, w in 0.0f64..359.99, m in 0.0f64..359.99,
        mm in 0.5f64..17.0,
        rev in 0u32..100_000,
    ) -> TleRecord {
        let bstar = bstar_m as f64 * 1e-5 * 10f64.powi(bstar_e) * if bstar_neg { -1.0 } else { 1.0 };
        TleRecord {
            name: None,
            catalog_number: cat,
            classification: 'U',
            international_designator: "20001AB".into(),
            epoch_year: year,
            epoch_day: quantize(day, 1e8),
            mean_motion_dot: quantize(ndot, 1e8),
            mean_motion_ddot: nddot_m as f64 * 1e-5 * 10f64.powi(nddot_e),
            bstar,
            ephemeris_type: 0,
            element_set_number: elset,
            inclination: quantize(i, 1e4),
            raan: quantize(raan, 1e4),
            eccentricity: quantize(e, 1e7),
            arg_perigee: quantize(w, 1e4),
            mean_anomaly: quantize(m, 1e4),
            mean_motion: quantize(mm, 1e8),
            revolution_number: rev,
            line1_checksum_ok: true,
            line2_checksum_ok: true,
        }
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn tle_round_trip(r in arb_record()) {
        let (l1, l2) = format_tle(&r).unwrap();
        prop_assert_eq!(l1.len(), 69);
        prop_assert_eq!(l2.len(), 69);
        let back = parse_tle(&l1, &l2).unwrap();
        prop_assert_eq!(back.catalog_number, r.catalog_number);
        prop_assert_eq!(back.epoch_year, r.epoch_year);
        prop_assert_eq!(back.element_set_number, r.element_set_number);
        prop_assert_eq!(back.revolution_number, r.revolution_number);
        prop_assert_eq!(&back.international_designator, &r.international_designator);
        for (a, b) in [
            (back.epoch_day, r.epoch_day),
            (back.mean_motion_dot, r.mean_motion_dot),
            (back.inclination, r.inclination),
            (back.raan, r.raan),
            (back.eccentricity, r.eccentricity),
            (back.arg_perigee, r.arg_perigee),
            (back.mean_anomaly, r.mean_anomaly),
            (back.mean_motion, r.mean_motion),
        ] {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
        prop_assert!(close(back.bstar, r.bstar, 1e-12));
        prop_assert!(close(back.mean_motion_ddot, r.mean_motion_ddot, 1e-12));
        prop_assert_eq!(format_tle(&back).unwrap(), (l1, l2));
    }

    #[test]
    fn sampled_objects_are_valid(seed in any::<u64>()) {
        let prior = PopulationPrior::default_leo();
        let el = sample_object(&prior, Epoch::from_seconds(0.0), &mut substream(seed, 0)).unwrap();
        prop_assert!(el.validate().is_ok());
        prop_assert!(prior.log_density(&el).is_finite());
    }

    #[test]
    fn log_density_finite_iff_in_support(e in -0.01f64..0.05) {
        let prior = PopulationPrior::default_leo();
        let inside = (1e-4..=2e-2).contains(&e);
        prop_assert_eq!(prior.eccentricity.log_density(e).is_finite(), inside);
    }
}
