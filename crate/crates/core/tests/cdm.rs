use conjsim::astro::{rtn_frame, Epoch, OrbitalElements, StateVector};
use conjsim::cdm::{
    cloud_covariance, collision_probability_2d, issue_cdm_estimates, issue_cdm_series, issuing_epochs, observe_state, parse_cdm_csv,
    parse_cdm_jsonl, propagate_cloud, propagate_uncertainty_mc, read_reference_covariances, symmetrize, write_cdm_csv,
    write_cdm_jsonl, CdmError, CdmSeries, IssueParams, SensorModel,
};
use conjsim::conjunction::{construct_crossing, deepest, screen_pair, ConjunctionEvent};
use conjsim::constants::SECONDS_PER_DAY;
use conjsim::population::{sample_object, PopulationPrior};
use conjsim::propagation::{propagate, PropagatorSpec};
use conjsim::rng::substream;
use conjsim_testkit::mc_disc_probability;
use nalgebra::{Matrix2, Matrix6, Vector2, Vector3};
use rand::Rng;

const WEEK: f64 = 7.0 * SECONDS_PER_DAY;

fn window() -> (Epoch, Epoch) {
    (Epoch::ZERO, Epoch::from_seconds(WEEK))
}

fn engineered_event(seed: u64, tca_s: f64) -> ConjunctionEvent {
    let spec = PropagatorSpec::default();
    let mut rng = substream(seed, 0);
    let target = sample_object(&PopulationPrior::default_leo(), Epoch::ZERO, &mut rng).unwrap();
    let off = Vector3::new(rng.random_range(-2.0..2.0), 0.0, rng.random_range(-2.0..2.0));
    let chaser =
        construct_crossing(&target, &spec, Epoch::from_seconds(tca_s), rng.random_range(0.3..2.8), off).unwrap();
    let events = screen_pair(&target, &chaser, window(), &spec, 5.0, 10.0).unwrap();
    *deepest(&events).expect("engineered crossing is a conjunction")
}

fn tiny_sensor() -> SensorModel {
    SensorModel {
        position_sigma_rtn: [1e-15; 3],
        velocity_sigma_rtn: [1e-15; 3],
        update_probability: 1.0,
    }
}

fn leo_state() -> StateVector {
    let el = OrbitalElements::new(6950.0, 0.002, 0.9, 1.0, 2.0, 3.0, Epoch::ZERO, 1e-4).unwrap();
    conjsim::astro::elements_to_state(&el).unwrap()
}

#[test]
fn noise_free_observation_is_truth() {
    let sv = leo_state();
    let obs = observe_state(&sv, &tiny_sensor(), &mut substream(1, 0)).unwrap();
    assert!((obs.position - sv.position).norm() < 1e-9);
    assert!((obs.velocity - sv.velocity).norm() < 1e-9);
}

#[test]
fn observation_noise_moments_in_rtn() {
    let sv = leo_state();
    let sensor = SensorModel::default_chaser();
    let rot = rtn_frame(&sv).unwrap();
    let mut rng = substream(2, 0);
    let n = 10_000;
    let mut sums = [0.0f64; 6];
    let mut sq = [0.0f64; 6];
    for _ in 0..n {
        let o = observe_state(&sv, &sensor, &mut rng).unwrap();
        let dp = rot * (o.position - sv.position);
        let dv = rot * (o.velocity - sv.velocity);
        for k in 0..3 {
            sums[k] += dp[k];
            sq[k] += dp[k] * dp[k];
            sums[k + 3] += dv[k];
            sq[k + 3] += dv[k] * dv[k];
        }
    }
    for (k, s) in sensor.sigmas().iter().enumerate() {
        let mean = sums[k] / n as f64;
        let sd = (sq[k] / n as f64 - mean * mean).sqrt();
        assert!((sd / s - 1.0).abs() < 0.05, "axis {k}: {sd} vs {s}");
        assert!(mean.abs() < 4.0 * s / (n as f64).sqrt());
    }
    let a = observe_state(&sv, &sensor, &mut substream(3, 3)).unwrap();
    let b = observe_state(&sv, &sensor, &mut substream(3, 3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_noise_monte_carlo_is_deterministic_propagation() {
    let sv = leo_state();
    let spec = PropagatorSpec::default();
    let tca = Epoch::from_days(2.0);
    let mc = propagate_uncertainty_mc(&sv, 1e-4, &tiny_sensor(), tca, &spec, 50, 7).unwrap();
    assert!(mc.covariance_rtn.amax() < 1e-18, "{}", mc.covariance_rtn.amax());
    let el = conjsim::astro::state_to_elements_with_bstar(&sv, 1e-4).unwrap();
    let det = propagate(&el, tca, &spec).unwrap();
    assert!((mc.mean_state.position - det.position).norm() < 1e-6);
}

#[test]
fn monte_carlo_rejects_too_few_samples() {
    let r = propagate_uncertainty_mc(&leo_state(), 1e-4, &tiny_sensor(), Epoch::from_days(1.0), &PropagatorSpec::default(), 9, 0);
    assert!(matches!(r, Err(CdmError::InvalidParams(_))));
}

#[test]
fn monte_carlo_independent_of_thread_count() {
    let sv = leo_state();
    let spec = PropagatorSpec::default();
    let sensor = SensorModel::default_chaser();
    let a = propagate_uncertainty_mc(&sv, 1e-4, &sensor, Epoch::from_days(1.0), &spec, 64, 5).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| propagate_uncertainty_mc(&sv, 1e-4, &sensor, Epoch::from_days(1.0), &spec, 64, 5).unwrap());
    assert_eq!(a, b);
}

/// Standard error of each entry of an n-sample covariance estimate, from the
/// fourth moments of a large cloud.
fn covariance_standard_errors(cloud: &[nalgebra::Vector6<f64>], frame: &StateVector, n: usize) -> Matrix6<f64> {
    let rot = conjsim::astro::block_rotation(&rtn_frame(frame).unwrap());
    let m = cloud.len() as f64;
    let mean = cloud.iter().fold(nalgebra::Vector6::zeros(), |a, x| a + x) / m;
    let d: Vec<_> = cloud.iter().map(|x| rot * (x - mean)).collect();
    let mut se = Matrix6::zeros();
    for i in 0..6 {
        for j in 0..6 {
            let c = d.iter().map(|v| v[i] * v[j]).sum::<f64>() / m;
            let c4 = d.iter().map(|v| (v[i] * v[j] - c).powi(2)).sum::<f64>() / m;
            se[(i, j)] = (c4 / n as f64).sqrt();
        }
    }
    se
}

#[test]
fn small_and_large_monte_carlo_agree() {
    let spec = PropagatorSpec::default();
    let sensor = SensorModel::default_chaser();
    let sv = leo_state();
    let tca = Epoch::from_days(2.0);
    let small = propagate_uncertainty_mc(&sv, 1e-4, &sensor, tca, &spec, 100, 11).unwrap();
    let (cloud, _) = propagate_cloud(&sv, 1e-4, &sensor, tca, &spec, 10_000, 12).unwrap();
    let large = cloud_covariance(&cloud, tca).unwrap();
    let se = covariance_standard_errors(&cloud, &large.mean_state, 100);
    for i in 0..6 {
        for j in 0..=i {
            let diff = (small.covariance_rtn[(i, j)] - large.covariance_rtn[(i, j)]).abs();
            assert!(diff <= 3.0 * se[(i, j)], "({i},{j}) diff {diff} se {}", se[(i, j)]);
        }
    }
}

#[test]
fn along_track_variance_grows_over_three_days() {
    let spec = PropagatorSpec::default();
    let prior = PopulationPrior::default_leo();
    let mut rng = substream(13, 0);
    for k in 0..50 {
        let el = sample_object(&prior, Epoch::ZERO, &mut rng).unwrap();
        let sv = conjsim::astro::elements_to_state(&el).unwrap();
        let sensor = if k % 2 == 0 { SensorModel::default_target() } else { SensorModel::default_chaser() };
        let mc = propagate_uncertainty_mc(&sv, el.bstar, &sensor, Epoch::from_days(3.0), &spec, 200, k).unwrap();
        let at_obs = sensor.position_sigma_rtn[1].powi(2);
        assert!(mc.covariance_rtn[(1, 1)] >= at_obs, "scenario {k}: {} < {at_obs}", mc.covariance_rtn[(1, 1)]);
    }
}

#[test]
fn unjittered_week_gives_21_epochs() {
    let params = IssueParams {
        jitter_s: 0.0,
        ..Default::default()
    };
    let tca = Epoch::from_seconds(WEEK);
    let e = issuing_epochs(tca, &params, (Epoch::from_seconds(-1.0), tca), &mut substream(0, 0));
    assert_eq!(e.len(), 21);
    assert_eq!(e[0], Epoch::ZERO);
    assert_eq!(e[20], tca - 8.0 * 3600.0);
}

#[test]
fn epochs_respect_window_and_fallback() {
    let params = IssueParams::default();
    let tca = Epoch::from_seconds(3.0 * 3600.0);
    let e = issuing_epochs(tca, &params, window(), &mut substream(0, 1));
    assert!(!e.is_empty());
    assert!(e.iter().all(|t| *t >= Epoch::ZERO && *t < tca));
    let none = issuing_epochs(Epoch::ZERO, &params, window(), &mut substream(0, 1));
    assert!(none.is_empty());
}

fn check_series(series: &CdmSeries) {
    series.check_ordering().unwrap();
    for r in &series.records {
        for mut c in [r.target.covariance_rtn, r.chaser.covariance_rtn] {
            assert!(symmetrize(&mut c) >= -1e-12);
        }
        assert!(r.miss_distance_estimate >= 0.0);
        let pc = r.collision_probability.unwrap();
        assert!((0.0..=1.0).contains(&pc));
        assert!(r.tca_estimate >= Epoch::ZERO && r.tca_estimate <= Epoch::from_seconds(WEEK + 1800.0));
    }
}

#[test]
fn series_are_ordered_and_psd() {
    let spec = PropagatorSpec::default();
    for seed in 0..4 {
        let ev = engineered_event(seed, 2.0 * SECONDS_PER_DAY + 1000.0 * seed as f64);
        let params = IssueParams {
            n_mc: 50,
            ..Default::default()
        };
        let s = issue_cdm_series(
            &ev,
            "ev",
            &SensorModel::default_target(),
            &SensorModel::default_chaser(),
            &params,
            &spec,
            window(),
            &mut substream(seed, 9),
        )
        .unwrap();
        assert!(!s.records.is_empty() && s.records.len() <= 21);
        assert!(s.records[0].target.freshly_observed() && s.records[0].chaser.freshly_observed());
        check_series(&s);
    }
}

#[test]
fn noise_free_series_reproduces_truth() {
    let spec = PropagatorSpec::default();
    let ev = engineered_event(21, 3.5 * SECONDS_PER_DAY);
    let params = IssueParams {
        n_mc: 20,
        ..Default::default()
    };
    let s = issue_cdm_series(&ev, "ev", &tiny_sensor(), &tiny_sensor(), &params, &spec, window(), &mut substream(5, 0))
        .unwrap();
    for r in &s.records {
        assert!((r.tca_estimate - ev.tca).abs() < 1e-3, "{} vs {}", r.tca_estimate, ev.tca);
        assert!((r.miss_distance_estimate - ev.miss_distance).abs() < 1e-3);
    }
}

fn position_trace(c: &Matrix6<f64>) -> f64 {
    (0..3).map(|k| c[(k, k)]).sum()
}

#[test]
fn stale_chaser_covariance_never_shrinks() {
    let spec = PropagatorSpec::default();
    let mut chaser = SensorModel::default_chaser();
    chaser.update_probability = 0.0;
    let mut always = chaser;
    always.update_probability = 1.0;
    for seed in 0..20u64 {
        let ev = engineered_event(100 + seed, 4.0 * SECONDS_PER_DAY + 100.0 * seed as f64);
        let params = IssueParams {
            n_mc: 30,
            hard_body_radius_km: None,
            ..Default::default()
        };
        let s = issue_cdm_series(&ev, "ev", &SensorModel::default_target(), &chaser, &params, &spec, window(), &mut substream(seed, 1))
            .unwrap();
        // The stale cloud is re-propagated to each record's TCA estimate, which
        // moves by seconds as the target is re-observed.
        let traces: Vec<f64> = s.records.iter().map(|r| position_trace(&r.chaser.covariance_rtn)).collect();
        for w in traces.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-3), "seed {seed}: {traces:?}");
        }
        let fresh = issue_cdm_series(&ev, "ev", &SensorModel::default_target(), &always, &params, &spec, window(), &mut substream(seed, 1))
            .unwrap();
        let last_fresh = position_trace(&fresh.records.last().unwrap().chaser.covariance_rtn);
        assert!(*traces.last().unwrap() > last_fresh);
        assert!(s.records.iter().skip(1).all(|r| !r.chaser.freshly_observed()));
    }
}

#[test]
fn rejects_event_outside_window() {
    let ev = engineered_event(3, SECONDS_PER_DAY);
    let r = issue_cdm_series(
        &ev,
        "x",
        &SensorModel::default_target(),
        &SensorModel::default_chaser(),
        &IssueParams::default(),
        &PropagatorSpec::default(),
        (Epoch::from_days(2.0), Epoch::from_days(3.0)),
        &mut substream(0, 0),
    );
    assert!(matches!(r, Err(CdmError::InvalidParams(_))));
}

fn cov_pos(c: [[f64; 3]; 3]) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = c[i][j];
        }
    }
    m
}

#[test]
fn centered_isotropic_closed_form() {
    let v = Vector3::new(0.0, 0.0, 14.0);
    for (sigma, r) in [(0.1, 0.01), (0.05, 0.02), (1.0, 0.5), (0.01, 0.03)] {
        let c = cov_pos([[sigma * sigma, 0.0, 0.0], [0.0, sigma * sigma, 0.0], [0.0, 0.0, 7.0]]);
        let p = collision_probability_2d(&Vector3::zeros(), &v, &c, r).unwrap();
        let exact = -(-r * r / (2.0 * sigma * sigma)).exp_m1();
        assert!((p.probability - exact).abs() < 1e-9, "{} vs {exact}", p.probability);
        assert!(!p.regularized);
    }
    let c = cov_pos([[0.01, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.01]]);
    assert_eq!(collision_probability_2d(&Vector3::zeros(), &v, &c, 0.0).unwrap().probability, 0.0);
}

#[test]
fn anisotropic_matches_monte_carlo() {
    // encounter plane is x-y with velocity along z
    let c = cov_pos([[1.0, 0.0, 0.0], [0.0, 0.04, 0.0], [0.0, 0.0, 1.0]]);
    let p = collision_probability_2d(&Vector3::new(0.5, 0.1, 0.0), &Vector3::new(0.0, 0.0, 10.0), &c, 0.05)
        .unwrap()
        .probability;
    let (mc, se) = mc_disc_probability(
        Vector2::new(0.5, 0.1),
        Matrix2::new(1.0, 0.0, 0.0, 0.04),
        0.05,
        10_000_000,
        &mut substream(99, 0),
    );
    assert!((p - mc).abs() <= 3.0 * se, "{p} vs {mc} ± {se}");
}

#[test]
fn probability_monotone_on_grids() {
    let c = cov_pos([[0.3, 0.05, 0.0], [0.05, 0.1, 0.02], [0.0, 0.02, 0.5]]);
    let v = Vector3::new(1.0, -2.0, 12.0);
    let dir = Vector3::new(0.3, -0.7, 0.2);
    let mut prev = 0.0;
    for k in 0..=40 {
        let r = 0.005 * k as f64;
        let p = collision_probability_2d(&(dir * 0.5), &v, &c, r).unwrap().probability;
        assert!(p >= prev - 1e-15, "radius {r}");
        prev = p;
    }
    let mut prev = 1.0;
    for k in 0..=40 {
        let p = collision_probability_2d(&(dir * (0.1 * k as f64)), &v, &c, 0.05).unwrap().probability;
        assert!(p <= prev + 1e-15, "scale {k}");
        prev = p;
    }
}

#[test]
fn singular_projection_is_regularized() {
    let c = cov_pos([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    let p = collision_probability_2d(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 3.0), &c, 0.01).unwrap();
    assert!(p.regularized);
    assert!((p.probability - 1.0).abs() < 1e-9);
    assert!(collision_probability_2d(&Vector3::zeros(), &Vector3::zeros(), &c, 0.01).is_err());
}

fn sample_series() -> CdmSeries {
    let ev = engineered_event(42, 5.0 * SECONDS_PER_DAY);
    let params = IssueParams {
        n_mc: 20,
        ..Default::default()
    };
    issue_cdm_series(
        &ev,
        "evt-42",
        &SensorModel::default_target(),
        &SensorModel::default_chaser(),
        &params,
        &PropagatorSpec::default(),
        window(),
        &mut substream(42, 1),
    )
    .unwrap()
}

#[test]
fn jsonl_round_trip_is_lossless() {
    let s = sample_series();
    let mut buf = Vec::new();
    write_cdm_jsonl(&s, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("{\"FORMAT\":\"conjsim-cdm\",\"VERSION\":1}\n"));
    assert!(text.lines().nth(1).unwrap().starts_with("{\"EVENT_ID\":\"evt-42\",\"CREATION_EPOCH_S\":"));
    let back = parse_cdm_jsonl(&text).unwrap();
    assert!(back.ground_truth.is_none());
    assert_eq!(back.event_id, s.event_id);
    assert_eq!(back.records, s.records);

    let mut again = Vec::new();
    write_cdm_jsonl(&back, &mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);
}

#[test]
fn csv_round_trip_is_lossless() {
    let s = sample_series();
    let mut buf = Vec::new();
    write_cdm_csv(&s, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let back = parse_cdm_csv(&text).unwrap();
    assert_eq!(back.records, s.records);
    let refs = read_reference_covariances(&text).unwrap();
    assert_eq!(refs.target.len(), s.records.len());
    assert_eq!(refs.chaser[0], s.records[0].chaser.covariance_rtn);
}

#[test]
fn version_mismatch_rejected() {
    let s = sample_series();
    let mut buf = Vec::new();
    write_cdm_jsonl(&s, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap().replacen("\"VERSION\":1", "\"VERSION\":2", 1);
    assert!(matches!(parse_cdm_jsonl(&text), Err(CdmError::Version { .. })));
    let mut buf = Vec::new();
    write_cdm_csv(&s, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap().replacen("version=1", "version=9", 1);
    assert!(matches!(parse_cdm_csv(&text), Err(CdmError::Version { .. })));
}

#[test]
fn malformed_lines_name_their_line() {
    let s = sample_series();
    let mut buf = Vec::new();
    write_cdm_jsonl(&s, &mut buf).unwrap();
    let mut lines: Vec<String> = String::from_utf8(buf).unwrap().lines().map(String::from).collect();
    lines[2] = lines[2].replacen("\"TCA_S\":", "\"TCA_X\":", 1);
    match parse_cdm_jsonl(&lines.join("\n")) {
        Err(CdmError::Parse { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("TCA_S"));
        }
        other => panic!("{other:?}"),
    }

    let mut buf = Vec::new();
    write_cdm_csv(&s, &mut buf).unwrap();
    let mut rows: Vec<String> = String::from_utf8(buf).unwrap().lines().map(String::from).collect();
    let fields: Vec<&str> = rows[3].split(',').collect();
    let cov = fields.len() - 10;
    rows[3] = [&fields[..cov], &["oops"], &fields[cov + 1..]].concat().join(",");
    match read_reference_covariances(&rows.join("\n")) {
        Err(CdmError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn estimates_match_full_series_prefix() {
    let spec = PropagatorSpec::default();
    let ev = engineered_event(55, 5.0 * SECONDS_PER_DAY);
    let params = IssueParams {
        n_mc: 20,
        ..Default::default()
    };
    let (ts, cs) = (SensorModel::default_target(), SensorModel::default_chaser());
    let full = issue_cdm_series(&ev, "e", &ts, &cs, &params, &spec, window(), &mut substream(3, 3)).unwrap();
    let est = issue_cdm_estimates(&ev, &ts, &cs, &params, &spec, window(), 4, &mut substream(3, 3)).unwrap();
    assert_eq!(est.len(), 4.min(full.records.len()));
    for (e, r) in est.iter().zip(&full.records) {
        assert_eq!(e.creation_epoch, r.creation_epoch);
        assert_eq!(e.tca_estimate, r.tca_estimate);
        assert_eq!(e.miss_distance_estimate, r.miss_distance_estimate);
        assert_eq!(e.chaser_state, r.chaser.state_at_tca);
    }
}
